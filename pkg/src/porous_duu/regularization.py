"""Design regularization: Tikhonov smoothing and an approximated l0 count.

The l0 term integrates a piecewise function f that ramps linearly from 0,
blends through a C^1 cubic, and saturates at 1, so shrinking its width
eps0 sharpens it toward the indicator of {d > 0}.  A continuation driver
solves a sequence of optimizations with eps0 halved at each stage.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from . import fem
from .exceptions import ContinuationError


@dataclass
class RegConfig:
    beta_tik: float = 1.0
    beta_l0: float = 0.0
    eps0: float = 0.5
    K_cont: int = 0

    def __post_init__(self):
        if self.beta_tik < 0.0 or self.beta_l0 < 0.0:
            raise ValueError("regularization weights must be nonnegative")
        if not 0.0 < self.eps0 <= 0.5:
            raise ValueError(
                f"eps0 must lie in (0, 0.5] so the saturated branch exists, "
                f"got {self.eps0}"
            )
        if self.K_cont < 0:
            raise ValueError("continuation stage count must be nonnegative")


def p3_coefficients(eps0):
    """Coefficients (a0, a1, a2, a3) of the unique C^1 blending cubic.

    The cubic matches the linear ramp at eps0/2 (value 1/2, slope 1/eps0)
    and the saturated branch at 2*eps0 (value 1, slope 0).
    """
    if not 0.0 < eps0 <= 0.5:
        raise ValueError(f"eps0 must lie in (0, 0.5], got {eps0}")
    x1, x2 = eps0 / 2.0, 2.0 * eps0
    A = np.array(
        [
            [1.0, x1, x1**2, x1**3],
            [0.0, 1.0, 2.0 * x1, 3.0 * x1**2],
            [1.0, x2, x2**2, x2**3],
            [0.0, 1.0, 2.0 * x2, 3.0 * x2**2],
        ]
    )
    rhs = np.array([0.5, 1.0 / eps0, 1.0, 0.0])
    coeffs = np.linalg.solve(A, rhs)
    # the blend is only required to be C^1; flag (but allow) non-monotone fits
    xs = np.linspace(x1, x2, 101)
    slope = coeffs[1] + 2.0 * coeffs[2] * xs + 3.0 * coeffs[3] * xs**2
    if slope.min() < -1e-12:
        warnings.warn(
            f"blending cubic is non-monotone for eps0={eps0}", RuntimeWarning
        )
    return coeffs


def _branches(d, eps0):
    d = np.asarray(d, dtype=np.float64)
    if np.any(d < 0.0) or np.any(d > 1.0):
        raise ValueError("design values must lie in [0, 1]")
    return d, eps0 / 2.0, 2.0 * eps0


def f_eps0(d, eps0):
    """Approximated l0 integrand: linear ramp, cubic blend, saturation."""
    d, x1, x2 = _branches(d, eps0)
    a0, a1, a2, a3 = p3_coefficients(eps0)
    cubic = a0 + a1 * d + a2 * d**2 + a3 * d**3
    out = np.where(d <= x1, d / eps0, np.where(d < x2, cubic, 1.0))
    return out if out.ndim else float(out)


def f_eps0_prime(d, eps0):
    """Derivative of f_eps0 (one-sided values at the branch points)."""
    d, x1, x2 = _branches(d, eps0)
    _, a1, a2, a3 = p3_coefficients(eps0)
    slope = a1 + 2.0 * a2 * d + 3.0 * a3 * d**2
    out = np.where(d <= x1, 1.0 / eps0, np.where(d < x2, slope, 0.0))
    return out if out.ndim else float(out)


def eval_R(d, cfg, mesh):
    """Regularization value and gradient on the nodal design field.

    Tikhonov term: d^T K d with the unit-coefficient stiffness K; l0 term:
    nodal f composed with the design, integrated with the mass matrix.
    """
    d = np.asarray(d, dtype=np.float64)
    value = 0.0
    grad = np.zeros(mesh.num_vertices)
    if cfg.beta_tik != 0.0:
        K = fem.assemble_weighted_stiffness(mesh, np.ones(mesh.num_vertices))
        Kd = K @ d
        value += cfg.beta_tik * float(d @ Kd)
        grad += 2.0 * cfg.beta_tik * Kd
    if cfg.beta_l0 != 0.0:
        M = fem.assemble_mass(mesh)
        m_row = np.asarray(M.sum(axis=1)).ravel()  # integrals of basis fns
        value += cfg.beta_l0 * float(m_row @ f_eps0(d, cfg.eps0))
        grad += cfg.beta_l0 * m_row * f_eps0_prime(d, cfg.eps0)
    return value, grad


def sparsity_metric(d):
    """Fraction of nodes away from both bounds (not yet 0/1-valued)."""
    d = np.asarray(d)
    return float(np.mean((d > 0.05) & (d < 0.95)))


@dataclass
class StageRecord:
    stage: int
    eps0: float  # nan for the Tikhonov warm-up stage
    J: float
    sparsity: float
    iterations: int


@dataclass
class ContinuationResult:
    design: np.ndarray
    stages: list


def continuation_schedule(K_cont):
    """eps0 sequence (1/2)^i for stages i = 1..K_cont."""
    return [0.5**i for i in range(1, K_cont + 1)]


def continuation_run(d_init, K_cont, optimize_fn):
    """Tikhonov warm-up followed by l0 stages with halved widths.

    ``optimize_fn(d_start, reg_cfg)`` must return (d_opt, J, iterations,
    converged).  A non-converged stage aborts with the history so far.
    """
    if K_cont < 1:
        raise ValueError("continuation needs at least one l0 stage")
    history = []
    d = np.asarray(d_init, dtype=np.float64)
    stage_cfgs = [(0, RegConfig(beta_tik=1.0, beta_l0=0.0))]
    for i, eps0 in enumerate(continuation_schedule(K_cont), start=1):
        stage_cfgs.append((i, RegConfig(beta_tik=0.0, beta_l0=1.0, eps0=eps0)))
    for stage, cfg in stage_cfgs:
        d, J, iters, converged = optimize_fn(d, cfg)
        record = StageRecord(
            stage=stage,
            eps0=cfg.eps0 if cfg.beta_l0 != 0.0 else float("nan"),
            J=float(J),
            sparsity=sparsity_metric(d),
            iterations=int(iters),
        )
        history.append(record)
        if not converged:
            raise ContinuationError(
                f"continuation stage {stage} did not converge", history=history
            )
    return ContinuationResult(design=d, stages=history)
