"""Risk measures of the design objective under the random porosity field.

The mean and variance of Q are approximated by a second-order Taylor
expansion around the prior mean; the curvature information enters through
the dominant eigenvalues of the covariance-preconditioned Hessian, computed
with a double-pass randomized generalized eigensolver.  A seeded Monte
Carlo estimator provides the reference values.
"""

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import prior as prior_mod
from .exceptions import PorosityRangeError, SolverError
from .forward import eval_Q
from .sensitivities import AdjointWorkspace


@dataclass
class RiskWeights:
    beta_V: float = 0.0  # variance weight
    beta_R: float = 0.0  # regularization weight
    beta_M: float = 1.0  # mechanical QoI weight (forwarded to the model)

    def __post_init__(self):
        if self.beta_V < 0.0 or self.beta_R < 0.0:
            raise ValueError("beta_V and beta_R must be nonnegative")


@dataclass(eq=False)
class RiskEvaluation:
    """Everything computed at one design: states, curvature, Taylor terms."""

    Q_bar: float
    grad_bar: np.ndarray
    eigenvalues: np.ndarray  # sorted by |lambda| descending
    eigenvectors: np.ndarray  # columns, C^-1-orthonormal
    E_quad: float
    V_quad: float
    J_total: float
    N: int
    oversampling: int
    design: np.ndarray
    ctx: object = field(repr=False, default=None)
    prior: object = field(repr=False, default=None)


def eigensolve_hc(apply_H, apply_C, apply_Cinv, dim, rank,
                  oversampling=10, seed=0, power_iters=0):
    """Double-pass randomized solve of H psi = lambda C^-1 psi.

    Draws rank+oversampling Gaussian probes, forms the sample range of
    (C H), C^-1-orthonormalizes it, and solves the projected symmetric
    eigenproblem.  Returns the top ``rank`` pairs sorted by |lambda|
    descending, eigenvectors as C^-1-orthonormal columns.  Deterministic
    for a fixed seed.
    """
    if rank < 1:
        raise ValueError(f"rank must be >= 1, got {rank}")
    if rank > dim:
        raise ValueError(f"rank {rank} exceeds problem size {dim}")
    if oversampling < 0:
        raise ValueError("oversampling must be nonnegative")
    n_probe = min(rank + oversampling, dim)
    rng = np.random.default_rng(seed)
    omega = rng.standard_normal((dim, n_probe))

    def apply_CH_block(block):
        out = np.empty_like(block)
        for j in range(block.shape[1]):
            out[:, j] = apply_C(apply_H(block[:, j]))
        return out

    Y = apply_CH_block(omega)
    for _ in range(power_iters):
        Y = apply_CH_block(Y)

    # C^-1-orthonormalize the range (CholQR against the C^-1 inner product,
    # applied twice for numerical orthogonality)
    Q = np.linalg.qr(Y)[0]
    for _ in range(2):
        W = np.column_stack([apply_Cinv(Q[:, j]) for j in range(Q.shape[1])])
        gram = Q.T @ W
        R = np.linalg.cholesky((gram + gram.T) / 2.0)
        Q = np.linalg.solve(R, Q.T).T

    HQ = np.column_stack([apply_H(Q[:, j]) for j in range(Q.shape[1])])
    T = Q.T @ HQ
    theta, V = np.linalg.eigh((T + T.T) / 2.0)
    order = np.argsort(-np.abs(theta))[:rank]
    eigenvalues = theta[order]
    eigenvectors = Q @ V[:, order]
    return eigenvalues, eigenvectors


def taylor_mean(risk_eval):
    """E[Q] estimate: Q at the mean plus half the retained eigenvalue sum."""
    return float(risk_eval.Q_bar + 0.5 * np.sum(risk_eval.eigenvalues))


def taylor_variance(risk_eval, prior):
    """V[Q] estimate: gradient covariance pairing plus half the squared sum."""
    g = risk_eval.grad_bar
    value = float(
        g @ prior_mod.apply_covariance(prior, g)
        + 0.5 * np.sum(np.asarray(risk_eval.eigenvalues) ** 2)
    )
    if value < 0.0:
        warnings.warn(
            "Taylor variance estimate is negative (indefinite curvature "
            "dominates)",
            RuntimeWarning,
        )
    return value


def evaluate_risk(d, ctx, prior, rank, weights=None, oversampling=10,
                  seed=0, power_iters=0, reg_config=None):
    """Full risk pipeline at one design; returns a RiskEvaluation."""
    weights = weights or RiskWeights()
    d = np.asarray(d, dtype=np.float64)
    ws = AdjointWorkspace(ctx, d, prior.mean_field)
    Q_bar = ws.qoi()
    grad_bar = ws.grad_m()
    if rank > 0:
        eigenvalues, eigenvectors = eigensolve_hc(
            ws.hess_m_action,
            lambda v: prior_mod.apply_covariance(prior, v),
            lambda v: prior_mod.apply_precision(prior, v),
            prior.dim,
            rank,
            oversampling=oversampling,
            seed=seed,
            power_iters=power_iters,
        )
    else:
        eigenvalues = np.empty(0)
        eigenvectors = np.empty((prior.dim, 0))
    ev = RiskEvaluation(
        Q_bar=float(Q_bar),
        grad_bar=grad_bar,
        eigenvalues=eigenvalues,
        eigenvectors=eigenvectors,
        E_quad=0.0,
        V_quad=0.0,
        J_total=0.0,
        N=int(rank),
        oversampling=int(oversampling),
        design=d.copy(),
        ctx=ctx,
        prior=prior,
    )
    ev.E_quad = taylor_mean(ev)
    ev.V_quad = taylor_variance(ev, prior)
    J = ev.E_quad + weights.beta_V * ev.V_quad
    if reg_config is not None and weights.beta_R != 0.0:
        from .regularization import eval_R

        value, _ = eval_R(d, reg_config, ctx.mesh)
        J += weights.beta_R * value
    ev.J_total = float(J)
    return ev


def objective_J(d, weights, ctx, prior, rank, oversampling=10, seed=0,
                reg_config=None):
    """Objective J = E_quad + beta_V V_quad + beta_R R and its evaluation."""
    ev = evaluate_risk(
        d, ctx, prior, rank, weights=weights, oversampling=oversampling,
        seed=seed, reg_config=reg_config,
    )
    return ev.J_total, ev


@dataclass
class MCResult:
    mean: float
    variance: float
    std_error: float
    n_samples: int
    n_failed: int


MC_FAILURE_FRACTION = 1e-3  # abort when more than 0.1% of samples fail


def mc_estimate(d, n_samples, seed, ctx, prior, workers=1, qoi=None):
    """Seeded Monte Carlo estimate of mean/variance of Q over the prior.

    Per-sample seeds are spawned deterministically from the root seed, so
    the result is independent of the worker count; samples whose porosity
    leaves the admissible range are counted as failures.
    """
    if n_samples < 2:
        raise ValueError(f"need at least 2 samples, got {n_samples}")
    d = np.asarray(d, dtype=np.float64)
    qoi = qoi or eval_Q
    root = (
        seed
        if isinstance(seed, np.random.SeedSequence)
        else np.random.SeedSequence(seed)
    )
    children = root.spawn(n_samples)

    def one(child):
        m = prior_mod.sample(prior, child)
        try:
            return qoi(d, m, ctx)
        except PorosityRangeError:
            return None

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(one, children))
    else:
        values = [one(child) for child in children]

    ok = np.array([v for v in values if v is not None], dtype=np.float64)
    n_failed = n_samples - ok.size
    if n_failed > MC_FAILURE_FRACTION * n_samples:
        raise SolverError(
            f"{n_failed} of {n_samples} Monte Carlo samples fell outside "
            "the admissible porosity range"
        )
    mean = float(ok.mean())
    variance = float(ok.var(ddof=1))
    std_error = float(np.sqrt(variance / ok.size))
    return MCResult(mean, variance, std_error, n_samples, int(n_failed))
