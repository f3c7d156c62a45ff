"""Matern Gaussian random field for the uncertain porosity perturbation.

The precision structure comes from the elliptic operator
A = gamma div(Theta grad .) + delta id with the Robin boundary weight
sqrt(delta*gamma)/1.42 on the whole boundary.  The discrete covariance is
C_h = A^-1 M A^-1, sampled through an element-level mass factor G with
G G^T = M exactly, so sample covariance matches apply_covariance up to
Monte Carlo noise; identical seeds give identical fields.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import fem
from .mesh import BoundaryTag

ROBIN_FACTOR = 1.42  # boundary-artifact reduction constant of the SPDE model


@dataclass(eq=False)
class MaternPrior:
    mesh: object
    gamma: float
    delta: float
    theta: np.ndarray
    mean_field: np.ndarray
    operator_A: object
    mass_M: object
    _A_lu: object = field(default=None, repr=False)
    _M_lu: object = field(default=None, repr=False)
    _mass_factor: object = field(default=None, repr=False)

    @property
    def dim(self):
        return self.mesh.num_vertices


def build_prior(mesh, gamma, delta, theta=None, mean=None):
    """Assemble the SPDE operator A and covariance machinery."""
    if gamma <= 0.0 or delta <= 0.0:
        raise ValueError(f"gamma and delta must be positive, got {gamma}, {delta}")
    theta = np.eye(2) if theta is None else np.asarray(theta, dtype=np.float64)
    if theta.shape != (2, 2) or not np.allclose(theta, theta.T):
        raise ValueError("anisotropy tensor must be symmetric 2x2")
    if np.linalg.eigvalsh(theta).min() <= 0.0:
        raise ValueError("anisotropy tensor must be positive-definite")
    nv = mesh.num_vertices
    mean_field = np.zeros(nv) if mean is None else np.asarray(mean, dtype=np.float64)
    if mean_field.shape != (nv,):
        raise ValueError("mean field length must equal vertex count")

    ones = np.ones(nv)
    K = fem.assemble_weighted_stiffness(mesh, gamma * ones, aniso=theta)
    M = fem.assemble_mass(mesh)
    robin_coeff = np.sqrt(delta * gamma) / ROBIN_FACTOR
    B = None
    for tag in (BoundaryTag.OUTER, BoundaryTag.INNER):
        Bt, _ = fem.assemble_robin(mesh, tag, ones, robin_coeff, 0.0)
        B = Bt if B is None else B + Bt
    A = (K + delta * M + B).tocsr()
    prior = MaternPrior(mesh, float(gamma), float(delta), theta, mean_field, A, M)
    prior._A_lu = fem.CachedFactorization(A)
    prior._M_lu = fem.CachedFactorization(M.tocsr())
    prior._mass_factor = _mass_square_root(mesh)
    return prior


def _mass_square_root(mesh):
    """Sparse G (nv x 3 nt) with G G^T = M from per-element Cholesky factors."""
    tri = mesh.triangles
    nt = tri.shape[0]
    local = np.linalg.cholesky(np.ones((3, 3)) + np.eye(3)) / np.sqrt(12.0)
    scale = np.sqrt(mesh.triangle_areas)
    data = (scale[:, None, None] * local[None, :, :]).ravel()
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.broadcast_to(
        (3 * np.arange(nt)[:, None] + np.arange(3))[:, None, :], (nt, 3, 3)
    ).ravel()
    return sp.coo_matrix(
        (data, (rows, cols)), shape=(mesh.num_vertices, 3 * nt)
    ).tocsr()


def apply_covariance(prior, v):
    """C v = A^-1 M A^-1 v (two factored solves bridged by the mass matrix)."""
    v = np.asarray(v, dtype=np.float64)
    w = prior._A_lu.solve(v)
    return prior._A_lu.solve(prior.mass_M @ w)


def apply_precision(prior, v):
    """C^-1 v = A M^-1 A v."""
    v = np.asarray(v, dtype=np.float64)
    w = prior.operator_A @ v
    return prior.operator_A @ prior._M_lu.solve(w)


def sample(prior, seed):
    """Draw mean + A^-1 (G xi), xi standard normal, deterministic in seed."""
    rng = np.random.default_rng(seed)
    xi = rng.standard_normal(prior._mass_factor.shape[1])
    return prior.mean_field + prior._A_lu.solve(prior._mass_factor @ xi)


def pointwise_variance(prior):
    """diag(C) by applying the covariance to unit vectors (coarse meshes only)."""
    out = np.empty(prior.dim)
    e = np.zeros(prior.dim)
    for k in range(prior.dim):
        e[k] = 1.0
        out[k] = apply_covariance(prior, e)[k]
        e[k] = 0.0
    return out
