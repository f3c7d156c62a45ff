"""P1 finite-element assembly and sparse solve primitives.

Scalar fields (temperatures, porosity, design) and each displacement
component are piecewise linear on the triangulation.  Interior terms use
one-point (centroid) quadrature for the coefficient, which is exact for
P1-gradient products with the coefficient frozen at the centroid; boundary
terms are integrated exactly on edges.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exceptions import CoefficientRangeError, SolverError

SOLVE_RTOL = 1e-10  # relative residual required from every linear solve


@dataclass(eq=False)
class P1Geometry:
    """Per-element geometry shared by all assembly routines."""

    mesh: object

    @cached_property
    def areas(self):
        return self.mesh.triangle_areas

    @cached_property
    def grads(self):
        """(nt, 3, 2) constant gradients of the three hat functions."""
        tri = self.mesh.triangles
        p = self.mesh.vertices[tri]
        g = np.empty((tri.shape[0], 3, 2))
        a2 = 2.0 * self.areas[:, None]
        # grad of hat_i is perpendicular to the opposite edge.
        for i in range(3):
            j, k = (i + 1) % 3, (i + 2) % 3
            edge = p[:, k] - p[:, j]
            g[:, i, 0] = -edge[:, 1]
            g[:, i, 1] = edge[:, 0]
        g /= a2[:, :, None]
        return g

    @cached_property
    def centroids(self):
        return self.mesh.vertices[self.mesh.triangles].mean(axis=1)


_GEOM_ATTR = "_p1_geometry_cache"


def geometry(mesh):
    geom = getattr(mesh, _GEOM_ATTR, None)
    if geom is None:
        geom = P1Geometry(mesh)
        object.__setattr__(mesh, _GEOM_ATTR, geom)
    return geom


def _scatter(mesh, rows, cols, data):
    nv = mesh.num_vertices
    mat = sp.coo_matrix(
        (data.ravel(), (rows.ravel(), cols.ravel())), shape=(nv, nv)
    )
    return mat.tocsr()


def _pair_indices(tri):
    rows = np.repeat(tri, 3, axis=1)
    cols = np.tile(tri, (1, 3))
    return rows, cols


def assemble_mass(mesh):
    """Consistent P1 mass matrix (exact per-element formula)."""
    geom = geometry(mesh)
    tri = mesh.triangles
    local = (np.ones((3, 3)) + np.eye(3)) / 12.0
    data = geom.areas[:, None, None] * local[None, :, :]
    rows, cols = _pair_indices(tri)
    return _scatter(mesh, rows, cols, data)


def lumped_mass_diagonal(mesh):
    """Row sums of the mass matrix (all positive)."""
    return np.asarray(assemble_mass(mesh).sum(axis=1)).ravel()


def assemble_weighted_stiffness(mesh, coeff, aniso=None, check_positive=True):
    """K_ij = int c(x) (Theta grad phi_j) . grad phi_i, c at the centroid.

    coeff is a nodal field; aniso an optional 2x2 SPD tensor (default I).
    """
    coeff = np.asarray(coeff, dtype=np.float64)
    if coeff.shape != (mesh.num_vertices,):
        raise ValueError("coefficient field length must equal vertex count")
    if check_positive and np.any(coeff <= 0.0):
        worst = int(np.argmin(coeff))
        raise CoefficientRangeError(
            f"stiffness coefficient must be positive; node {worst} "
            f"has value {coeff[worst]:.6g}"
        )
    geom = geometry(mesh)
    tri = mesh.triangles
    c_mid = coeff[tri].mean(axis=1)
    grads = geom.grads
    if aniso is None:
        tg = grads
    else:
        theta = np.asarray(aniso, dtype=np.float64)
        tg = np.einsum("ab,tib->tia", theta, grads)
    local = np.einsum("tia,tja->tij", grads, tg)
    data = (c_mid * geom.areas)[:, None, None] * local
    rows, cols = _pair_indices(tri)
    return _scatter(mesh, rows, cols, data)


def stiffness_coeff_sensitivity(mesh, a, b, aniso=None):
    """s_k = a^T (dK/dc_k) b for the centroid-evaluated nodal coefficient."""
    geom = geometry(mesh)
    tri = mesh.triangles
    grads = geom.grads
    if aniso is None:
        tg = grads
    else:
        theta = np.asarray(aniso, dtype=np.float64)
        tg = np.einsum("ab,tib->tia", theta, grads)
    ga = np.einsum("tia,ti->ta", grads, np.asarray(a)[tri])
    gb = np.einsum("tia,ti->ta", tg, np.asarray(b)[tri])
    per_elem = np.einsum("ta,ta->t", ga, gb) * geom.areas / 3.0
    out = np.zeros(mesh.num_vertices)
    np.add.at(out, tri.ravel(), np.repeat(per_elem, 3))
    return out


# Exact edge integrals of P1 products: int psi_1^a psi_2^b = L a! b!/(a+b+1)!


def _edge_weighted_mass_local(w0, w1):
    """2x2 local matrix of int w psi_i psi_j on an edge, per unit length."""
    m = np.empty(w0.shape + (2, 2))
    m[..., 0, 0] = w0 / 4.0 + w1 / 12.0
    m[..., 0, 1] = (w0 + w1) / 12.0
    m[..., 1, 0] = m[..., 0, 1]
    m[..., 1, 1] = w0 / 12.0 + w1 / 4.0
    return m


def _edge_weighted_load_local(w0, w1):
    """2-vector of int w psi_i on an edge, per unit length."""
    g = np.empty(w0.shape + (2,))
    g[..., 0] = w0 / 3.0 + w1 / 6.0
    g[..., 1] = w0 / 6.0 + w1 / 3.0
    return g


def assemble_robin(mesh, tag, weight, coefficient, ambient):
    """Robin boundary matrix and load on the facets carrying ``tag``.

    B_ij = int_Gamma c w(x) phi_i phi_j, g_i = int_Gamma c w(x) T_amb phi_i,
    with w a nodal field restricted to the boundary (exact edge integration).
    """
    if coefficient < 0.0:
        raise ValueError("Robin coefficient must be nonnegative")
    weight = np.asarray(weight, dtype=np.float64)
    facets, lengths = mesh.facets_with_tag(tag)
    nv = mesh.num_vertices
    if facets.shape[0] == 0:
        return sp.csr_matrix((nv, nv)), np.zeros(nv)
    w0, w1 = weight[facets[:, 0]], weight[facets[:, 1]]
    local = coefficient * lengths[:, None, None] * _edge_weighted_mass_local(w0, w1)
    rows = np.repeat(facets, 2, axis=1)
    cols = np.tile(facets, (1, 2))
    mat = _scatter(mesh, rows, cols, local)
    load_local = (
        coefficient * ambient * lengths[:, None] * _edge_weighted_load_local(w0, w1)
    )
    load = np.zeros(nv)
    np.add.at(load, facets.ravel(), load_local.ravel())
    return mat, load


def robin_weight_sensitivity(mesh, tag, a, b, coefficient=1.0):
    """s_k = a^T (dB/dw_k) b for the edge-exact weighted boundary mass."""
    a = np.asarray(a)
    b = np.asarray(b)
    facets, lengths = mesh.facets_with_tag(tag)
    out = np.zeros(mesh.num_vertices)
    if facets.shape[0] == 0:
        return out
    a0, a1 = a[facets[:, 0]], a[facets[:, 1]]
    b0, b1 = b[facets[:, 0]], b[facets[:, 1]]
    # dB/dw0 = L [[1/4, 1/12], [1/12, 1/12]], dB/dw1 mirrored.
    s0 = (
        a0 * b0 / 4.0 + (a0 * b1 + a1 * b0) / 12.0 + a1 * b1 / 12.0
    ) * lengths * coefficient
    s1 = (
        a0 * b0 / 12.0 + (a0 * b1 + a1 * b0) / 12.0 + a1 * b1 / 4.0
    ) * lengths * coefficient
    np.add.at(out, facets[:, 0], s0)
    np.add.at(out, facets[:, 1], s1)
    return out


def lump_rows(mat):
    """Diagonal matrix of row sums (mass lumping)."""
    return sp.diags(np.asarray(mat.sum(axis=1)).ravel())


def robin_lumped_weight_sensitivity(mesh, tag, a, b, coefficient=1.0):
    """s_k = a^T (d lump(B)/dw_k) b for the row-lumped weighted boundary mass.

    Row sums of the edge-exact B(w) coincide with the unit-ambient load, so
    the lumped matrix is diag(g(w)).
    """
    a = np.asarray(a)
    b = np.asarray(b)
    facets, lengths = mesh.facets_with_tag(tag)
    out = np.zeros(mesh.num_vertices)
    if facets.shape[0] == 0:
        return out
    ab0 = a[facets[:, 0]] * b[facets[:, 0]]
    ab1 = a[facets[:, 1]] * b[facets[:, 1]]
    scale = coefficient * lengths
    np.add.at(out, facets[:, 0], scale * (ab0 / 3.0 + ab1 / 6.0))
    np.add.at(out, facets[:, 1], scale * (ab0 / 6.0 + ab1 / 3.0))
    return out


def robin_load_weight_sensitivity(mesh, tag, a, coefficient=1.0, ambient=1.0):
    """s_k = a^T (dg/dw_k) for the edge-exact weighted boundary load."""
    a = np.asarray(a)
    facets, lengths = mesh.facets_with_tag(tag)
    out = np.zeros(mesh.num_vertices)
    if facets.shape[0] == 0:
        return out
    a0, a1 = a[facets[:, 0]], a[facets[:, 1]]
    scale = coefficient * ambient * lengths
    np.add.at(out, facets[:, 0], scale * (a0 / 3.0 + a1 / 6.0))
    np.add.at(out, facets[:, 1], scale * (a0 / 6.0 + a1 / 3.0))
    return out


def integrate_p1_load(mesh, fn):
    """Load vector f_i = int fn(x) phi_i via order-2 (edge-midpoint) quadrature."""
    geom = geometry(mesh)
    tri = mesh.triangles
    p = mesh.vertices[tri]
    mids = 0.5 * (p + np.roll(p, -1, axis=1))  # midpoints of edges 01,12,20
    vals = np.stack([fn(mids[:, k, 0], mids[:, k, 1]) for k in range(3)], axis=1)
    # hat_i at edge midpoints: 1/2 on the two adjacent edges, 0 opposite.
    weights = geom.areas[:, None] / 3.0
    contrib = np.empty_like(vals)
    contrib[:, 0] = 0.5 * (vals[:, 0] + vals[:, 2])
    contrib[:, 1] = 0.5 * (vals[:, 0] + vals[:, 1])
    contrib[:, 2] = 0.5 * (vals[:, 1] + vals[:, 2])
    out = np.zeros(mesh.num_vertices)
    np.add.at(out, tri.ravel(), (weights * contrib).ravel())
    return out


def l2_error(mesh, nodal, exact_fn):
    """L2 norm of (P1 interpolant of ``nodal``) - exact_fn, midpoint rule."""
    geom = geometry(mesh)
    tri = mesh.triangles
    p = mesh.vertices[tri]
    mids = 0.5 * (p + np.roll(p, -1, axis=1))
    vals = np.asarray(nodal)[tri]
    uh = 0.5 * np.stack(
        [vals[:, 0] + vals[:, 1], vals[:, 1] + vals[:, 2], vals[:, 2] + vals[:, 0]],
        axis=1,
    )
    ue = np.stack(
        [exact_fn(mids[:, k, 0], mids[:, k, 1]) for k in range(3)], axis=1
    )
    # edge-midpoint rule is exact for quadratics on triangles
    err2 = (geom.areas[:, None] / 3.0 * (uh - ue) ** 2).sum()
    return float(np.sqrt(err2))


def solve_spd(A, b, rtol=SOLVE_RTOL):
    """Direct sparse solve with a residual check (A assumed SPD/symmetric)."""
    b = np.asarray(b, dtype=np.float64)
    nb = np.linalg.norm(b)
    if nb == 0.0:
        return np.zeros_like(b)
    try:
        lu = spla.splu(A.tocsc())
        x = lu.solve(b)
    except RuntimeError as exc:  # singular factorization
        raise SolverError(f"sparse factorization failed: {exc}") from exc
    x += lu.solve(b - A @ x)  # one refinement step for ill-conditioned systems
    res = _backward_error(A, x, b)
    if not np.isfinite(res) or res > rtol:
        raise SolverError(
            f"linear solve residual {res:.3e} exceeds tolerance {rtol:.1e}",
            residual=res,
        )
    return x


def _backward_error(A, x, b):
    """||Ax - b|| over ||b|| + ||A|| ||x|| (norm-wise backward error).

    Coincides with the plain relative residual for well-scaled systems but
    stays meaningful when ||A|| ||x|| >> ||b|| (e.g. huge exchange terms).
    """
    norm_a = spla.norm(A, np.inf) if sp.issparse(A) else np.linalg.norm(A, np.inf)
    denom = np.linalg.norm(b) + norm_a * np.linalg.norm(x)
    if denom == 0.0:
        return 0.0
    return np.linalg.norm(A @ x - b) / denom


class CachedFactorization:
    """LU factorization reused across repeated (possibly transposed) solves."""

    def __init__(self, A, rtol=SOLVE_RTOL):
        self.A = A.tocsc()
        self.rtol = rtol
        try:
            self._lu = spla.splu(self.A)
        except RuntimeError as exc:
            raise SolverError(f"sparse factorization failed: {exc}") from exc

    def solve(self, b, trans="N"):
        b = np.asarray(b, dtype=np.float64)
        nb = np.linalg.norm(b)
        if nb == 0.0:
            return np.zeros_like(b)
        x = self._lu.solve(b, trans=trans)
        op = self.A if trans == "N" else self.A.T
        x += self._lu.solve(b - op @ x, trans=trans)
        res = _backward_error(op, x, b)
        if not np.isfinite(res) or res > self.rtol:
            raise SolverError(
                f"linear solve residual {res:.3e} exceeds {self.rtol:.1e}",
                residual=res,
            )
        return x
