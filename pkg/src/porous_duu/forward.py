"""Coupled thermal and mechanical forward model and its quantities of interest.

Thermal: two-temperature diffusion with interphase exchange and porosity
weighted convection on both boundaries.  Mechanical: pressure-coupled plane
strain elasticity with the pressure algebraically tied to the divergence of
the displacement.  Both systems are linear in the state and assembled from
the nodal porosity field.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import fem
from .exceptions import ConstraintError, PorosityRangeError
from .mesh import BoundaryTag

POROSITY_GUARD = (0.01, 0.99)  # hard solvability bounds, never clamped
POROSITY_LO, POROSITY_SPAN = 0.1, 0.8  # linear design-to-porosity map


@dataclass
class BoundaryConditions:
    T_hot: float = 300.0  # ambient on Outer (K)
    T_cold: float = 270.0  # ambient on Inner (K)
    conv_coeff: float = 15.0  # convection coefficient (W/m^2 K)
    traction: tuple = (0.0, -1e3)  # uniform traction on Outer (Pa)


@dataclass
class ModelParams:
    kappa_s: float = 2.0  # solid conductivity (W/m K)
    kappa_f: float = 0.06  # fluid conductivity (W/m K)
    h_exchange: float = 1e3  # interphase exchange (W/m^3 K)
    C_compress: float = 1e-6  # pressure compliance (1/Pa)
    mu: float = 1e6  # shear modulus (Pa)
    K_bulk: float = 2e6  # 2D bulk modulus (Pa)
    beta_M: float = 1.0  # mechanical QoI weight
    bc: BoundaryConditions = field(default_factory=BoundaryConditions)

    @property
    def lambda_lame(self):
        # 2D (plane strain) convention: lambda = K - mu
        return self.K_bulk - self.mu

    def validate(self):
        for name in ("kappa_s", "kappa_f", "h_exchange", "C_compress", "mu", "K_bulk"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.bc.conv_coeff < 0.0:
            raise ValueError("convection coefficient must be nonnegative")


@dataclass
class PorosityField:
    phi_f: np.ndarray

    @property
    def phi_s(self):
        return 1.0 - self.phi_f


@dataclass
class ForwardState:
    T_s: np.ndarray
    T_f: np.ndarray
    u_s: np.ndarray  # stacked (u_x, u_y), length 2 nv
    p: np.ndarray


def porosity_map(d, m):
    """phi_f = 0.1 + 0.8 (d + m) nodewise, guarded to (0.01, 0.99)."""
    d = np.asarray(d, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    phi = POROSITY_LO + POROSITY_SPAN * (d + m)
    lo, hi = POROSITY_GUARD
    bad = (phi <= lo) | (phi >= hi)
    if np.any(bad):
        worst = int(np.argmax(np.abs(phi - 0.5)))
        raise PorosityRangeError(
            f"porosity {phi[worst]:.6g} at node {worst} outside ({lo}, {hi})",
            node=worst,
            value=float(phi[worst]),
        )
    return PorosityField(phi)


class ForwardContext:
    """Immutable mesh + parameters bundle with porosity-independent caches."""

    def __init__(self, mesh, params=None):
        self.mesh = mesh
        self.params = params or ModelParams()
        self.params.validate()
        self.nv = mesh.num_vertices
        self.mass = fem.assemble_mass(mesh)
        self.elasticity = _assemble_elasticity(
            mesh, self.params.mu, self.params.lambda_lame
        )
        self.divergence = _assemble_divergence(mesh)
        self.traction_pairing = _traction_pairing(mesh, self.params.bc.traction)
        self.fixed_unodes = mesh.nodes_with_tag(BoundaryTag.INNER)

    def mech_fixed_dofs(self):
        return np.concatenate([self.fixed_unodes, self.fixed_unodes + self.nv])


def _assemble_elasticity(mesh, mu, lam):
    """Plane-strain P1 elasticity on stacked (u_x, u_y) dofs."""
    geom = fem.geometry(mesh)
    tri = mesh.triangles
    nt = tri.shape[0]
    g = geom.grads  # (nt, 3, 2)
    areas = geom.areas
    # 6x6 element blocks over dofs (x0,x1,x2,y0,y1,y2)
    gx, gy = g[:, :, 0], g[:, :, 1]
    K = np.empty((nt, 6, 6))
    xx = np.einsum("ti,tj->tij", gx, gx)
    yy = np.einsum("ti,tj->tij", gy, gy)
    xy = np.einsum("ti,tj->tij", gx, gy)
    yx = xy.transpose(0, 2, 1)
    K[:, :3, :3] = (2 * mu + lam) * xx + mu * yy
    K[:, 3:, 3:] = (2 * mu + lam) * yy + mu * xx
    K[:, :3, 3:] = lam * xy + mu * yx
    K[:, 3:, :3] = lam * yx + mu * xy
    K *= areas[:, None, None]
    nv = mesh.num_vertices
    dofs = np.concatenate([tri, tri + nv], axis=1)  # (nt, 6)
    rows = np.repeat(dofs, 6, axis=1)
    cols = np.tile(dofs, (1, 6))
    return sp.coo_matrix(
        (K.ravel(), (rows.ravel(), cols.ravel())), shape=(2 * nv, 2 * nv)
    ).tocsr()


def _assemble_divergence(mesh):
    """D[q, udof] = int q div(u), q and u both P1 (exact: int q = A/3)."""
    geom = fem.geometry(mesh)
    tri = mesh.triangles
    nt = tri.shape[0]
    nv = mesh.num_vertices
    g = geom.grads
    # local[t, b, a] = (A/3) * div-contribution of u dof a, per pressure node b
    gx, gy = g[:, :, 0], g[:, :, 1]
    loc = np.concatenate([gx, gy], axis=1)  # (nt, 6) per-dof div contribution
    loc = np.repeat(loc[:, None, :], 3, axis=1) * (geom.areas[:, None, None] / 3.0)
    dofs = np.concatenate([tri, tri + nv], axis=1)
    rows = np.repeat(tri, 6, axis=1)
    cols = np.tile(dofs, (1, 3))
    return sp.coo_matrix(
        (loc.ravel(), (rows.ravel(), cols.ravel())), shape=(nv, 2 * nv)
    ).tocsr()


def _traction_pairing(mesh, traction):
    """Vector t_pair with t_pair . u = int_Outer t . u ds (P1 exact)."""
    tx, ty = traction
    nv = mesh.num_vertices
    out = np.zeros(2 * nv)
    facets, lengths = mesh.facets_with_tag(BoundaryTag.OUTER)
    if facets.shape[0] == 0:
        return out
    half = lengths / 2.0
    np.add.at(out, facets[:, 0], tx * half)
    np.add.at(out, facets[:, 1], tx * half)
    np.add.at(out, facets[:, 0] + nv, ty * half)
    np.add.at(out, facets[:, 1] + nv, ty * half)
    return out


def assemble_coupling(mesh, phi_f):
    """Pressure-displacement coupling, integrated by parts, centroid rule.

    g(p, v) = -int p div((2 phi_f - 1) v); rows are u dofs, columns p nodes.
    """
    geom = fem.geometry(mesh)
    tri = mesh.triangles
    nt = tri.shape[0]
    nv = mesh.num_vertices
    g = geom.grads
    phi_e = np.asarray(phi_f)[tri]
    phi_bar = phi_e.mean(axis=1)
    grad_phi = np.einsum("tia,ti->ta", g, phi_e)  # (nt, 2)
    # d2g / dv_{a,alpha} dp_b = -A [ (2 phibar - 1) grad_a[alpha] + (2/3) gphi[alpha] ] / 3
    base = (2.0 * phi_bar - 1.0)[:, None, None] * g  # (nt, 3, 2)
    base = base + (2.0 / 3.0) * grad_phi[:, None, :]
    base = -(geom.areas[:, None, None] / 3.0) * base
    # rows: u dofs (component alpha, vertex a); cols: p vertex b
    data = np.repeat(base, 3, axis=1)  # (nt, 9, 2) -> per (a, b) pair
    vals = np.concatenate([data[:, :, 0], data[:, :, 1]], axis=1)  # (nt, 18)
    udofs = np.concatenate([tri, tri + nv], axis=1)  # (nt, 6)
    rows = np.repeat(udofs, 3, axis=1)
    cols = np.tile(np.tile(tri, (1, 3)), (1, 2))
    return sp.coo_matrix(
        (vals.ravel(), (rows.ravel(), cols.ravel())), shape=(2 * nv, nv)
    ).tocsr()


def assemble_coupling_direction(mesh, w):
    """Directional derivative (dG/dphi) . w of the coupling operator.

    G is affine in the nodal porosity with G(phi = 1/2) = 0, so the
    directional derivative is the assembly evaluated at w + 1/2.
    """
    return assemble_coupling(mesh, np.asarray(w, dtype=np.float64) + 0.5)


def coupling_phi_sensitivity(mesh, a_u, p):
    """s_k = a_u^T (dG/dphi_k) p for the centroid-rule coupling operator."""
    geom = fem.geometry(mesh)
    tri = mesh.triangles
    nv = mesh.num_vertices
    g = geom.grads
    a_u = np.asarray(a_u)
    ax = a_u[:nv][tri]
    ay = a_u[nv:][tri]
    p_bar = np.asarray(p)[tri].mean(axis=1)
    div_a = np.einsum("ti,ti->t", g[:, :, 0], ax) + np.einsum(
        "ti,ti->t", g[:, :, 1], ay
    )
    a_bar_x = ax.mean(axis=1)
    a_bar_y = ay.mean(axis=1)
    # element value is -A p_bar [(2 phibar - 1) div(a) + 2 a_bar . grad(phi)];
    # d/dphi_n gives (2/3) div(a) from phibar and 2 a_bar . g_n from grad(phi)
    common = -geom.areas * p_bar
    term_bar = common * (2.0 / 3.0) * div_a
    term_grad = 2.0 * common[:, None] * (
        g[:, :, 0] * a_bar_x[:, None] + g[:, :, 1] * a_bar_y[:, None]
    )
    out = np.zeros(nv)
    np.add.at(out, tri.ravel(), (term_bar[:, None] + term_grad).ravel())
    return out


class ThermalOperators:
    """Assembled thermal block system at a given porosity field."""

    def __init__(self, ctx, phi):
        mesh = ctx.mesh
        prm = ctx.params
        bc = prm.bc
        nv = ctx.nv
        phi_f = phi.phi_f
        phi_s = phi.phi_s
        self.K_s = fem.assemble_weighted_stiffness(mesh, phi_s * prm.kappa_s)
        self.K_f = fem.assemble_weighted_stiffness(mesh, phi_f * prm.kappa_f)
        self.H = prm.h_exchange * ctx.mass
        self.robin = {}
        self.loads = {}
        for phase, w in (("s", phi_s), ("f", phi_f)):
            for tag, amb in (
                (BoundaryTag.OUTER, bc.T_hot),
                (BoundaryTag.INNER, bc.T_cold),
            ):
                B, gvec = fem.assemble_robin(mesh, tag, w, bc.conv_coeff, amb)
                # row-lumped boundary mass keeps the discrete maximum
                # principle; constant-ambient equilibria are still exact
                self.robin[(phase, tag)] = fem.lump_rows(B)
                self.loads[(phase, tag)] = gvec
        B_s = self.robin[("s", BoundaryTag.OUTER)] + self.robin[("s", BoundaryTag.INNER)]
        B_f = self.robin[("f", BoundaryTag.OUTER)] + self.robin[("f", BoundaryTag.INNER)]
        self.A = sp.bmat(
            [
                [self.K_s + self.H + B_s, -self.H],
                [-self.H, self.K_f + self.H + B_f],
            ],
            format="csr",
        )
        self.b = np.concatenate(
            [
                self.loads[("s", BoundaryTag.OUTER)] + self.loads[("s", BoundaryTag.INNER)],
                self.loads[("f", BoundaryTag.OUTER)] + self.loads[("f", BoundaryTag.INNER)],
            ]
        )


class MechanicalOperators:
    """Assembled mixed displacement/pressure system at a given porosity."""

    def __init__(self, ctx, phi):
        if ctx.fixed_unodes.size == 0:
            raise ConstraintError(
                "mechanical system needs Inner (clamped) boundary facets"
            )
        nv = ctx.nv
        self.E = ctx.elasticity
        self.G = assemble_coupling(ctx.mesh, phi.phi_f)
        self.D = ctx.divergence
        self.Mp = ctx.mass
        C = ctx.params.C_compress
        self.A = sp.bmat(
            [[self.E, self.G], [self.D, C * self.Mp]], format="csr"
        )
        # traction enters the load with a minus sign (T' n = -t convention),
        # so the strain energy equals -<t, u> at equilibrium
        self.b = np.concatenate([-ctx.traction_pairing, np.zeros(nv)])
        fixed = ctx.mech_fixed_dofs()
        mask = np.ones(3 * nv, dtype=bool)
        mask[fixed] = False
        self.free = np.flatnonzero(mask)
        self.A_red = self.A[self.free][:, self.free].tocsc()
        self.b_red = self.b[self.free]

    def expand(self, x_red):
        full = np.zeros(self.A.shape[0])
        full[self.free] = x_red
        return full

    def restrict(self, x_full):
        return np.asarray(x_full)[self.free]


def solve_thermal(mesh, phi, params):
    ctx = ForwardContext(mesh, params) if not isinstance(mesh, ForwardContext) else mesh
    ops = ThermalOperators(ctx, phi)
    T = fem.solve_spd(ops.A, ops.b)
    nv = ctx.nv
    return T[:nv], T[nv:]


def solve_mechanical(mesh, phi, params):
    ctx = ForwardContext(mesh, params) if not isinstance(mesh, ForwardContext) else mesh
    ops = MechanicalOperators(ctx, phi)
    x = fem.solve_spd(ops.A_red, ops.b_red)
    full = ops.expand(x)
    nv = ctx.nv
    return full[: 2 * nv], full[2 * nv :]


class ForwardWorkspace:
    """Assembles, factorizes and solves both systems at one porosity field.

    Factorizations are retained so adjoint and incremental solves reuse them.
    """

    def __init__(self, ctx, phi):
        self.ctx = ctx
        self.phi = phi
        self.thermal = ThermalOperators(ctx, phi)
        self.mech = MechanicalOperators(ctx, phi)
        self.th_lu = fem.CachedFactorization(self.thermal.A)
        self.mech_lu = fem.CachedFactorization(self.mech.A_red)
        T = self.th_lu.solve(self.thermal.b)
        X = self.mech.expand(self.mech_lu.solve(self.mech.b_red))
        nv = ctx.nv
        self.T = T  # stacked (T_s, T_f)
        self.X = X  # stacked (u_x, u_y, p)
        self.state = ForwardState(T[:nv], T[nv:], X[: 2 * nv], X[2 * nv :])

    def qoi_thermal(self):
        return eval_QT(self.state, self.phi, self.ctx)

    def qoi_mechanical(self):
        return eval_QM(self.state, self.ctx)

    def qoi(self):
        return self.ctx.params.beta_M * self.qoi_mechanical() - self.qoi_thermal()


def _qt_boundary_pieces(ctx, phi):
    """Unit-coefficient boundary mass/load pairs entering Q_T."""
    mesh = ctx.mesh
    bc = ctx.params.bc
    pieces = []
    for phase, w in (("s", phi.phi_s), ("f", phi.phi_f)):
        for tag, amb in (
            (BoundaryTag.OUTER, bc.T_hot),
            (BoundaryTag.INNER, bc.T_cold),
        ):
            B, gvec = fem.assemble_robin(mesh, tag, w, 1.0, amb)
            pieces.append((phase, tag, fem.lump_rows(B), gvec))
    return pieces


def eval_QT(state, phi, ctx):
    """Thermal QoI: weighted gradient energy plus boundary pairing terms."""
    mesh = ctx.mesh
    prm = ctx.params
    K_s = fem.assemble_weighted_stiffness(mesh, phi.phi_s * prm.kappa_s)
    K_f = fem.assemble_weighted_stiffness(mesh, phi.phi_f * prm.kappa_f)
    total = 0.5 * (state.T_s @ (K_s @ state.T_s) + state.T_f @ (K_f @ state.T_f))
    fields = {"s": state.T_s, "f": state.T_f}
    for phase, tag, B, gvec in _qt_boundary_pieces(ctx, phi):
        T = fields[phase]
        total += 0.5 * (T @ (B @ T)) + gvec @ T
    return float(total)


def eval_QM(state, ctx):
    """Mechanical QoI: strain energy plus traction work."""
    u = state.u_s
    return float(0.5 * (u @ (ctx.elasticity @ u)) + ctx.traction_pairing @ u)


def eval_Q(d, m, ctx):
    """Design objective Q = beta_M Q_M - Q_T at design d and uncertain m."""
    phi = porosity_map(d, m)
    ws = ForwardWorkspace(ctx, phi)
    return ws.qoi()
