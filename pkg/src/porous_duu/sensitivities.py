"""Discrete adjoint derivatives of the design objective.

All derivatives differentiate the assembled algebraic systems directly, so
they are exact for the discrete objective and pass finite-difference checks
to solver tolerance.  The design and uncertain parameters enter only through
the porosity field phi = 0.1 + 0.8 (d + m); gradients with respect to d and
m therefore coincide up to which argument is perturbed.
"""

import warnings

import numpy as np

from . import fem, prior as prior_mod
from .exceptions import StaleEvaluationError
from .forward import (
    POROSITY_SPAN,
    ForwardWorkspace,
    assemble_coupling_direction,
    coupling_phi_sensitivity,
    porosity_map,
)
from .mesh import BoundaryTag

EIG_DEGENERACY_RTOL = 1e-10
EIG_FD_STEP = 1e-4  # step for the eigenvalue-derivative difference quotient


class AdjointWorkspace:
    """Forward + adjoint states at one (d, m), with cached factorizations.

    Provides the objective Q, its exact m-gradient, and m-Hessian actions.
    """

    def __init__(self, ctx, d, m):
        self.ctx = ctx
        self.d = np.asarray(d, dtype=np.float64)
        self.m = np.asarray(m, dtype=np.float64)
        self.phi = porosity_map(self.d, self.m)
        self.fw = ForwardWorkspace(ctx, self.phi)
        self._adjoints = None
        self._qt_cache = None

    # -- public API ---------------------------------------------------------

    def qoi(self):
        return self.fw.qoi()

    def grad_m(self):
        """Exact gradient of Q with respect to nodal m."""
        return POROSITY_SPAN * self._grad_phi()

    def hess_m_action(self, v):
        """Action of the m-Hessian of Q on direction v."""
        v = np.asarray(v, dtype=np.float64)
        if not np.any(v):
            return np.zeros_like(v)
        return POROSITY_SPAN * self._hess_phi_action(POROSITY_SPAN * v)

    # -- adjoint machinery --------------------------------------------------

    def _lambdas(self):
        if self._adjoints is None:
            fw = self.fw
            lam_th = fw.th_lu.solve(-self._dQ_dT(fw.T))
            rhs = -self._dQ_dX(fw.X)
            lam_m = fw.mech.expand(
                fw.mech_lu.solve(fw.mech.restrict(rhs), trans="T")
            )
            self._adjoints = (lam_th, lam_m)
        return self._adjoints

    def _dQ_dT(self, T):
        """Gradient of Q = beta_M Q_M - Q_T in the stacked temperatures."""
        nv = self.ctx.nv
        fw = self.fw
        out = np.empty(2 * nv)
        pieces = self._qt_pieces()
        for phase, sl in (("s", slice(0, nv)), ("f", slice(nv, 2 * nv))):
            Ti = T[sl]
            K, boundary = pieces[phase]
            g = K @ Ti
            for B, gvec in boundary:
                g = g + B @ Ti + gvec
            out[sl] = -g
        return out

    def _dQ_dX(self, X):
        nv = self.ctx.nv
        out = np.zeros(3 * nv)
        u = X[: 2 * nv]
        out[: 2 * nv] = self.ctx.params.beta_M * (
            self.ctx.elasticity @ u + self.ctx.traction_pairing
        )
        return out

    def _qt_pieces(self):
        """Per-phase (stiffness, [(lumped boundary mass, load)]) of Q_T."""
        if self._qt_cache is None:
            ctx = self.ctx
            mesh = ctx.mesh
            prm = ctx.params
            bc = prm.bc
            cache = {}
            for phase, w, kappa in (
                ("s", self.phi.phi_s, prm.kappa_s),
                ("f", self.phi.phi_f, prm.kappa_f),
            ):
                K = fem.assemble_weighted_stiffness(mesh, w * kappa)
                boundary = []
                for tag, amb in (
                    (BoundaryTag.OUTER, bc.T_hot),
                    (BoundaryTag.INNER, bc.T_cold),
                ):
                    B, gvec = fem.assemble_robin(mesh, tag, w, 1.0, amb)
                    boundary.append((fem.lump_rows(B), gvec))
                cache[phase] = (K, boundary)
            self._qt_cache = cache
        return self._qt_cache

    # phase sign of d phi_phase / d phi_f
    _PHASE_SIGN = {"s": -1.0, "f": 1.0}

    def _dQT_dphi_bilinear(self, Ta, Tb):
        """s_k = Ta^T (d/dphi_k of the quadratic part of Q_T, doubled) Tb.

        Covers the weighted stiffness and the lumped boundary masses; the
        ambient load term is handled by ``_qt_load_sens``.
        """
        ctx = self.ctx
        mesh = ctx.mesh
        prm = ctx.params
        nv = ctx.nv
        out = np.zeros(nv)
        kappas = {"s": prm.kappa_s, "f": prm.kappa_f}
        for phase, sl in (("s", slice(0, nv)), ("f", slice(nv, 2 * nv))):
            sign = self._PHASE_SIGN[phase]
            a, b = Ta[sl], Tb[sl]
            out += sign * kappas[phase] * fem.stiffness_coeff_sensitivity(mesh, a, b)
            for tag in (BoundaryTag.OUTER, BoundaryTag.INNER):
                out += sign * fem.robin_lumped_weight_sensitivity(mesh, tag, a, b)
        return out

    def _qt_load_sens(self, a):
        """s_k = a^T (d/dphi_k) of the unit-coefficient ambient load of Q_T."""
        ctx = self.ctx
        mesh = ctx.mesh
        bc = ctx.params.bc
        nv = ctx.nv
        out = np.zeros(nv)
        for phase, sl in (("s", slice(0, nv)), ("f", slice(nv, 2 * nv))):
            sign = self._PHASE_SIGN[phase]
            for tag, amb in (
                (BoundaryTag.OUTER, bc.T_hot),
                (BoundaryTag.INNER, bc.T_cold),
            ):
                out += sign * fem.robin_load_weight_sensitivity(
                    mesh, tag, a[sl], 1.0, amb
                )
        return out

    def _dQT_dphi(self, T):
        """Explicit phi-derivative of Q_T at the stacked temperatures T."""
        return 0.5 * self._dQT_dphi_bilinear(T, T) + self._qt_load_sens(T)

    def _S_Ath(self, a, b):
        """s_k = a^T (dA_th/dphi_k) b for the assembled thermal operator."""
        ctx = self.ctx
        mesh = ctx.mesh
        prm = ctx.params
        nv = ctx.nv
        out = np.zeros(nv)
        kappas = {"s": prm.kappa_s, "f": prm.kappa_f}
        cv = prm.bc.conv_coeff
        for phase, sl in (("s", slice(0, nv)), ("f", slice(nv, 2 * nv))):
            sign = self._PHASE_SIGN[phase]
            ai, bi = a[sl], b[sl]
            out += sign * kappas[phase] * fem.stiffness_coeff_sensitivity(mesh, ai, bi)
            for tag in (BoundaryTag.OUTER, BoundaryTag.INNER):
                out += sign * cv * fem.robin_lumped_weight_sensitivity(
                    mesh, tag, ai, bi
                )
        return out

    def _S_bth(self, a):
        """s_k = a^T (db_th/dphi_k) for the thermal load vector."""
        ctx = self.ctx
        mesh = ctx.mesh
        bc = ctx.params.bc
        nv = ctx.nv
        out = np.zeros(nv)
        for phase, sl in (("s", slice(0, nv)), ("f", slice(nv, 2 * nv))):
            sign = self._PHASE_SIGN[phase]
            ai = a[sl]
            for tag, amb in (
                (BoundaryTag.OUTER, bc.T_hot),
                (BoundaryTag.INNER, bc.T_cold),
            ):
                out += sign * fem.robin_load_weight_sensitivity(
                    mesh, tag, ai, bc.conv_coeff, amb
                )
        return out

    def _grad_phi(self):
        """Exact gradient of Q with respect to the nodal porosity."""
        fw = self.fw
        lam_th, lam_m = self._lambdas()
        nv = self.ctx.nv
        g = -self._dQT_dphi(fw.T)
        g += self._S_Ath(lam_th, fw.T) - self._S_bth(lam_th)
        g += coupling_phi_sensitivity(
            self.ctx.mesh, lam_m[: 2 * nv], fw.X[2 * nv :]
        )
        return g

    def _apply_Ath_prime(self, w, vec):
        """(dA_th/dphi . w) vec via directional assembly (signed weights)."""
        ctx = self.ctx
        mesh = ctx.mesh
        prm = ctx.params
        nv = ctx.nv
        out = np.empty(2 * nv)
        kappas = {"s": prm.kappa_s, "f": prm.kappa_f}
        for phase, sl in (("s", slice(0, nv)), ("f", slice(nv, 2 * nv))):
            sign = self._PHASE_SIGN[phase]
            K = fem.assemble_weighted_stiffness(
                mesh, sign * kappas[phase] * w, check_positive=False
            )
            acc = K @ vec[sl]
            for tag in (BoundaryTag.OUTER, BoundaryTag.INNER):
                B, _ = fem.assemble_robin(
                    mesh, tag, sign * w, prm.bc.conv_coeff, 0.0
                )
                acc += fem.lump_rows(B) @ vec[sl]
            out[sl] = acc
        return out

    def _bth_prime(self, w):
        """db_th/dphi . w."""
        ctx = self.ctx
        mesh = ctx.mesh
        bc = ctx.params.bc
        nv = ctx.nv
        out = np.empty(2 * nv)
        for phase, sl in (("s", slice(0, nv)), ("f", slice(nv, 2 * nv))):
            sign = self._PHASE_SIGN[phase]
            acc = np.zeros(nv)
            for tag, amb in (
                (BoundaryTag.OUTER, bc.T_hot),
                (BoundaryTag.INNER, bc.T_cold),
            ):
                _, gvec = fem.assemble_robin(
                    mesh, tag, sign * w, bc.conv_coeff, amb
                )
                acc += gvec
            out[sl] = acc
        return out

    def _d2QT_dTdphi(self, w, T):
        """(d/dT of dQ_T/dphi) . w evaluated at T: a stacked 2nv vector."""
        ctx = self.ctx
        mesh = ctx.mesh
        prm = ctx.params
        bc = prm.bc
        nv = ctx.nv
        out = np.empty(2 * nv)
        kappas = {"s": prm.kappa_s, "f": prm.kappa_f}
        for phase, sl in (("s", slice(0, nv)), ("f", slice(nv, 2 * nv))):
            sign = self._PHASE_SIGN[phase]
            K = fem.assemble_weighted_stiffness(
                mesh, sign * kappas[phase] * w, check_positive=False
            )
            acc = K @ T[sl]
            for tag, amb in (
                (BoundaryTag.OUTER, bc.T_hot),
                (BoundaryTag.INNER, bc.T_cold),
            ):
                B, gvec = fem.assemble_robin(mesh, tag, sign * w, 1.0, amb)
                acc += fem.lump_rows(B) @ T[sl] + gvec
            out[sl] = acc
        return out

    def _d2Q_dT2(self, Tdot):
        """Hessian of Q in T applied to Tdot (ambient terms drop)."""
        nv = self.ctx.nv
        out = np.empty(2 * nv)
        pieces = self._qt_pieces()
        for phase, sl in (("s", slice(0, nv)), ("f", slice(nv, 2 * nv))):
            K, boundary = pieces[phase]
            acc = K @ Tdot[sl]
            for B, _ in boundary:
                acc += B @ Tdot[sl]
            out[sl] = -acc
        return out

    def _hess_phi_action(self, w):
        """Action of the phi-Hessian of Q on the nodal direction w."""
        ctx = self.ctx
        nv = ctx.nv
        fw = self.fw
        lam_th, lam_m = self._lambdas()

        # incremental forward states
        Tdot = fw.th_lu.solve(-self._apply_Ath_prime(w, fw.T) + self._bth_prime(w))
        Gp = assemble_coupling_direction(ctx.mesh, w)
        rhs_mech = np.zeros(3 * nv)
        rhs_mech[: 2 * nv] = -(Gp @ fw.X[2 * nv :])
        Xdot = fw.mech.expand(fw.mech_lu.solve(fw.mech.restrict(rhs_mech)))

        # incremental adjoints
        rhs_th = -(
            self._d2Q_dT2(Tdot)
            - self._d2QT_dTdphi(w, fw.T)
            + self._apply_Ath_prime(w, lam_th)
        )
        lam_th_dot = fw.th_lu.solve(rhs_th)
        rhs_m = np.zeros(3 * nv)
        rhs_m[: 2 * nv] = -ctx.params.beta_M * (
            ctx.elasticity @ Xdot[: 2 * nv]
        )
        rhs_m[2 * nv :] = -(Gp.T @ lam_m[: 2 * nv])
        lam_m_dot = fw.mech.expand(
            fw.mech_lu.solve(fw.mech.restrict(rhs_m), trans="T")
        )

        # accumulate the phi-derivative pieces
        out = -self._dQT_dphi_bilinear(fw.T, Tdot) - self._qt_load_sens(Tdot)
        out += self._S_Ath(lam_th_dot, fw.T) - self._S_bth(lam_th_dot)
        out += self._S_Ath(lam_th, Tdot)
        out += coupling_phi_sensitivity(
            ctx.mesh, lam_m_dot[: 2 * nv], fw.X[2 * nv :]
        )
        out += coupling_phi_sensitivity(
            ctx.mesh, lam_m[: 2 * nv], Xdot[2 * nv :]
        )
        return out


def grad_m_Q(d, m, ctx):
    """Gradient of Q(d, m) with respect to nodal m (one adjoint pair)."""
    return AdjointWorkspace(ctx, d, m).grad_m()


def hess_m_action(d, m, v, ctx, workspace=None):
    """Action of the m-Hessian of Q on v via incremental solves."""
    ws = workspace or AdjointWorkspace(ctx, d, m)
    return ws.hess_m_action(v)


def grad_d_Jquad(d, risk_eval, weights, reg_config=None):
    """Gradient of the quadratic risk objective with respect to the design.

    Eigenvalue terms use the fixed-eigenvector (Hellmann-Feynman) derivative
    realized as a central difference of Hessian actions along each
    eigenvector; the gradient-covariance term uses one extra Hessian action.
    """
    d = np.asarray(d, dtype=np.float64)
    if not np.array_equal(d, risk_eval.design):
        raise StaleEvaluationError(
            "risk evaluation was computed at a different design"
        )
    ctx = risk_eval.ctx
    the_prior = risk_eval.prior
    mbar = the_prior.mean_field
    ws = AdjointWorkspace(ctx, d, mbar)
    grad = ws.grad_m().copy()

    lambdas = np.asarray(risk_eval.eigenvalues)
    if lambdas.size > 1:
        gaps = np.abs(np.diff(lambdas))
        if np.any(gaps < EIG_DEGENERACY_RTOL * max(abs(lambdas[0]), 1e-300)):
            warnings.warn(
                "clustered eigenvalues: fixed-eigenvector derivative is a "
                "subgradient",
                RuntimeWarning,
            )

    eig_grads = []
    for n in range(lambdas.size):
        psi = risk_eval.eigenvectors[:, n]
        eps = EIG_FD_STEP / max(1.0, np.abs(psi).max())
        ws_p = AdjointWorkspace(ctx, d, mbar + eps * psi)
        ws_m = AdjointWorkspace(ctx, d, mbar - eps * psi)
        t = (ws_p.hess_m_action(psi) - ws_m.hess_m_action(psi)) / (2.0 * eps)
        eig_grads.append(t)

    for lam, t in zip(lambdas, eig_grads):
        grad += 0.5 * t + weights.beta_V * lam * t

    if weights.beta_V != 0.0:
        cg = prior_mod.apply_covariance(the_prior, risk_eval.grad_bar)
        grad += weights.beta_V * 2.0 * ws.hess_m_action(cg)

    if reg_config is not None and weights.beta_R != 0.0:
        from .regularization import eval_R

        _, reg_grad = eval_R(d, reg_config, ctx.mesh)
        grad += weights.beta_R * reg_grad
    return grad
