import numpy as np
import pytest

from porous_duu import fem, forward
from porous_duu.exceptions import ConstraintError, PorosityRangeError
from porous_duu.forward import (
    ForwardContext,
    ForwardWorkspace,
    ModelParams,
    PorosityField,
    porosity_map,
)
from porous_duu.mesh import (
    BoundaryTag,
    build_lshape_mesh,
    build_unit_square_mesh,
)


@pytest.fixture(scope="module")
def lmesh():
    return build_lshape_mesh(0.25)


@pytest.fixture(scope="module")
def lctx(lmesh):
    return ForwardContext(lmesh, ModelParams())


def uniform_phi(mesh, value=0.5):
    return PorosityField(np.full(mesh.num_vertices, value))


class TestPorosityMap:
    def test_endpoints(self):
        d0 = np.zeros(5)
        assert np.allclose(porosity_map(d0, d0).phi_f, 0.1)
        assert np.allclose(porosity_map(np.ones(5), d0).phi_f, 0.9)

    def test_linearity(self):
        d = np.full(3, 0.5)
        m = np.full(3, 0.125)
        assert np.allclose(porosity_map(d, m).phi_f, 0.6)

    def test_out_of_range_names_worst_node(self):
        d = np.array([0.5, 0.5, 1.0])
        m = np.array([0.0, 0.0, 0.2])
        with pytest.raises(PorosityRangeError) as exc:
            porosity_map(d, m)
        assert exc.value.node == 2

    def test_phi_s_complement(self):
        phi = porosity_map(np.full(4, 0.25), np.zeros(4))
        assert np.allclose(phi.phi_s + phi.phi_f, 1.0)


class TestThermal:
    def test_constant_equilibrium(self, lmesh):
        params = ModelParams()
        params.bc.T_hot = params.bc.T_cold = 280.0
        ctx = ForwardContext(lmesh, params)
        rng = np.random.default_rng(0)
        phi = PorosityField(0.3 + 0.4 * rng.random(lmesh.num_vertices))
        T_s, T_f = forward.solve_thermal(ctx, phi, params)
        assert np.abs(T_s - 280.0).max() <= 1e-8 * 280.0
        assert np.abs(T_f - 280.0).max() <= 1e-8 * 280.0

    def test_large_exchange_equilibrates_phases(self, lmesh):
        params = ModelParams(h_exchange=1e8)
        ctx = ForwardContext(lmesh, params)
        T_s, T_f = forward.solve_thermal(ctx, uniform_phi(lmesh), params)
        span = params.bc.T_hot - params.bc.T_cold
        assert np.abs(T_s - T_f).max() <= 1e-3 * span

    def test_discrete_maximum_principle(self, lmesh):
        params = ModelParams()
        ctx = ForwardContext(lmesh, params)
        T_s, T_f = forward.solve_thermal(ctx, uniform_phi(lmesh), params)
        lo, hi = params.bc.T_cold, params.bc.T_hot
        for T in (T_s, T_f):
            assert T.min() >= lo - 1e-8
            assert T.max() <= hi + 1e-8


class TestMechanical:
    def test_zero_traction_zero_solution(self, lmesh):
        params = ModelParams()
        params.bc.traction = (0.0, 0.0)
        ctx = ForwardContext(lmesh, params)
        u, p = forward.solve_mechanical(ctx, uniform_phi(lmesh, 0.4), params)
        assert np.abs(u).max() <= 1e-10
        assert np.abs(p).max() <= 1e-10

    def test_linearity_in_traction(self, lmesh):
        p1 = ModelParams()
        p2 = ModelParams()
        p2.bc.traction = (0.0, -2e3)
        phi = uniform_phi(lmesh, 0.35)
        u1, pr1 = forward.solve_mechanical(ForwardContext(lmesh, p1), phi, p1)
        u2, pr2 = forward.solve_mechanical(ForwardContext(lmesh, p2), phi, p2)
        np.testing.assert_allclose(u2, 2.0 * u1, rtol=1e-10, atol=1e-18)
        np.testing.assert_allclose(pr2, 2.0 * pr1, rtol=1e-10, atol=1e-10)

    def test_no_dirichlet_raises(self):
        mesh = build_unit_square_mesh(3, 3)  # all Outer, nothing clamped
        params = ModelParams()
        with pytest.raises(ConstraintError):
            forward.solve_mechanical(ForwardContext(mesh, params), uniform_phi(mesh), params)

    def test_pressure_consistent_with_divergence(self, lmesh, lctx):
        phi = uniform_phi(lmesh, 0.65)
        u, p = forward.solve_mechanical(lctx, phi, lctx.params)
        res = lctx.params.C_compress * (lctx.mass @ p) + lctx.divergence @ u
        scale = np.abs(lctx.params.C_compress * (lctx.mass @ p)).max()
        assert np.abs(res).max() <= 1e-8 * max(scale, 1e-30)

    def test_mms_convergence_rate(self):
        # phi_f = 0.5 kills the pressure coupling; pure plane-strain elasticity
        # with u* = (sin(pi x) sin(pi y), 0) and homogeneous Dirichlet walls.
        mu, lam = 1.0, 1.5
        params = ModelParams(mu=mu, K_bulk=mu + lam, C_compress=1.0)

        def u_exact(x, y):
            return np.sin(np.pi * x) * np.sin(np.pi * y)

        errors = []
        for n in (8, 16, 32):
            mesh = build_unit_square_mesh(n, n)
            nv = mesh.num_vertices
            ctx = ForwardContext.__new__(ForwardContext)
            ctx.mesh = mesh
            ctx.params = params
            ctx.nv = nv
            ctx.mass = fem.assemble_mass(mesh)
            ctx.elasticity = forward._assemble_elasticity(mesh, mu, lam)
            ctx.divergence = forward._assemble_divergence(mesh)
            ctx.traction_pairing = np.zeros(2 * nv)
            ctx.fixed_unodes = np.unique(mesh.facets)
            phi = uniform_phi(mesh, 0.5)
            ops = forward.MechanicalOperators(ctx, phi)

            def bx(x, y):
                return (3 * mu + lam) * np.pi**2 * np.sin(np.pi * x) * np.sin(np.pi * y)

            def by(x, y):
                return -(mu + lam) * np.pi**2 * np.cos(np.pi * x) * np.cos(np.pi * y)

            load = np.concatenate(
                [
                    fem.integrate_p1_load(mesh, bx),
                    fem.integrate_p1_load(mesh, by),
                    np.zeros(nv),
                ]
            )
            x = fem.solve_spd(ops.A_red, load[ops.free])
            full = ops.expand(x)
            ux = full[:nv]
            uy = full[nv : 2 * nv]
            err = np.hypot(
                fem.l2_error(mesh, ux, u_exact),
                fem.l2_error(mesh, uy, lambda x, y: 0.0 * x),
            )
            errors.append(err)
        rates = [np.log2(errors[i] / errors[i + 1]) for i in range(2)]
        assert min(rates) >= 1.9


class TestQoIs:
    def test_qt_zero_fields(self, lmesh, lctx):
        state = forward.ForwardState(
            np.zeros(lmesh.num_vertices),
            np.zeros(lmesh.num_vertices),
            np.zeros(2 * lmesh.num_vertices),
            np.zeros(lmesh.num_vertices),
        )
        assert forward.eval_QT(state, uniform_phi(lmesh), lctx) == 0.0

    def test_qt_constant_fields_closed_form(self, lmesh, lctx):
        T0 = 12.0
        nv = lmesh.num_vertices
        state = forward.ForwardState(
            np.full(nv, T0), np.full(nv, T0), np.zeros(2 * nv), np.zeros(nv)
        )
        qt = forward.eval_QT(state, uniform_phi(lmesh, 0.3), lctx)
        bc = lctx.params.bc
        expected = 0.0
        for tag, amb in ((BoundaryTag.OUTER, bc.T_hot), (BoundaryTag.INNER, bc.T_cold)):
            # phi_s + phi_f = 1 collapses the phase sum
            expected += lmesh.boundary_length(tag) * (0.5 * T0 + amb) * T0
        assert qt == pytest.approx(expected, rel=1e-12)

    def test_qt_interior_quadratic_scaling(self, lmesh, lctx):
        rng = np.random.default_rng(1)
        nv = lmesh.num_vertices
        T_s = rng.standard_normal(nv)
        T_f = rng.standard_normal(nv)
        phi = uniform_phi(lmesh, 0.4)

        def interior(Ts, Tf):
            K_s = fem.assemble_weighted_stiffness(
                lmesh, phi.phi_s * lctx.params.kappa_s
            )
            K_f = fem.assemble_weighted_stiffness(
                lmesh, phi.phi_f * lctx.params.kappa_f
            )
            return 0.5 * (Ts @ (K_s @ Ts) + Tf @ (K_f @ Tf))

        assert interior(3.0 * T_s, 3.0 * T_f) == pytest.approx(
            9.0 * interior(T_s, T_f), rel=1e-12
        )

    def test_qm_zero_displacement(self, lmesh, lctx):
        nv = lmesh.num_vertices
        state = forward.ForwardState(
            np.zeros(nv), np.zeros(nv), np.zeros(2 * nv), np.zeros(nv)
        )
        assert forward.eval_QM(state, lctx) == 0.0

    def test_qm_work_energy_identity(self, lmesh, lctx):
        # at phi = 0.5 the coupling vanishes: <T', eps> = -<t, u>, so
        # Q_M = 0.5 <T', eps> + <t, u> = 0.5 <t, u>
        ws = ForwardWorkspace(lctx, uniform_phi(lmesh, 0.5))
        u = ws.state.u_s
        strain_energy = u @ (lctx.elasticity @ u)
        work = lctx.traction_pairing @ u
        assert strain_energy == pytest.approx(-work, rel=1e-9)
        assert ws.qoi_mechanical() == pytest.approx(0.5 * work, rel=1e-9)

    def test_qm_quadratic_scaling(self, lmesh, lctx):
        rng = np.random.default_rng(2)
        nv = lmesh.num_vertices
        u = rng.standard_normal(2 * nv)
        state1 = forward.ForwardState(np.zeros(nv), np.zeros(nv), u, np.zeros(nv))
        state2 = forward.ForwardState(np.zeros(nv), np.zeros(nv), 2.0 * u, np.zeros(nv))
        e1 = forward.eval_QM(state1, lctx) - lctx.traction_pairing @ u
        e2 = forward.eval_QM(state2, lctx) - lctx.traction_pairing @ (2.0 * u)
        assert e2 == pytest.approx(4.0 * e1, rel=1e-12)


class TestEvalQ:
    def test_beta_zero_is_minus_qt(self, lmesh):
        params = ModelParams(beta_M=0.0)
        ctx = ForwardContext(lmesh, params)
        d = np.full(lmesh.num_vertices, 0.5)
        m = np.zeros(lmesh.num_vertices)
        phi = porosity_map(d, m)
        ws = ForwardWorkspace(ctx, phi)
        assert forward.eval_Q(d, m, ctx) == pytest.approx(-ws.qoi_thermal(), rel=1e-12)

    def test_continuity_in_m(self, lmesh, lctx):
        rng = np.random.default_rng(3)
        nv = lmesh.num_vertices
        d = np.full(nv, 0.5)
        m = np.zeros(nv)
        v = rng.standard_normal(nv)
        v /= np.abs(v).max()
        q0 = forward.eval_Q(d, m, lctx)
        diffs = [
            abs(forward.eval_Q(d, m + eps * v, lctx) - q0)
            for eps in (1e-2, 1e-3, 1e-4)
        ]
        assert diffs[0] > diffs[1] > diffs[2]
        assert diffs[2] <= 1e-3 * max(1.0, abs(q0))

    def test_deterministic(self, lmesh, lctx):
        nv = lmesh.num_vertices
        d = np.full(nv, 0.4)
        m = np.full(nv, 0.01)
        assert forward.eval_Q(d, m, lctx) == forward.eval_Q(d, m, lctx)
