import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp
from scipy import optimize as sp_opt

from porous_duu.optimizer import (
    OptimizeOptions,
    OptimizeResult,
    minimize,
    project_box,
)


def quadratic(center):
    center = np.asarray(center, dtype=np.float64)

    def f(d):
        r = d - center
        return float(r @ r), 2.0 * r

    return f


class TestOptions:
    def test_validation(self):
        with pytest.raises(ValueError):
            OptimizeOptions(memory=0)
        with pytest.raises(ValueError):
            OptimizeOptions(grad_tol=0.0)
        with pytest.raises(ValueError):
            OptimizeOptions(lower=1.0, upper=0.0)


class TestProjection:
    def test_clamps(self):
        np.testing.assert_allclose(
            project_box(np.array([-0.3, 0.7, 1.4])), [0.0, 0.7, 1.0]
        )

    @given(
        hnp.arrays(
            np.float64,
            st.integers(1, 20),
            elements=st.floats(-5, 5, allow_nan=False),
        )
    )
    @settings(max_examples=100)
    def test_idempotent(self, d):
        once = project_box(d)
        np.testing.assert_array_equal(project_box(once), once)
        assert once.min() >= 0.0 and once.max() <= 1.0


class TestMinimize:
    def test_quadratic_bowl(self):
        n = 12
        res = minimize(quadratic(np.full(n, 0.5)), np.zeros(n))
        assert res.status == "Converged"
        assert res.iterations <= 30
        np.testing.assert_allclose(res.d_opt, 0.5, atol=1e-6)

    def test_active_upper_bound(self):
        n = 6
        res = minimize(quadratic(np.full(n, 1.5)), np.full(n, 0.2))
        assert res.status == "Converged"
        np.testing.assert_allclose(res.d_opt, 1.0, atol=1e-10)
        assert res.n_active_bounds == n

    def test_rosenbrock_corner(self):
        def rosen(d):
            x, y = d
            f = (1 - x) ** 2 + 100.0 * (y - x * x) ** 2
            g = np.array(
                [
                    -2.0 * (1 - x) - 400.0 * x * (y - x * x),
                    200.0 * (y - x * x),
                ]
            )
            return float(f), g

        res = minimize(
            rosen, np.array([0.2, 0.8]), OptimizeOptions(max_iters=500)
        )
        assert res.J_history[-1] <= 1e-6
        np.testing.assert_allclose(res.d_opt, [1.0, 1.0], atol=1e-3)

    def test_monotone_decrease(self):
        rng = np.random.default_rng(0)
        n = 8
        A = rng.standard_normal((n, n))
        A = A @ A.T + n * np.eye(n)
        b = rng.standard_normal(n)

        def f(d):
            return float(0.5 * d @ (A @ d) - b @ d), A @ d - b

        res = minimize(f, np.full(n, 0.5))
        diffs = np.diff(res.J_history)
        assert np.all(diffs <= 1e-12)

    def test_iterates_respect_bounds(self):
        seen = []

        def f(d):
            seen.append(d.copy())
            r = d - 2.0
            return float(r @ r), 2.0 * r

        minimize(f, np.full(5, 0.9))
        for d in seen:
            assert d.min() >= 0.0 and d.max() <= 1.0

    def test_matches_dense_reference_on_quadratic(self):
        # interior minimum: compare the reached objective against scipy BFGS
        rng = np.random.default_rng(3)
        n = 10
        A = rng.standard_normal((n, n))
        A = A @ A.T + n * np.eye(n)
        center = 0.3 + 0.4 * rng.random(n)
        b = A @ center

        def fg(d):
            return float(0.5 * d @ (A @ d) - b @ d), A @ d - b

        res = minimize(fg, np.full(n, 0.5), OptimizeOptions(grad_tol=1e-10))
        ref = sp_opt.minimize(
            lambda d: fg(d)[0],
            np.full(n, 0.5),
            jac=lambda d: fg(d)[1],
            method="BFGS",
            options={"gtol": 1e-12},
        )
        assert res.J_history[-1] == pytest.approx(ref.fun, abs=1e-8)

    def test_max_iters_status(self):
        res = minimize(
            quadratic(np.full(4, 0.5)),
            np.zeros(4),
            OptimizeOptions(max_iters=1, grad_tol=1e-14),
        )
        assert res.status == "MaxIters"
        assert res.iterations == 1

    def test_result_histories_align(self):
        res = minimize(quadratic(np.full(3, 0.4)), np.zeros(3))
        assert isinstance(res, OptimizeResult)
        assert len(res.J_history) == res.iterations + 1
        assert len(res.step_lengths) == res.iterations
