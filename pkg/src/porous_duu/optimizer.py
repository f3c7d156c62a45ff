"""Bound-constrained limited-memory quasi-Newton minimization on [0, 1]^n.

Projected L-BFGS: the two-loop recursion builds a quasi-Newton direction,
an Armijo backtracking line search evaluates projected trial points, and
curvature pairs are skipped when they would break positive-definiteness.
"""

from dataclasses import dataclass, field

import numpy as np

ARMIJO_C = 1e-4
BACKTRACK_FACTOR = 0.5
MAX_BACKTRACKS = 40
CURVATURE_FLOOR = 1e-12  # skip (s, y) pairs with tiny s.y


@dataclass
class OptimizeOptions:
    max_iters: int = 200
    memory: int = 10
    grad_tol: float = 1e-6  # relative: stop at ||pg|| <= grad_tol (1 + |J|)
    step_tol: float = 1e-12
    lower: float = 0.0
    upper: float = 1.0

    def __post_init__(self):
        if self.memory < 1:
            raise ValueError("L-BFGS memory must be at least 1")
        if self.grad_tol <= 0.0 or self.step_tol <= 0.0:
            raise ValueError("tolerances must be positive")
        if self.lower >= self.upper:
            raise ValueError("lower bound must be below upper bound")


@dataclass
class OptimizeResult:
    d_opt: np.ndarray
    J_history: list
    grad_norm_history: list
    status: str  # Converged | MaxIters | LineSearchFailure
    iterations: int
    step_lengths: list = field(default_factory=list)
    n_active_history: list = field(default_factory=list)
    n_active_bounds: int = 0

    @property
    def converged(self):
        return self.status == "Converged"


def project_box(d, lower=0.0, upper=1.0):
    """Nodewise clamp onto the admissible box."""
    return np.clip(np.asarray(d, dtype=np.float64), lower, upper)


def _projected_gradient(d, g, opts):
    """Gradient with components pointing out of the box at its faces zeroed."""
    pg = g.copy()
    pg[(d <= opts.lower) & (g > 0.0)] = 0.0
    pg[(d >= opts.upper) & (g < 0.0)] = 0.0
    return pg


def _two_loop(g, s_list, y_list):
    q = g.copy()
    alphas = []
    rhos = [1.0 / (y @ s) for s, y in zip(s_list, y_list)]
    for s, y, rho in zip(reversed(s_list), reversed(y_list), reversed(rhos)):
        a = rho * (s @ q)
        alphas.append(a)
        q -= a * y
    if s_list:
        s, y = s_list[-1], y_list[-1]
        q *= (s @ y) / (y @ y)
    for (s, y, rho), a in zip(zip(s_list, y_list, rhos), reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return q


def _line_search(objective, d, J, g, direction, opts, step0=1.0):
    """Armijo backtracking on projected trial points along ``direction``.

    ``objective`` returns J only; the accepted point's gradient is computed
    by the caller so rejected trials stay cheap.
    """
    step = step0
    for _ in range(MAX_BACKTRACKS):
        d_new = project_box(d + step * direction, opts.lower, opts.upper)
        actual = d_new - d
        if np.abs(actual).max() <= opts.step_tol:
            break
        J_new = objective(d_new)
        if J_new <= J + ARMIJO_C * (g @ actual):
            return True, d_new, J_new, step
        step *= BACKTRACK_FACTOR
    return False, d, J, step


def minimize(objective_and_gradient, d0, opts=None, objective=None):
    """Projected L-BFGS with Armijo backtracking on [lower, upper]^n.

    ``objective``, when given, evaluates J without the gradient and is used
    for line-search trial points; otherwise trials pay for the full call.
    """
    opts = opts or OptimizeOptions()
    if objective is None:
        objective = lambda x: objective_and_gradient(x)[0]  # noqa: E731
    d = project_box(d0, opts.lower, opts.upper)
    J, g = objective_and_gradient(d)
    J_history = [float(J)]
    s_list, y_list = [], []
    grad_norm_history = []
    step_lengths = []

    def count_active(x):
        return int(np.sum((x <= opts.lower) | (x >= opts.upper)))

    n_active_history = [count_active(d)]
    status = "MaxIters"
    it = 0
    step0 = 1.0  # warm-started initial trial step, grown after acceptance
    for it in range(1, opts.max_iters + 1):
        pg = _projected_gradient(d, g, opts)
        pg_norm = float(np.linalg.norm(pg))
        grad_norm_history.append(pg_norm)
        if pg_norm <= opts.grad_tol * (1.0 + abs(J)):
            status = "Converged"
            it -= 1
            break

        # build the quasi-Newton direction from the projected gradient so it
        # stays (approximately) in the free subspace of the active bounds
        direction = -_two_loop(pg, s_list, y_list)
        if direction @ pg >= 0.0:  # not a descent direction; reset to steepest
            direction = -pg
            s_list, y_list = [], []

        accepted, d_new, J_new, step = _line_search(
            objective, d, J, g, direction, opts, step0=step0
        )
        if not accepted and s_list:
            # a quasi-Newton direction can lose descent once projected onto
            # the active-bound face; restart from the steepest direction
            s_list, y_list = [], []
            accepted, d_new, J_new, step = _line_search(
                objective, d, J, g, -pg, opts
            )
        if not accepted:
            status = "LineSearchFailure"
            it -= 1
            break

        J_new, g_new = objective_and_gradient(d_new)
        s = d_new - d
        y = g_new - g
        if s @ y > CURVATURE_FLOOR * np.linalg.norm(s) * np.linalg.norm(y):
            s_list.append(s)
            y_list.append(y)
            if len(s_list) > opts.memory:
                s_list.pop(0)
                y_list.pop(0)
        step0 = min(1.0, 4.0 * step)
        d, J, g = d_new, J_new, g_new
        J_history.append(float(J))
        step_lengths.append(step)
        n_active_history.append(count_active(d))
    else:
        # loop exhausted: record the final projected-gradient norm
        pg = _projected_gradient(d, g, opts)
        grad_norm_history.append(float(np.linalg.norm(pg)))

    return OptimizeResult(
        d_opt=d,
        J_history=J_history,
        grad_norm_history=grad_norm_history,
        status=status,
        iterations=it,
        step_lengths=step_lengths,
        n_active_history=n_active_history,
        n_active_bounds=count_active(d),
    )
