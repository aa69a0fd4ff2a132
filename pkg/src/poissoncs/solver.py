"""Pinned-coordinate Lasso, weighted Lasso and l1-penalised Poisson likelihood.

All three estimators work on the reduced (p-1)-dimensional coefficient
vector ``theta_bar``: the first basis coefficient is fixed at ``1/sqrt(p)``
by the flux normalisation and enters only through the offset ``b``.

The optimiser is a monotone FISTA (MFISTA) with backtracking.  The
Lipschitz constant is never assumed known; a step that fails the
sufficient-decrease test doubles the curvature estimate, and a step that
would raise the objective is rejected and the momentum restarted.
Iteration stops when the KKT residual
``max_j dist(-grad_j, lam w_j d|theta_j|)`` drops below ``tol``.
"""
from dataclasses import dataclass, field
import math

import numpy as np

from ._rng import make_rng
from .basis import OrthonormalBasis
from .errors import ConfigurationError, NumericalError
from .model import sample_observation


@dataclass(frozen=True)
class SolverConfig:
    """Stopping and line-search parameters.

    ``initial_step`` is the first trial step (1/L).  ``None`` estimates it
    from a gradient difference at the starting point.  ``shrink`` multiplies
    the step after every failed sufficient-decrease test.
    """

    max_iter: int = 50_000
    tol: float = 1e-8
    initial_step: float | None = None
    shrink: float = 0.5
    record_history: bool = False

    def __post_init__(self):
        if not self.tol > 0:
            raise ConfigurationError("tol must be positive")
        if self.max_iter < 1:
            raise ConfigurationError("max_iter must be >= 1")
        if not 0 < self.shrink < 1:
            raise ConfigurationError("shrink must lie in (0, 1)")
        if self.initial_step is not None and not self.initial_step > 0:
            raise ConfigurationError("initial_step must be positive")


class ReducedProblem:
    """Data of one fit with the pinned coordinate eliminated.

    Parameters
    ----------
    y : array (n,)
        Observed counts.
    A : SensingMatrix or array (n, p)
    basis : OrthonormalBasis
    T : float
        Intensity.
    scale : float, optional
        The factor ``n`` in ``(n/T^2) ||y - T A D theta||^2``.  Defaults to
        the number of rows; sub-problems built by :meth:`subset` keep the
        parent's value so that the loss stays on the same scale.
    """

    def __init__(self, y, A, basis, T, scale=None):
        if not T > 0:
            raise ConfigurationError(f"intensity T must be positive, got {T}")
        self.y = np.asarray(y, dtype=float)
        self.A = np.asarray(getattr(A, "entries", A), dtype=float)
        if not isinstance(basis, OrthonormalBasis):
            raise ConfigurationError("basis must be an OrthonormalBasis")
        n, p = self.A.shape
        if self.y.shape != (n,) or basis.p != p:
            raise ConfigurationError(f"inconsistent shapes: y {self.y.shape}, A {self.A.shape}, basis p={basis.p}")
        self.basis = basis
        self.T = float(T)
        self.scale = float(n if scale is None else scale)
        self.b = self.T * (self.A @ basis.d1) / math.sqrt(p)
        self.phi = self.T * (self.A @ basis.dbar)
        self.target = self.y - self.b

    @classmethod
    def from_observation(cls, A, observation, basis):
        return cls(observation.y, A, basis, observation.T)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def p(self):
        return self.basis.p

    def subset(self, rows):
        rows = np.asarray(rows)
        return ReducedProblem(self.y[rows], self.A[rows], self.basis, self.T, scale=self.scale)

    def full_theta(self, theta_bar):
        theta = np.empty(self.p)
        theta[0] = 1.0 / math.sqrt(self.p)
        theta[1:] = theta_bar
        return theta

    def _check(self, theta_bar):
        theta_bar = np.asarray(theta_bar, dtype=float)
        if theta_bar.shape != (self.p - 1,):
            raise ConfigurationError(f"theta_bar has shape {theta_bar.shape}, expected ({self.p - 1},)")
        return theta_bar


@dataclass(eq=False)
class EstimateResult:
    theta_hat: np.ndarray = field(repr=False)
    f_hat: np.ndarray = field(repr=False)
    lam: float
    objective: float
    iterations: int
    converged: bool
    kkt_residual: float
    solver: str = "lasso"
    history: list = field(default_factory=list, repr=False)

    def to_dict(self):
        return {
            "solver": self.solver,
            "lambda": self.lam,
            "objective": self.objective,
            "iterations": self.iterations,
            "kkt_residual": self.kkt_residual,
            "converged": self.converged,
        }


def _weights(weights, size):
    if weights is None:
        return np.ones(size)
    w = np.asarray(weights, dtype=float)
    if w.shape != (size,):
        raise ConfigurationError(f"weights have shape {w.shape}, expected ({size},)")
    if np.any(~(w > 0)):
        raise ConfigurationError("weights must be positive")
    return w


def _penalty(x, lam_w):
    nz = x != 0
    return float(np.sum(lam_w[nz] * np.abs(x[nz])))


def objective(theta_bar, problem, lam, weights=None):
    """Penalised least-squares objective in the original scaling.

    ``(n/T^2) ||y - b - Phi theta_bar||^2 + lam (1/sqrt(p) + sum_j w_j |theta_bar_j|)``;
    the constant ``lam/sqrt(p)`` from the pinned coordinate is included.
    """
    x = problem._check(theta_bar)
    w = _weights(weights, x.size)
    r = problem.target - problem.phi @ x
    quad = problem.scale / problem.T ** 2 * float(r @ r)
    return quad + lam / math.sqrt(problem.p) + _penalty(x, lam * w)


def gradient_smooth(theta_bar, problem):
    """Gradient of the least-squares part: ``-(2n/T^2) Phi^T (y - b - Phi theta_bar)``."""
    x = problem._check(theta_bar)
    r = problem.target - problem.phi @ x
    return -2.0 * problem.scale / problem.T ** 2 * (problem.phi.T @ r)


def soft_threshold(v, tau):
    """Elementwise ``sign(v) max(|v| - tau, 0)``; ``tau`` may be a vector."""
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise ConfigurationError("threshold must be non-negative")
    v = np.asarray(v, dtype=float)
    with np.errstate(invalid="ignore"):
        out = np.sign(v) * np.maximum(np.abs(v) - tau, 0.0)
    return out


def kkt_residual(x, grad, lam_w):
    """``max_j dist(-grad_j, lam_w_j * subdifferential of |x_j|)``."""
    nz = x != 0
    r = np.empty_like(x)
    r[nz] = np.abs(grad[nz] + lam_w[nz] * np.sign(x[nz]))
    r[~nz] = np.maximum(np.abs(grad[~nz]) - lam_w[~nz], 0.0)
    return float(r.max()) if r.size else 0.0


# Smooth parts.  ``evaluate`` returns a state (value, grad, aux, x) with
# value = inf outside the domain.  ``bregman`` returns
# f(z) - f(y) - grad(y).(z - y) from Phi (z - y) directly, so near the
# optimum the line search and the monotonicity test are not swamped by
# the rounding of two large, nearly equal function values.

class _LeastSquares:
    def __init__(self, problem):
        self.problem = problem
        self.c = 2.0 * problem.scale / problem.T ** 2

    def evaluate(self, x, need_grad=True):
        P = self.problem
        r = P.target - P.phi @ x
        val = 0.5 * self.c * float(r @ r)
        g = -self.c * (P.phi.T @ r) if need_grad else None
        return val, g, r, x

    def bregman(self, sz, sy):
        d = self.problem.phi @ (sz[3] - sy[3])
        return 0.5 * self.c * float(d @ d)


class _PoissonLikelihood:
    def __init__(self, problem):
        self.problem = problem

    def evaluate(self, x, need_grad=True):
        P = self.problem
        mu = P.b + P.phi @ x
        if np.any(mu <= 0) or not np.all(np.isfinite(mu)):
            return math.inf, None, mu, x
        val = float(np.sum(mu - P.y * np.log(mu)))
        g = P.phi.T @ (1.0 - P.y / mu) if need_grad else None
        return val, g, mu, x

    def bregman(self, sz, sy):
        if not math.isfinite(sz[0]):
            return math.inf
        u = (self.problem.phi @ (sz[3] - sy[3])) / sy[2]
        return float(self.problem.y @ _u_minus_log1p(u))


def _gap(smooth, sz, sy):
    """f(z) - f(y)."""
    return float(sy[1] @ (sz[3] - sy[3])) + smooth.bregman(sz, sy)


def _u_minus_log1p(u):
    out = np.empty_like(u)
    small = np.abs(u) < 1e-3
    us = u[small]
    out[small] = us * us * (0.5 - us * (1.0 / 3.0 - us * (0.25 - us * (0.2 - us / 6.0))))
    ub = u[~small]
    out[~small] = ub - np.log1p(ub)
    return out


def _initial_curvature(smooth, x0, s0):
    g0 = s0[1]
    gnorm = float(np.linalg.norm(g0))
    if gnorm == 0:
        return 1.0
    h = 1e-6 * max(1.0, float(np.linalg.norm(x0))) / gnorm
    for _ in range(30):
        s1 = smooth.evaluate(x0 - h * g0)
        if math.isfinite(s1[0]):
            L = float(np.linalg.norm(s1[1] - g0)) / (h * gnorm)
            if L > 0 and math.isfinite(L):
                return L
            return 1.0
        h *= 0.1
    return 1.0


def _mfista(smooth, lam_w, x0, config, tol):
    x = np.array(x0, dtype=float)
    sx = smooth.evaluate(x)
    if not math.isfinite(sx[0]):
        raise ConfigurationError("starting point lies outside the domain of the objective")
    pen_x = _penalty(x, lam_w)
    history = [sx[0] + pen_x] if config.record_history else []
    kkt = kkt_residual(x, sx[1], lam_w)
    if kkt <= tol:
        return x, sx, kkt, 0, True, history

    L = 1.0 / config.initial_step if config.initial_step else _initial_curvature(smooth, x, sx)
    grow = 1.0 / config.shrink
    y, sy = x, sx
    x_prev = x
    t = 1.0
    rejects = 0
    converged = False
    it = 0
    for it in range(1, config.max_iter + 1):
        while True:
            z = soft_threshold(y - sy[1] / L, lam_w / L)
            sz = smooth.evaluate(z)
            d = z - y
            if math.isfinite(sz[0]) and smooth.bregman(sz, sy) <= 0.5 * L * float(d @ d) * (1.0 + 1e-12):
                break
            L *= grow
            if not math.isfinite(L) or L > 1e300:
                raise NumericalError("line search failed: curvature estimate overflowed")

        pen_z = _penalty(z, lam_w)
        dF = _gap(smooth, sz, sx) + pen_z - pen_x
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        if dF <= 0:
            x_prev, x, sx, pen_x = x, z, sz, pen_z
            rejects = 0
            y = x + ((t - 1.0) / t_new) * (x - x_prev)
            t = t_new
        else:
            # objective went up: restart momentum from the best point
            rejects += 1
            y, t = x, 1.0
            if rejects > 3:
                break
        if not math.isfinite(sx[0]):
            raise NumericalError("objective became non-finite")
        if config.record_history:
            history.append(sx[0] + pen_x)

        kkt = kkt_residual(x, sx[1], lam_w)
        if kkt <= tol:
            converged = True
            break
        if y is x:
            sy = sx
        else:
            sy = smooth.evaluate(y)
            if not math.isfinite(sy[0]):
                y, sy, t = x, sx, 1.0
    return x, sx, kkt, it, converged, history


def _result(problem, x, lam, obj, it, converged, kkt, solver, history):
    theta = problem.full_theta(x)
    return EstimateResult(
        theta_hat=theta,
        f_hat=problem.basis.columns @ theta,
        lam=float(lam),
        objective=float(obj),
        iterations=int(it),
        converged=bool(converged),
        kkt_residual=float(kkt),
        solver=solver,
        history=history,
    )


def fit_weighted_lasso(problem, lam, weights=None, config=None, x0=None, solver_name=None):
    """Minimise ``(n/T^2)||y - TAD theta||^2 + lam sum_j w_j |theta_bar_j|``
    over ``theta`` with ``theta_1 = 1/sqrt(p)``."""
    if not lam >= 0:
        raise ConfigurationError(f"lambda must be non-negative, got {lam}")
    config = config or SolverConfig()
    w = _weights(weights, problem.p - 1)
    lam_w = lam * w
    x_start = np.zeros(problem.p - 1) if x0 is None else problem._check(x0)
    x, sx, kkt, it, conv, hist = _mfista(_LeastSquares(problem), lam_w, x_start, config, config.tol)
    shift = lam / math.sqrt(problem.p)
    obj = sx[0] + shift + _penalty(x, lam_w)
    hist = [h + shift for h in hist]
    name = solver_name or ("lasso" if weights is None else "wlasso")
    return _result(problem, x, lam, obj, it, conv, kkt, name, hist)


def fit_lasso(problem, lam, config=None, x0=None):
    """Pinned-coordinate Lasso (unit weights)."""
    return fit_weighted_lasso(problem, lam, None, config, x0=x0, solver_name="lasso")


def poisson_objective(theta_bar, problem, lam, weights=None):
    """``sum_i [mu_i - y_i log mu_i] + lam sum_j w_j |theta_bar_j|`` with
    ``mu = b + Phi theta_bar``; ``inf`` where some mean is non-positive."""
    x = problem._check(theta_bar)
    w = _weights(weights, x.size)
    val = _PoissonLikelihood(problem).evaluate(x, need_grad=False)[0]
    return val + _penalty(x, lam * w)


def poisson_gradient(theta_bar, problem):
    """Gradient ``Phi^T (1 - y / mu)`` of the Poisson negative log-likelihood."""
    x = problem._check(theta_bar)
    val, g = _PoissonLikelihood(problem).evaluate(x)[:2]
    if not math.isfinite(val):
        raise ConfigurationError("theta_bar gives a non-positive Poisson mean")
    return g


def fit_poisson_mle_l1(problem, lam, config=None, x0=None, weights=None):
    """l1-penalised Poisson maximum likelihood by proximal gradient.

    The line search rejects every trial point with a non-positive mean.
    The likelihood gradient is larger than the least-squares one by roughly
    ``T/(2 alpha)``, so ``config.tol`` is applied relative to
    ``max(1, ||grad(x0)||_inf)``.
    """
    if not lam >= 0:
        raise ConfigurationError(f"lambda must be non-negative, got {lam}")
    config = config or SolverConfig()
    w = _weights(weights, problem.p - 1)
    lam_w = lam * w
    x_start = np.zeros(problem.p - 1) if x0 is None else problem._check(x0)
    smooth = _PoissonLikelihood(problem)
    s0 = smooth.evaluate(x_start)
    if not math.isfinite(s0[0]):
        raise ConfigurationError("infeasible start: some Poisson mean is non-positive")
    tol = config.tol * max(1.0, float(np.abs(s0[1]).max()))
    x, sx, kkt, it, conv, hist = _mfista(smooth, lam_w, x_start, config, tol)
    if not math.isfinite(sx[0]):
        raise NumericalError("Poisson likelihood is non-finite at the final iterate")
    obj = sx[0] + _penalty(x, lam_w)
    return _result(problem, x, lam, obj, it, conv, kkt, "poisson_like", hist)


def theoretical_lambda(T, p, delta, a_lo=-1.0, a_hi=1.0):
    """Tuning rule ``2 sqrt(32 M log p / T)`` with ``M = (1+delta) / (4 (a_hi-a_lo)^2)``."""
    if not T > 0:
        raise ConfigurationError(f"T must be positive, got {T}")
    if p < 2:
        raise ConfigurationError(f"p must be >= 2, got {p}")
    if not a_lo < a_hi:
        raise ConfigurationError(f"need a_lo < a_hi, got ({a_lo}, {a_hi})")
    if not delta >= 0:
        raise ConfigurationError(f"delta must be non-negative, got {delta}")
    M = rip_constant_M(delta, a_lo, a_hi)
    return 2.0 * math.sqrt(32.0 * M * math.log(p) / T)


def rip_constant_M(delta, a_lo=-1.0, a_hi=1.0):
    """``(1 + delta) / (4 (a_hi - a_lo)^2)``."""
    return (1.0 + delta) / (4.0 * (a_hi - a_lo) ** 2)


def poisson_lambda_scale(problem):
    """Ratio between Poisson-likelihood and least-squares gradients near the
    truth, ``T / (2 alpha)`` with ``alpha = n * mean(A 1/p)``.  Multiplying a
    least-squares lambda by it gives a comparable Poisson lambda."""
    alpha = problem.scale * float(np.mean(problem.b)) / problem.T
    return problem.T / (2.0 * alpha)


@dataclass
class BoundReport:
    statistic: float
    bound: float

    @property
    def violated(self):
        return self.statistic > self.bound

    def to_dict(self):
        return {"statistic": self.statistic, "bound": self.bound, "violated": self.violated}


def gradient_bound_check(problem, theta_star, M):
    """Compare ``||(2n/T)(y - T A D theta*)^T A Dbar||_inf`` with ``sqrt(32 M log p / T)``.

    ``theta_star`` may be the full p-vector or its last p-1 entries.
    """
    theta_star = np.asarray(theta_star, dtype=float)
    tb = theta_star[1:] if theta_star.shape == (problem.p,) else theta_star
    stat = float(np.abs(gradient_smooth(tb, problem)).max())
    bound = math.sqrt(32.0 * M * math.log(problem.p) / problem.T)
    return BoundReport(stat, bound)


def gradient_bound_frequency(A, basis, theta_star, T, M, seeds):
    """Fraction of observation seeds on which the gradient bound is violated.

    For each seed, counts are drawn from ``Poisson(T A D theta*)`` and
    :func:`gradient_bound_check` is applied.  Returns ``(frequency, stats)``
    with the per-seed statistics.
    """
    theta_star = np.asarray(theta_star, dtype=float)
    f = basis.synthesize(theta_star)
    stats = []
    bound = None
    for s in seeds:
        obs = sample_observation(A, f, T, s)
        rep = gradient_bound_check(ReducedProblem(obs.y, A, basis, T), theta_star, M)
        stats.append(rep.statistic)
        bound = rep.bound
    stats = np.array(stats)
    if stats.size == 0:
        raise ConfigurationError("need at least one seed")
    return float(np.mean(stats > bound)), stats


def cross_validate(problem, lambda_grid, folds=5, seed=0, solver="lasso", weights=None, config=None):
    """K-fold choice of lambda.

    Rows are shuffled with ``seed`` and cut into ``folds`` contiguous blocks.
    Each lambda is fitted on the training rows and scored on the held-out
    rows by ``(n_val/T^2) ||y_val - T A_val D theta_hat||^2``.  Returns the
    minimiser (smallest lambda among ties) and the mean score per grid entry.
    """
    grid = np.asarray(lambda_grid, dtype=float)
    if grid.size == 0:
        raise ConfigurationError("lambda grid is empty")
    if folds < 2:
        raise ConfigurationError("need at least 2 folds")
    n = problem.n
    if folds > n:
        raise ConfigurationError(f"folds = {folds} exceeds the number of rows n = {n}")
    fitter = _FITTERS.get(solver)
    if fitter is None:
        raise ConfigurationError(f"unknown solver {solver!r}")

    perm = make_rng(seed).permutation(n)
    blocks = np.array_split(perm, folds)
    unique = np.unique(grid)[::-1]
    scores = np.zeros((folds, unique.size))
    for k, val_rows in enumerate(blocks):
        train_rows = np.sort(np.concatenate([b for i, b in enumerate(blocks) if i != k]))
        train = problem.subset(train_rows)
        val = problem.subset(np.sort(val_rows))
        x0 = None
        for j, lam in enumerate(unique):
            lam_fit = lam * poisson_lambda_scale(train) if solver == "poisson_like" else lam
            res = fitter(train, lam_fit, weights, config, x0)
            x0 = res.theta_hat[1:]
            r = val.target - val.phi @ x0
            scores[k, j] = val.n / problem.T ** 2 * float(r @ r)
    mean_unique = scores.mean(axis=0)
    lookup = {float(l): s for l, s in zip(unique, mean_unique)}
    curve = np.array([lookup[float(l)] for l in grid])
    best = curve.min()
    tied = np.flatnonzero(curve == best)
    lam_star = float(grid[tied].min())
    return lam_star, curve


def _fit_lasso_cv(problem, lam, weights, config, x0):
    return fit_lasso(problem, lam, config, x0=x0)


def _fit_wlasso_cv(problem, lam, weights, config, x0):
    return fit_weighted_lasso(problem, lam, weights, config, x0=x0)


def _fit_poisson_cv(problem, lam, weights, config, x0):
    return fit_poisson_mle_l1(problem, lam, config, x0=x0, weights=weights)


_FITTERS = {"lasso": _fit_lasso_cv, "wlasso": _fit_wlasso_cv, "poisson_like": _fit_poisson_cv}
