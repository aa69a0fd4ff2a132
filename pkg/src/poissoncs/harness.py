"""Monte Carlo sweeps over (n, T, q), single trials, and the verification suite."""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from functools import lru_cache
import json
import math
from pathlib import Path
import warnings

import numpy as np

from ._rng import derive_seed, make_rng
from .basis import KINDS, build_basis
from .errors import ConfigurationError, ConstructionError, PoissonCSError
from .model import mean_range, sample_observation
from .sensing import (
    embed_physical,
    estimate_upper_rip,
    re_margin,
    sample_bernoulli_ensemble,
    sample_uniform_ensemble,
    verify_physical,
)
from .signal import SignalSpec, check_membership, generate_signal
from .solver import (
    ReducedProblem,
    SolverConfig,
    cross_validate,
    fit_lasso,
    fit_poisson_mle_l1,
    fit_weighted_lasso,
    gradient_bound_frequency,
    gradient_smooth,
    objective,
    poisson_gradient,
    poisson_lambda_scale,
    poisson_objective,
    rip_constant_M,
    theoretical_lambda,
)
from .theory import build_packing, column_energy_check, effective_sparsity, kl_poisson_check, mgf_bound_check

AXES = ("n", "T", "q")
SOLVERS = ("lasso", "wlasso", "poisson_like")
STRATEGIES = ("theoretical", "cv", "fixed")
DEFAULT_FIXED = {"p": 256, "n": 400, "T": 1e7, "q": 0.5, "R_q": 2.0, "basis": "dct", "a_lo": -1.0, "a_hi": 1.0}

# sub-stream tags under a trial seed
_MATRIX, _SIGNAL, _OBS, _RIP, _CV = range(1, 6)


@dataclass(frozen=True)
class SweepConfig:
    """One experiment: a grid along ``axis`` with everything else in ``fixed``.

    ``lambda_strategy`` is ``"theoretical"`` (tuning rule with the sampled
    RIP constant), ``"cv"`` (k-fold over 20 log-spaced values in
    ``[lam_n/30, 30 lam_n]``) or ``"fixed"`` (``lambda_value``).  Lambdas
    are on the least-squares scale; the Poisson solver rescales them by
    :func:`poissoncs.solver.poisson_lambda_scale`.
    """

    axis: str
    grid: tuple
    fixed: dict = field(default_factory=dict)
    trials: int = 10
    folds: int = 5
    lambda_strategy: str = "theoretical"
    lambda_value: float | None = None
    solvers: tuple = ("lasso",)
    weights_source: str | None = None
    seed: int = 0
    rip_trials: int = 500
    tol: float = 1e-8
    max_iter: int = 50_000

    def __post_init__(self):
        if self.axis not in AXES:
            raise ConfigurationError(f"axis must be one of {AXES}, got {self.axis!r}")
        if len(self.grid) == 0:
            raise ConfigurationError("grid must be non-empty")
        if self.axis in self.fixed:
            raise ConfigurationError(f"axis {self.axis!r} must not also appear in fixed")
        unknown = set(self.fixed) - set(DEFAULT_FIXED)
        if unknown:
            raise ConfigurationError(f"unknown fixed parameters {sorted(unknown)}")
        if self.trials < 1:
            raise ConfigurationError("trials must be >= 1")
        if self.folds < 2:
            raise ConfigurationError("folds must be >= 2")
        if self.lambda_strategy not in STRATEGIES:
            raise ConfigurationError(f"lambda_strategy must be one of {STRATEGIES}")
        if self.lambda_strategy == "fixed" and (self.lambda_value is None or not self.lambda_value >= 0):
            raise ConfigurationError("fixed lambda strategy needs a non-negative lambda_value")
        if not self.solvers or any(s not in SOLVERS for s in self.solvers):
            raise ConfigurationError(f"solvers must be a non-empty subset of {SOLVERS}")
        if self.params()["basis"] not in KINDS:
            raise ConfigurationError(f"unknown basis {self.params()['basis']!r}")
        object.__setattr__(self, "grid", tuple(self.grid))
        object.__setattr__(self, "solvers", tuple(self.solvers))

    def params(self, axis_value=None):
        """Fixed parameters with defaults filled in and the axis set."""
        out = dict(DEFAULT_FIXED)
        out.update(self.fixed)
        if axis_value is not None:
            out[self.axis] = axis_value
        out["p"] = int(out["p"])
        out["n"] = int(out["n"])
        return out

    def to_dict(self):
        d = asdict(self)
        d["grid"] = list(self.grid)
        d["solvers"] = list(self.solvers)
        return d

    @classmethod
    def from_dict(cls, doc):
        doc = dict(doc)
        strat = doc.get("lambda_strategy", "theoretical")
        if isinstance(strat, dict) and "fixed" in strat:
            doc["lambda_strategy"], doc["lambda_value"] = "fixed", float(strat["fixed"])
        elif isinstance(strat, str) and strat.startswith("fixed(") and strat.endswith(")"):
            doc["lambda_strategy"], doc["lambda_value"] = "fixed", float(strat[6:-1])
        known = set(cls.__dataclass_fields__)
        extra = set(doc) - known
        if extra:
            raise ConfigurationError(f"unknown config fields {sorted(extra)}")
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from exc

    @classmethod
    def from_json(cls, path):
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(doc)


TRIAL_FIELDS = ("axis_idx", "axis_value", "trial_idx", "solver", "seed", "mse", "lam", "iterations",
                "converged", "kkt_residual", "delta_hat", "K_tilde", "lambda_strategy")


@dataclass(frozen=True)
class TrialRecord:
    axis_idx: int
    axis_value: float
    trial_idx: int
    solver: str
    seed: int
    mse: float
    lam: float
    iterations: int
    converged: bool
    kkt_residual: float
    delta_hat: float
    K_tilde: int
    lambda_strategy: str

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class SweepRecord:
    axis: str
    axis_value: float
    solver: str
    mean_mse: float
    std_mse: float
    trials: int
    mean_lambda: float
    mean_iterations: float

    def to_dict(self):
        return asdict(self)


@lru_cache(maxsize=16)
def _basis(kind, p):
    return build_basis(kind, p)


def load_weights(path, size):
    """Whitespace- or comma-separated positive weights, one per reduced coordinate."""
    try:
        text = Path(path).read_text().replace(",", " ")
    except OSError as exc:
        raise ConfigurationError(f"cannot read weights file {path}: {exc}") from exc
    w = np.array([float(v) for v in text.split()])
    if w.shape != (size,):
        raise ConfigurationError(f"weights file has {w.size} values, expected {size}")
    return w


def _cast_axis(axis, value):
    return int(value) if axis == "n" else float(value)


def run_single_trial(config, axis_value, trial_idx, axis_idx=None):
    """Simulate one instance and fit every requested solver on it.

    Returns one :class:`TrialRecord` per solver.  The trial seed is
    ``derive_seed(config.seed, axis_idx, trial_idx)`` where ``axis_idx``
    defaults to the position of ``axis_value`` in ``config.grid``.
    """
    if axis_idx is None:
        matches = [i for i, v in enumerate(config.grid) if v == axis_value]
        if not matches:
            raise ConfigurationError(f"axis value {axis_value!r} not in grid")
        axis_idx = matches[0]
    axis_value = _cast_axis(config.axis, axis_value)
    P = config.params(axis_value)
    seed = derive_seed(config.seed, axis_idx, trial_idx)
    try:
        return _trial(config, P, axis_idx, axis_value, trial_idx, seed)
    except PoissonCSError as exc:
        raise type(exc)(f"trial (axis_idx={axis_idx}, trial_idx={trial_idx}, seed={seed}): {exc}") from exc


def _trial(config, P, axis_idx, axis_value, trial_idx, seed):
    p, n, T, q, R_q = P["p"], P["n"], float(P["T"]), float(P["q"]), float(P["R_q"])
    basis = _basis(P["basis"], p)
    if (P["a_lo"], P["a_hi"]) != (-1.0, 1.0):
        raw = sample_uniform_ensemble(n, p, P["a_lo"], P["a_hi"], derive_seed(seed, _MATRIX))
    else:
        raw = sample_bernoulli_ensemble(n, p, derive_seed(seed, _MATRIX))
    A = embed_physical(raw)
    truth = generate_signal(SignalSpec(p, q, R_q, basis, derive_seed(seed, _SIGNAL)))
    obs = sample_observation(A, truth.f, T, derive_seed(seed, _OBS))
    problem = ReducedProblem(obs.y, A, basis, T)

    K = min(effective_sparsity(R_q, q, p, T), p // 2)
    delta_hat = float("nan")
    lam_n = None
    if config.lambda_strategy in ("theoretical", "cv"):
        delta_hat = estimate_upper_rip(raw, basis, K, n_trials=config.rip_trials, seed=derive_seed(seed, _RIP))
        lam_n = theoretical_lambda(T, p, delta_hat, P["a_lo"], P["a_hi"])

    weights = None
    if config.weights_source:
        weights = load_weights(config.weights_source, p - 1)
    solver_cfg = SolverConfig(max_iter=config.max_iter, tol=config.tol)

    out = []
    for name in config.solvers:
        w = weights if name in ("wlasso", "poisson_like") else None
        if name == "wlasso" and w is None:
            w = np.ones(p - 1)
        if config.lambda_strategy == "theoretical":
            lam = lam_n
        elif config.lambda_strategy == "fixed":
            lam = float(config.lambda_value)
        else:
            grid = np.geomspace(lam_n / 30.0, 30.0 * lam_n, 20)
            lam, _ = cross_validate(problem, grid, folds=config.folds, seed=derive_seed(seed, _CV),
                                    solver=name, weights=w, config=solver_cfg)
        if name == "lasso":
            res = fit_lasso(problem, lam, solver_cfg)
        elif name == "wlasso":
            res = fit_weighted_lasso(problem, lam, w, solver_cfg, solver_name="wlasso")
        else:
            res = fit_poisson_mle_l1(problem, lam * poisson_lambda_scale(problem), solver_cfg, weights=w)
        err = res.f_hat - truth.f
        out.append(TrialRecord(
            axis_idx=axis_idx, axis_value=axis_value, trial_idx=trial_idx, solver=name, seed=seed,
            mse=float(err @ err), lam=float(lam), iterations=int(res.iterations), converged=bool(res.converged),
            kkt_residual=float(res.kkt_residual), delta_hat=float(delta_hat), K_tilde=int(K),
            lambda_strategy=config.lambda_strategy,
        ))
    return out


def aggregate(config, trials):
    """Mean/std (ddof=1, 0 for a single trial) per (grid point, solver)."""
    order = {s: i for i, s in enumerate(config.solvers)}
    groups = {}
    for t in trials:
        groups.setdefault((t.axis_idx, order[t.solver]), []).append(t)
    records = []
    for key in sorted(groups):
        g = sorted(groups[key], key=lambda t: t.trial_idx)
        mse = np.array([t.mse for t in g])
        records.append(SweepRecord(
            axis=config.axis,
            axis_value=g[0].axis_value,
            solver=g[0].solver,
            mean_mse=float(mse.mean()),
            std_mse=float(mse.std(ddof=1)) if mse.size > 1 else 0.0,
            trials=len(g),
            mean_lambda=float(np.mean([t.lam for t in g])),
            mean_iterations=float(np.mean([t.iterations for t in g])),
        ))
    return records


def run_sweep(config, workers=1, return_trials=False):
    """Run every (grid point, trial) and aggregate.

    Trials run on a thread pool of size ``workers``; results are sorted by
    (axis index, trial index, solver) before aggregation so the output does
    not depend on scheduling.
    """
    tasks = [(i, v, t) for i, v in enumerate(config.grid) for t in range(config.trials)]

    def job(task):
        i, v, t = task
        return run_single_trial(config, v, t, axis_idx=i)

    if workers <= 1:
        results = [job(task) for task in tasks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, tasks))
    order = {s: i for i, s in enumerate(config.solvers)}
    trials = sorted((r for batch in results for r in batch), key=lambda r: (r.axis_idx, r.trial_idx, order[r.solver]))
    records = aggregate(config, trials)
    return (records, trials) if return_trials else records


# -- presets ------------------------------------------------------------------

_FIG_FIXED = {"p": 1024, "R_q": 7.0, "q": 0.5, "T": 1e8, "n": 1000, "basis": "dct"}


def _preset(axis, grid, basis="dct"):
    fixed = {k: v for k, v in _FIG_FIXED.items() if k != axis}
    fixed["basis"] = basis
    return SweepConfig(axis=axis, grid=tuple(grid), fixed=fixed, trials=10, lambda_strategy="cv",
                       solvers=SOLVERS)


PRESETS = {
    "fig1": lambda: _preset("n", (250, 500, 750, 1000, 1500, 2000)),
    "fig1_dwt": lambda: _preset("n", (250, 500, 750, 1000, 1500, 2000), basis="dwt_haar"),
    "fig2": lambda: _preset("T", (1e6, 1e7, 1e8, 1e9, 1e10)),
    "fig3": lambda: _preset("q", (0.2, 0.4, 0.5, 0.6, 0.8)),
}


def preset(name):
    try:
        return PRESETS[name]()
    except KeyError:
        raise ConfigurationError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


# -- verification suite ---------------------------------------------------------

@dataclass
class VerifyItem:
    name: str
    passed: bool
    measured: dict

    def to_dict(self):
        return asdict(self)


@dataclass
class VerifyReport:
    items: list
    seed: int
    params: dict

    @property
    def passed(self):
        return all(item.passed for item in self.items)

    def item(self, name):
        for it in self.items:
            if it.name == name:
                return it
        raise KeyError(name)

    def to_dict(self):
        return {"passed": self.passed, "seed": self.seed, "params": self.params,
                "items": [it.to_dict() for it in self.items]}


DESK_PARAMS = {"p": 256, "n": 400, "T": 1e7, "q": 0.5, "R_q": 2.0, "basis": "dct"}


def finite_difference_check(n_instances=20, seed=0, p=16, n=24, T=1e3):
    """Worst relative error of both smooth-part gradients against central differences.

    Returns ``(err_quadratic, err_poisson)`` with errors measured as
    ``||g_fd - g|| / ||g||`` over all instances.
    """
    basis = _basis("dct", p)
    worst = [0.0, 0.0]
    for i in range(n_instances):
        s = derive_seed(seed, i)
        A = embed_physical(sample_bernoulli_ensemble(n, p, derive_seed(s, 1)))
        truth = generate_signal(SignalSpec(p, 0.5, 2.0, basis, derive_seed(s, 2)))
        obs = sample_observation(A, truth.f, T, derive_seed(s, 3))
        prob = ReducedProblem(obs.y, A, basis, T)
        x = truth.theta_bar * make_rng(s, 4).uniform(0.5, 1.5, size=p - 1)
        pairs = (
            (lambda z: objective(z, prob, 0.0), gradient_smooth(x, prob)),
            (lambda z: poisson_objective(z, prob, 0.0), poisson_gradient(x, prob)),
        )
        for j, (fun, g) in enumerate(pairs):
            h = 1e-4 * max(float(np.abs(x).max()), 1e-12)
            fd = np.empty_like(x)
            for k in range(x.size):
                e = np.zeros_like(x)
                e[k] = h
                fd[k] = (fun(x + e) - fun(x - e)) / (2.0 * h)
            worst[j] = max(worst[j], float(np.linalg.norm(fd - g) / np.linalg.norm(g)))
    return worst[0], worst[1]


def _mgf_grid(seed):
    lams = (0.1, 1.0, 10.0, 1e3, 1e5)
    s_grid = np.round(np.arange(0, 101) * 0.01, 2)
    fails = 0
    for lam in lams:
        for s in s_grid:
            mc = 100_000 if round(s * 100) % 10 == 0 else 0
            fails += not mgf_bound_check(lam, float(s), mc_draws=mc, seed=derive_seed(seed, int(lam * 10), int(s * 100)))[3]
    return fails, len(lams) * s_grid.size


def _kl_sample(seed, count=10_000):
    rng = make_rng(seed)
    fails = 0
    for _ in range(count):
        m = int(rng.integers(1, 9))
        c = float(rng.uniform(0.01, 5.0))
        mu2 = c + rng.exponential(2.0, size=m)
        mu1 = rng.uniform(1e-3, 10.0, size=m)
        fails += not kl_poisson_check(mu1, mu2, c)[2]
    return fails, count


def run_verification_suite(params=None, seed=0, physical_matrix=None, gradient_seeds=500, quick=False):
    """Run the inequality and assumption checks on one desk-scale instance.

    Parameters
    ----------
    params : dict, optional
        Overrides for ``p, n, T, q, R_q, basis``; default ``DESK_PARAMS``.
    physical_matrix : array, optional
        Matrix audited by the physical-constraint check instead of the
        generated one; the remaining checks keep using the generated matrix.
    gradient_seeds : int
        Number of noise seeds in the gradient-bound Monte Carlo.
    quick : bool
        Skip the Monte Carlo parts of the MGF and gradient checks and use a
        smaller KL sample, for fast smoke runs.
    """
    P = dict(DESK_PARAMS)
    P.update(params or {})
    p, n, T, q, R_q = int(P["p"]), int(P["n"]), float(P["T"]), float(P["q"]), float(P["R_q"])
    basis = _basis(P["basis"], p)
    raw = sample_bernoulli_ensemble(n, p, derive_seed(seed, _MATRIX))
    A = embed_physical(raw)
    truth = generate_signal(SignalSpec(p, q, R_q, basis, derive_seed(seed, _SIGNAL)))
    items = []

    phys = verify_physical(A if physical_matrix is None else physical_matrix)
    items.append(VerifyItem("physical", phys.passed, phys.to_dict()))

    mr = mean_range(A, truth.f)
    items.append(VerifyItem("mean_range", mr.in_range and mr.preconditions_ok, mr._asdict()))

    mem = check_membership(truth.f, basis, q, R_q)
    items.append(VerifyItem("signal_membership", mem.passed, mem.to_dict()))

    K = min(effective_sparsity(R_q, q, p, T), p // 2)
    delta = estimate_upper_rip(raw, basis, K, n_trials=500, seed=derive_seed(seed, _RIP))
    items.append(VerifyItem("upper_rip", bool(0.0 <= delta < 1.0), {"delta_hat": delta, "K_tilde": K}))

    re_raw = re_margin(math.sqrt(n) * raw.entries, n_samples=2000, seed=derive_seed(seed, 7))
    re_rot = re_margin(math.sqrt(n) * raw.entries, basis.dbar, n_samples=2000, seed=derive_seed(seed, 8))
    items.append(VerifyItem("restricted_eigenvalue", bool(re_raw.c_hat <= 3.0 and re_rot.c_hat <= 3.0),
                            {"c_hat": re_raw.c_hat, "c_hat_rotated": re_rot.c_hat,
                             "worst_margin": re_raw.worst_margin}))

    energy = column_energy_check(A, basis, delta)
    items.append(VerifyItem("column_energy", energy.passed, energy.to_dict()))

    if quick:
        lams = (0.1, 1.0, 10.0, 1e3, 1e5)
        fails = sum(not mgf_bound_check(l, s / 100, mc_draws=0)[3] for l in lams for s in range(101))
        total = 505
    else:
        fails, total = _mgf_grid(derive_seed(seed, 9))
    items.append(VerifyItem("mgf_bound", fails == 0, {"violations": fails, "grid_points": total}))

    fails, total = _kl_sample(derive_seed(seed, 10), 1000 if quick else 10_000)
    items.append(VerifyItem("kl_bound", fails == 0, {"violations": fails, "samples": total}))

    pk = {}
    ok = True
    for k in (2, 4):
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                ps = build_packing(32, k, _basis("dct", 32), R_q, q, seed=derive_seed(seed, 11, k))
            pk[f"k{k}"] = ps.verified
        except ConstructionError as exc:
            ok = False
            pk[f"k{k}"] = {"error": str(exc), "achieved": exc.achieved}
    items.append(VerifyItem("packing", ok, pk))

    eq, ep = finite_difference_check(n_instances=5 if quick else 20, seed=derive_seed(seed, 12))
    items.append(VerifyItem("gradient_fd", bool(eq < 1e-6 and ep < 1e-6), {"quadratic": eq, "poisson": ep}))

    M = rip_constant_M(delta)
    n_seeds = 50 if quick else gradient_seeds
    freq, stats = gradient_bound_frequency(A, basis, truth.theta, T, M,
                                           [derive_seed(seed, 13, i) for i in range(n_seeds)])
    limit = 2.0 / (p - 1) + 0.02
    items.append(VerifyItem("gradient_bound", freq <= limit,
                            {"frequency": freq, "limit": limit, "seeds": n_seeds,
                             "median_statistic": float(np.median(stats)),
                             "bound": math.sqrt(32.0 * M * math.log(p) / T)}))
    return VerifyReport(items=items, seed=seed, params=P)
