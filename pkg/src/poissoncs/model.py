"""Poisson observation model ``y ~ Poisson(T A f)``."""
from dataclasses import dataclass, field, asdict
from typing import NamedTuple

import numpy as np

from ._rng import _MASK64, make_rng
from .errors import ConfigurationError, ModelError

RANGE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Observation:
    y: np.ndarray = field(repr=False)
    T: float
    seed: int | None = None

    @property
    def n(self):
        return self.y.shape[0]


def _entries(A):
    return np.asarray(getattr(A, "entries", A), dtype=float)


def poisson_means(A, f, T):
    if not T > 0:
        raise ConfigurationError(f"intensity T must be positive, got {T}")
    mu = T * (_entries(A) @ np.asarray(f, dtype=float))
    if np.any(mu < 0) or not np.all(np.isfinite(mu)):
        raise ModelError("Poisson mean T*A*f has negative or non-finite entries")
    return mu


def sample_observation(A, f, T, seed):
    """Draw independent counts ``y_i ~ Poisson(T (A f)_i)``.

    Count ``i`` comes from its own stream, the ``i``-th child of
    ``SeedSequence(seed)``, so each value depends only on ``(seed, i)`` and
    not on evaluation order.  Sampling is exact at every mean (numpy's
    inversion method below 10 and transformed rejection above), never a
    normal approximation.
    """
    mu = poisson_means(A, f, T)
    root = np.random.SeedSequence(int(seed) & _MASK64)
    y = np.fromiter(
        (np.random.Generator(np.random.PCG64(child)).poisson(m) for child, m in zip(root.spawn(mu.size), mu)),
        dtype=np.int64,
        count=mu.size,
    )
    y.setflags(write=False)
    return Observation(y=y, T=float(T), seed=seed)


class MeanRange(NamedTuple):
    min_mean: float
    max_mean: float
    in_range: bool
    preconditions_ok: bool


def mean_range(A, f):
    """Range of ``A f``; for physical A and flux-normalised f it sits in
    ``[1/(2n), 1/n]``.  A precondition failure is reported, not raised."""
    M = _entries(A)
    f = np.asarray(f, dtype=float)
    n = M.shape[0]
    m = M @ f
    pre_ok = bool(f.min() >= -RANGE_TOL and abs(f.sum() - 1.0) <= 1e-10)
    lo, hi = float(m.min()), float(m.max())
    ok = lo >= 1.0 / (2 * n) - RANGE_TOL and hi <= 1.0 / n + RANGE_TOL
    return MeanRange(lo, hi, bool(ok), pre_ok)


@dataclass
class VarianceReport:
    empirical: np.ndarray = field(repr=False)
    predicted: np.ndarray = field(repr=False)
    alpha: np.ndarray = field(repr=False)
    max_rel_error: float
    n_draws: int
    tolerance: float = 0.15

    @property
    def passed(self):
        return self.max_rel_error <= self.tolerance

    def to_dict(self):
        return {
            "max_rel_error": self.max_rel_error,
            "n_draws": self.n_draws,
            "tolerance": self.tolerance,
            "alpha_min": float(self.alpha.min()),
            "alpha_max": float(self.alpha.max()),
            "passed": self.passed,
        }


def noise_equivalence_check(A, f, T, n_draws=10_000, seed=0, tolerance=0.15):
    """Compare the variance of ``(n/T) y_i`` against ``alpha_i n / T``.

    ``alpha_i = n (A f)_i`` lies in ``[1/2, 1]`` for physical inputs.
    """
    M = _entries(A)
    n = M.shape[0]
    mu = poisson_means(M, f, T)
    rng = make_rng(seed)
    draws = rng.poisson(mu, size=(int(n_draws), n)) * (n / T)
    emp = draws.var(axis=0, ddof=1)
    alpha = n * mu / T
    pred = alpha * n / T
    rel = float(np.max(np.abs(emp / pred - 1.0)))
    return VarianceReport(emp, pred, alpha, rel, int(n_draws), tolerance)
