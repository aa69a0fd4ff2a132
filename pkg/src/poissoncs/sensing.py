"""Raw bounded ensembles, the physical embedding, and empirical design checks."""
from dataclasses import dataclass, field, asdict
import math

import numpy as np

from ._rng import make_rng
from .basis import OrthonormalBasis
from .errors import ConfigurationError

PHYS_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class RawEnsemble:
    """An n x p matrix with entries in ``[a_lo/sqrt(n), a_hi/sqrt(n)]``."""

    entries: np.ndarray = field(repr=False)
    a_lo: float
    a_hi: float
    seed: int | None = None

    @property
    def n(self):
        return self.entries.shape[0]

    @property
    def p(self):
        return self.entries.shape[1]


@dataclass(frozen=True, eq=False)
class SensingMatrix:
    """Physically valid sensing matrix together with the raw ensemble it came from."""

    entries: np.ndarray = field(repr=False)
    raw: RawEnsemble = field(repr=False)

    @property
    def n(self):
        return self.entries.shape[0]

    @property
    def p(self):
        return self.entries.shape[1]

    @property
    def a_lo(self):
        return self.raw.a_lo

    @property
    def a_hi(self):
        return self.raw.a_hi

    @property
    def seed(self):
        return self.raw.seed


def _frozen(a):
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


def sample_bernoulli_ensemble(n, p, seed):
    """Symmetric Bernoulli ensemble: entries are +-1/sqrt(n) with probability 1/2."""
    if n < 1 or p < 1:
        raise ConfigurationError(f"need n, p >= 1, got n={n}, p={p}")
    rng = make_rng(seed)
    signs = rng.integers(0, 2, size=(n, p), dtype=np.int8) * 2 - 1
    return RawEnsemble(_frozen(signs / math.sqrt(n)), -1.0, 1.0, seed)


def sample_uniform_ensemble(n, p, a_lo, a_hi, seed):
    """Entries i.i.d. uniform on ``[a_lo/sqrt(n), a_hi/sqrt(n)]``."""
    if n < 1 or p < 1:
        raise ConfigurationError(f"need n, p >= 1, got n={n}, p={p}")
    if not a_lo < a_hi:
        raise ConfigurationError(f"need a_lo < a_hi, got ({a_lo}, {a_hi})")
    rng = make_rng(seed)
    vals = rng.uniform(a_lo, a_hi, size=(n, p)) / math.sqrt(n)
    return RawEnsemble(_frozen(vals), float(a_lo), float(a_hi), seed)


def embed_physical(raw):
    """Affine map taking a bounded raw ensemble to a physical sensing matrix.

    ``A = (raw + (a_hi - 2 a_lo)/sqrt(n)) / (2 (a_hi - a_lo) sqrt(n))`` maps
    the entry range onto ``[1/(2n), 1/n]``, so ``A >= 0`` and every column
    sums to at most one.
    """
    a_lo, a_hi = raw.a_lo, raw.a_hi
    if not a_lo < a_hi:
        raise ConfigurationError(f"need a_lo < a_hi, got ({a_lo}, {a_hi})")
    X = np.asarray(raw.entries, dtype=float)
    n = X.shape[0]
    lo, hi = a_lo / math.sqrt(n), a_hi / math.sqrt(n)
    scale = max(abs(lo), abs(hi), 1.0)
    if X.min() < lo - PHYS_TOL * scale or X.max() > hi + PHYS_TOL * scale:
        raise ConfigurationError("raw ensemble entries fall outside [a_lo/sqrt(n), a_hi/sqrt(n)]")
    sq = math.sqrt(n)
    A = (X + (a_hi - 2.0 * a_lo) / sq) / (2.0 * (a_hi - a_lo) * sq)
    return SensingMatrix(_frozen(A), raw)


def _entries(A):
    if isinstance(A, (SensingMatrix, RawEnsemble)):
        return A.entries
    return np.asarray(A, dtype=float)


@dataclass
class ConstraintReport:
    min_entry: float
    max_column_sum: float
    positivity_ok: bool
    flux_ok: bool
    range_ok: bool

    @property
    def passed(self):
        return self.positivity_ok and self.flux_ok

    def to_dict(self):
        d = asdict(self)
        d["passed"] = self.passed
        return d


def verify_physical(A, tol=PHYS_TOL):
    """Check positivity and flux preservation (column sums <= 1).

    ``range_ok`` additionally reports whether all entries lie in
    ``[1/(2n), 1/n]``, which holds for every embedded matrix.
    """
    M = _entries(A)
    n = M.shape[0]
    min_entry = float(M.min())
    max_col = float(M.sum(axis=0).max())
    range_ok = bool(min_entry >= 1.0 / (2 * n) - tol and M.max() <= 1.0 / n + tol)
    return ConstraintReport(
        min_entry=min_entry,
        max_column_sum=max_col,
        positivity_ok=bool(min_entry >= -tol),
        flux_ok=bool(max_col <= 1.0 + tol),
        range_ok=range_ok,
    )


def _basis_matrix(D):
    return D.columns if isinstance(D, OrthonormalBasis) else np.asarray(D, dtype=float)


def estimate_upper_rip(raw, D, K_tilde, n_trials=500, seed=0, include_coordinates=True):
    """Monte Carlo estimate of the upper RIP constant of ``raw @ D``.

    Draws ``n_trials`` unit vectors with ``2 K_tilde`` nonzeros (uniform
    support, Gaussian values) and returns ``max(||raw D u||^2 - 1, 0)``.
    The ``p`` coordinate vectors are also included by default; they are
    1-sparse, hence admissible, and pin down the column energies exactly.

    The estimate is a lower bound on the true constant.  Trial ``t`` always
    uses the same vector for a given seed, so the value is non-decreasing
    in ``n_trials``.
    """
    X = _entries(raw)
    Dm = _basis_matrix(D)
    p = Dm.shape[1]
    sparsity = 2 * int(K_tilde)
    if sparsity > p:
        raise ConfigurationError(f"2*K_tilde = {sparsity} exceeds p = {p}")
    if K_tilde < 1:
        raise ConfigurationError("K_tilde must be >= 1")
    if n_trials < 1:
        raise ConfigurationError("n_trials must be >= 1")

    XD = X @ Dm
    rng = make_rng(seed)
    best = 0.0
    if include_coordinates:
        best = max(best, float((XD ** 2).sum(axis=0).max()) - 1.0)
    chunk = 256
    for start in range(0, n_trials, chunk):
        m = min(chunk, n_trials - start)
        U = np.zeros((p, m))
        for t in range(m):
            support = rng.choice(p, size=sparsity, replace=False)
            U[support, t] = rng.standard_normal(sparsity)
        U /= np.linalg.norm(U, axis=0)
        energy = ((XD @ U) ** 2).sum(axis=0)
        best = max(best, float(energy.max()) - 1.0)
    return max(best, 0.0)


@dataclass
class REReport:
    """Empirical restricted-eigenvalue margin over a family of test vectors.

    ``c_hat`` is the smallest constant C for which
    ``||G x|| / sqrt(n) >= ||x||_2 / 4 - C sqrt(log p / n) ||x||_1`` holds on
    every sampled ``x``; ``worst_margin`` is the minimum over the sample of
    ``||G x|| / sqrt(n) - ||x||_2 / 4`` (C = 0).
    """

    c_hat: float
    worst_margin: float
    n_vectors: int
    n: int
    p: int

    def to_dict(self):
        return asdict(self)


def _re_test_vectors(r, n_samples, rng):
    """Coordinate vectors, s-sparse random-sign vectors (s = 1, 2, 4, ..., r)
    and dense Gaussian directions, all with unit l2 norm."""
    blocks = [np.eye(r)]
    levels = []
    s = 1
    while s < r:
        levels.append(s)
        s *= 2
    levels.append(r)
    groups = len(levels) + 1
    per_group = max(1, n_samples // groups)
    for s in levels:
        V = np.zeros((r, per_group))
        for t in range(per_group):
            support = rng.choice(r, size=s, replace=False)
            V[support, t] = rng.choice((-1.0, 1.0), size=s)
        blocks.append(V / math.sqrt(s))
    G = rng.standard_normal((r, per_group))
    blocks.append(G / np.linalg.norm(G, axis=0))
    return np.hstack(blocks)


def re_margin(gamma, D_bar=None, n_samples=2000, seed=0, p=None):
    """Empirical lower restricted-eigenvalue constant of ``gamma`` (n x p_cols).

    If ``D_bar`` is given the check runs on ``gamma @ D_bar``.  ``p`` (the
    dimension in the log factor) defaults to the number of rows of
    ``D_bar`` or to the number of columns of ``gamma``.
    """
    G = np.asarray(gamma, dtype=float)
    if D_bar is not None:
        Db = _basis_matrix(D_bar)
        if p is None:
            p = Db.shape[0]
        G = G @ Db
    n, r = G.shape
    if p is None:
        p = r
    if n_samples < 1:
        raise ConfigurationError("n_samples must be >= 1")
    rng = make_rng(seed)
    V = _re_test_vectors(r, n_samples, rng)
    lhs = np.linalg.norm(G @ V, axis=0) / math.sqrt(n)
    l2 = np.linalg.norm(V, axis=0)
    l1 = np.abs(V).sum(axis=0)
    gap = l2 / 4.0 - lhs
    rate = math.sqrt(math.log(p) / n)
    c_hat = max(0.0, float((gap / (rate * l1)).max()))
    return REReport(c_hat=c_hat, worst_margin=float((-gap).min()), n_vectors=V.shape[1], n=n, p=int(p))
