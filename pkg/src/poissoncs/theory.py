"""Rate formulas, regime checks and numeric checks of the supporting inequalities.

Nothing here carries an absolute constant: rates are the bracketed
expressions only, and unknown constants are left to empirical fits.
"""
from dataclasses import dataclass, field, asdict
import math
import warnings

import numpy as np

from ._rng import make_rng
from .basis import OrthonormalBasis, localization_bound
from .errors import ConfigurationError, ConstructionError, RegimeError

# Assumption constant linking n and K_tilde log p; no value is available,
# so flags use 1 and report it.
C0 = 1.0


@dataclass(frozen=True)
class RateParams:
    p: int
    n: int
    T: float
    q: float
    R_q: float
    delta: float = 0.0
    a_lo: float = -1.0
    a_hi: float = 1.0
    basis_kind: str = "dct"

    def __post_init__(self):
        if not 0.0 < self.q <= 1.0:
            raise ConfigurationError(f"q must lie in (0, 1], got {self.q}")
        if not (self.T > 0 and self.R_q > 0):
            raise ConfigurationError("T and R_q must be positive")
        if not self.a_lo < self.a_hi:
            raise ConfigurationError("need a_lo < a_hi")
        if self.p < 2 or self.n < 1:
            raise ConfigurationError("need p >= 2 and n >= 1")


def effective_sparsity(R_q, q, p, T):
    """``max(1, ceil(R_q (log p / T)^(-q/2)))``; requires ``T > log p``."""
    if not 0.0 < q <= 1.0:
        raise ConfigurationError(f"q must lie in (0, 1], got {q}")
    if not R_q > 0:
        raise ConfigurationError("R_q must be positive")
    log_p = math.log(p)
    if not T > log_p:
        raise RegimeError(f"need T > log p = {log_p:.4g}, got T = {T}")
    x = R_q * (log_p / T) ** (-q / 2.0)
    # a relative slack of 1e-12 keeps exact integers (e.g. 100.00000000000001) from rounding up
    return max(1, math.ceil(x * (1.0 - 1e-12)))


def minimax_lower_rate(params):
    """``max_k min(k / (p^2 lam_k^2), k log(p/k) / T)`` over ``1 <= k <= K_tilde``.

    ``lam_k`` are the tabulated localization bounds; ``k`` is additionally
    capped at ``p - 1`` where ``log(p/k)`` stays positive.
    """
    P = params
    K = min(effective_sparsity(P.R_q, P.q, P.p, P.T), P.p - 1)
    k = np.arange(1, K + 1, dtype=float)
    lam = np.array([localization_bound(P.basis_kind, int(kk), P.p) for kk in k])
    first = k / (P.p ** 2 * lam ** 2)
    second = k * np.log(P.p / k) / P.T
    return float(np.minimum(first, second).max())


def upper_rate(params):
    """``R_q (log p / T)^(1 - q/2)``."""
    P = params
    return P.R_q * (math.log(P.p) / P.T) ** (1.0 - P.q / 2.0)


@dataclass
class RegimeReport:
    snr_ok: bool
    design_ok: bool
    match_lower: bool | None
    match_upper: bool
    K_tilde: int
    log_p: float
    snr_threshold: float
    design_threshold: float
    lower_threshold: float | None
    upper_threshold: float
    c0: float = C0

    def to_dict(self):
        return asdict(self)


def regime_flags(params):
    """Boolean regime checks with the raw thresholds they compare against.

    ``match_lower`` is ``None`` for DCT/DHT at ``q = 1`` where the threshold
    ``p^(1/(1-q))`` is undefined.
    """
    P = params
    log_p = math.log(P.p)
    K = effective_sparsity(P.R_q, P.q, P.p, P.T)
    snr_thr = 2.0 * P.n * log_p
    design_thr = C0 * K * log_p
    if P.basis_kind == "dwt_haar":
        lower_thr = float(P.p) ** 2
    elif P.q < 1.0:
        lower_thr = float(P.p) ** (1.0 / (1.0 - P.q))
    else:
        lower_thr = None
    upper_thr = (P.n / (P.R_q * log_p)) ** (2.0 / P.q) * log_p
    return RegimeReport(
        snr_ok=P.T > snr_thr,
        design_ok=P.n >= design_thr,
        match_lower=None if lower_thr is None else P.T >= lower_thr,
        match_upper=P.T <= upper_thr,
        K_tilde=K,
        log_p=log_p,
        snr_threshold=snr_thr,
        design_threshold=design_thr,
        lower_threshold=lower_thr,
        upper_threshold=upper_thr,
    )


@dataclass(eq=False)
class PackingSet:
    k: int
    alpha: float
    eta_sq: float
    points: np.ndarray = field(repr=False)  # (M, p), each row a theta
    target: int
    desk_mode: bool
    verified: dict = field(default_factory=dict)

    @property
    def signs(self):
        return np.sign(self.points[:, 1:]).astype(int)

    def __len__(self):
        return self.points.shape[0]


def packing_target(p, k):
    """Cardinality ``exp((k/2) log((p - k/2 - 1)/k))`` rounded up."""
    return math.ceil(math.exp(0.5 * k * math.log((p - 0.5 * k - 1.0) / k)) - 1e-9)


def build_packing(p, k, D, R_q, q, seed=0, K_tilde=None, desk_mode=True,
                  budget_factor=200, max_target=100_000):
    """Greedy random packing of k-sparse sign patterns scaled by alpha_k.

    Random k-sparse sign vectors are drawn and kept whenever their Hamming
    distance to every kept vector is at least k/2, until the target
    cardinality is reached.  The points are ``[1/sqrt(p), alpha_k * beta]``
    with ``alpha_k = min(1/(p lam_k), (R_q/k)^(1/q))``.  The three packing
    properties (distance sandwich, non-negative unit-l1 signal, cardinality)
    are verified exhaustively before returning.

    Parameters
    ----------
    K_tilde : int, optional
        Effective sparsity for the size precondition; defaults to ``k``.
    desk_mode : bool
        Warn instead of raising when ``p < max(260, 33 K_tilde / 2 + 1)``.

    Raises
    ------
    ConstructionError
        If the draw budget runs out first (``achieved`` holds the count).
    """
    Dm = D.columns if isinstance(D, OrthonormalBasis) else np.asarray(D, dtype=float)
    kind = D.kind if isinstance(D, OrthonormalBasis) else "dct"
    if Dm.shape != (p, p):
        raise ConfigurationError("basis dimension does not match p")
    if not 1 <= k <= p - 1:
        raise ConfigurationError(f"k must lie in [1, {p - 1}]")
    K = k if K_tilde is None else K_tilde
    if k > K:
        raise ConfigurationError("k must not exceed K_tilde")
    p_min = max(260, 33 * K / 2 + 1)
    if p < p_min:
        if not desk_mode:
            raise ConfigurationError(f"p = {p} is below the required {p_min:g}")
        warnings.warn(f"desk mode: p = {p} is below {p_min:g}", RuntimeWarning, stacklevel=2)

    target = packing_target(p, k)
    if target > max_target:
        raise ConstructionError(f"target cardinality {target} exceeds max_target={max_target}", 0)
    lam_k = localization_bound(kind, k, p)
    alpha = min(1.0 / (p * lam_k), (R_q / k) ** (1.0 / q))

    rng = make_rng(seed)
    m = p - 1
    kept = np.zeros((target, m), dtype=np.int8)
    count = 0
    need = k / 2.0
    budget = int(math.ceil(budget_factor * target))
    for _ in range(budget):
        beta = np.zeros(m, dtype=np.int8)
        support = rng.choice(m, size=k, replace=False)
        beta[support] = rng.choice(np.array([-1, 1], dtype=np.int8), size=k)
        if count:
            ham = np.count_nonzero(kept[:count] != beta, axis=1)
            if ham.min() < need:
                continue
        kept[count] = beta
        count += 1
        if count == target:
            break
    if count < target:
        raise ConstructionError(f"draw budget {budget} exhausted with {count}/{target} points", count)

    points = np.empty((target, p))
    points[:, 0] = 1.0 / math.sqrt(p)
    points[:, 1:] = alpha * kept
    packing = PackingSet(k=k, alpha=alpha, eta_sq=0.5 * k * alpha ** 2, points=points,
                         target=target, desk_mode=p < p_min)
    packing.verified = verify_packing(packing, Dm)
    if not all(packing.verified[key] for key in ("distances_ok", "signal_ok", "cardinality_ok")):
        raise ConstructionError(f"packing failed verification: {packing.verified}", count)
    return packing


def verify_packing(packing, D, tol=1e-10):
    """Exhaustive check of the three packing properties."""
    Dm = D.columns if isinstance(D, OrthonormalBasis) else np.asarray(D, dtype=float)
    X = packing.points
    sq = (X ** 2).sum(axis=1)
    dist = sq[:, None] + sq[None, :] - 2.0 * X @ X.T
    iu = np.triu_indices(X.shape[0], k=1)
    pair = dist[iu]
    eta_sq = packing.eta_sq
    rel = 1e-9 * eta_sq
    F = X @ Dm.T
    l1_err = float(np.abs(np.abs(F).sum(axis=1) - 1.0).max())
    return {
        "min_dist_sq": float(pair.min()) if pair.size else math.inf,
        "max_dist_sq": float(pair.max()) if pair.size else 0.0,
        "distances_ok": bool(pair.size == 0 or (pair.min() >= eta_sq - rel and pair.max() <= 8 * eta_sq + rel)),
        "min_f": float(F.min()),
        "l1_error": l1_err,
        "signal_ok": bool(F.min() >= -tol and l1_err <= tol),
        "cardinality": int(X.shape[0]),
        "cardinality_ok": bool(X.shape[0] >= math.exp(0.5 * packing.k * math.log((Dm.shape[0] - 0.5 * packing.k - 1.0) / packing.k))),
    }


def kl_poisson_check(mu1, mu2, c):
    """KL divergence of product Poissons against ``(1/c) ||mu1 - mu2||^2``.

    Returns ``(kl, bound, passed)``.
    """
    mu1 = np.asarray(mu1, dtype=float)
    mu2 = np.asarray(mu2, dtype=float)
    if not c > 0:
        raise ConfigurationError("c must be positive")
    if np.any(mu1 <= 0) or np.any(mu2 <= 0):
        raise ConfigurationError("Poisson means must be positive")
    if np.any(mu2 < c):
        raise ConfigurationError("mu2 must dominate c entrywise")
    kl = float(np.sum(mu2 - mu1 + mu1 * np.log(mu1 / mu2)))
    bound = float(np.sum((mu1 - mu2) ** 2)) / c
    return kl, bound, kl <= bound + 1e-12


def _exp_or_inf(v):
    return math.exp(v) if v < 709.0 else math.inf


def mgf_bound_check(lam, s, mc_draws=100_000, seed=0, mc_max_exponent=20.0):
    """Centred Poisson MGF against ``exp(lam s^2)`` for ``s`` in ``[0, 1]``.

    Returns ``(lhs_plus, lhs_minus, rhs, passed)``.  When ``mc_draws > 0``
    and ``lam s^2 <= mc_max_exponent`` a Monte Carlo estimate of both
    one-sided MGFs must also stay below ``rhs (1 + 5 sigma)`` with sigma
    the relative standard error; larger exponents overflow or make the
    sample mean meaningless and are skipped.
    """
    if not lam > 0:
        raise ConfigurationError("lambda must be positive")
    if not 0.0 <= s <= 1.0:
        raise ConfigurationError(f"s must lie in [0, 1], got {s}")
    # compare in log space; exp(lam s^2) overflows for lam = 1e5, s = 1
    log_plus = lam * (math.expm1(s) - s)
    log_minus = lam * (math.expm1(-s) + s)
    log_rhs = lam * s * s
    lhs_plus, lhs_minus, rhs = (_exp_or_inf(v) for v in (log_plus, log_minus, log_rhs))
    log_allow = log_rhs + math.log1p(1e-12 * math.exp(-log_rhs))
    passed = max(log_plus, log_minus) <= log_allow
    if mc_draws and lam * s * s <= mc_max_exponent and s > 0:
        W = make_rng(seed).poisson(lam, size=int(mc_draws)).astype(float)
        for sign in (1.0, -1.0):
            vals = np.exp(sign * s * (W - lam))
            mean = vals.mean()
            sigma = vals.std(ddof=1) / (math.sqrt(vals.size) * mean)
            passed = passed and mean <= rhs * (1.0 + 5.0 * sigma)
    return lhs_plus, lhs_minus, rhs, bool(passed)


@dataclass
class EnergyReport:
    energies: np.ndarray = field(repr=False)
    bound: float
    max_ratio: float

    @property
    def passed(self):
        return self.max_ratio <= 1.0 + 1e-12

    def to_dict(self):
        return {"bound": self.bound, "max_ratio": self.max_ratio, "passed": self.passed}


def column_energy_check(A, D, delta, a_lo=-1.0, a_hi=1.0):
    """``sum_i (A D)_ij^2`` for ``j = 2..p`` against ``(1+delta)/(4 n (a_hi-a_lo)^2)``."""
    M = np.asarray(getattr(A, "entries", A), dtype=float)
    Dm = D.columns if isinstance(D, OrthonormalBasis) else np.asarray(D, dtype=float)
    n = M.shape[0]
    energies = ((M @ Dm[:, 1:]) ** 2).sum(axis=0)
    bound = (1.0 + delta) / (4.0 * n * (a_hi - a_lo) ** 2)
    return EnergyReport(energies, bound, float(energies.max() / bound))


def wlasso_rate_comparison(params):
    """Compare the Lasso rate with the weighted-Lasso bound on the l_q ball.

    ``lasso = R_q x^(1-q/2)`` and ``wlasso = R_q x^((1-q)/2) + R_q^2 x^(-q)``
    with ``x = log p / T``.  Returns ``(lasso, wlasso, wlasso / lasso)``.
    """
    P = params
    x = math.log(P.p) / P.T
    lasso = upper_rate(P)
    wl = P.R_q * x ** ((1.0 - P.q) / 2.0) + P.R_q ** 2 * x ** (-P.q)
    return lasso, wl, wl / lasso


def noise_equivalence(n, T):
    """Effective Gaussian noise variance ``n / T`` of the normalised responses.

    Returns ``(sigma_sq, (lo, hi))`` where the true per-coordinate variance
    ``alpha n / T`` lies in ``[lo, hi]`` for ``alpha`` in ``[1/2, 1]``.
    """
    if not (n > 0 and T > 0):
        raise ConfigurationError("n and T must be positive")
    s = n / T
    return s, (0.5 * s, s)


def gaussian_rate(R_q, q, sigma_sq, n, p):
    """``R_q (sigma^2 log p / n)^(1 - q/2)``, the Gaussian linear-model rate."""
    return R_q * (sigma_sq * math.log(p) / n) ** (1.0 - q / 2.0)
