"""Ground-truth signals on the flux-normalised l_q ball, and l_q-ball analytics."""
from dataclasses import dataclass, field, asdict
import math

import numpy as np

from ._rng import make_rng
from .basis import OrthonormalBasis, localization_exact
from .errors import ConfigurationError

MEMBERSHIP_TOL = 1e-10


@dataclass(frozen=True)
class SignalSpec:
    p: int
    q: float
    R_q: float
    basis: OrthonormalBasis = field(repr=False)
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.q <= 1.0:
            raise ConfigurationError(f"q must lie in (0, 1], got {self.q}")
        if not self.R_q > 0.0:
            raise ConfigurationError(f"R_q must be positive, got {self.R_q}")
        if self.basis.p != self.p:
            raise ConfigurationError(f"basis dimension {self.basis.p} != p = {self.p}")


@dataclass(frozen=True, eq=False)
class GroundTruth:
    theta: np.ndarray = field(repr=False)
    f: np.ndarray = field(repr=False)

    @property
    def theta_bar(self):
        return self.theta[1:]


def lq_power(x, q):
    """``sum |x_j|^q``."""
    return float(np.sum(np.abs(x) ** q))


def generate_signal(spec):
    """Draw a signal in the constrained set.

    The first coefficient is pinned at ``1/sqrt(p)``.  The remaining ones are
    drawn i.i.d. from ``Unif(0, 1/(p * lam_p))`` where ``lam_p`` is the
    maximal absolute row sum of ``D``; this keeps every entry of ``f``
    non-negative.  The tail is then shrunk onto the l_q ball if the draw
    lands outside it.
    """
    p, q, R_q = spec.p, spec.q, spec.R_q
    D = spec.basis.columns
    lam_p = localization_exact(D, p)
    rng = make_rng(spec.seed)
    tail = rng.uniform(0.0, 1.0 / (p * lam_p), size=p - 1)

    mass = lq_power(tail, q)
    if mass > R_q:
        tail = tail * (R_q / mass) ** (1.0 / q)

    theta = np.empty(p)
    theta[0] = 1.0 / math.sqrt(p)
    theta[1:] = tail
    f = D @ theta
    if f.min() < 0.0:
        # lam_p bounds |dbar @ tail| by 1/p entrywise; reaching here is a bug
        raise RuntimeError(f"generated signal has a negative entry ({f.min():.3e})")
    return GroundTruth(theta=theta, f=f)


@dataclass
class MembershipReport:
    min_entry: float
    l1_error: float
    lq_mass: float
    R_q: float
    positivity_ok: bool
    normalization_ok: bool
    ball_ok: bool

    @property
    def passed(self):
        return self.positivity_ok and self.normalization_ok and self.ball_ok

    def to_dict(self):
        d = asdict(self)
        d["passed"] = self.passed
        return d


def check_membership(f, D, q, R_q, tol=MEMBERSHIP_TOL):
    """Diagnose whether ``f`` is non-negative, unit-l1 and l_q-sparse in ``D``.

    Coefficients of ``D^T f`` below ``16 eps p max|f|`` are treated as zero.
    """
    f = np.asarray(f, dtype=float)
    Dm = D.columns if isinstance(D, OrthonormalBasis) else np.asarray(D, dtype=float)
    if f.shape != (Dm.shape[0],):
        raise ConfigurationError(f"f has shape {f.shape}, expected ({Dm.shape[0]},)")
    coeffs = Dm[:, 1:].T @ f
    # coefficients at the rounding level of the transform are exact zeros;
    # for small q their |.|^q would otherwise dominate the mass
    floor = 16.0 * np.finfo(float).eps * Dm.shape[0] * float(np.abs(f).max())
    mass = lq_power(np.where(np.abs(coeffs) > floor, coeffs, 0.0), q)
    min_entry = float(f.min())
    l1_err = abs(float(np.abs(f).sum()) - 1.0)
    return MembershipReport(
        min_entry=min_entry,
        l1_error=l1_err,
        lq_mass=mass,
        R_q=float(R_q),
        positivity_ok=min_entry >= -tol,
        normalization_ok=l1_err <= tol,
        ball_ok=mass <= R_q + tol,
    )


@dataclass
class ThresholdSplit:
    support: np.ndarray
    tail_l1: float
    card: int
    card_bound: float
    tail_bound: float


def threshold_split(theta_bar, eta, q, R_q):
    """Split coefficients at magnitude ``eta``.

    Returns the indices above the threshold, their count, and the l1 mass of
    the rest.  When ``theta_bar`` lies in the l_q ball of radius ``R_q`` the
    count is at most ``eta^-q R_q`` and the tail at most ``R_q eta^(1-q)``;
    a violation raises ``AssertionError``.
    """
    if not eta > 0:
        raise ConfigurationError(f"eta must be positive, got {eta}")
    x = np.abs(np.asarray(theta_bar, dtype=float))
    big = x > eta
    support = np.flatnonzero(big)
    card = int(support.size)
    tail = float(x[~big].sum())
    card_bound = eta ** (-q) * R_q
    tail_bound = R_q * eta ** (1.0 - q)
    if lq_power(x, q) <= R_q:
        slack = 1e-12 * max(1.0, tail_bound)
        assert card <= card_bound * (1 + 1e-12), (card, card_bound)
        assert tail <= tail_bound + slack, (tail, tail_bound)
    return ThresholdSplit(support=support, tail_l1=tail, card=card, card_bound=card_bound, tail_bound=tail_bound)


def best_s_term(theta_bar, s):
    """Keep the ``s`` largest-magnitude entries (lowest index wins ties).

    Returns ``(theta_s, l1_tail, l2_tail)``.
    """
    x = np.asarray(theta_bar, dtype=float)
    if not 0 <= s <= x.size:
        raise ConfigurationError(f"s must lie in [0, {x.size}], got {s}")
    keep = np.argsort(-np.abs(x), kind="stable")[:s]
    out = np.zeros_like(x)
    out[keep] = x[keep]
    rest = x - out
    return out, float(np.abs(rest).sum()), float(np.linalg.norm(rest))


def bias_term(A_tilde, D, f, s):
    """``max(||A_tilde (f - f_s)||^2, ||f - f_s||_1)`` with ``f_s`` the best
    s-term approximation of ``f`` in ``D`` (first coefficient always kept)."""
    Dm = D.columns if isinstance(D, OrthonormalBasis) else np.asarray(D, dtype=float)
    X = np.asarray(getattr(A_tilde, "entries", A_tilde), dtype=float)
    f = np.asarray(f, dtype=float)
    if f.shape != (Dm.shape[0],) or X.shape[1] != Dm.shape[0]:
        raise ConfigurationError("dimension mismatch between A_tilde, D and f")
    theta = Dm.T @ f
    kept, _, _ = best_s_term(theta[1:], s)
    f_s = Dm[:, 0] * theta[0] + Dm[:, 1:] @ kept
    r = f - f_s
    return max(float(np.sum((X @ r) ** 2)), float(np.abs(r).sum()))
