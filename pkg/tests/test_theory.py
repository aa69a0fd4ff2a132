import math
import warnings

import numpy as np
import pytest

from poissoncs.basis import build_basis, localization_bound
from poissoncs.errors import ConfigurationError, ConstructionError, RegimeError
from poissoncs.sensing import embed_physical, estimate_upper_rip, sample_bernoulli_ensemble
from poissoncs.theory import (
    RateParams,
    build_packing,
    column_energy_check,
    effective_sparsity,
    gaussian_rate,
    kl_poisson_check,
    mgf_bound_check,
    minimax_lower_rate,
    noise_equivalence,
    packing_target,
    regime_flags,
    upper_rate,
    verify_packing,
    wlasso_rate_comparison,
)

LARGE = dict(p=1024, n=1000, T=1e8, q=0.5, R_q=7.0)


def test_effective_sparsity():
    p = 1024
    assert effective_sparsity(1.0, 1.0, p, math.log(p) / 1e-4) == 100
    assert effective_sparsity(7.0, 0.5, 1024, 1e8) == 432
    ks = [effective_sparsity(2.0, 0.5, 256, T) for T in np.geomspace(10, 1e12, 40)]
    assert all(a <= b for a, b in zip(ks, ks[1:]))
    assert effective_sparsity(1e-9, 0.5, 256, 1e6) == 1
    with pytest.raises(RegimeError):
        effective_sparsity(1.0, 0.5, 256, math.log(256))
    with pytest.raises(ConfigurationError):
        effective_sparsity(1.0, 0.0, 256, 1e6)


def test_rate_params_validation():
    for bad in [dict(q=0.0), dict(q=1.5), dict(T=0.0), dict(R_q=-1.0), dict(a_lo=1.0, a_hi=1.0)]:
        with pytest.raises(ConfigurationError):
            RateParams(**{**LARGE, **bad})


def test_upper_rate():
    P = RateParams(**LARGE)
    x = math.log(1024) / 1e8
    assert upper_rate(P) == pytest.approx(7 * x ** 0.75, rel=1e-14)
    assert upper_rate(P) == pytest.approx(2.9903e-5, rel=1e-4)
    P1 = RateParams(**{**LARGE, "q": 1.0})
    assert upper_rate(P1) == pytest.approx(7 * math.sqrt(x), rel=1e-14)
    P2 = RateParams(**{**LARGE, "R_q": 14.0})
    assert upper_rate(P2) == pytest.approx(2 * upper_rate(P), rel=1e-14)


def _brute_lower(P):
    K = min(effective_sparsity(P.R_q, P.q, P.p, P.T), P.p - 1)
    vals = []
    for k in range(1, K + 1):
        lam = localization_bound(P.basis_kind, k, P.p)
        vals.append(min(k / (P.p ** 2 * lam ** 2), k * math.log(P.p / k) / P.T))
    return max(vals)


def test_minimax_lower_rate():
    P = RateParams(**LARGE)
    assert minimax_lower_rate(P) == pytest.approx(_brute_lower(P), rel=1e-14)
    # with the tabulated DCT bound the first term is 1/(2pk), largest at k = 1;
    # for small T the second term no longer binds there and the value is 1/(2p)
    p = 256
    Ps = RateParams(p=p, n=100, T=2 * math.log(p), q=0.5, R_q=1.0)
    assert minimax_lower_rate(Ps) == pytest.approx(1 / (2 * p), rel=1e-12)
    # Haar: first term k (sqrt2 - 1)^2 / p^2 grows with k
    first = [k * (math.sqrt(2) - 1) ** 2 / p ** 2 for k in range(1, 6)]
    lam = localization_bound("dwt_haar", 3, p)
    assert 3 / (p ** 2 * lam ** 2) == pytest.approx(first[2], rel=1e-12)
    Ph = RateParams(p=p, n=100, T=1e6, q=0.5, R_q=2.0, basis_kind="dwt_haar")
    assert minimax_lower_rate(Ph) == pytest.approx(_brute_lower(Ph), rel=1e-14)


@pytest.mark.parametrize("q", [0.3, 0.5])
def test_upper_over_lower_bounded_in_matching_window(q):
    # window: lower-bound regime T >= p^(1/(1-q)), upper regime reported by
    # regime_flags, and K_tilde <= p/2 so the sparsity grid is meaningful
    p, n, R = 1024, 10 ** 6, 7.0
    rep = regime_flags(RateParams(p=p, n=n, T=1e8, q=q, R_q=R))
    hi = min(rep.upper_threshold, math.log(p) * (p / (2 * R)) ** (2 / q))
    Ts = np.geomspace(rep.lower_threshold, hi, 25)
    ratios = [upper_rate(RateParams(p=p, n=n, T=T, q=q, R_q=R)) / minimax_lower_rate(RateParams(p=p, n=n, T=T, q=q, R_q=R))
              for T in Ts]
    assert max(ratios) <= 25.0  # recorded baseline
    assert min(ratios) >= 1.0


def test_matching_window_empty_for_large_q():
    # for q > 2/3, T >= p^(1/(1-q)) already forces K_tilde > p
    p, R, q = 1024, 7.0, 0.8
    T = p ** (1 / (1 - q))
    assert effective_sparsity(R, q, p, T) > p


def test_regime_flags():
    rep = regime_flags(RateParams(**LARGE))
    assert rep.snr_ok and rep.snr_threshold == pytest.approx(2 * 1000 * math.log(1024))
    assert rep.c0 == 1.0 and rep.K_tilde == 432
    assert rep.match_lower is True and rep.lower_threshold == pytest.approx(1024.0 ** 2)
    small = regime_flags(RateParams(p=16, n=8, T=10.0, q=0.5, R_q=1.0))
    assert not small.snr_ok
    assert regime_flags(RateParams(**{**LARGE, "q": 1.0})).match_lower is None
    haar = regime_flags(RateParams(**{**LARGE, "basis_kind": "dwt_haar"}))
    assert haar.lower_threshold == 1024.0 ** 2
    low = [regime_flags(RateParams(**{**LARGE, "T": T})).match_lower for T in np.geomspace(1e3, 1e9, 20)]
    up = [regime_flags(RateParams(**{**LARGE, "T": T})).match_upper for T in np.geomspace(1e3, 1e9, 20)]
    assert low == sorted(low)  # False ... True
    assert up == sorted(up, reverse=True)  # True ... False
    assert set(rep.to_dict()) >= {"snr_threshold", "design_threshold", "upper_threshold"}


def test_packing_k1_distances():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        ps = build_packing(32, 1, build_basis("dct", 32), 2.0, 0.5, seed=0)
    X = ps.points
    d = ((X[:, None, :] - X[None, :, :]) ** 2).sum(-1)[np.triu_indices(len(ps), 1)]
    assert np.all((d >= ps.alpha ** 2 - 1e-15) & (d <= 2 * ps.alpha ** 2 + 1e-15))
    assert ps.eta_sq == pytest.approx(ps.alpha ** 2 / 2)


@pytest.mark.parametrize("k", [2, 4])
def test_packing_properties(k):
    p, R, q = 32, 2.0, 0.5
    D = build_basis("dct", p)
    with pytest.warns(RuntimeWarning):
        ps = build_packing(p, k, D, R, q, seed=3)
    v = verify_packing(ps, D)
    assert v["distances_ok"] and v["signal_ok"] and v["cardinality_ok"]
    assert len(ps) >= math.exp(k / 2 * math.log((p - k / 2 - 1) / k))
    assert np.all(ps.points[:, 0] == 1 / math.sqrt(p))
    assert np.all(np.count_nonzero(ps.points[:, 1:], axis=1) == k)
    lam_k = localization_bound("dct", k, p)
    assert ps.alpha <= min(1 / (p * lam_k), (R / k) ** (1 / q))
    assert np.all(np.sum(np.abs(ps.points[:, 1:]) ** q, axis=1) <= R * (1 + 1e-12))
    H = (ps.signs[:, None, :] != ps.signs[None, :, :]).sum(-1)[np.triu_indices(len(ps), 1)]
    assert H.min() >= k / 2


def test_packing_errors():
    D = build_basis("dct", 32)
    with pytest.raises(ConfigurationError):
        build_packing(32, 2, D, 2.0, 0.5, desk_mode=False)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        with pytest.raises(ConstructionError) as err:
            build_packing(32, 4, D, 2.0, 0.5, budget_factor=0.05)
    assert err.value.achieved < packing_target(32, 4)
    with pytest.raises(ConfigurationError):
        build_packing(32, 5, D, 2.0, 0.5, K_tilde=4)


def test_kl_check():
    kl, bound, ok = kl_poisson_check([3.0, 1.0], [3.0, 1.0], 0.5)
    assert kl == 0 and bound == 0 and ok
    kl, bound, ok = kl_poisson_check([2.0], [1.0], 1.0)
    assert kl == pytest.approx(2 * math.log(2) - 1, abs=1e-12) and round(kl, 5) == 0.38629
    assert bound == 1.0 and ok
    for bad in [([1.0], [1.0], 0.0), ([0.0], [1.0], 0.5), ([1.0], [0.4], 0.5)]:
        with pytest.raises(ConfigurationError):
            kl_poisson_check(*bad)


def test_mgf_examples():
    assert mgf_bound_check(3.0, 0.0, mc_draws=0)[:3] == (1.0, 1.0, 1.0)
    lp, lm, rhs, ok = mgf_bound_check(1.0, 1.0)
    assert lp == pytest.approx(math.exp(math.e - 2)) and round(lp, 4) == 2.0509
    assert rhs == pytest.approx(math.e) and ok
    lp, _, rhs, ok = mgf_bound_check(1.0, 0.5)
    assert lp == pytest.approx(1.16035, abs=1e-5) and rhs == pytest.approx(1.2840, abs=1e-4) and ok
    with pytest.raises(ConfigurationError):
        mgf_bound_check(1.0, 1.5)
    with pytest.raises(ConfigurationError):
        mgf_bound_check(0.0, 0.5)


def test_mgf_large_lambda_no_overflow():
    lp, lm, rhs, ok = mgf_bound_check(1e5, 1.0)
    assert ok and math.isinf(rhs)


def test_column_energy():
    n, p = 400, 256
    raw = sample_bernoulli_ensemble(n, p, 2)
    A = embed_physical(raw)
    D = build_basis("dct", p)
    delta = estimate_upper_rip(raw, D, 16, seed=0)
    rep = column_energy_check(A, D, delta)
    assert rep.passed and rep.energies.shape == (p - 1,)
    half = column_energy_check(A.entries / 2, D, delta)
    np.testing.assert_allclose(half.energies, rep.energies / 4, rtol=1e-12)


def test_wlasso_comparison():
    p = 1024
    P = RateParams(p=p, n=1000, T=math.log(p), q=0.5, R_q=3.0)
    lasso, wl, _ = wlasso_rate_comparison(P)
    assert lasso == pytest.approx(3.0) and wl == pytest.approx(3.0 + 9.0)
    _, _, ratio = wlasso_rate_comparison(RateParams(**LARGE))
    assert ratio > 1e3
    ratios = [wlasso_rate_comparison(RateParams(**{**LARGE, "T": T}))[2] for T in np.geomspace(1e2, 1e12, 10)]
    assert all(a < b for a, b in zip(ratios, ratios[1:]))


def test_noise_equivalence():
    s, (lo, hi) = noise_equivalence(1000, 1e8)
    assert s == pytest.approx(1e-5) and (lo, hi) == (0.5e-5, 1e-5)
    assert noise_equivalence(2000, 1e8)[0] == pytest.approx(2 * s)
    P = RateParams(**LARGE)
    assert gaussian_rate(P.R_q, P.q, s, 1000, 1024) == pytest.approx(upper_rate(P), rel=1e-14)
    with pytest.raises(ConfigurationError):
        noise_equivalence(0, 1.0)
