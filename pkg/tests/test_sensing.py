import math

import numpy as np
import pytest

from poissoncs.basis import build_basis
from poissoncs.errors import ConfigurationError
from poissoncs.sensing import (
    RawEnsemble,
    embed_physical,
    estimate_upper_rip,
    re_margin,
    sample_bernoulli_ensemble,
    sample_uniform_ensemble,
    verify_physical,
)


def test_bernoulli_values_and_determinism():
    raw = sample_bernoulli_ensemble(4, 4, 7)
    assert set(np.unique(raw.entries)) <= {-0.5, 0.5}
    assert (raw.a_lo, raw.a_hi) == (-1.0, 1.0)
    np.testing.assert_array_equal(raw.entries, sample_bernoulli_ensemble(4, 4, 7).entries)
    assert not np.array_equal(raw.entries, sample_bernoulli_ensemble(4, 4, 8).entries)


def test_bernoulli_balance():
    raw = sample_bernoulli_ensemble(1000, 1000, 11)
    frac = float((raw.entries > 0).mean())
    assert 0.497 <= frac <= 0.503


def test_embedding_extremes():
    n, p = 5, 3
    for a_lo, a_hi in [(-1.0, 1.0), (-0.5, 2.0), (0.0, 3.0)]:
        lo = RawEnsemble(np.full((n, p), a_lo / math.sqrt(n)), a_lo, a_hi)
        hi = RawEnsemble(np.full((n, p), a_hi / math.sqrt(n)), a_lo, a_hi)
        np.testing.assert_allclose(embed_physical(lo).entries, 1 / (2 * n), rtol=1e-14)
        np.testing.assert_allclose(embed_physical(hi).entries, 1 / n, rtol=1e-14)


def test_embedding_bernoulli_two_values():
    n = 16
    A = embed_physical(sample_bernoulli_ensemble(n, 8, 0))
    vals = np.unique(A.entries)
    np.testing.assert_allclose(vals, [1 / (2 * n), 1 / n], rtol=1e-14)
    rep = verify_physical(A)
    assert rep.passed and rep.range_ok
    assert rep.max_column_sum <= 1.0


def test_embedding_rejects_bad_bounds():
    with pytest.raises(ConfigurationError):
        embed_physical(RawEnsemble(np.zeros((2, 2)), 1.0, 1.0))
    with pytest.raises(ConfigurationError):
        embed_physical(RawEnsemble(np.full((4, 2), 0.9), -1.0, 1.0))


def test_uniform_ensemble_in_range():
    raw = sample_uniform_ensemble(50, 20, -0.3, 1.7, 5)
    s = math.sqrt(50)
    assert raw.entries.min() >= -0.3 / s and raw.entries.max() <= 1.7 / s
    assert verify_physical(embed_physical(raw)).range_ok


def test_verify_physical_failures():
    A = np.full((10, 4), 0.05)
    A[2, 1] = -1e-6
    rep = verify_physical(A)
    assert not rep.positivity_ok and not rep.passed
    B = np.full((10, 4), 0.05)
    B[:, 2] = 0.101
    rep = verify_physical(B)
    assert rep.positivity_ok and not rep.flux_ok and not rep.passed


def test_rip_isometry_gives_zero():
    p = 16
    B = build_basis("dct", p)
    raw = RawEnsemble(B.columns.T.copy(), -1.0, 1.0)  # raw @ D = I
    assert estimate_upper_rip(raw, B, 4, n_trials=200, seed=1) == pytest.approx(0.0, abs=1e-12)


def test_rip_bernoulli_below_one_and_monotone():
    B = build_basis("dct", 256)
    raw = sample_bernoulli_ensemble(512, 256, 3)
    d100 = estimate_upper_rip(raw, B, 8, n_trials=100, seed=9)
    d500 = estimate_upper_rip(raw, B, 8, n_trials=500, seed=9)
    assert 0.0 <= d100 <= d500 < 1.0
    assert d500 == estimate_upper_rip(raw, B, 8, n_trials=500, seed=9)


def test_rip_preconditions():
    B = build_basis("dct", 8)
    raw = sample_bernoulli_ensemble(8, 8, 0)
    with pytest.raises(ConfigurationError):
        estimate_upper_rip(raw, B, 5)
    with pytest.raises(ConfigurationError):
        estimate_upper_rip(raw, B, 2, n_trials=0)


def test_re_margin_coordinate_columns():
    n = 50
    G = math.sqrt(n) * np.eye(n)[:, :20]
    rep = re_margin(G, n_samples=100, seed=0)
    assert rep.c_hat == 0.0


def test_re_margin_bernoulli_and_rotation():
    n, p = 400, 256
    raw = sample_bernoulli_ensemble(n, p, 21)
    G = math.sqrt(n) * raw.entries
    plain = re_margin(G, n_samples=2000, seed=1)
    rotated = re_margin(G, build_basis("dct", p).dbar, n_samples=2000, seed=1)
    assert plain.c_hat <= 3.0
    assert rotated.c_hat <= 3.0
    # same order after rotation: the raw margins are within a factor of 2
    assert 0.5 <= rotated.worst_margin / plain.worst_margin <= 2.0


def test_re_assumption_form_for_physical_matrix():
    # sqrt(n) ||A Dbar x|| >= k1 ||x|| - k2 sqrt(log p / n) ||x||_1 with k1 = 1/(8 (a_u - a_l))
    n, p = 400, 64
    raw = sample_bernoulli_ensemble(n, p, 4)
    A = embed_physical(raw)
    dbar = build_basis("dct", p).dbar
    rep = re_margin(math.sqrt(n) * raw.entries, dbar, n_samples=500, seed=2)
    k1 = 1 / (8 * 2.0)
    k2 = rep.c_hat / (2 * 2.0)
    X = np.random.default_rng(0).standard_normal((p - 1, 200))
    X /= np.linalg.norm(X, axis=0)
    lhs = math.sqrt(n) * np.linalg.norm(A.entries @ dbar @ X, axis=0)
    rhs = k1 * np.linalg.norm(X, axis=0) - k2 * math.sqrt(math.log(p) / n) * np.abs(X).sum(axis=0)
    assert np.all(lhs >= rhs - 1e-12)
