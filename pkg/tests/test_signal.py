import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from poissoncs.basis import build_basis
from poissoncs.errors import ConfigurationError
from poissoncs.sensing import sample_bernoulli_ensemble
from poissoncs.signal import (
    SignalSpec,
    best_s_term,
    bias_term,
    check_membership,
    generate_signal,
    lq_power,
    threshold_split,
)


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(["dct", "dht", "dwt_haar"]), st.integers(2, 7), st.floats(0.1, 1.0),
       st.floats(0.01, 100.0), st.integers(0, 2**63 - 1))
def test_generated_signal_invariants(kind, logp, q, R_q, seed):
    p = 2 ** logp
    B = build_basis(kind, p)
    g = generate_signal(SignalSpec(p, q, R_q, B, seed))
    assert g.theta[0] == 1 / math.sqrt(p)
    assert lq_power(g.theta_bar, q) <= R_q * (1 + 1e-12)
    assert g.f.min() >= 0
    assert abs(g.f.sum() - 1.0) <= 1e-10
    assert abs((B.dbar @ g.theta_bar).sum()) <= 1e-10
    assert check_membership(g.f, B, q, R_q).passed


def test_large_scale_membership():
    B = build_basis("dct", 1024)
    g = generate_signal(SignalSpec(1024, 0.5, 7.0, B, 5))
    assert check_membership(g.f, B, 0.5, 7.0).passed


def test_no_rescale_for_huge_radius():
    B = build_basis("dct", 64)
    small = generate_signal(SignalSpec(64, 0.5, 1e9, B, 3))
    # same draw with a radius that forces rescaling is a scalar multiple
    tight = generate_signal(SignalSpec(64, 0.5, 0.1, B, 3))
    c = tight.theta_bar / small.theta_bar
    assert np.allclose(c, c[0]) and c[0] < 1
    assert lq_power(tight.theta_bar, 0.5) == pytest.approx(0.1, rel=1e-12)
    lam_p = np.abs(B.columns).sum(axis=1).max()
    assert small.theta_bar.max() <= 1 / (64 * lam_p)


def test_deterministic_per_seed():
    B = build_basis("dct", 32)
    a = generate_signal(SignalSpec(32, 0.5, 2.0, B, 9))
    b = generate_signal(SignalSpec(32, 0.5, 2.0, B, 9))
    np.testing.assert_array_equal(a.theta, b.theta)


def test_spec_validation():
    B = build_basis("dct", 8)
    for q, R in [(0.0, 1.0), (1.5, 1.0), (0.5, 0.0)]:
        with pytest.raises(ConfigurationError):
            SignalSpec(8, q, R, B)
    with pytest.raises(ConfigurationError):
        SignalSpec(16, 0.5, 1.0, B)


def test_membership_reports():
    p = 16
    B = build_basis("dct", p)
    assert check_membership(np.full(p, 1 / p), B, 0.5, 1e-6).passed
    f = np.full(p, 1 / p)
    f[0] = -0.01
    f[1] += 0.01 + 1 / p * 0
    rep = check_membership(f, B, 0.5, 100.0)
    assert not rep.positivity_ok and not rep.passed
    rep = check_membership(np.full(p, 2 / p), B, 0.5, 100.0)
    assert rep.positivity_ok and not rep.normalization_ok


def test_threshold_split_examples():
    s = threshold_split(np.zeros(4), 0.1, 0.5, 1.0)
    assert s.card == 0 and s.tail_l1 == 0 and s.support.size == 0
    s = threshold_split(np.array([0.5, 0.1]), 0.2, 1.0, 0.6)
    assert s.card == 1 and s.card_bound == pytest.approx(3.0)
    assert s.tail_l1 == pytest.approx(0.1) and s.tail_bound == pytest.approx(0.6)
    x = np.array([0.01, -0.02, 0.03])
    s = threshold_split(x, 1.0, 0.5, 10.0)
    assert s.card == 0 and s.tail_l1 == pytest.approx(0.06)
    with pytest.raises(ConfigurationError):
        threshold_split(x, 0.0, 0.5, 1.0)


def test_threshold_bounds_on_generated_signals():
    B = build_basis("dct", 256)
    for seed in range(5):
        g = generate_signal(SignalSpec(256, 0.5, 2.0, B, seed))
        for eta in np.geomspace(1e-7, 1e-2, 30):
            threshold_split(g.theta_bar, eta, 0.5, 2.0)  # asserts internally


def test_best_s_term():
    x = np.array([3.0, -1.0, 2.0])
    kept, l1, l2 = best_s_term(x, 2)
    np.testing.assert_array_equal(kept, [3.0, 0.0, 2.0])
    assert l1 == 1.0 and l2 == 1.0
    kept, l1, _ = best_s_term(x, 0)
    assert not kept.any() and l1 == 6.0
    assert best_s_term(x, 3)[1:] == (0.0, 0.0)
    # ties: lowest index kept
    np.testing.assert_array_equal(best_s_term(np.array([1.0, -1.0, 1.0]), 1)[0], [1.0, 0.0, 0.0])
    with pytest.raises(ConfigurationError):
        best_s_term(x, 4)


def test_bias_term():
    p, n = 8, 12
    B = build_basis("dct", p)
    raw = sample_bernoulli_ensemble(n, p, 1).entries
    theta = np.zeros(p)
    theta[0] = 1 / math.sqrt(p)
    theta[[2, 5]] = [0.01, -0.02]
    f = B.columns @ theta
    assert bias_term(raw, B, f, 2) == pytest.approx(0.0, abs=1e-14)
    assert bias_term(raw, B, B.d1 / math.sqrt(p), 0) == pytest.approx(0.0, abs=1e-14)

    rng = np.random.default_rng(2)
    theta = np.concatenate([[1 / math.sqrt(p)], rng.uniform(0, 0.01, p - 1)])
    f = B.columns @ theta
    s = 3
    top = np.argsort(-np.abs(theta[1:]), kind="stable")[:s] + 1
    ts = np.zeros(p)
    ts[0] = theta[0]
    ts[top] = theta[top]
    r = f - B.columns @ ts
    expected = max(np.linalg.norm(raw @ r) ** 2, np.abs(r).sum())
    assert bias_term(raw, B, f, s) == pytest.approx(expected, rel=1e-12)
