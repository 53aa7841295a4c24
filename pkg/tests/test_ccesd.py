import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from leo_gfra.ccesd import (gm_product, map_symbols, msg_e_to_s, msg_g_to_h, msg_g_to_t, msg_g_to_w,
                            msg_t_to_g, posterior_beliefs, symbol_totals)
from leo_gfra.messages import GMMessage, log_cn


def test_g_to_h_single_symbol_is_identity():
    m = msg_g_to_h(0.3 + 1j, 0.2, np.zeros(1), [1.0])
    assert m.weights == pytest.approx([1.0])
    assert m.means == pytest.approx([0.3 + 1j])
    assert m.variances == pytest.approx([0.2])


def test_g_to_h_one_hot_conditions_on_symbol():
    m = msg_g_to_h(2.0, 0.5, np.log([1e-300, 1.0]), [1.0, 2.0])
    assert m.weights[1] == pytest.approx(1.0)
    assert m.means[1] == pytest.approx(1.0)
    assert m.variances[1] == pytest.approx(0.125)


def test_g_to_h_uniform_two_symbols():
    m = msg_g_to_h(1.0, 0.4, np.log([0.5, 0.5]), [1.0, 2.0])
    assert m.variances[0] / m.variances[1] == pytest.approx(4.0)
    assert m.weights == pytest.approx([0.8, 0.2])


def test_g_to_h_integrates_the_scaled_likelihood():
    # sum_m p_m CN(h a_m | r, tau) as a density in h equals the mixture up to one constant
    r, tau, p, a = 0.5 - 0.2j, 0.3, np.array([0.2, 0.5, 0.3]), np.array([0.5, 1.0, 2.0])
    m = msg_g_to_h(r, tau, np.log(p), a)
    h = np.array([0.1, -0.4 + 0.6j, 1.2j, 0.9])
    direct = np.sum(p * np.exp(log_cn(h[:, None] * a, r, tau)), axis=1)
    mix = np.sum(m.weights * np.exp(log_cn(h[:, None], m.means, m.variances)), axis=1)
    ratio = direct / mix
    np.testing.assert_allclose(ratio, ratio[0], rtol=1e-10)


def test_g_to_h_rejects_zero_amplitude():
    with pytest.raises(ValueError):
        msg_g_to_h(1.0, 1.0, np.log([0.5, 0.5]), [0.0, 1.0])


def test_e_to_s_closed_form():
    tau, phi = 0.3, 1.7
    llr = msg_e_to_s(GMMessage.gaussian(0.0, tau), GMMessage.gaussian(0.0, phi))
    assert np.exp(llr) == pytest.approx(tau / (tau + phi))
    p1 = 1 / (1 + np.exp(-llr))
    assert p1 == pytest.approx(tau / (2 * tau + phi))


def test_e_to_s_limits():
    prior = GMMessage.gaussian(0.0, 1.0)
    assert msg_e_to_s(GMMessage.gaussian(50.0, 0.1), prior) > 100
    assert msg_e_to_s(GMMessage.gaussian(0.0, 1e-12), prior) < -20


def test_g_to_t_point_mass_channel():
    a = np.array([1.0, 2.0, 3.0])
    h0, r, tau = 0.5 + 0.5j, 1.0 + 1.0j, 0.2
    lp = msg_g_to_t(GMMessage.point_mass(h0), r, tau, a)
    ref = log_cn(h0 * a, r, tau)
    np.testing.assert_allclose(lp, ref - np.logaddexp.reduce(ref), atol=1e-12)
    assert np.argmax(lp) == 1


def test_g_to_t_zero_observation_favours_smallest_amplitude():
    lp = msg_g_to_t(GMMessage.gaussian(0.0, 1.0), 0.0, 0.5, [1.0, 2.0, 3.0])
    assert np.all(np.diff(lp) < 0)


def test_g_to_t_uninformative():
    lp = msg_g_to_t(GMMessage.gaussian(0.3, 1.0), 0.5, 1e12, [1.0, 2.0, 3.0, 4.0])
    np.testing.assert_allclose(np.exp(lp), 0.25, atol=1e-9)


def _factor_tensor(rows, A):
    """log p-> for M = U = 1, N_a = 1 and one factor per Doppler row."""
    return np.log(np.asarray(rows, dtype=float)).reshape(1, 1, 1, len(rows), 1, A)


def test_t_to_g_single_factor_is_uniform():
    lp, _ = msg_t_to_g(_factor_tensor([[0.7, 0.2, 0.1]], 3))
    np.testing.assert_allclose(np.exp(lp).ravel(), 1 / 3)


def test_t_to_g_two_identical_one_hots():
    lp, _ = msg_t_to_g(_factor_tensor([[1.0, 1e-300], [1.0, 1e-300]], 2))
    np.testing.assert_allclose(np.exp(lp[0, 0, 0, 0, 0]), [1.0, 0.0], atol=1e-12)


def test_t_to_g_conflicting_contributors_cancel():
    lp, tot = msg_t_to_g(_factor_tensor([[0.9, 0.1], [0.1, 0.9], [0.5, 0.5]], 2))
    np.testing.assert_allclose(np.exp(lp[0, 0, 0, 2, 0]), [0.5, 0.5])
    np.testing.assert_allclose(np.exp(lp[0, 0, 0, 0, 0]), [0.1, 0.9])


def test_symbol_totals_gather_by_cyclic_offset():
    rng = np.random.default_rng(0)
    M, U, N, Na, A = 3, 2, 2, 2, 2
    lp = rng.normal(size=(M, U, M, N, Na, A))
    tot = symbol_totals(lp)
    ref = np.zeros((U, M, A))
    for l, u, q in itertools.product(range(M), range(U), range(M)):
        ref[u, (l - q) % M] += lp[l, u, q].sum(axis=(0, 1))
    np.testing.assert_allclose(tot, ref)


def test_t_to_g_collapsed_product_resets_uniform():
    bad = np.full((1, 1, 1, 2, 1, 2), -np.inf)
    bad[..., 0] = 0.0
    bad[0, 0, 0, 1] = [-np.inf, 0.0]
    lp, _ = msg_t_to_g(bad)
    assert np.all(np.isfinite(lp))


def test_g_to_w_point_mass_and_one_hot():
    h0 = 0.3 - 0.4j
    m = msg_g_to_w(GMMessage.point_mass(h0), np.log([1e-300, 1.0]), [1.0, 2.0])
    mean, var = m.moments()
    assert mean == pytest.approx(2 * h0)
    assert var == pytest.approx(0.0, abs=1e-12)


def test_g_to_w_spike_only():
    h = GMMessage(np.array([-np.inf]), np.array([1.0]), np.array([1.0]), 0.0)
    mean, var = msg_g_to_w(h, np.log([0.5, 0.5]), [1.0, 2.0]).moments()
    assert mean == 0 and var == 0


def test_g_to_w_enumerates_pairs():
    h = GMMessage(np.log([0.6]), np.array([0.5 + 0.5j]), np.array([0.2]), np.log(0.4))
    p = np.array([0.3, 0.7])
    a = np.array([1.0, 3.0])
    m = msg_g_to_w(h, np.log(p), a)
    np.testing.assert_allclose(m.weights, 0.6 * p)
    np.testing.assert_allclose(m.means, (0.5 + 0.5j) * a)
    np.testing.assert_allclose(m.variances, 0.2 * a**2)
    assert m.spike == pytest.approx(0.4)


def test_gm_product_point_mass_absorbs():
    ls, lw, mu, var = gm_product(GMMessage.point_mass(0.2), GMMessage.gaussian(1.0, 0.5))
    assert np.exp(lw).sum() == pytest.approx(1.0)
    assert mu[0, 0] == pytest.approx(0.2)
    assert var[0, 0] == 0.0


def test_gm_product_spike_survives_against_density():
    a = GMMessage(np.log([0.5]), np.array([3.0]), np.array([0.01]), np.log(0.5))
    ls, lw, _, _ = gm_product(a, GMMessage.gaussian(0.0, 0.1))
    assert np.exp(ls) > 0.999


def _known_channel_instance(seed):
    """U = 1, M = 2, N = N_a = 1 with a known channel and noisy extrinsic observations."""
    rng = np.random.default_rng(seed)
    a = np.array([1.0, 2.0])
    M = 2
    h = rng.normal(size=(M, 1, M, 1, 1)) + 1j * rng.normal(size=(M, 1, M, 1, 1))
    t = rng.integers(0, 2, size=M)
    tau = 0.8
    sym = (np.arange(M)[:, None] - np.arange(M)[None, :]) % M
    w = h * a[t[sym]][:, None, :, None, None]
    r = w + np.sqrt(tau / 2) * (rng.normal(size=w.shape) + 1j * rng.normal(size=w.shape))
    return a, h, r, tau, sym


@pytest.mark.parametrize("seed", range(5))
def test_symbol_posterior_matches_enumeration(seed):
    a, h, r, tau, sym = _known_channel_instance(seed)
    M = 2
    h_msg = GMMessage.point_mass(h)
    log_right = msg_g_to_t(h_msg, r, tau, a)
    log_left, totals = msg_t_to_g(log_right)
    beliefs = posterior_beliefs(r, np.full(r.shape, tau), h_msg, log_left, totals, a)
    joint = {}
    for combo in itertools.product(range(2), repeat=M):
        t = np.array(combo)
        w = h * a[t[sym]][:, None, :, None, None]
        joint[combo] = np.sum(log_cn(r, w, tau))
    lz = np.logaddexp.reduce(list(joint.values()))
    for k in range(M):
        marg = [np.exp(np.logaddexp.reduce([v for c, v in joint.items() if c[k] == m]) - lz) for m in range(2)]
        np.testing.assert_allclose(np.exp(beliefs.t_log_post[0, k]), marg, atol=1e-12)


def test_map_symbols_tie_and_one_hot():
    a = [1.0, 2.0, 3.0]
    assert map_symbols(np.log(np.full((1, 1, 3), 1 / 3)), a)[0, 0] == 1.0
    assert map_symbols(np.log([[[1e-9, 1e-9, 1.0]]]), a)[0, 0] == 3.0


def test_map_symbols_noiseless_known_channel():
    a, h, _, _, sym = _known_channel_instance(7)
    t = np.array([1, 0])
    w = h * a[t[sym]][:, None, :, None, None]
    h_msg = GMMessage.point_mass(h)
    right = msg_g_to_t(h_msg, w, 1e-9, a)
    _, totals = msg_t_to_g(right)
    np.testing.assert_array_equal(map_symbols(totals, a)[0], a[t])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(-30.0, 30.0))
def test_symbol_argmax_invariant_to_rescaling(seed, shift):
    rng = np.random.default_rng(seed)
    lp = rng.normal(size=(2, 1, 2, 2, 1, 3))
    _, tot = msg_t_to_g(lp)
    _, tot2 = msg_t_to_g(lp + shift)
    np.testing.assert_array_equal(np.argmax(tot, -1), np.argmax(tot2, -1))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(1e-6, 1e3))
def test_emitted_messages_normalized(seed, tau):
    rng = np.random.default_rng(seed)
    shape = (2, 1, 2, 2, 2)
    r = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    a = np.array([0.5, 1.0, 1.5])
    log_left = np.log(rng.dirichlet(np.ones(3), size=shape))
    prior = GMMessage(np.log(np.full(shape + (2,), 0.3)), np.zeros(shape + (2,)),
                      np.broadcast_to([0.5, 2.0], shape + (2,)), np.log(np.full(shape, 0.4)))
    g_h = msg_g_to_h(r, tau, log_left, a)
    np.testing.assert_allclose(g_h.log_total(), 0.0, atol=1e-10)
    right = msg_g_to_t(prior, r, tau, a)
    np.testing.assert_allclose(np.exp(right).sum(-1), 1.0, atol=1e-10)
    left, totals = msg_t_to_g(right)
    np.testing.assert_allclose(np.exp(left).sum(-1), 1.0, atol=1e-10)
    np.testing.assert_allclose(msg_g_to_w(prior, left, a).log_total(), 0.0, atol=1e-10)
    b = posterior_beliefs(r, np.full(shape, tau), prior, left, totals, a)
    total = np.exp(b.h_log_spike) + np.exp(b.h_branch_logw).sum(axis=(-2, -1))
    np.testing.assert_allclose(total, 1.0, atol=1e-10)
    assert np.all(b.w_var >= 0) and np.all(b.h_var >= 0)
