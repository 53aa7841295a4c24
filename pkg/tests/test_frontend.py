import numpy as np
import pytest

from leo_gfra.channel import build_dda_channel, sample_paths
from leo_gfra.config import SystemConfig
from leo_gfra.frontend import (build_code_matrix, build_w, code_blocks, forward_model, gen_codes,
                               gen_symbols, oracle_receive)


def _instance(cfg, seed):
    rng = np.random.default_rng(seed)
    act = np.array([1, 1])
    H = build_dda_channel(sample_paths(cfg, rng), act, cfg)
    return H, gen_symbols(cfg, rng), gen_codes(cfg, rng), act


def test_code_variance():
    cfg = SystemConfig(U=625, Q=20, N=5, M=16)
    c = gen_codes(cfg, 1)
    assert c.size == 1_000_000
    assert np.mean(np.abs(c) ** 2) == pytest.approx(0.01, abs=1e-3)
    np.testing.assert_array_equal(c, gen_codes(cfg, 1))
    one = gen_codes(SystemConfig(U=4000, Q=1, N=1, M=16), 2)
    assert np.mean(np.abs(one) ** 2) == pytest.approx(1.0, abs=0.02)


def test_code_matrix_n1_is_scalar_blocks():
    cfg = SystemConfig(U=2, Q=3, M=4, N=1)
    codes = gen_codes(cfg, 0)
    for l in range(4):
        C = build_code_matrix(codes, l)
        for u in range(2):
            for lp in range(4):
                np.testing.assert_array_equal(C[:, u * 4 + lp], codes[u, :, 0, (l - lp) % 4])


def test_blocks_are_circulant_with_row_sums():
    cfg = SystemConfig(U=2, Q=2, M=4, N=5)
    codes = gen_codes(cfg, 3)
    B = code_blocks(codes, 1)  # [u, q, k, lp, i]
    for u in range(2):
        for q in range(2):
            for lp in range(4):
                blk = B[u, q, :, lp, :]
                np.testing.assert_array_equal(blk[1:, 1:], blk[:-1, :-1])  # circulant
                col = codes[u, q, :, (1 - lp) % 4]
                np.testing.assert_allclose(blk @ np.ones(5), 5 * col.mean(), atol=1e-14)


def test_build_w_kronecker_oracle(small_cfg):
    H, t, _, _ = _instance(small_cfg, 4)
    U, M, N = small_cfg.U, small_cfg.M, small_cfg.N
    for l in range(M):
        Hl = H[l].reshape(U * M * N, -1)
        tl = np.concatenate([[t[u, (l - lp) % M] for lp in range(M)] for u in range(U)])
        Tl = np.kron(np.diag(tl), np.eye(N))
        np.testing.assert_allclose(build_w(H, t, l), Tl @ Hl, atol=1e-14)
    np.testing.assert_array_equal(build_w(H, np.ones_like(t), 2), H[2].reshape(U * M * N, -1))


def test_one_hot_w_against_oracle(small_cfg):
    codes = gen_codes(small_cfg, 8)
    t = np.ones((2, 4))
    H = np.zeros((4, 2, 4, 3, 4), dtype=complex)
    H[2, 1, 3, 0, 1] = 1.0
    want = oracle_receive(H, t, codes, [1, 1], small_cfg).Y
    got = forward_model(H, t, codes, small_cfg, 0, sigma2=0.0).Y
    np.testing.assert_allclose(got, want, atol=1e-12)
    # the nonzero column is a cyclic shift of code column (2 - 3) mod 4 = 3
    y = got[2, :3, 1]
    c = codes[1, 0, :, 3]
    np.testing.assert_allclose(y, np.roll(c, -1), atol=1e-14)


def test_single_path_hand_evaluation():
    cfg = SystemConfig(U=1, Q=1, M=4, N=3, N_y=1, N_z=1, P=1, M_cp=4, sigma2=0.0)
    codes = gen_codes(cfg, 1)
    H = np.zeros((4, 1, 4, 3, 1), dtype=complex)
    H[:, 0, 1, 1, 0] = 0.5 * np.exp(0.3j * np.arange(4))  # on-grid: zero Doppler, delay bin 1
    Y = oracle_receive(H, np.ones((1, 4)), codes, [1], cfg).Y
    for l in range(4):
        np.testing.assert_allclose(Y[l, :, 0], H[l, 0, 1, 1, 0] * codes[0, 0, :, (l - 1) % 4], atol=1e-15)


def test_zero_cases(small_cfg):
    codes = gen_codes(small_cfg, 1)
    H = np.zeros((4, 2, 4, 3, 4), dtype=complex)
    t = gen_symbols(small_cfg, 1)
    assert np.all(forward_model(H, t, codes, small_cfg, 0, sigma2=0.0).Y == 0)
    H2, t2, codes2, _ = _instance(small_cfg, 2)
    assert np.all(oracle_receive(H2, t2, codes2, [0, 0], small_cfg).Y == 0)


def test_forward_matches_oracle(small_cfg):
    H, t, codes, act = _instance(small_cfg, 11)
    a = forward_model(H, t, codes, small_cfg, 0, sigma2=0.0).Y
    b = oracle_receive(H, t, codes, act, small_cfg).Y
    assert np.linalg.norm(a - b) / np.linalg.norm(b) < 1e-10


def test_bilinearity(small_cfg):
    H1, t1, codes, _ = _instance(small_cfg, 12)
    H2, t2, _, _ = _instance(small_cfg, 13)
    f = lambda H, t: forward_model(H, t, codes, small_cfg, 0, sigma2=0.0).Y
    np.testing.assert_allclose(f(2 * H1 - H2, t1), 2 * f(H1, t1) - f(H2, t1), atol=1e-12)
    np.testing.assert_allclose(f(H1, t1 + 3 * t2), f(H1, t1) + 3 * f(H1, t2), atol=1e-12)


def test_noise_moment(small_cfg):
    H = np.zeros((4, 2, 4, 3, 4), dtype=complex)
    t = np.ones((2, 4))
    codes = gen_codes(small_cfg, 0)
    e = [np.sum(np.abs(forward_model(H, t, codes, small_cfg, s, sigma2=0.3).Y[1]) ** 2)
         for s in range(1000)]
    want = small_cfg.Q * small_cfg.N * small_cfg.N_a * 0.3
    assert np.mean(e) == pytest.approx(want, rel=0.05)
