"""Brute-force reference computations and the quick oracle suite behind ``leo-gfra validate``.

Every oracle here is written independently of the fast paths it checks:
explicit loops, exhaustive enumeration or direct numerical maximization.
"""

import itertools
import time

import numpy as np

from .channel import PathParams, build_dda_channel, sample_paths
from .config import SystemConfig
from .em import em_update_gm, em_update_sigma2
from .frontend import forward_model, gen_codes, gen_symbols, oracle_receive
from .gamp import run_gamp
from .messages import GMMessage
from .mrf import MRFParams, run_bp, support_marginals

_SUPPORTS = {}


def _supports(n):
    if n not in _SUPPORTS:
        _SUPPORTS[n] = np.array(list(itertools.product([0, 1], repeat=n)), dtype=bool)
    return _SUPPORTS[n]


def bg_mmse(y, A, rho, phi, sigma2):
    """Exact posterior mean of a Bernoulli-Gaussian x given y = A x + CN(0, sigma2).

    Sums over every support pattern: each is a Gaussian linear model whose
    evidence and conditional mean are closed form.
    """
    m, n = A.shape
    S = _supports(n)
    D = S * float(phi)
    cov = np.einsum("mn,sn,kn->smk", A, D, A.conj()) + sigma2 * np.eye(m)
    chol = np.linalg.cholesky(cov)
    sol = np.linalg.solve(cov, np.broadcast_to(y, (len(S), m))[..., None])[..., 0]
    quad = np.real(sol @ y.conj())
    logdet = 2.0 * np.sum(np.log(np.abs(np.diagonal(chol, axis1=1, axis2=2))), axis=1)
    k = S.sum(axis=1)
    lp = -quad - logdet + k * np.log(rho) + (n - k) * np.log1p(-rho)
    w = np.exp(lp - lp.max())
    w /= w.sum()
    return w @ (D * (sol @ A.conj()))


def bg_instance(seed, n=12, m=8, rho=0.25, phi=1.0, sigma2=1e-4):
    rng = np.random.default_rng(seed)
    A = (rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))) / np.sqrt(2 * m)
    x = (rng.random(n) < rho) * (rng.standard_normal(n) + 1j * rng.standard_normal(n)) * np.sqrt(phi / 2)
    z = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    return A, x, A @ x + np.sqrt(sigma2 / 2) * z


def bg_gamp_mean(y, A, rho, phi, sigma2, vector=True):
    n = A.shape[1]
    prior = GMMessage(np.full((n, 1, 1), np.log(rho)), np.zeros((n, 1, 1)),
                      np.full((n, 1, 1), float(phi)), np.log1p(-rho))
    x, _ = run_gamp(y[:, None], A, sigma2, prior, rho * phi, n_iter=500, vector=vector)
    return x[:, 0]


def correlation(a, b):
    den = np.linalg.norm(a) * np.linalg.norm(b)
    return float(np.abs(np.vdot(a, b)) / den) if den > 0 else 0.0


def ising_marginals(field_llr, evidence, beta):
    """Exact p(s=+1) per site of a small grid by enumerating all 2^(rows*cols) states.

    Site potential exp(s * (field_llr + evidence) / 2), pair potential exp(beta s s')
    on 4-connected neighbours.
    """
    R, Cn = evidence.shape
    h = (field_llr + evidence) / 2.0
    states = np.array(list(itertools.product([-1, 1], repeat=R * Cn)), dtype=float).reshape(-1, R, Cn)
    e = np.sum(states * h, axis=(1, 2))
    e += beta * np.sum(states[:, :, 1:] * states[:, :, :-1], axis=(1, 2))
    e += beta * np.sum(states[:, 1:, :] * states[:, :-1, :], axis=(1, 2))
    w = np.exp(e - e.max())
    w /= w.sum()
    return np.tensordot(w, (states + 1) / 2, axes=1)


def dda_channel_scalar(paths: PathParams, activity, cfg: SystemConfig):
    """Term-by-term evaluation of the DDA channel with explicit kernel sums."""
    def pi_sum(x, n):
        return sum(np.exp(-2j * np.pi * x * i / n) for i in range(n)) / n

    M, N, Ny, Nz = cfg.M, cfg.N, cfg.N_y, cfg.N_z
    H = np.zeros((M, cfg.U, M, N, cfg.N_a), dtype=complex)
    for u in range(cfg.U):
        if not activity[u]:
            continue
        for p in range(cfg.P):
            h, tau, nu = paths.gain[u, p], paths.tau[u, p], paths.nu[u, p]
            ty, tz = paths.theta_y[u, p], paths.theta_z[u, p]
            lp = int(round((tau % cfg.T) / cfg.T_s)) % M
            for l in range(M):
                ph = np.exp(2j * np.pi * (cfg.M_cp + l) * cfg.T_s * nu) * np.exp(-2j * np.pi * tau * nu)
                for i in range(N):
                    kp = i - N // 2
                    d = pi_sum(kp - N * cfg.T_sym * nu, N)
                    for ay in range(Ny):
                        for az in range(Nz):
                            a = pi_sum(ay - Ny * ty / 2, Ny) * pi_sum(az - Nz * tz / 2, Nz)
                            H[l, u, lp, i, az + Nz * ay] += np.sqrt(Ny * Nz) * h * ph * d * a
    return H


def mixed_grid_paths(cfg: SystemConfig, rng):
    """Random paths where roughly half the devices sit exactly on the Doppler/angle grid."""
    p = sample_paths(cfg.replace(shared_delay=False), rng)
    snap = rng.random(cfg.U) < 0.5
    step = 1.0 / (cfg.N * cfg.T_sym)
    p.nu[snap] = np.round(p.nu[snap] / step) * step
    p.theta_y[snap] = np.round(p.theta_y[snap] * cfg.N_y / 2) * 2 / cfg.N_y
    p.theta_z[snap] = np.round(p.theta_z[snap] * cfg.N_z / 2) * 2 / cfg.N_z
    return p


ORACLE_CFG = SystemConfig(U=2, Q=2, M=4, N=3, N_y=2, N_z=2, P=2, M_cp=8,
                          delay_range=(0.0, 4e-4), doppler_range=(-2e3, 2e3), sigma2=0.0)


def forward_model_error(seed, cfg: SystemConfig = ORACLE_CFG):
    """Relative Frobenius error of the vectorized observation against the scalar sums."""
    rng = np.random.default_rng(seed)
    act = np.ones(cfg.U, dtype=int)
    paths = mixed_grid_paths(cfg, rng)
    t, codes = gen_symbols(cfg, rng), gen_codes(cfg, rng)
    fast = forward_model(build_dda_channel(paths, act, cfg), t, codes, cfg, 0, sigma2=0.0).Y
    slow = oracle_receive(dda_channel_scalar(paths, act, cfg), t, codes, act, cfg).Y
    return float(np.linalg.norm(fast - slow) / np.linalg.norm(slow))


def grid_argmax(f, grid, zooms=4):
    """Grid search refined by repeatedly re-gridding around the best point."""
    geometric = grid[0] > 0 and np.allclose(grid[2] / grid[1], grid[1] / grid[0])
    for _ in range(zooms):
        i = int(np.argmax(f(grid)))
        lo, hi = grid[max(i - 2, 0)], grid[min(i + 2, grid.size - 1)]
        grid = np.geomspace(lo, hi, 2001) if geometric else np.linspace(lo, hi, 2001)
    return grid[np.argmax(f(grid))]


def em_fixture(seed, U=3, K=2, n=40):
    rng = np.random.default_rng(seed)
    resp = rng.dirichlet(np.ones(K), size=(n, U)) * rng.uniform(0.05, 1.0, size=(n, U, 1))
    means = rng.normal(size=(n, U, K)) + 1j * rng.normal(size=(n, U, K))
    variances = rng.uniform(0.01, 2.0, size=(n, U, K))
    return resp, means, variances


def em_stationarity_error(seed):
    """Largest relative gap between each closed-form M-step and a grid maximization of its Q."""
    errs = []
    rng = np.random.default_rng(seed)
    y = rng.normal(size=50) + 1j * rng.normal(size=50)
    z = y + rng.uniform(0.1, 2) * (rng.normal(size=50) + 1j * rng.normal(size=50))
    tz = rng.uniform(0.0, 1.0, size=50)
    res = np.sum(np.abs(y - z) ** 2 + tz)
    ref = grid_argmax(lambda s2: -y.size * np.log(s2) - res / s2, np.geomspace(1e-3, 1e3, 2001))
    errs.append(abs(em_update_sigma2(y, z, tz) - ref) / ref)

    resp, means, variances = em_fixture(seed)
    U, K = resp.shape[1:]
    omega, mu, phi = em_update_gm(resp, means, variances, np.full((U, K), 1.0 / K),
                                  np.zeros((U, K)), np.ones((U, K)), device_axis=1)
    lin = np.linspace(-3, 3, 2001)
    for u in range(U):
        for k in range(K):
            r, m, v = resp[:, u, k], means[:, u, k], variances[:, u, k]
            re = grid_argmax(lambda x: -np.sum(r[:, None] * (m.real[:, None] - x) ** 2, axis=0), lin)
            im = grid_argmax(lambda x: -np.sum(r[:, None] * (m.imag[:, None] - x) ** 2, axis=0), lin)
            errs.append(abs(mu[u, k] - (re + 1j * im)) / abs(re + 1j * im))
            e2 = np.abs(m - mu[u, k]) ** 2 + v
            p = grid_argmax(lambda q: -np.sum(r[:, None] * (np.log(q) + e2[:, None] / q), axis=0),
                            np.geomspace(1e-3, 1e2, 2001))
            errs.append(abs(phi[u, k] - p) / p)
        mass = resp[:, u].sum(axis=0)
        if K == 2:
            w = grid_argmax(lambda q: mass[0] * np.log(q) + mass[1] * np.log1p(-q),
                            np.linspace(1e-6, 1 - 1e-6, 2001))
            errs.append(abs(omega[u, 0] - w) / w)
    return float(max(errs))


def chain_error(seed, alpha, beta, shape=(1, 6), damping=1.0):
    """Max absolute gap between BP marginals and enumeration on a small grid."""
    ev = np.random.default_rng(seed).normal(scale=2.0, size=shape)
    p = MRFParams(alpha, beta)
    om = run_bp(ev, p, max_sweeps=500, damping=damping)
    return float(np.max(np.abs(support_marginals(ev, om, p) - ising_marginals(p.field_llr, ev, beta))))


def run_validation(scale=1.0):
    """Quick oracle suite; returns ``[(name, passed, detail, seconds)]``.

    ``scale`` multiplies the instance counts (1.0 is a few seconds).
    """
    n = lambda k: max(1, int(round(k * scale)))
    out = []

    def check(name, fn):
        t0 = time.perf_counter()
        ok, detail = fn()
        out.append((name, bool(ok), detail, time.perf_counter() - t0))

    def forward():
        err = max(forward_model_error(s) for s in range(n(10)))
        return err < 1e-10, f"max rel err {err:.2e} (< 1e-10)"

    def gamp():
        cors = [correlation(bg_gamp_mean(y, A, 0.25, 1.0, 1e-4), bg_mmse(y, A, 0.25, 1.0, 1e-4))
                for A, _, y in (bg_instance(s) for s in range(n(20)))]
        return np.mean(cors) > 0.95, f"mean corr {np.mean(cors):.4f} (> 0.95)"

    def mrf():
        tree = max(chain_error(s, a, b) for s, (a, b) in
                   enumerate(itertools.product([0.0, 0.4, 1.0], repeat=2)))
        loopy = max(chain_error(s, 0.4, 0.4, (2, 2), 0.5) for s in range(n(10)))
        return tree < 1e-10 and loopy < 0.05, f"chain {tree:.1e} (< 1e-10), 2x2 {loopy:.3f} (< 0.05)"

    def em():
        err = max(em_stationarity_error(s) for s in range(n(5)))
        return err < 1e-3, f"max rel gap {err:.1e} (< 1e-3)"

    check("forward-model", forward)
    check("gamp-bg-mmse", gamp)
    check("mrf-exactness", mrf)
    check("em-stationarity", em)
    return out
