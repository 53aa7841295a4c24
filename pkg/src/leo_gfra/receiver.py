"""Outer MRF-GM-AMP loop: GAMP per delay bin, CCESD messages, TSE support sweep, EM.

Tensors use the ``[l, u, lp, i, j]`` layout throughout; the GAMP unknown of bin
``l`` is ``W[l]`` flattened to ``(U*M*N, N_a)``.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logit

from . import fused
from .ccesd import (map_symbols, msg_e_to_s, msg_g_to_h, msg_g_to_t, msg_t_to_g, posterior_beliefs,
                    symbol_totals)
from .config import SystemConfig
from .em import Hyperparams, em_update_gm, em_update_gm_stats, em_update_sigma2
from .frontend import build_code_stack
from .gamp import GampDivergence, GampState, gamp_pass
from .messages import normalize_log
from .metrics import detect_activity
from .mrf import MRFParams, OmegaTables, mrf_neighbor_messages, msg_e_to_h_llr, msg_s_to_e

log = logging.getLogger(__name__)

DIVERGENCE_PATIENCE = 5
XI_FRACTION = 0.1


@dataclass
class ReceiverOptions:
    max_iter: int = 50
    tol: float = 1e-4
    gamp_damping: float = 0.7
    mrf_damping: float = 0.5
    alpha: float = 0.4
    beta: float = 0.4
    xi_th: float = 0.0  # <= 0: automatic
    use_mrf: bool = True
    learn_sigma2: bool = True
    sigma2_init: float = None
    support_init: np.ndarray = None  # optional (U, M, N, N_a) log-odds for genie-style starts
    symbol_damping: float = 1.0  # weight of the new p<- table (log domain)
    support_damping: float = 1.0  # weight of the new extrinsic support LLRs
    fused: bool = True  # compiled per-entry kernels; False runs the numpy message functions

    @classmethod
    def from_experiment(cls, exp, **kw):
        base = dict(max_iter=exp.max_iter, tol=exp.tol, gamp_damping=exp.gamp_damping,
                    mrf_damping=exp.mrf_damping, alpha=exp.alpha, beta=exp.beta, xi_th=exp.xi_th,
                    use_mrf=exp.baseline != "no-mrf")
        base.update(kw)
        return cls(**base)


@dataclass
class Beliefs:
    w_mean: np.ndarray
    w_var: np.ndarray
    h_mean: np.ndarray
    log_spike: np.ndarray
    t_log_post: np.ndarray  # (U, M, A)

    @property
    def support_prob(self):
        return -np.expm1(self.log_spike)


@dataclass
class ReceiverResult:
    activity: np.ndarray  # (U,)
    H: np.ndarray  # [l, u, lp, i, j]
    symbols: np.ndarray  # (U, M) symbol amplitudes, zero for inactive devices
    iterations: int
    converged: bool
    W: np.ndarray = None
    support_prob: np.ndarray = None
    hyper: Hyperparams = None
    residuals: list = field(default_factory=list)


def auto_threshold(cfg: SystemConfig, fraction=XI_FRACTION):
    """Energy threshold as a fraction of an active device's mean W energy.

    Unit total path power puts ``N_a`` energy per received delay into each
    active device's DDA block, so its mean W energy is ``M N_a E[a^2]``.
    """
    return fraction * cfg.M * cfg.N_a * float(np.mean(cfg.A ** 2))


def _initial_slab_energy(Y, cfg: SystemConfig):
    """Per-entry slab power guess: W energy per bin from ``Y``, spread over the
    blocks of the expected active devices."""
    energy_per_bin = np.sum(np.abs(Y) ** 2) / cfg.M  # code columns have unit norm
    active = max(cfg.U * cfg.p_lambda, 1.0)
    cells = active * cfg.N * cfg.N_a * float(np.mean(cfg.A ** 2))
    return max(energy_per_bin / cells, 1e-12)


class _Loop:
    """Message tables for one received frame."""

    def __init__(self, Y, C, cfg: SystemConfig, opts: ReceiverOptions):
        self.Y, self.C, self.cfg, self.opts = Y, C, cfg, opts
        M, U, N, Na = cfg.M, cfg.U, cfg.N, cfg.N_a
        self.shape = (M, U, M, N, Na)
        self.a = cfg.A
        A = len(self.a)
        sigma2 = opts.sigma2_init if opts.sigma2_init is not None else 0.1 * float(np.mean(np.abs(Y) ** 2))
        self.hp = Hyperparams.initial(U, cfg.K, max(sigma2, 1e-12), _initial_slab_energy(Y, cfg))
        self.params = MRFParams(opts.alpha, opts.beta)
        self.log_left = np.full(self.shape + (A,), -np.log(A))
        self.left = np.full(self.shape + (A,), 1.0 / A)
        self.omega = OmegaTables.zeros((U, M, N, Na))
        self.rate = 0.5  # learned support rate of the i.i.d. variant
        if opts.support_init is not None:
            self.ext_llr = np.broadcast_to(opts.support_init, self.shape).astype(float)
        elif opts.use_mrf:
            self.ext_llr = np.full(self.shape, self.params.field_llr)
        else:
            self.ext_llr = np.full(self.shape, logit(self.rate))
        h_msg = msg_e_to_h_llr(self.ext_llr, self.hp.slab())
        second = float(np.mean(h_msg.moments()[1])) * float(np.mean(self.a ** 2))
        self.gamp = GampState.init(C, Y, second, opts.gamp_damping)
        self.c2 = np.sum(np.abs(C) ** 2, axis=(-2, -1), keepdims=True)
        self.beliefs = None
        self._prev_w = None

    def step(self):
        """One outer iteration; returns the relative change of the W posterior mean."""
        cfg, opts, a = self.cfg, self.opts, self.a
        M, Na = cfg.M, cfg.N_a
        post = None if self.beliefs is None else (self.beliefs.w_mean.reshape(M, -1, Na),
                                                  self.beliefs.w_var.reshape(M, -1, Na))
        msg, _ = gamp_pass(self.Y, self.C, self.hp.sigma2, self.gamp, posterior=post, c2=self.c2)
        r = msg.mean.reshape(self.shape)
        tau_col = msg.var.reshape(M, Na)
        tau = np.broadcast_to(tau_col.reshape(M, 1, 1, 1, Na), self.shape)
        slab = self.hp.slab()
        hp = self.hp
        with np.errstate(divide="ignore"):
            lw = np.log(hp.omega)
        dims = np.array([cfg.U, M, cfg.N, Na])
        A = len(a)

        # channel messages and support evidence per delay bin
        if opts.fused:
            L, S, P, P0, c = fused.likelihood_terms(r.ravel(), tau_col, a, lw, hp.mu, hp.phi, dims)
            evidence = fused.support_evidence(L, S, P, c, self.left.reshape(-1, A),
                                              self.log_left.reshape(-1, A)).reshape(self.shape)
        else:
            evidence = msg_e_to_s(msg_g_to_h(r, tau, self.log_left, a), slab)
        if opts.use_mrf:
            self.omega = mrf_neighbor_messages(evidence.sum(axis=0), self.params, self.omega, opts.mrf_damping)
            ext = msg_s_to_e(evidence, self.omega, self.params)
        else:
            ext = np.full(self.shape, logit(self.rate))
        if opts.support_damping < 1.0 and self.beliefs is not None:
            d = opts.support_damping
            ext = d * ext + (1.0 - d) * self.ext_llr
        self.ext_llr = ext

        # symbol messages
        if opts.fused:
            log_right = fused.symbol_messages(L, S, P, P0, self.ext_llr.ravel())
            totals = symbol_totals(log_right.reshape(self.shape + (A,)))
            left, lin, resets = fused.extrinsic_symbols(log_right, totals, dims)
            if resets:
                log.warning("symbol message collapsed to zero at %d factors; reset to uniform", resets)
            left, lin = left.reshape(self.shape + (A,)), lin.reshape(self.shape + (A,))
        else:
            h_msg = msg_e_to_h_llr(self.ext_llr, slab)
            left, totals = msg_t_to_g(msg_g_to_t(h_msg, r, tau, a))
            lin = None
        if opts.symbol_damping < 1.0 and self.beliefs is not None:
            left = normalize_log(opts.symbol_damping * left + (1.0 - opts.symbol_damping) * self.log_left)
            lin = None
        self.log_left = left
        self.left = np.exp(left) if lin is None else lin

        # posteriors and EM
        if opts.learn_sigma2:
            hp.sigma2 = em_update_sigma2(self.Y, self.gamp.z_mean, self.gamp.z_var)
        if opts.fused:
            w_mean, w_var, h_mean, _, log_spike, S0, S1, S2 = fused.posteriors(
                r.ravel(), tau_col, L, S, P, P0, c, self.ext_llr.ravel(), self.left.reshape(-1, A),
                self.log_left.reshape(-1, A), a, hp.mu, hp.phi, dims)
            sh = self.shape
            self.beliefs = Beliefs(w_mean.reshape(sh), w_var.reshape(sh), h_mean.reshape(sh),
                                   log_spike.reshape(sh), normalize_log(totals))
            hp.omega, hp.mu, hp.phi = em_update_gm_stats(S0, S1, S2, hp.omega, hp.mu, hp.phi)
        else:
            b = posterior_beliefs(r, tau, h_msg, self.log_left, totals, a)
            self.beliefs = Beliefs(b.w_mean, b.w_var, b.h_mean, b.h_log_spike, b.t_log_post)
            hp.omega, hp.mu, hp.phi = em_update_gm(np.exp(b.h_branch_logw), b.h_branch_mean, b.h_branch_var,
                                                   hp.omega, hp.mu, hp.phi, device_axis=1)
        if not opts.use_mrf:
            self.rate = float(np.clip(np.mean(self.beliefs.support_prob), 1e-6, 1 - 1e-6))
        return gamp_residual_w(self.beliefs.w_mean, self._prev_w)

    def run(self):
        """Iterate until the W residual drops below ``tol``, the cap, or divergence.

        Divergence (a GAMP abort or ``DIVERGENCE_PATIENCE`` consecutive residual
        increases) returns the lowest-residual iterate seen so far.
        """
        opts = self.opts
        best = None
        residuals = []
        rises = 0
        converged = failed = False
        self._prev_w = None
        it = 0
        for it in range(1, opts.max_iter + 1):
            try:
                res = self.step()
            except GampDivergence as exc:
                log.warning("receiver aborted at iteration %d: %s", it, exc)
                failed = True
                break
            self._prev_w = self.beliefs.w_mean
            residuals.append(res)
            if it > 1 and (best is None or res <= best[0]):
                best = (res, self._snapshot())
            rises = rises + 1 if len(residuals) > 1 and res > residuals[-2] else 0
            if it > 1 and res < opts.tol:
                converged = True
                break
            if rises >= DIVERGENCE_PATIENCE:
                log.info("residual grew %d times in a row; returning best iterate", rises)
                failed = True
                break
        if failed:
            snap = best[1] if best is not None else None
        else:
            snap = self._snapshot() if self.beliefs is not None else None
        return snap, it, converged, residuals

    def _snapshot(self):
        b = self.beliefs
        return dict(w_mean=b.w_mean.copy(), h_mean=b.h_mean.copy(), support=b.support_prob,
                    t_log_post=b.t_log_post.copy(), hyper=self.hp.copy())


def gamp_residual_w(w, prev):
    """Relative Frobenius change of the W posterior mean (1 on the first iteration)."""
    if prev is None:
        return 1.0
    den = np.linalg.norm(w)
    num = np.linalg.norm(w - prev)
    if den == 0.0:
        return 0.0 if num == 0.0 else 1.0
    return float(num / den)


def run_receiver(Y, codes, cfg: SystemConfig, opts: ReceiverOptions = None, C=None) -> ReceiverResult:
    """Joint activity detection, channel estimation and symbol detection from ``Y[l]``."""
    opts = ReceiverOptions() if opts is None else opts
    C = build_code_stack(codes) if C is None else C
    if Y.shape != (cfg.M, C.shape[1], cfg.N_a):
        raise ValueError(f"Y has shape {Y.shape}, expected {(cfg.M, C.shape[1], cfg.N_a)}")
    loop = _Loop(Y, C, cfg, opts)
    snap, iterations, converged, residuals = loop.run()
    if snap is None:
        U = cfg.U
        zeros = np.zeros(loop.shape, dtype=complex)
        return ReceiverResult(np.zeros(U, dtype=int), zeros, np.zeros((U, cfg.M)), iterations, False,
                              zeros, None, loop.hp, residuals)
    xi = opts.xi_th if opts.xi_th > 0 else auto_threshold(cfg)
    lam = detect_activity(snap["w_mean"], xi)
    H = snap["h_mean"] * lam[None, :, None, None, None]
    t_hat = map_symbols(snap["t_log_post"], cfg.A) * lam[:, None]
    return ReceiverResult(lam, H, t_hat, iterations, converged, snap["w_mean"], snap["support"],
                          snap["hyper"], residuals)


def genie_symbols(Y, H, activity, C, cfg: SystemConfig):
    """Symbol detection with known channel and activity: real least squares, then nearest symbol.

    With ``H`` known the observation is linear in the real symbol amplitudes,
    ``Y[l] = sum_{u, m} t[u, m] B[l, u, m]``.
    """
    M = cfg.M
    act = np.flatnonzero(activity)
    t_hat = np.zeros((cfg.U, M))
    if act.size == 0:
        return t_hat
    S = (np.arange(M)[:, None] - np.arange(M)[None, :]) % M  # S[l, lp]
    MN = M * cfg.N
    cols = []
    for u in act:
        Cu = C[:, :, u * MN:(u + 1) * MN]
        for m in range(M):
            Wu = H[:, u] * (S == m)[:, :, None, None]  # entries multiplied by symbol m
            cols.append((Cu @ Wu.reshape(M, MN, cfg.N_a)).ravel())
    B = np.stack(cols, axis=1)
    Breal = np.concatenate([B.real, B.imag])
    yreal = np.concatenate([Y.ravel().real, Y.ravel().imag])
    sol, *_ = np.linalg.lstsq(Breal, yreal, rcond=None)
    a = cfg.A
    idx = np.argmin(np.abs(sol[:, None] - a[None, :]), axis=1)
    t_hat[act] = a[idx].reshape(act.size, M)
    return t_hat
