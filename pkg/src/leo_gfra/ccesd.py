"""Messages through the constraint w = h * t (channel estimation and symbol detection).

Tensors follow the ``[l, u, lp, i, j]`` layout; symbol messages carry an extra
trailing alphabet axis.  The symbol multiplying ``h[l, u, lp]`` is
``t[u, (l - lp) mod M]``.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .messages import GMMessage, gm_overlap_log, log_cn, normalize_log

log = logging.getLogger(__name__)


def _check_alphabet(alphabet):
    a = np.asarray(alphabet, dtype=float)
    if np.any(a <= 0):
        raise ValueError("symbol amplitudes must be strictly positive (nonnegative PAM without zero)")
    return a


def msg_g_to_h(r, tau, log_p_left, alphabet) -> GMMessage:
    """Channel message from the constraint node: sum_m p_m CN(h a_m | r, tau).

    Component m is CN(h; r/a_m, tau/a_m^2) with weight proportional to p_m / a_m^2.
    """
    a = _check_alphabet(alphabet)
    r = np.asarray(r)[..., None]
    tau = np.asarray(tau, dtype=float)[..., None]
    logw = normalize_log(log_p_left - 2.0 * np.log(a))
    return GMMessage(logw, r / a, tau / a**2)


def msg_e_to_s(gm_in: GMMessage, prior: GMMessage):
    """Support evidence as a log-odds ratio log p(s=+1) - log p(s=-1).

    Numerator integrates the slab prior against ``gm_in``; the denominator is
    ``gm_in`` evaluated at zero (the spike branch).
    """
    return gm_overlap_log(prior, gm_in) - gm_in.pdf_at_zero_log()


def msg_g_to_t(h_msg: GMMessage, r, tau, alphabet):
    """Log symbol message p->_m proportional to the integral of h_msg(h) CN(h a_m | r, tau)."""
    a = _check_alphabet(alphabet)
    r = np.asarray(r)[..., None, None]
    tau = np.asarray(tau, dtype=float)[..., None, None]
    slab = logsumexp(h_msg.logw[..., None, :]
                     + log_cn(r, a[:, None] * h_msg.means[..., None, :],
                              a[:, None] ** 2 * h_msg.variances[..., None, :] + tau), axis=-1)
    spike = np.asarray(h_msg.log_spike)[..., None] + log_cn(r[..., 0], 0.0, tau[..., 0])
    return normalize_log(np.logaddexp(slab, spike))


def symbol_index(M):
    """``S[l, lp] = (l - lp) mod M``."""
    l = np.arange(M)
    return (l[:, None] - l[None, :]) % M


def symbol_totals(log_p_right):
    """Sum of log p-> over every factor touching each symbol: ``(U, M, A)``.

    Factors are aggregated over Doppler rows and antennas of their block and over
    all (l, lp) pairs with ``(l - lp) mod M`` equal to the symbol index.
    """
    M = log_p_right.shape[0]
    block = log_p_right.sum(axis=(3, 4))  # (M, U, M, A): [l, u, lp, m]
    lp = np.arange(M)
    # G[sym, u, lp, a] = block[(sym + lp) mod M, u, lp, a]
    G = block[(np.arange(M)[:, None] + lp[None, :]) % M, :, lp[None, :], :]
    return G.sum(axis=1).transpose(1, 0, 2)


def msg_t_to_g(log_p_right, log_prior=None):
    """Extrinsic symbol messages p<- for every factor, plus the symbol totals.

    Each factor receives the normalized product of all other p-> messages of its
    symbol and the symbol prior (uniform by default).
    """
    M = log_p_right.shape[0]
    A = log_p_right.shape[-1]
    tot = symbol_totals(log_p_right)
    if log_prior is not None:
        tot = tot + log_prior
    per_block = tot[:, symbol_index(M), :].transpose(1, 0, 2, 3)  # (M, U, M, A)
    with np.errstate(invalid="ignore"):
        ext = per_block[:, :, :, None, None, :] - log_p_right
    bad = ~np.all(np.isfinite(ext), axis=-1)
    if np.any(bad):
        log.warning("symbol message collapsed to zero at %d factors; reset to uniform", int(bad.sum()))
        ext = np.where(bad[..., None], -np.log(A), ext)
    return normalize_log(ext), tot


def msg_g_to_w(h_msg: GMMessage, log_p_left, alphabet) -> GMMessage:
    """Bernoulli-GM feedback to the linear module: components (m, k) with mean a_m mu_k."""
    a = _check_alphabet(alphabet)
    logw = np.asarray(log_p_left)[..., :, None] + h_msg.logw[..., None, :]
    means = a[:, None] * h_msg.means[..., None, :]
    variances = a[:, None] ** 2 * h_msg.variances[..., None, :]
    flat = lambda x: x.reshape(*x.shape[:-2], -1)
    return GMMessage(flat(logw), flat(means), flat(variances), h_msg.log_spike)


def gm_product(a: GMMessage, b: GMMessage):
    """Normalized product of two spike-and-slab messages.

    Returns ``(log_spike, logw, means, variances)`` with slab arrays shaped
    ``(..., Ca, Cb)``.  A point mass at zero survives only if both carry one or
    if one carries it and the other has a density at zero.
    """
    va, vb = a.variances[..., :, None], b.variances[..., None, :]
    ma, mb = a.means[..., :, None], b.means[..., None, :]
    s = va + vb
    logw = a.logw[..., :, None] + b.logw[..., None, :] + log_cn(ma, mb, s)
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(s > 0, (ma * vb + mb * va) / np.where(s > 0, s, 1.0), ma)
        variances = np.where(s > 0, va * vb / np.where(s > 0, s, 1.0), 0.0)
    log_spike = np.logaddexp(np.asarray(a.log_spike) + b.pdf_at_zero_log(),
                             np.asarray(b.log_spike) + a.pdf_at_zero_log())
    z = np.logaddexp(log_spike, logsumexp(logw, axis=(-2, -1)))
    return log_spike - z, logw - z[..., None, None], means, variances


@dataclass
class PosteriorBeliefs:
    w_mean: np.ndarray
    w_var: np.ndarray
    h_mean: np.ndarray
    h_var: np.ndarray
    h_log_spike: np.ndarray  # log posterior probability of the zero branch
    h_branch_logw: np.ndarray  # (..., A, K) normalized jointly with the spike
    h_branch_mean: np.ndarray
    h_branch_var: np.ndarray
    t_log_post: np.ndarray  # (U, M, A)

    @property
    def support_prob(self):
        return 1.0 - np.exp(self.h_log_spike)

    @property
    def responsibilities(self):
        """Posterior mass of each slab component, summed over symbols: (..., K)."""
        return np.exp(self.h_branch_logw).sum(axis=-2)


def posterior_beliefs(r, tau, h_msg: GMMessage, log_p_left, t_totals, alphabet) -> PosteriorBeliefs:
    """Combine incoming messages into beliefs on w, h and t.

    ``h_msg`` is the refined channel message (spike-and-slab over K components),
    ``log_p_left`` the extrinsic symbol messages and ``t_totals`` the summed
    log p-> per symbol.
    """
    a = _check_alphabet(alphabet)
    w_post, _ = msg_g_to_w(h_msg, log_p_left, a).times_gaussian(r, tau)
    w_mean, w_var = w_post.moments()
    g_h = msg_g_to_h(r, tau, log_p_left, a)
    log_spike, logw, means, variances = gm_product(g_h, h_msg)
    w = np.exp(logw)
    h_mean = np.sum(w * means, axis=(-2, -1))
    h_second = np.sum(w * (np.abs(means) ** 2 + variances), axis=(-2, -1))
    h_var = np.maximum(h_second - np.abs(h_mean) ** 2, 0.0)
    t_log_post = normalize_log(t_totals)
    return PosteriorBeliefs(w_mean, w_var, h_mean, h_var, log_spike, logw, means, variances, t_log_post)


def map_symbols(t_log_post, alphabet):
    """Symbol-by-symbol MAP; ties go to the smaller alphabet index."""
    return np.asarray(alphabet)[np.argmax(t_log_post, axis=-1)]
