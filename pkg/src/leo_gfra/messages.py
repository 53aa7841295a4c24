"""Gaussian and Bernoulli-Gaussian-mixture messages on complex scalars.

All arrays broadcast: a message over a tensor of variables carries
``(..., C)`` component arrays, the trailing axis indexing mixture components.
Weights are stored as log weights.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

LOG_PI = np.log(np.pi)


def log_cn(x, mean, var):
    """Log density of the circularly-symmetric complex Gaussian CN(x; mean, var)."""
    return -LOG_PI - np.log(var) - np.abs(x - mean) ** 2 / var


def normalize_log(logp, axis=-1):
    """Normalize log weights along ``axis`` (max-subtraction)."""
    logp = np.asarray(logp, dtype=float)
    mx = np.max(logp, axis=axis, keepdims=True)
    mx = np.where(np.isfinite(mx), mx, 0.0)
    with np.errstate(divide="ignore"):
        return logp - (mx + np.log(np.sum(np.exp(logp - mx), axis=axis, keepdims=True)))


@dataclass
class GaussianMessage:
    mean: np.ndarray
    var: np.ndarray


@dataclass
class GMMessage:
    """Point mass at zero (log weight ``log_spike``) plus a Gaussian mixture.

    ``spike + sum(exp(logw)) == 1`` for a normalized message.  Variances may be
    zero (point masses at the component mean) wherever they are only ever
    convolved with a proper Gaussian.
    """

    logw: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    log_spike: np.ndarray = -np.inf

    @classmethod
    def gaussian(cls, mean, var):
        mean = np.asarray(mean)[..., None]
        return cls(np.zeros(mean.shape), mean, np.asarray(var, dtype=float)[..., None])

    @classmethod
    def point_mass(cls, value):
        return cls.gaussian(value, 0.0)

    @property
    def weights(self):
        return np.exp(self.logw)

    @property
    def spike(self):
        return np.exp(self.log_spike)

    def log_total(self):
        lw = np.broadcast_to(self.logw, np.broadcast_shapes(np.shape(self.logw), np.shape(self.means)))
        return np.logaddexp(np.asarray(self.log_spike, dtype=float), logsumexp(lw, axis=-1))

    def normalized(self):
        z = self.log_total()
        return GMMessage(self.logw - z[..., None], self.means, self.variances, self.log_spike - z)

    def moments(self):
        """Mean and variance of the (normalized) mixture including the spike."""
        n = self.normalized()
        w = n.weights
        mean = np.sum(w * n.means, axis=-1)
        second = np.sum(w * (np.abs(n.means) ** 2 + n.variances), axis=-1)
        return mean, np.maximum(second - np.abs(mean) ** 2, 0.0)

    def pdf_at_zero_log(self):
        """Log of the continuous part's density at 0 (spike excluded).

        Zero-variance components are treated as having no density at 0.
        """
        v = self.variances
        pos = v > 0
        with np.errstate(divide="ignore", invalid="ignore"):
            lc = np.where(pos, log_cn(0.0, self.means, np.where(pos, v, 1.0)), -np.inf)
        return logsumexp(self.logw + lc, axis=-1)

    def times_gaussian(self, r, tau):
        """Product with CN(x; r, tau): returns (posterior message, log evidence)."""
        r = np.asarray(r)[..., None]
        tau = np.asarray(tau, dtype=float)[..., None]
        v = self.variances
        s = v + tau
        logw = self.logw + log_cn(r, self.means, s)
        post_var = v * tau / s
        post_mean = (self.means * tau + r * v) / s
        log_spike = self.log_spike + log_cn(0.0, r[..., 0], tau[..., 0])
        post = GMMessage(logw, post_mean, post_var, log_spike)
        z = post.log_total()
        return post.normalized(), z

    def reduce(self, K):
        """Collapse the slab to at most ``K`` components by greedy moment-matched merges.

        Repeatedly merges the lightest component into its nearest neighbour
        (in mean).  Operates on a single (unbatched) message.
        """
        lw = list(np.atleast_1d(self.logw).astype(float))
        mu = list(np.atleast_1d(self.means).astype(complex))
        var = list(np.atleast_1d(self.variances).astype(float))
        while len(lw) > K:
            a = int(np.argmin(lw))
            others = [i for i in range(len(lw)) if i != a]
            b = min(others, key=lambda i: abs(mu[i] - mu[a]))
            wa, wb = np.exp(lw[a]), np.exp(lw[b])
            w = wa + wb
            m = (wa * mu[a] + wb * mu[b]) / w
            v = (wa * (var[a] + abs(mu[a] - m) ** 2) + wb * (var[b] + abs(mu[b] - m) ** 2)) / w
            lw[b], mu[b], var[b] = np.log(w), m, v
            del lw[a], mu[a], var[a]
        return GMMessage(np.array(lw), np.array(mu), np.array(var), self.log_spike)


def gm_overlap_log(a: GMMessage, b: GMMessage):
    """log of the integral of the continuous parts of ``a`` and ``b`` (spikes excluded)."""
    la = a.logw[..., :, None] + b.logw[..., None, :]
    lc = log_cn(a.means[..., :, None], b.means[..., None, :],
                a.variances[..., :, None] + b.variances[..., None, :])
    return logsumexp((la + lc).reshape(*np.shape(la + lc)[:-2], -1), axis=-1)
