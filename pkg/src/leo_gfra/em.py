"""EM updates of the noise variance and the per-device Gaussian-mixture channel prior."""

import logging
from dataclasses import dataclass, replace

import numpy as np

from .messages import GMMessage

log = logging.getLogger(__name__)

FLOOR = 1e-12
MIN_MASS = 1e-10


@dataclass
class Hyperparams:
    sigma2: float
    omega: np.ndarray  # (U, K) mixture weights
    mu: np.ndarray  # (U, K) complex means
    phi: np.ndarray  # (U, K) variances

    @classmethod
    def initial(cls, U, K, sigma2, slab_energy):
        """Zero means, variances log-spaced over [0.1, 10] x slab_energy, uniform weights."""
        scale = np.geomspace(0.1, 10.0, K) if K > 1 else np.ones(1)
        phi = np.tile(scale * slab_energy, (U, 1))
        return cls(float(sigma2), np.full((U, K), 1.0 / K), np.zeros((U, K), dtype=complex), phi)

    def slab(self):
        """Per-device slab mixture broadcast to the ``[l, u, lp, i, j]`` tensor layout."""
        e = lambda x: x[None, :, None, None, None, :]
        with np.errstate(divide="ignore"):
            return GMMessage(e(np.log(self.omega)), e(self.mu), e(self.phi))

    def active_power(self):
        """E|h|^2 under each device's slab, shape (U,)."""
        return np.sum(self.omega * (np.abs(self.mu) ** 2 + self.phi), axis=-1)

    def copy(self):
        return replace(self, omega=self.omega.copy(), mu=self.mu.copy(), phi=self.phi.copy())


def em_update_sigma2(Y, z_mean, z_var):
    """Noise variance maximizing E[log p(Y, R | sigma2)] under the Gaussian posterior of R."""
    res = np.abs(Y - z_mean) ** 2 + z_var
    return max(float(np.mean(res)), FLOOR)


def em_update_gm(resp, means, variances, omega, mu, phi, device_axis=1):
    """Responsibility-weighted moment updates of the per-device mixture.

    ``resp`` holds the posterior mass of (slab component k) for every entry and
    any auxiliary branch axes, trailing axis K.  ``means``/``variances`` are the
    matching per-branch posterior moments of h (broadcastable to ``resp``).
    Components with no mass keep their previous parameters.
    """
    resp = np.asarray(resp, dtype=float)
    means = np.broadcast_to(means, resp.shape)
    variances = np.broadcast_to(variances, resp.shape)
    axes = tuple(a for a in range(resp.ndim - 1) if a != device_axis % resp.ndim)
    S0 = resp.sum(axis=axes)
    S1 = (resp * means).sum(axis=axes)
    S2 = (resp * (np.abs(means) ** 2 + variances)).sum(axis=axes)
    return em_update_gm_stats(S0, S1, S2, omega, mu, phi)


def em_update_gm_stats(S0, S1, S2, omega, mu, phi):
    """M-step from per-(device, component) sums of responsibility, r*E[h] and r*E|h|^2."""
    ok = S0 > MIN_MASS
    if not np.all(ok):
        log.debug("%d empty mixture components keep their previous values", int((~ok).sum()))
    safe = np.where(ok, S0, 1.0)
    new_mu = np.where(ok, S1 / safe, mu)
    new_phi = np.where(ok, S2 / safe - np.abs(new_mu) ** 2, phi)
    new_phi = np.maximum(new_phi, FLOOR)
    tot = S0.sum(axis=-1, keepdims=True)
    new_omega = np.where(tot > MIN_MASS, S0 / np.where(tot > MIN_MASS, tot, 1.0), omega)
    return new_omega, new_mu, new_phi
