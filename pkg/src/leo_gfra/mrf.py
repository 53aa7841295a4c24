"""Loopy belief propagation for the Ising support prior on the (Doppler, antenna) grid.

Support messages are log-odds ratios ``log p(s=+1) - log p(s=-1)``.  Grids are
the last two axes (Doppler row ``i``, antenna ``j``) of every array; all other
leading axes index independent grids.  Neighbour messages into site (i, j):

* ``left``   from (i, j-1)
* ``right``  from (i, j+1)
* ``top``    from (i-1, j)
* ``bottom`` from (i+1, j)

Absent neighbours contribute a zero (uniform) message.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logit

from .messages import GMMessage

LLR_CLIP = 700.0


@dataclass(frozen=True)
class MRFParams:
    alpha: float = 0.4
    beta: float = 0.4

    def __post_init__(self):
        if not (np.isfinite(self.alpha) and np.isfinite(self.beta)):
            raise ValueError("MRF parameters must be finite")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")

    @property
    def field_llr(self):
        """Log-odds of the singleton factor exp(-alpha s)."""
        return -2.0 * self.alpha


@dataclass
class OmegaTables:
    left: np.ndarray
    right: np.ndarray
    top: np.ndarray
    bottom: np.ndarray

    @classmethod
    def zeros(cls, shape):
        return cls(*(np.zeros(shape) for _ in range(4)))

    def total(self):
        return self.left + self.right + self.top + self.bottom

    def max_change(self, other):
        return max(np.max(np.abs(getattr(self, d) - getattr(other, d)), initial=0.0)
                   for d in ("left", "right", "top", "bottom"))


def _pair(h, beta):
    """Log-odds passed through the coupling exp(beta s s'), marginalizing the sender."""
    return 2.0 * np.arctanh(np.tanh(beta) * np.tanh(np.clip(h, -LLR_CLIP, LLR_CLIP) / 2.0))


def _damp(new, old, damping):
    if damping >= 1.0:
        return new
    p = damping * expit(new) + (1.0 - damping) * expit(old)
    return logit(np.clip(p, 1e-300, 1.0 - 1e-16))


def mrf_neighbor_messages(evidence, params: MRFParams, omega: OmegaTables, damping=1.0) -> OmegaTables:
    """One flooding sweep of the four directional messages.

    ``evidence`` is the per-site sum over delay bins of the support log-odds.
    New messages are computed from the previous tables and mixed with them in
    probability space (``damping`` is the weight of the new value).
    """
    base = params.field_llr + evidence
    full = base + omega.total()
    b = params.beta
    left = np.zeros_like(full)
    right = np.zeros_like(full)
    top = np.zeros_like(full)
    bottom = np.zeros_like(full)
    left[..., :, 1:] = _pair(full[..., :, :-1] - omega.right[..., :, :-1], b)
    right[..., :, :-1] = _pair(full[..., :, 1:] - omega.left[..., :, 1:], b)
    top[..., 1:, :] = _pair(full[..., :-1, :] - omega.bottom[..., :-1, :], b)
    bottom[..., :-1, :] = _pair(full[..., 1:, :] - omega.top[..., 1:, :], b)
    return OmegaTables(_damp(left, omega.left, damping), _damp(right, omega.right, damping),
                       _damp(top, omega.top, damping), _damp(bottom, omega.bottom, damping))


def msg_s_to_e(evidence_per_bin, omega: OmegaTables, params: MRFParams):
    """Extrinsic support log-odds sent to each delay bin's check node.

    ``evidence_per_bin`` has the delay-bin axis first; bin ``l`` receives the field,
    the four neighbour messages and the evidence of every other bin.
    """
    total = evidence_per_bin.sum(axis=0)
    return params.field_llr + omega.total() + (total - evidence_per_bin)


def msg_e_to_h(p1, prior: GMMessage) -> GMMessage:
    """Spike-and-slab channel prior: weight ``p1`` on the slab mixture, ``1 - p1`` at zero."""
    p1 = np.asarray(p1, dtype=float)
    with np.errstate(divide="ignore"):
        return GMMessage(np.log(p1)[..., None] + prior.logw, prior.means, prior.variances,
                         np.log1p(-p1))


def msg_e_to_h_llr(llr, prior: GMMessage) -> GMMessage:
    """As :func:`msg_e_to_h` but from a log-odds input (no underflow at extreme odds)."""
    llr = np.clip(llr, -LLR_CLIP, LLR_CLIP)
    log_p1 = -np.logaddexp(0.0, -llr)
    log_p0 = -np.logaddexp(0.0, llr)
    return GMMessage(log_p1[..., None] + prior.logw, prior.means, prior.variances, log_p0)


def support_marginals(evidence, omega: OmegaTables, params: MRFParams):
    """Belief p(s=+1) per site from the summed evidence and all neighbour messages."""
    return expit(params.field_llr + evidence + omega.total())


def run_bp(evidence, params: MRFParams, max_sweeps=200, tol=1e-13, damping=1.0, omega=None):
    """Iterate flooding sweeps until the largest message change falls below ``tol``."""
    omega = OmegaTables.zeros(np.shape(evidence)) if omega is None else omega
    for sweep in range(max_sweeps):
        new = mrf_neighbor_messages(evidence, params, omega, damping)
        change = new.max_change(omega)
        omega = new
        if change < tol:
            break
    return omega
