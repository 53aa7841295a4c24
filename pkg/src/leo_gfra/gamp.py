"""Sum-product GAMP with an AWGN output channel.

Works on a batch of problems ``Y[b] = C[b] X[b] + Z[b]`` with ``Y`` shaped
``(..., m, J)``, ``C`` shaped ``(..., m, n)`` and ``X`` shaped ``(..., n, J)``.
Each of the ``J`` columns shares the matrix.  By default every column carries
one scalar variance per stage; ``vector=True`` keeps a variance per entry.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .messages import GaussianMessage, GMMessage

log = logging.getLogger(__name__)

VAR_MIN = 1e-12
VAR_MAX = 1e6


class GampDivergence(FloatingPointError):
    pass


@dataclass
class GampState:
    x: np.ndarray  # posterior mean of the signal
    tau_x: np.ndarray  # (..., 1, J) scalar posterior variance per column
    s: np.ndarray
    tau_s: np.ndarray
    damping: float = 0.7
    r: np.ndarray = None
    tau_r: np.ndarray = None
    z_mean: np.ndarray = None  # posterior mean of C X
    z_var: np.ndarray = None
    x_prev: np.ndarray = None
    iteration: int = 0
    vector: bool = False

    @classmethod
    def init(cls, C, Y, prior_second_moment, damping=0.7, vector=False):
        if not 0.0 < damping <= 1.0:
            raise ValueError("damping must lie in (0, 1]")
        m, n, J = C.shape[-2], C.shape[-1], Y.shape[-1]
        batch = np.broadcast_shapes(C.shape[:-2], Y.shape[:-2])
        x = np.zeros(batch + (n, J), dtype=complex)
        tau_x = np.broadcast_to(np.asarray(prior_second_moment, dtype=float),
                                batch + ((n if vector else 1), J)).copy()
        s = np.zeros(batch + Y.shape[-2:], dtype=complex)
        tau_s = np.zeros(batch + ((m if vector else 1), J))
        return cls(x, np.clip(tau_x, VAR_MIN, VAR_MAX), s, tau_s, damping, vector=vector)


def _fro2(C):
    return np.sum(np.abs(C) ** 2, axis=(-2, -1), keepdims=True)


def _check(name, arr):
    if not np.all(np.isfinite(arr)):
        raise GampDivergence(f"non-finite values in GAMP {name}")


def gamp_pass(Y, C, sigma2, state: GampState, prior: GMMessage = None, posterior=None, c2=None):
    """One GAMP iteration: input denoising, then the linear/output stage.

    The input step turns the previous extrinsic message ``(r, tau_r)`` into a
    posterior mean and variance, either by multiplying it with the per-entry
    ``prior`` message or by taking an externally computed ``posterior``
    ``(mean, var)`` pair.  On the first pass the state's initial values are used.
    ``c2`` may cache ``||C||_F^2`` (scalar mode) or ``|C|^2`` (vector mode).
    Returns the new extrinsic message on every entry and the updated state.
    """
    d = state.damping
    m, n = C.shape[-2], C.shape[-1]
    if state.vector:
        c2 = np.abs(C) ** 2 if c2 is None else c2
    else:
        c2 = _fro2(C) if c2 is None else c2
    if state.r is not None:
        if posterior is None:
            if prior is None:
                raise ValueError("a prior message or a posterior is required after the first pass")
            post, _ = prior.times_gaussian(state.r, state.tau_r)
            posterior = post.moments()
        x_new, v_new = posterior
        if not state.vector:
            v_new = np.mean(v_new, axis=-2, keepdims=True)
        tau_x_new = np.clip(v_new, VAR_MIN, VAR_MAX)
        _check("input step", x_new)
        state.x_prev = state.x
        state.x = d * x_new + (1.0 - d) * state.x
        state.tau_x = d * tau_x_new + (1.0 - d) * state.tau_x
    else:
        state.x_prev = None

    # output stage
    if state.vector:
        tau_p = np.clip(c2 @ state.tau_x, VAR_MIN, VAR_MAX)
    else:
        tau_p = np.clip(c2 / m * state.tau_x, VAR_MIN, VAR_MAX)
    p = C @ state.x - tau_p * state.s
    s_new = (Y - p) / (tau_p + sigma2)
    tau_s_new = 1.0 / (tau_p + sigma2)
    state.z_mean = p + tau_p * s_new
    state.z_var = tau_p * sigma2 / (tau_p + sigma2)
    if state.iteration == 0:
        state.s, state.tau_s = s_new, tau_s_new
    else:
        state.s = d * s_new + (1.0 - d) * state.s
        state.tau_s = d * tau_s_new + (1.0 - d) * state.tau_s

    # input-side extrinsic message
    if state.vector:
        tau_r = np.clip(1.0 / (np.swapaxes(c2, -1, -2) @ state.tau_s), VAR_MIN, VAR_MAX)
    else:
        tau_r = np.clip(n / (c2 * state.tau_s), VAR_MIN, VAR_MAX)
    r = state.x + tau_r * (np.conj(np.swapaxes(C, -1, -2)) @ state.s)
    _check("output stage", r)
    state.r, state.tau_r = r, tau_r
    state.iteration += 1
    return GaussianMessage(r, tau_r), state


def gamp_residual(state: GampState):
    """Relative change of the signal estimate over the last pass (1 from a zero start)."""
    if state.x_prev is None:
        return 1.0
    num = np.linalg.norm(state.x - state.x_prev)
    den = np.linalg.norm(state.x)
    if den == 0.0:
        return 0.0 if num == 0.0 else 1.0
    return float(num / den)


def run_gamp(Y, C, sigma2, prior: GMMessage, second_moment, n_iter=200, tol=1e-10, damping=0.7,
             vector=False):
    """Stand-alone GAMP with a fixed per-entry prior; returns posterior mean and variance."""
    state = GampState.init(C, Y, second_moment, damping, vector)
    c2 = np.abs(C) ** 2 if vector else _fro2(C)
    for _ in range(n_iter):
        gamp_pass(Y, C, sigma2, state, prior=prior, c2=c2)
        if state.iteration > 2 and gamp_residual(state) < tol:
            break
    post, _ = prior.times_gaussian(state.r, state.tau_r)
    return post.moments()
