"""Spreading codes, block-circulant code matrices and the stacked observation model.

Code arrays are stored as ``codes[u, q, k_idx, l]`` where ``k_idx = k + N // 2``
holds the centered Doppler index ``k``.  The stacked code matrix ``C[l]`` has
rows ``q * N + k_idx`` and columns ``u * M * N + lp * N + i``, matching the
channel tensor layout of :mod:`leo_gfra.channel`.
"""

from dataclasses import dataclass

import numpy as np

from .channel import as_rng
from .config import SystemConfig
from .ddcore import wrap_centered


@dataclass
class ObservationSet:
    Y: np.ndarray  # (M, Q*N, N_a)
    R: np.ndarray  # noiseless part C[l] @ W[l]
    sigma2: float


def gen_codes(cfg: SystemConfig, seed) -> np.ndarray:
    """i.i.d. CN(0, 1/(QN)) spreading codes, shape ``(U, Q, N, M)``."""
    rng = as_rng(seed)
    shape = (cfg.U, cfg.Q, cfg.N, cfg.M)
    z = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return z * np.sqrt(0.5 / (cfg.Q * cfg.N))


def gen_symbols(cfg: SystemConfig, seed) -> np.ndarray:
    """Uniform draws from the alphabet, shape ``(U, M)``; ``t_{l + uM} = t[u, l]``."""
    rng = as_rng(seed)
    return cfg.A[rng.integers(0, len(cfg.A), size=(cfg.U, cfg.M))]


def _circulant_index(N):
    k = np.arange(N)
    return (k[:, None] - k[None, :] + N // 2) % N


def code_blocks(codes, l):
    """Sub-blocks ``B[u, q, k_idx, lp, i] = C_u^q[<k - k'>_N, (l - lp)_M]``."""
    U, Q, N, M = codes.shape
    g = codes[:, :, _circulant_index(N), :]  # (U, Q, N, N, M): [u, q, k, i, col]
    g = g[..., (l - np.arange(M)) % M]  # [u, q, k, i, lp]
    return g.transpose(0, 1, 2, 4, 3)


def build_code_matrix(codes, l) -> np.ndarray:
    """Stacked block-circulant code matrix ``C[l]`` of shape ``(Q*N, U*M*N)``."""
    U, Q, N, M = codes.shape
    b = code_blocks(codes, l)  # [u, q, k, lp, i]
    return b.transpose(1, 2, 0, 3, 4).reshape(Q * N, U * M * N)


def build_code_stack(codes) -> np.ndarray:
    M = codes.shape[-1]
    return np.stack([build_code_matrix(codes, l) for l in range(M)])


def symbol_gather(t) -> np.ndarray:
    """``T[l, u, lp] = t[u, (l - lp) mod M]``: the symbol multiplying ``H[l, u, lp]``."""
    U, M = t.shape
    l = np.arange(M)
    return t[:, (l[:, None] - l[None, :]) % M].transpose(1, 0, 2)


def w_tensor(H, t) -> np.ndarray:
    return H * symbol_gather(t)[..., None, None]


def build_w(H, t, l) -> np.ndarray:
    """``W[l] = (T[l] kron I_N) H[l]`` as a ``(U*M*N, N_a)`` matrix."""
    Wl = H[l] * symbol_gather(t)[l][..., None, None]
    return Wl.reshape(-1, Wl.shape[-1])


def apply_codes(C, W):
    """``R[l] = C[l] @ W[l]`` for a stacked tensor ``W[l, u, lp, i, j]``."""
    M = W.shape[0]
    return C @ W.reshape(M, -1, W.shape[-1])


def forward_model(H, t, codes, cfg: SystemConfig, seed, sigma2=None, C=None) -> ObservationSet:
    """``Y[l] = C[l] W[l] + Z[l]`` with i.i.d. CN(0, sigma2) noise."""
    sigma2 = cfg.sigma2 if sigma2 is None else sigma2
    if C is None:
        C = build_code_stack(codes)
    R = apply_codes(C, w_tensor(H, t))
    rng = as_rng(seed)
    Z = rng.standard_normal(R.shape) + 1j * rng.standard_normal(R.shape)
    return ObservationSet(R + np.sqrt(sigma2 / 2.0) * Z, R, sigma2)


def oracle_receive(H, t, codes, activity, cfg: SystemConfig) -> ObservationSet:
    """Noiseless observation by direct evaluation of the 2-D circular convolution sum.

    Slow scalar loops; meant for checking the vectorized path on small instances.
    """
    U, Q, N, M, Na = cfg.U, cfg.Q, cfg.N, cfg.M, cfg.N_a
    h = N // 2
    Y = np.zeros((M, Q * N, Na), dtype=complex)
    for q in range(Q):
        for k in range(-h, N - h):
            for l in range(M):
                for j in range(Na):
                    acc = 0j
                    for u in range(U):
                        if not activity[u]:
                            continue
                        for lp in range(M):
                            m = (l - lp) % M
                            for kp in range(-h, N - h):
                                kk = int(wrap_centered(k - kp, N))
                                acc += H[l, u, lp, kp + h, j] * t[u, m] * codes[u, q, kk + h, m]
                    Y[l, q * N + k + h, j] = acc
    return ObservationSet(Y, Y.copy(), 0.0)
