"""Index arithmetic and the Dirichlet kernel on the delay-Doppler-angle grid."""

import numpy as np


def wrap_mod(x, M):
    """Nonnegative residue of ``x`` modulo ``M`` (works elementwise on arrays)."""
    if np.any(np.asarray(M) < 1):
        raise ValueError(f"modulus must be >= 1, got {M}")
    return np.mod(x, M)


def wrap_centered(x, N):
    """Centered residue: ``(x + floor(N/2)) mod N - floor(N/2)``.

    The result lies in ``[ceil(-N/2), ceil(N/2) - 1]``.
    """
    if np.any(np.asarray(N) < 1):
        raise ValueError(f"modulus must be >= 1, got {N}")
    h = N // 2
    return np.mod(x + h, N) - h


def centered_range(N):
    """Doppler indices ``ceil(-N/2), ..., ceil(N/2) - 1`` in storage order."""
    return np.arange(N) - N // 2


def dirichlet_kernel(x, N):
    """Normalized geometric sum ``(1/N) sum_i exp(-j 2 pi x i / N)``.

    ``x`` is first reduced modulo ``N`` (the sum has that period) so the
    sine-ratio form stays accurate next to its removable singularities; at
    the singular points themselves the sum is evaluated term by term.
    """
    x = np.asarray(x, dtype=float)
    xr = x - N * np.round(x / N)
    den = N * np.sin(np.pi * xr / N)
    small = np.abs(xr) < 1e-9
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.sin(np.pi * xr) / np.where(small, 1.0, den) * np.exp(-1j * np.pi * xr * (N - 1) / N)
    if np.any(small):
        i = np.arange(N)
        out = np.where(small, 0.0, out)
        out[small] = np.exp(-2j * np.pi * xr[small][..., None] * i / N).mean(axis=-1)
    return out[()] if out.ndim == 0 else out
