"""Device activity, physical path sampling and the delay-Doppler-angle channel tensor.

Tensor layout used throughout the package: ``H[l, u, lp, i, j]`` with ``l`` the
received delay index, ``u`` the device, ``lp`` the delay bin, ``i`` the Doppler
row (row ``i`` holds Doppler index ``i - N // 2``) and ``j = a_z + N_z * a_y`` the
antenna column.
"""

import dataclasses
import json
from dataclasses import dataclass

import numpy as np

from .config import SystemConfig
from .ddcore import centered_range, dirichlet_kernel


def as_rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(seed))


@dataclass
class PathParams:
    """Per-device path parameters, each array shaped ``(U, P)``."""

    gain: np.ndarray
    tau: np.ndarray
    nu: np.ndarray
    theta_y: np.ndarray
    theta_z: np.ndarray

    @property
    def shape(self):
        return self.gain.shape


def sample_activity(cfg: SystemConfig, seed) -> np.ndarray:
    rng = as_rng(seed)
    return (rng.random(cfg.U) < cfg.p_lambda).astype(int)


def path_powers(cfg: SystemConfig) -> np.ndarray:
    """Power-delay profile: dominant path ``rho0`` plus exponentially decaying scatter."""
    if cfg.P == 1:
        return np.ones(1)
    tail = np.exp(-np.arange(1, cfg.P, dtype=float))
    return np.concatenate([[cfg.rho0], (1.0 - cfg.rho0) * tail / tail.sum()])


def sample_paths(cfg: SystemConfig, seed) -> PathParams:
    rng = as_rng(seed)
    U, P = cfg.U, cfg.P
    (d_lo, d_hi), (f_lo, f_hi) = cfg.delay_range, cfg.doppler_range
    if cfg.shared_delay:
        tau = np.repeat(rng.uniform(d_lo, d_hi, size=(U, 1)), P, axis=1)
    else:
        tau = rng.uniform(d_lo, d_hi, size=(U, P))
    nu = np.repeat(rng.uniform(f_lo, f_hi, size=(U, 1)), P, axis=1)
    spread = rng.uniform(-cfg.doppler_spread, cfg.doppler_spread, size=(U, P))
    spread[:, 0] = 0.0
    nu = np.clip(nu + spread, f_lo, f_hi)
    theta_y = np.repeat(rng.uniform(-1.0, 1.0, size=(U, 1)), P, axis=1)
    theta_z = np.repeat(rng.uniform(-1.0, 1.0, size=(U, 1)), P, axis=1)
    g = rng.standard_normal((U, P)) + 1j * rng.standard_normal((U, P))
    gain = g * np.sqrt(path_powers(cfg) / 2.0)
    return PathParams(gain, tau, nu, theta_y, theta_z)


def delay_bins(paths: PathParams, cfg: SystemConfig) -> np.ndarray:
    """Nearest delay bin of each path, ``round((tau mod T) / T_s) mod M``."""
    return np.mod(np.rint(np.mod(paths.tau, cfg.T) / cfg.T_s).astype(int), cfg.M)


def angle_response(theta_y, theta_z, cfg: SystemConfig) -> np.ndarray:
    """Angular leakage over the flattened antenna index ``j = a_z + N_z a_y``."""
    ry = dirichlet_kernel(np.arange(cfg.N_y) - cfg.N_y * theta_y[..., None] / 2, cfg.N_y)
    rz = dirichlet_kernel(np.arange(cfg.N_z) - cfg.N_z * theta_z[..., None] / 2, cfg.N_z)
    return (ry[..., :, None] * rz[..., None, :]).reshape(*ry.shape[:-1], cfg.N_a)


def build_dda_channel(paths: PathParams, activity, cfg: SystemConfig) -> np.ndarray:
    """Delay-Doppler-angle channel tensor ``H[l, u, lp, i, j]`` masked by activity."""
    M, N = cfg.M, cfg.N
    nu, tau = paths.nu, paths.tau
    base = np.sqrt(cfg.N_a) * paths.gain * np.exp(-2j * np.pi * tau * nu)
    l = np.arange(M)
    phase = np.exp(2j * np.pi * (cfg.M_cp + l)[:, None, None] * cfg.T_s * nu)  # (M,U,P)
    dop = dirichlet_kernel(centered_range(N) - N * cfg.T_sym * nu[..., None], N)  # (U,P,N)
    ang = angle_response(paths.theta_y, paths.theta_z, cfg)  # (U,P,N_a)
    onehot = np.eye(M)[delay_bins(paths, cfg)]  # (U,P,M)
    H = np.einsum("lup,upi,upj,upm->lumij", base * phase, dop, ang, onehot)
    return mask_activity(H, activity)


def mask_activity(H, activity):
    return H * np.asarray(activity, dtype=float)[None, :, None, None, None]


def true_support(H, energy_fraction=0.99) -> np.ndarray:
    """Smallest per-(u, lp) cell set holding ``energy_fraction`` of the energy, as +/-1."""
    if not 0.0 < energy_fraction < 1.0:
        raise ValueError("energy_fraction must lie in (0, 1)")
    E = np.sum(np.abs(H) ** 2, axis=0)  # (U, M, N, N_a)
    U, M, N, Na = E.shape
    flat = E.reshape(U, M, N * Na)
    S = -np.ones(flat.shape, dtype=int)
    order = np.argsort(-flat, axis=-1, kind="stable")
    srt = np.take_along_axis(flat, order, axis=-1)
    total = srt.sum(axis=-1, keepdims=True)
    csum = np.cumsum(srt, axis=-1)
    # number of leading cells needed to reach the target fraction
    need = np.sum(csum < energy_fraction * total, axis=-1) + 1
    need = np.where(total[..., 0] > 0, need, 0)
    keep = np.arange(N * Na) < need[..., None]
    np.put_along_axis(S, order, np.where(keep, 1, -1), axis=-1)
    return S.reshape(U, M, N, Na)


def scenario_record(cfg: SystemConfig, activity, paths: PathParams, seed) -> str:
    """JSON record from which the channel tensor can be rebuilt bit-exactly."""
    rec = {
        "format": "leo_gfra.scenario/1",
        "seed": seed,
        "config": dataclasses.asdict(cfg),
        "activity": [int(v) for v in np.asarray(activity)],
        "paths": {
            "gain_re": paths.gain.real.tolist(),
            "gain_im": paths.gain.imag.tolist(),
            "tau": paths.tau.tolist(),
            "nu": paths.nu.tolist(),
            "theta_y": paths.theta_y.tolist(),
            "theta_z": paths.theta_z.tolist(),
        },
    }
    return json.dumps(rec)


def load_scenario(text):
    rec = json.loads(text)
    if rec.get("format") != "leo_gfra.scenario/1":
        raise ValueError("not a scenario record")
    c = rec["config"]
    for key in ("alphabet", "delay_range", "doppler_range"):
        c[key] = tuple(c[key])
    cfg = SystemConfig(**c)
    p = rec["paths"]
    gain = np.empty(np.shape(p["gain_re"]), dtype=complex)
    gain.real, gain.imag = p["gain_re"], p["gain_im"]
    paths = PathParams(
        gain=gain,
        tau=np.array(p["tau"]),
        nu=np.array(p["nu"]),
        theta_y=np.array(p["theta_y"]),
        theta_z=np.array(p["theta_z"]),
    )
    return cfg, np.array(rec["activity"], dtype=int), paths, rec["seed"]
