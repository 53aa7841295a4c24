"""Activity detection, SNR bookkeeping and the AER / NMSE / SER metrics."""

from dataclasses import asdict, dataclass

import numpy as np

CSV_FIELDS = ("seed", "snr_db", "drop", "aer", "nmse", "ser", "iterations", "converged", "wall_time_ms")


@dataclass
class MetricReport:
    snr_db: float
    aer: float
    nmse: float
    ser: float
    drops: int = 1
    seed: int = 0
    drop: int = 0
    iterations: int = 0
    converged: bool = True
    wall_time_ms: float = 0.0

    def row(self):
        d = asdict(self)
        return [d[k] for k in CSV_FIELDS]


def device_energy(W):
    """Sum over received delay, delay bin, Doppler and antenna of |W|^2, per device."""
    return np.sum(np.abs(W) ** 2, axis=(0, 2, 3, 4))


def detect_activity(W_mean, xi_th):
    """Energy detector: device active iff its total estimated energy exceeds ``xi_th``."""
    if xi_th <= 0:
        raise ValueError("threshold must be positive")
    return (device_energy(W_mean) > xi_th).astype(int)


def _signal_energy(R):
    return float(np.sum(np.abs(R) ** 2))


def compute_snr(R, sigma2, cfg):
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    return 10.0 * np.log10(_signal_energy(R) / (cfg.Q * cfg.M * cfg.N * cfg.N_a * sigma2))


def calibrate_sigma2(target_snr_db, R, cfg):
    """Noise variance giving the requested received SNR for signal ``R``."""
    e = _signal_energy(R)
    if e <= 0:
        raise ValueError("zero signal energy: SNR is undefined")
    return e / (cfg.Q * cfg.M * cfg.N * cfg.N_a * 10.0 ** (target_snr_db / 10.0))


def compute_metrics(truth, estimate, snr_db=float("nan")):
    """AER, NMSE and SER of ``estimate = (lam_hat, H_hat, t_hat)`` against ``truth``.

    Inactive devices (true or detected) count as transmitting zero symbols.
    NMSE is NaN when the true channel is identically zero.
    """
    lam, H, t = truth
    lam_hat, H_hat, t_hat = estimate
    lam, lam_hat = np.asarray(lam), np.asarray(lam_hat)
    aer = float(np.mean(np.abs(lam - lam_hat)))
    den = np.sum(np.abs(H) ** 2)
    nmse = float(np.sum(np.abs(H - H_hat) ** 2) / den) if den > 0 else float("nan")
    t_eff = np.asarray(t) * lam[:, None]
    t_hat_eff = np.asarray(t_hat) * lam_hat[:, None]
    ser = float(np.mean(~np.isclose(t_eff, t_hat_eff, rtol=0, atol=1e-9)))
    return MetricReport(snr_db=snr_db, aer=aer, nmse=nmse, ser=ser)
