"""Seeded Monte Carlo drops, SNR sweeps, ablation baselines and CSV output."""

import csv
import io
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .channel import build_dda_channel, sample_activity, sample_paths
from .config import ExperimentConfig, SystemConfig
from .frontend import apply_codes, build_code_stack, gen_codes, gen_symbols, w_tensor
from .metrics import CSV_FIELDS, MetricReport, calibrate_sigma2, compute_metrics
from .receiver import ReceiverOptions, _Loop, genie_symbols, run_receiver

log = logging.getLogger(__name__)

STREAMS = ("activity", "paths", "codes", "symbols", "noise")


@dataclass
class Drop:
    activity: np.ndarray
    H: np.ndarray
    t: np.ndarray
    codes: np.ndarray
    C: np.ndarray
    R: np.ndarray  # noiseless observation
    Z: np.ndarray  # unit-variance noise, scaled per SNR point

    def observe(self, sigma2):
        return self.R + math.sqrt(sigma2) * self.Z


def drop_streams(seed, drop):
    """Independent generators for each random ingredient of one drop."""
    children = np.random.SeedSequence([int(seed), int(drop)]).spawn(len(STREAMS))
    return {name: np.random.Generator(np.random.Philox(c)) for name, c in zip(STREAMS, children)}


def make_drop(cfg: SystemConfig, seed, drop) -> Drop:
    rng = drop_streams(seed, drop)
    activity = sample_activity(cfg, rng["activity"])
    H = build_dda_channel(sample_paths(cfg, rng["paths"]), activity, cfg)
    codes = gen_codes(cfg, rng["codes"])
    t = gen_symbols(cfg, rng["symbols"])
    C = build_code_stack(codes)
    R = apply_codes(C, w_tensor(H, t))
    z = rng["noise"]
    Z = (z.standard_normal(R.shape) + 1j * z.standard_normal(R.shape)) / math.sqrt(2.0)
    return Drop(activity, H, t, codes, C, R, Z)


def nominal_signal_energy(cfg: SystemConfig):
    """Expected sum of |R|^2 over a frame: each active device puts ``N_a E[a^2]`` per bin."""
    return cfg.M * cfg.U * cfg.p_lambda * cfg.N_a * float(np.mean(cfg.A ** 2))


def drop_sigma2(drop: Drop, snr_db, cfg: SystemConfig):
    """Noise variance for the target SNR; frames with no active device use the nominal energy."""
    if np.any(drop.R):
        return calibrate_sigma2(snr_db, drop.R, cfg)
    return nominal_signal_energy(cfg) / (cfg.Q * cfg.M * cfg.N * cfg.N_a * 10.0 ** (snr_db / 10.0))


def detect(drop: Drop, Y, sigma2, exp: ExperimentConfig, variant=None):
    """Run the selected receiver; returns (lam_hat, H_hat, t_hat, iterations, converged)."""
    cfg = exp.system
    variant = exp.baseline if variant is None else variant
    if variant == "genie-csi":
        t_hat = genie_symbols(Y, drop.H, drop.activity, drop.C, cfg)
        return drop.activity.copy(), drop.H.copy(), t_hat, 0, True
    opts = ReceiverOptions.from_experiment(exp, use_mrf=variant != "no-mrf")
    res = run_receiver(Y, drop.codes, cfg, opts, C=drop.C)
    return res.activity, res.H, res.symbols, res.iterations, res.converged


def run_drop(exp: ExperimentConfig, drop_index, snr_db, variant=None, drop: Drop = None) -> MetricReport:
    cfg = exp.system
    drop = make_drop(cfg, exp.seed, drop_index) if drop is None else drop
    sigma2 = drop_sigma2(drop, snr_db, cfg)
    start = time.perf_counter()
    lam, H, t, iters, conv = detect(drop, drop.observe(sigma2), sigma2, exp, variant)
    wall = 1e3 * (time.perf_counter() - start)
    rep = compute_metrics((drop.activity, drop.H, drop.t), (lam, H, t), snr_db)
    rep.seed, rep.drop, rep.iterations, rep.converged, rep.wall_time_ms = exp.seed, drop_index, iters, conv, wall
    return rep


@dataclass
class RunRecord:
    digest: str
    reports: list = field(default_factory=list)
    failures: list = field(default_factory=list)  # (snr_db, drop, message)

    def snr_points(self):
        return sorted({r.snr_db for r in self.reports})

    def aggregate(self, snr_db):
        """Mean AER / NMSE / SER over the drops at one SNR (NaN NMSE rows skipped)."""
        rows = [r for r in self.reports if r.snr_db == snr_db]
        nmse = [r.nmse for r in rows if not math.isnan(r.nmse)]
        return MetricReport(snr_db=snr_db,
                            aer=float(np.mean([r.aer for r in rows])) if rows else float("nan"),
                            nmse=float(np.mean(nmse)) if nmse else float("nan"),
                            ser=float(np.mean([r.ser for r in rows])) if rows else float("nan"),
                            drops=len(rows), seed=rows[0].seed if rows else 0,
                            iterations=int(round(np.mean([r.iterations for r in rows]))) if rows else 0,
                            converged=all(r.converged for r in rows))

    def aggregates(self):
        return [self.aggregate(s) for s in self.snr_points()]


def run_sweep(exp: ExperimentConfig, variant=None, progress=None) -> RunRecord:
    """Every (SNR, drop) pair of the configuration; failures are recorded, not raised.

    A drop's scenario is generated once and reused across SNR points.
    """
    rec = RunRecord(exp.digest() if variant is None else exp.replace(baseline=variant).digest())
    for d in range(exp.drops):
        drop = make_drop(exp.system, exp.seed, d)
        for snr in exp.snr_db:
            try:
                rep = run_drop(exp, d, snr, variant, drop)
            except Exception as exc:  # noqa: BLE001 - a failed drop must not end the sweep
                log.error("drop %d at %.1f dB failed: %s", d, snr, exc)
                rec.failures.append((snr, d, repr(exc)))
                continue
            rec.reports.append(rep)
            if progress is not None:
                progress(rep)
    rec.reports.sort(key=lambda r: (r.snr_db, r.drop))
    return rec


def run_baseline(exp: ExperimentConfig, variant, progress=None) -> RunRecord:
    if variant not in ("no-mrf", "genie-csi", "mrf-gm-amp"):
        raise ValueError(f"unknown baseline {variant!r}")
    return run_sweep(exp.replace(baseline=variant), progress=progress)


def write_csv(record: RunRecord, out=None, timing=True):
    """Write per-drop rows; ``timing=False`` zeroes wall times for byte-stable output."""
    buf = io.StringIO() if out is None else out
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in record.reports:
        row = dict(zip(CSV_FIELDS, r.row()))
        row["wall_time_ms"] = f"{r.wall_time_ms:.3f}" if timing else "0"
        for k in ("aer", "nmse", "ser"):
            row[k] = repr(float(row[k]))
        w.writerow([row[k] for k in CSV_FIELDS])
    return buf.getvalue() if out is None else None


def bench_iteration(U_values=(10, 20, 40), repeats=3, seed=0, base: SystemConfig = None):
    """Median wall time (s) of one outer receiver iteration for each device count."""
    base = SystemConfig() if base is None else base
    out = {}
    for U in U_values:
        cfg = base.replace(U=U)
        drop = make_drop(cfg, seed, 0)
        sigma2 = drop_sigma2(drop, 10.0, cfg)
        loop = _Loop(drop.observe(sigma2), drop.C, cfg, ReceiverOptions())
        loop._prev_w = None
        loop.step()  # warm-up
        times = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            loop.step()
            times.append(time.perf_counter() - t0)
        out[U] = float(np.median(times))
    return out


def linear_fit_r2(x, y):
    x, y = np.asarray(x, float), np.asarray(y, float)
    A = np.stack([x, np.ones_like(x)], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss = np.sum((y - y.mean()) ** 2)
    return float(1.0 - np.sum(resid ** 2) / ss) if ss > 0 else 1.0, coef
