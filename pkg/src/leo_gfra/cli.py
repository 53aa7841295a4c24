"""Command line entry point: ``leo-gfra run | validate | bench``."""

import argparse
import logging
import sys

from .config import BASELINES, load_config, make_config
from .harness import bench_iteration, linear_fit_r2, run_sweep, write_csv
from .validate import run_validation


def _float_list(text):
    return tuple(float(v) for v in text.replace(",", " ").split())


def _int_list(text):
    return tuple(int(v) for v in text.replace(",", " ").split())


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    p = argparse.ArgumentParser(prog="leo-gfra", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", parents=[common], help="Monte Carlo sweep; writes per-drop CSV rows")
    r.add_argument("--config", metavar="PATH", help="key = value file with ExperimentConfig/SystemConfig fields")
    r.add_argument("--snr", type=_float_list, metavar="LIST", help="SNR points in dB, e.g. -6,-2,2")
    r.add_argument("--drops", type=int, metavar="N")
    r.add_argument("--seed", type=int, metavar="N")
    r.add_argument("--baseline", choices=BASELINES)
    r.add_argument("--out", metavar="PATH", help="CSV destination (default: stdout)")
    r.add_argument("--no-timing", action="store_true", help="write 0 for wall times (byte-stable output)")

    v = sub.add_parser("validate", parents=[common], help="oracle equivalence checks on small instances")
    v.add_argument("--scale", type=float, default=1.0, help="multiplier on the number of instances")

    b = sub.add_parser("bench", parents=[common], help="time one outer iteration against the number of devices")
    b.add_argument("--users", type=_int_list, default=(10, 20, 40), metavar="LIST")
    b.add_argument("--repeats", type=int, default=3)
    b.add_argument("--config", metavar="PATH", help="base system configuration")
    return p


def _experiment(args):
    over = {}
    if args.snr is not None:
        over["snr_db"] = args.snr
    for key in ("drops", "seed", "baseline"):
        if getattr(args, key) is not None:
            over[key] = getattr(args, key)
    return load_config(args.config, **over) if args.config else make_config(**over)


def cmd_run(args):
    exp = _experiment(args)
    log = logging.getLogger("leo_gfra.cli")
    log.info("config %s: %d drops x %d SNR points, baseline %s", exp.digest(), exp.drops, len(exp.snr_db),
             exp.baseline)

    def progress(rep):
        log.info("snr %5.1f dB drop %4d: aer %.3f nmse %.4f ser %.4f (%d it, %.1f s)", rep.snr_db, rep.drop,
                 rep.aer, rep.nmse, rep.ser, rep.iterations, rep.wall_time_ms / 1e3)

    rec = run_sweep(exp, progress=progress)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            write_csv(rec, fh, timing=not args.no_timing)
    else:
        write_csv(rec, sys.stdout, timing=not args.no_timing)
    for agg in rec.aggregates():
        print(f"snr {agg.snr_db:6.1f} dB  drops {agg.drops:4d}  aer {agg.aer:.4f}  nmse {agg.nmse:.4f}  "
              f"ser {agg.ser:.4f}", file=sys.stderr)
    for snr, drop, msg in rec.failures:
        print(f"failed: snr {snr} dB drop {drop}: {msg}", file=sys.stderr)
    return 1 if rec.failures else 0


def cmd_validate(args):
    ok = True
    for name, passed, detail, secs in run_validation(args.scale):
        print(f"{'PASS' if passed else 'FAIL'}  {name:16s} {detail}  [{secs:.2f} s]")
        ok &= passed
    return 0 if ok else 1


def cmd_bench(args):
    base = load_config(args.config).system if args.config else None
    times = bench_iteration(args.users, repeats=args.repeats, base=base)
    for U, t in times.items():
        print(f"U = {U:4d}: {1e3 * t:9.1f} ms per outer iteration")
    if len(times) >= 3:
        r2, (slope, icept) = linear_fit_r2(list(times), list(times.values()))
        print(f"linear fit: {1e3 * slope:.2f} ms/device + {1e3 * icept:.1f} ms, R^2 = {r2:.4f}")
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    return {"run": cmd_run, "validate": cmd_validate, "bench": cmd_bench}[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
