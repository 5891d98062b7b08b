"""Command-line front end.

Subcommands
-----------
sweep
    BER/SER sweep; writes ``receiver,snr_db,trials,bit_errors,ber,ci_low,ci_high``
    CSV and, with ``--out``, a JSON manifest next to it.
etf
    Equivalent transfer function table ``s,sigma2,F(s)``.
constellation
    Predicted and simulated MRC outputs for a fixed angle of arrival.
complexity
    Complex-multiply counts of the two detector families.

Exit status is 0 on success, 2 on usage errors and 1 on runtime errors.
"""

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .errors import CapacityError, NumericError
from .mc import RECEIVERS, SimConfig, mrc_realizations, run_sweep
from .quant import NoiseModel, etf_real, make_quantizer
from .rx import complexity_bruteforce, complexity_naive

log = logging.getLogger("lowres_mimo")

SWEEP_HEADER = ("receiver", "snr_db", "trials", "bit_errors", "ber", "ci_low", "ci_high")

PRESETS = {
    "fig5": dict(m_antennas=1024, quantizer_bits=1, qam_order=64, gain=1.0,
                 channel_mode="fixed_angle", alpha=math.pi / 12, snr_points_db=(30.0,),
                 receivers=RECEIVERS),
    "fig6": dict(m_antennas=1024, quantizer_bits=1, qam_order=64, gain="auto",
                 snr_points_db=tuple(float(s) for s in range(0, 45, 5)), receivers=RECEIVERS),
    "fig7": dict(m_antennas=32, quantizer_bits=3, qam_order=64, gain="auto",
                 snr_points_db=tuple(float(s) for s in range(10, 55, 5)), receivers=RECEIVERS),
}


class UsageError(Exception):
    pass


def fmt(x):
    """Shortest round-trip decimal form of a number."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _float_list(text):
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _bits(text):
    return "ideal" if text == "ideal" else int(text)


def _gain(text):
    return "auto" if text == "auto" else float(text)


def load_config_file(path):
    """Config keys from a JSON file; a sweep manifest is accepted too."""
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}")
    if isinstance(data, dict) and "config" in data and isinstance(data["config"], dict):
        data = data["config"]
    if not isinstance(data, dict):
        raise UsageError(f"config {path} must hold a JSON object")
    return data


def build_config(args):
    """Preset, then config file, then explicit flags."""
    d = dict(PRESETS[args.preset]) if args.preset else {}
    if args.config:
        d.update(load_config_file(args.config))
    flags = {
        "base_seed": args.seed,
        "max_trials": args.max_trials,
        "target_bit_errors": args.target_errors,
        "snr_points_db": args.snr,
        "m_antennas": args.antennas,
        "k_users": args.users,
        "qam_order": args.qam,
        "quantizer_bits": args.bits,
        "gain": args.gain,
        "channel_mode": args.channel_mode,
        "alpha": args.alpha,
        "receivers": args.receivers.split(",") if args.receivers else None,
    }
    d.update({k: v for k, v in flags.items() if v is not None})
    try:
        return SimConfig.from_dict(d)
    except CapacityError:
        raise
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid configuration: {exc}")


def sweep_csv(records):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for r in records:
        w.writerow([r.receiver, fmt(r.snr_db), fmt(r.trials), fmt(r.bit_errors),
                    fmt(r.ber), fmt(r.ci_low), fmt(r.ci_high)])
    return buf.getvalue()


def _timestamp():
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    when = (datetime.fromtimestamp(int(epoch), timezone.utc) if epoch
            else datetime.now(timezone.utc))
    return when.isoformat(timespec="seconds")


def manifest_path(out):
    return Path(out).with_suffix(".manifest.json")


def write_manifest(out, command, config_dict, base_seed, records):
    manifest = {
        "tool": "lowres_mimo",
        "version": __version__,
        "command": command,
        "timestamp": _timestamp(),
        "base_seed": base_seed,
        "config": config_dict,
        "records": records,
    }
    path = manifest_path(out)
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def _emit(text, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_sweep(args):
    config = build_config(args)
    if args.workers < 1:
        raise UsageError("--workers must be >= 1")
    records = run_sweep(config, workers=args.workers,
                        progress=lambda r: log.info("%s %s dB: %d trials, ber %.3g",
                                                    r.receiver, r.snr_db, r.trials, r.ber))
    _emit(sweep_csv(records), args.out)
    if args.out:
        rows = []
        for r in records:
            row = dict(r.__dict__)
            row["ci_halfwidth"] = r.ci_halfwidth
            rows.append(row)
        write_manifest(args.out, "sweep", config.to_dict(), config.base_seed, rows)
    return 0


def cmd_etf(args):
    lo, hi = args.range
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
        raise UsageError(f"invalid range [{lo}, {hi}]")
    if args.steps < 2:
        raise UsageError("--steps must be >= 2")
    try:
        spec = make_quantizer(args.bits, args.delta)
        noises = [NoiseModel(s2) for s2 in args.sigma2]
    except ValueError as exc:
        raise UsageError(str(exc))
    s = np.linspace(lo, hi, args.steps)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("s", "sigma2", "F(s)"))
    for noise in noises:
        for si, fi in zip(s, etf_real(spec, noise, s)):
            w.writerow((fmt(si), fmt(noise.sigma2), fmt(fi)))
    _emit(buf.getvalue(), args.out)
    return 0


def cmd_constellation(args):
    d = dict(PRESETS[args.preset])
    if args.antennas is not None:
        d["m_antennas"] = args.antennas
    if args.snr is not None:
        d["snr_points_db"] = (args.snr,)
    if args.per_symbol < 2:
        raise UsageError("--per-symbol must be >= 2")
    try:
        config = SimConfig.from_dict(d)
    except ValueError as exc:
        raise UsageError(f"invalid configuration: {exc}")
    if config.channel_mode != "fixed_angle" or config.quantizer_bits is None:
        raise UsageError("constellation needs a fixed-angle quantized preset")
    data = mrc_realizations(config.m_antennas, config.quantizer_bits, config.qam_order,
                            config.alpha, config.snr_points_db[0], args.per_symbol,
                            args.seed, float(config.gain))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    buf.write("# predicted\n")
    w.writerow(("symbol", "re", "im"))
    for j, p in enumerate(data.predictions):
        w.writerow((j, fmt(p.real), fmt(p.imag)))
    buf.write("\n# realizations\n")
    w.writerow(("symbol", "re", "im"))
    for j, y in zip(data.symbols, data.realizations):
        w.writerow((int(j), fmt(y.real), fmt(y.imag)))
    _emit(buf.getvalue(), args.out)
    if args.out:
        cfg = config.to_dict()
        cfg["per_symbol"] = args.per_symbol
        write_manifest(args.out, "constellation", cfg, args.seed, [])
    return 0


def cmd_complexity(args):
    for name, v in (("M", args.m), ("K", args.k), ("n_qam", args.n_qam)):
        if v < 1:
            raise UsageError(f"{name} must be a positive integer")
    naive = complexity_naive(args.m, args.k, args.n_qam)
    brute = complexity_bruteforce(args.m, args.k, args.n_qam)
    print(f"naive_ml\t{naive}")
    print(f"bruteforce_ml\t{brute}")
    print(f"ratio\t{fmt(brute / naive)}")
    return 0


def _add_config_flags(p):
    p.add_argument("--config", help="JSON file with SimConfig keys, or a sweep manifest")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--seed", type=int, help="base seed")
    p.add_argument("--max-trials", type=int)
    p.add_argument("--target-errors", type=int, help="stop a point after this many bit errors")
    p.add_argument("--snr", type=_float_list, help="comma-separated cumulative SNR points in dB")
    p.add_argument("--antennas", type=int)
    p.add_argument("--users", type=int)
    p.add_argument("--qam", type=int)
    p.add_argument("--bits", type=_bits, help="ADC bits, or 'ideal'")
    p.add_argument("--gain", type=_gain, help="ADC input gain, or 'auto'")
    p.add_argument("--channel-mode")
    p.add_argument("--alpha", type=float, help="angle of arrival for fixed_angle mode")
    p.add_argument("--receivers", help="comma-separated subset of " + ",".join(RECEIVERS))


def make_parser():
    parser = argparse.ArgumentParser(prog="lowres-mimo", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", help="BER sweep over SNR points")
    _add_config_flags(p)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="CSV path; a .manifest.json sidecar is written beside it")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("etf", help="equivalent transfer function table")
    p.add_argument("--bits", type=int, default=1)
    p.add_argument("--delta", type=float, default=2.0)
    p.add_argument("--sigma2", type=_float_list, default=[1.0], help="comma-separated noise variances")
    p.add_argument("--range", type=float, nargs=2, default=(-5.0, 5.0), metavar=("LO", "HI"))
    p.add_argument("--steps", type=int, default=2001)
    p.add_argument("--out")
    p.set_defaults(func=cmd_etf)

    p = sub.add_parser("constellation", help="predicted vs simulated MRC outputs")
    p.add_argument("--preset", choices=["fig5"], default="fig5")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--per-symbol", type=int, default=500)
    p.add_argument("--antennas", type=int)
    p.add_argument("--snr", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_constellation)

    p = sub.add_parser("complexity", help="detector multiply counts")
    p.add_argument("m", type=int, metavar="M")
    p.add_argument("k", type=int, metavar="K")
    p.add_argument("n_qam", type=int, metavar="N_QAM")
    p.set_defaults(func=cmd_complexity)
    return parser


def main(argv=None):
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return 2
    except CapacityError as exc:
        print(f"{parser.prog}: capacity error: {exc}", file=sys.stderr)
        return 1
    except (NumericError, OSError, ValueError) as exc:
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
