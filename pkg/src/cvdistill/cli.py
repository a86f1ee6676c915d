"""Command-line entry point.

Configuration comes from an optional flat ``key = value`` file whose keys
are the field names of :class:`ProtocolConfig` and :class:`SweepSpec`;
command-line flags override file values. Data go to files (or to standard
output when no ``--out`` is given); progress goes to standard error.

Exit codes: 0 success, 2 invalid configuration, 3 verify-gate failure,
4 at least one empty ensemble.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import math
import sys
from pathlib import Path

from .harness import SweepSpec, calibrate_eta, format_csv, run_sweep, verify
from .protocol import ProtocolConfig

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY, EXIT_EMPTY = 0, 2, 3, 4

_PROTOCOL_FIELDS = {f.name: f for f in dataclasses.fields(ProtocolConfig)}
_SWEEP_KEYS = {"Q_grid", "sigma_list", "outputs", "output_path"}

log = logging.getLogger("cvdistill")


class ConfigError(ValueError):
    pass


def _float(text: str) -> float:
    text = text.strip().lower()
    if text in ("inf", "+inf", "infinity"):
        return math.inf
    return float(text)


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(_float(t) for t in text.split(",") if t.strip())


def _settings(text: str) -> tuple[tuple[float, float], ...]:
    pairs = []
    for item in text.split(","):
        a, b = item.split(":")
        pairs.append((_float(a), _float(b)))
    return tuple(pairs)


_PARSERS = {
    "squeezing_dB": _float,
    "antisqueezing_dB": _float,
    "eta": _float,
    "sigma_pn": _float,
    "Q": _float,
    "n_shots": int,
    "seed": int,
    "block_size": int,
    "trigger_angle": _float,
    "sampling_mode": str.strip,
    "sigma_channels": _float_list,
    "bhd_settings": _settings,
    "Q_grid": _float_list,
    "sigma_list": _float_list,
    "outputs": lambda t: tuple(s.strip() for s in t.split(",") if s.strip()),
    "output_path": str.strip,
}


def parse_config_text(text: str) -> dict:
    """Parse flat ``key = value`` text; ``#`` starts a comment."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _PARSERS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = _PARSERS[key](value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
    return values


def build_spec(values: dict) -> SweepSpec:
    proto = {k: v for k, v in values.items() if k in _PROTOCOL_FIELDS}
    sweep = {k: v for k, v in values.items() if k in _SWEEP_KEYS}
    if "sigma_pn" in proto and "sigma_list" not in sweep:
        sweep["sigma_list"] = (proto["sigma_pn"],)
    return SweepSpec(base=ProtocolConfig(**proto), **sweep)


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cvdistill", description="Distillation sweep, oracle gate and calibration.")
    p.add_argument("--config", type=Path, help="flat key = value configuration file")
    p.add_argument("--seed", type=int)
    p.add_argument("--shots", type=int, dest="n_shots")
    p.add_argument("--q-grid", dest="Q_grid", help="comma-separated, strictly increasing thresholds (inf allowed)")
    p.add_argument("--sigma", dest="sigma_list", help="comma-separated phase-noise strengths in radians")
    p.add_argument("--eta", type=float)
    p.add_argument("--out", dest="output_path", help="output directory; CSV goes to stdout when omitted")
    p.add_argument("--outputs", help="comma-separated subset of fig2a,fig2b,fig3,fig4,all")
    p.add_argument("--sampling-mode", dest="sampling_mode", choices=("per-setting", "joint"))
    p.add_argument("--verify", action="store_true", help="compare Monte Carlo with the oracle instead of sweeping")
    p.add_argument("--verify-threshold", type=float, default=4.0, help="max |z| tolerated by --verify")
    p.add_argument("--calibrate-eta", type=float, metavar="TARGET_I", help="print the eta giving this noiseless I")
    p.add_argument("--workers", type=int, help="worker threads (default: CVDISTILL_WORKERS or CPU count)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr, format="%(message)s")

    if args.calibrate_eta is not None:
        try:
            print(repr(calibrate_eta(args.calibrate_eta)))
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        return EXIT_OK

    try:
        values = parse_config_text(args.config.read_text(encoding="utf-8")) if args.config else {}
        overrides = {
            "seed": args.seed,
            "n_shots": args.n_shots,
            "eta": args.eta,
            "output_path": args.output_path,
            "sampling_mode": args.sampling_mode,
            "Q_grid": _float_list(args.Q_grid) if args.Q_grid else None,
            "sigma_list": _float_list(args.sigma_list) if args.sigma_list else None,
            "outputs": _PARSERS["outputs"](args.outputs) if args.outputs else None,
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        spec = build_spec(values)
    except (ValueError, TypeError, OSError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.verify:
        report = verify(spec, threshold=args.verify_threshold, workers=args.workers)
        print("\n".join(report.lines()))
        if report.oracle_failures:
            print("verify: oracle did not converge", file=sys.stderr)
            return EXIT_VERIFY
        if not report.passed:
            print(f"verify: FAILED, max |z| = {report.max_abs_z:.2f} > {args.verify_threshold}", file=sys.stderr)
            return EXIT_VERIFY
        print(f"verify: passed, max |z| = {report.max_abs_z:.2f}", file=sys.stderr)
        return EXIT_OK

    result = run_sweep(spec, workers=args.workers)
    if spec.output_path is None:
        sys.stdout.write(format_csv(result.rows))
    if result.any_empty:
        print("some points had no accepted shots; see the 'flag' column", file=sys.stderr)
        return EXIT_EMPTY
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
