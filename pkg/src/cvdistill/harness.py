"""Parameter sweeps, the oracle comparison gate and eta calibration."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import bisect

from . import __version__
from .metrics import PAIRS, INTRAMODAL, InsufficientDataError, InvalidEstimateError, metrics_report
from .oracle import OracleConvergenceError, check_convergence
from .protocol import ProtocolConfig, no_noise_total_variance, simulate_shots

log = logging.getLogger(__name__)

DEFAULT_SIGMAS = (0.1, 0.2, 0.3, 0.4, 0.497)
DEFAULT_Q_GRID = (0.04, 0.08, 0.15, 0.25, 0.35, 0.45, 0.6, 0.8, 1.0, 1.5, math.inf)
OUTPUT_CHOICES = ("fig2a", "fig2b", "fig3", "fig4", "all")
LOW_STATS = 100

VALUE_COLUMNS = ("success_rate", "var_xplus", "var_pminus", "I", "D", "purity", "logneg", "kurtosis")
CSV_COLUMNS = (
    ("sigma_pn", "Q")
    + VALUE_COLUMNS
    + tuple(f"{c}_se" for c in VALUE_COLUMNS)
    + ("Q_normalized", "n_accepted", "n_total", "flag")
)


@dataclass(frozen=True)
class SweepSpec:
    Q_grid: tuple[float, ...] = DEFAULT_Q_GRID
    sigma_list: tuple[float, ...] = DEFAULT_SIGMAS
    base: ProtocolConfig = field(default_factory=ProtocolConfig)
    outputs: tuple[str, ...] = ("all",)
    output_path: str | None = None

    def __post_init__(self):
        q = tuple(float(x) for x in self.Q_grid)
        s = tuple(float(x) for x in self.sigma_list)
        if not q or not s:
            raise ValueError("Q_grid and sigma_list must be nonempty")
        if any(b <= a for a, b in zip(q, q[1:])):
            raise ValueError(f"Q_grid must be strictly increasing, got {q}")
        if q[0] <= 0:
            raise ValueError("thresholds must be positive")
        if any(not (math.isfinite(x) and x >= 0) for x in s):
            raise ValueError(f"sigma values must be finite and >= 0, got {s}")
        bad = set(self.outputs) - set(OUTPUT_CHOICES)
        if bad:
            raise ValueError(f"unknown outputs {sorted(bad)}; choose from {OUTPUT_CHOICES}")
        object.__setattr__(self, "Q_grid", q)
        object.__setattr__(self, "sigma_list", s)
        object.__setattr__(self, "outputs", tuple(self.outputs))

    def wants(self, name: str) -> bool:
        return "all" in self.outputs or name in self.outputs


def _nan_row(sigma, Q, total, flag):
    row = {c: float("nan") for c in CSV_COLUMNS}
    row.update(sigma_pn=sigma, Q=Q, n_accepted=0, n_total=total, flag=flag, success_rate=0.0, success_rate_se=0.0)
    return row


def point_row(ensemble, sigma: float) -> tuple[dict, list | None, list | None]:
    """One dataset row plus the fig3 matrix and its SEs (row-major, 16 values)."""
    Q = ensemble.Q
    try:
        rep = metrics_report(ensemble)
    except (InsufficientDataError, InvalidEstimateError) as exc:
        flag = "empty" if ensemble.accepted == 0 else "insufficient"
        log.warning("sigma=%s Q=%s flagged %s: %s", sigma, Q, flag, exc)
        row = _nan_row(sigma, Q, ensemble.total, flag)
        row["success_rate"] = ensemble.success_rate
        row["success_rate_se"] = ensemble.success_rate_se
        row["n_accepted"] = ensemble.accepted
        return row, None, None
    values = {
        "success_rate": rep.success_rate,
        "var_xplus": rep.var_xplus,
        "var_pminus": rep.var_pminus,
        "I": rep.I,
        "D": rep.D,
        "purity": rep.purity,
        "logneg": rep.log_negativity,
        "kurtosis": rep.kurtosis_xplus,
    }
    row = {"sigma_pn": sigma, "Q": Q}
    for name, est in values.items():
        row[name] = est.value
        row[f"{name}_se"] = est.se
    row["Q_normalized"] = Q / ensemble.trigger_std
    row["n_accepted"] = ensemble.accepted
    row["n_total"] = ensemble.total
    row["flag"] = "low_stats" if ensemble.accepted < LOW_STATS else ""
    gamma = rep.covariance
    return row, gamma.gamma_normalized.ravel().tolist(), gamma.standard_errors.ravel().tolist()


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def format_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def _json_value(x):
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)  # "nan", "inf"
    return x


def format_jsonl(records: list[dict]) -> str:
    lines = []
    for rec in records:
        clean = {k: [_json_value(v) for v in val] if isinstance(val, list) else _json_value(val) for k, val in rec.items()}
        lines.append(json.dumps(clean, sort_keys=False))
    return "".join(line + "\n" for line in lines)


@dataclass
class SweepResult:
    rows: list[dict]
    fig3: list[dict]
    manifest: dict

    @property
    def any_empty(self) -> bool:
        return any(r["flag"] == "empty" for r in self.rows)


def run_sweep(spec: SweepSpec, workers: int | None = None) -> SweepResult:
    """Simulate every (sigma, Q) point and write the datasets.

    Each sigma is one ensemble run; all thresholds are applied to the same
    shot stream, so acceptance regions are nested across the Q grid.
    """
    rows, fig3, timings = [], [], []
    for sigma in spec.sigma_list:
        cfg = spec.base.replace(sigma_pn=sigma, sigma_channels=None)
        t0 = time.perf_counter()
        shots = simulate_shots(cfg, workers)
        t_sim = time.perf_counter() - t0
        for Q in spec.Q_grid:
            t1 = time.perf_counter()
            row, gamma, gamma_se = point_row(shots.ensemble(Q), sigma)
            rows.append(row)
            if gamma is not None:
                fig3.append(
                    {"sigma_pn": sigma, "Q": Q, "success_rate": row["success_rate"], "gamma": gamma, "gamma_se": gamma_se}
                )
            timings.append({"sigma_pn": sigma, "Q": Q, "seconds": time.perf_counter() - t1 + t_sim / len(spec.Q_grid)})
        log.info("sigma=%s: %d shots, %.2fs", sigma, cfg.n_shots, time.perf_counter() - t0)

    finite = [r for r in rows if r["flag"] != "empty"]
    manifest = {
        "code_version": __version__,
        "seed": spec.base.seed,
        "spec": _spec_echo(spec),
        "per_point_runtime": timings,
        "se_summary": {
            f"max_{c}_se": max((r[f"{c}_se"] for r in finite if math.isfinite(r[f"{c}_se"])), default=None)
            for c in VALUE_COLUMNS
        },
        "log_negativity_base": 2,
        "flagged_points": [{"sigma_pn": r["sigma_pn"], "Q": r["Q"], "flag": r["flag"]} for r in rows if r["flag"]],
    }
    result = SweepResult(rows, fig3, manifest)
    if spec.output_path is not None:
        write_outputs(result, spec)
    return result


def _spec_echo(spec: SweepSpec) -> dict:
    d = asdict(spec)
    d["Q_grid"] = [_json_value(q) for q in spec.Q_grid]
    d["base"]["Q"] = _json_value(spec.base.Q)
    return d


def write_outputs(result: SweepResult, spec: SweepSpec) -> None:
    out = Path(spec.output_path)
    out.mkdir(parents=True, exist_ok=True)
    if any(spec.wants(f) for f in ("fig2a", "fig2b", "fig4")):
        (out / "sweep.csv").write_text(format_csv(result.rows), encoding="utf-8")
        ordered = [{c: row[c] for c in CSV_COLUMNS} for row in result.rows]
        (out / "sweep.jsonl").write_text(format_jsonl(ordered), encoding="utf-8")
    if spec.wants("fig3"):
        (out / "fig3.jsonl").write_text(format_jsonl(result.fig3), encoding="utf-8")
    (out / "manifest.json").write_text(json.dumps(result.manifest, indent=2) + "\n", encoding="utf-8")


@dataclass
class Comparison:
    sigma_pn: float
    Q: float
    quantity: str
    mc: float
    se: float
    oracle: float

    @property
    def z(self) -> float:
        diff = self.mc - self.oracle
        if self.se > 0:
            return diff / self.se
        return 0.0 if abs(diff) < 1e-12 else math.inf


@dataclass
class VerifyReport:
    comparisons: list[Comparison]
    threshold: float
    oracle_failures: list[str] = field(default_factory=list)

    @property
    def max_abs_z(self) -> float:
        return max((abs(c.z) for c in self.comparisons), default=0.0)

    @property
    def passed(self) -> bool:
        return not self.oracle_failures and self.max_abs_z <= self.threshold

    def lines(self) -> list[str]:
        out = [f"{'sigma_pn':>8} {'Q':>8} {'quantity':>12} {'mc':>12} {'se':>10} {'oracle':>12} {'z':>7}"]
        for c in self.comparisons:
            out.append(f"{c.sigma_pn:8.4g} {c.Q:8.4g} {c.quantity:>12} {c.mc:12.6g} {c.se:10.3g} {c.oracle:12.6g} {c.z:7.2f}")
        out.extend(f"ORACLE CONVERGENCE FAILURE: {msg}" for msg in self.oracle_failures)
        return out


def compare_point(ensemble, sigma: float, oracle) -> list[Comparison]:
    rep = metrics_report(ensemble)
    Q = ensemble.Q
    out = [
        Comparison(sigma, Q, "success_rate", rep.success_rate.value, rep.success_rate.se, oracle.success_rate),
        Comparison(sigma, Q, "var_xplus", rep.var_xplus.value, rep.var_xplus.se, oracle.var_xplus),
        Comparison(sigma, Q, "var_pminus", rep.var_pminus.value, rep.var_pminus.se, oracle.var_pminus),
        Comparison(sigma, Q, "I", rep.I.value, rep.I.se, oracle.total_variance),
    ]
    cov = rep.covariance
    ref = oracle.gamma_normalized
    for a, b in PAIRS:
        if (a, b) in INTRAMODAL and not cov.intramodal_estimated:
            continue
        out.append(Comparison(sigma, Q, f"gamma[{a}{b}]", cov.gamma_normalized[a, b], cov.standard_errors[a, b], ref[a, b]))
    return out


def verify(spec: SweepSpec, threshold: float = 4.0, workers: int | None = None) -> VerifyReport:
    """Run Monte Carlo and oracle on the same grid and collect z-scores."""
    comparisons, failures = [], []
    for sigma in spec.sigma_list:
        cfg = spec.base.replace(sigma_pn=sigma, sigma_channels=None)
        shots = simulate_shots(cfg, workers)
        for Q in spec.Q_grid:
            try:
                oracle = check_convergence(cfg, Q=Q)
            except OracleConvergenceError as exc:
                failures.append(f"sigma={sigma} Q={Q}: {exc}")
                continue
            comparisons.extend(compare_point(shots.ensemble(Q), sigma, oracle))
    return VerifyReport(comparisons, threshold, failures)


def calibrate_eta(target_I: float, squeezing_dB: float = 4.5, tol: float = 1e-4) -> float:
    """Efficiency at which the noiseless, undistilled total variance equals ``target_I``.

    ``I(eta)`` decreases from 1 (eta -> 0) to its ideal value at eta = 1, so
    targets outside ``[I(1), 1)`` cannot be reached.
    """
    lo_I = no_noise_total_variance(1.0, squeezing_dB)
    if not lo_I - tol <= target_I < 1.0:
        raise ValueError(f"target I={target_I} unreachable; attainable range is [{lo_I:.6f}, 1)")
    if target_I <= lo_I:
        return 1.0
    f = lambda eta: no_noise_total_variance(eta, squeezing_dB) - target_I  # noqa: E731
    return bisect(f, 1e-12, 1.0, xtol=1e-14)
