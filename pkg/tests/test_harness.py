import json
import math

import numpy as np
import pytest
from scipy import special

from cvdistill import protocol
from cvdistill.cli import ConfigError, build_spec, main, parse_config_text
from cvdistill.harness import (
    CSV_COLUMNS,
    SweepSpec,
    calibrate_eta,
    format_csv,
    run_sweep,
    verify,
)
from cvdistill.protocol import ProtocolConfig, no_noise_total_variance

VACUUM = dict(squeezing_dB=0.0, antisqueezing_dB=0.0)
HEADER = (
    "sigma_pn,Q,success_rate,var_xplus,var_pminus,I,D,purity,logneg,kurtosis,"
    "success_rate_se,var_xplus_se,var_pminus_se,I_se,D_se,purity_se,logneg_se,kurtosis_se,"
    "Q_normalized,n_accepted,n_total,flag"
)


@pytest.fixture
def corrupted_splitter(monkeypatch):
    """Distillation splitter with the P sign of one verification output flipped."""
    good = protocol.distillation_bs_matrix

    def bad():
        m = good().copy()
        m[5] *= -1
        return m

    monkeypatch.setattr(protocol, "distillation_bs_matrix", bad)


def small_spec(tmp_path=None, **base):
    cfg = dict(n_shots=100_000, seed=7, block_size=1 << 14)
    cfg.update(base)
    return SweepSpec(
        Q_grid=(0.2, 0.6, math.inf),
        sigma_list=(0.0, 0.497),
        base=ProtocolConfig(**cfg),
        output_path=None if tmp_path is None else str(tmp_path),
    )


def test_csv_header_is_fixed():
    assert ",".join(CSV_COLUMNS) == HEADER
    assert format_csv([]) == HEADER + "\n"


def test_sweep_spec_validation():
    with pytest.raises(ValueError):
        SweepSpec(Q_grid=(0.5, 0.2))
    with pytest.raises(ValueError):
        SweepSpec(Q_grid=(0.5, 0.5))
    with pytest.raises(ValueError):
        SweepSpec(Q_grid=())
    with pytest.raises(ValueError):
        SweepSpec(sigma_list=())
    with pytest.raises(ValueError):
        SweepSpec(outputs=("fig9",))


def test_sweep_outputs_and_rows(tmp_path):
    spec = small_spec(tmp_path)
    res = run_sweep(spec, workers=1)
    assert len(res.rows) == 6
    lines = (tmp_path / "sweep.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == HEADER and len(lines) == 7
    recs = [json.loads(l) for l in (tmp_path / "sweep.jsonl").read_text().splitlines()]
    assert list(recs[0]) == list(CSV_COLUMNS)
    assert recs[2]["Q"] == "inf"
    fig3 = [json.loads(l) for l in (tmp_path / "fig3.jsonl").read_text().splitlines()]
    assert len(fig3) == 6 and all(len(r["gamma"]) == 16 and len(r["gamma_se"]) == 16 for r in fig3)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["seed"] == 7 and manifest["code_version"]
    assert len(manifest["per_point_runtime"]) == 6
    assert manifest["spec"]["Q_grid"][-1] == "inf"
    for row in res.rows:
        assert all(math.isfinite(row[f"{c}_se"]) for c in ("success_rate", "I", "D"))


def test_repeat_runs_byte_identical_across_worker_counts(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    run_sweep(small_spec(a), workers=1)
    run_sweep(small_spec(b), workers=3)
    for name in ("sweep.csv", "sweep.jsonl", "fig3.jsonl"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_output_selection(tmp_path):
    spec = SweepSpec(Q_grid=(1.0,), sigma_list=(0.1,), base=ProtocolConfig(n_shots=20_000), outputs=("fig3",), output_path=str(tmp_path))
    run_sweep(spec)
    assert sorted(p.name for p in tmp_path.iterdir()) == ["fig3.jsonl", "manifest.json"]


def test_vacuum_point():
    spec = SweepSpec(Q_grid=(1.0,), sigma_list=(0.0,), base=ProtocolConfig(n_shots=400_000, seed=11, **VACUUM))
    (row,) = run_sweep(spec).rows
    assert abs(row["success_rate"] - special.erf(1.0)) < 4 * row["success_rate_se"]
    assert abs(row["I"] - 1.0) < 4 * row["I_se"]
    assert row["flag"] == ""


def test_distilled_curve_falls_below_undistilled():
    spec = SweepSpec(Q_grid=(0.08, 0.25, 0.6, math.inf), sigma_list=(0.497,), base=ProtocolConfig(n_shots=1_000_000, seed=12))
    rows = run_sweep(spec).rows
    rates = [r["success_rate"] for r in rows]
    I = [r["I"] for r in rows]
    assert rates == sorted(rates)
    assert I[0] < I[1] < I[-1]
    assert I[-1] - I[0] > 4 * math.hypot(rows[0]["I_se"], rows[-1]["I_se"])


def test_empty_and_low_stats_flags():
    spec = SweepSpec(Q_grid=(1e-9, 2e-3, 1.0), sigma_list=(0.3,), base=ProtocolConfig(n_shots=20_000, seed=13))
    res = run_sweep(spec)
    empty, low, ok = res.rows
    assert empty["flag"] == "empty" and empty["n_accepted"] == 0 and math.isnan(empty["I"])
    assert 0 < low["n_accepted"] < 100 and low["flag"] in ("low_stats", "insufficient")
    assert ok["flag"] == ""
    assert res.any_empty
    assert [p["flag"] for p in res.manifest["flagged_points"]] == ["empty", low["flag"]]


def test_verify_passes_on_vacuum_grid():
    spec = SweepSpec(Q_grid=(0.3, 1.0, math.inf), sigma_list=(0.0, 0.497), base=ProtocolConfig(n_shots=200_000, seed=14, **VACUUM))
    report = verify(spec)
    assert report.passed and report.max_abs_z < 4
    assert not report.oracle_failures
    assert len(report.lines()) == len(report.comparisons) + 1


def test_verify_detects_corrupted_splitter(corrupted_splitter):
    spec = SweepSpec(Q_grid=(0.5, math.inf), sigma_list=(0.1,), base=ProtocolConfig(n_shots=200_000, seed=15))
    report = verify(spec)
    assert not report.passed and report.max_abs_z > 4
    worst = max(report.comparisons, key=lambda c: abs(c.z))
    assert worst.quantity in ("gamma[13]", "var_pminus", "I")


def test_calibrate_eta():
    assert calibrate_eta(0.6774) == pytest.approx(1.0, abs=1e-3)
    eta = calibrate_eta(0.725)
    assert no_noise_total_variance(eta) == pytest.approx(0.725, abs=1e-4)
    assert eta == pytest.approx(0.8525, abs=1e-4)
    for bad in (1.0, 1.2, 0.5):
        with pytest.raises(ValueError):
            calibrate_eta(bad)


def test_config_parsing():
    text = """
    # sweep
    seed = 9
    n_shots = 5000
    Q_grid = 0.1, 0.5, inf
    sigma_list = 0.2
    bhd_settings = 0:0, 1.5707963267948966:1.5707963267948966
    sampling_mode = joint   # inline comment
    """
    values = parse_config_text(text)
    assert values["Q_grid"] == (0.1, 0.5, math.inf)
    assert values["bhd_settings"][1] == (math.pi / 2, math.pi / 2)
    spec = build_spec(values)
    assert spec.base.seed == 9 and spec.base.sampling_mode == "joint" and spec.sigma_list == (0.2,)
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config_text("shots = 10")
    with pytest.raises(ConfigError, match="line 2"):
        parse_config_text("seed = 1\nseed 2")
    with pytest.raises(ConfigError):
        parse_config_text("eta = high")


def test_cli_success_and_overrides(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("seed = 3\nn_shots = 1000000\nsigma_list = 0.1\nQ_grid = 0.5, 1.0\n")
    assert main(["--config", str(cfg), "--shots", "20000", "--sigma", "0.2,0.3"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == HEADER and len(out) == 5
    assert [l.split(",")[0] for l in out[1:]] == ["0.2", "0.2", "0.3", "0.3"]
    assert all(l.split(",")[CSV_COLUMNS.index("n_total")] == "20000" for l in out[1:])


def test_cli_writes_files(tmp_path):
    assert main(["--shots", "20000", "--sigma", "0.3", "--q-grid", "0.5,inf", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "sweep.csv").exists() and (tmp_path / "manifest.json").exists()


@pytest.mark.parametrize(
    "argv",
    [
        ["--q-grid", "0.5,0.2"],
        ["--shots", "0"],
        ["--eta", "1.5"],
        ["--sigma", "-0.1"],
        ["--config", "/nonexistent/cfg"],
        ["--outputs", "fig7"],
        ["--calibrate-eta", "1.0"],
    ],
)
def test_cli_config_errors(argv):
    assert main(argv) == 2


def test_cli_calibrate(capsys):
    assert main(["--calibrate-eta", "0.725"]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(0.85247, abs=1e-5)


def test_cli_empty_ensemble_exit():
    assert main(["--shots", "2000", "--sigma", "0.3", "--q-grid", "1e-9,1.0"]) == 4


def test_cli_verify_exits(corrupted_splitter, capsys):
    args = ["--verify", "--shots", "200000", "--sigma", "0.1", "--q-grid", "0.5,inf", "--seed", "16"]
    assert main(args) == 3
    assert "FAILED" in capsys.readouterr().err


def test_cli_verify_passes(capsys):
    assert main(["--verify", "--shots", "200000", "--sigma", "0.3", "--q-grid", "0.5,inf", "--seed", "17"]) == 0
    assert "passed" in capsys.readouterr().err


def test_kernel_sample_is_distillation_matrix_agnostic_of_workers():
    cfg = ProtocolConfig(n_shots=50_000, block_size=1 << 12, seed=18)
    a = protocol.simulate_shots(cfg, workers=1)
    b = protocol.simulate_shots(cfg, workers=4)
    assert np.array_equal(a.trigger, b.trigger) and np.array_equal(a.verification, b.verification)


@pytest.mark.slow
def test_verify_gate_default_grid():
    """The shipped default grid at 10^6 shots passes the |z| <= 4 gate."""
    report = verify(SweepSpec())
    assert not report.oracle_failures
    assert report.passed, max(report.comparisons, key=lambda c: abs(c.z))
