import json
import re

import pytest

import refflow
from refflow import cli, verify


def write_config(tmp_path, payload, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


def ibp_config(tmp_path, seed=7):
    return write_config(
        tmp_path,
        {
            "kind": "ibp-check",
            "seed": seed,
            "params": {
                "measure": {"name": "gaussian", "n_modes": 3},
                "count": 4000,
                "pairs": [["cos_m1", 0], ["sin_m12", 1]],
            },
        },
    )


def test_list_catalog_names_building_blocks(capsys):
    assert cli.main(["list-catalog"]) == 0
    out = capsys.readouterr().out
    for needle in ("gibbs(alpha,p)", "nemytskii:neg_arctan", "cubic"):
        assert needle in out


def test_unknown_kind_is_config_error(tmp_path, capsys):
    cfg = write_config(tmp_path, {"kind": "frobnicate"})
    assert cli.main(["run", cfg, "--output", str(tmp_path / "out")]) == 2
    assert "config error" in capsys.readouterr().err


def test_missing_and_malformed_config_files(tmp_path, capsys):
    assert cli.main(["run", str(tmp_path / "absent.json"), "--output", str(tmp_path / "o")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["run", str(bad), "--output", str(tmp_path / "o")]) == 2


def test_param_errors_carry_field_path(tmp_path, capsys):
    cfg = write_config(tmp_path, {"kind": "transport-solve", "params": {"N": 1}})
    assert cli.main(["run", cfg, "--output", str(tmp_path / "out")]) == 2
    assert "params.measure" in capsys.readouterr().err

    cfg2 = write_config(
        tmp_path,
        {"kind": "ibp-check", "params": {"measure": {"name": "gaussian", "n_modes": 2}, "pairs": [["cos_m1", 5]]}},
        name="c2.json",
    )
    assert cli.main(["run", cfg2, "--output", str(tmp_path / "out2")]) == 2
    assert "params.pairs[0]" in capsys.readouterr().err


def test_worker_count_validated(tmp_path):
    cfg = write_config(tmp_path, {"kind": "ibp-check", "workers": 0})
    assert cli.main(["run", cfg, "--output", str(tmp_path / "out")]) == 2


def test_ibp_run_writes_manifest_report_and_csv(tmp_path, capsys):
    cfg = ibp_config(tmp_path)
    outdir = tmp_path / "out"
    assert cli.main(["run", cfg, "--output", str(outdir)]) == 0
    stdout = capsys.readouterr().out
    assert "ibp[cos_m1]: pass" in stdout
    assert "wrote" in stdout

    manifest = json.loads((outdir / "manifest.json").read_text())
    assert manifest["kind"] == "ibp-check"
    assert manifest["seed"] == 7
    assert manifest["workers"] == 1
    assert manifest["exit_code"] == 0
    assert manifest["artifact_version"] == refflow.__version__
    assert re.fullmatch(r"[0-9a-f]{64}", manifest["config_hash"])
    assert manifest["wall_clock_seconds"] > 0
    assert not manifest["has_warnings"]
    assert set(manifest["outputs"]) == {"ibp_residuals.csv", "report.json", "manifest.json"}
    for name in manifest["outputs"]:
        assert (outdir / name).exists()

    report = json.loads((outdir / "report.json").read_text())
    assert report["verdicts"] == {"ibp[cos_m1]": "pass", "ibp[sin_m12]": "pass"}
    lines = (outdir / "ibp_residuals.csv").read_text().strip().splitlines()
    assert lines[0] == "u,h,residual,stderr,passed"
    assert len(lines) == 3


def test_repeat_runs_are_bit_identical(tmp_path):
    cfg = ibp_config(tmp_path)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert cli.main(["run", cfg, "--output", str(out1)]) == 0
    assert cli.main(["run", cfg, "--output", str(out2)]) == 0
    assert (out1 / "report.json").read_bytes() == (out2 / "report.json").read_bytes()
    assert (out1 / "ibp_residuals.csv").read_bytes() == (out2 / "ibp_residuals.csv").read_bytes()
    m1 = json.loads((out1 / "manifest.json").read_text())
    m2 = json.loads((out2 / "manifest.json").read_text())
    m1.pop("wall_clock_seconds")
    m2.pop("wall_clock_seconds")
    assert m1 == m2


def test_worker_count_does_not_change_report(tmp_path):
    cfg = ibp_config(tmp_path)
    out1, out4 = tmp_path / "w1", tmp_path / "w4"
    assert cli.main(["run", cfg, "--output", str(out1), "--workers", "1"]) == 0
    assert cli.main(["run", cfg, "--output", str(out4), "--workers", "4"]) == 0
    assert (out1 / "report.json").read_bytes() == (out4 / "report.json").read_bytes()
    assert json.loads((out4 / "manifest.json").read_text())["workers"] == 4


def test_seed_override_changes_results(tmp_path):
    cfg = ibp_config(tmp_path)
    out1, out2 = tmp_path / "s7", tmp_path / "s8"
    assert cli.main(["run", cfg, "--output", str(out1)]) == 0
    assert cli.main(["run", cfg, "--output", str(out2), "--seed", "8"]) == 0
    r1 = json.loads((out1 / "report.json").read_text())
    r2 = json.loads((out2 / "report.json").read_text())
    assert r1["seed"] == 7 and r2["seed"] == 8
    assert r1["details"] != r2["details"]


def test_transport_solve_outputs_density_table(tmp_path):
    cfg = write_config(
        tmp_path,
        {
            "kind": "transport-solve",
            "params": {
                "measure": {"name": "gaussian", "n_modes": 1},
                "N": 1,
                "field": {"name": "constant", "coeffs": [0.1]},
                "rho0": {"name": "bump", "centers": [0.0], "radii": [0.5]},
                "dt": 1e-3,
                "T": 0.25,
                "times": [0.25],
                "eval_per_axis": 9,
            },
        },
    )
    outdir = tmp_path / "out"
    assert cli.main(["run", cfg, "--output", str(outdir)]) == 0
    density = (outdir / "density.csv").read_text().strip().splitlines()
    assert density[0] == "t,x1,rho"
    assert len(density) == 1 + 2 * 9  # t=0 plus one requested time
    mass = (outdir / "mass.csv").read_text().strip().splitlines()
    assert mass[0] == "t,relative_drift,tolerance,passed"
    report = json.loads((outdir / "report.json").read_text())
    assert report["verdicts"] == {"mass[t=0.25]": "pass"}


def test_gibbs_sample_run(tmp_path):
    cfg = write_config(
        tmp_path,
        {
            "kind": "gibbs-sample",
            "params": {"measure": {"name": "gibbs", "n_modes": 2, "alpha": 1.0, "p": 4.0}, "count": 500},
        },
    )
    outdir = tmp_path / "out"
    assert cli.main(["run", cfg, "--output", str(outdir)]) == 0
    lines = (outdir / "samples.csv").read_text().strip().splitlines()
    assert lines[0] == "mode_1,mode_2"
    assert len(lines) == 501
    report = json.loads((outdir / "report.json").read_text())
    assert report["verdicts"]["sampler"] == "pass"
    assert abs(report["details"]["lag1_autocorrelation_energy"]) < 0.1


def test_failed_check_exits_one(tmp_path, monkeypatch):
    def fake(params, seed, workers, outdir):
        return {"verdicts": {"probe": "fail"}, "warnings": [], "details": {}, "outputs": []}

    monkeypatch.setitem(cli.KIND_RUNNERS, "bdg-check", fake)
    cfg = write_config(tmp_path, {"kind": "bdg-check"})
    outdir = tmp_path / "out"
    assert cli.main(["run", cfg, "--output", str(outdir)]) == 1
    assert json.loads((outdir / "manifest.json").read_text())["exit_code"] == 1


def test_theorem_violation_exits_three(tmp_path, monkeypatch):
    def boom(params, seed, workers, outdir):
        raise verify.TheoremViolationError("entropy bound violated at t=0.5")

    monkeypatch.setitem(cli.KIND_RUNNERS, "entropy-audit", boom)
    cfg = write_config(tmp_path, {"kind": "entropy-audit"})
    outdir = tmp_path / "out"
    assert cli.main(["run", cfg, "--output", str(outdir)]) == 3
    manifest = json.loads((outdir / "manifest.json").read_text())
    assert manifest["exit_code"] == 3
    assert manifest["verdicts"] == {"theorem": "violation"}
    report = json.loads((outdir / "report.json").read_text())
    assert "entropy bound violated" in report["details"]["violation"]


def test_inconclusive_statistics_warn_but_exit_zero(tmp_path, monkeypatch, capsys):
    def wobbly(params, seed, workers, outdir):
        return {
            "verdicts": {"decay": "warn"},
            "warnings": ["decay trend not established at this sampling budget"],
            "details": {},
            "outputs": [],
        }

    monkeypatch.setitem(cli.KIND_RUNNERS, "commutator-curve", wobbly)
    cfg = write_config(tmp_path, {"kind": "commutator-curve"})
    outdir = tmp_path / "out"
    assert cli.main(["run", cfg, "--output", str(outdir)]) == 0
    assert "warning: decay trend" in capsys.readouterr().out
    manifest = json.loads((outdir / "manifest.json").read_text())
    assert manifest["has_warnings"]
    assert manifest["exit_code"] == 0
