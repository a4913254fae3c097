"""Tests for the CLI, config handling and the Monte Carlo harness."""

import dataclasses
import json
import math

import numpy as np
import pytest
import yaml

import rcmkf
from rcmkf.cli import main
from rcmkf.config import (
    ConfigError,
    ExperimentConfig,
    build_scenario,
    config_from_dict,
    config_to_dict,
    default_golden_grid,
    default_sigma_grid,
    dump_config,
)
from rcmkf.filtering import FilterVariant
from rcmkf.montecarlo import run_ensemble


def small_scenario(runs=4, steps=30):
    return dataclasses.replace(rcmkf.generate_case(1), runs=runs, steps=steps)


def test_run_ensemble_deterministic_and_parallel_invariant():
    sc = small_scenario()
    variants = (FilterVariant.RCMKF_U, FilterVariant.RCMKF_D)
    a = run_ensemble(sc, variants, jobs=1, seed=7)
    b = run_ensemble(sc, variants, jobs=1, seed=7)
    c = run_ensemble(sc, variants, jobs=2, seed=7)
    for x, y in ((a, b), (a, c)):
        for rx, ry in zip(x, y):
            assert rx.run_index == ry.run_index
            np.testing.assert_array_equal(rx.truth, ry.truth)
            for name in rx.estimates:
                np.testing.assert_array_equal(rx.estimates[name], ry.estimates[name])


def test_run_ensemble_pairs_variants_on_same_measurements():
    sc = small_scenario(runs=2)
    recs = run_ensemble(sc, (FilterVariant.RCMKF_U, FilterVariant.RCMKF_D), seed=3)
    for rec in recs:
        assert set(rec.estimates) == {"RCMKF_U", "RCMKF_D"}
        assert rec.estimates["RCMKF_U"].shape == (sc.steps - 2, 4)


def test_config_roundtrip_identity():
    cfg = ExperimentConfig(
        seed=5,
        case=2,
        runs=37,
        variants=("rcmkf_u",),
    )
    again = config_from_dict(yaml.safe_load(dump_config(cfg)))
    assert again == cfg
    # and a config with an inline scenario
    data = {
        "seed": 9,
        "case": None,
        "scenario": {
            "steps": 50,
            "runs": 10,
            "initial_position_m": [1000.0, 2000.0],
            "initial_velocity_mps": [10.0, -5.0],
            "maneuvers": [{"start_step": 5, "accel_mps2": [1.0, 1.0]}],
            "noise": {"sigma_r_m": 100.0, "sigma_theta_deg": 1.0, "sigma_rdot_mps": 2.0, "rho": 0.1},
        },
    }
    cfg2 = config_from_dict(data)
    assert config_from_dict(config_to_dict(cfg2)) == cfg2
    sc = build_scenario(cfg2)
    assert sc.steps == 50 and sc.runs == 10 and sc.seed == 9
    assert sc.noise.sigma_theta == pytest.approx(math.radians(1.0))


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        config_from_dict({"sneed": 1})


def test_config_rejects_bad_values():
    with pytest.raises(ConfigError):
        config_from_dict({"variants": []})
    with pytest.raises(ConfigError):
        config_from_dict({"case": 5})
    with pytest.raises(ConfigError):
        config_from_dict({"runs": 0})


def test_default_sigma_grid():
    np.testing.assert_allclose(default_sigma_grid(5.0), [0.5, 1, 2, 3, 4, 5])
    np.testing.assert_allclose(default_sigma_grid(0.6), [0.5])
    assert default_sigma_grid(0.4).size == 0
    assert default_sigma_grid(30.0).size == 31


def test_default_golden_grid_covers_spec_axes():
    grid = default_golden_grid()
    assert len(grid) == 36
    assert {p.r_m for p in grid} == {1000.0, 10000.0, 100000.0}
    assert {p.sigma_theta_deg for p in grid} == {1.0, 5.0, 15.0, 30.0}
    assert {p.rho for p in grid} == {0.0, 0.3, 0.9}


def test_cli_simulate_outputs(tmp_path):
    out = tmp_path / "res"
    code = main(
        ["simulate", "--case", "1", "--runs", "3", "--seed", "11", "--out", str(out)]
    )
    assert code == 0
    csv = (out / "rmse_case1.csv").read_text()
    lines = csv.splitlines()
    assert lines[0] == "step,rmse_pos_rcmkfu,rmse_pos_rcmkfd"
    assert len(lines) == 1 + 98  # 100 steps minus two initialization scans
    assert not csv.endswith("\r\n") and "\r" not in csv
    manifest = json.loads((out / "manifest_case1.json").read_text())
    assert manifest["seed"] == 11
    assert manifest["version"].startswith("rcmkf-")
    nees_lines = (out / "nees_case1.csv").read_text().splitlines()
    assert nees_lines[0] == "step,nees_rcmkfu,nees_rcmkfd,lower_bound,upper_bound"


def test_cli_simulate_deterministic_replay(tmp_path):
    args = ["simulate", "--case", "2", "--runs", "2", "--seed", "5"]
    main(args + ["--out", str(tmp_path / "a")])
    main(args + ["--out", str(tmp_path / "b")])
    for name in ("rmse_case2.csv", "nees_case2.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    # the manifest echoes the config (including the out dir), so byte equality
    # only holds when rerun with the identical config
    first = (tmp_path / "a" / "manifest_case2.json").read_bytes()
    main(args + ["--out", str(tmp_path / "a")])
    assert (tmp_path / "a" / "manifest_case2.json").read_bytes() == first


def test_cli_simulate_jobs_equivalent(tmp_path):
    base = ["simulate", "--case", "1", "--runs", "4", "--seed", "3"]
    main(base + ["--out", str(tmp_path / "s")])
    main(base + ["--jobs", "2", "--out", str(tmp_path / "p")])
    assert (tmp_path / "s" / "rmse_case1.csv").read_bytes() == (
        tmp_path / "p" / "rmse_case1.csv"
    ).read_bytes()


def test_cli_unknown_case_exits_2(tmp_path, capsys):
    code = main(["simulate", "--case", "3", "--out", str(tmp_path)])
    assert code == 2
    assert "unknown case" in capsys.readouterr().err


def test_cli_consistency_output(tmp_path):
    out = tmp_path / "c"
    code = main(["consistency", "--sigma-theta-max", "3", "--seed", "42", "--out", str(out)])
    assert code == 0
    lines = (out / "consistency.csv").read_text().splitlines()
    assert lines[0] == "sigma_theta_deg,nes_measurement_conditioned,nes_nested,lower_bound,upper_bound"
    assert len(lines) == 1 + 4  # grid 0.5, 1, 2, 3
    row = lines[1].split(",")
    assert float(row[3]) == pytest.approx(2.76, abs=0.01)
    assert float(row[4]) == pytest.approx(3.24, abs=0.01)


def test_cli_consistency_replay(tmp_path):
    args = ["consistency", "--sigma-theta-max", "2", "--seed", "9"]
    main(args + ["--out", str(tmp_path / "a")])
    main(args + ["--out", str(tmp_path / "b")])
    assert (tmp_path / "a" / "consistency.csv").read_bytes() == (
        tmp_path / "b" / "consistency.csv"
    ).read_bytes()


def test_cli_consistency_empty_grid_exits_2(tmp_path, capsys):
    code = main(["consistency", "--sigma-theta-max", "0.4", "--out", str(tmp_path)])
    assert code == 2
    assert "grid" in capsys.readouterr().err


def test_cli_golden_runs_and_replays(tmp_path):
    cfg = {
        "golden": {
            "samples": 20000,
            "points": [
                {
                    "r_m": 10000.0,
                    "theta_deg": 45.0,
                    "phi_deg": 10.0,
                    "rdot_mps": 100.0,
                    "sigma_r_m": 100.0,
                    "sigma_theta_deg": 5.0,
                    "sigma_phi_deg": 5.0,
                    "sigma_rdot_mps": 5.0,
                    "rho": 0.3,
                },
            ],
        }
    }
    cfg_path = tmp_path / "exp.yaml"
    cfg_path.write_text(yaml.safe_dump(cfg))
    args = ["golden", "--config", str(cfg_path), "--seed", "2"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "golden_moments.csv").read_text()
    assert a == (tmp_path / "b" / "golden_moments.csv").read_text()
    lines = a.splitlines()
    assert len(lines) == 2
    header = lines[0].split(",")
    row = lines[1].split(",")
    assert "mu_e" in header and "se_r_ee" in header
    values = dict(zip(header, row))
    assert float(values["samples"]) == 20000
    assert np.isfinite(float(values["se_mu_x"])) and float(values["se_mu_x"]) > 0


def test_cli_golden_zero_noise_point(tmp_path):
    cfg = {
        "golden": {
            "samples": 20000,
            "points": [
                {
                    "r_m": 5000.0, "theta_deg": 0.0, "phi_deg": 0.0, "rdot_mps": 50.0,
                    "sigma_r_m": 0.0, "sigma_theta_deg": 0.0, "sigma_phi_deg": 0.0,
                    "sigma_rdot_mps": 0.0, "rho": 0.0,
                },
            ],
        }
    }
    cfg_path = tmp_path / "exp.yaml"
    cfg_path.write_text(yaml.safe_dump(cfg))
    assert main(["golden", "--config", str(cfg_path), "--out", str(tmp_path / "o")]) == 0
    lines = (tmp_path / "o" / "golden_moments.csv").read_text().splitlines()
    vals = [float(v) for v in lines[1].split(",")[10:]]
    assert all(v == 0.0 for v in vals)


def test_cli_rejects_bad_golden_samples(tmp_path, capsys):
    code = main(["golden", "--samples", "100", "--out", str(tmp_path)])
    assert code == 2


def test_cli_17_digit_roundtrip(tmp_path):
    out = tmp_path / "r"
    main(["simulate", "--case", "1", "--runs", "2", "--seed", "1", "--out", str(out)])
    lines = (out / "rmse_case1.csv").read_text().splitlines()[1:]
    for line in lines[:5]:
        for tok in line.split(",")[1:]:
            assert float(tok) == float(repr(float(tok)))
