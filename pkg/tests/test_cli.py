import csv
from pathlib import Path

import numpy as np
import pytest
import yaml
from hypothesis import given, settings
from hypothesis import strategies as st

from mlqswitch.cli import dump_config, main, parse_config, run
from mlqswitch.exceptions import ConfigError
from mlqswitch.model import validate_spec

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def write(tmp_path, text, name="c.yaml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


class TestParse:
    def test_scalar_defaults(self):
        cfg = parse_config("problem: {kind: scalar, T: 2.0}")
        assert cfg.problem["R1"] == cfg.problem["R2"] == cfg.problem["K"] == 1.0
        assert cfg.problem["A1"] == 0.0
        assert cfg.x1 == (1.0,) and cfg.switch_time is None
        assert cfg.numerics.n_steps == 2000 and cfg.numerics.coarse_points == 65
        assert cfg.numerics.tol_r == pytest.approx(2e-6)
        assert cfg.simulation.n_paths == 100_000 and cfg.simulation.seed == 0

    def test_example43_defaults(self):
        cfg = parse_config("problem: {kind: example43, T: 1}")
        assert (cfg.problem["a"], cfg.problem["g"], cfg.problem["g1"]) == (0.0, 1.0, 1.0)
        assert cfg.x1 == (1.0, 0.0)

    def test_general_defaults(self):
        cfg = parse_config("problem: {kind: general, T: 1, n1: 2, n2: 1, m: 1}")
        spec = cfg.build_spec()
        np.testing.assert_array_equal(spec.at("K", 0.0), np.eye(3, 2))
        np.testing.assert_array_equal(spec.at("R", 0.0), [[1.0]])
        assert spec.delta == 1e-8

    def test_indefinite_weight_parses_then_fails_validation(self):
        cfg = parse_config("problem: {kind: general, T: 1, n1: 1, n2: 1, m: 1, R: [[-1]]}")
        report = validate_spec(cfg.build_spec())
        assert not report.ok and any(v.field == "R" for v in report.violations)

    def test_shape_error_names_key(self):
        text = "problem:\n  kind: general\n  T: 1\n  n1: 1\n  n2: 1\n  m: 1\n  B: [[1, 2, 3], [4, 5, 6]]\n"
        with pytest.raises(ConfigError) as info:
            parse_config(text)
        assert info.value.key == "problem.B"
        assert info.value.line == 7

    @pytest.mark.parametrize("text, key", [
        ("problem: {kind: scalar, T: 1, A3: 1}", "problem.A3"),
        ("problem: {kind: scalar, T: 1}\nextra: 1", "extra"),
        ("problem: {kind: scalar, T: 1}\nsimulation: {paths: 3}", "simulation.paths"),
    ])
    def test_unknown_keys(self, text, key):
        with pytest.raises(ConfigError) as info:
            parse_config(text)
        assert info.value.key == key

    @pytest.mark.parametrize("text", [
        "problem: {kind: scalar}",
        "problem: {kind: general, T: 1, n1: 1, m: 1}",
        "problem: {kind: scalar, T: -1}",
        "problem: {kind: cubic, T: 1}",
        "problem: {kind: scalar, T: 1}\nswitch_time: 3",
        "problem: {kind: scalar, T: 1}\nx1: [1, 2]",
        "problem: {kind: scalar, T: 1}\nsimulation: {antithetic: true, n_paths: 3}",
    ])
    def test_invalid(self, text):
        with pytest.raises(ConfigError):
            parse_config(text)

    def test_syntax_error_has_line(self):
        with pytest.raises(ConfigError) as info:
            parse_config("problem:\n  kind: scalar\n  T: [1\n")
        assert info.value.line is not None

    def test_time_tables(self):
        text = ("problem:\n  kind: stopped\n  T: 1\n  n1: 1\n  n2: 1\n  m: 1\n  table_steps: 2\n"
                "  Q1: [[[0]], [[1]], [[2]]]\n")
        spec = parse_config(text).build_spec()
        assert spec.at("Q1", 0.25)[0, 0] == pytest.approx(0.5)

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(-5, 5, allow_subnormal=False), min_size=15, max_size=15),
           st.floats(0.1, 10), st.integers(0, 2 ** 64 - 1), st.booleans())
    def test_round_trip(self, coeffs, T, seed, antithetic):
        keys = ("A1", "B1", "C1", "D1", "Q1", "R1", "G1",
                "A2", "B2", "C2", "D2", "Q2", "R2", "G2", "K")
        problem = {"kind": "scalar", "T": T, **dict(zip(keys, coeffs))}
        text = yaml.safe_dump({"problem": problem,
                               "simulation": {"seed": seed, "antithetic": antithetic,
                                              "n_paths": 10}})
        cfg = parse_config(text)
        assert parse_config(dump_config(cfg)) == cfg

    def test_shipped_configs_parse(self):
        for path in sorted(CONFIGS.glob("*.yaml")):
            cfg = parse_config(path.read_text())
            assert validate_spec(cfg.build_spec()).ok, path.name


class TestCommands:
    def test_riccati_zero_weights(self, tmp_path):
        cfg = parse_config("problem: {kind: scalar, T: 1, R1: 1, R2: 1}\nswitch_time: 0.5\n"
                           "numerics: {n_steps: 20}")
        assert run(cfg, "riccati", tmp_path) == 0
        rows = list(csv.reader((tmp_path / "p_stage2.csv").open()))
        assert rows[0][:2] == ["t", "P_00"]
        values = np.array(rows[1:], dtype=float)
        assert values.shape[0] == 21 and not np.any(values[:, 1:])
        assert (tmp_path / "p_stage1.csv").exists()

    def test_csv_precision(self, tmp_path):
        cfg = parse_config((CONFIGS / "certificate.yaml").read_text() + "numerics: {n_steps: 50}\n")
        run(cfg, "value-curve", tmp_path)
        rows = list(csv.reader((tmp_path / "value_curve.csv").open()))
        assert rows[0] == ["r", "phi"] and len(rows) == 66
        assert float(rows[10][1]) == float(np.float64(rows[10][1]))
        assert len(rows[10][1].replace(".", "").replace("-", "").lstrip("0").split("e")[0]) >= 15

    def test_optimal_time(self, tmp_path):
        cfg = parse_config((CONFIGS / "certificate.yaml").read_text())
        assert run(cfg, "optimal-time", tmp_path) == 0
        kv = dict(line.split(" = ") for line in (tmp_path / "optimal_time.txt").read_text().splitlines())
        assert kv["classification"] == "Interior"
        assert float(kv["r_bar"]) == pytest.approx(0.9016, abs=1e-3)

    def test_check_nontrivial(self, tmp_path):
        cfg = parse_config((CONFIGS / "certificate.yaml").read_text())
        assert run(cfg, "check-nontrivial", tmp_path) == 0
        text = (tmp_path / "certificate.txt").read_text()
        assert "nontrivial = True" in text

    def test_verify_passes(self, tmp_path):
        assert main(["verify-example43", "--config", str(CONFIGS / "example43.yaml"),
                     "--out", str(tmp_path)]) == 0
        rows = list(csv.reader((tmp_path / "verify_report.txt").open()))
        assert rows[0] == ["check", "value", "tolerance", "status"]
        assert all(r[3] == "PASS" for r in rows[1:])

    def test_coarse_steps_fail_verification(self, tmp_path):
        assert main(["verify-example43", "--config", str(CONFIGS / "example43.yaml"),
                     "--out", str(tmp_path), "--steps", "4"]) == 1
        rows = list(csv.reader((tmp_path / "verify_report.txt").open()))
        assert any(r[3] == "FAIL" for r in rows[1:])

    def test_verify_1d(self, tmp_path):
        assert main(["verify-1d", "--config", str(CONFIGS / "certificate.yaml"),
                     "--out", str(tmp_path)]) == 0

    def test_simulate_overrides(self, tmp_path):
        assert main(["simulate", "--config", str(CONFIGS / "noisy_scalar.yaml"), "--out",
                     str(tmp_path), "--paths", "50", "--steps", "100", "--seed", "3"]) == 0
        kv = dict(line.split(" = ") for line in (tmp_path / "sim_report.txt").read_text().splitlines())
        assert (kv["n_paths"], kv["n_steps"], kv["seed"]) == ("50", "100", "3")
        assert (tmp_path / "sim_paths.csv").exists()

    def test_errors_exit_2(self, tmp_path, capsys):
        bad = write(tmp_path, "problem: {kind: scalar, T: 1, Z: 1}")
        assert main(["riccati", "--config", bad, "--out", str(tmp_path)]) == 2
        assert "problem.Z" in capsys.readouterr().err

    def test_missing_file_exit_2(self, tmp_path):
        assert main(["riccati", "--config", str(tmp_path / "none.yaml")]) == 2
