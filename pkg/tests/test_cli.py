import json
import math
import os

import pytest

from seaspring.cli import (
    ConfigError, RunConfig, config_hash, load_config, main,
    EXIT_OK, EXIT_INFEASIBLE, EXIT_INPUT,
)


class TestConfig:
    def test_defaults(self):
        cfg = load_config()
        assert cfg == RunConfig()
        assert cfg.q0 == pytest.approx(math.pi / 2)

    def test_file_parsing(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("# comment\nn = 129\ncost = joule\ntau_max = none\n")
        cfg = load_config(str(path))
        assert cfg.n == 129
        assert cfg.cost == "joule"
        assert cfg.tau_max == 0.0          # "none" disables the limit
        assert cfg.resolved_motor().tau_max is None

    def test_overrides_win_over_file(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("n = 129\n")
        cfg = load_config(str(path), overrides=["n=65"])
        assert cfg.n == 65

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            load_config(overrides=["frobnicate=1"])

    def test_malformed_line_rejected(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("just some words\n")
        with pytest.raises(ConfigError):
            load_config(str(path))

    def test_bad_value_rejected(self):
        with pytest.raises(ConfigError):
            load_config(overrides=["n=many"])

    def test_missing_file_rejected(self):
        with pytest.raises(ConfigError):
            load_config("/nonexistent/run.cfg")

    def test_unknown_motor_rejected(self):
        cfg = load_config(overrides=["motor=acme9000"])
        with pytest.raises(ConfigError):
            cfg.resolved_motor()

    def test_hash_ignores_execution_details(self):
        a = RunConfig(output_dir="a", workers=0)
        b = RunConfig(output_dir="b", workers=4)
        assert config_hash(a) == config_hash(b)
        assert config_hash(a) != config_hash(RunConfig(n=65))


class TestCommands:
    def test_bad_flag_value_exits_4(self, tmp_path):
        rc = main(["design", "--output-dir", str(tmp_path), "--n", "bogus"])
        assert rc == EXIT_INPUT

    def test_generate_cubic(self, tmp_path):
        rc = main(["generate-cubic", "--output-dir", str(tmp_path),
                   "--n", "65"])
        assert rc == EXIT_OK
        rows = (tmp_path / "trajectory.csv").read_text().strip().splitlines()
        assert len(rows) == 67            # comment + header + n samples
        meta = json.loads((tmp_path / "period.json").read_text())
        assert meta["period"] == pytest.approx(0.2639321815937606, rel=1e-6)
        assert "config_hash" in meta

    def test_generate_cubic_zero_amplitude_exits_4(self, tmp_path):
        rc = main(["generate-cubic", "--output-dir", str(tmp_path),
                   "--q0", "0"])
        assert rc == EXIT_INPUT

    def test_design_success(self, tmp_path):
        rc = main(["design", "--output-dir", str(tmp_path),
                   "--n", "129", "--cost", "viscous",
                   "--tau-max", "0", "--dq-max", "0"])
        assert rc == EXIT_OK
        report = json.loads((tmp_path / "solution.json").read_text())
        assert report["status"] == "optimal"
        assert "config_hash" in report
        assert (tmp_path / "profile.csv").exists()
        assert (tmp_path / "qm_trace.csv").exists()

    def test_design_infeasible_exits_2(self, tmp_path):
        rc = main(["design", "--output-dir", str(tmp_path),
                   "--task", "gait", "--n", "129", "--delta-max", "0.05"])
        assert rc == EXIT_INFEASIBLE

    def test_sweep(self, tmp_path):
        rc = main(["sweep", "--output-dir", str(tmp_path),
                   "--n", "65", "--points", "3", "--cost", "viscous"])
        assert rc == EXIT_OK
        rows = (tmp_path / "curve.csv").read_text().strip().splitlines()
        assert len(rows) == 4             # header + one row per grid point
        assert "status" in rows[0]
        report = json.loads((tmp_path / "report.json").read_text())
        assert len(report["points"]) == 3
        assert report["n_solved"] == 3

    def test_baseline(self, tmp_path):
        rc = main(["baseline", "--output-dir", str(tmp_path), "--n", "65"])
        assert rc == EXIT_OK
        report = json.loads((tmp_path / "baseline.json").read_text())
        assert report["rigid"]["kind"] == "rigid"
        assert report["linear"]["stiffness"] > 0
        assert report["rigid"]["energy"]["joule"] == pytest.approx(
            report["rigid_joule_quadrature"], rel=1e-6)

    def test_validate(self, tmp_path):
        rc = main(["validate", "--output-dir", str(tmp_path),
                   "--instances", "4"])
        assert rc == EXIT_OK
        report = json.loads((tmp_path / "validation.json").read_text())
        assert report["passed"] is True
        assert set(report["checks"]) == {"planted", "gradient",
                                         "operator_order"}

    def test_design_byte_determinism(self, tmp_path):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            rc = main(["design", "--output-dir", str(out),
                       "--n", "65", "--cost", "viscous",
                       "--tau-max", "0", "--dq-max", "0"])
            assert rc == EXIT_OK
            outs.append({f: (out / f).read_bytes()
                         for f in sorted(os.listdir(out))})
        assert outs[0] == outs[1]
