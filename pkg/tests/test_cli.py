"""Config parsing, emission round-trips, experiment runner, and exit codes."""

import struct
import subprocess
import sys

import numpy as np
import pytest

from adjopt.cli import main, run_experiment
from adjopt.config import (
    ConfigError,
    EXPERIMENT_KINDS,
    emit_builtin_config,
    load_config,
    parse_config_text,
    validate_config,
)


def write_conf(tmp_path, text, name="exp.conf"):
    path = tmp_path / name
    path.write_text(text)
    return path


TINY_HEAT = """
experiment.kind = opt-heat-1B
heat.nx = 32
heat.nt = 48
heat.E0 = auto
descent.max_iters = 6
"""

TINY_LES = """
experiment.kind = solve-les
les.n_dns = 32
les.n_les = 16
les.k_c = 4
les.T = 0.02
les.dt = 0.002
les.n_sigma = 32
les.w0_enstrophy = 30.0
les.spin_time = 0.0
les.leith_constant = 0.005
output.snapshots = true
"""


class TestParsing:
    def test_comments_and_blanks(self):
        raw = parse_config_text("# hi\n\na.b = 1  # trailing\n")
        assert raw == {"a.b": "1"}

    def test_missing_equals(self):
        with pytest.raises(ConfigError, match="line 1"):
            parse_config_text("not a setting\n")

    def test_duplicate_key(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config_text("a.b = 1\na.b = 2\n")

    def test_unknown_kind(self):
        with pytest.raises(ConfigError, match="experiment.kind"):
            validate_config({"experiment.kind": "nonsense"})

    def test_unknown_field_named(self):
        with pytest.raises(ConfigError, match="heat.bogus"):
            validate_config({"experiment.kind": "opt-heat-1A", "heat.bogus": "3"})

    def test_bad_type_named(self):
        with pytest.raises(ConfigError, match="heat.nx"):
            validate_config({"experiment.kind": "opt-heat-1A", "heat.nx": "many"})

    def test_missing_required_e0(self):
        raw = parse_config_text(emit_builtin_config("opt-heat-1B"))
        del raw["heat.E0"]
        with pytest.raises(ConfigError, match="heat.E0"):
            validate_config(raw)


class TestEmission:
    @pytest.mark.parametrize("kind", EXPERIMENT_KINDS)
    def test_round_trip(self, kind):
        cfg = validate_config(parse_config_text(emit_builtin_config(kind)))
        assert cfg.kind == kind

    def test_heat_defaults_present(self):
        text = emit_builtin_config("opt-heat-2B")
        assert "heat.u0_amplitude = 10.0" in text
        assert "heat.target_flux_coef_linear = 18.0" in text
        assert "heat.target_flux_coef_osc = 1000.0" in text
        assert "heat.ell1 = 0.01" in text

    def test_les_defaults_present(self):
        text = emit_builtin_config("opt-les-3B")
        assert "les.nu_n = 0.0004" in text
        assert "les.alpha = 0.005" in text
        assert "les.ell1 = 1000.0" in text
        assert "les.ell2 = 100.0" in text


class TestRunHeat:
    def test_constrained_run_artifacts(self, tmp_path):
        path = write_conf(tmp_path, TINY_HEAT)
        rc = main(["run", str(path), "--out", str(tmp_path / "out")])
        assert rc == 0
        out = tmp_path / "out"
        for name in ("trace.csv", "control_initial.csv", "control_final.csv", "summary"):
            assert (out / name).exists()
        data = np.genfromtxt(out / "trace.csv", delimiter=",", names=True)
        np.testing.assert_allclose(data["constraint_norm"], 1.0, atol=1e-10)
        assert np.all(np.diff(data["J"]) <= 0)

    def test_trace_full_precision(self, tmp_path):
        path = write_conf(tmp_path, TINY_HEAT)
        main(["run", str(path), "--out", str(tmp_path / "out")])
        line = (tmp_path / "out" / "trace.csv").read_text().splitlines()[1]
        mantissa = line.split(",")[1].split("e")[0].replace("-", "").replace(".", "")
        assert len(mantissa) >= 16  # 17 significant digits requested

    def test_reproducible_byte_identical(self, tmp_path):
        path = write_conf(tmp_path, TINY_HEAT)
        main(["run", str(path), "--out", str(tmp_path / "a")])
        main(["run", str(path), "--out", str(tmp_path / "b")])
        for name in ("trace.csv", "control_final.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


class TestRunKappaHeat:
    def test_ladder_files(self, tmp_path):
        conf = """
experiment.kind = kappa-heat
kappa.resolutions = 32:48,32:96
kappa.eps_count = 6
kappa.eps_min = 1e-6
kappa.quantities = objective
"""
        path = write_conf(tmp_path, conf)
        rc = main(["run", str(path), "--out", str(tmp_path / "out")])
        assert rc == 0
        for name in ("kappa_objective_nx32_nt48.csv", "kappa_objective_nx32_nt96.csv"):
            f = tmp_path / "out" / name
            assert f.exists()
            assert f.read_text().splitlines()[0] == "epsilon,kappa,abs_one_minus_kappa"


class TestRunLes:
    def test_solve_les_snapshots(self, tmp_path):
        path = write_conf(tmp_path, TINY_LES)
        rc = main(["run", str(path), "--out", str(tmp_path / "out")])
        assert rc == 0
        snap = tmp_path / "out" / "snapshots.bin"
        assert snap.exists()
        raw = snap.read_bytes()
        n, t0 = struct.unpack("<Id", raw[:12])
        assert n == 16 and t0 == 0.0
        rec = 12 + 8 * n * n
        assert len(raw) % rec == 0 and len(raw) // rec == 11
        assert (tmp_path / "out" / "diag_les.csv").exists()

    def test_solve_dns_diagnostics(self, tmp_path):
        conf = TINY_LES.replace("solve-les", "solve-dns").replace(
            "output.snapshots = true", "output.snapshots = false").replace(
            "les.leith_constant = 0.005\n", "les.leith_constant = 0.005\n")
        path = write_conf(tmp_path, conf)
        rc = main(["run", str(path), "--out", str(tmp_path / "out")])
        assert rc == 0
        for name in ("diag_dns.csv", "diag_dns_filtered.csv", "summary"):
            assert (tmp_path / "out" / name).exists()
        data = np.genfromtxt(tmp_path / "out" / "diag_dns.csv", delimiter=",", names=True)
        assert data["enstrophy"].shape == (11,)


class TestExitCodes:
    def test_missing_file(self, capsys):
        assert main(["run", "/nonexistent/exp.conf"]) == 1
        assert "not found" in capsys.readouterr().err

    def test_validation_failure_names_field(self, tmp_path, capsys):
        raw = parse_config_text(emit_builtin_config("opt-heat-1B"))
        del raw["heat.E0"]
        text = "\n".join(f"{k} = {v}" for k, v in raw.items())
        path = write_conf(tmp_path, text)
        assert main(["validate", str(path)]) == 1
        assert "heat.E0" in capsys.readouterr().err

    def test_solver_failure_exit_2(self, tmp_path, capsys):
        # an unreachable constraint level makes the tuning abort
        conf = TINY_LES.replace("les.leith_constant = 0.005", "les.leith_constant = auto")
        conf = conf.replace("solve-les", "solve-les")
        path = write_conf(tmp_path, conf)
        rc = main(["run", str(path), "--out", str(tmp_path / "out")])
        assert rc == 2
        assert "error while running" in capsys.readouterr().err

    def test_validate_success(self, tmp_path):
        path = write_conf(tmp_path, TINY_HEAT)
        assert main(["validate", str(path)]) == 0

    def test_console_entry_point(self, tmp_path):
        out = subprocess.run([sys.executable, "-m", "adjopt.cli", "emit-config",
                              "opt-heat-1A"], capture_output=True, text=True)
        assert out.returncode == 0
        assert "experiment.kind = opt-heat-1A" in out.stdout
