"""Configuration loading and the command-line surface."""

import io
import math
import os

import pytest

from gaptooth.cli import main, simulate_comparison
from gaptooth.config import ConfigError, load_config


def run_cli(argv):
    out = io.StringIO()
    status = main(argv, out=out)
    return status, out.getvalue()


def write_config(tmp_path, text, name="run.toml"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


class TestConfig:
    def test_profile_values(self, tmp_path):
        path = write_config(
            tmp_path,
            """
            [profile]
            values = [1.0, 2.0]
            h = 0.5
            """,
        )
        cfg = load_config(path)
        assert cfg.profile.values == (1.0, 2.0)
        assert cfg.h == 0.5

    def test_profile_variation_form(self, tmp_path):
        path = write_config(
            tmp_path,
            """
            [profile]
            kappa0 = 2.0
            eta = [0.1, -0.1]
            """,
        )
        cfg = load_config(path)
        assert cfg.variation.base == 2.0
        assert cfg.profile.values == pytest.approx((2.2, 1.8))

    def test_invalid_values_name_the_key(self, tmp_path):
        path = write_config(
            tmp_path,
            """
            [profile]
            values = [1.0, -2.0]
            """,
        )
        with pytest.raises(ConfigError, match="profile.values"):
            load_config(path)

    def test_geometry_validation_named(self, tmp_path):
        path = write_config(
            tmp_path,
            """
            [geometry]
            n = 3
            b = 5
            """,
        )
        with pytest.raises(ConfigError, match="geometry"):
            load_config(path)

    def test_overrides_win(self, tmp_path):
        path = write_config(
            tmp_path,
            """
            [profile]
            values = [1.0, 2.0]
            [coupling]
            gamma = 1.0
            """,
        )
        cfg = load_config(path, {"coupling.gamma": 0.0})
        assert cfg.coupling.gamma == 0.0

    def test_outdir_env_override(self, tmp_path, monkeypatch):
        monkeypatch.setenv("GAPTOOTH_OUTDIR", str(tmp_path / "elsewhere"))
        cfg = load_config(None)
        assert cfg.output_dir == str(tmp_path / "elsewhere")

    def test_hash_stable(self, tmp_path):
        path = write_config(
            tmp_path,
            """
            [profile]
            values = [1.0, 2.0]
            """,
        )
        assert load_config(path).config_hash() == load_config(path).config_hash()


class TestCoeffs:
    def test_uniform_k4_table(self, tmp_path):
        path = write_config(
            tmp_path,
            """
            [profile]
            values = [1.0, 1.0, 1.0, 1.0]
            [experiment]
            phases = [0.39269908169872414]
            """,
        )
        status, text = run_cli(["coeffs", "-c", path])
        assert status == 0
        assert "c_1 = 16.0" in text
        assert "c_2 = 20.0" in text
        assert "kappa_g  = 1.0" in text
        assert "kappa_h  = 1.0" in text

    def test_k2_means_and_table(self, tmp_path):
        path = write_config(
            tmp_path,
            """
            [profile]
            values = [1.0, 2.0]
            """,
        )
        status, text = run_cli(["coeffs", "-c", path])
        assert status == 0
        assert repr(math.sqrt(2.0)) in text  # geometric mean
        assert repr(4.0 / 3.0) in text  # harmonic mean
        assert "d = 0.5  d0 = 0.25" in text

    def test_missing_profile_is_config_error(self, tmp_path):
        status, _ = run_cli(["coeffs", "-c", write_config(tmp_path, "")])
        assert status == 2


class TestEigen:
    def test_uniform_residuals_small(self, tmp_path):
        outdir = str(tmp_path / "out")
        path = write_config(
            tmp_path,
            f"""
            [profile]
            values = [1.0, 1.0]
            [geometry]
            n = 4
            b = 2
            [experiment]
            theta0 = 0.19634954084936207
            [output]
            dir = '{outdir}'
            """,
        )
        status, text = run_cli(["eigen", "-c", path])
        assert status == 0
        csv_path = os.path.join(outdir, "eigen.csv")
        rows = [
            line.split(",")
            for line in open(csv_path)
            if not line.startswith(("#", "theta"))
        ]
        assert len(rows) == 4
        for theta, lam_patch, lam_ref, residual in rows:
            assert abs(float(residual)) < 1e-8

    def test_zero_theta_row(self, tmp_path):
        outdir = str(tmp_path / "out")
        path = write_config(
            tmp_path,
            f"""
            [profile]
            values = [1.0, 3.0]
            [geometry]
            n = 4
            b = 2
            [experiment]
            thetas = [0.0, 0.19634954084936207]
            [output]
            dir = '{outdir}'
            """,
        )
        status, _ = run_cli(["eigen", "-c", path])
        assert status == 0
        lines = open(os.path.join(outdir, "eigen.csv")).read().splitlines()
        first = lines[2].split(",")
        assert [float(x) for x in first] == [0.0, 0.0, 0.0, 0.0]

    def test_deterministic_bytes(self, tmp_path):
        outdir = str(tmp_path / "out")
        path = write_config(
            tmp_path,
            f"""
            [profile]
            values = [1.0, 2.0]
            [geometry]
            n = 3
            b = 1
            [output]
            dir = '{outdir}'
            """,
        )
        run_cli(["eigen", "-c", path])
        first = open(os.path.join(outdir, "eigen.csv"), "rb").read()
        run_cli(["eigen", "-c", path])
        second = open(os.path.join(outdir, "eigen.csv"), "rb").read()
        assert first == second


class TestSimulate:
    def test_constant_ic_zero_divergence(self, tmp_path):
        outdir = str(tmp_path / "out")
        path = write_config(
            tmp_path,
            f"""
            [profile]
            values = [1.0, 2.0]
            [geometry]
            n = 4
            b = 2
            N = 10
            [experiment]
            ic = 'constant'
            ic_value = 3.0
            patches = 8
            duration = 4.0
            macro_step = 1.0
            [output]
            dir = '{outdir}'
            """,
        )
        status, text = run_cli(["simulate", "-c", path])
        assert status == 0
        _, _, _, divergences = simulate_comparison(load_config(path))
        assert max(divergences) < 1e-12
        for name in ("trajectory_patch.csv", "trajectory_oracle.csv", "divergence.csv"):
            assert os.path.exists(os.path.join(outdir, name))

    def test_gamma_zero_diverges(self, tmp_path):
        path = write_config(
            tmp_path,
            """
            [profile]
            values = [1.0, 1.0]
            [geometry]
            n = 6
            b = 3
            N = 16
            [coupling]
            gamma = 0.0
            [experiment]
            patches = 8
            duration = 256.0
            macro_step = 2.0
            """,
        )
        *_, divergences = simulate_comparison(load_config(path))
        assert divergences[-1] > 0.5  # grows to order one

    def test_provenance_header(self, tmp_path):
        outdir = str(tmp_path / "out")
        path = write_config(
            tmp_path,
            f"""
            [profile]
            values = [1.0, 1.0]
            [geometry]
            n = 3
            b = 1
            N = 8
            [experiment]
            patches = 8
            duration = 2.0
            macro_step = 1.0
            [output]
            dir = '{outdir}'
            """,
        )
        run_cli(["simulate", "-c", path])
        head = open(os.path.join(outdir, "divergence.csv")).readline()
        assert head.startswith("# provenance: config=")


class TestSweepAndReport:
    def test_sweep_and_report_outputs(self, tmp_path):
        outdir = str(tmp_path / "out")
        path = write_config(
            tmp_path,
            f"""
            [experiment]
            K_min = 2
            K_max = 3
            n_min = 4
            n_max = 4
            modes = ['fig3']
            [output]
            dir = '{outdir}'
            """,
        )
        status, text = run_cli(["sweep", "-c", path, "--workers", "1"])
        assert status == 0
        for name in ("sweep.csv", "figure_fig3.csv", "plot_fig3.py"):
            assert os.path.exists(os.path.join(outdir, name))
        status, text = run_cli(["report", "-c", path, "--workers", "1"])
        assert status == 0
        assert os.path.exists(os.path.join(outdir, "figure_fig3.png"))
        assert os.path.getsize(os.path.join(outdir, "figure_fig3.png")) > 0


class TestSelftest:
    def test_clean_run_passes(self):
        status, text = run_cli(["selftest"])
        assert status == 0
        assert "FAIL" not in text

    def test_mutation_mode_fails_loudly(self):
        status, text = run_cli(["selftest", "--mutate", "c0-sign"])
        assert status == 1
        assert "characteristic-coefficient oracle" in text
        assert "FAIL" in text

    def test_deterministic_report(self):
        _, first = run_cli(["selftest"])
        _, second = run_cli(["selftest"])
        assert first == second
