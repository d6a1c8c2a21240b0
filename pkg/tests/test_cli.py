import json
import math

import numpy as np
import pytest

from qjump.cli import main
from qjump.config import load_config, parse_time
from qjump.errors import ConfigError
from qjump.io import (
    read_histogram,
    read_response,
    write_histogram,
    write_response,
)

BASE_CONFIG = """
[run]
seed = 3

[cascade]
delta_eff = 5.6549e7
omega_eff = 2.3562e7
gamma23 = 4.2e6
gamma30 = 3.7037e7

[monitor]
alpha = 4.7 ps
tau = 7 ns

[synth]
dt0 = 14 ns
n_pairs = 120000
background_rate = 10.0
window_start = 0 ns
window_end = 40 ns
bin_width = 10 ps

[fit]
free = A, Y0, dt0, alpha
tau = 7 ns
oversample = 4

[simulate]
t_min = -20 ns
t_max = 120 ns
step = 100 ps
"""


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(BASE_CONFIG)
    return str(path)


class TestConfigParsing:
    def test_times_require_units(self):
        assert parse_time("14 ns") == pytest.approx(14e-9)
        assert parse_time("10ps") == pytest.approx(10e-12)
        with pytest.raises(ConfigError):
            parse_time("14")
        with pytest.raises(ConfigError):
            parse_time("14 parsecs")

    def test_mixed_units_round_trip(self, tmp_path):
        cfg_ns = tmp_path / "a.cfg"
        cfg_ps = tmp_path / "b.cfg"
        cfg_ns.write_text(BASE_CONFIG)
        cfg_ps.write_text(BASE_CONFIG.replace("dt0 = 14 ns", "dt0 = 14000 ps"))
        a = load_config(cfg_ns).synth_config(seed=1)
        b = load_config(cfg_ps).synth_config(seed=1)
        assert a == b

    def test_cascade_and_pump_both_present_rejected(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text(
            BASE_CONFIG
            + "\n[pump]\nomega01 = 1e7\nomega12 = 1e7\ndelta1 = 1e9\ndelta2 = 0\ngamma23 = 1e6\ngamma30 = 1e7\n"
        )
        with pytest.raises(ConfigError):
            load_config(cfg)

    def test_pump_section_builds_effective_params(self, tmp_path):
        cfg = tmp_path / "p.cfg"
        cfg.write_text(
            "[pump]\n"
            "omega01 = 6.283185307179586e7\n"
            "omega12 = 1.8849555921538757e8\n"
            "delta1 = -2.5132741228718346e8\n"
            "delta2 = 2.5132741228718344e7\n"
            "adiabaticity_factor = 1.0\n"
            "gamma23 = 4.2e6\n"
            "gamma30 = 3.7e7\n"
        )
        p = load_config(cfg).require_cascade()
        assert p.delta_eff == pytest.approx(2 * math.pi * 9e6, rel=1e-9)
        assert p.omega_eff == pytest.approx(2 * math.pi * 3.75e6, rel=1e-9)

    def test_seed_round_trips(self, config_path):
        assert load_config(config_path).seed == 3

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "nope.cfg")


class TestHistogramFiles:
    def test_round_trip(self, tmp_path, response_50ps):
        from conftest import make_synth
        from qjump import sample_events

        h = sample_events(make_synth(n_pairs=10_000, window=(10e-9, 20e-9)), response_50ps)
        path = tmp_path / "h.csv"
        write_histogram(path, h)
        back = read_histogram(path)
        assert np.array_equal(back.counts, h.counts)
        assert back.bin_width == pytest.approx(h.bin_width, rel=1e-9)
        assert back.t_start == pytest.approx(h.t_start, rel=1e-9)

    def test_header_enforced(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("time,counts\n1,2\n2,3\n")
        with pytest.raises(ConfigError):
            read_histogram(path)

    def test_ordering_enforced(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("bin_center_ps,counts\n10,2\n5,3\n")
        with pytest.raises(ConfigError):
            read_histogram(path)

    def test_response_round_trip(self, tmp_path, response_50ps):
        path = tmp_path / "g.csv"
        write_response(path, response_50ps)
        back = read_response(path)
        assert back.weights == pytest.approx(response_50ps.weights, rel=1e-9)
        assert back.offsets == pytest.approx(response_50ps.offsets, rel=1e-9)

    def test_raw_histogram_accepted_as_response(self, tmp_path):
        path = tmp_path / "raw.csv"
        sigma = 50e-12 / 2.3548200450309493
        centers = 10e-12 * np.arange(-30, 31)
        counts = np.round(2e4 * np.exp(-0.5 * (centers / sigma) ** 2)).astype(int)
        rows = "\n".join(f"{c/1e-12:.3f},{n}" for c, n in zip(centers, counts))
        path.write_text("bin_center_ps,counts\n" + rows + "\n")
        g = read_response(path)
        assert g.fwhm() == pytest.approx(50e-12, rel=0.1)


class TestCommands:
    def test_simulate_writes_expected_curves(self, tmp_path, config_path):
        out = tmp_path / "curves.csv"
        assert main(["simulate", "--config", config_path, "-o", str(out)]) == 0
        assert out.exists()
        assert out.with_suffix(".png").exists()
        rows = out.read_text().strip().splitlines()
        assert rows[0] == "dt_ps,pair_correlation,monitor"
        data = np.array([[float(x) for x in r.split(",")] for r in rows[1:]])
        dt = data[:, 0] * 1e-12
        corr = data[:, 1]
        assert np.all(corr[dt < 0] == 0.0)
        rate = 3.7037e7 + 0.5 * 4.2e6
        i = int(np.argmin(np.abs(dt - 1.0 / rate)))
        rho22 = corr[np.searchsorted(dt, 0.0)]
        assert corr[i] == pytest.approx(rho22 * math.exp(-rate * dt[i]), rel=1e-3)

    def test_simulate_numeric_mode(self, tmp_path, config_path):
        out = tmp_path / "curves.csv"
        code = main(
            ["simulate", "--config", config_path, "-o", str(out), "--conditional", "numeric",
             "--no-figure"]
        )
        assert code == 0

    def test_zero_drive_gives_zero_correlation(self, tmp_path):
        cfg = tmp_path / "z.cfg"
        cfg.write_text(BASE_CONFIG.replace("omega_eff = 2.3562e7", "omega_eff = 0.0"))
        out = tmp_path / "curves.csv"
        assert main(["simulate", "--config", str(cfg), "-o", str(out), "--no-figure"]) == 0
        rows = out.read_text().strip().splitlines()[1:]
        corr = np.array([float(r.split(",")[1]) for r in rows])
        assert np.all(corr == 0.0)

    def test_generate_is_byte_deterministic(self, tmp_path, config_path):
        out1 = tmp_path / "d1.csv"
        out2 = tmp_path / "d2.csv"
        assert main(["generate", "gaussian:50ps", "-o", str(out1), "--config", config_path,
                     "--no-figure"]) == 0
        assert main(["generate", "gaussian:50ps", "-o", str(out2), "--config", config_path,
                     "--no-figure"]) == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_generate_seed_override_changes_data(self, tmp_path, config_path):
        out1 = tmp_path / "d1.csv"
        out2 = tmp_path / "d2.csv"
        main(["generate", "gaussian:50ps", "-o", str(out1), "--config", config_path, "--no-figure"])
        main(["generate", "gaussian:50ps", "-o", str(out2), "--config", config_path,
              "--seed", "99", "--no-figure"])
        assert out1.read_bytes() != out2.read_bytes()

    def test_generate_conserves_events_without_background(self, tmp_path, config_path):
        cfg = tmp_path / "nobg.cfg"
        cfg.write_text(
            BASE_CONFIG.replace("background_rate = 10.0", "background_rate = 0.0")
        )
        out = tmp_path / "d.csv"
        assert main(["generate", "gaussian:0ps", "-o", str(out), "--config", str(cfg),
                     "--no-figure"]) == 0
        h = read_histogram(out)
        assert h.total == 120000

    def test_calibrate_normalizes_and_reports_width(self, tmp_path, capsys):
        raw = tmp_path / "raw.csv"
        sigma = 50e-12 / 2.3548200450309493
        centers = 10e-12 * np.arange(-100, 101)
        counts = np.round(5e4 * np.exp(-0.5 * (centers / sigma) ** 2)).astype(int) + 3
        rows = "\n".join(f"{c/1e-12:.3f},{n}" for c, n in zip(centers, counts))
        raw.write_text("bin_center_ps,counts\n" + rows + "\n")
        out = tmp_path / "resp.csv"
        assert main(["calibrate", str(raw), "-o", str(out)]) == 0
        printed = capsys.readouterr().out
        assert "fwhm" in printed
        g = read_response(out)
        assert abs(g.weights.sum() - 1.0) <= 1e-12
        assert g.fwhm() == pytest.approx(50e-12, abs=2 * 10e-12)
        assert out.with_suffix(".png").exists()

    def test_fit_round_trip_recovers_timescale(self, tmp_path, config_path):
        data = tmp_path / "data.csv"
        report = tmp_path / "report.json"
        assert main(["generate", "gaussian:50ps", "-o", str(data), "--config", config_path,
                     "--no-figure"]) == 0
        assert main(["fit", str(data), "gaussian:50ps", "--config", config_path,
                     "-o", str(report)]) == 0
        r = json.loads(report.read_text())
        assert r["converged"]
        assert r["rise_time_ps"] == pytest.approx(2 * math.log(9) * r["estimates"]["alpha"], rel=1e-9)
        assert r["estimates"]["alpha"] == pytest.approx(4.7, abs=4 * r["errors"]["alpha"])
        assert r["estimates"]["dt0"] == pytest.approx(14000.0, abs=5.0)
        residuals = tmp_path / "report_residuals.csv"
        assert residuals.exists()
        assert report.with_suffix(".png").exists()
        header = residuals.read_text().splitlines()[0]
        assert header == "bin_center_ps,observed,fitted,residual"

    def test_calibrate_single_spike_gives_ideal_detector(self, tmp_path, capsys):
        raw = tmp_path / "spike.csv"
        raw.write_text("bin_center_ps,counts\n-10,0\n0,812\n10,0\n")
        out = tmp_path / "resp.csv"
        assert main(["calibrate", str(raw), "-o", str(out), "--no-figure"]) == 0
        g = read_response(out)
        assert g.offsets.tolist() == [0.0]
        assert g.weights.tolist() == [1.0]
        assert "fwhm: 0.00 ps" in capsys.readouterr().out

    def test_fit_oversample_flag(self, tmp_path, config_path):
        data = tmp_path / "data.csv"
        report = tmp_path / "report.json"
        main(["generate", "gaussian:50ps", "-o", str(data), "--config", config_path, "--no-figure"])
        assert main(["fit", str(data), "gaussian:50ps", "--config", config_path,
                     "-o", str(report), "--oversample", "1", "--no-figure"]) == 0
        assert json.loads(report.read_text())["oversample"] == 1

    def test_fit_report_is_byte_deterministic(self, tmp_path, config_path):
        data = tmp_path / "data.csv"
        main(["generate", "gaussian:50ps", "-o", str(data), "--config", config_path, "--no-figure"])
        r1 = tmp_path / "r1.json"
        r2 = tmp_path / "r2.json"
        for r in (r1, r2):
            assert main(["fit", str(data), "gaussian:50ps", "--config", config_path,
                         "-o", str(r), "--no-figure"]) == 0
        assert r1.read_bytes() == r2.read_bytes()

    def test_fit_with_bootstrap_in_report(self, tmp_path):
        cfg = tmp_path / "b.cfg"
        cfg.write_text(
            BASE_CONFIG.replace("n_pairs = 120000", "n_pairs = 40000").replace(
                "oversample = 4", "oversample = 4\nbootstrap_resamples = 100"
            )
        )
        data = tmp_path / "data.csv"
        report = tmp_path / "report.json"
        main(["generate", "gaussian:50ps", "-o", str(data), "--config", str(cfg), "--no-figure"])
        assert main(["fit", str(data), "gaussian:50ps", "--config", str(cfg),
                     "-o", str(report), "--no-figure"]) == 0
        r = json.loads(report.read_text())
        assert "bootstrap_spreads" in r
        assert r["bootstrap_failed"] == 0
        assert r["bootstrap_spreads"]["alpha"] > 0.0

    def test_exit_code_for_bad_config(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("[synth]\ndt0 = 14\n")  # unitless time
        out = tmp_path / "x.csv"
        assert main(["generate", "gaussian:50ps", "-o", str(out), "--config", str(cfg)]) == 2

    def test_exit_code_for_missing_config(self, tmp_path):
        out = tmp_path / "x.csv"
        assert main(["generate", "gaussian:50ps", "-o", str(out),
                     "--config", str(tmp_path / "none.cfg")]) == 2

    def test_exit_code_for_numerical_failure(self, tmp_path):
        cfg = tmp_path / "tight.cfg"
        cfg.write_text(
            BASE_CONFIG.replace("dt0 = 14 ns", "dt0 = 39.95 ns").replace(
                "background_rate = 10.0", "background_rate = 0.0"
            )
        )
        out = tmp_path / "x.csv"
        code = main(["generate", "gaussian:50ps", "-o", str(out), "--config", str(cfg),
                     "--no-figure"])
        assert code == 3

    def test_exit_code_for_empty_calibration(self, tmp_path):
        raw = tmp_path / "raw.csv"
        raw.write_text("bin_center_ps,counts\n0,0\n10,0\n")
        assert main(["calibrate", str(raw), "-o", str(tmp_path / "g.csv")]) == 2
