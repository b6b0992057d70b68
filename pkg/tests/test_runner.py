"""Experiment runner: resolution, products on disk, comparisons, CLI."""

from __future__ import annotations

import math

import numpy as np
import pytest
from click.testing import CliRunner

from qtraj.cli import main
from qtraj.config import ConfigError, list_presets, parse_config_text
from qtraj.core import DoubleWell, Harmonic
from qtraj.dvr import DvrGrid
from qtraj.records import TrajectoryRecord
from qtraj.runner import (
    PairingError,
    compare_trajectories,
    emit_plot_data,
    pair_separation_deflection,
    resolve,
    resolve_double_well_mass,
    run_experiment,
    write_manifest,
)

ANALYTIC = """
[experiment]
name = tiny-analytic
engine = analytic

[system]
potential = harmonic
mass = 1.0
omega = 1.0
x0 = 1.0
beta = coherent
span = 1.0
n_particles = 9

[integration]
t_end = 6.3

[dvr]
dt_out = 0.7
"""

MWLS_SMALL = """
[experiment]
name = tiny-mwls
engine = mwls

[system]
potential = harmonic
mass = 1.0
omega = 1.0
x0 = 1.0
beta = coherent
span = 2.0
n_particles = 12

[integration]
t_end = 2.0
dt0 = 0.05

[mwls]
order = 4
n_neighbors = 11
"""

CLASSICAL_FOCUS = """
[experiment]
name = tiny-classical
engine = classical

[system]
potential = harmonic
mass = 1.0
omega = 1.0
x0 = 2.0
beta = 1.0
span = 1.0
n_particles = 10

[integration]
t_end = 10.0
dt0 = 0.05
"""

DVR_SMALL = """
[experiment]
name = tiny-dvr
engine = dvr

[system]
potential = harmonic
mass = 1.0
omega = 1.0
x0 = 1.0
beta = coherent
span = 1.0
n_particles = 8

[integration]
t_end = 2.0

[dvr]
n_points = 64
box_min = -6.0
box_max = 6.0
dt_out = 0.5
dt_int = 0.1
"""

COMPARE_SMALL = """
[experiment]
name = tiny-compare
engine = compare

[system]
potential = harmonic
mass = 1.0
omega = 1.0
x0 = 1.0
beta = coherent
span = 1.0
n_particles = 10

[integration]
t_end = 1.0
dt0 = 0.05

[mwls]
order = 4
n_neighbors = 9

[dvr]
n_points = 64
box_min = -6.0
box_max = 6.0
dt_out = 0.25
dt_int = 0.05
"""

DOUBLEWELL_AUTO = """
[experiment]
engine = mwls

[system]
potential = doublewell
mass = auto

[integration]
t_end = 900
"""


def _record(n_samples=11, n_elements=5, engine="mwls", x=None, t=None):
    t = np.linspace(0.0, 10.0, n_samples) if t is None else np.asarray(t, float)
    n_samples = t.size
    if x is None:
        start = np.linspace(0.0, 1.0, n_elements)
        x = start[None, :] + 0.05 * t[:, None]
    x = np.asarray(x, float)
    n_elements = x.shape[1]
    ones = np.ones_like(x)
    return TrajectoryRecord(
        engine=engine,
        t=t,
        x=x,
        v=0.05 * ones,
        rho=ones,
        Q=0.0 * ones,
        V=0.0 * ones,
        S=0.0 * ones,
        logJ=0.0 * ones,
        E=0.0 * ones,
    )


# ---------------------------------------------------------------------------
# resolution


def test_double_well_mass_resolution():
    well = DoubleWell(a=0.007, b=0.01)
    grid = DvrGrid(n_points=200, x_left=-2.5, x_right=2.5)
    res = resolve_double_well_mass(well, grid)
    assert set(res.candidates) == {1836.15, 2000.0}
    assert res.chosen == 2000.0
    assert not res.matched
    assert 1.0 < res.residual_cm < 1.3
    target = np.array([-369.827, -313.918])
    expected = np.max(np.abs(np.asarray(res.candidates[2000.0]) - target))
    assert res.residual_cm == pytest.approx(expected)


def test_resolve_harmonic_explicit():
    cfg = parse_config_text(ANALYTIC)
    res = resolve(cfg)
    assert res.system.mass == 1.0
    assert isinstance(res.potential, Harmonic)
    assert res.x0 == 1.0
    assert res.beta == pytest.approx(1.0)  # coherent: mass * omega
    assert res.span == 1.0
    assert res.mass_resolution is None
    assert res.doublet_cm is None
    assert res.two_state is None


def test_resolve_span_auto():
    cfg = parse_config_text(ANALYTIC.replace("span = 1.0", "span = auto"))
    res = resolve(cfg)
    assert res.span == pytest.approx(6.0 / math.sqrt(res.beta))


def test_resolve_doublewell_auto_chain():
    cfg = parse_config_text(DOUBLEWELL_AUTO)
    res = resolve(cfg)
    assert res.system.mass == 2000.0
    assert res.mass_resolution is not None
    assert not res.mass_resolution.matched
    assert res.x0 == pytest.approx(math.sqrt(0.01 / 0.014), rel=1e-12)
    assert res.beta == pytest.approx(math.sqrt(4 * 0.01 * 2000.0), rel=1e-12)
    assert res.span == pytest.approx(6.0 / math.sqrt(res.beta))
    assert res.doublet_cm[0] == pytest.approx(-368.7, abs=0.5)
    assert res.doublet_cm[1] == pytest.approx(-313.0, abs=0.5)
    assert res.two_state is not None


def test_element_positions_layout():
    cfg = parse_config_text(ANALYTIC)
    res = resolve(cfg)
    pos = res.element_positions
    assert pos.size == cfg.n_particles
    assert pos[0] == pytest.approx(res.x0 - 0.5 * res.span)
    assert pos[-1] == pytest.approx(res.x0 + 0.5 * res.span)
    assert np.allclose(np.diff(pos), res.span / (cfg.n_particles - 1))


def test_controller_carries_step_settings():
    cfg = parse_config_text(MWLS_SMALL)
    ctrl = resolve(cfg).controller()
    assert ctrl.dt == cfg.dt0
    assert ctrl.tol == cfg.tol
    assert ctrl.dt_min == cfg.dt_min
    assert ctrl.dt_max == cfg.dt_max


def test_resolve_beta_auto_needs_a_well():
    text = """
[experiment]
engine = classical

[system]
potential = polynomial
coeffs = 0 0 0.5
mass = 1.0
x0 = 1.0
beta = auto

[integration]
t_end = 1.0
"""
    with pytest.raises(ConfigError, match="beta = auto"):
        resolve(parse_config_text(text))


# ---------------------------------------------------------------------------
# run products


def test_analytic_run_products_and_determinism(tmp_path):
    cfg = parse_config_text(ANALYTIC)
    res_a = run_experiment(cfg, tmp_path / "a", figures=False)
    res_b = run_experiment(cfg, tmp_path / "b", figures=False)
    assert res_a.status == "success"
    assert res_a.termination == "completed"
    expected = ["manifest.txt", "record.dat", "trajectories.dat", "density_snapshots.dat"]
    assert res_a.files == expected
    for name in expected:
        bytes_a = (tmp_path / "a" / name).read_bytes()
        bytes_b = (tmp_path / "b" / name).read_bytes()
        assert bytes_a == bytes_b, f"{name} differs between identical runs"
    loaded = TrajectoryRecord.load(tmp_path / "a" / "record.dat")
    assert loaded.engine == "analytic"
    assert np.array_equal(loaded.t, res_a.record.t)
    assert np.array_equal(loaded.x, res_a.record.x)


def test_analytic_run_renders_figures(tmp_path):
    cfg = parse_config_text(ANALYTIC)
    result = run_experiment(cfg, tmp_path, figures=True)
    assert "trajectories.png" in result.files
    assert "density_snapshots.png" in result.files
    for name in ("trajectories.png", "density_snapshots.png"):
        assert (tmp_path / name).stat().st_size > 0


def test_mwls_run_completes_with_manifest(tmp_path):
    cfg = parse_config_text(MWLS_SMALL)
    result = run_experiment(cfg, tmp_path, figures=False)
    assert result.status == "success"
    assert result.termination == "completed"
    m = result.manifest
    assert m["engine"] == "mwls"
    assert m["mwls_order"] == 4
    assert m["mwls_n_neighbors"] == 11
    assert m["t_final"] == pytest.approx(2.0)
    assert m["norm_max_drift"] < 1e-9
    assert m["span_source"] == "explicit"
    text = (tmp_path / "manifest.txt").read_text()
    assert "engine = mwls\n" in text
    assert "termination = completed\n" in text


def test_classical_focus_is_physics_terminal(tmp_path):
    cfg = parse_config_text(CLASSICAL_FOCUS)
    result = run_experiment(cfg, tmp_path, figures=False)
    assert result.status == "physics-terminal"
    assert result.termination in ("crossing_detected", "stiffness", "degenerate_stencil")
    # classical elements released from rest all converge on the center
    # at a quarter period
    assert result.manifest["t_final"] == pytest.approx(math.pi / 2, abs=0.2)


def test_dvr_run_products(tmp_path):
    cfg = parse_config_text(DVR_SMALL)
    result = run_experiment(cfg, tmp_path, figures=False)
    assert result.status == "success"
    assert result.termination == "completed"
    m = result.manifest
    assert m["dvr_n_points"] == 64
    assert m["floor_events"] >= 0
    assert m["norm_initial"] == pytest.approx(1.0, abs=1e-6)
    assert m["norm_final"] == pytest.approx(1.0, abs=1e-6)
    assert result.record.engine == "dvr"
    assert result.record.t[-1] == pytest.approx(2.0)
    assert (tmp_path / "record.dat").exists()


def test_dvr_span_must_fit_in_box(tmp_path):
    cfg = parse_config_text(DVR_SMALL.replace("span = 1.0", "span = 20.0"))
    with pytest.raises(ConfigError, match="fit inside the box"):
        run_experiment(cfg, tmp_path, figures=False)


def test_compare_run_products(tmp_path):
    cfg = parse_config_text(COMPARE_SMALL)
    result = run_experiment(cfg, tmp_path, figures=False)
    assert result.status == "success"
    assert set(result.sub_results) == {"mwls", "dvr"}
    assert result.sub_results["mwls"].termination == "completed"
    assert (tmp_path / "mwls" / "manifest.txt").exists()
    assert (tmp_path / "dvr" / "manifest.txt").exists()
    assert (tmp_path / "comparison.dat").exists()
    # both engines follow the same rigid coherent translation
    assert result.manifest["comparison_max_dev"] < 1e-2
    assert result.comparison.window[0] == pytest.approx(0.0)
    assert result.comparison.window[1] == pytest.approx(1.0)


# ---------------------------------------------------------------------------
# comparisons


def test_compare_identical_records():
    rec = _record()
    report = compare_trajectories(rec, rec, highlights=(1, 3))
    assert np.all(report.max_dev == 0.0)
    assert np.all(report.rms_dev == 0.0)
    assert report.window == (0.0, 10.0)
    assert report.highlights == (1, 3)


def test_compare_sees_late_offset():
    rec_a = _record()
    shift = 0.01 * (rec_a.t >= 5.0)[:, None]
    rec_b = _record(x=rec_a.x + shift)
    full = compare_trajectories(rec_a, rec_b, highlights=(1,))
    early = compare_trajectories(rec_a, rec_b, window=(0.0, 4.0), highlights=(1,))
    assert np.all(full.max_dev == pytest.approx(0.01))
    assert np.all(early.max_dev == 0.0)


def test_compare_rejects_mismatched_counts():
    with pytest.raises(PairingError, match="element counts differ"):
        compare_trajectories(_record(n_elements=5), _record(n_elements=6))


def test_compare_rejects_different_initial_cloud():
    rec_a = _record()
    rec_b = _record(x=rec_a.x + 0.5)
    with pytest.raises(PairingError, match="initial positions differ"):
        compare_trajectories(rec_a, rec_b)


def test_compare_rejects_empty_window():
    with pytest.raises(PairingError, match="empty"):
        compare_trajectories(_record(), _record(), window=(20.0, 30.0))


def test_compare_rejects_bad_highlights():
    with pytest.raises(PairingError, match="out of range"):
        compare_trajectories(_record(), _record(), highlights=(99,))


def test_pair_separation_deflection():
    t = np.linspace(0.0, 10.0, 11)
    x = np.column_stack([np.zeros_like(t), 1.0 + 0.1 * t])
    rec = _record(t=t, x=x)
    d = pair_separation_deflection(rec, 1, 2, t_start=0.0, t_stop=10.0)
    assert d.deflection == pytest.approx(1.0)
    assert d.left_moved == pytest.approx(0.0)
    assert d.right_moved == pytest.approx(1.0)
    assert d.separation[0] == pytest.approx(1.0)


def test_pair_separation_deflection_clips_to_record():
    t = np.linspace(0.0, 10.0, 11)
    x = np.column_stack([np.zeros_like(t), 1.0 + 0.1 * t])
    rec = _record(t=t, x=x)
    d = pair_separation_deflection(rec, 1, 2, t_start=0.0, t_stop=50.0)
    assert d.t[-1] == pytest.approx(10.0)
    assert d.deflection == pytest.approx(1.0)


def test_pair_separation_deflection_window_after_record():
    rec = _record()
    with pytest.raises(ValueError, match="record ends before"):
        pair_separation_deflection(rec, 1, 2, t_start=15.0, t_stop=20.0)


# ---------------------------------------------------------------------------
# products


def test_write_manifest_formatting(tmp_path):
    path = tmp_path / "manifest.txt"
    write_manifest(
        path,
        {"alpha": 0.5, "flag": True, "off": False, "pair": (1.0, 2.5), "n": 3, "word": "abc"},
    )
    assert path.read_text() == (
        "alpha = 0.5\nflag = true\noff = false\npair = 1 2.5\nn = 3\nword = abc\n"
    )


def test_emit_plot_data_rejects_unknown_kind(tmp_path):
    with pytest.raises(ValueError, match="unknown plot-data kind"):
        emit_plot_data("novelty", tmp_path / "x.dat", record=_record())


def test_comparison_table_layout(tmp_path):
    rec = _record()
    report = compare_trajectories(rec, rec, highlights=(2,))
    path = tmp_path / "comparison.dat"
    emit_plot_data("comparison", path, report=report)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# window = 0 10")
    assert lines[1] == "# columns: index max_abs_dx rms_dx"
    assert lines[2].startswith("1 ")
    assert "# columns: t dx2" in lines


# ---------------------------------------------------------------------------
# command line


def test_cli_presets_lists_bundled_names():
    result = CliRunner().invoke(main, ["presets"])
    assert result.exit_code == 0
    assert result.output.split() == list_presets()


def test_cli_run_unknown_preset_is_config_error():
    result = CliRunner().invoke(main, ["run", "no-such-preset"])
    assert result.exit_code == 2


def test_cli_run_bad_config_file(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("[system]\npotential = harmonic\n")
    result = CliRunner().invoke(main, ["run", str(bad), "--out", str(tmp_path / "o")])
    assert result.exit_code == 2


def test_cli_run_analytic_and_override(tmp_path):
    cfg_file = tmp_path / "tiny.cfg"
    cfg_file.write_text(ANALYTIC)
    out = tmp_path / "out"
    result = CliRunner().invoke(
        main,
        [
            "run",
            str(cfg_file),
            "--out",
            str(out),
            "--no-figures",
            "--override",
            "integration.t_end=3.5",
        ],
    )
    assert result.exit_code == 0, result.output
    assert "tiny-analytic: completed" in result.output
    assert (out / "manifest.txt").read_text().find("t_end = 3.5") >= 0
    assert (out / "record.dat").exists()


def test_cli_run_crossing_exits_three(tmp_path):
    cfg_file = tmp_path / "focus.cfg"
    cfg_file.write_text(CLASSICAL_FOCUS)
    result = CliRunner().invoke(
        main, ["run", str(cfg_file), "--out", str(tmp_path / "o"), "--no-figures"]
    )
    assert result.exit_code == 3
    assert "tiny-classical:" in result.output


def test_cli_compare_records_and_directories(tmp_path):
    rec = _record()
    run_dir = tmp_path / "run"
    run_dir.mkdir()
    rec.save(run_dir / "record.dat")
    rec.save(tmp_path / "other.dat")
    out = tmp_path / "cmp.dat"
    result = CliRunner().invoke(
        main,
        ["compare", str(run_dir), str(tmp_path / "other.dat"), "--out", str(out)],
    )
    assert result.exit_code == 0, result.output
    assert "max deviation" in result.output
    assert out.exists()


def test_cli_compare_mismatch_is_config_error(tmp_path):
    _record(n_elements=5).save(tmp_path / "a.dat")
    _record(n_elements=6).save(tmp_path / "b.dat")
    result = CliRunner().invoke(
        main, ["compare", str(tmp_path / "a.dat"), str(tmp_path / "b.dat")]
    )
    assert result.exit_code == 2
