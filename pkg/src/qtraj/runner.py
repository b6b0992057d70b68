"""Experiment driver: resolve a config, run an engine, write products.

Every run directory receives a ``manifest.txt`` with each parameter as
resolved (auto sentinels included), the termination status, and summary
diagnostics, next to delimited data products: the full per-element
``record.dat``, a wide ``trajectories.dat`` table, density snapshots,
and, for the double well, the barrier-top series.  Figures are rendered
alongside unless suppressed.  Output is deterministic: identical inputs
give byte-identical products.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .analytic import (
    HARTREE_TO_INVCM,
    CoherentOscillator,
    TwoStateModel,
    two_state_for_double_well,
)
from .config import ConfigError, ExperimentConfig
from .core import (
    DoubleWell,
    Ensemble,
    Harmonic,
    PhysicalSystem,
    PolynomialPotential,
    Potential,
    Zero,
    init_gaussian_ensemble,
    potential_value,
)
from .dvr import (
    BoxExitError,
    DvrGrid,
    WavepacketEvolution,
    build_hamiltonian,
    eigensolve,
    gaussian_packet,
    integrate_pilot_trajectories,
    quantum_potential_at,
)
from .lagrangian import FitConfig, StepController, propagate
from .mwls import BasisSpec
from .records import FMT, TrajectoryRecord

__all__ = [
    "PairingError",
    "MassResolution",
    "ResolvedRun",
    "RunResult",
    "ComparisonReport",
    "PairDeflection",
    "resolve_double_well_mass",
    "resolve",
    "run_experiment",
    "compare_trajectories",
    "pair_separation_deflection",
    "emit_plot_data",
    "write_manifest",
]

#: Published tunneling doublet (cm^-1) used to pick the double-well mass.
TUNNELING_DOUBLET_TARGET_CM = (-369.827, -313.918)

#: Published barrier height (cm^-1) recorded next to the analytic one.
BARRIER_HEIGHT_REFERENCE_CM = 786.24

#: Candidate masses tried by ``mass = auto`` (proton vs. round value).
MASS_CANDIDATES = (1836.15, 2000.0)

#: A candidate is declared matched when both doublet levels agree this well.
MASS_MATCH_TOLERANCE_CM = 1.0


class PairingError(ValueError):
    """Two records cannot be compared trajectory by trajectory."""


@dataclass
class MassResolution:
    """Outcome of matching the computed doublet to the published one."""

    chosen: float
    matched: bool
    residual_cm: float
    candidates: dict


def _doublet_cm(potential: Potential, mass: float, grid: DvrGrid) -> tuple[float, float]:
    system = PhysicalSystem(mass=mass)
    decomp = eigensolve(build_hamiltonian(grid, potential, system))
    return (
        float(decomp.energies[0] * HARTREE_TO_INVCM),
        float(decomp.energies[1] * HARTREE_TO_INVCM),
    )


def resolve_double_well_mass(potential: DoubleWell, grid: DvrGrid) -> MassResolution:
    """Pick the mass whose tunneling doublet best matches the target.

    Each candidate's two lowest levels are compared against the
    published doublet; a candidate within the match tolerance wins
    outright, otherwise the nearest is adopted and flagged unmatched
    with its residual.
    """
    target = np.asarray(TUNNELING_DOUBLET_TARGET_CM)
    candidates: dict[float, tuple[float, float]] = {}
    residuals: dict[float, float] = {}
    for mass in MASS_CANDIDATES:
        doublet = _doublet_cm(potential, mass, grid)
        candidates[mass] = doublet
        residuals[mass] = float(np.max(np.abs(np.asarray(doublet) - target)))
    chosen = min(residuals, key=residuals.get)
    return MassResolution(
        chosen=chosen,
        matched=residuals[chosen] <= MASS_MATCH_TOLERANCE_CM,
        residual_cm=residuals[chosen],
        candidates=candidates,
    )


@dataclass
class ResolvedRun:
    """Config with every auto sentinel replaced by its value."""

    cfg: ExperimentConfig
    system: PhysicalSystem
    potential: Potential
    x0: float
    beta: float
    span: float
    fit: FitConfig
    grid: DvrGrid
    mass_resolution: MassResolution | None = None
    doublet_cm: tuple | None = None
    two_state: TwoStateModel | None = None

    @property
    def element_positions(self) -> np.ndarray:
        n = self.cfg.n_particles
        return np.linspace(self.x0 - 0.5 * self.span, self.x0 + 0.5 * self.span, n)

    def controller(self) -> StepController:
        c = self.cfg
        return StepController(
            dt=c.dt0,
            tol=c.tol,
            dt_min=c.dt_min,
            dt_max=c.dt_max,
            shrink=c.shrink,
            grow=c.grow,
        )


def _build_potential(cfg: ExperimentConfig, mass: float) -> Potential:
    if cfg.potential == "harmonic":
        return Harmonic(omega=cfg.resolved_omega, center=cfg.center, mass=mass)
    if cfg.potential == "doublewell":
        return DoubleWell(a=cfg.a, b=cfg.b)
    if cfg.potential == "polynomial":
        return PolynomialPotential(coeffs=cfg.coeffs)
    return Zero()


def resolve(cfg: ExperimentConfig) -> ResolvedRun:
    """Resolve auto parameters and build the concrete run pieces."""
    grid = DvrGrid(
        n_points=cfg.dvr_n_points, x_left=cfg.box_min, x_right=cfg.box_max
    )

    mass_resolution = None
    if cfg.mass == "auto":
        bare = DoubleWell(a=cfg.a, b=cfg.b)
        mass_resolution = resolve_double_well_mass(bare, grid)
        mass = mass_resolution.chosen
    else:
        mass = float(cfg.mass)
    system = PhysicalSystem(mass=mass)
    potential = _build_potential(cfg, mass)

    doublet_cm = None
    two_state = None
    if isinstance(potential, DoubleWell):
        if mass_resolution is not None:
            doublet_cm = mass_resolution.candidates[mass]
        else:
            doublet_cm = _doublet_cm(potential, mass, grid)
        splitting = (doublet_cm[1] - doublet_cm[0]) / HARTREE_TO_INVCM
        two_state = two_state_for_double_well(system, potential, splitting)

    if cfg.x0 == "auto":
        if not isinstance(potential, DoubleWell):
            raise ConfigError("system: x0 = auto needs the double well")
        x0 = potential.minima
    else:
        x0 = float(cfg.x0)

    if cfg.beta == "coherent":
        beta = mass * cfg.resolved_omega
    elif cfg.beta == "auto":
        if isinstance(potential, DoubleWell):
            beta = mass * potential.well_frequency(mass)
        elif isinstance(potential, Harmonic):
            beta = mass * potential.omega
        else:
            raise ConfigError("system: beta = auto needs a well to derive it from")
    else:
        beta = float(cfg.beta)

    span = 6.0 / math.sqrt(beta) if cfg.span == "auto" else float(cfg.span)

    fit = FitConfig(
        basis=BasisSpec(order=cfg.order, family=cfg.basis),
        n_neighbors=cfg.resolved_neighbors,
    )
    return ResolvedRun(
        cfg=cfg,
        system=system,
        potential=potential,
        x0=x0,
        beta=beta,
        span=span,
        fit=fit,
        grid=grid,
        mass_resolution=mass_resolution,
        doublet_cm=doublet_cm,
        two_state=two_state,
    )


@dataclass
class RunResult:
    """Everything a run produced, in memory and on disk."""

    status: str
    termination: str
    out_dir: Path
    manifest: dict
    files: list
    record: TrajectoryRecord | None = None
    resolved: ResolvedRun | None = None
    comparison: "ComparisonReport | None" = None
    sub_results: dict | None = None
    barrier_t: np.ndarray | None = None
    barrier_q0: np.ndarray | None = None


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return FMT % value
    if isinstance(value, (tuple, list, np.ndarray)):
        return " ".join(_fmt(v) for v in value)
    return str(value)


def write_manifest(path, items: dict) -> None:
    """Write ``key = value`` lines; floats use the record format."""
    lines = [f"{key} = {_fmt(value)}" for key, value in items.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def _base_manifest(res: ResolvedRun) -> dict:
    cfg = res.cfg
    items: dict = {
        "name": cfg.name,
        "engine": cfg.engine,
        "potential": cfg.potential,
        "mass": res.system.mass,
        "hbar": res.system.hbar,
    }
    if cfg.potential == "harmonic":
        items["omega"] = cfg.resolved_omega
        if cfg.tau is not None:
            items["tau"] = cfg.tau
        items["center"] = cfg.center
    if cfg.potential == "doublewell":
        items["a"] = cfg.a
        items["b"] = cfg.b
        well: DoubleWell = res.potential  # type: ignore[assignment]
        items["well_minimum"] = well.minima
        items["barrier_height_invcm"] = well.barrier_height * HARTREE_TO_INVCM
        items["barrier_height_reference_invcm"] = BARRIER_HEIGHT_REFERENCE_CM
        items["well_frequency"] = well.well_frequency(res.system.mass)
    if res.mass_resolution is not None:
        mr = res.mass_resolution
        items["mass_resolution"] = "auto"
        for mass, doublet in mr.candidates.items():
            items[f"doublet_invcm_m{mass:g}"] = doublet
        items["doublet_target_invcm"] = TUNNELING_DOUBLET_TARGET_CM
        items["mass_residual_invcm"] = mr.residual_cm
        items["mass_matched"] = mr.matched
    if res.doublet_cm is not None:
        items["doublet_invcm"] = res.doublet_cm
        items["doublet_splitting_invcm"] = res.doublet_cm[1] - res.doublet_cm[0]
    items.update(
        {
            "x0": res.x0,
            "beta": res.beta,
            "span": res.span,
            "span_source": "auto" if cfg.span == "auto" else "explicit",
            "n_particles": cfg.n_particles,
            "index_base": 1,
            "element_order": "leftmost is element 1",
            "t_end": cfg.t_end,
        }
    )
    return items


def _trajectory_manifest(res: ResolvedRun) -> dict:
    cfg = res.cfg
    items = _base_manifest(res)
    items.update(
        {
            "dt0": cfg.dt0,
            "tol": cfg.tol,
            "dt_min": cfg.dt_min,
            "dt_max": cfg.dt_max,
            "shrink": cfg.shrink,
            "grow": cfg.grow,
            "mwls_order": cfg.order,
            "mwls_basis": cfg.basis,
            "mwls_n_neighbors": cfg.resolved_neighbors,
            "mwls_svd_cutoff": res.fit.svd_cutoff,
            "sample_stride": cfg.sample_stride,
        }
    )
    return items


def _snapshot_indices(n_samples: int, count: int) -> np.ndarray:
    return np.unique(
        np.round(np.linspace(0, n_samples - 1, min(count, n_samples))).astype(int)
    )


def write_trajectories_table(path, record: TrajectoryRecord) -> None:
    """Wide table: one row per sample, columns t then every position."""
    header = "# t " + " ".join(
        f"x{j + record.index_base}" for j in range(record.n_elements)
    )
    rows = [header]
    for k in range(record.n_samples):
        rows.append(
            FMT % record.t[k] + " " + " ".join(FMT % v for v in record.x[k])
        )
    Path(path).write_text("\n".join(rows) + "\n")


def write_density_snapshots(path, record: TrajectoryRecord, indices) -> None:
    """Blocks of x, rho, Q, V, V+Q at the selected sample times."""
    lines = ["# columns: x rho Q V Veff"]
    for k in indices:
        lines.append("# t = " + FMT % record.t[k])
        for j in range(record.n_elements):
            q = record.Q[k, j]
            v = record.V[k, j]
            lines.append(
                " ".join(
                    FMT % val
                    for val in (record.x[k, j], record.rho[k, j], q, v, v + q)
                )
            )
    Path(path).write_text("\n".join(lines) + "\n")


def write_barrier_series(path, t, q0, veff_cm) -> None:
    """Barrier-top series: t, Q(0) (hartree), V(0)+Q(0) (cm^-1)."""
    lines = ["# columns: t Q0_hartree Veff_invcm"]
    for tk, qk, vk in zip(t, q0, veff_cm):
        lines.append(" ".join(FMT % v for v in (tk, qk, vk)))
    Path(path).write_text("\n".join(lines) + "\n")


def write_comparison_table(path, report: "ComparisonReport") -> None:
    """Per-pair deviation summary plus highlight time series."""
    lines = [
        "# window = " + FMT % report.window[0] + " " + FMT % report.window[1],
        "# columns: index max_abs_dx rms_dx",
    ]
    for j in range(report.max_dev.size):
        lines.append(
            "%d " % (j + report.index_base)
            + " ".join(FMT % v for v in (report.max_dev[j], report.rms_dev[j]))
        )
    lines.append(
        "# columns: t "
        + " ".join(f"dx{h}" for h in report.highlights)
    )
    for k in range(report.t.size):
        vals = [report.t[k]] + [
            report.delta[k, h - report.index_base] for h in report.highlights
        ]
        lines.append(" ".join(FMT % v for v in vals))
    Path(path).write_text("\n".join(lines) + "\n")


def emit_plot_data(kind: str, path, **data) -> None:
    """Write one delimited plot-data product.

    Kinds: ``trajectories`` (record), ``density-snapshots`` (record,
    indices), ``barrier-series`` (t, q0, veff_cm), ``comparison``
    (report).
    """
    writers = {
        "trajectories": lambda: write_trajectories_table(path, data["record"]),
        "density-snapshots": lambda: write_density_snapshots(
            path, data["record"], data["indices"]
        ),
        "barrier-series": lambda: write_barrier_series(
            path, data["t"], data["q0"], data["veff_cm"]
        ),
        "comparison": lambda: write_comparison_table(path, data["report"]),
    }
    if kind not in writers:
        raise ValueError(f"unknown plot-data kind {kind!r}")
    writers[kind]()


def _norm_series(record: TrajectoryRecord, dx0: float) -> np.ndarray:
    return np.sum(record.rho * np.exp(record.logJ) * dx0, axis=1)


def _write_common_products(
    res: ResolvedRun, record: TrajectoryRecord, out: Path, figures: bool
) -> list:
    files = ["record.dat", "trajectories.dat", "density_snapshots.dat"]
    record.save(out / "record.dat")
    emit_plot_data("trajectories", out / "trajectories.dat", record=record)
    indices = _snapshot_indices(record.n_samples, res.cfg.snapshot_count)
    emit_plot_data(
        "density-snapshots",
        out / "density_snapshots.dat",
        record=record,
        indices=indices,
    )
    if figures:
        from . import plots

        plots.render_trajectories(record, out / "trajectories.png")
        plots.render_density_snapshots(record, indices, out / "density_snapshots.png")
        files += ["trajectories.png", "density_snapshots.png"]
    return files


def _barrier_products(
    res: ResolvedRun,
    t: np.ndarray,
    q0: np.ndarray,
    out: Path,
    figures: bool,
) -> list:
    well: DoubleWell = res.potential  # type: ignore[assignment]
    veff_cm = (q0 + well.barrier_height) * HARTREE_TO_INVCM
    emit_plot_data(
        "barrier-series", out / "barrier_series.dat", t=t, q0=q0, veff_cm=veff_cm
    )
    files = ["barrier_series.dat"]
    if figures:
        from . import plots

        lo, hi = res.two_state.barrier_q_range()
        band_cm = (
            (lo + well.barrier_height) * HARTREE_TO_INVCM,
            (hi + well.barrier_height) * HARTREE_TO_INVCM,
        )
        plots.render_barrier_series(t, veff_cm, band_cm, out / "barrier_series.png")
        files.append("barrier_series.png")
    return files


def _run_trajectory_engine(res: ResolvedRun, out: Path, figures: bool) -> RunResult:
    cfg = res.cfg
    quantum = cfg.engine == "mwls"
    ensemble = init_gaussian_ensemble(
        res.system, res.potential, res.x0, res.beta, cfg.n_particles, res.span
    )
    probe_x = 0.0 if isinstance(res.potential, DoubleWell) and quantum else None
    outcome = propagate(
        ensemble,
        cfg.t_end,
        res.controller(),
        res.fit,
        quantum=quantum,
        sample_stride=cfg.sample_stride,
        probe_x=probe_x,
    )
    record = outcome.record
    dx0 = res.span / (cfg.n_particles - 1)
    norms = _norm_series(record, dx0)

    manifest = _trajectory_manifest(res)
    manifest.update(
        {
            "termination": outcome.termination,
            "t_final": outcome.t_final,
            "steps_accepted": outcome.steps_accepted,
            "steps_rejected": outcome.steps_rejected,
            "norm_initial": norms[0],
            "norm_final": norms[-1],
            "norm_max_drift": float(np.max(np.abs(norms - norms[0]))),
        }
    )
    if outcome.message:
        manifest["termination_detail"] = outcome.message

    files = _write_common_products(res, record, out, figures)
    if probe_x is not None and res.two_state is not None:
        files += _barrier_products(
            res, outcome.barrier_t, outcome.barrier_q0, out, figures
        )
    write_manifest(out / "manifest.txt", manifest)
    files.insert(0, "manifest.txt")

    status = "success" if outcome.termination == "completed" else "physics-terminal"
    return RunResult(
        status=status,
        termination=outcome.termination,
        out_dir=out,
        manifest=manifest,
        files=files,
        record=record,
        resolved=res,
        barrier_t=outcome.barrier_t,
        barrier_q0=outcome.barrier_q0,
    )


def _dvr_record(
    res: ResolvedRun, evolution: WavepacketEvolution, pilot
) -> TrajectoryRecord:
    from .dvr import interpolate_psi

    system = res.system
    nt, n = pilot.x.shape
    arrays = {
        key: np.empty((nt, n))
        for key in ("v", "rho", "Q", "V", "S", "logJ", "E")
    }
    for k, tk in enumerate(pilot.t):
        state = evolution.state_at(tk)
        xk = pilot.x[k]
        psi, dpsi = interpolate_psi(state, xk)
        rho = np.abs(psi) ** 2
        floor = res.cfg.rho_floor * float(np.max(np.abs(state.psi) ** 2))
        v = (system.hbar / system.mass) * np.imag(np.conj(psi) * dpsi)
        v /= np.maximum(rho, floor)
        q = quantum_potential_at(state, system, xk)
        vv = potential_value(res.potential, xk)
        arrays["v"][k] = v
        arrays["rho"][k] = rho
        arrays["Q"][k] = q
        arrays["V"][k] = vv
        arrays["S"][k] = np.angle(psi)
        arrays["logJ"][k] = np.nan
        arrays["E"][k] = 0.5 * system.mass * v**2 + vv + q
    return TrajectoryRecord(
        engine="dvr",
        t=pilot.t,
        x=pilot.x,
        index_base=1,
        notes=(
            "S is the wrapped phase arg(psi) in (-pi, pi]",
            "logJ is not defined on the wavepacket route",
        ),
        **arrays,
    )


def _run_dvr_engine(res: ResolvedRun, out: Path, figures: bool) -> RunResult:
    cfg = res.cfg
    grid = res.grid
    margin = 0.0
    if not (
        grid.x_left + margin < res.x0 - 0.5 * res.span
        and res.x0 + 0.5 * res.span < grid.x_right - margin
    ):
        raise ConfigError(
            "dvr: the initial packet span does not fit inside the box"
        )
    state0 = gaussian_packet(grid, res.x0, res.beta)
    decomp = eigensolve(build_hamiltonian(grid, res.potential, res.system))
    evolution = WavepacketEvolution.from_initial(state0, decomp)

    manifest = _base_manifest(res)
    manifest.update(
        {
            "dvr_n_points": cfg.dvr_n_points,
            "box_min": cfg.box_min,
            "box_max": cfg.box_max,
            "grid_spacing": grid.weight,
            "dt_out": cfg.dt_out,
            "dt_int": cfg.dt_int,
            "rho_floor": cfg.rho_floor,
        }
    )

    termination = "completed"
    detail = ""
    record = None
    pilot = None
    try:
        pilot = integrate_pilot_trajectories(
            evolution,
            res.system,
            res.element_positions,
            cfg.t_end,
            cfg.dt_out,
            cfg.dt_int,
            cfg.rho_floor,
        )
    except BoxExitError as exc:
        termination = "box_exit"
        detail = str(exc)

    files = []
    if pilot is not None:
        record = _dvr_record(res, evolution, pilot)
        manifest.update(
            {
                "termination": termination,
                "t_final": float(pilot.t[-1]),
                "floor_events": pilot.floor_events,
                "norm_initial": state0.norm(),
                "norm_final": evolution.state_at(cfg.t_end).norm(),
            }
        )
        files = _write_common_products(res, record, out, figures)
        if isinstance(res.potential, DoubleWell) and res.two_state is not None:
            q0 = np.array(
                [
                    float(quantum_potential_at(evolution.state_at(tk), res.system, 0.0))
                    for tk in record.t
                ]
            )
            files += _barrier_products(res, record.t, q0, out, figures)
    else:
        manifest.update({"termination": termination, "termination_detail": detail})

    write_manifest(out / "manifest.txt", manifest)
    files.insert(0, "manifest.txt")
    status = "success" if termination == "completed" else "physics-terminal"
    return RunResult(
        status=status,
        termination=termination,
        out_dir=out,
        manifest=manifest,
        files=files,
        record=record,
        resolved=res,
    )


def _run_analytic_engine(res: ResolvedRun, out: Path, figures: bool) -> RunResult:
    cfg = res.cfg
    model = CoherentOscillator(
        mass=res.system.mass, omega=cfg.resolved_omega, x0=res.x0
    )
    n_out = max(1, int(round(cfg.t_end / cfg.dt_out)))
    t = np.linspace(0.0, cfg.t_end, n_out + 1)
    x_start = res.element_positions
    nt, n = t.size, x_start.size
    x = np.empty((nt, n))
    arrays = {key: np.empty((nt, n)) for key in ("v", "rho", "Q", "V", "S", "logJ", "E")}
    for k, tk in enumerate(t):
        xk = model.trajectory(x_start, tk)
        x[k] = xk
        arrays["v"][k] = model.velocity(tk)
        arrays["rho"][k] = model.density(xk, tk)
        arrays["Q"][k] = model.quantum_potential(xk, tk)
        arrays["V"][k] = potential_value(res.potential, xk)
        arrays["S"][k] = model.action(xk, tk)
        arrays["logJ"][k] = 0.0
        arrays["E"][k] = model.energy(xk, tk)
    record = TrajectoryRecord(
        engine="analytic",
        t=t,
        x=x,
        index_base=1,
        notes=("rigid coherent translation: logJ = 0 exactly",),
        **arrays,
    )
    manifest = _base_manifest(res)
    manifest.update({"termination": "completed", "t_final": float(t[-1])})
    files = _write_common_products(res, record, out, figures)
    write_manifest(out / "manifest.txt", manifest)
    files.insert(0, "manifest.txt")
    return RunResult(
        status="success",
        termination="completed",
        out_dir=out,
        manifest=manifest,
        files=files,
        record=record,
        resolved=res,
    )


@dataclass
class ComparisonReport:
    """Trajectory-by-trajectory deviation between two records."""

    t: np.ndarray
    delta: np.ndarray
    max_dev: np.ndarray
    rms_dev: np.ndarray
    window: tuple
    highlights: tuple
    index_base: int = 1


DEFAULT_HIGHLIGHTS = (9, 38, 39, 50)


def compare_trajectories(
    rec_a: TrajectoryRecord,
    rec_b: TrajectoryRecord,
    window: tuple | None = None,
    highlights: tuple | None = None,
) -> ComparisonReport:
    """Pair trajectories by index and measure |x_a - x_b| over time.

    Both records must hold the same number of elements starting from the
    same positions (1e-6 tolerance); the comparison covers the overlap
    of their spans intersected with ``window`` and resamples both sides
    linearly onto a uniform grid.  When ``highlights`` is None the
    default picks are kept where they fit the record and dropped where
    they do not; explicit out-of-range highlights are an error.
    """
    if rec_a.n_elements != rec_b.n_elements:
        raise PairingError(
            f"element counts differ: {rec_a.n_elements} vs {rec_b.n_elements}"
        )
    start_gap = float(np.max(np.abs(rec_a.x[0] - rec_b.x[0])))
    if start_gap > 1e-6:
        raise PairingError(
            f"initial positions differ by up to {start_gap:.3e}; "
            "records were not built from the same initial cloud"
        )
    lo = max(float(rec_a.t[0]), float(rec_b.t[0]))
    hi = min(float(rec_a.t[-1]), float(rec_b.t[-1]))
    if window is not None:
        lo = max(lo, float(window[0]))
        hi = min(hi, float(window[1]))
    if not hi > lo:
        raise PairingError(f"comparison window [{lo:g}, {hi:g}] is empty")
    dt_a = float(np.median(np.diff(rec_a.t))) if rec_a.t.size > 1 else hi - lo
    dt_b = float(np.median(np.diff(rec_b.t))) if rec_b.t.size > 1 else hi - lo
    step = max(min(dt_a, dt_b), (hi - lo) / 2000.0)
    times = np.linspace(lo, hi, int(round((hi - lo) / step)) + 1)
    xa = rec_a.positions_at(times)
    xb = rec_b.positions_at(times)
    delta = np.abs(xa - xb)

    def in_range(h: int) -> bool:
        return rec_a.index_base <= h < rec_a.index_base + rec_a.n_elements

    if highlights is None:
        highlights = tuple(h for h in DEFAULT_HIGHLIGHTS if in_range(h))
        if not highlights:
            highlights = (rec_a.index_base,)
    else:
        bad = [h for h in highlights if not in_range(h)]
        if bad:
            raise PairingError(f"highlight indices out of range: {bad}")
    return ComparisonReport(
        t=times,
        delta=delta,
        max_dev=delta.max(axis=0),
        rms_dev=np.sqrt(np.mean(delta**2, axis=0)),
        window=(lo, hi),
        highlights=tuple(highlights),
        index_base=rec_a.index_base,
    )


@dataclass
class PairDeflection:
    """Growth of one pair separation relative to a reference time."""

    t: np.ndarray
    separation: np.ndarray
    deflection: float
    left_moved: float
    right_moved: float


def pair_separation_deflection(
    record: TrajectoryRecord,
    i: int,
    j: int,
    t_start: float,
    t_stop: float,
    n_samples: int = 81,
) -> PairDeflection:
    """How far the (i, j) pair spreads after ``t_start`` (1-based ids).

    ``deflection`` is max |s(t) - s(t_start)| with s = x_j - x_i over
    [t_start, t_stop] clipped to the record; ``left_moved`` and
    ``right_moved`` are the signed displacements of i and j from their
    positions at ``t_start`` at the moment of largest spread.
    """
    t_stop = min(t_stop, float(record.t[-1]))
    if not t_stop > t_start:
        raise ValueError("record ends before the requested window starts")
    times = np.linspace(t_start, t_stop, n_samples)
    xs = record.positions_at(times)
    a = xs[:, i - record.index_base]
    b = xs[:, j - record.index_base]
    s = b - a
    growth = np.abs(s - s[0])
    k = int(np.argmax(growth))
    return PairDeflection(
        t=times,
        separation=s,
        deflection=float(growth[k]),
        left_moved=float(a[k] - a[0]),
        right_moved=float(b[k] - b[0]),
    )


def _run_compare(res: ResolvedRun, out: Path, figures: bool) -> RunResult:
    cfg = res.cfg
    sub_results = {}
    for engine in ("mwls", "dvr"):
        sub_cfg = dataclasses.replace(
            cfg, engine=engine, name=f"{cfg.name}-{engine}"
        )
        sub_dir = out / engine
        sub_dir.mkdir(parents=True, exist_ok=True)
        sub_res = dataclasses.replace(res, cfg=sub_cfg)
        if engine == "mwls":
            sub_results[engine] = _run_trajectory_engine(sub_res, sub_dir, figures)
        else:
            sub_results[engine] = _run_dvr_engine(sub_res, sub_dir, figures)

    rec_a = sub_results["mwls"].record
    rec_b = sub_results["dvr"].record
    report = compare_trajectories(rec_a, rec_b)
    emit_plot_data("comparison", out / "comparison.dat", report=report)
    files = ["comparison.dat"]
    if figures:
        from . import plots

        plots.render_comparison(rec_a, rec_b, report.highlights, out / "comparison.png")
        files.append("comparison.png")

    manifest = _base_manifest(res)
    manifest.update(
        {
            "mwls_termination": sub_results["mwls"].termination,
            "mwls_t_final": sub_results["mwls"].manifest["t_final"],
            "dvr_termination": sub_results["dvr"].termination,
            "comparison_window": report.window,
            "comparison_max_dev": float(report.max_dev.max()),
        }
    )
    write_manifest(out / "manifest.txt", manifest)
    files.insert(0, "manifest.txt")
    return RunResult(
        status="success",
        termination="completed",
        out_dir=out,
        manifest=manifest,
        files=files,
        resolved=res,
        comparison=report,
        sub_results=sub_results,
    )


def run_experiment(cfg: ExperimentConfig, out_dir, figures: bool = True) -> RunResult:
    """Run one configured experiment into ``out_dir``.

    Returns the in-memory products along with the manifest written to
    disk; ``status`` is ``success`` for a completed run (including a
    compare run whose trajectory leg ended at its expected crossing) and
    ``physics-terminal`` when the engine stopped on a physical
    condition (crossing, stiffness, degenerate stencil, box exit).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    res = resolve(cfg)
    if cfg.engine in ("mwls", "classical"):
        return _run_trajectory_engine(res, out, figures)
    if cfg.engine == "dvr":
        return _run_dvr_engine(res, out, figures)
    if cfg.engine == "analytic":
        return _run_analytic_engine(res, out, figures)
    if cfg.engine == "compare":
        return _run_compare(res, out, figures)
    raise ConfigError(f"unknown engine {cfg.engine!r}")
