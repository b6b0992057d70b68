"""Time evolution of the fluid-element ensemble.

Each element obeys Newton's law in the combined external and quantum
potential,

    m dv/dt = -d(V + Q)/dx,

while the carried fields follow their convective equations along the
trajectory: the log density and log Jacobian exchange the flow
divergence,

    dg/dt = -dv/dx,        d(logJ)/dt = +dv/dx,

and the action accumulates the Lagrangian, dS/dt = m v^2/2 - (V + Q).
Q, its force, and the divergence come from fresh least-squares jets on
the moving cloud at every stage (:mod:`qtraj.mwls`).

The integrator is velocity Verlet in kick-drift-kick form.  The g and
logJ updates use the trapezoid of the divergence at the step endpoints
with the same average, so rho_i dx_i is conserved element by element to
rounding.  Step size is controlled by step doubling: one full step is
compared against two half steps and the half-step state is always the
one adopted, so the reported solution is the finer of the pair.

Trajectory order is checked after every drift; a sign change in any
spacing raises :class:`TrajectoryCrossingError`, which the driver
reports as a terminal physics condition rather than integrating
through it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Ensemble, potential_gradient, potential_value
from .mwls import (
    DegenerateStencilError,
    FitConfig,
    fit_batch,
    fit_local_polynomial,
    neighbor_table,
    select_stencil,
    shift_jet,
)
from .records import TrajectoryRecord

__all__ = [
    "TrajectoryCrossingError",
    "TimestepUnderflowError",
    "FieldEval",
    "StepController",
    "StepDiagnostics",
    "StepOutcome",
    "PropagationResult",
    "evaluate_fields",
    "compute_accelerations",
    "verlet_step",
    "adaptive_step",
    "propagate",
    "total_energies",
    "total_energy",
    "check_norm",
    "reconstruct_wavefunction",
    "quantum_potential_at",
]


class TrajectoryCrossingError(RuntimeError):
    """Two trajectories crossed during a drift; the flow map broke down."""

    def __init__(self, t: float, min_spacing: float):
        super().__init__(
            f"trajectory crossing at t = {t:.6g} (min spacing {min_spacing:.3e})"
        )
        self.t = t
        self.min_spacing = min_spacing


class TimestepUnderflowError(RuntimeError):
    """Step control shrank dt below dt_min; the flow is too stiff."""

    def __init__(self, t: float, dt: float, dt_min: float):
        super().__init__(
            f"time step underflow at t = {t:.6g}: dt = {dt:.3e} < dt_min = {dt_min:.3e}"
        )
        self.t = t
        self.dt = dt


@dataclass
class FieldEval:
    """Field values at the current element positions."""

    V: np.ndarray
    dVdx: np.ndarray
    Q: np.ndarray
    qforce: np.ndarray
    divv: np.ndarray
    accel: np.ndarray


@dataclass
class StepController:
    """Mutable step-doubling controller state.

    ``dt`` is the next step to attempt; acceptance at tolerance ``tol``
    doubles it up to ``dt_max``, rejection multiplies it by ``shrink``
    and raises :class:`TimestepUnderflowError` below ``dt_min``.
    """

    dt: float = 0.1
    tol: float = 1e-6
    dt_min: float = 1e-4
    dt_max: float = 5.0
    shrink: float = 0.75
    grow: float = 2.0

    def __post_init__(self) -> None:
        if not 0.0 < self.dt_min <= self.dt_max:
            raise ValueError("need 0 < dt_min <= dt_max")
        if not self.dt_min <= self.dt <= self.dt_max:
            raise ValueError(
                f"dt = {self.dt} outside [{self.dt_min}, {self.dt_max}]"
            )
        if not self.tol > 0.0:
            raise ValueError("tol must be positive")
        if not 0.0 < self.shrink < 1.0 < self.grow:
            raise ValueError("need 0 < shrink < 1 < grow")


@dataclass(frozen=True)
class StepDiagnostics:
    accepted: bool
    error: float
    dt_used: float
    crossing_detected: bool = False
    min_spacing: float = math.nan


@dataclass
class StepOutcome:
    """Result of one adaptive attempt: state, end fields, diagnostics.

    On rejection or crossing the ensemble and fields echo the inputs
    unchanged.
    """

    ensemble: Ensemble
    fields: FieldEval
    diagnostics: StepDiagnostics


def _gather_deltas(values: np.ndarray, idx: np.ndarray) -> np.ndarray:
    return values[idx] - values[:, None]


def _quantum_fields(system, g, idx, offsets, fit: FitConfig):
    """Q and its force at every element from the log-density jets."""
    jets, _, _, _ = fit_batch(
        offsets, _gather_deltas(g, idx), fit.basis, fit.svd_cutoff
    )
    d1, d2, d3 = jets[:, 0], jets[:, 1], jets[:, 2]
    quarter = system.hbar**2 / (4.0 * system.mass)
    Q = -quarter * (d2 + 0.5 * d1 * d1)
    qforce = quarter * (d3 + d1 * d2)
    return Q, qforce


def _divergence(v, idx, offsets, fit: FitConfig) -> np.ndarray:
    jets, _, _, _ = fit_batch(
        offsets, _gather_deltas(v, idx), fit.basis, fit.svd_cutoff
    )
    return jets[:, 0]


def _require_quantum_order(fit: FitConfig) -> None:
    if fit.basis.order < 3:
        raise ValueError(
            "quantum propagation needs basis order >= 3 for the quantum force"
        )


def evaluate_fields(ensemble: Ensemble, fit: FitConfig, quantum: bool = True) -> FieldEval:
    """Potential, quantum, and divergence fields at the current cloud."""
    V = potential_value(ensemble.potential, ensemble.x)
    dVdx = potential_gradient(ensemble.potential, ensemble.x)
    idx, offsets = neighbor_table(ensemble.x, fit.resolved_neighbors)
    if quantum:
        _require_quantum_order(fit)
        Q, qforce = _quantum_fields(ensemble.system, ensemble.g, idx, offsets, fit)
    else:
        Q = np.zeros(ensemble.n)
        qforce = np.zeros(ensemble.n)
    divv = _divergence(ensemble.v, idx, offsets, fit)
    accel = (qforce - dVdx) / ensemble.system.mass
    return FieldEval(V=V, dVdx=dVdx, Q=Q, qforce=qforce, divv=divv, accel=accel)


def compute_accelerations(ensemble: Ensemble, fit: FitConfig, quantum: bool = True) -> np.ndarray:
    """Per-element acceleration (-dV/dx - dQ/dx) / m."""
    return evaluate_fields(ensemble, fit, quantum).accel


def _energies(ensemble: Ensemble, fields: FieldEval) -> np.ndarray:
    return 0.5 * ensemble.system.mass * ensemble.v**2 + fields.V + fields.Q


def verlet_step(
    ensemble: Ensemble,
    dt: float,
    fit: FitConfig,
    quantum: bool = True,
    start: FieldEval | None = None,
):
    """One kick-drift-kick step; returns the new state and its fields.

    The returned :class:`FieldEval` is evaluated at the new positions
    (with the predicted end-point log density, which differs from the
    stored trapezoid-corrected value by O(dt^2)) and can be fed back as
    ``start`` of the next step to avoid refitting.
    """
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    f0 = start if start is not None else evaluate_fields(ensemble, fit, quantum)
    m = ensemble.system.mass

    v_half = ensemble.v + 0.5 * dt * f0.accel
    x1 = ensemble.x + dt * v_half
    spacing = np.diff(x1)
    if not np.all(spacing > 0.0):
        raise TrajectoryCrossingError(ensemble.t + dt, float(spacing.min()))

    g_pred = ensemble.g - dt * f0.divv
    V1 = potential_value(ensemble.potential, x1)
    dV1 = potential_gradient(ensemble.potential, x1)
    idx, offsets = neighbor_table(x1, fit.resolved_neighbors)
    if quantum:
        _require_quantum_order(fit)
        Q1, qf1 = _quantum_fields(ensemble.system, g_pred, idx, offsets, fit)
    else:
        Q1 = np.zeros(ensemble.n)
        qf1 = np.zeros(ensemble.n)
    a1 = (qf1 - dV1) / m
    v1 = v_half + 0.5 * dt * a1
    divv1 = _divergence(v1, idx, offsets, fit)

    div_avg = 0.5 * (f0.divv + divv1)
    g1 = ensemble.g - dt * div_avg
    logJ1 = ensemble.logJ + dt * div_avg
    lagr0 = 0.5 * m * ensemble.v**2 - f0.V - f0.Q
    lagr1 = 0.5 * m * v1**2 - V1 - Q1
    S1 = ensemble.S + 0.5 * dt * (lagr0 + lagr1)

    stepped = ensemble.updated(
        x=x1, v=v1, g=g1, S=S1, logJ=logJ1, t=ensemble.t + dt
    )
    fields1 = FieldEval(V=V1, dVdx=dV1, Q=Q1, qforce=qf1, divv=divv1, accel=a1)
    return stepped, fields1


def _pair_error(coarse: Ensemble, fc: FieldEval, fine: Ensemble, ff: FieldEval) -> float:
    """Max per-element relative deviation between coarse and fine states.

    Position, velocity, energy, and density are compared element by
    element, each deviation scaled by that element's own magnitude on
    the fine path.  The per-element scaling keeps the test sharp where
    it matters most: a density error at the thin edge of the cloud, or
    a position slip inside a compression focus, is judged against the
    local value, not the largest one anywhere.  Sign-changing fields
    (x, v, E) get a small field-wide floor so zero crossings do not
    dominate; density is strictly positive and needs none.
    """
    err = 0.0
    for a, b, floored in (
        (coarse.x, fine.x, True),
        (coarse.v, fine.v, True),
        (_energies(coarse, fc), _energies(fine, ff), True),
        (np.exp(coarse.g), np.exp(fine.g), False),
    ):
        mag = np.abs(b)
        if floored:
            scale = np.maximum(mag, 1e-2 * max(float(mag.max()), 1e-300))
        else:
            scale = np.maximum(mag, 1e-300)
        err = max(err, float(np.max(np.abs(a - b) / scale)))
    return err


def adaptive_step(
    ensemble: Ensemble,
    controller: StepController,
    fit: FitConfig,
    quantum: bool = True,
    start: FieldEval | None = None,
    dt_cap: float | None = None,
) -> StepOutcome:
    """One step-doubling attempt at the controller's current dt.

    Runs two half steps and one full step from the same start fields and
    compares the end states.  Within tolerance, the half-step (finer)
    state is adopted and dt grows; otherwise dt shrinks and the input
    state is returned unchanged.  A crossing on the fine path is
    terminal and reported through the diagnostics; a crossing or
    degenerate stencil on the coarse path alone counts as a failed
    comparison (the fine path is still valid), so the step is retried
    smaller.
    """
    f0 = start if start is not None else evaluate_fields(ensemble, fit, quantum)
    dt = controller.dt
    if dt_cap is not None:
        dt = min(dt, dt_cap)

    try:
        half, f_half = verlet_step(ensemble, 0.5 * dt, fit, quantum, start=f0)
        fine, f_fine = verlet_step(half, 0.5 * dt, fit, quantum, start=f_half)
    except TrajectoryCrossingError as exc:
        diag = StepDiagnostics(
            accepted=False,
            error=math.inf,
            dt_used=dt,
            crossing_detected=True,
            min_spacing=exc.min_spacing,
        )
        return StepOutcome(ensemble, f0, diag)

    try:
        coarse, f_coarse = verlet_step(ensemble, dt, fit, quantum, start=f0)
        error = _pair_error(coarse, f_coarse, fine, f_fine)
    except (TrajectoryCrossingError, DegenerateStencilError):
        error = math.inf

    if error <= controller.tol:
        # Grow only when the longer step was comfortably accurate: the
        # local error scales like dt^3, so doubling dt multiplies it by
        # ~8; demanding a 16x margin keeps the next attempt inside
        # tolerance instead of thrashing between grow and shrink.
        if error <= controller.tol / 16.0:
            controller.dt = min(controller.grow * dt, controller.dt_max)
        diag = StepDiagnostics(accepted=True, error=error, dt_used=dt)
        return StepOutcome(fine, f_fine, diag)

    shrunk = controller.shrink * dt
    if shrunk < controller.dt_min:
        raise TimestepUnderflowError(ensemble.t, shrunk, controller.dt_min)
    controller.dt = shrunk
    diag = StepDiagnostics(accepted=False, error=error, dt_used=dt)
    return StepOutcome(ensemble, f0, diag)


@dataclass
class PropagationResult:
    record: TrajectoryRecord
    termination: str
    t_final: float
    steps_accepted: int
    steps_rejected: int
    message: str = ""
    barrier_t: np.ndarray | None = None
    barrier_q0: np.ndarray | None = None


def propagate(
    ensemble: Ensemble,
    t_end: float,
    controller: StepController,
    fit: FitConfig,
    quantum: bool = True,
    sample_stride: int = 1,
    probe_x: float | None = None,
) -> PropagationResult:
    """Drive adaptive steps to t_end, sampling the state as it goes.

    Samples are taken at t = 0, every ``sample_stride``-th accepted
    step, and the final state.  When ``probe_x`` is given, the quantum
    potential is also evaluated at that fixed point at every sample
    (barrier-top monitoring).  Terminal physics conditions (crossing,
    step underflow, degenerate stencil) stop the run and are reported
    in ``termination``; the record then ends at the last valid state.
    """
    if not t_end > ensemble.t:
        raise ValueError(f"t_end = {t_end} must exceed the start time {ensemble.t}")
    if sample_stride < 1:
        raise ValueError("sample_stride must be >= 1")

    engine = "mwls" if quantum else "classical"
    fields = evaluate_fields(ensemble, fit, quantum)

    times: list[float] = []
    rows: dict[str, list[np.ndarray]] = {
        key: [] for key in ("x", "v", "rho", "Q", "V", "S", "logJ", "E")
    }
    probe_t: list[float] = []
    probe_q: list[float] = []

    def take_sample(ens: Ensemble, f: FieldEval) -> None:
        times.append(ens.t)
        rows["x"].append(ens.x.copy())
        rows["v"].append(ens.v.copy())
        rows["rho"].append(np.exp(ens.g))
        rows["Q"].append(f.Q.copy())
        rows["V"].append(f.V.copy())
        rows["S"].append(ens.S.copy())
        rows["logJ"].append(ens.logJ.copy())
        rows["E"].append(_energies(ens, f))
        if probe_x is not None:
            probe_t.append(ens.t)
            probe_q.append(quantum_potential_at(ens, probe_x, fit))

    take_sample(ensemble, fields)
    accepted = rejected = 0
    since_sample = 0
    termination = "completed"
    message = ""
    horizon = t_end - 1e-9 * max(1.0, abs(t_end))

    while ensemble.t < horizon:
        try:
            outcome = adaptive_step(
                ensemble,
                controller,
                fit,
                quantum,
                start=fields,
                dt_cap=t_end - ensemble.t,
            )
        except TimestepUnderflowError as exc:
            termination = "stiffness"
            message = str(exc)
            break
        except DegenerateStencilError as exc:
            termination = "degenerate_stencil"
            message = str(exc)
            break
        if outcome.diagnostics.crossing_detected:
            termination = "crossing_detected"
            message = (
                f"crossing during the step from t = {ensemble.t:.6g} "
                f"(min spacing {outcome.diagnostics.min_spacing:.3e})"
            )
            break
        if not outcome.diagnostics.accepted:
            rejected += 1
            continue
        accepted += 1
        since_sample += 1
        ensemble, fields = outcome.ensemble, outcome.fields
        if since_sample >= sample_stride or ensemble.t >= horizon:
            take_sample(ensemble, fields)
            since_sample = 0

    if times[-1] < ensemble.t:
        take_sample(ensemble, fields)

    record = TrajectoryRecord(
        engine=engine,
        t=np.asarray(times),
        **{key: np.asarray(vals) for key, vals in rows.items()},
    )
    return PropagationResult(
        record=record,
        termination=termination,
        t_final=ensemble.t,
        steps_accepted=accepted,
        steps_rejected=rejected,
        message=message,
        barrier_t=np.asarray(probe_t) if probe_x is not None else None,
        barrier_q0=np.asarray(probe_q) if probe_x is not None else None,
    )


def total_energies(ensemble: Ensemble, fit: FitConfig, quantum: bool = True) -> np.ndarray:
    """Per-element total energy m v^2 / 2 + V + Q from fresh fits."""
    return _energies(ensemble, evaluate_fields(ensemble, fit, quantum))


def total_energy(ensemble: Ensemble, i: int, fit: FitConfig, quantum: bool = True) -> float:
    """Total energy of element i."""
    return float(total_energies(ensemble, fit, quantum)[i])


def check_norm(ensemble: Ensemble) -> float:
    """Discrete norm sum_i rho_i dx0_i exp(logJ_i)."""
    return ensemble.norm()


def reconstruct_wavefunction(ensemble: Ensemble):
    """Polar reconstruction psi_i = exp(g_i/2) exp(i S_i / hbar).

    Returns ``(psi, weights)`` where the weights are the current volume
    elements dx0_i exp(logJ_i), so sum |psi|^2 weights = 1 while the
    transport invariant holds.
    """
    psi = np.exp(0.5 * ensemble.g + 1j * ensemble.S / ensemble.system.hbar)
    return psi, ensemble.dx


def quantum_potential_at(ensemble: Ensemble, x: float, fit: FitConfig) -> float:
    """Quantum potential at an arbitrary point near the cloud.

    Fits the log density at the element nearest to ``x`` and shifts the
    jet to the requested point; intended for probe points within about
    a stencil width of the cloud (for example the barrier top).
    """
    i = int(np.argmin(np.abs(ensemble.x - x)))
    stencil = select_stencil(ensemble, i, fit.resolved_neighbors)
    g_fit = fit_local_polynomial(
        ensemble.g[stencil.neighbor_indices],
        float(ensemble.g[i]),
        stencil,
        fit.basis,
        fit.svd_cutoff,
    )
    jet = shift_jet(g_fit.derivatives, x - float(ensemble.x[i]))
    quarter = ensemble.system.hbar**2 / (4.0 * ensemble.system.mass)
    return float(-quarter * (jet[1] + 0.5 * jet[0] ** 2))
