"""Sine-basis discrete variable representation of the wavepacket.

Independent reference route for the trajectory solver: the wavefunction
lives on N interior points of a hard-walled box, the Hamiltonian is
built from the exact sine-basis kinetic energies plus the diagonal
potential, and propagation is spectral (exact for the discretised
Hamiltonian at any time step).

Box [x_left, x_right] of width D carries basis functions

    T_i(x) = sqrt(2/D) sin(i pi (x - x_left)/D),   i = 1..N,

collocated at x_j = x_left + j D/(N+1) with quadrature weight
h = D/(N+1).  The grid/basis transform

    U_ij = sqrt(2/(N+1)) sin(i j pi/(N+1))

is symmetric and self-inverse, and T_i(x_j) = U_ij / sqrt(h), so a
state stored as grid values psi(x_j) moves to basis coefficients as
c = U (sqrt(h) psi) and interpolates back through the T_i exactly at
the grid points.  Bohmian trajectories ride on the interpolated wave:
v = (hbar/m) Im(psi* dpsi/dx)/|psi|^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import PhysicalSystem, Potential, potential_value

__all__ = [
    "BoxExitError",
    "DvrGrid",
    "DvrState",
    "SpectralDecomposition",
    "WavepacketEvolution",
    "PilotTrajectories",
    "build_transform",
    "build_hamiltonian",
    "eigensolve",
    "gaussian_packet",
    "propagate",
    "interpolate_psi",
    "psi_jet",
    "pilot_velocity",
    "quantum_potential_at",
    "integrate_pilot_trajectories",
]


class BoxExitError(RuntimeError):
    """A pilot trajectory left the box interior."""

    def __init__(self, index: int, t: float, x: float):
        super().__init__(
            f"trajectory {index} left the box at t = {t:.6g} (x = {x:.6g})"
        )
        self.index = index
        self.t = t
        self.x = x


@dataclass(frozen=True)
class DvrGrid:
    """Hard-wall box with N interior collocation points."""

    n_points: int
    x_left: float
    x_right: float

    def __post_init__(self) -> None:
        if self.n_points < 2:
            raise ValueError("need at least 2 grid points")
        if not self.x_right > self.x_left:
            raise ValueError("box must have positive width")

    @property
    def width(self) -> float:
        return self.x_right - self.x_left

    @property
    def weight(self) -> float:
        """Quadrature weight h = width/(N+1)."""
        return self.width / (self.n_points + 1)

    @property
    def points(self) -> np.ndarray:
        j = np.arange(1, self.n_points + 1)
        return self.x_left + j * self.width / (self.n_points + 1)


def build_transform(n: int) -> np.ndarray:
    """Symmetric self-inverse grid/basis transform U."""
    j = np.arange(1, n + 1)
    return np.sqrt(2.0 / (n + 1)) * np.sin(np.outer(j, j) * np.pi / (n + 1))


def build_hamiltonian(
    grid: DvrGrid, potential: Potential, system: PhysicalSystem
) -> np.ndarray:
    """Grid-space Hamiltonian U diag(T_kin) U + diag(V(x_j))."""
    n = grid.n_points
    U = build_transform(n)
    k = np.arange(1, n + 1) * np.pi / grid.width
    kinetic = (system.hbar * k) ** 2 / (2.0 * system.mass)
    H = (U * kinetic) @ U
    H[np.diag_indices(n)] += potential_value(potential, grid.points)
    return H


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenvalues (ascending) and eigenvector columns of H."""

    energies: np.ndarray
    states: np.ndarray


def eigensolve(hamiltonian: np.ndarray) -> SpectralDecomposition:
    energies, states = np.linalg.eigh(hamiltonian)
    return SpectralDecomposition(energies=energies, states=states)


@dataclass
class DvrState:
    """Wavefunction as complex grid values psi(x_j) at time t."""

    grid: DvrGrid
    psi: np.ndarray
    t: float = 0.0

    def __post_init__(self) -> None:
        self.psi = np.asarray(self.psi, dtype=complex)
        if self.psi.shape != (self.grid.n_points,):
            raise ValueError(
                f"psi must have shape ({self.grid.n_points},), got {self.psi.shape}"
            )

    def norm(self) -> float:
        """Discrete norm sum |psi_j|^2 h."""
        return float(np.sum(np.abs(self.psi) ** 2) * self.grid.weight)

    def normalized(self) -> "DvrState":
        return DvrState(self.grid, self.psi / math.sqrt(self.norm()), self.t)

    def basis_coeffs(self) -> np.ndarray:
        """Sine-basis coefficients c = U (sqrt(h) psi)."""
        U = build_transform(self.grid.n_points)
        return U @ (self.psi * math.sqrt(self.grid.weight))


def gaussian_packet(
    grid: DvrGrid, x0: float, beta: float, k0: float = 0.0
) -> DvrState:
    """Normalised packet psi = N exp(-beta (x - x0)^2 / 2 + i k0 x)."""
    if not beta > 0.0:
        raise ValueError(f"beta must be positive, got {beta}")
    x = grid.points
    psi = np.exp(-0.5 * beta * (x - x0) ** 2 + 1j * k0 * x)
    return DvrState(grid, psi, 0.0).normalized()


def propagate(state: DvrState, decomp: SpectralDecomposition, dt: float) -> DvrState:
    """Spectral step psi(t + dt) = V exp(-i E dt / hbar) V^T psi(t)."""
    phases = np.exp(-1j * decomp.energies * dt)
    psi = decomp.states @ (phases * (decomp.states.T @ state.psi))
    return DvrState(state.grid, psi, state.t + dt)


@dataclass
class WavepacketEvolution:
    """Closed-form psi(t) from the spectral decomposition.

    Time is measured from the reference state used to build it; the
    uniform quadrature weight cancels in the grid-space expansion, so
    the spectral coefficients are taken directly on grid values.
    """

    grid: DvrGrid
    decomp: SpectralDecomposition
    coeffs: np.ndarray
    t0: float = 0.0

    @classmethod
    def from_initial(
        cls, state: DvrState, decomp: SpectralDecomposition
    ) -> "WavepacketEvolution":
        return cls(
            grid=state.grid,
            decomp=decomp,
            coeffs=decomp.states.T @ state.psi,
            t0=state.t,
        )

    def state_at(self, t: float) -> DvrState:
        phases = np.exp(-1j * self.decomp.energies * (t - self.t0))
        psi = self.decomp.states @ (phases * self.coeffs)
        return DvrState(self.grid, psi, t)


def _basis_rows(grid: DvrGrid, x: np.ndarray, max_deriv: int):
    """T_i(x) and derivatives, stacked as arrays of shape (N, len(x))."""
    n = grid.n_points
    wave = np.arange(1, n + 1) * np.pi / grid.width
    arg = np.outer(wave, x - grid.x_left)
    amp = math.sqrt(2.0 / grid.width)
    rows = [amp * np.sin(arg)]
    if max_deriv >= 1:
        rows.append(amp * wave[:, None] * np.cos(arg))
    if max_deriv >= 2:
        rows.append(-amp * wave[:, None] ** 2 * np.sin(arg))
    if max_deriv >= 3:
        raise ValueError("basis derivatives supported up to order 2")
    return rows


def _check_inside(grid: DvrGrid, x: np.ndarray) -> None:
    if np.any(x <= grid.x_left) or np.any(x >= grid.x_right):
        raise ValueError(
            f"points must lie strictly inside the box "
            f"({grid.x_left:g}, {grid.x_right:g})"
        )


def _interp(state: DvrState, x, max_deriv: int, coeffs: np.ndarray | None = None):
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    _check_inside(state.grid, xa)
    c = state.basis_coeffs() if coeffs is None else coeffs
    rows = _basis_rows(state.grid, xa, max_deriv)
    out = [c @ row for row in rows]
    if np.isscalar(x) or np.asarray(x).ndim == 0:
        return [o[0] for o in out]
    return out


def interpolate_psi(state: DvrState, x):
    """psi(x) and dpsi/dx off the grid; exact at the grid points."""
    psi, dpsi = _interp(state, x, 1)
    return psi, dpsi


def psi_jet(state: DvrState, x):
    """psi, psi', psi'' at x from the basis expansion."""
    return tuple(_interp(state, x, 2))


def pilot_velocity(
    state: DvrState,
    system: PhysicalSystem,
    x,
    rho_floor: float = 1e-12,
):
    """Flow velocity (hbar/m) Im(psi* psi') / |psi|^2 at x.

    The denominator is clamped at ``rho_floor`` times the largest grid
    density, which bounds the velocity near nodes; trajectory
    integration additionally flags and holds through such samples.
    """
    psi, dpsi = interpolate_psi(state, x)
    rho = np.abs(psi) ** 2
    floor = rho_floor * float(np.max(np.abs(state.psi) ** 2))
    rho_safe = np.maximum(rho, floor)
    return (system.hbar / system.mass) * np.imag(np.conj(psi) * dpsi) / rho_safe


def quantum_potential_at(state: DvrState, system: PhysicalSystem, x):
    """Q(x) = -(hbar^2/2m) (sqrt(rho))''/sqrt(rho) from the basis jet."""
    psi, dpsi, d2psi = psi_jet(state, x)
    rho = np.abs(psi) ** 2
    drho = 2.0 * np.real(np.conj(psi) * dpsi)
    d2rho = 2.0 * np.real(np.conj(psi) * d2psi) + 2.0 * np.abs(dpsi) ** 2
    rho_safe = np.maximum(rho, 1e-300)
    curvature = 0.5 * d2rho / rho_safe - 0.25 * (drho / rho_safe) ** 2
    return -(system.hbar**2 / (2.0 * system.mass)) * curvature


@dataclass
class PilotTrajectories:
    """Bohmian trajectories carried by the interpolated wavepacket."""

    t: np.ndarray
    x: np.ndarray
    flagged: np.ndarray
    floor_events: int


def integrate_pilot_trajectories(
    evolution: WavepacketEvolution,
    system: PhysicalSystem,
    x_start,
    t_end: float,
    dt_out: float,
    dt_int: float = 1.0,
    rho_floor: float = 1e-12,
) -> PilotTrajectories:
    """Integrate dx/dt = v(x, t) under the evolving wavepacket.

    Classic fourth-order Runge-Kutta with a fixed internal step no
    larger than ``dt_int``; positions are recorded every ``dt_out``.
    Near-node samples (density under ``rho_floor`` of the grid maximum)
    reuse the trajectory's last good velocity and are flagged in the
    output.  A stage position outside the box raises
    :class:`BoxExitError`.
    """
    x0 = np.atleast_1d(np.asarray(x_start, dtype=float))
    grid = evolution.grid
    _check_inside(grid, x0)
    if not (t_end > evolution.t0 and dt_out > 0.0 and dt_int > 0.0):
        raise ValueError("need t_end > start time and positive dt_out, dt_int")

    n_out = int(round((t_end - evolution.t0) / dt_out))
    if abs(n_out * dt_out - (t_end - evolution.t0)) > 1e-9 * max(1.0, t_end):
        raise ValueError("t_end must be a whole number of dt_out intervals")
    n_sub = max(1, math.ceil(dt_out / dt_int))
    h = dt_out / n_sub

    cache: dict[float, tuple[np.ndarray, float]] = {}

    def fbr_at(t: float):
        hit = cache.get(t)
        if hit is None:
            state = evolution.state_at(t)
            hit = (
                state.basis_coeffs(),
                float(np.max(np.abs(state.psi) ** 2)),
            )
            cache.clear()
            cache[t] = hit
        return hit

    v_last = np.zeros_like(x0)
    flag_now = np.zeros(x0.shape, dtype=bool)

    def velocity(xs: np.ndarray, t: float) -> np.ndarray:
        nonlocal v_last
        bad = (xs <= grid.x_left) | (xs >= grid.x_right)
        if np.any(bad):
            k = int(np.argmax(bad))
            raise BoxExitError(k, t, float(xs[k]))
        coeffs, rho_max = fbr_at(t)
        rows = _basis_rows(grid, xs, 1)
        psi = coeffs @ rows[0]
        dpsi = coeffs @ rows[1]
        rho = np.abs(psi) ** 2
        low = rho < rho_floor * rho_max
        v = (system.hbar / system.mass) * np.imag(np.conj(psi) * dpsi)
        v = np.where(low, v_last, v / np.maximum(rho, 1e-300))
        flag_now[low] = True
        v_last = v
        return v

    times = [evolution.t0]
    path = [x0.copy()]
    flags = [np.zeros(x0.shape, dtype=bool)]
    floor_events = 0
    x = x0.copy()
    t = evolution.t0
    for _ in range(n_out):
        flag_now[:] = False
        for _ in range(n_sub):
            k1 = velocity(x, t)
            k2 = velocity(x + 0.5 * h * k1, t + 0.5 * h)
            k3 = velocity(x + 0.5 * h * k2, t + 0.5 * h)
            k4 = velocity(x + h * k3, t + h)
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            t += h
        times.append(t)
        path.append(x.copy())
        flags.append(flag_now.copy())
        floor_events += int(flag_now.sum())
    return PilotTrajectories(
        t=np.asarray(times),
        x=np.asarray(path),
        flagged=np.asarray(flags),
        floor_events=floor_events,
    )
