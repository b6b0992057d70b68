"""Closed-form references for the two benchmark systems.

Coherent packet in a harmonic well
----------------------------------
For psi(x,0) = N exp(-m omega (x - x0)^2 / 2) in V = m omega^2 x^2 / 2
(a displaced ground state), the packet translates rigidly:

    rho(x,t) = sqrt(b/pi) exp(-b (x - x0 cos wt)^2),   b = m omega,
    x_i(t)   = x_i(0) + x0 (cos wt - 1),
    v(t)     = -x0 omega sin wt            (uniform over the packet),
    S(x,t)   = -hw t/2 - (m w / 2) (2 x x0 sin wt - x0^2 sin 2wt / 2),
    E(x,t)   = -dS/dt
             = hw/2 + m w^2 (x x0 cos wt - x0^2 cos 2wt / 2).

E equals the mechanical energy m v^2/2 + V + Q of the evolving packet
pointwise, and the quantum Hamilton-Jacobi residual
dS/dt + (dS/dx)^2/2m + V + Q vanishes identically; both are enforced by
unit tests.  The zero-point term -hw t/2 in S carries the ground-state
energy.

Two-state model of the tunneling double well
--------------------------------------------
With only the lowest doublet (splitting dE = E1 - E0) populated and the
doublet combinations approximated by Gaussians of width b = m w0
centred on the minima +-x0, the density at the barrier top beats at the
tunneling frequency and the quantum potential there is

    Q(0,t) = h w0 / 2 + (m w0^2 x0^2 / 4) (cos(4 ws t) - 3),
    ws = dE / (2 hbar),

largest when the packet is localised in one well (t = n pi / 2 ws) and
smallest at 50:50 mixing.  Near either minimum the quantum potential is
the inverted parabola Q(x) = h w0 / 2 - m w0^2 (x -+ x0)^2 / 2, so the
barrier the fluid actually sees, V + Q, is flattened relative to V by
an amount that oscillates with the beat.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "HARTREE_TO_INVCM",
    "gaussian_quantum_potential",
    "CoherentOscillator",
    "TwoStateModel",
    "two_state_for_double_well",
]

#: hartree -> wavenumber (cm^-1) conversion.
HARTREE_TO_INVCM = 219474.6313632


def gaussian_quantum_potential(beta: float, mass: float, center: float, x, hbar: float = 1.0):
    """Q for a Gaussian density rho ~ exp(-beta (x - center)^2).

    Q(x) = (hbar^2 beta / 2 m)(1 - beta (x - center)^2): an inverted
    parabola whose peak sits at the density maximum.
    """
    d = x - center
    return (hbar**2 * beta / (2.0 * mass)) * (1.0 - beta * d * d)


@dataclass(frozen=True)
class CoherentOscillator:
    """Displaced-ground-state packet in a harmonic well (hbar = 1)."""

    mass: float
    omega: float
    x0: float

    def __post_init__(self) -> None:
        if not (self.mass > 0.0 and self.omega > 0.0):
            raise ValueError("mass and omega must be positive")

    @property
    def beta(self) -> float:
        """Width parameter of the stationary packet, m omega."""
        return self.mass * self.omega

    def center(self, t: float) -> float:
        """Packet centre x0 cos(omega t)."""
        return self.x0 * math.cos(self.omega * t)

    def density(self, x, t: float):
        """Normalised rho(x, t); rigid translation of the Gaussian."""
        b = self.beta
        d = x - self.center(t)
        return math.sqrt(b / math.pi) * np.exp(-b * d * d)

    def trajectory(self, x_start, t):
        """x(t) = x(0) + x0 (cos wt - 1); every element shifts alike."""
        return x_start + self.x0 * (np.cos(self.omega * np.asarray(t, dtype=float)) - 1.0)

    def velocity(self, t):
        """Uniform flow velocity -x0 omega sin(omega t)."""
        return -self.x0 * self.omega * np.sin(self.omega * np.asarray(t, dtype=float))

    def action(self, x, t: float):
        """Phase S(x, t) including the zero-point term -omega t / 2."""
        w = self.omega
        return (
            -0.5 * w * t
            - 0.5 * self.mass * w * (
                2.0 * np.asarray(x, dtype=float) * self.x0 * math.sin(w * t)
                - 0.5 * self.x0**2 * math.sin(2.0 * w * t)
            )
        )

    def energy(self, x, t: float):
        """E(x, t) = -dS/dt; equals m v^2/2 + V + Q pointwise."""
        w = self.omega
        return (
            0.5 * w
            + self.mass * w * w * (
                np.asarray(x, dtype=float) * self.x0 * math.cos(w * t)
                - 0.5 * self.x0**2 * math.cos(2.0 * w * t)
            )
        )

    def quantum_potential(self, x, t: float):
        """Q(x, t) of the translating Gaussian."""
        return gaussian_quantum_potential(
            self.beta, self.mass, self.center(t), x
        )


@dataclass(frozen=True)
class TwoStateModel:
    """Lowest-doublet beat dynamics of a symmetric double well."""

    mass: float
    omega0: float
    omega_split: float
    x0: float

    def __post_init__(self) -> None:
        if not (self.mass > 0.0 and self.omega0 > 0.0 and self.omega_split > 0.0):
            raise ValueError("mass and frequencies must be positive")

    @property
    def beat_period(self) -> float:
        """Full left-right-left tunneling period pi / omega_split."""
        return math.pi / self.omega_split

    def localization(self, t):
        """Right-well population cos^2(omega_split t)."""
        return np.cos(self.omega_split * np.asarray(t, dtype=float)) ** 2

    def barrier_q(self, t):
        """Quantum potential at the barrier top, Q(0, t)."""
        scale = 0.25 * self.mass * self.omega0**2 * self.x0**2
        return 0.5 * self.omega0 + scale * (
            np.cos(4.0 * self.omega_split * np.asarray(t, dtype=float)) - 3.0
        )

    def barrier_q_range(self):
        """(min, max) of Q(0, t) over the beat."""
        scale = 0.25 * self.mass * self.omega0**2 * self.x0**2
        return (0.5 * self.omega0 - 4.0 * scale, 0.5 * self.omega0 - 2.0 * scale)

    def effective_barrier(self, t, barrier_height: float):
        """V(0) + Q(0, t) measured from the well bottom.

        ``barrier_height`` is the bare well depth; the returned series
        oscillates inside the band given by :meth:`barrier_q_range`
        shifted by it.
        """
        return barrier_height + self.barrier_q(t)

    def well_parabola(self, x, side: int = +1):
        """Q(x) near the minimum on ``side`` (+1 right, -1 left)."""
        if side not in (+1, -1):
            raise ValueError("side must be +1 or -1")
        d = np.asarray(x, dtype=float) - side * self.x0
        return 0.5 * self.omega0 - 0.5 * self.mass * self.omega0**2 * d * d


def two_state_for_double_well(system, potential, splitting: float) -> TwoStateModel:
    """Build the beat model from a well and its doublet splitting.

    ``splitting`` is E1 - E0 in hartree; the beat frequency is half of
    it (hbar = 1) because the density involves the squared overlap.
    """
    if not splitting > 0.0:
        raise ValueError(f"splitting must be positive, got {splitting}")
    return TwoStateModel(
        mass=system.mass,
        omega0=potential.well_frequency(system.mass),
        omega_split=0.5 * splitting / system.hbar,
        x0=potential.minima,
    )
