"""Domain types for the hydrodynamic trajectory ensemble.

Atomic units throughout: hbar = 1, mass in electron masses, length in
bohr, energy in hartree, time in hbar/hartree.

The wavefunction is carried in polar form on a cloud of fluid elements.
Each element i holds its position x_i, flow velocity v_i, log density
g_i = log rho(x_i), accumulated action S_i, log volume Jacobian logJ_i,
and its initial volume element dx0_i.  Positions are strictly increasing
and must stay that way: quantum trajectories do not cross, and a crossing
in the computed solution is a detectable terminal state, not something to
integrate through.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "PhysicalSystem",
    "Potential",
    "Harmonic",
    "DoubleWell",
    "PolynomialPotential",
    "Zero",
    "potential_value",
    "potential_gradient",
    "FluidElement",
    "Ensemble",
    "init_gaussian_ensemble",
]


@dataclass(frozen=True)
class PhysicalSystem:
    """Particle mass and hbar.  hbar is pinned to 1 (atomic units)."""

    mass: float
    hbar: float = 1.0

    def __post_init__(self) -> None:
        if not self.mass > 0.0:
            raise ValueError(f"mass must be positive, got {self.mass}")
        if self.hbar != 1.0:
            raise ValueError("hbar is fixed at 1.0 (atomic units)")


class Potential:
    """Analytic one-dimensional external potential.

    Subclasses provide the value and the exact gradient; both accept
    scalars or arrays and return the same shape.
    """

    def value(self, x):
        raise NotImplementedError

    def gradient(self, x):
        raise NotImplementedError


@dataclass(frozen=True)
class Harmonic(Potential):
    """V(x) = (1/2) m omega^2 (x - center)^2.

    The mass sets the energy scale of the well, so it is carried here as
    well as in PhysicalSystem; constructors should keep the two equal.
    """

    omega: float
    center: float = 0.0
    mass: float = 1.0

    def __post_init__(self) -> None:
        if not self.omega > 0.0:
            raise ValueError(f"omega must be positive, got {self.omega}")
        if not self.mass > 0.0:
            raise ValueError(f"mass must be positive, got {self.mass}")

    def value(self, x):
        d = x - self.center
        return 0.5 * self.mass * self.omega**2 * d * d

    def gradient(self, x):
        return self.mass * self.omega**2 * (x - self.center)


@dataclass(frozen=True)
class DoubleWell(Potential):
    """Quartic double well V(x) = a x^4 - b x^2 with a, b > 0."""

    a: float
    b: float

    def __post_init__(self) -> None:
        if not (self.a > 0.0 and self.b > 0.0):
            raise ValueError("double well requires a > 0 and b > 0")

    def value(self, x):
        x2 = x * x
        return self.a * x2 * x2 - self.b * x2

    def gradient(self, x):
        return 4.0 * self.a * x**3 - 2.0 * self.b * x

    @property
    def minima(self) -> float:
        """Position of the right-hand well minimum, sqrt(b / 2a)."""
        return math.sqrt(self.b / (2.0 * self.a))

    @property
    def barrier_height(self) -> float:
        """Well depth below V(0): b^2 / 4a."""
        return self.b**2 / (4.0 * self.a)

    @property
    def curvature_at_minimum(self) -> float:
        """V''(x) at either minimum, equal to 4 b."""
        return 4.0 * self.b

    def well_frequency(self, mass: float) -> float:
        """Small-oscillation frequency sqrt(4 b / m) about a minimum."""
        return math.sqrt(self.curvature_at_minimum / mass)


@dataclass(frozen=True)
class PolynomialPotential(Potential):
    """V(x) = sum_k c_k x^k with ascending coefficients."""

    coeffs: tuple

    def __post_init__(self) -> None:
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        if len(self.coeffs) == 0:
            raise ValueError("need at least one coefficient")

    def value(self, x):
        return np.polynomial.polynomial.polyval(x, self.coeffs)

    def gradient(self, x):
        dcoef = np.polynomial.polynomial.polyder(self.coeffs)
        return np.polynomial.polynomial.polyval(x, dcoef)


@dataclass(frozen=True)
class Zero(Potential):
    """Free particle, V = 0."""

    def value(self, x):
        return 0.0 * x

    def gradient(self, x):
        return 0.0 * x


def potential_value(potential: Potential, x):
    """Evaluate V(x); broadcasts over array arguments."""
    return potential.value(x)


def potential_gradient(potential: Potential, x):
    """Evaluate dV/dx analytically; broadcasts over array arguments."""
    return potential.gradient(x)


@dataclass(frozen=True)
class FluidElement:
    """Read-only per-element view of an Ensemble at one index."""

    x: float
    v: float
    g: float
    S: float
    logJ: float
    dx0: float

    @property
    def rho(self) -> float:
        return math.exp(self.g)

    @property
    def dx(self) -> float:
        """Current volume element dx0 * exp(logJ)."""
        return self.dx0 * math.exp(self.logJ)


@dataclass
class Ensemble:
    """State of the particle cloud plus the system it moves in.

    Per-element quantities are aligned numpy arrays; treat them as
    immutable and build evolved states with :meth:`updated`.  Positions
    are expected to be strictly increasing; the propagator checks that
    invariant after every drift.
    """

    system: PhysicalSystem
    potential: Potential
    x: np.ndarray
    v: np.ndarray
    g: np.ndarray
    S: np.ndarray
    logJ: np.ndarray
    dx0: np.ndarray
    t: float = 0.0

    def __post_init__(self) -> None:
        for name in ("x", "v", "g", "S", "logJ", "dx0"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        n = self.x.shape[0]
        if self.x.ndim != 1 or n < 2:
            raise ValueError("ensemble needs a 1-d position array of length >= 2")
        for name in ("v", "g", "S", "logJ", "dx0"):
            if getattr(self, name).shape != (n,):
                raise ValueError(f"array {name!r} must have shape ({n},)")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def rho(self) -> np.ndarray:
        """Density at the element positions, exp(g)."""
        return np.exp(self.g)

    @property
    def dx(self) -> np.ndarray:
        """Current volume elements dx0 * exp(logJ)."""
        return self.dx0 * np.exp(self.logJ)

    def element(self, i: int) -> FluidElement:
        return FluidElement(
            x=float(self.x[i]),
            v=float(self.v[i]),
            g=float(self.g[i]),
            S=float(self.S[i]),
            logJ=float(self.logJ[i]),
            dx0=float(self.dx0[i]),
        )

    def is_ordered(self) -> bool:
        return bool(np.all(np.diff(self.x) > 0.0))

    def min_spacing(self) -> float:
        return float(np.min(np.diff(self.x)))

    def norm(self) -> float:
        """Discrete norm sum_i rho_i dx_i; conserved by the transport."""
        return float(np.sum(self.rho * self.dx))

    def updated(self, **changes) -> "Ensemble":
        """Copy with the given fields replaced."""
        return dataclasses.replace(self, **changes)


def init_gaussian_ensemble(
    system: PhysicalSystem,
    potential: Potential,
    x0: float,
    beta: float,
    n: int,
    span: float | None = None,
) -> Ensemble:
    """Build the initial cloud for psi(x, 0) = N exp(-beta (x - x0)^2 / 2).

    Elements sit on a uniform grid of n points covering ``span`` centred
    on x0 (default span 6/sqrt(beta), which puts the edge density at
    about 1.2e-4 of the peak).  The density exp(g) is normalised so that
    sum rho_i dx0_i = 1, velocities and actions start at zero, and the
    Jacobian starts at log J = 0.
    """
    if n < 2:
        raise ValueError(f"need at least 2 elements, got {n}")
    if not beta > 0.0:
        raise ValueError(f"beta must be positive, got {beta}")
    if span is None:
        span = 6.0 / math.sqrt(beta)
    if not span > 0.0:
        raise ValueError(f"span must be positive, got {span}")

    x = np.linspace(x0 - 0.5 * span, x0 + 0.5 * span, n)
    dx0 = np.full(n, span / (n - 1))
    g = -beta * (x - x0) ** 2
    g -= math.log(float(np.sum(np.exp(g) * dx0)))
    zeros = np.zeros(n)
    return Ensemble(
        system=system,
        potential=potential,
        x=x,
        v=zeros.copy(),
        g=g,
        S=zeros.copy(),
        logJ=zeros.copy(),
        dx0=dx0,
        t=0.0,
    )
