"""Shared fixtures: small, fast building blocks for the unit tests."""

from __future__ import annotations

import numpy as np
import pytest

from qtraj.core import Harmonic, PhysicalSystem, init_gaussian_ensemble
from qtraj.lagrangian import StepController
from qtraj.mwls import BasisSpec, FitConfig

SEED = 20260823


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(SEED)


@pytest.fixture
def harmonic_setup():
    """Heavy particle in a harmonic well, breathing packet, 32 elements."""
    omega = 2.0 * np.pi / 888.57
    system = PhysicalSystem(mass=2000.0)
    potential = Harmonic(omega=omega, center=0.0, mass=system.mass)
    ensemble = init_gaussian_ensemble(system, potential, x0=3.0, beta=0.3, n=32)
    return system, potential, ensemble


@pytest.fixture
def coherent_setup():
    """Coherent packet (beta = m omega): rigid oscillation, 32 elements."""
    omega = 2.0 * np.pi / 888.57
    system = PhysicalSystem(mass=2000.0)
    potential = Harmonic(omega=omega, center=0.0, mass=system.mass)
    beta = system.mass * omega
    ensemble = init_gaussian_ensemble(system, potential, x0=3.0, beta=beta, n=32)
    return system, potential, ensemble


@pytest.fixture
def whole_cloud_fit() -> FitConfig:
    """Order-4 Hermite fit over every other element (for n = 32 clouds)."""
    return FitConfig(basis=BasisSpec(order=4, family="hermite"), n_neighbors=31)


@pytest.fixture
def controller() -> StepController:
    return StepController(dt=0.1, tol=1e-6)
