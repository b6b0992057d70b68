"""Stencil selection, weighted local fits, and jet algebra."""

from __future__ import annotations

import math

import numpy as np
import pytest

from qtraj.core import PhysicalSystem, Zero, init_gaussian_ensemble
from qtraj.mwls import (
    BasisSpec,
    DegenerateStencilError,
    FitConfig,
    Stencil,
    fit_batch,
    fit_local_polynomial,
    gaussian_weights,
    neighbor_table,
    quantum_force,
    quantum_potential,
    select_stencil,
    shift_jet,
    taylor_delta,
    velocity_divergence,
)

MONO4 = BasisSpec(order=4, family="monomial")
HERM4 = BasisSpec(order=4, family="hermite")


def _stencil(offsets) -> Stencil:
    offsets = np.asarray(offsets, dtype=float)
    return Stencil(
        center_index=0,
        neighbor_indices=np.arange(1, offsets.size + 1),
        offsets=offsets,
    )


def _ensemble(positions):
    positions = np.asarray(positions, dtype=float)
    system = PhysicalSystem(mass=1.0)
    n = positions.size
    zeros = np.zeros(n)
    from qtraj.core import Ensemble

    return Ensemble(
        system=system,
        potential=Zero(),
        x=positions,
        v=zeros.copy(),
        g=zeros.copy(),
        S=zeros.copy(),
        logJ=zeros.copy(),
        dx0=np.full(n, 1.0),
    )


# ---------------------------------------------------------------- stencils


def test_uniform_grid_interior_offsets():
    h = 0.25
    ens = _ensemble(np.arange(12) * h)
    st = select_stencil(ens, 6, 4)
    np.testing.assert_allclose(st.offsets, [-2 * h, -h, h, 2 * h], rtol=1e-14)
    assert 6 not in st.neighbor_indices


def test_stencil_excludes_center_and_is_contiguous(rng):
    x = np.sort(rng.uniform(-5, 5, size=40))
    ens = _ensemble(x)
    for i in (0, 3, 20, 39):
        st = select_stencil(ens, i, 7)
        assert st.center_index == i
        assert i not in st.neighbor_indices
        full = np.sort(np.append(st.neighbor_indices, i))
        np.testing.assert_array_equal(full, np.arange(full[0], full[0] + 8))
        assert np.all(np.diff(st.offsets) > 0)


def test_edge_stencils_are_one_sided():
    ens = _ensemble(np.arange(10, dtype=float))
    left = select_stencil(ens, 0, 4)
    np.testing.assert_array_equal(np.sort(left.neighbor_indices), [1, 2, 3, 4])
    right = select_stencil(ens, 9, 4)
    np.testing.assert_array_equal(np.sort(right.neighbor_indices), [5, 6, 7, 8])


def test_equidistant_tie_resolves_to_lower_index():
    ens = _ensemble(np.arange(9, dtype=float))
    st = select_stencil(ens, 4, 3)
    # candidates at distance 2 are indices 2 and 6; the lower index wins
    np.testing.assert_array_equal(np.sort(st.neighbor_indices), [2, 3, 5])


def test_neighbor_table_matches_per_element_selection(rng):
    for trial in range(5):
        n = int(rng.integers(6, 30))
        k = int(rng.integers(2, n - 1))
        x = np.sort(rng.uniform(-3, 3, size=n))
        ens = _ensemble(x)
        idx, offs = neighbor_table(x, k)
        assert idx.shape == (n, k) and offs.shape == (n, k)
        for i in range(n):
            st = select_stencil(ens, i, k)
            np.testing.assert_array_equal(np.sort(idx[i]), np.sort(st.neighbor_indices))
            np.testing.assert_allclose(np.sort(offs[i]), st.offsets, rtol=1e-14)


def test_neighbor_table_rejects_bad_k():
    x = np.arange(5, dtype=float)
    with pytest.raises(ValueError):
        neighbor_table(x, 5)
    with pytest.raises(ValueError):
        neighbor_table(x, 0)


# ----------------------------------------------------------------- weights


def test_gaussian_weights_edge_value():
    offs = np.array([-2.0, -0.5, 0.7, 2.0])
    w = gaussian_weights(offs)
    assert w.shape == offs.shape
    assert w[0] == pytest.approx(0.01, rel=1e-12)
    assert w[-1] == pytest.approx(0.01, rel=1e-12)
    # exp(-ln(100) r^2 / r_max^2) everywhere
    np.testing.assert_allclose(
        w, np.exp(-math.log(100.0) * offs**2 / 4.0), rtol=1e-12
    )


def test_gaussian_weights_decrease_with_distance(rng):
    offs = np.sort(rng.uniform(0.05, 3.0, size=12))
    w = gaussian_weights(offs)
    assert np.all(np.diff(w) < 0)


# -------------------------------------------------------------------- fits


def test_polynomial_interpolation_is_exact(rng):
    coeffs = rng.normal(size=5)  # degree-4 polynomial
    poly = np.polynomial.Polynomial(coeffs)
    offs = np.array([-1.3, -0.6, -0.2, 0.4, 0.9, 1.5])
    st = _stencil(offs)
    values = poly(offs)
    for basis in (MONO4, HERM4):
        fit = fit_local_polynomial(values, float(poly(0.0)), st, basis)
        assert fit.chi2 == pytest.approx(0.0, abs=1e-18)
        assert fit.rank == 4
        expected = [poly.deriv(m)(0.0) for m in range(1, 5)]
        np.testing.assert_allclose(fit.derivatives, expected, rtol=1e-9, atol=1e-12)


def test_order_plus_one_neighbors_still_interpolate(rng):
    # minimal stencil: order+1 samples of a cubic, order-3 fit
    poly = np.polynomial.Polynomial(rng.normal(size=4))
    st = _stencil([-0.8, -0.3, 0.5, 1.1])
    basis = BasisSpec(order=3, family="monomial")
    fit = fit_local_polynomial(poly(st.offsets), float(poly(0.0)), st, basis)
    assert fit.chi2 == pytest.approx(0.0, abs=1e-18)
    np.testing.assert_allclose(
        fit.derivatives, [poly.deriv(m)(0.0) for m in (1, 2, 3)], rtol=1e-9
    )


def test_higher_degree_data_leaves_residual(rng):
    offs = np.linspace(-1.0, 1.0, 9)[[0, 1, 2, 3, 5, 6, 7, 8]]
    st = _stencil(offs)
    values = offs**6  # degree above the fit order
    fit = fit_local_polynomial(values, 0.0, st, MONO4)
    assert fit.chi2 > 1e-8


def test_hermite_and_monomial_agree_on_smooth_data(rng):
    f = lambda s: np.sin(1.3 * s) + 0.4 * s**2
    offs = np.sort(rng.uniform(-0.9, 0.9, size=10))
    st = _stencil(offs)
    a = fit_local_polynomial(f(offs), float(f(0.0)), st, MONO4)
    b = fit_local_polynomial(f(offs), float(f(0.0)), st, HERM4)
    np.testing.assert_allclose(a.derivatives, b.derivatives, rtol=1e-8, atol=1e-10)


def test_hermite_conditioning_beats_raw_monomials_on_fine_stencils():
    base = np.array([-2.0, -1.5, -1.0, -0.5, 0.5, 1.0, 1.5, 2.0])
    offs = base * 3e-2
    st = _stencil(offs)
    values = np.exp(offs) - 1.0
    mono = fit_local_polynomial(values, 0.0, st, MONO4)
    herm = fit_local_polynomial(values, 0.0, st, HERM4)
    assert herm.condition < 1e-2 * mono.condition
    np.testing.assert_allclose(herm.derivatives[0], 1.0, rtol=1e-6)
    # much finer stencils push raw monomials past the truncation cutoff,
    # which surfaces as the rank-deficiency error rather than bad numbers
    tiny = _stencil(base * 1e-3)
    with pytest.raises(DegenerateStencilError):
        fit_local_polynomial(np.exp(tiny.offsets) - 1.0, 0.0, tiny, MONO4)
    fine = fit_local_polynomial(np.exp(tiny.offsets) - 1.0, 0.0, tiny, HERM4)
    assert fine.rank == 4


def test_weighted_fit_matches_normal_equations_oracle(rng):
    # independent route: min sum_j w_j (P a - f)_j^2 solved via the
    # normal equations on the same pinned monomial basis
    offs = np.sort(rng.uniform(-1.5, 1.5, size=14))
    offs = offs[np.abs(offs) > 0.05]
    st = _stencil(offs)
    values = np.sin(offs) + 0.01 * rng.normal(size=offs.size)
    order = 4
    P = np.column_stack([offs ** (p + 1) / math.factorial(p + 1) for p in range(order)])
    w = gaussian_weights(offs)
    A = P.T @ (w[:, None] * P)
    b = P.T @ (w * values)
    oracle = np.linalg.solve(A, b)
    fit = fit_local_polynomial(values, 0.0, st, MONO4)
    np.testing.assert_allclose(fit.derivatives, oracle, rtol=1e-8)
    resid = values - P @ fit.derivatives
    assert fit.chi2 == pytest.approx(float(np.sum(w * resid**2)), rel=1e-8)


def test_fit_batch_matches_single_fits(rng):
    x = np.sort(rng.uniform(-2, 2, size=25))
    g = -0.7 * x**2 + 0.3 * x
    idx, offs = neighbor_table(x, 8)
    values = g[idx] - g[:, None]
    jets, chi2, cond, rank = fit_batch(offs, values, HERM4)
    assert jets.shape == (25, 4)
    ens = _ensemble(x)
    for i in (0, 7, 24):
        st = select_stencil(ens, i, 8)
        single = fit_local_polynomial(g[st.neighbor_indices], g[i], st, HERM4)
        np.testing.assert_allclose(jets[i], single.derivatives, rtol=1e-9, atol=1e-12)


def test_degenerate_stencil_raises():
    st = _stencil([0.5, 0.5, 0.5, 0.5, 0.5])
    with pytest.raises(DegenerateStencilError):
        fit_local_polynomial(np.ones(5), 0.0, st, MONO4)


def test_fit_batch_names_offending_row():
    offs = np.array(
        [
            [-2.0, -1.0, 1.0, 2.0, 3.0],
            [0.7, 0.7, 0.7, 0.7, 0.7],
        ]
    )
    values = np.zeros_like(offs)
    with pytest.raises(DegenerateStencilError, match="1"):
        fit_batch(offs, values, MONO4)


def test_fit_config_requires_enough_neighbors():
    with pytest.raises(ValueError):
        FitConfig(basis=HERM4, n_neighbors=5)
    cfg = FitConfig(basis=HERM4, n_neighbors=6)
    assert cfg.n_neighbors == 6


def test_basis_spec_validation():
    with pytest.raises(ValueError):
        BasisSpec(order=4, family="chebyshev")
    with pytest.raises(ValueError):
        BasisSpec(order=1, family="monomial")


# ------------------------------------------------------- derived quantities


def test_gaussian_log_density_quantum_potential(rng):
    system = PhysicalSystem(mass=2000.0)
    beta, x0 = 0.3, 3.0
    ens = init_gaussian_ensemble(system, Zero(), x0=x0, beta=beta, n=40)
    idx, offs = neighbor_table(ens.x, 10)
    values = ens.g[idx] - ens.g[:, None]
    jets, *_ = fit_batch(offs, values, HERM4)
    for i in range(5, 35):
        fit_i = type("J", (), {})()
        st = select_stencil(ens, i, 10)
        res = fit_local_polynomial(ens.g[st.neighbor_indices], ens.g[i], st, HERM4)
        xi = ens.x[i] - x0
        q_exact = (beta / (2 * system.mass)) * (1.0 - beta * xi * xi)
        f_exact = beta * beta * xi / system.mass
        assert quantum_potential(res, system) == pytest.approx(q_exact, rel=1e-8)
        assert quantum_force(res, system) == pytest.approx(f_exact, rel=1e-6, abs=1e-12)


def test_velocity_divergence_reads_first_derivative():
    st = _stencil([-0.9, -0.4, 0.3, 0.8, 1.2, -1.2])
    st = _stencil(np.sort(st.offsets))
    c = 0.37
    fit = fit_local_polynomial(c * st.offsets, 0.0, st, MONO4)
    assert velocity_divergence(fit) == pytest.approx(c, rel=1e-10)


def test_shift_jet_translates_taylor_polynomial():
    # jet of f(u) = u + u^2/2 + u^3/6 + u^4/24 at 0: all derivatives 1
    d = np.ones(4)
    s = 0.3
    shifted = shift_jet(d, s)
    f = np.polynomial.Polynomial([0.0, 1.0, 0.5, 1.0 / 6.0, 1.0 / 24.0])
    expected = [f.deriv(m)(s) for m in range(1, 5)]
    np.testing.assert_allclose(shifted, expected, rtol=1e-12)
    assert taylor_delta(d, s) == pytest.approx(float(f(s)), rel=1e-12)


def test_taylor_delta_reproduces_polynomial_change(rng):
    poly = np.polynomial.Polynomial(rng.normal(size=5))
    st = _stencil(np.linspace(-1.2, 1.2, 9)[np.abs(np.linspace(-1.2, 1.2, 9)) > 0.01])
    fit = fit_local_polynomial(
        poly(st.offsets) - poly(0.0) + poly(0.0), float(poly(0.0)), st, MONO4
    )
    for s in (-0.5, 0.2, 0.9):
        assert fit.derivatives is not None
        delta = taylor_delta(fit.derivatives, s)
        assert delta == pytest.approx(float(poly(s) - poly(0.0)), rel=1e-8)
