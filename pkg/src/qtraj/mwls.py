"""Meshfree moving weighted least-squares derivative engine.

Fields sampled on the scattered, co-moving point cloud are turned into
derivative jets by local polynomial fits.  Around a centre element the
field is modelled as

    f(x_c + s) - f(x_c) = sum_p a_p P_p(s),

where the basis P_p contains no constant term, so the fit is pinned to
the centre value exactly and the expansion coefficients encode the
derivatives at the centre.  Two basis families are supported:

* ``monomial``: P_p(s) = s^p / p!, so the p-th derivative at the centre
  is the coefficient a_p itself.
* ``hermite`` (default): P_p(s) = H_p(s/w) - H_p(0) with physicists'
  Hermite polynomials and w the stencil half-width.  The columns stay
  O(1) regardless of how tight the stencil is, which keeps the design
  matrix well conditioned; derivatives are recovered through a fixed
  triangular conversion matrix divided by powers of w.

Each fit is weighted by a Gaussian of the neighbour distance that falls
to 0.01 at the stencil edge, and solved by SVD pseudo-inversion with a
relative singular-value cutoff.  Rank deficiency after the cutoff means
the stencil geometry has degenerated (elements clustering ahead of a
trajectory crossing) and raises :class:`DegenerateStencilError` rather
than returning a silently regularised answer.

Fits for different centres are independent: the batch entry points map
over elements against an immutable snapshot of the cloud and can be
parallelised freely.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "BasisSpec",
    "FitConfig",
    "Stencil",
    "FitResult",
    "DegenerateStencilError",
    "select_stencil",
    "neighbor_table",
    "gaussian_weights",
    "fit_local_polynomial",
    "fit_batch",
    "quantum_potential",
    "quantum_force",
    "velocity_divergence",
    "shift_jet",
    "taylor_delta",
]

MONOMIAL = "monomial"
HERMITE = "hermite"

#: Edge weight of the Gaussian kernel: the farthest neighbour gets 0.01.
EDGE_WEIGHT = 0.01

_LN_INV_EDGE = math.log(1.0 / EDGE_WEIGHT)


class DegenerateStencilError(RuntimeError):
    """Stencil geometry too degenerate to support the requested fit.

    Raised when the weighted design matrix loses rank after the
    singular-value cutoff; with an ordered cloud this signals elements
    clustering toward a crossing.
    """

    def __init__(self, message: str, center_index: int | None = None):
        super().__init__(message)
        self.center_index = center_index


@dataclass(frozen=True)
class BasisSpec:
    """Polynomial order and basis family of the local model."""

    order: int = 4
    family: str = HERMITE

    def __post_init__(self) -> None:
        if self.order < 2:
            raise ValueError(f"order must be >= 2, got {self.order}")
        if self.family not in (MONOMIAL, HERMITE):
            raise ValueError(f"unknown basis family {self.family!r}")


@dataclass(frozen=True)
class FitConfig:
    """Fit parameters shared by every stencil of a field evaluation."""

    basis: BasisSpec = BasisSpec()
    n_neighbors: int | None = None
    svd_cutoff: float = 1e-10

    def __post_init__(self) -> None:
        k = self.n_neighbors
        if k is not None and k < self.basis.order + 2:
            raise ValueError(
                f"n_neighbors = {k} leaves the order-{self.basis.order} fit "
                f"underdetermined; need at least order + 2"
            )
        if not 0.0 < self.svd_cutoff < 1.0:
            raise ValueError("svd_cutoff must lie in (0, 1)")

    @property
    def resolved_neighbors(self) -> int:
        """Neighbour count, defaulting to 2 * order + 2."""
        if self.n_neighbors is not None:
            return self.n_neighbors
        return 2 * self.basis.order + 2


@dataclass(frozen=True)
class Stencil:
    """Neighbour set of one centre element."""

    center_index: int
    neighbor_indices: np.ndarray
    offsets: np.ndarray


@dataclass(frozen=True)
class FitResult:
    """Derivative jet and fit diagnostics at one centre.

    ``derivatives[k-1]`` approximates the k-th derivative of the field
    at the centre for k = 1..order.  ``chi2`` is the weighted residual
    sum of squares, ``condition`` the singular-value ratio of the
    weighted design matrix, ``rank`` its numerical rank.
    """

    derivatives: np.ndarray
    chi2: float
    condition: float
    rank: int


def neighbor_table(positions, k: int):
    """Nearest-k neighbour indices and offsets for every element.

    ``positions`` must be strictly increasing, so each neighbour set is
    a contiguous window around its centre; ties between equidistant
    left/right candidates resolve to the lower index.  Returns
    ``(indices, offsets)`` with shape (n, k) each; offsets are
    ``positions[indices] - positions[center]`` and ascending per row.
    """
    x = np.asarray(positions, dtype=float)
    n = x.size
    if not 1 <= k <= n - 1:
        raise ValueError(f"n_neighbors must be in [1, {n - 1}], got {k}")

    starts = np.empty(n, dtype=np.intp)
    lo = 0
    top = n - 1 - k
    for i in range(n):
        if lo < i - k:
            lo = i - k
        while lo < top and lo < i and x[i] - x[lo] > x[lo + k + 1] - x[i]:
            lo += 1
        starts[i] = lo

    cols = starts[:, None] + np.arange(k + 1)[None, :]
    keep = cols != np.arange(n)[:, None]
    idx = cols[keep].reshape(n, k)
    return idx, x[idx] - x[:, None]


def select_stencil(ensemble, i: int, n_neighbors: int) -> Stencil:
    """Stencil of the ``n_neighbors`` nearest elements around element i.

    Draws neighbours one at a time, always taking the nearer of the next
    untaken element on either side and breaking exact ties toward the
    lower index.  On the ordered cloud the result is a contiguous window
    containing the centre.
    """
    x = np.asarray(ensemble.x, dtype=float)
    n = x.size
    if not 0 <= i < n:
        raise ValueError(f"center index {i} out of range for {n} elements")
    if not 1 <= n_neighbors <= n - 1:
        raise ValueError(
            f"n_neighbors must be in [1, {n - 1}], got {n_neighbors}"
        )
    lo, hi = i - 1, i + 1
    for _ in range(n_neighbors):
        if lo < 0:
            hi += 1
        elif hi >= n:
            lo -= 1
        elif x[i] - x[lo] <= x[hi] - x[i]:
            lo -= 1
        else:
            hi += 1
    members = np.concatenate([np.arange(lo + 1, i), np.arange(i + 1, hi)])
    return Stencil(
        center_index=i,
        neighbor_indices=members,
        offsets=x[members] - x[i],
    )


def gaussian_weights(offsets) -> np.ndarray:
    """Distance weights exp(-ln(100) r^2 / r_max^2), 0.01 at the edge."""
    r = np.abs(np.asarray(offsets, dtype=float))
    rmax = r.max(axis=-1, keepdims=True)
    if np.any(rmax <= 0.0):
        raise ValueError("offsets must contain a nonzero entry")
    u = r / rmax
    return np.exp(-_LN_INV_EDGE * u * u)


@lru_cache(maxsize=None)
def _factorials(order: int) -> np.ndarray:
    return np.array([math.factorial(p) for p in range(order + 1)], dtype=float)


def _hermite_rows(y: np.ndarray, order: int) -> np.ndarray:
    """Physicists' Hermite values H_0..H_order at y, stacked on axis 0."""
    out = np.empty((order + 1,) + y.shape)
    out[0] = np.ones_like(y)
    if order >= 1:
        out[1] = 2.0 * y
    for p in range(1, order):
        out[p + 1] = 2.0 * y * out[p] - 2.0 * p * out[p - 1]
    return out


@lru_cache(maxsize=None)
def _hermite_zero_values(order: int) -> np.ndarray:
    return _hermite_rows(np.zeros(()), order).reshape(order + 1)


@lru_cache(maxsize=None)
def _hermite_jet_matrix(order: int) -> np.ndarray:
    """B[k-1, p-1] = k-th derivative of H_p at 0, for k, p in 1..order.

    Follows from H_p' = 2p H_{p-1}, so H_p^(k)(0) = 2^k p!/(p-k)! H_{p-k}(0).
    """
    h0 = _hermite_zero_values(order)
    fact = _factorials(order)
    B = np.zeros((order, order))
    for k in range(1, order + 1):
        for p in range(k, order + 1):
            B[k - 1, p - 1] = 2.0**k * fact[p] / fact[p - k] * h0[p - k]
    return B


def _design(offsets: np.ndarray, basis: BasisSpec):
    """Design matrix columns P_p(s) and the jet-conversion data.

    Returns ``(P, convert)`` where P has shape offsets.shape + (order,)
    and ``convert(coeffs)`` maps fitted coefficients to derivative jets.
    """
    order = basis.order
    if basis.family == MONOMIAL:
        fact = _factorials(order)
        P = np.stack(
            [offsets**p / fact[p] for p in range(1, order + 1)], axis=-1
        )

        def convert(coeffs: np.ndarray) -> np.ndarray:
            return coeffs

        return P, convert

    scale = np.abs(offsets).max(axis=-1, keepdims=True)
    y = offsets / scale
    H = _hermite_rows(y, order)
    h0 = _hermite_zero_values(order)
    P = np.stack(
        [H[p] - h0[p] for p in range(1, order + 1)], axis=-1
    )
    B = _hermite_jet_matrix(order)
    powers = scale[..., None] ** np.arange(1, order + 1)

    def convert(coeffs: np.ndarray) -> np.ndarray:
        return np.einsum("kp,...p->...k", B, coeffs) / powers[..., 0, :]

    return P, convert


def _solve(design: np.ndarray, rhs: np.ndarray, weights: np.ndarray, cutoff: float):
    """Weighted truncated-SVD least squares, batched over leading axes.

    Solves the weighted normal-equation problem: each point's squared
    residual carries its weight, min sum_j w_j (P a - f)_j^2, realised
    by scaling rows with sqrt(w) before the SVD.
    """
    sqw = np.sqrt(weights)
    A = design * sqw[..., None]
    b = rhs * sqw
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    smax = s[..., :1]
    keep = s > cutoff * smax
    rank = keep.sum(axis=-1)
    safe = np.where(s > 0.0, s, 1.0)
    sinv = np.where(keep, 1.0 / safe, 0.0)
    proj = np.einsum("...kp,...k->...p", U, b)
    coeffs = np.einsum("...pq,...p->...q", Vt, sinv * proj)
    resid = b - np.einsum("...kp,...p->...k", A, coeffs)
    chi2 = np.sum(resid * resid, axis=-1)
    smin = s[..., -1]
    cond = np.where(smin > 0.0, smax[..., 0] / np.where(smin > 0.0, smin, 1.0), np.inf)
    return coeffs, chi2, cond, rank


def fit_local_polynomial(
    values, center_value: float, stencil: Stencil, basis: BasisSpec,
    svd_cutoff: float = 1e-10,
) -> FitResult:
    """Fit the local model to neighbour samples and return the jet.

    ``values`` holds the field at the stencil neighbours, aligned with
    ``stencil.offsets``; ``center_value`` is the field at the centre and
    is subtracted so the fit passes through the centre exactly.
    """
    f = np.asarray(values, dtype=float)
    if f.shape != stencil.offsets.shape:
        raise ValueError("values must align with the stencil offsets")
    if f.size < basis.order:
        raise ValueError(
            f"{f.size} neighbours cannot determine an order-{basis.order} fit"
        )
    P, convert = _design(stencil.offsets, basis)
    w = gaussian_weights(stencil.offsets)
    coeffs, chi2, cond, rank = _solve(P, f - center_value, w, svd_cutoff)
    if rank < basis.order:
        raise DegenerateStencilError(
            f"stencil at element {stencil.center_index} is rank deficient "
            f"({int(rank)}/{basis.order}, condition {float(cond):.3e})",
            center_index=stencil.center_index,
        )
    return FitResult(
        derivatives=convert(coeffs),
        chi2=float(chi2),
        condition=float(cond),
        rank=int(rank),
    )


def fit_batch(offsets: np.ndarray, values: np.ndarray, basis: BasisSpec,
              svd_cutoff: float = 1e-10):
    """Independent local fits for every row of a stencil table.

    ``offsets`` has shape (n, k); ``values`` holds the centre-subtracted
    field at the corresponding neighbours.  Returns ``(jets, chi2,
    condition, rank)`` with jets of shape (n, order).  Any rank-deficient
    row raises :class:`DegenerateStencilError` naming the first offender.
    """
    P, convert = _design(offsets, basis)
    w = gaussian_weights(offsets)
    coeffs, chi2, cond, rank = _solve(P, values, w, svd_cutoff)
    if np.any(rank < basis.order):
        bad = int(np.argmax(rank < basis.order))
        raise DegenerateStencilError(
            f"stencil at element {bad} is rank deficient "
            f"({int(rank[bad])}/{basis.order}, condition {float(cond[bad]):.3e})",
            center_index=bad,
        )
    return convert(coeffs), chi2, cond, rank.astype(int)


def quantum_potential(g_fit: FitResult, system) -> float:
    """Quantum potential from the log-density jet at one element.

    With g = log rho,  Q = -(hbar^2 / 4m) (g'' + g'^2 / 2).
    """
    d = g_fit.derivatives
    if d.size < 2:
        raise ValueError("quantum potential needs the jet up to order 2")
    return float(
        -(system.hbar**2 / (4.0 * system.mass)) * (d[1] + 0.5 * d[0] ** 2)
    )


def quantum_force(g_fit: FitResult, system) -> float:
    """Quantum force -dQ/dx from the log-density jet at one element.

    -dQ/dx = (hbar^2 / 4m) (g''' + g' g'').
    """
    d = g_fit.derivatives
    if d.size < 3:
        raise ValueError("quantum force needs the jet up to order 3")
    return float(
        (system.hbar**2 / (4.0 * system.mass)) * (d[2] + d[0] * d[1])
    )


def velocity_divergence(v_fit: FitResult) -> float:
    """Flow divergence dv/dx at the centre (first jet entry)."""
    return float(v_fit.derivatives[0])


def shift_jet(derivatives, s: float) -> np.ndarray:
    """Translate a derivative jet a distance s from its centre.

    Treats the jet as the Taylor polynomial f(u) = sum_k d_k u^k / k!
    and returns the derivatives of that polynomial at u = s.  Used to
    probe fields at points between elements (for example the barrier
    top) from the nearest element's fit.
    """
    d = np.asarray(derivatives, dtype=float)
    p = d.size
    fact = _factorials(p)
    out = np.zeros(p)
    for j in range(1, p + 1):
        ks = np.arange(j, p + 1)
        out[j - 1] = float(np.sum(d[ks - 1] * s ** (ks - j) / fact[ks - j]))
    return out


def taylor_delta(derivatives, s: float) -> float:
    """Value change f(s) - f(0) implied by a derivative jet."""
    d = np.asarray(derivatives, dtype=float)
    ks = np.arange(1, d.size + 1)
    return float(np.sum(d * s**ks / _factorials(d.size)[1:]))
