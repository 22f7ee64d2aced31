"""Semi-metrics between curves.

Two families are provided:

* ``DerivSpec``: L2 distance between ``order``-th derivatives of cubic B-spline
  least-squares fits of the curves (order 2 is the default used throughout);
* ``FpcaSpec``: Euclidean distance between functional principal component
  scores.

Both are induced by a seminorm on a finite-dimensional feature vector, so a
fitted semi-metric maps curves to features once and distances become plain
Euclidean distances between feature rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.interpolate import BSpline

from .dataset import Curve, Dataset

SPLINE_DEGREE = 3
GAUSS_NODES_PER_SPAN = 5


@dataclass(frozen=True)
class DerivSpec:
    order: int = 2
    n_basis: int | None = None

    def __post_init__(self):
        if self.order not in (0, 1, 2):
            raise ValueError("derivative order must be 0, 1 or 2")
        if self.n_basis is not None and self.n_basis < self.order + 4:
            raise ValueError(f"n_basis must be >= {self.order + 4} for order {self.order}")

    def basis_size(self, grid_size: int) -> int:
        if self.n_basis is not None:
            return self.n_basis
        return max(min(20, grid_size // 2), self.order + 4)

    def to_dict(self) -> dict:
        return {"kind": "deriv", "order": self.order, "n_basis": self.n_basis}


@dataclass(frozen=True)
class FpcaSpec:
    n_components: int

    def __post_init__(self):
        if self.n_components < 1:
            raise ValueError("n_components must be positive")

    def to_dict(self) -> dict:
        return {"kind": "fpca", "n_components": self.n_components}


SemiMetricSpec = DerivSpec | FpcaSpec


def spec_from_dict(d: dict) -> SemiMetricSpec:
    if d.get("kind", "deriv") == "deriv":
        return DerivSpec(int(d.get("order", 2)), d.get("n_basis"))
    return FpcaSpec(int(d["n_components"]))


class GridMismatch(ValueError):
    pass


def _check_same_grid(grid: NDArray, other: NDArray) -> None:
    if other.shape != grid.shape or not np.array_equal(other, grid):
        raise GridMismatch("curve grid differs from the grid of the fitted semi-metric")


@dataclass(frozen=True)
class BasisFit:
    """Cubic B-spline basis on a grid.

    ``design`` is the (grid, basis) collocation matrix, ``projector`` maps curve
    values to least-squares coefficients and ``gram`` holds the integrals
    ``int B_k^(m)(t) B_l^(m)(t) dt`` for derivative order ``order``.  ``root``
    holds the derivative basis at the quadrature nodes scaled by the square
    roots of the weights, so ``gram == root @ root.T``.
    """

    grid: NDArray
    knots: NDArray
    order: int
    design: NDArray
    projector: NDArray
    gram: NDArray
    root: NDArray

    @property
    def n_basis(self) -> int:
        return self.design.shape[1]

    def coefficients(self, values: NDArray) -> NDArray:
        return np.asarray(values, dtype=float) @ self.projector.T

    def features(self, curves: NDArray) -> NDArray:
        """Rows whose Euclidean distances equal the derivative semi-metric."""
        return self.coefficients(np.atleast_2d(curves)) @ self.root


def fit_spline_basis(grid, n_basis: int, order: int = 2) -> BasisFit:
    grid = np.asarray(grid, dtype=float)
    k = SPLINE_DEGREE
    if n_basis < k + 1 or grid.size < n_basis:
        raise ValueError(f"need grid length >= n_basis >= {k + 1}, got {grid.size} and {n_basis}")
    lo, hi = grid[0], grid[-1]
    breaks = np.linspace(lo, hi, n_basis - k + 1)
    knots = np.r_[[lo] * k, breaks, [hi] * k]
    design = BSpline.design_matrix(grid, knots, k).toarray()
    if np.linalg.matrix_rank(design) < n_basis:
        raise ValueError(f"design matrix is rank deficient: {n_basis} basis functions on {grid.size} points")
    projector = np.linalg.pinv(design)

    # Gauss-Legendre nodes on every knot span; exact for the piecewise
    # polynomial products of degree <= 2k.
    x, w = np.polynomial.legendre.leggauss(GAUSS_NODES_PER_SPAN)
    half = np.diff(breaks) / 2
    mid = (breaks[:-1] + breaks[1:]) / 2
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    basis = BSpline(knots, np.eye(n_basis), k)
    if order:
        basis = basis.derivative(order)
    vals = basis(nodes)
    # root @ root.T == gram; using the quadrature values directly keeps the
    # null space (polynomials of degree < order) exact up to rounding
    root = vals.T * np.sqrt(weights)[None, :]
    gram = root @ root.T
    return BasisFit(grid, knots, order, design, projector, gram, root)


@dataclass(frozen=True)
class FpcaFit:
    """Mean curve, eigenfunctions (columns, orthonormal under trapezoid weights)
    and eigenvalues of the empirical covariance operator."""

    grid: NDArray
    weights: NDArray
    mean: NDArray
    eigenfunctions: NDArray
    eigenvalues: NDArray
    total_variance: float

    @property
    def n_components(self) -> int:
        return self.eigenfunctions.shape[1]

    def scores(self, curves: NDArray) -> NDArray:
        centred = np.atleast_2d(curves) - self.mean
        return (centred * self.weights) @ self.eigenfunctions

    features = scores

    def explained_variance_ratio(self) -> NDArray:
        total = self.total_variance
        return self.eigenvalues / total if total > 0 else np.zeros_like(self.eigenvalues)


def trapezoid_weights(grid: NDArray) -> NDArray:
    grid = np.asarray(grid, dtype=float)
    dx = np.diff(grid)
    w = np.zeros_like(grid)
    w[:-1] += dx / 2
    w[1:] += dx / 2
    return w


def fit_fpca(train: Dataset | NDArray, n_components: int, grid=None) -> FpcaFit:
    if isinstance(train, Dataset):
        curves, grid = train.curves, train.grid
    else:
        curves = np.atleast_2d(np.asarray(train, dtype=float))
        if grid is None:
            raise ValueError("grid is required when fitting raw curves")
        grid = np.asarray(grid, dtype=float)
    n, m = curves.shape
    if n < 2:
        raise ValueError("FPCA needs at least two curves")
    if not 1 <= n_components <= min(n - 1, m):
        raise ValueError(f"n_components must lie in 1..{min(n - 1, m)}, got {n_components}")
    w = trapezoid_weights(grid)
    sw = np.sqrt(w)
    mean = curves.mean(axis=0)
    centred = curves - mean
    cov = centred.T @ centred / n
    evals, evecs = np.linalg.eigh(sw[:, None] * cov * sw[None, :])
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    eigenfunctions = evecs[:, :n_components] / sw[:, None]
    # fix signs so the largest-magnitude entry of each eigenfunction is positive
    idx = np.argmax(np.abs(eigenfunctions), axis=0)
    signs = np.sign(eigenfunctions[idx, np.arange(n_components)])
    eigenfunctions = eigenfunctions * np.where(signs == 0, 1.0, signs)
    return FpcaFit(grid, w, mean, eigenfunctions, np.clip(evals[:n_components], 0.0, None),
                   float(np.clip(evals, 0.0, None).sum()))


SemiMetricFit = BasisFit | FpcaFit


def fit_semimetric(spec: SemiMetricSpec, train: Dataset) -> SemiMetricFit:
    if isinstance(spec, DerivSpec):
        return fit_spline_basis(train.grid, spec.basis_size(train.grid.size), spec.order)
    return fit_fpca(train, spec.n_components)


def _values(curve, grid: NDArray) -> NDArray:
    if isinstance(curve, Curve):
        _check_same_grid(grid, curve.grid)
        return curve.values
    values = np.asarray(curve, dtype=float)
    if values.shape != grid.shape:
        raise GridMismatch("curve length differs from the fitted grid")
    return values


def distance(spec: SemiMetricSpec, fit: SemiMetricFit, a, b) -> float:
    """Semi-metric between two curves (``Curve`` objects or value arrays)."""
    _check_spec(spec, fit)
    fa = fit.features(_values(a, fit.grid))[0]
    fb = fit.features(_values(b, fit.grid))[0]
    return float(np.sqrt(np.sum((fa - fb) ** 2)))


def _check_spec(spec: SemiMetricSpec, fit: SemiMetricFit) -> None:
    if isinstance(spec, DerivSpec) != isinstance(fit, BasisFit):
        raise TypeError("semi-metric spec and fit are of different kinds")


def _feature_distances(fa: NDArray, fb: NDArray) -> NDArray:
    diff = fa[:, None, :] - fb[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def pairwise(spec: SemiMetricSpec, fit: SemiMetricFit, ds: Dataset) -> NDArray:
    """Symmetric ``n x n`` matrix of semi-metric distances with zero diagonal."""
    _check_spec(spec, fit)
    _check_same_grid(fit.grid, ds.grid)
    feats = fit.features(ds.curves)
    n = feats.shape[0]
    out = np.zeros((n, n))
    for i in range(n - 1):
        diff = feats[i + 1:] - feats[i]
        row = np.sqrt(np.sum(diff * diff, axis=1))
        out[i, i + 1:] = row
        out[i + 1:, i] = row
    return out


def distances_to(fit: SemiMetricFit, curves: NDArray, train_curves: NDArray) -> NDArray:
    """(len(curves), len(train_curves)) matrix of distances under a frozen fit."""
    return _feature_distances(fit.features(np.atleast_2d(curves)), fit.features(np.atleast_2d(train_curves)))


def save_distance_matrix(dm: NDArray, path) -> None:
    np.savetxt(path, dm, delimiter=",", fmt="%.17g")
