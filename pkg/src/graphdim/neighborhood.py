"""k-nearest-neighbor search and local PCA charts."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from graphdim.errors import DegenerateNeighborhoodError, InvalidInputError
from graphdim.numerics import sym_eigen_desc

__all__ = [
    "PointCloud",
    "LocalChart",
    "as_cloud",
    "knn",
    "knn_table",
    "local_chart",
    "chart_from_indices",
    "nonconstant_index",
]

# rows of the distance matrix handled per block in knn_table
_BLOCK_BYTES = 32 * 2**20


@dataclass(frozen=True)
class PointCloud:
    """``n`` samples in ``R^p`` stored as an ``(n, p)`` float array."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2:
            raise InvalidInputError(f"points must be a 2-D array, got shape {pts.shape}")
        n, p = pts.shape
        if n < 2 or p < 2:
            raise InvalidInputError(f"a point cloud needs n >= 2 and p >= 2, got n={n}, p={p}")
        if not np.all(np.isfinite(pts)):
            raise InvalidInputError("point cloud contains non-finite coordinates")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def p(self) -> int:
        return self.points.shape[1]


def as_cloud(data) -> PointCloud:
    return data if isinstance(data, PointCloud) else PointCloud(np.asarray(data, dtype=float))


@dataclass(frozen=True)
class LocalChart:
    """One neighborhood expressed in its own principal coordinates.

    ``coords`` has ``K + 1`` rows: row 0 is the center point, rows 1..K are
    the neighbors in ``neighbor_indices`` order.
    """

    center_index: int
    neighbor_indices: np.ndarray
    mean: np.ndarray
    basis: np.ndarray
    eigenvalues: np.ndarray
    coords: np.ndarray

    @property
    def K(self) -> int:
        return len(self.neighbor_indices)

    @property
    def p(self) -> int:
        return self.coords.shape[1]


def _check_k(n: int, K: int) -> None:
    if not 1 <= K <= n - 1:
        raise InvalidInputError(f"K must satisfy 1 <= K <= n - 1 = {n - 1}, got {K}")


def _sq_dists(block: np.ndarray, pts: np.ndarray) -> np.ndarray:
    # explicit differences keep distances exact under permutations of storage order
    diff = block[:, None, :] - pts[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def knn_table(cloud, K: int) -> np.ndarray:
    """Neighbor indices for every point, shape ``(n, K)``.

    Row ``k`` lists the ``K`` nearest other points to ``x_k`` by Euclidean
    distance; equal distances are ordered by ascending point index.
    """
    cloud = as_cloud(cloud)
    pts = cloud.points
    n, p = pts.shape
    _check_k(n, K)
    out = np.empty((n, K), dtype=np.intp)
    rows_per_block = max(1, _BLOCK_BYTES // (8 * n * p))
    for start in range(0, n, rows_per_block):
        stop = min(n, start + rows_per_block)
        d2 = _sq_dists(pts[start:stop], pts)
        d2[np.arange(stop - start), np.arange(start, stop)] = np.inf
        order = np.argsort(d2, axis=1, kind="stable")
        out[start:stop] = order[:, :K]
    return out


def knn(cloud, k_index: int, K: int) -> np.ndarray:
    """Indices of the ``K`` nearest neighbors of point ``k_index`` (self excluded)."""
    cloud = as_cloud(cloud)
    pts = cloud.points
    n = pts.shape[0]
    _check_k(n, K)
    if not 0 <= k_index < n:
        raise InvalidInputError(f"k_index {k_index} out of range for n={n}")
    d2 = _sq_dists(pts[k_index:k_index + 1], pts)[0]
    d2[k_index] = np.inf
    return np.argsort(d2, kind="stable")[:K]


def chart_from_indices(points: np.ndarray, center_index: int, neighbor_indices) -> LocalChart:
    """Build the PCA chart of ``points[center_index]`` plus the given neighbors."""
    neighbor_indices = np.asarray(neighbor_indices, dtype=np.intp)
    K = len(neighbor_indices)
    local = np.vstack([points[center_index][None, :], points[neighbor_indices]])
    mean = local.mean(axis=0)
    centered = local - mean
    cov = centered.T @ centered / K
    if not np.any(cov):
        raise DegenerateNeighborhoodError(
            f"neighborhood of point {center_index} has zero covariance (all {K + 1} points coincide)"
        )
    eig = sym_eigen_desc(cov)
    coords = centered @ eig.eigenvectors
    return LocalChart(
        center_index=int(center_index),
        neighbor_indices=neighbor_indices,
        mean=mean,
        basis=eig.eigenvectors,
        eigenvalues=eig.eigenvalues,
        coords=coords,
    )


def local_chart(cloud, k_index: int, K: int) -> LocalChart:
    cloud = as_cloud(cloud)
    return chart_from_indices(cloud.points, k_index, knn(cloud, k_index, K))


def nonconstant_index(chart: LocalChart, rel_tol: float = 1e-8) -> int:
    """Largest 1-based coordinate index whose spread is not negligible.

    A column counts as nonconstant when its standard deviation exceeds
    ``rel_tol`` times that of the first principal coordinate. Returns 0 when
    the first coordinate itself has zero spread.
    """
    if rel_tol <= 0:
        raise InvalidInputError(f"rel_tol must be positive, got {rel_tol}")
    stds = chart.coords.std(axis=0)
    if not stds[0] > 0:
        return 0
    above = np.nonzero(stds > rel_tol * stds[0])[0]
    return int(above[-1]) + 1
