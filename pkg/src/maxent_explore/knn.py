"""Exact k-nearest-neighbor queries over a batch of points.

A KD-tree proposes candidates; distances are then recomputed locally and
ties at the neighborhood boundary are resolved by rescanning the affected
rows against the full point set. This keeps queries exact and fully
deterministic: ties on equal distance always go to the lowest index.

The index is immutable after construction; concurrent read-only queries
are safe (tree queries run single-threaded).
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .specials import log_gamma


@dataclass(frozen=True)
class NeighborResult:
    """Exact k-NN sets and radii for every point in the indexed set.

    indices[i] holds the k nearest neighbors of point i (never i itself),
    sorted by (distance, index); radii[i] is the distance to the k-th one.
    """

    indices: np.ndarray  # (N, k) int64
    radii: np.ndarray    # (N,) float64
    k: int


class NeighborIndex:
    """Spatial index over an (N, p) point set."""

    def __init__(self, points: np.ndarray):
        points = np.ascontiguousarray(np.asarray(points, dtype=np.float64))
        if points.ndim != 2:
            raise ValueError(f"points must be 2-D (N, p), got shape {points.shape}")
        n, p = points.shape
        if n < 2:
            raise ValueError(f"need at least 2 points, got {n}")
        if p < 1:
            raise ValueError("point dimension must be >= 1")
        if not np.isfinite(points).all():
            raise ValueError("points contain non-finite coordinates")
        points.setflags(write=False)
        self.points = points
        self.n = n
        self.p = p
        self._tree = cKDTree(points)

    def query(self, k: int) -> NeighborResult:
        return knn_query(self, k)


def build_index(points: np.ndarray) -> NeighborIndex:
    """Build an exact-query spatial index over the point set."""
    return NeighborIndex(points)


def _row_distances(points: np.ndarray, i: int) -> np.ndarray:
    diff = points - points[i]
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


def _brute_force_row(points: np.ndarray, i: int, k: int):
    d = _row_distances(points, i)
    idx = np.arange(points.shape[0])
    mask = idx != i
    d, idx = d[mask], idx[mask]
    order = np.lexsort((idx, d))[:k]
    return idx[order], d[order]


def _sort_candidates(cand: np.ndarray, dist: np.ndarray):
    """Order each candidate row by (distance, index): index-ascending
    first, then a stable distance sort, so equal distances keep ascending
    index order."""
    order = np.argsort(cand, axis=1, kind="stable")
    cand = np.take_along_axis(cand, order, axis=1)
    dist = np.take_along_axis(dist, order, axis=1)
    order = np.argsort(dist, axis=1, kind="stable")
    return (np.take_along_axis(cand, order, axis=1),
            np.take_along_axis(dist, order, axis=1))


def _exact_rows(points: np.ndarray, rows: np.ndarray, k: int,
                indices_out: np.ndarray, radii_out: np.ndarray,
                chunk_rows: int = 256, pad: int = 64) -> None:
    """Exact tie-aware k-NN for the given query rows, written in place.

    Distances to all points are recomputed with the same arithmetic as
    `_brute_force_row`; a partition keeps the k+pad closest candidates and
    rows whose boundary tie could extend past the pad fall back to the
    per-row scan (only huge duplicate clusters hit that path).
    """
    n = points.shape[0]
    keep = min(k + pad, n)
    for start in range(0, rows.shape[0], chunk_rows):
        chunk = rows[start:start + chunk_rows]
        diff = points[chunk][:, None, :] - points[None, :, :]
        dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        dist[np.arange(chunk.shape[0]), chunk] = np.inf  # exclude self
        if keep < n:
            part = np.argpartition(dist, keep - 1, axis=1)[:, :keep]
        else:
            part = np.broadcast_to(np.arange(n), (chunk.shape[0], n)).copy()
        dpart = np.take_along_axis(dist, part, axis=1)
        cand, dst = _sort_candidates(part, dpart)
        indices_out[chunk] = cand[:, :k]
        radii_out[chunk] = dst[:, k - 1]
        if keep < n:
            # a tie at the k-th distance reaching the end of the kept set
            # means true ties may have been dropped by the partition
            unresolved = dst[:, k - 1] == dst[:, -1]
            for i in chunk[unresolved]:
                idx_i, d_i = _brute_force_row(points, int(i), k)
                indices_out[i] = idx_i
                radii_out[i] = d_i[-1]


def _resolve_candidates(points, rows, cand, k, indices_out, radii_out):
    """Resolve k-NN rows from tree candidates; returns still-ambiguous rows.

    Distances are recomputed locally so ordering and radii never depend on
    the tree's internal arithmetic. A row stays ambiguous when its k-th
    distance ties with the furthest candidate: the tree may then have
    dropped equally-near points that a lowest-index tie-break must see.
    """
    m = cand.shape[1]
    n = points.shape[0]
    diff = points[cand] - points[rows, None, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    self_mask = cand == rows[:, None]
    dist[self_mask] = np.inf  # self sorts last and is dropped

    cand, dist = _sort_candidates(cand, dist)
    indices_out[rows] = cand[:, :k]
    radii_out[rows] = dist[:, k - 1]

    if m == n:
        return rows[:0]  # full candidate set: exact by construction
    n_real = m - self_mask.any(axis=1)  # non-self candidates per row
    last_real = np.take_along_axis(dist, n_real[:, None] - 1, axis=1)[:, 0]
    ambiguous = dist[:, k - 1] == last_real
    return rows[ambiguous]


def knn_query(index: NeighborIndex, k: int) -> NeighborResult:
    """Exact k nearest neighbors of every indexed point, self excluded.

    Ties on equal distance are broken by lowest index, so the result is a
    deterministic function of the point set and k. Rows whose neighbor set
    is not pinned down by the first candidate pass (duplicate-heavy data)
    are re-queried with progressively wider candidate lists.
    """
    n, points = index.n, index.points
    if not 1 <= k <= n - 1:
        raise ValueError(f"k must be in [1, N-1] = [1, {n - 1}], got {k}")

    indices = np.empty((n, k), dtype=np.int64)
    radii = np.empty(n, dtype=np.float64)

    # Candidate search: k+2 columns so self plus one boundary probe fit.
    m = min(k + 2, n)
    _, cand = index._tree.query(points, k=m, workers=1)
    rows = _resolve_candidates(points, np.arange(n), cand.reshape(n, m), k,
                               indices, radii)

    for extra in (64, 512):  # widen for boundary ties (duplicate clusters)
        if rows.size == 0 or m == n:
            break
        m = min(k + 2 + extra, n)
        _, cand = index._tree.query(points[rows], k=m, workers=1)
        rows = _resolve_candidates(points, rows, cand.reshape(rows.size, m), k,
                                   indices, radii)
    if rows.size:
        _exact_rows(points, rows, k, indices, radii)

    return NeighborResult(indices=indices, radii=radii, k=k)


def knn_brute_force(points: np.ndarray, k: int) -> NeighborResult:
    """O(N^2) reference scan with the same (distance, index) ordering."""
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if not 1 <= k <= n - 1:
        raise ValueError(f"k must be in [1, N-1] = [1, {n - 1}], got {k}")
    indices = np.empty((n, k), dtype=np.int64)
    radii = np.empty(n, dtype=np.float64)
    for i in range(n):
        idx_i, d_i = _brute_force_row(points, i, k)
        indices[i] = idx_i
        radii[i] = d_i[-1]
    return NeighborResult(indices=indices, radii=radii, k=k)


def log_unit_ball_volume(p: int) -> float:
    """ln of the volume of the unit ball in R^p."""
    if p < 1:
        raise ValueError("dimension must be >= 1")
    return 0.5 * p * math.log(math.pi) - log_gamma(0.5 * p + 1.0)


def sphere_volume(radius: float, p: int) -> float:
    """Volume of the radius-r ball in R^p: r^p pi^(p/2) / Gamma(p/2 + 1)."""
    if radius < 0:
        raise ValueError("radius must be non-negative")
    if radius == 0.0:
        return 0.0
    return math.exp(p * math.log(radius) + log_unit_ball_volume(p))
