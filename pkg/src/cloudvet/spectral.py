"""KNN graph construction, normalized Laplacian spectra, low-pass smoothing, and
canonical PCA / unit-cube normalization of point clouds."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .cloud import PointCloud
from .errors import DegenerateGeometryError, DegenerateGraphError

SPECTRUM_TOL = 1e-8
SYMMETRY_TOL = 1e-10


def pairwise_sq_dists(points: np.ndarray) -> np.ndarray:
    """Dense matrix of squared Euclidean distances, exactly symmetric.

    Uses the Gram-matrix identity with the squared norms taken from the Gram
    diagonal, so duplicate points get an exact zero distance.
    """
    gram = points @ points.T
    sq = np.diagonal(gram)
    d2 = sq[:, None] + sq[None, :] - 2.0 * gram
    np.maximum(d2, 0.0, out=d2)
    return d2


def _knn_from_sq_dists(d2: np.ndarray, k: int) -> np.ndarray:
    """First k columns of the stable argsort of each row (self excluded by the
    caller via an inf diagonal): ties broken by ascending distance then index."""
    n = d2.shape[0]
    if k >= n - 1:
        order = np.argsort(d2, axis=1, kind="stable")
        return order[:, :k]
    cand = np.argpartition(d2, k - 1, axis=1)[:, :k]
    vals = np.take_along_axis(d2, cand, axis=1)
    kth = vals.max(axis=1)
    # lexsort: primary key distance, secondary key index -> stable tie order
    inner = np.lexsort((cand, vals), axis=1)
    out = np.take_along_axis(cand, inner, axis=1)
    # rows where values tied at the cut need exact repair (partition picks an
    # arbitrary subset among equals)
    tied = np.flatnonzero((d2 <= kth[:, None]).sum(axis=1) > k)
    for r in tied:
        idx = np.flatnonzero(d2[r] <= kth[r])
        idx = idx[np.lexsort((idx, d2[r, idx]))]
        out[r] = idx[:k]
    return out


def knn_indices(cloud: PointCloud, k: int) -> np.ndarray:
    """(N, k) indices of each point's k nearest neighbors, excluding the point
    itself; deterministic with ties broken by distance then ascending index."""
    n = len(cloud)
    if not 1 <= k <= n - 1:
        raise ValueError(f"k must be in [1, N-1] = [1, {n - 1}], got {k}")
    d2 = pairwise_sq_dists(cloud.points)
    np.fill_diagonal(d2, np.inf)
    return _knn_from_sq_dists(d2, k)


@dataclass
class NeighborGraph:
    """Symmetrized Gaussian-weighted KNN graph over a cloud."""

    neighbors: list[np.ndarray]
    weights: np.ndarray
    alpha: float


def build_adjacency(cloud: PointCloud, kg: int) -> NeighborGraph:
    """Union-symmetrized KNN support with Gaussian weights exp(-d^2 / (2*alpha)).

    The bandwidth alpha is the mean squared edge length over the symmetrized
    support, computed before the weights are filled in (the support itself does
    not depend on alpha). The result equals the elementwise max of the directed
    KNN weight matrix and its transpose.
    """
    n = len(cloud)
    if not 1 <= kg <= n - 1:
        raise ValueError(f"kg must be in [1, N-1] = [1, {n - 1}], got {kg}")
    d2 = pairwise_sq_dists(cloud.points)
    d2_inf = d2.copy()
    np.fill_diagonal(d2_inf, np.inf)
    knn = _knn_from_sq_dists(d2_inf, kg)

    support = np.zeros((n, n), dtype=bool)
    support[np.repeat(np.arange(n), kg), knn.ravel()] = True
    np.logical_or(support, support.T, out=support)

    edge_d2 = d2[support]
    alpha = float(edge_d2.sum() / support.sum())
    if alpha <= 0.0:
        raise DegenerateGeometryError("all points coincident: zero graph bandwidth")

    weights = np.zeros((n, n))
    weights[support] = np.exp(-edge_d2 / (2.0 * alpha))
    neighbors = [np.flatnonzero(support[i]) for i in range(n)]
    return NeighborGraph(neighbors=neighbors, weights=weights, alpha=alpha)


def normalized_laplacian(graph: NeighborGraph) -> np.ndarray:
    """L = I - D^(-1/2) A D^(-1/2), symmetrized numerically; spectrum in [0, 2]."""
    degrees = graph.weights.sum(axis=1)
    if np.any(degrees <= 0.0):
        raise DegenerateGraphError("graph has a zero-degree node")
    inv_sqrt = 1.0 / np.sqrt(degrees)
    lap = -graph.weights * inv_sqrt[:, None] * inv_sqrt[None, :]
    np.fill_diagonal(lap, 1.0)
    return (lap + lap.T) / 2.0


@dataclass
class SpectralBasis:
    """Eigendecomposition of a symmetric matrix, eigenvalues ascending."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def eig_sym(matrix: np.ndarray) -> SpectralBasis:
    """Full eigendecomposition of a symmetric matrix (ascending eigenvalues,
    orthonormal eigenvectors)."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {matrix.shape}")
    if not np.isfinite(matrix).all():
        raise ValueError("matrix contains non-finite entries")
    asym = np.abs(matrix - matrix.T).max()
    if asym >= SYMMETRY_TOL:
        raise ValueError(f"matrix is not symmetric (max asymmetry {asym:.3e})")
    values, vectors = scipy.linalg.eigh(matrix, driver="evd", check_finite=False)
    return SpectralBasis(eigenvalues=values, eigenvectors=vectors)


def gft_smooth(cloud: PointCloud, basis: SpectralBasis, t: int) -> PointCloud:
    """Project coordinates onto the span of the first t eigenvectors.

    This is the low-pass smoothing producing the reference cloud: an orthogonal
    projection applied to each coordinate channel, preserving point count and
    order. For t close to N the complement projection (I - Q_hi Q_hi^T) is
    used, which is the same operator at a fraction of the cost.
    """
    n = len(cloud)
    if not 1 <= t <= n:
        raise ValueError(f"t must be in [1, N] = [1, {n}], got {t}")
    pts = cloud.points
    if t == n:
        smoothed = pts.copy()
    elif t > n // 2:
        q_hi = basis.eigenvectors[:, t:]
        smoothed = pts - q_hi @ (q_hi.T @ pts)
    else:
        q_lo = basis.eigenvectors[:, :t]
        smoothed = q_lo @ (q_lo.T @ pts)
    return PointCloud(smoothed, name=cloud.name)


@dataclass
class CanonicalFrame:
    """The similarity transform behind pca_unit_cube, reusable on other clouds."""

    centroid: np.ndarray
    axes: np.ndarray
    scale: float
    shift: np.ndarray


def canonical_frame(cloud: PointCloud) -> CanonicalFrame:
    """Canonical similarity transform of a cloud: principal axes ordered by
    descending variance, unit largest extent, bounding-box center (.5,.5,.5).

    Each axis sign is fixed so the projected coordinate of largest magnitude
    is positive; unlike a sign rule on the eigenvector entries, this is
    invariant under rigid rotation of the input.
    """
    pts = cloud.points
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    cov = centered.T @ centered
    _, vectors = np.linalg.eigh(cov)
    axes = vectors[:, ::-1]  # descending eigenvalue order
    rotated = centered @ axes
    lead = np.abs(rotated).argmax(axis=0)
    signs = np.sign(rotated[lead, np.arange(3)])
    signs[signs == 0] = 1.0
    axes = axes * signs
    rotated = rotated * signs

    lo, hi = rotated.min(axis=0), rotated.max(axis=0)
    extent = float((hi - lo).max())
    if extent <= 0.0:
        raise DegenerateGeometryError("cloud has zero extent; cannot normalize")
    scaled = rotated / extent
    lo, hi = scaled.min(axis=0), scaled.max(axis=0)
    shift = 0.5 - (lo + hi) / 2.0
    return CanonicalFrame(centroid=centroid, axes=axes, scale=extent, shift=shift)


def apply_frame(cloud: PointCloud, frame: CanonicalFrame) -> PointCloud:
    out = (cloud.points - frame.centroid) @ frame.axes / frame.scale + frame.shift
    return PointCloud(out, name=cloud.name)


def pca_unit_cube(cloud: PointCloud) -> PointCloud:
    """Canonically orient a cloud and normalize it into the unit cube.

    Centers at the centroid, rotates onto canonically signed principal axes,
    scales uniformly so the largest extent is 1, and recenters the bounding
    box at (0.5, 0.5, 0.5). Output lies in [0, 1]^3.
    """
    out = apply_frame(cloud, canonical_frame(cloud))
    np.clip(out.points, 0.0, 1.0, out=out.points)
    return out
