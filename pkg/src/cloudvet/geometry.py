"""Per-point geometric descriptors: surface normals, principal-curvature
features, and multi-scale normal-voting-tensor saliencies."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cloud import PointCloud
from .errors import DegenerateGeometryError
from .spectral import _knn_from_sq_dists, knn_indices, pairwise_sq_dists

FLAT_RATIO_TOL = 1e-12
FLAT_SPREAD_TOL = 1e-12


@dataclass
class GeometricFeatures:
    """Per-point descriptors of one cloud.

    normals: (N, 3) unit vectors; gauss_curv / mean_curv / curv_ratio: (N,)
    nonnegative scalars; nvt: three (N, 3) blocks of voting-tensor saliencies
    (stick, plate, ball) at neighborhood scales k, 2k, 3k.
    """

    normals: np.ndarray
    gauss_curv: np.ndarray
    mean_curv: np.ndarray
    curv_ratio: np.ndarray
    nvt: tuple[np.ndarray, np.ndarray, np.ndarray]


def _normals_from_neighbors(points: np.ndarray, neighbors: np.ndarray) -> np.ndarray:
    diffs = points[neighbors] - points[:, None, :]
    second_moment = np.einsum("nka,nkb->nab", diffs, diffs)
    flat = np.flatnonzero(np.einsum("naa->n", second_moment) == 0.0)
    if len(flat):
        # a heavily duplicated point can see only its own copies; give it the
        # neighborhood of its nearest non-coincident positions instead
        k = neighbors.shape[1]
        for i in flat:
            gaps = points - points[i]
            d2 = np.einsum("na,na->n", gaps, gaps)
            live = np.flatnonzero(d2 > 0.0)
            if len(live) < 2:
                raise DegenerateGeometryError(
                    "a point's neighbors all coincide with it; normals undefined")
            order = live[np.lexsort((live, d2[live]))][:k]
            d = points[order] - points[i]
            second_moment[i] = d.T @ d
    values, vectors = np.linalg.eigh(second_moment)
    if np.any(values[:, 2] <= 0.0):
        raise DegenerateGeometryError(
            "a point's neighbors all coincide with it; normals undefined")
    # cross product of the two dominant directions = the surface normal
    normals = np.cross(vectors[:, :, 2], vectors[:, :, 1])
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return _canonical_signs(normals)


def _canonical_signs(vectors: np.ndarray) -> np.ndarray:
    # flip each vector so its largest-magnitude component is positive
    lead = np.abs(vectors).argmax(axis=1)
    flip = vectors[np.arange(len(vectors)), lead] < 0.0
    vectors[flip] *= -1.0
    return vectors


def estimate_normals(cloud: PointCloud, kv: int) -> np.ndarray:
    """Unit surface normals from the uncentered neighborhood second moment,
    sign-fixed so each normal's largest-magnitude component is positive."""
    n = len(cloud)
    if not 2 <= kv <= n - 1:
        raise ValueError(f"kv must be in [2, N-1] = [2, {n - 1}], got {kv}")
    return _normals_from_neighbors(cloud.points, knn_indices(cloud, kv))


def _curvatures_from_neighbors(normals: np.ndarray, neighbors: np.ndarray):
    nb_normals = normals[neighbors]
    along = np.einsum("nka,na->nk", nb_normals, normals)
    projected = nb_normals - along[:, :, None] * normals[:, None, :]
    moment = np.einsum("nka,nkb->nab", projected, projected)
    values = np.linalg.eigvalsh(moment)
    np.maximum(values, 0.0, out=values)
    return values[:, 2], values[:, 1]


def principal_curvatures(cloud: PointCloud, normals: np.ndarray, kc: int):
    """Per-point (C1, C2): the two dominant eigenvalues of the second moment of
    the neighbor normals projected into the tangent plane. C1 >= C2 >= 0."""
    n = len(cloud)
    if not 2 <= kc <= n - 1:
        raise ValueError(f"kc must be in [2, N-1] = [2, {n - 1}], got {kc}")
    return _curvatures_from_neighbors(normals, knn_indices(cloud, kc))


def curvature_features(c1: np.ndarray, c2: np.ndarray):
    """(GC, MC, CR) = (C1*C2, (C1+C2)/2, min/max), with CR = 0 on flat regions."""
    c1 = np.asarray(c1, dtype=np.float64)
    c2 = np.asarray(c2, dtype=np.float64)
    if np.any(c2 < 0.0) or np.any(c1 < c2):
        raise ValueError("curvatures must satisfy C1 >= C2 >= 0")
    gauss = c1 * c2
    mean = (c1 + c2) / 2.0
    hi = np.maximum(np.abs(c1), np.abs(c2))
    lo = np.minimum(np.abs(c1), np.abs(c2))
    ratio = np.divide(lo, hi, out=np.zeros_like(hi), where=hi >= FLAT_RATIO_TOL)
    return gauss, mean, ratio


def _nvt_from_neighbors(normals: np.ndarray, neighbors: np.ndarray) -> np.ndarray:
    nb_normals = normals[neighbors]
    # folded gap 2 - 2|cos|: normals are unoriented, so the sign carried by the
    # per-point canonicalization must not influence the voting weights
    cos = np.einsum("na,nka->nk", normals, nb_normals)
    sq_gap = np.maximum(2.0 - 2.0 * np.abs(cos), 0.0)
    spread = sq_gap.mean(axis=1)
    # spread below tolerance means all neighborhood normals agree: weight 1
    safe = np.where(spread < FLAT_SPREAD_TOL, 1.0, spread)
    weights = np.where(spread[:, None] < FLAT_SPREAD_TOL, 1.0,
                       np.exp(-sq_gap / (2.0 * safe[:, None])))
    tensor = np.einsum("nk,nka,nkb->nab", weights, nb_normals, nb_normals)
    values = np.linalg.eigvalsh(tensor)
    np.maximum(values, 0.0, out=values)
    lam1, lam2, lam3 = values[:, 2], values[:, 1], values[:, 0]
    return np.column_stack([lam1 - lam2, lam2 - lam3, lam3])


def nvt_features(cloud: PointCloud, normals: np.ndarray, kn: int) -> np.ndarray:
    """(N, 3) voting-tensor saliency rows (stick, plate, ball).

    Each point's tensor sums the outer products of its kn spatial neighbors'
    normals, weighted by a Gaussian of the folded (orientation-free) normal
    gap whose bandwidth is the per-point mean squared gap.
    """
    n = len(cloud)
    if not 1 <= kn <= n - 1:
        raise ValueError(f"kn must be in [1, N-1] = [1, {n - 1}], got {kn}")
    return _nvt_from_neighbors(normals, knn_indices(cloud, kn))


def extract_geometric(cloud: PointCloud, params) -> GeometricFeatures:
    """Run the full per-point descriptor stack for one cloud.

    Normals at scale kv, curvature features at kc, voting tensors at kn, 2kn,
    and 3kn. All neighbor queries share one distance matrix.
    """
    n = len(cloud)
    if 3 * params.kn > n - 1:
        raise ValueError(
            f"3*kn = {3 * params.kn} must be <= N-1 = {n - 1} for the largest "
            "voting-tensor scale")
    max_k = max(params.kv, params.kc, 3 * params.kn)
    if max_k > n - 1 or min(params.kv, params.kc) < 2:
        raise ValueError(f"neighborhood sizes out of range for N = {n}")
    d2 = pairwise_sq_dists(cloud.points)
    np.fill_diagonal(d2, np.inf)
    order = _knn_from_sq_dists(d2, max_k)

    normals = _normals_from_neighbors(cloud.points, order[:, :params.kv])
    c1, c2 = _curvatures_from_neighbors(normals, order[:, :params.kc])
    gauss, mean, ratio = curvature_features(c1, c2)
    nvt = tuple(_nvt_from_neighbors(normals, order[:, :k])
                for k in (params.kn, 2 * params.kn, 3 * params.kn))
    return GeometricFeatures(normals=normals, gauss_curv=gauss, mean_curv=mean,
                             curv_ratio=ratio, nvt=nvt)
