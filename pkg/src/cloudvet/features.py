"""Residual feature extraction: calibrate a cloud's geometric descriptors
against its smoothed reference and summarize the residuals as a fixed-length
statistics vector."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cloud import PointCloud
from .geometry import GeometricFeatures, extract_geometric
from .spectral import (apply_frame, build_adjacency, canonical_frame, eig_sym,
                       gft_smooth, normalized_laplacian)

FEATURE_DIM = 78
PHI_COLUMNS = (
    "normal_angle", "gauss_curv", "mean_curv", "curv_ratio",
    "stick_k", "plate_k", "ball_k",
    "stick_2k", "plate_2k", "ball_2k",
    "stick_3k", "plate_3k", "ball_3k",
)
STATS = ("min", "max", "mean", "variance", "skewness", "kurtosis")


@dataclass(frozen=True)
class PipelineParams:
    """The five pipeline hyperparameters plus numerical policy constants.

    The smoothing cutoff is expressed as an offset from the cloud size
    (t = N - t_offset) so one configuration serves clouds of any size.
    """

    t_offset: int = 20
    kg: int = 3
    kv: int = 3
    kc: int = 3
    kn: int = 3
    log_epsilon: float = 1e-10
    moment_epsilon: float = 1e-12

    def __post_init__(self):
        for name in ("t_offset", "kg", "kv", "kc", "kn"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ValueError(f"{name} must be an integer >= 1, got {value!r}")
        if not self.log_epsilon > 0.0:
            raise ValueError("log_epsilon must be positive")
        if not self.moment_epsilon > 0.0:
            raise ValueError("moment_epsilon must be positive")


# default parameter tuples per synthetic attack family
PRESETS = {
    "perturb": PipelineParams(t_offset=20, kg=3, kv=3, kc=3, kn=3),
    "add": PipelineParams(t_offset=20, kg=6, kv=3, kc=3, kn=3),
    "remove": PipelineParams(t_offset=20, kg=5, kv=5, kc=5, kn=4),
}


@dataclass
class CalibratedFeatures:
    """N x 13 matrix of nonnegative per-point residuals, fixed column order."""

    phi: np.ndarray

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=np.float64)
        if phi.ndim != 2 or phi.shape[1] != len(PHI_COLUMNS):
            raise ValueError(f"phi must have shape (N, {len(PHI_COLUMNS)}), got {phi.shape}")
        if not np.isfinite(phi).all():
            raise ValueError("phi contains non-finite entries")
        if np.any(phi < 0.0):
            raise ValueError("phi entries must be nonnegative")
        self.phi = phi


def calibrate(feat: GeometricFeatures, feat_ref: GeometricFeatures) -> CalibratedFeatures:
    """Residuals of a cloud's descriptors against its reference counterpart.

    The normal column is the folded angle arccos(|n . n'|) in [0, pi/2], which
    is insensitive to the arbitrary orientation of either normal. It is
    evaluated through the chord length 2*arcsin(min(|n-n'|, |n+n'|)/2), the
    numerically stable equivalent: identical normals give an exact zero and
    orthogonal ones an exact pi/2, with no arccos noise floor near 0. All
    other columns are elementwise absolute differences.
    """
    if feat.normals.shape != feat_ref.normals.shape:
        raise ValueError(
            f"feature sets disagree on cloud size: {feat.normals.shape[0]} vs "
            f"{feat_ref.normals.shape[0]}")
    chord = np.minimum(np.linalg.norm(feat.normals - feat_ref.normals, axis=1),
                       np.linalg.norm(feat.normals + feat_ref.normals, axis=1))
    angle = 2.0 * np.arcsin(np.clip(chord / 2.0, 0.0, 1.0))
    columns = [angle,
               np.abs(feat.gauss_curv - feat_ref.gauss_curv),
               np.abs(feat.mean_curv - feat_ref.mean_curv),
               np.abs(feat.curv_ratio - feat_ref.curv_ratio)]
    for block, block_ref in zip(feat.nvt, feat_ref.nvt):
        columns.append(np.abs(block - block_ref))
    return CalibratedFeatures(np.column_stack(columns))


def nonlinear_map(phi: CalibratedFeatures, log_epsilon: float = 1e-10,
                  moment_epsilon: float = 1e-12) -> np.ndarray:
    """Log-transform the residual matrix and summarize each column by six
    statistics: min, max, mean, variance, skewness, kurtosis.

    Moments are population moments; kurtosis is non-excess. Columns whose
    standard deviation falls below moment_epsilon get skewness = kurtosis = 0.
    Output slots 6j..6j+5 hold column j's statistics (length 78).
    """
    logged = np.log(phi.phi + log_epsilon)
    lo = logged.min(axis=0)
    hi = logged.max(axis=0)
    mean = logged.mean(axis=0)
    # an exactly constant column has exact statistics; skip the accumulation
    # noise the reductions would otherwise introduce
    constant = lo == hi
    mean = np.where(constant, lo, mean)
    centered = logged - mean
    var = np.where(constant, 0.0, np.mean(centered ** 2, axis=0))
    std = np.sqrt(var)
    live = std >= moment_epsilon
    safe = np.where(live, std, 1.0)
    z = centered / safe
    skew = np.where(live, np.mean(z ** 3, axis=0), 0.0)
    kurt = np.where(live, np.mean(z ** 4, axis=0), 0.0)
    table = np.column_stack([lo, hi, mean, var, skew, kurt])
    return table.reshape(-1)


def extract_feature_vector(cloud: PointCloud, params: PipelineParams) -> np.ndarray:
    """End-to-end map from a point cloud to its 78-dimensional residual
    statistics vector.

    Builds the smoothing graph on the raw cloud, low-pass projects the
    coordinates to obtain the reference cloud, canonically normalizes both,
    extracts geometric descriptors from each, calibrates, and applies the
    nonlinear statistics map. Fully deterministic.
    """
    n = len(cloud)
    if params.t_offset >= n:
        raise ValueError(
            f"t_offset = {params.t_offset} must be < N = {n} so the smoothing "
            "keeps at least one spectral component")
    graph = build_adjacency(cloud, params.kg)
    basis = eig_sym(normalized_laplacian(graph))
    reference = gft_smooth(cloud, basis, n - params.t_offset)
    return _feature_vector_against_reference(cloud, reference, params)


def _feature_vector_against_reference(cloud: PointCloud, reference: PointCloud,
                                      params: PipelineParams) -> np.ndarray:
    # Shared tail of the pipeline; also the hook for zero-residual checks.
    # Both clouds are normalized in the input cloud's canonical frame: every
    # descriptor except the normal-angle column is invariant to that choice,
    # and a shared frame keeps the angle column free of the arbitrary relative
    # rotation/reflection that independent normalization of near-symmetric
    # clouds would inject.
    frame = canonical_frame(cloud)
    normed = apply_frame(cloud, frame)
    normed_ref = apply_frame(reference, frame)
    feat = extract_geometric(normed, params)
    feat_ref = extract_geometric(normed_ref, params)
    phi = calibrate(feat, feat_ref)
    return nonlinear_map(phi, params.log_epsilon, params.moment_epsilon)


@dataclass(frozen=True)
class FeatureRow:
    vector: np.ndarray
    label: str
    source: str
    pair_id: str | None = None


def feature_csv_text(rows) -> str:
    """Render labeled feature vectors as CSV: f0..f77,label,source[,pair_id].

    Values are written in shortest round-trip decimal form; the pair_id column
    is present only when at least one row carries a pair id.
    """
    rows = list(rows)
    with_pairs = any(r.pair_id is not None for r in rows)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = [f"f{i}" for i in range(FEATURE_DIM)] + ["label", "source"]
    if with_pairs:
        header.append("pair_id")
    writer.writerow(header)
    for r in rows:
        vec = np.asarray(r.vector, dtype=np.float64)
        if vec.shape != (FEATURE_DIM,):
            raise ValueError(f"feature vector must have shape ({FEATURE_DIM},), got {vec.shape}")
        record = [repr(float(v)) for v in vec] + [r.label, r.source]
        if with_pairs:
            record.append("" if r.pair_id is None else r.pair_id)
        writer.writerow(record)
    return buf.getvalue()


def write_feature_csv(rows, path) -> None:
    Path(path).write_text(feature_csv_text(rows), encoding="utf-8")


def read_feature_csv(path) -> list[FeatureRow]:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty feature CSV")
        expected = [f"f{i}" for i in range(FEATURE_DIM)] + ["label", "source"]
        if header[:len(expected)] != expected:
            raise ValueError(f"{path}: unexpected feature CSV header")
        has_pairs = len(header) > len(expected) and header[len(expected)] == "pair_id"
        rows = []
        for record in reader:
            if not record:
                continue
            vec = np.array([float(v) for v in record[:FEATURE_DIM]], dtype=np.float64)
            label = record[FEATURE_DIM]
            source = record[FEATURE_DIM + 1]
            pair_id = record[FEATURE_DIM + 2] if has_pairs and len(record) > FEATURE_DIM + 2 else None
            rows.append(FeatureRow(vector=vec, label=label, source=source,
                                   pair_id=pair_id or None))
    return rows
