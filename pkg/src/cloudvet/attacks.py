"""Synthetic attack simulators: point perturbation, point adding, and point
removing. These stand in for real adversarial generators so the detector can
be exercised end to end without a victim network; externally generated
adversarial clouds enter through the same manifest interface."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cloud import PointCloud
from .geometry import GeometricFeatures

KINDS = ("perturb", "add", "remove")
MODES = {
    "perturb": ("gaussian",),
    "add": ("uniform", "cluster"),
    "remove": ("random", "highcurv"),
}
CLUSTER_SIGMA_FRACTION = 0.05  # of the bounding-box diagonal


@dataclass(frozen=True)
class AttackSpec:
    """One synthetic attack: kind, magnitude (sigma or point count), mode, seed."""

    kind: str
    magnitude: float
    mode: str = ""
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown attack kind {self.kind!r}, expected one of {KINDS}")
        mode = self.mode or MODES[self.kind][0]
        if mode not in MODES[self.kind]:
            raise ValueError(
                f"mode {mode!r} not valid for kind {self.kind!r}; "
                f"expected one of {MODES[self.kind]}")
        object.__setattr__(self, "mode", mode)
        if self.kind == "perturb":
            if not self.magnitude > 0.0:
                raise ValueError("perturb magnitude (sigma) must be positive")
        else:
            count = int(self.magnitude)
            if count != self.magnitude or count < 1:
                raise ValueError(
                    f"{self.kind} magnitude must be a positive integer point count")
            object.__setattr__(self, "magnitude", count)


def perturb_attack(cloud: PointCloud, sigma: float, seed: int) -> PointCloud:
    """Add iid zero-mean Gaussian noise with the given standard deviation."""
    if not sigma > 0.0:
        raise ValueError("sigma must be positive")
    rng = np.random.default_rng(seed)
    noisy = cloud.points + rng.normal(0.0, sigma, size=cloud.points.shape)
    return PointCloud(noisy, name=cloud.name)


def add_points_attack(cloud: PointCloud, m: int, mode: str, seed: int) -> PointCloud:
    """Append m points: uniform in the bounding box, or a Gaussian cluster
    around one randomly chosen anchor point. Originals come first."""
    if m < 1:
        raise ValueError("number of points to add must be >= 1")
    rng = np.random.default_rng(seed)
    pts = cloud.points
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    if mode == "uniform":
        added = rng.uniform(lo, hi, size=(m, 3))
    elif mode == "cluster":
        anchor = pts[rng.integers(0, len(pts))]
        sigma = CLUSTER_SIGMA_FRACTION * float(np.linalg.norm(hi - lo))
        added = anchor + rng.normal(0.0, sigma, size=(m, 3))
    else:
        raise ValueError(f"unknown add mode {mode!r}")
    return PointCloud(np.vstack([pts, added]), name=cloud.name)


def remove_points_attack(cloud: PointCloud, m: int, mode: str, seed: int,
                         features: GeometricFeatures | None = None) -> PointCloud:
    """Drop m points: a uniform random subset, or the m points with the
    largest mean curvature (ties broken by ascending index). Survivors keep
    their original relative order."""
    n = len(cloud)
    if not 1 <= m < n:
        raise ValueError(f"m must be in [1, N-1] = [1, {n - 1}], got {m}")
    if mode == "random":
        rng = np.random.default_rng(seed)
        drop = rng.choice(n, size=m, replace=False)
    elif mode == "highcurv":
        if features is None:
            raise ValueError("highcurv removal requires geometric features")
        order = np.lexsort((np.arange(n), -features.mean_curv))
        drop = order[:m]
    else:
        raise ValueError(f"unknown remove mode {mode!r}")
    keep = np.setdiff1d(np.arange(n), drop)
    return PointCloud(cloud.points[keep], name=cloud.name)


def apply_attack(cloud: PointCloud, spec: AttackSpec,
                 features: GeometricFeatures | None = None) -> PointCloud:
    if spec.kind == "perturb":
        return perturb_attack(cloud, float(spec.magnitude), spec.seed)
    if spec.kind == "add":
        return add_points_attack(cloud, int(spec.magnitude), spec.mode, spec.seed)
    return remove_points_attack(cloud, int(spec.magnitude), spec.mode, spec.seed,
                                features=features)
