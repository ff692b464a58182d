"""Synthetic surface samplers (sphere, cylinder, box, torus) used as benign
fixtures for experiments and tests."""

from __future__ import annotations

import numpy as np

from .cloud import PointCloud

KINDS = ("sphere", "cylinder", "box", "torus")


def sphere(n: int, rng: np.random.Generator, radius: float = 1.0) -> np.ndarray:
    v = rng.normal(size=(n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return radius * v


def fibonacci_sphere(n: int, radius: float = 1.0) -> np.ndarray:
    """Deterministic even-area sphere sample (golden-angle spiral)."""
    i = np.arange(n, dtype=np.float64)
    golden = (1.0 + np.sqrt(5.0)) / 2.0
    z = 1.0 - (2.0 * i + 1.0) / n
    ring = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    theta = 2.0 * np.pi * i / golden
    return radius * np.column_stack([ring * np.cos(theta), ring * np.sin(theta), z])


def cylinder(n: int, rng: np.random.Generator, radius: float = 0.6,
             height: float = 1.8, caps: bool = True) -> np.ndarray:
    """Uniform surface sample of a capped cylinder (area-weighted)."""
    side_area = 2.0 * np.pi * radius * height
    cap_area = 2.0 * np.pi * radius ** 2 if caps else 0.0
    on_side = rng.random(n) < side_area / (side_area + cap_area)
    theta = rng.uniform(0.0, 2.0 * np.pi, size=n)
    pts = np.empty((n, 3))
    pts[on_side, 0] = radius * np.cos(theta[on_side])
    pts[on_side, 1] = radius * np.sin(theta[on_side])
    pts[on_side, 2] = rng.uniform(-height / 2.0, height / 2.0, size=int(on_side.sum()))
    n_cap = int((~on_side).sum())
    r = radius * np.sqrt(rng.random(n_cap))
    pts[~on_side, 0] = r * np.cos(theta[~on_side])
    pts[~on_side, 1] = r * np.sin(theta[~on_side])
    pts[~on_side, 2] = np.where(rng.random(n_cap) < 0.5, -height / 2.0, height / 2.0)
    return pts


def box(n: int, rng: np.random.Generator, extents=(1.0, 0.8, 0.6)) -> np.ndarray:
    """Uniform surface sample of an axis-aligned box (face-area weighted)."""
    ex, ey, ez = extents
    areas = np.array([ey * ez, ex * ez, ex * ey])  # per axis-normal face pair
    face_axis = rng.choice(3, size=n, p=areas / areas.sum())
    side = np.where(rng.random(n) < 0.5, -0.5, 0.5)
    u = rng.uniform(-0.5, 0.5, size=n)
    v = rng.uniform(-0.5, 0.5, size=n)
    pts = np.empty((n, 3))
    half = np.array(extents)
    for axis in range(3):
        mask = face_axis == axis
        others = [a for a in range(3) if a != axis]
        pts[mask, axis] = side[mask] * half[axis]
        pts[mask, others[0]] = u[mask] * half[others[0]]
        pts[mask, others[1]] = v[mask] * half[others[1]]
    return pts


def torus(n: int, rng: np.random.Generator, major: float = 0.7,
          minor: float = 0.3) -> np.ndarray:
    """Uniform surface sample of a torus via rejection on the tube angle."""
    out = np.empty((n, 3))
    filled = 0
    while filled < n:
        want = n - filled
        theta = rng.uniform(0.0, 2.0 * np.pi, size=2 * want)
        accept = rng.random(2 * want) < (major + minor * np.cos(theta)) / (major + minor)
        theta = theta[accept][:want]
        got = len(theta)
        phi = rng.uniform(0.0, 2.0 * np.pi, size=got)
        ring = major + minor * np.cos(theta)
        out[filled:filled + got, 0] = ring * np.cos(phi)
        out[filled:filled + got, 1] = ring * np.sin(phi)
        out[filled:filled + got, 2] = minor * np.sin(theta)
        filled += got
    return out


def _normalize(points: np.ndarray) -> np.ndarray:
    # center and scale to unit max radius, matching the usual model convention
    centered = points - points.mean(axis=0)
    return centered / np.linalg.norm(centered, axis=1).max()


def make_shape(kind: str, n: int, rng: np.random.Generator) -> np.ndarray:
    if kind == "sphere":
        return sphere(n, rng, radius=float(rng.uniform(0.7, 1.2)))
    if kind == "cylinder":
        return cylinder(n, rng, radius=float(rng.uniform(0.4, 0.8)),
                        height=float(rng.uniform(1.2, 2.2)))
    if kind == "box":
        return box(n, rng, extents=tuple(rng.uniform(0.5, 1.4, size=3)))
    if kind == "torus":
        minor = float(rng.uniform(0.15, 0.35))
        return torus(n, rng, major=float(rng.uniform(0.5, 0.9)), minor=minor)
    raise ValueError(f"unknown shape kind {kind!r}, expected one of {KINDS}")


def shape_corpus(count: int, n_points: int, seed: int,
                 kinds=KINDS) -> list[PointCloud]:
    """Deterministic list of normalized synthetic clouds cycling the shape kinds."""
    rng = np.random.default_rng(seed)
    clouds = []
    for i in range(count):
        kind = kinds[i % len(kinds)]
        pts = _normalize(make_shape(kind, n_points, rng))
        clouds.append(PointCloud(pts, name=f"{kind}-{i:04d}"))
    return clouds
