"""Point-cloud data model, file parsing/writing, resampling, and dataset manifests."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyCloudError, ManifestError, ParseError

LABELS = ("benign", "adversarial")
FORMATS = ("xyz", "off", "ply-ascii")

_SUFFIX_FORMATS = {".xyz": "xyz", ".txt": "xyz", ".off": "off", ".ply": "ply-ascii"}


@dataclass
class PointCloud:
    """An ordered list of N 3D points plus an optional text label.

    Point order is significant and preserved by parsing and writing.
    """

    points: np.ndarray
    name: str = ""

    def __post_init__(self):
        pts = np.ascontiguousarray(np.asarray(self.points, dtype=np.float64))
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must have shape (N, 3), got {pts.shape}")
        if pts.shape[0] == 0:
            raise EmptyCloudError("cloud has zero points")
        if not np.isfinite(pts).all():
            raise ValueError("cloud contains non-finite coordinates")
        self.points = pts

    def __len__(self):
        return self.points.shape[0]


def _format_coord(value: float) -> str:
    # repr() of a Python float is the shortest string that round-trips exactly;
    # a trailing ".0" is dropped for compactness without losing exactness.
    s = repr(float(value))
    return s[:-2] if s.endswith(".0") else s


def parse_cloud(text: str, format: str = "xyz", name: str = "") -> PointCloud:
    """Parse cloud file contents in one of the supported ascii formats.

    Only vertex positions are read; OFF/PLY face data is ignored.
    """
    if format not in FORMATS:
        raise ValueError(f"unknown format {format!r}, expected one of {FORMATS}")
    if format == "xyz":
        points = _parse_xyz(text)
    elif format == "off":
        points = _parse_off(text)
    else:
        points = _parse_ply_ascii(text)
    if not points:
        raise EmptyCloudError("file contains no points")
    return PointCloud(np.array(points, dtype=np.float64), name=name)


def _parse_floats(tokens, lineno, expected=3):
    if len(tokens) != expected:
        raise ParseError(f"expected {expected} values, got {len(tokens)}", line=lineno)
    try:
        return [float(t) for t in tokens]
    except ValueError:
        raise ParseError(f"non-numeric value in {tokens!r}", line=lineno) from None


def _parse_xyz(text):
    points = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        points.append(_parse_floats(line.split(), lineno))
    return points


def _parse_off(text):
    lines = text.splitlines()
    rows = [(i + 1, ln.strip()) for i, ln in enumerate(lines)
            if ln.strip() and not ln.strip().startswith("#")]
    if not rows:
        raise EmptyCloudError("file contains no points")
    lineno, header = rows[0]
    if not header.startswith("OFF"):
        raise ParseError("missing OFF magic header", line=lineno)
    rest = header[3:].split()
    if rest:
        # header and counts on one line ("OFF nv nf ne"), seen in the wild
        counts, body = rest, rows[1:]
        counts_line = lineno
    else:
        if len(rows) < 2:
            raise ParseError("missing vertex/face counts", line=lineno)
        counts_line, counts_text = rows[1]
        counts, body = counts_text.split(), rows[2:]
    if len(counts) < 2:
        raise ParseError("expected vertex and face counts", line=counts_line)
    try:
        n_vertices = int(counts[0])
    except ValueError:
        raise ParseError(f"bad vertex count {counts[0]!r}", line=counts_line) from None
    if n_vertices <= 0:
        raise EmptyCloudError("OFF file declares zero vertices")
    if len(body) < n_vertices:
        raise ParseError(f"expected {n_vertices} vertex lines, found {len(body)}",
                         line=counts_line)
    return [_parse_floats(ln.split()[:3] if len(ln.split()) > 3 else ln.split(), no)
            for no, ln in body[:n_vertices]]


def _parse_ply_ascii(text):
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise ParseError("missing 'ply' magic header", line=1)
    n_vertices = None
    in_vertex_element = False
    vertex_props = []
    data_start = None
    for i, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if line.startswith("format"):
            if "ascii" not in line:
                raise ParseError("only ascii PLY is supported", line=i)
        elif line.startswith("element"):
            parts = line.split()
            in_vertex_element = len(parts) >= 3 and parts[1] == "vertex"
            if in_vertex_element:
                try:
                    n_vertices = int(parts[2])
                except ValueError:
                    raise ParseError(f"bad vertex count {parts[2]!r}", line=i) from None
        elif line.startswith("property") and in_vertex_element:
            vertex_props.append(line.split()[-1])
        elif line == "end_header":
            data_start = i
            break
    if data_start is None:
        raise ParseError("missing end_header", line=len(lines))
    if n_vertices is None:
        raise ParseError("header declares no vertex element", line=data_start)
    if n_vertices == 0:
        raise EmptyCloudError("PLY file declares zero vertices")
    try:
        cols = [vertex_props.index(axis) for axis in ("x", "y", "z")]
    except ValueError:
        raise ParseError("vertex element lacks x/y/z properties", line=data_start) from None
    body = lines[data_start:]
    if len(body) < n_vertices:
        raise ParseError(f"expected {n_vertices} vertex lines, found {len(body)}",
                         line=data_start)
    points = []
    for off, raw in enumerate(body[:n_vertices]):
        tokens = raw.split()
        lineno = data_start + 1 + off
        if len(tokens) < len(vertex_props):
            raise ParseError(f"expected {len(vertex_props)} values, got {len(tokens)}",
                             line=lineno)
        points.append(_parse_floats([tokens[c] for c in cols], lineno))
    return points


def write_cloud(cloud: PointCloud, format: str = "xyz") -> str:
    """Serialize a cloud to text; parse_cloud(write_cloud(c)) is coordinate-exact."""
    if format != "xyz":
        raise ValueError(f"unsupported write format {format!r}")
    lines = [" ".join(_format_coord(v) for v in row) for row in cloud.points]
    return "\n".join(lines) + "\n"


def read_cloud_file(path, format: str | None = None) -> PointCloud:
    """Read a cloud from disk, inferring the format from the suffix unless given."""
    path = Path(path)
    fmt = format or _SUFFIX_FORMATS.get(path.suffix.lower())
    if fmt is None:
        raise ValueError(f"cannot infer cloud format from suffix of {path}")
    return parse_cloud(path.read_text(encoding="utf-8"), format=fmt, name=path.stem)


def write_cloud_file(cloud: PointCloud, path) -> None:
    Path(path).write_text(write_cloud(cloud), encoding="utf-8")


def resample(cloud: PointCloud, m: int, seed: int) -> PointCloud:
    """Resample a cloud to exactly m points.

    Downsampling keeps a uniformly random subset in original order; upsampling
    appends uniformly chosen duplicates of existing points. No coordinate is
    ever invented, and the result is deterministic for a fixed seed.
    """
    if m < 1:
        raise ValueError(f"target point count must be >= 1, got {m}")
    n = len(cloud)
    rng = np.random.default_rng(seed)
    if m == n:
        return PointCloud(cloud.points.copy(), name=cloud.name)
    if m < n:
        keep = np.sort(rng.choice(n, size=m, replace=False))
        return PointCloud(cloud.points[keep], name=cloud.name)
    extra = rng.integers(0, n, size=m - n)
    return PointCloud(np.vstack([cloud.points, cloud.points[extra]]), name=cloud.name)


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: str
    pair_id: str


@dataclass
class DatasetManifest:
    """Listing of cloud files with class labels and benign/adversarial pair ids."""

    entries: list[ManifestEntry] = field(default_factory=list)
    root: Path = Path(".")

    def resolve(self, entry: ManifestEntry) -> Path:
        return self.root / entry.path

    def by_label(self, label: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.label == label]

    def pair_ids(self) -> list[str]:
        seen = []
        for e in self.entries:
            if e.pair_id not in seen:
                seen.append(e.pair_id)
        return seen


def load_manifest(path) -> DatasetManifest:
    """Load and validate a `<relative-path>,<label>,<pair-id>` CSV manifest."""
    path = Path(path)
    entries = []
    seen = set()
    with path.open(newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 3:
                raise ManifestError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            rel, label, pair_id = (f.strip() for f in row)
            if label not in LABELS:
                raise ManifestError(
                    f"{path}:{lineno}: unknown label {label!r}, expected one of {LABELS}")
            key = (label, pair_id)
            if key in seen:
                raise ManifestError(
                    f"{path}:{lineno}: duplicate entry for pair {pair_id!r} with label {label!r}")
            seen.add(key)
            entries.append(ManifestEntry(path=rel, label=label, pair_id=pair_id))
    return DatasetManifest(entries=entries, root=path.parent)


def write_manifest(manifest: DatasetManifest, path) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for e in manifest.entries:
        writer.writerow([e.path, e.label, e.pair_id])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def load_cloud(manifest: DatasetManifest, entry: ManifestEntry) -> PointCloud:
    target = manifest.resolve(entry)
    if not target.exists():
        raise ManifestError(f"manifest references missing file: {target}")
    return read_cloud_file(target)
