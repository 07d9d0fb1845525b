"""Visual point-cloud pipeline and visuo-tactile fusion.

Clouds carry xyz plus one feature channel; visual clouds keep the feature
at zero so they stack against tactile clouds whose feature is the
normalized reading. Fusion appends two one-hot flags marking modality.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .se3 import PoseSE3

BASE_FRAME = "base"


@dataclass(frozen=True, eq=False)
class CloudXYZF:
    """N x 4 point set: xyz in meters plus one feature channel, in a named frame."""

    points: np.ndarray
    frame: str

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 4)
        if not np.all(np.isfinite(pts)):
            raise InvalidInputError("cloud contains non-finite values")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "frame", str(self.frame))

    @staticmethod
    def empty(frame: str) -> "CloudXYZF":
        return CloudXYZF(np.zeros((0, 4)), frame)

    @staticmethod
    def from_xyz(xyz: np.ndarray, frame: str, feature=0.0) -> "CloudXYZF":
        xyz = np.asarray(xyz, dtype=np.float64).reshape(-1, 3)
        f = np.broadcast_to(np.asarray(feature, dtype=np.float64), (xyz.shape[0],))
        return CloudXYZF(np.column_stack([xyz, f]), frame)

    def __len__(self):
        return self.points.shape[0]

    @property
    def xyz(self) -> np.ndarray:
        return self.points[:, :3]

    @property
    def feature(self) -> np.ndarray:
        return self.points[:, 3]


@dataclass(frozen=True, eq=False)
class AABB:
    """Axis-aligned box: inclusive min/max corners in meters."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=np.float64).reshape(3)
        hi = np.asarray(self.hi, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise InvalidInputError("box corners must be finite")
        if np.any(lo > hi):
            raise InvalidInputError("box min corner exceeds max corner")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def to_dict(self) -> dict:
        return {"min": self.lo.tolist(), "max": self.hi.tolist()}

    @staticmethod
    def from_dict(d: dict) -> "AABB":
        return AABB(np.asarray(d["min"]), np.asarray(d["max"]))


@dataclass(frozen=True, eq=False)
class FusedCloud:
    """N x 6 visuo-tactile points: xyz, value, onehot_visual, onehot_tactile."""

    points: np.ndarray
    frame: str

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 6)
        if not np.all(np.isfinite(pts)):
            raise InvalidInputError("fused cloud contains non-finite values")
        flags = pts[:, 4:6]
        if not np.all(np.isin(flags, (0.0, 1.0))):
            raise InvalidInputError("one-hot channels must be 0 or 1")
        if not np.all(flags.sum(axis=1) == 1.0):
            raise InvalidInputError("one-hot channels must sum to 1 per point")
        if np.any(pts[flags[:, 0] == 1.0, 3] != 0.0):
            raise InvalidInputError("visual points must carry a zero value channel")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "frame", str(self.frame))

    def __len__(self):
        return self.points.shape[0]

    @property
    def n_visual(self) -> int:
        return int(np.count_nonzero(self.points[:, 4] == 1.0))

    @property
    def n_tactile(self) -> int:
        return int(np.count_nonzero(self.points[:, 5] == 1.0))


def merge(clouds) -> CloudXYZF:
    """Concatenate clouds sharing one frame label, preserving input order."""
    clouds = list(clouds)
    if not clouds:
        return CloudXYZF.empty("")
    frame = clouds[0].frame
    for c in clouds:
        if c.frame != frame:
            raise InvalidInputError(f"frame mismatch: {c.frame!r} vs {frame!r}")
    return CloudXYZF(np.concatenate([c.points for c in clouds], axis=0), frame)


def crop_aabb(cloud: CloudXYZF, box: AABB) -> CloudXYZF:
    """Keep points with lo <= p <= hi componentwise (boundary inclusive), stable order."""
    xyz = cloud.xyz
    mask = np.all((xyz >= box.lo) & (xyz <= box.hi), axis=1)
    return CloudXYZF(cloud.points[mask], cloud.frame)


def _sqdist_to(xyz: np.ndarray, p: np.ndarray) -> np.ndarray:
    # coordinatewise form keeps the arithmetic identical to the brute-force oracle
    dx = xyz[:, 0] - p[0]
    dy = xyz[:, 1] - p[1]
    dz = xyz[:, 2] - p[2]
    return dx * dx + dy * dy + dz * dz


def fps_indices(xyz: np.ndarray, k: int, seed: int, start: int | None = None) -> np.ndarray:
    """Greedy farthest-point selection over xyz rows.

    The start index is a seeded uniform pick unless forced. Each later pick
    maximizes the minimum squared distance to the selected set; ties break
    to the lowest index. Returns min(k, N) unique indices in pick order.
    """
    xyz = np.asarray(xyz, dtype=np.float64).reshape(-1, 3)
    n = xyz.shape[0]
    if k < 1:
        raise InvalidInputError(f"k must be >= 1, got {k}")
    if n == 0:
        raise InvalidInputError("cannot sample from an empty cloud")
    if start is None:
        start = int(np.random.default_rng(seed).integers(n))
    elif not (0 <= start < n):
        raise InvalidInputError(f"start index {start} out of range")
    count = min(k, n)
    selected = np.empty(count, dtype=np.int64)
    selected[0] = start
    dmin = _sqdist_to(xyz, xyz[start])
    dmin[start] = -1.0  # sentinel: never re-select
    for i in range(1, count):
        nxt = int(np.argmax(dmin))
        selected[i] = nxt
        dmin = np.minimum(dmin, _sqdist_to(xyz, xyz[nxt]))
        dmin[nxt] = -1.0
    return selected


def fps_downsample(cloud: CloudXYZF, k: int, seed: int, start: int | None = None) -> CloudXYZF:
    """Down-sample to min(k, N) points by farthest point sampling."""
    idx = fps_indices(cloud.xyz, k, seed, start=start)
    return CloudXYZF(cloud.points[idx], cloud.frame)


def transform(cloud: CloudXYZF, pose: PoseSE3, new_frame: str) -> CloudXYZF:
    """Rigidly map xyz, keep the feature channel, relabel the frame."""
    xyz = pose.apply(cloud.xyz)
    return CloudXYZF(np.column_stack([xyz, cloud.feature]), new_frame)


def fuse(visual: CloudXYZF, tactile: CloudXYZF) -> FusedCloud:
    """Stack visual then tactile points with one-hot modality flags.

    Visual rows become (x, y, z, 0, 1, 0); tactile rows keep their reading
    as the value channel: (x, y, z, value, 0, 1).
    """
    if visual.frame != tactile.frame:
        raise InvalidInputError(
            f"frame mismatch: visual {visual.frame!r} vs tactile {tactile.frame!r}"
        )
    nv, nt = len(visual), len(tactile)
    out = np.zeros((nv + nt, 6))
    out[:nv, :3] = visual.xyz
    out[:nv, 4] = 1.0
    out[nv:, :3] = tactile.xyz
    out[nv:, 3] = tactile.feature
    out[nv:, 5] = 1.0
    return FusedCloud(out, visual.frame)


def write_cloud_ply(cloud: CloudXYZF, path) -> None:
    """ASCII PLY with x, y, z, f vertex properties; frame kept in a comment."""
    with open(path, "w") as fh:
        fh.write("ply\nformat ascii 1.0\n")
        fh.write(f"comment frame {cloud.frame}\n")
        fh.write(f"element vertex {len(cloud)}\n")
        for name in ("x", "y", "z", "f"):
            fh.write(f"property double {name}\n")
        fh.write("end_header\n")
        for row in cloud.points:
            fh.write(" ".join(format(v, ".17g") for v in row) + "\n")


def read_cloud_ply(path) -> CloudXYZF:
    with open(path) as fh:
        if fh.readline().strip() != "ply":
            raise InvalidInputError(f"{path}: not a PLY file")
        frame = ""
        n = None
        props = []
        for line in fh:
            line = line.strip()
            if line == "end_header":
                break
            parts = line.split()
            if parts[:2] == ["comment", "frame"]:
                frame = parts[2] if len(parts) > 2 else ""
            elif parts[:2] == ["element", "vertex"]:
                n = int(parts[2])
            elif parts[0] == "property":
                props.append(parts[2])
        else:
            raise InvalidInputError(f"{path}: missing end_header")
        if n is None:
            raise InvalidInputError(f"{path}: missing vertex element")
        if props[:3] != ["x", "y", "z"]:
            raise InvalidInputError(f"{path}: expected x,y,z properties, got {props}")
        rows = np.loadtxt(fh, dtype=np.float64, max_rows=n, ndmin=2) if n else np.zeros((0, 4))
        if rows.shape[0] != n:
            raise InvalidInputError(f"{path}: expected {n} vertices, got {rows.shape[0]}")
    if rows.shape[0] and rows.shape[1] < 4:
        rows = np.column_stack([rows[:, :3], np.zeros(rows.shape[0])])
    return CloudXYZF(rows[:, :4] if rows.shape[0] else np.zeros((0, 4)), frame)
