"""Serial-chain forward kinematics and taxel placement.

A chain is an ordered list of links, each a fixed parent transform plus a
revolute, prismatic, or fixed joint. Pads mount on links; a pad pose
expands to 256 taxel positions laid out row-major to match the reading
order of a tactile frame.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .pointcloud import BASE_FRAME, CloudXYZF
from .se3 import PoseSE3

REVOLUTE = "revolute"
PRISMATIC = "prismatic"
FIXED = "fixed"


@dataclass(frozen=True, eq=False)
class Link:
    fixed: PoseSE3
    joint: str = FIXED
    axis: np.ndarray | None = None

    def __post_init__(self):
        if self.joint not in (REVOLUTE, PRISMATIC, FIXED):
            raise InvalidInputError(f"unknown joint type {self.joint!r}")
        if self.joint == FIXED:
            if self.axis is not None:
                raise InvalidInputError("fixed joints take no axis")
            return
        if self.axis is None:
            raise InvalidInputError(f"{self.joint} joint requires an axis")
        axis = np.asarray(self.axis, dtype=np.float64).reshape(3)
        norm = float(np.linalg.norm(axis))
        if abs(norm - 1.0) > 1e-9:
            raise InvalidInputError(f"joint axis must be unit norm, got |axis|={norm}")
        axis.setflags(write=False)
        object.__setattr__(self, "axis", axis)


@dataclass(frozen=True)
class KinematicChain:
    links: tuple

    def __post_init__(self):
        object.__setattr__(self, "links", tuple(self.links))

    @property
    def n_joints(self) -> int:
        return sum(1 for link in self.links if link.joint != FIXED)


@dataclass(frozen=True, eq=False)
class JointState:
    positions: np.ndarray
    timestamp_us: int = 0

    def __post_init__(self):
        p = np.asarray(self.positions, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(p)):
            raise InvalidInputError("joint positions must be finite")
        p.setflags(write=False)
        object.__setattr__(self, "positions", p)
        object.__setattr__(self, "timestamp_us", int(self.timestamp_us))


@dataclass(frozen=True)
class TaxelGrid:
    rows: int = 16
    cols: int = 16
    pitch: float = 1.75e-3

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise InvalidInputError("grid must have positive dimensions")
        if not (np.isfinite(self.pitch) and self.pitch > 0):
            raise InvalidInputError(f"pitch must be positive, got {self.pitch}")

    @property
    def count(self) -> int:
        return self.rows * self.cols


@dataclass(frozen=True)
class PadMount:
    """Placement of one sensor pad: which link, where on it, and its grid."""

    pad_id: int
    link_index: int
    mount_transform: PoseSE3 = field(default_factory=PoseSE3.identity)
    grid: TaxelGrid = field(default_factory=TaxelGrid)


def forward_kinematics(chain: KinematicChain, joints: JointState) -> list[PoseSE3]:
    """Pose of every link in the base frame; the implicit base pose is identity."""
    if len(joints.positions) != chain.n_joints:
        raise InvalidInputError(
            f"chain has {chain.n_joints} joints but state carries {len(joints.positions)}"
        )
    poses = []
    pose = PoseSE3.identity()
    qi = iter(joints.positions)
    for link in chain.links:
        if link.joint == REVOLUTE:
            motion = PoseSE3.from_rotvec(link.axis * next(qi))
        elif link.joint == PRISMATIC:
            motion = PoseSE3(t=link.axis * next(qi))
        else:
            motion = PoseSE3.identity()
        pose = pose @ link.fixed @ motion
        poses.append(pose)
    return poses


def taxel_points(pad_pose: PoseSE3, grid: TaxelGrid) -> np.ndarray:
    """World positions of every taxel, row-major: point(r, c) = pose(c*pitch, r*pitch, 0)."""
    r, c = np.meshgrid(np.arange(grid.rows), np.arange(grid.cols), indexing="ij")
    local = np.column_stack(
        [c.ravel() * grid.pitch, r.ravel() * grid.pitch, np.zeros(grid.count)]
    )
    return pad_pose.apply(local)


def tactile_point_cloud(frames, chain: KinematicChain, joints: JointState, mounts) -> CloudXYZF:
    """Tactile points for every mounted pad, positions from FK, values from readings.

    frames maps pad_id to a normalized TactileFrame; per-pad blocks are
    concatenated in mount order, each row-major within the pad.
    """
    link_poses = forward_kinematics(chain, joints)
    blocks = []
    for mount in mounts:
        frame = frames.get(mount.pad_id)
        if frame is None:
            raise InvalidInputError(f"no frame supplied for pad {mount.pad_id}")
        if not frame.normalized:
            raise InvalidInputError(f"frame for pad {mount.pad_id} is not normalized")
        if frame.readings.size != mount.grid.count:
            raise InvalidInputError(
                f"pad {mount.pad_id}: frame has {frame.readings.size} readings, "
                f"grid expects {mount.grid.count}"
            )
        if not (0 <= mount.link_index < len(chain.links)):
            raise InvalidInputError(f"mount link index {mount.link_index} out of range")
        pad_pose = link_poses[mount.link_index] @ mount.mount_transform
        xyz = taxel_points(pad_pose, mount.grid)
        blocks.append(np.column_stack([xyz, frame.values().ravel()]))
    if not blocks:
        return CloudXYZF.empty(BASE_FRAME)
    return CloudXYZF(np.concatenate(blocks, axis=0), BASE_FRAME)


def _link_to_dict(link: Link) -> dict:
    d = {"fixed": link.fixed.to_dict(), "joint": link.joint}
    if link.axis is not None:
        d["axis"] = link.axis.tolist()
    return d


def _link_from_dict(d: dict) -> Link:
    axis = d.get("axis")
    return Link(
        fixed=PoseSE3.from_dict(d["fixed"]),
        joint=d.get("joint", FIXED),
        axis=None if axis is None else np.asarray(axis, dtype=np.float64),
    )


def _mount_to_dict(mount: PadMount) -> dict:
    return {
        "pad_id": mount.pad_id,
        "link": mount.link_index,
        "transform": mount.mount_transform.to_dict(),
        "grid": {"rows": mount.grid.rows, "cols": mount.grid.cols, "pitch": mount.grid.pitch},
    }


def _mount_from_dict(d: dict) -> PadMount:
    g = d.get("grid", {})
    return PadMount(
        pad_id=int(d["pad_id"]),
        link_index=int(d["link"]),
        mount_transform=PoseSE3.from_dict(d["transform"]),
        grid=TaxelGrid(
            rows=int(g.get("rows", 16)), cols=int(g.get("cols", 16)), pitch=float(g.get("pitch", 1.75e-3))
        ),
    )


def save_chain_file(path, chain: KinematicChain, mounts) -> None:
    doc = {
        "links": [_link_to_dict(link) for link in chain.links],
        "mounts": [_mount_to_dict(m) for m in mounts],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)


def load_chain_file(path) -> tuple[KinematicChain, list[PadMount]]:
    """Read the chain + mounts JSON consumed by the fuse/track commands."""
    with open(path) as fh:
        doc = json.load(fh)
    chain = KinematicChain(tuple(_link_from_dict(d) for d in doc["links"]))
    mounts = [_mount_from_dict(d) for d in doc.get("mounts", [])]
    return chain, mounts
