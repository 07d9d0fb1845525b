"""Synthetic contact scenes with ground truth for end-to-end validation.

The scene is a rigid primitive following a keyed pose trajectory, squeezed
by a two-finger parallel gripper whose aperture follows its own keys.
Contact is a frictionless penetration spring: each taxel's force is the
stiffness times its penetration depth into the object's implicit surface,
pushed through the sensor response model plus optional ADC noise. Every
quantity is deterministic given the scene seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .kinematics import (
    FIXED,
    PRISMATIC,
    JointState,
    KinematicChain,
    Link,
    PadMount,
    TaxelGrid,
    forward_kinematics,
    taxel_points,
)
from .pointcloud import BASE_FRAME, CloudXYZF
from .se3 import PoseSE3, matrix_to_quat, quat_slerp
from .sensor_model import TactileFrame, TaxelResponseModel, force_to_reading
from .stream_sync import (
    JOINTS_STREAM,
    Episode,
    SyncedTuple,
    TimedSample,
    camera_stream,
    tactile_stream,
)


@dataclass(frozen=True)
class Primitive:
    """Rigid object geometry in its own frame, centered at the origin."""

    kind: str
    size: tuple = ()  # box: (lx, ly, lz)
    radius: float = 0.0
    height: float = 0.0
    points: np.ndarray | None = None  # mesh vertices

    def __post_init__(self):
        if self.kind == "box":
            if len(self.size) != 3 or any(s <= 0 for s in self.size):
                raise InvalidInputError("box needs three positive dimensions")
        elif self.kind == "cylinder":
            if self.radius <= 0 or self.height <= 0:
                raise InvalidInputError("cylinder needs positive radius and height")
        elif self.kind == "sphere":
            if self.radius <= 0:
                raise InvalidInputError("sphere needs a positive radius")
        elif self.kind == "mesh":
            pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
            if pts.shape[0] < 1 or not np.all(np.isfinite(pts)):
                raise InvalidInputError("mesh needs at least one finite vertex")
            pts.setflags(write=False)
            object.__setattr__(self, "points", pts)
        else:
            raise InvalidInputError(f"unknown primitive kind {self.kind!r}")

    @staticmethod
    def box(lx: float, ly: float, lz: float) -> "Primitive":
        return Primitive("box", size=(float(lx), float(ly), float(lz)))

    @staticmethod
    def cylinder(radius: float, height: float) -> "Primitive":
        return Primitive("cylinder", radius=float(radius), height=float(height))

    @staticmethod
    def sphere(radius: float) -> "Primitive":
        return Primitive("sphere", radius=float(radius))

    @staticmethod
    def mesh(points: np.ndarray) -> "Primitive":
        return Primitive("mesh", points=np.asarray(points, dtype=np.float64))

    def sdf(self, pts: np.ndarray) -> np.ndarray:
        """Signed distance to the surface, negative inside."""
        pts = np.asarray(pts, dtype=np.float64).reshape(-1, 3)
        if self.kind == "sphere":
            return np.linalg.norm(pts, axis=1) - self.radius
        if self.kind == "box":
            half = np.asarray(self.size) / 2.0
            q = np.abs(pts) - half
            outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
            inside = np.minimum(np.max(q, axis=1), 0.0)
            return outside + inside
        if self.kind == "cylinder":
            radial = np.linalg.norm(pts[:, :2], axis=1) - self.radius
            axial = np.abs(pts[:, 2]) - self.height / 2.0
            d = np.column_stack([radial, axial])
            outside = np.linalg.norm(np.maximum(d, 0.0), axis=1)
            inside = np.minimum(np.max(d, axis=1), 0.0)
            return outside + inside
        raise InvalidInputError(
            "mesh primitives have no inside test (vertices only); contact needs an analytic shape"
        )

    def to_dict(self) -> dict:
        if self.kind == "box":
            return {"kind": "box", "size": list(self.size)}
        if self.kind == "cylinder":
            return {"kind": "cylinder", "radius": self.radius, "height": self.height}
        if self.kind == "sphere":
            return {"kind": "sphere", "radius": self.radius}
        return {"kind": "mesh", "points": self.points.tolist()}

    @staticmethod
    def from_dict(d: dict) -> "Primitive":
        kind = d["kind"]
        if kind == "box":
            return Primitive.box(*d["size"])
        if kind == "cylinder":
            return Primitive.cylinder(d["radius"], d["height"])
        if kind == "sphere":
            return Primitive.sphere(d["radius"])
        if kind == "mesh":
            return Primitive.mesh(np.asarray(d["points"], dtype=np.float64))
        raise InvalidInputError(f"unknown primitive kind {kind!r}")


def sample_object_cloud(primitive: Primitive, n: int, seed: int) -> np.ndarray:
    """n surface points, uniform by area for analytic shapes; deterministic by seed."""
    if n < 1:
        raise InvalidInputError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    if primitive.kind == "sphere":
        dirs = rng.normal(size=(n, 3))
        norms = np.linalg.norm(dirs, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        return primitive.radius * dirs / norms
    if primitive.kind == "box":
        lx, ly, lz = primitive.size
        # face order: -x, +x, -y, +y, -z, +z
        areas = np.array([ly * lz, ly * lz, lx * lz, lx * lz, lx * ly, lx * ly])
        faces = rng.choice(6, size=n, p=areas / areas.sum())
        u = rng.uniform(-0.5, 0.5, size=(n, 2))
        pts = np.empty((n, 3))
        half = np.array([lx, ly, lz]) / 2.0
        for f in range(6):
            mask = faces == f
            axis = f // 2
            sign = -1.0 if f % 2 == 0 else 1.0
            others = [i for i in range(3) if i != axis]
            pts[mask, axis] = sign * half[axis]
            pts[mask, others[0]] = u[mask, 0] * (2 * half[others[0]])
            pts[mask, others[1]] = u[mask, 1] * (2 * half[others[1]])
        return pts
    if primitive.kind == "cylinder":
        r, h = primitive.radius, primitive.height
        lateral = 2 * np.pi * r * h
        cap = np.pi * r * r
        region = rng.choice(3, size=n, p=np.array([lateral, cap, cap]) / (lateral + 2 * cap))
        theta = rng.uniform(0.0, 2 * np.pi, size=n)
        pts = np.empty((n, 3))
        side = region == 0
        pts[side, 0] = r * np.cos(theta[side])
        pts[side, 1] = r * np.sin(theta[side])
        pts[side, 2] = rng.uniform(-h / 2, h / 2, size=int(side.sum()))
        for reg, sign in ((1, -1.0), (2, 1.0)):
            mask = region == reg
            rho = r * np.sqrt(rng.uniform(size=int(mask.sum())))
            pts[mask, 0] = rho * np.cos(theta[mask])
            pts[mask, 1] = rho * np.sin(theta[mask])
            pts[mask, 2] = sign * h / 2
        return pts
    # mesh: resample the given vertices (no area weighting available)
    idx = rng.integers(len(primitive.points), size=n)
    return primitive.points[idx].copy()


# Pad frames for a two-finger gripper closing along the gripper x axis.
# Columns map pad axes into the gripper frame; z_pad is the inward normal.
_PAD_ROT_POS = np.array([[0.0, 0.0, -1.0], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0]])
_PAD_ROT_NEG = np.array([[0.0, 0.0, 1.0], [0.0, -1.0, 0.0], [1.0, 0.0, 0.0]])


def two_finger_gripper(gripper_pose: PoseSE3, grid: TaxelGrid):
    """Chain + mounts for two opposed pads whose gap is set by the joint state.

    The chain is a two-link prismatic path: joint values [gap/2, -gap]
    place pad 0 at +gap/2 and pad 1 at -gap/2 along the gripper x axis,
    grids centered on the axis, normals facing each other.
    """
    chain = KinematicChain(
        (
            Link(fixed=gripper_pose, joint=PRISMATIC, axis=np.array([1.0, 0.0, 0.0])),
            Link(fixed=PoseSE3.identity(), joint=PRISMATIC, axis=np.array([1.0, 0.0, 0.0])),
        )
    )
    center = np.array([(grid.cols - 1) / 2.0 * grid.pitch, (grid.rows - 1) / 2.0 * grid.pitch, 0.0])
    mounts = [
        PadMount(0, 0, PoseSE3(matrix_to_quat(_PAD_ROT_POS), -_PAD_ROT_POS @ center), grid),
        PadMount(1, 1, PoseSE3(matrix_to_quat(_PAD_ROT_NEG), -_PAD_ROT_NEG @ center), grid),
    ]
    return chain, mounts


def joints_for_aperture(gap: float, timestamp_us: int = 0) -> JointState:
    return JointState(np.array([gap / 2.0, -gap]), timestamp_us)


@dataclass(frozen=True)
class SceneSpec:
    """Everything needed to render a deterministic contact episode."""

    obj: Primitive
    object_trajectory: tuple  # ((t_seconds, PoseSE3), ...)
    aperture_trajectory: tuple  # ((t_seconds, gap_meters), ...)
    gripper_pose: PoseSE3 = field(default_factory=PoseSE3.identity)
    grid: TaxelGrid = field(default_factory=TaxelGrid)
    stiffness: float = 2000.0
    noise_sigma: float = 0.0
    sensor: TaxelResponseModel = field(default_factory=TaxelResponseModel)
    seed: int = 0
    n_camera_points: int = 1024

    def __post_init__(self):
        traj = tuple((float(t), p) for t, p in self.object_trajectory)
        apert = tuple((float(t), float(g)) for t, g in self.aperture_trajectory)
        if not traj or not apert:
            raise InvalidInputError("trajectories must have at least one key")
        for keys in (traj, apert):
            if any(b[0] < a[0] for a, b in zip(keys, keys[1:])):
                raise InvalidInputError("trajectory keys must be time-sorted")
        if any(g < 0 for _, g in apert):
            raise InvalidInputError("aperture must be nonnegative")
        if self.stiffness <= 0:
            raise InvalidInputError("stiffness must be positive")
        if self.noise_sigma < 0:
            raise InvalidInputError("noise sigma must be nonnegative")
        object.__setattr__(self, "object_trajectory", traj)
        object.__setattr__(self, "aperture_trajectory", apert)

    def chain_and_mounts(self):
        return two_finger_gripper(self.gripper_pose, self.grid)

    def time_span(self) -> tuple[float, float]:
        """Intersection of the two trajectory spans; single keys mean static."""
        spans = []
        for keys in (self.object_trajectory, self.aperture_trajectory):
            if len(keys) > 1:
                spans.append((keys[0][0], keys[-1][0]))
        if not spans:
            return (-np.inf, np.inf)
        return (max(s[0] for s in spans), min(s[1] for s in spans))

    def object_pose_at(self, t: float) -> PoseSE3:
        return _interp_pose(self.object_trajectory, t)

    def aperture_at(self, t: float) -> float:
        return _interp_scalar(self.aperture_trajectory, t)

    def to_dict(self) -> dict:
        return {
            "object": self.obj.to_dict(),
            "object_trajectory": [{"t": t, "pose": p.to_dict()} for t, p in self.object_trajectory],
            "aperture_trajectory": [{"t": t, "gap": g} for t, g in self.aperture_trajectory],
            "gripper_pose": self.gripper_pose.to_dict(),
            "grid": {"rows": self.grid.rows, "cols": self.grid.cols, "pitch": self.grid.pitch},
            "stiffness": self.stiffness,
            "noise_sigma": self.noise_sigma,
            "sensor": self.sensor.to_dict(),
            "seed": self.seed,
            "n_camera_points": self.n_camera_points,
        }

    @staticmethod
    def from_dict(d: dict) -> "SceneSpec":
        g = d.get("grid", {})
        return SceneSpec(
            obj=Primitive.from_dict(d["object"]),
            object_trajectory=tuple(
                (k["t"], PoseSE3.from_dict(k["pose"])) for k in d["object_trajectory"]
            ),
            aperture_trajectory=tuple((k["t"], k["gap"]) for k in d["aperture_trajectory"]),
            gripper_pose=PoseSE3.from_dict(d.get("gripper_pose", PoseSE3.identity().to_dict())),
            grid=TaxelGrid(
                rows=int(g.get("rows", 16)),
                cols=int(g.get("cols", 16)),
                pitch=float(g.get("pitch", 1.75e-3)),
            ),
            stiffness=float(d.get("stiffness", 2000.0)),
            noise_sigma=float(d.get("noise_sigma", 0.0)),
            sensor=TaxelResponseModel.from_dict(d.get("sensor", TaxelResponseModel().to_dict())),
            seed=int(d.get("seed", 0)),
            n_camera_points=int(d.get("n_camera_points", 1024)),
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @staticmethod
    def load(path) -> "SceneSpec":
        with open(path) as fh:
            return SceneSpec.from_dict(json.load(fh))


def _check_span(keys, t: float, what: str) -> None:
    if len(keys) > 1 and not (keys[0][0] <= t <= keys[-1][0]):
        raise InvalidInputError(
            f"t={t} outside {what} span [{keys[0][0]}, {keys[-1][0]}]"
        )


def _segment(keys, t: float):
    for (t0, v0), (t1, v1) in zip(keys, keys[1:]):
        if t <= t1:
            alpha = 0.0 if t1 == t0 else (t - t0) / (t1 - t0)
            return v0, v1, alpha
    last = keys[-1][1]
    return last, last, 0.0


def _interp_pose(keys, t: float) -> PoseSE3:
    _check_span(keys, t, "object trajectory")
    if len(keys) == 1:
        return keys[0][1]
    p0, p1, alpha = _segment(keys, t)
    q = quat_slerp(p0.q, p1.q, alpha)
    return PoseSE3(q, (1.0 - alpha) * p0.t + alpha * p1.t)


def _interp_scalar(keys, t: float) -> float:
    _check_span(keys, t, "aperture trajectory")
    if len(keys) == 1:
        return keys[0][1]
    v0, v1, alpha = _segment(keys, t)
    return (1.0 - alpha) * v0 + alpha * v1


@dataclass(frozen=True)
class ContactSnapshot:
    """Simulator output for one instant."""

    t_us: int
    object_pose: PoseSE3
    aperture: float
    joints: JointState
    forces: dict  # pad_id -> (rows, cols) float Newtons
    frames: dict  # pad_id -> raw TactileFrame


def simulate_contact(scene: SceneSpec, t: float) -> ContactSnapshot:
    """Penetration-spring contact at time t: forces and noisy ADC frames."""
    lo, hi = scene.time_span()
    if not (lo <= t <= hi):
        raise InvalidInputError(f"t={t} outside scene span [{lo}, {hi}]")
    t_us = int(round(t * 1e6))
    pose_obj = scene.object_pose_at(t)
    gap = scene.aperture_at(t)
    joints = joints_for_aperture(gap, t_us)
    chain, mounts = scene.chain_and_mounts()
    link_poses = forward_kinematics(chain, joints)
    inv_obj = pose_obj.inverse()
    rng = np.random.default_rng([scene.seed, t_us])
    forces = {}
    frames = {}
    for mount in mounts:
        pad_pose = link_poses[mount.link_index] @ mount.mount_transform
        pts_world = taxel_points(pad_pose, mount.grid)
        depth = -scene.obj.sdf(inv_obj.apply(pts_world))
        force = scene.stiffness * np.maximum(depth, 0.0)
        grid = force.reshape(mount.grid.rows, mount.grid.cols)
        reading = force_to_reading(scene.sensor, grid)
        if scene.noise_sigma > 0:
            reading = reading + rng.normal(0.0, scene.noise_sigma, size=reading.shape)
        reading = np.clip(np.rint(reading), 0, scene.sensor.r_max).astype(np.uint16)
        forces[mount.pad_id] = grid
        frames[mount.pad_id] = TactileFrame(mount.pad_id, t_us, reading, normalized=False)
    return ContactSnapshot(t_us, pose_obj, gap, joints, forces, frames)


@dataclass(frozen=True)
class GroundTruthTick:
    t_us: int
    pose: PoseSE3
    forces: dict


@dataclass(frozen=True)
class GroundTruth:
    ticks: tuple

    def poses(self) -> list:
        return [(tick.t_us, tick.pose) for tick in self.ticks]

    def save_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for tick in self.ticks:
                fh.write(
                    json.dumps(
                        {
                            "t_us": tick.t_us,
                            "pose": tick.pose.to_dict(),
                            "forces": {str(k): v.tolist() for k, v in tick.forces.items()},
                        }
                    )
                    + "\n"
                )

    @staticmethod
    def load_jsonl(path) -> "GroundTruth":
        ticks = []
        with open(path) as fh:
            for line in fh:
                if not line.strip():
                    continue
                d = json.loads(line)
                ticks.append(
                    GroundTruthTick(
                        t_us=int(d["t_us"]),
                        pose=PoseSE3.from_dict(d["pose"]),
                        forces={
                            int(k): np.asarray(v, dtype=np.float64)
                            for k, v in d.get("forces", {}).items()
                        },
                    )
                )
        return GroundTruth(tuple(ticks))


def render_episode(scene: SceneSpec, rate_hz: float, duration_s: float):
    """Synchronized tuples at rate_hz plus the matching ground truth.

    Each tick carries two tactile frames, one camera-like cloud freshly
    sampled from the object surface (whole surface; no occlusion model),
    and the joint state matching the aperture. Bit-identical under the
    same scene seed.
    """
    if rate_hz <= 0 or duration_s <= 0:
        raise InvalidInputError("rate and duration must be positive")
    n_ticks = int(np.floor(duration_s * rate_hz + 1e-9))
    lo, hi = scene.time_span()
    tuples = []
    truth = []
    for k in range(n_ticks):
        t = k / rate_hz
        if not (lo <= t <= hi):
            raise InvalidInputError(f"tick t={t} outside scene span [{lo}, {hi}]")
        snap = simulate_contact(scene, t)
        cam_seed = int(np.random.default_rng([scene.seed, 7, k]).integers(2**63))
        local = sample_object_cloud(scene.obj, scene.n_camera_points, cam_seed)
        world = snap.object_pose.apply(local)
        cloud = CloudXYZF.from_xyz(world, BASE_FRAME)
        members = {}
        for pad_id, frame in snap.frames.items():
            sid = tactile_stream(pad_id)
            members[sid] = TimedSample(sid, snap.t_us, frame)
        members[camera_stream(0)] = TimedSample(camera_stream(0), snap.t_us, cloud)
        members[JOINTS_STREAM] = TimedSample(JOINTS_STREAM, snap.t_us, snap.joints)
        tuples.append(SyncedTuple(snap.t_us, members))
        truth.append(GroundTruthTick(snap.t_us, snap.object_pose, snap.forces))
    streams = sorted(tuples[0].members) if tuples else []
    episode = Episode(
        rate_hz=rate_hz,
        tolerance_us=0,
        streams=streams,
        tuples=tuples,
        metadata={"source": "simulator", "scene_seed": scene.seed},
    )
    return episode, GroundTruth(tuple(truth))
