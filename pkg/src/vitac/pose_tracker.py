"""Tactile-only 6-DoF pose tracking with a particle filter.

Each particle is a candidate object pose. A step diffuses the particles,
scores them by the summed squared distance from contact points to the
posed object model, converts scores to weights with a temperature-scaled
negative exponential, and resamples systematically when the effective
sample size degenerates. With no contacts there is no information, so
weights are left untouched.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateWeightsError, InvalidInputError
from .pointcloud import CloudXYZF
from .se3 import (
    PoseSE3,
    quat_geodesic_angle,
    quat_multiply,
    quat_to_matrix,
    rotvec_to_quat,
)

_WEIGHT_SUM_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class ObjectModel:
    """Known object geometry as a surface point cloud in the object frame."""

    points: np.ndarray
    _tree: cKDTree = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if pts.shape[0] < 3:
            raise InvalidInputError(f"object model needs >= 3 points, got {pts.shape[0]}")
        if not np.all(np.isfinite(pts)):
            raise InvalidInputError("object model contains non-finite points")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        # small leaves measurably speed the clustered bulk queries in update()
        object.__setattr__(self, "_tree", cKDTree(pts, leafsize=8))

    def __len__(self):
        return self.points.shape[0]


@dataclass(frozen=True, eq=False)
class ContactSet:
    """Active tactile points (base frame) above the activation threshold."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise InvalidInputError("contact points must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return self.points.shape[0]

    @staticmethod
    def from_tactile_cloud(cloud: CloudXYZF, threshold: float = 0.05) -> "ContactSet":
        """Keep tactile points whose normalized reading exceeds the threshold."""
        return ContactSet(cloud.xyz[cloud.feature > threshold])


@dataclass(frozen=True)
class TrackerConfig:
    particle_count: int = 2048
    sigma_translation: float = 2e-3
    sigma_rotation: float = 0.02
    temperature: float = 1e-4
    activation_threshold: float = 0.05
    ess_fraction: float = 0.5

    def __post_init__(self):
        if self.particle_count < 1:
            raise InvalidInputError("particle_count must be >= 1")
        for name in ("sigma_translation", "sigma_rotation", "temperature", "activation_threshold"):
            if getattr(self, name) < 0:
                raise InvalidInputError(f"{name} must be nonnegative")
        if self.temperature <= 0:
            raise InvalidInputError("temperature must be positive")
        if not (0 < self.ess_fraction <= 1):
            raise InvalidInputError("ess_fraction must lie in (0, 1]")

    @staticmethod
    def from_dict(d: dict) -> "TrackerConfig":
        defaults = TrackerConfig()
        return TrackerConfig(
            particle_count=int(d.get("particle_count", defaults.particle_count)),
            sigma_translation=float(d.get("sigma_translation", defaults.sigma_translation)),
            sigma_rotation=float(d.get("sigma_rotation", defaults.sigma_rotation)),
            temperature=float(d.get("temperature", defaults.temperature)),
            activation_threshold=float(d.get("activation_threshold", defaults.activation_threshold)),
            ess_fraction=float(d.get("ess_fraction", defaults.ess_fraction)),
        )


@dataclass(frozen=True, eq=False)
class ParticleSet:
    """K pose hypotheses: stacked quaternions, translations, and weights."""

    quats: np.ndarray
    trans: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.quats, dtype=np.float64).reshape(-1, 4)
        t = np.asarray(self.trans, dtype=np.float64).reshape(-1, 3)
        w = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if not (q.shape[0] == t.shape[0] == w.shape[0]):
            raise InvalidInputError("quats, trans, weights must share the leading dimension")
        if q.shape[0] == 0:
            raise InvalidInputError("particle set cannot be empty")
        for arr in (q, t, w):
            arr.setflags(write=False)
        object.__setattr__(self, "quats", q)
        object.__setattr__(self, "trans", t)
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return self.quats.shape[0]

    def pose(self, i: int) -> PoseSE3:
        return PoseSE3(self.quats[i], self.trans[i])

    @staticmethod
    def uniform(quats: np.ndarray, trans: np.ndarray) -> "ParticleSet":
        k = np.asarray(quats).shape[0]
        return ParticleSet(quats, trans, np.full(k, 1.0 / k))


def init_particles(
    prior_center: PoseSE3,
    translation_half_extent,
    rotation_half_angle: float,
    count: int,
    rng: np.random.Generator,
) -> ParticleSet:
    """Uniform prior: translation in a centered box, rotation within a cone.

    Rotations perturb the seed orientation by a uniformly random axis and
    an angle uniform in [0, rotation_half_angle].
    """
    half = np.broadcast_to(np.asarray(translation_half_extent, dtype=np.float64), (3,))
    trans = prior_center.t + rng.uniform(-half, half, size=(count, 3))
    axes = rng.normal(size=(count, 3))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    angles = rng.uniform(0.0, rotation_half_angle, size=(count, 1))
    dq = rotvec_to_quat(axes * angles)
    quats = quat_multiply(prior_center.q, dq)
    quats /= np.linalg.norm(quats, axis=1, keepdims=True)
    return ParticleSet.uniform(quats, trans)


def observe_model(obj: ObjectModel, pose: PoseSE3) -> np.ndarray:
    """Object model points transformed by the candidate pose."""
    return pose.apply(obj.points)


def weight_distance(contacts: ContactSet, observed: np.ndarray) -> float:
    """Sum over contacts of the squared distance to the nearest observed point."""
    observed = np.asarray(observed, dtype=np.float64).reshape(-1, 3)
    if observed.shape[0] == 0:
        raise InvalidInputError("observed point set must be nonempty")
    if len(contacts) == 0:
        return 0.0
    d, _ = cKDTree(observed).query(contacts.points)
    return float(np.sum(d * d))


def weight_distance_bruteforce(contacts: ContactSet, observed: np.ndarray) -> float:
    """O(N*M) double loop; the independent check for the accelerated path."""
    observed = np.asarray(observed, dtype=np.float64).reshape(-1, 3)
    if observed.shape[0] == 0:
        raise InvalidInputError("observed point set must be nonempty")
    total = 0.0
    for p in contacts.points:
        diff = observed - p
        total += float(np.min(diff[:, 0] ** 2 + diff[:, 1] ** 2 + diff[:, 2] ** 2))
    return total


def scale_weights(g_values, temperature: float) -> np.ndarray:
    """Normalized weights proportional to exp(-g / temperature).

    Uses max-subtraction in the log domain so any finite g set normalizes
    without overflow. Infinite g yields zero weight.
    """
    if temperature <= 0:
        raise InvalidInputError(f"temperature must be positive, got {temperature}")
    g = np.asarray(g_values, dtype=np.float64).reshape(-1)
    if g.size == 0:
        raise InvalidInputError("empty distance vector")
    if np.any(np.isnan(g)):
        raise InvalidInputError("distance values must not be NaN")
    log_w = -g / temperature
    m = np.max(log_w)
    if not np.isfinite(m):
        raise DegenerateWeightsError("no finite distance values to weight")
    w = np.exp(log_w - m)
    return w / np.sum(w)


def effective_sample_size(weights: np.ndarray) -> float:
    return 1.0 / float(np.sum(np.square(weights)))


def predict(particles: ParticleSet, config: TrackerConfig, rng: np.random.Generator) -> ParticleSet:
    """Random-walk diffusion: Gaussian translation noise, exp-map rotation noise."""
    k = len(particles)
    trans = particles.trans + rng.normal(0.0, config.sigma_translation, size=(k, 3))
    rotvecs = rng.normal(0.0, config.sigma_rotation, size=(k, 3))
    quats = quat_multiply(particles.quats, rotvec_to_quat(rotvecs))
    quats = quats / np.linalg.norm(quats, axis=1, keepdims=True)
    return ParticleSet(quats, trans, particles.weights)


def resample_systematic(particles: ParticleSet, rng: np.random.Generator) -> ParticleSet:
    """Single-offset stratified resampling; output weights are uniform.

    Expected copy count of particle k is K * w_k, exact at rational
    weight boundaries.
    """
    w = particles.weights
    if abs(float(np.sum(w)) - 1.0) > _WEIGHT_SUM_TOL or np.any(w < 0):
        raise InvalidInputError("weights must be normalized before resampling")
    k = len(particles)
    positions = (np.arange(k) + rng.uniform()) / k
    cumsum = np.cumsum(w)
    cumsum[-1] = 1.0
    idx = np.searchsorted(cumsum, positions, side="right")
    idx = np.minimum(idx, k - 1)
    return ParticleSet.uniform(particles.quats[idx], particles.trans[idx])


@dataclass(frozen=True)
class EstimateDiagnostics:
    translation_cov_trace: float
    rotation_spread_rad: float


def estimate(particles: ParticleSet) -> tuple[PoseSE3, EstimateDiagnostics]:
    """Weighted mean translation and weighted chordal-mean rotation.

    The rotation mean is the principal eigenvector of sum_k w_k q_k q_k^T,
    sign-aligned with the highest-weight particle.
    """
    w = particles.weights
    s = float(np.sum(w))
    if abs(s - 1.0) > _WEIGHT_SUM_TOL:
        raise InvalidInputError("weights must be normalized")
    t_mean = w @ particles.trans
    m = np.einsum("k,ki,kj->ij", w, particles.quats, particles.quats)
    eigvals, eigvecs = np.linalg.eigh(m)
    q_mean = eigvecs[:, -1]
    anchor = particles.quats[int(np.argmax(w))]
    if float(np.dot(q_mean, anchor)) < 0.0:
        q_mean = -q_mean
    diff = particles.trans - t_mean
    cov_trace = float(np.sum(w * np.sum(diff * diff, axis=1)))
    spread = float(np.sum(w * quat_geodesic_angle(particles.quats, q_mean)))
    return PoseSE3(q_mean, t_mean), EstimateDiagnostics(cov_trace, spread)


def particle_distances(particles: ParticleSet, contacts: ContactSet, obj: ObjectModel) -> np.ndarray:
    """Per-particle g, evaluated against the prebuilt object-frame KD-tree.

    Contacts are pulled into each particle's object frame, which leaves
    nearest-neighbor distances unchanged and avoids rebuilding a tree per
    particle; agrees with weight_distance(observe_model(...)) to rigid
    floating-point accuracy.
    """
    if len(contacts) == 0:
        return np.zeros(len(particles))
    rot = quat_to_matrix(particles.quats)  # (K, 3, 3)
    # (c - t) @ R applies R^T rowwise; distribute to avoid the (K, M, 3) diff temp
    local = np.matmul(contacts.points[None, :, :], rot)
    local -= np.matmul(particles.trans[:, None, :], rot)
    d, _ = obj._tree.query(local.reshape(-1, 3), workers=-1)
    d = d.reshape(len(particles), len(contacts))
    return np.sum(d * d, axis=1)


@dataclass(frozen=True)
class StepReport:
    ess: float
    min_g: float
    mean_g: float
    resampled: bool
    n_contacts: int


def update(
    particles: ParticleSet,
    contacts: ContactSet,
    obj: ObjectModel,
    config: TrackerConfig,
    rng: np.random.Generator,
) -> tuple[ParticleSet, StepReport]:
    """One predict/weight/resample cycle.

    Empty contacts freeze the weights: diffusion still applies but no
    reweighting or resampling happens (no information, no update).
    """
    particles = predict(particles, config, rng)
    if len(contacts) == 0:
        ess = effective_sample_size(particles.weights)
        return particles, StepReport(ess, float("nan"), float("nan"), False, 0)
    g = particle_distances(particles, contacts, obj)
    weights = scale_weights(g, config.temperature)
    particles = ParticleSet(particles.quats, particles.trans, weights)
    ess = effective_sample_size(weights)
    resampled = ess < config.ess_fraction * len(particles)
    if resampled:
        particles = resample_systematic(particles, rng)
    return particles, StepReport(
        ess=ess,
        min_g=float(np.min(g)),
        mean_g=float(np.mean(g)),
        resampled=resampled,
        n_contacts=len(contacts),
    )


class Tracker:
    """Single-owner convenience wrapper: init once, step per tick, read the estimate."""

    def __init__(
        self,
        obj: ObjectModel,
        config: TrackerConfig,
        prior_center: PoseSE3,
        translation_half_extent,
        rotation_half_angle: float,
        seed: int = 0,
    ):
        self.obj = obj
        self.config = config
        self.rng = np.random.default_rng(seed)
        self.particles = init_particles(
            prior_center,
            translation_half_extent,
            rotation_half_angle,
            config.particle_count,
            self.rng,
        )

    def step(self, contacts: ContactSet) -> StepReport:
        self.particles, report = update(self.particles, contacts, self.obj, self.config, self.rng)
        return report

    def estimate(self) -> tuple[PoseSE3, EstimateDiagnostics]:
        return estimate(self.particles)
