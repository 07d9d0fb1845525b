"""Visuo-tactile perception toolkit.

Sensor response modeling and calibration, the pad readout wire codec,
multimodal stream synchronization, visuo-tactile point fusion, tactile
particle-filter pose tracking, and a synthetic contact simulator that
supplies ground truth for all of it.
"""

from .errors import (
    CalibrationMismatchError,
    ChecksumError,
    DegenerateFitError,
    DegenerateWeightsError,
    EpisodeLoadError,
    EpisodeVersionError,
    InsufficientDataError,
    InvalidInputError,
    SaturatedReadingError,
    StreamStarvedError,
    TruncatedFileError,
    VitacError,
)
from .se3 import PoseSE3
from .sensor_model import (
    ConsistencyReport,
    FitResult,
    PadCalibration,
    TactileFrame,
    TaxelResponseModel,
    consistency_stats,
    fit_response,
    force_to_reading,
    normalize_frame,
    reading_to_force,
)
from .frame_codec import (
    FRAME_LEN,
    DecodeDiagnostics,
    StreamDecoder,
    WireFrame,
    decode_frame,
    encode_frame,
)
from .stream_sync import (
    Episode,
    SyncedTuple,
    TimedSample,
    align,
    episode_stats,
    read_episode,
    write_episode,
)
from .kinematics import (
    JointState,
    KinematicChain,
    Link,
    PadMount,
    TaxelGrid,
    forward_kinematics,
    tactile_point_cloud,
    taxel_points,
)
from .pointcloud import (
    AABB,
    BASE_FRAME,
    CloudXYZF,
    FusedCloud,
    crop_aabb,
    fps_downsample,
    fps_indices,
    fuse,
    merge,
    read_cloud_ply,
    transform,
    write_cloud_ply,
)
from .pose_tracker import (
    ContactSet,
    ObjectModel,
    ParticleSet,
    Tracker,
    TrackerConfig,
    estimate,
    init_particles,
    observe_model,
    predict,
    resample_systematic,
    scale_weights,
    update,
    weight_distance,
)
from .sim_oracle import (
    GroundTruth,
    Primitive,
    SceneSpec,
    render_episode,
    sample_object_cloud,
    simulate_contact,
    two_finger_gripper,
)

__version__ = "0.1.0"
