"""Alignment of timestamped streams into fixed-rate tuples, plus episode files.

Alignment picks, for every tick of the output grid, the nearest sample per
stream within a tolerance; a tick missing any stream is dropped and
reported rather than padded. The episode container is a binary file with a
JSON header and CRC32-protected records, so float payloads round-trip
bit-exact.
"""

from __future__ import annotations

import bisect
import json
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ChecksumError,
    EpisodeVersionError,
    InvalidInputError,
    StreamStarvedError,
    TruncatedFileError,
)
from .kinematics import JointState
from .pointcloud import CloudXYZF, FusedCloud
from .sensor_model import TactileFrame

JOINTS_STREAM = "joints"

EPISODE_MAGIC = b"VTEP"
EPISODE_VERSION = 1


def tactile_stream(pad_id: int) -> str:
    return f"tactile/{pad_id}"


def camera_stream(cam_id: int) -> str:
    return f"camera/{cam_id}"


@dataclass(frozen=True)
class TimedSample:
    stream_id: str
    timestamp_us: int
    payload: object


@dataclass(frozen=True)
class SyncedTuple:
    """One output tick: exactly one sample per configured stream."""

    tick_time_us: int
    members: dict

    def tactile_frames(self) -> dict:
        """pad_id -> TactileFrame for every tactile member."""
        out = {}
        for sid, sample in self.members.items():
            if sid.startswith("tactile/"):
                out[int(sid.split("/", 1)[1])] = sample.payload
        return out

    def clouds(self) -> dict:
        """cam_id -> CloudXYZF for every camera member."""
        out = {}
        for sid, sample in self.members.items():
            if sid.startswith("camera/"):
                out[int(sid.split("/", 1)[1])] = sample.payload
        return out

    def joint_state(self):
        sample = self.members.get(JOINTS_STREAM)
        return None if sample is None else sample.payload

    def max_skew_us(self) -> int:
        if not self.members:
            return 0
        return max(abs(s.timestamp_us - self.tick_time_us) for s in self.members.values())


@dataclass(frozen=True)
class DroppedTick:
    tick_time_us: int
    missing: tuple


@dataclass
class DropReport:
    ticks_total: int = 0
    dropped: list = field(default_factory=list)
    per_stream: dict = field(default_factory=dict)

    @property
    def ticks_emitted(self) -> int:
        return self.ticks_total - len(self.dropped)

    def to_metadata(self) -> dict:
        return {
            "ticks_total": self.ticks_total,
            "dropped_ticks": [
                {"tick_time_us": d.tick_time_us, "missing": list(d.missing)} for d in self.dropped
            ],
            "drops_by_stream": dict(self.per_stream),
        }


def align(streams, rate_hz: float = 10.0, tolerance_us: int = 50_000):
    """Match samples to a fixed tick grid; returns (tuples, drop_report).

    streams: mapping stream_id -> time-sorted sequence of TimedSample.
    Ticks sit on integer multiples of the period, covering the interval
    where every stream has data. A tick is emitted only when every stream
    has a sample within the tolerance; otherwise the tick lands in the
    drop report with the offending streams named.
    """
    if rate_hz <= 0:
        raise InvalidInputError(f"rate must be positive, got {rate_hz}")
    if tolerance_us < 0:
        raise InvalidInputError("tolerance must be nonnegative")
    if not streams:
        raise InvalidInputError("no streams configured")
    times = {}
    for sid, samples in streams.items():
        ts = [s.timestamp_us for s in samples]
        if not ts:
            raise StreamStarvedError(f"stream {sid!r} has no samples")
        if any(b < a for a, b in zip(ts, ts[1:])):
            raise InvalidInputError(f"stream {sid!r} timestamps are not sorted")
        times[sid] = ts
    period_us = max(1, round(1e6 / rate_hz))
    window_start = max(ts[0] for ts in times.values())
    window_end = min(ts[-1] for ts in times.values())
    first_tick = -(-window_start // period_us) * period_us

    tuples = []
    report = DropReport(per_stream={sid: 0 for sid in streams})
    tick = first_tick
    while tick <= window_end:
        members = {}
        missing = []
        for sid, samples in streams.items():
            idx = _nearest_index(times[sid], tick)
            sample = samples[idx]
            if abs(sample.timestamp_us - tick) <= tolerance_us:
                members[sid] = sample
            else:
                missing.append(sid)
        report.ticks_total += 1
        if missing:
            report.dropped.append(DroppedTick(tick, tuple(missing)))
            for sid in missing:
                report.per_stream[sid] += 1
        else:
            tuples.append(SyncedTuple(tick, members))
        tick += period_us
    return tuples, report


def _nearest_index(sorted_ts, t: int) -> int:
    i = bisect.bisect_left(sorted_ts, t)
    if i == 0:
        return 0
    if i == len(sorted_ts):
        return i - 1
    return i - 1 if t - sorted_ts[i - 1] <= sorted_ts[i] - t else i


@dataclass
class Episode:
    """Ordered synchronized tuples plus the configuration that produced them."""

    rate_hz: float
    tolerance_us: int
    streams: list
    tuples: list
    calibration_ref: str = ""
    metadata: dict = field(default_factory=dict)


@dataclass(frozen=True)
class EpisodeStats:
    duration_s: float
    tuple_count: int
    expected_ticks: int
    dropped_ticks: int
    max_skew_us: int
    drops_by_stream: dict

    @property
    def drop_rate(self) -> float:
        return self.dropped_ticks / self.expected_ticks if self.expected_ticks else 0.0


def episode_stats(episode: Episode) -> EpisodeStats:
    """Duration, drop counts inferred from the tick grid, and max member skew."""
    tuples = episode.tuples
    period_us = max(1, round(1e6 / episode.rate_hz))
    if tuples:
        first, last = tuples[0].tick_time_us, tuples[-1].tick_time_us
        duration_s = (last - first) / 1e6
        expected = (last - first) // period_us + 1
    else:
        duration_s, expected = 0.0, 0
    max_skew = max((t.max_skew_us() for t in tuples), default=0)
    drops_meta = episode.metadata.get("drop_report", {})
    return EpisodeStats(
        duration_s=duration_s,
        tuple_count=len(tuples),
        expected_ticks=int(expected),
        dropped_ticks=int(expected) - len(tuples),
        max_skew_us=int(max_skew),
        drops_by_stream=dict(drops_meta.get("drops_by_stream", {})),
    )


_TAG_TACTILE = 1
_TAG_CLOUD = 2
_TAG_JOINTS = 3
_TAG_FUSED = 4


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<H", len(raw)) + raw


def _encode_payload(payload) -> bytes:
    if isinstance(payload, TactileFrame):
        head = struct.pack("<BHBq", _TAG_TACTILE, payload.pad_id, int(payload.normalized), payload.timestamp_us)
        if payload.normalized:
            return head + payload.readings.astype("<f8").tobytes()
        return head + payload.readings.astype("<u2").tobytes()
    if isinstance(payload, CloudXYZF):
        return (
            struct.pack("<B", _TAG_CLOUD)
            + _pack_str(payload.frame)
            + struct.pack("<I", len(payload))
            + payload.points.astype("<f8").tobytes()
        )
    if isinstance(payload, FusedCloud):
        return (
            struct.pack("<B", _TAG_FUSED)
            + _pack_str(payload.frame)
            + struct.pack("<I", len(payload))
            + payload.points.astype("<f8").tobytes()
        )
    if isinstance(payload, JointState):
        return (
            struct.pack("<BqH", _TAG_JOINTS, payload.timestamp_us, len(payload.positions))
            + payload.positions.astype("<f8").tobytes()
        )
    raise InvalidInputError(f"unsupported payload type {type(payload).__name__}")


class _Reader:
    def __init__(self, buf: bytes, context: str):
        self.buf = buf
        self.pos = 0
        self.context = context

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise TruncatedFileError(f"{self.context}: record ends early")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def read_str(self) -> str:
        (n,) = self.unpack("<H")
        return self.take(n).decode("utf-8")


def _decode_payload(r: _Reader):
    (tag,) = r.unpack("<B")
    if tag == _TAG_TACTILE:
        pad_id, normalized, ts = r.unpack("<HBq")
        if normalized:
            readings = np.frombuffer(r.take(256 * 8), dtype="<f8").reshape(16, 16)
        else:
            readings = np.frombuffer(r.take(256 * 2), dtype="<u2").reshape(16, 16)
        return TactileFrame(pad_id, ts, readings, normalized=bool(normalized))
    if tag in (_TAG_CLOUD, _TAG_FUSED):
        frame = r.read_str()
        (n,) = r.unpack("<I")
        width = 4 if tag == _TAG_CLOUD else 6
        pts = np.frombuffer(r.take(n * width * 8), dtype="<f8").reshape(n, width)
        cls = CloudXYZF if tag == _TAG_CLOUD else FusedCloud
        return cls(pts, frame)
    if tag == _TAG_JOINTS:
        ts, n = r.unpack("<qH")
        positions = np.frombuffer(r.take(n * 8), dtype="<f8")
        return JointState(positions, ts)
    raise ChecksumError(f"{r.context}: unknown payload tag {tag}")


def _encode_tuple(tup: SyncedTuple) -> bytes:
    parts = [struct.pack("<qH", tup.tick_time_us, len(tup.members))]
    for sid in sorted(tup.members):
        sample = tup.members[sid]
        parts.append(_pack_str(sid))
        parts.append(struct.pack("<q", sample.timestamp_us))
        parts.append(_encode_payload(sample.payload))
    return b"".join(parts)


def _decode_tuple(buf: bytes, context: str) -> SyncedTuple:
    r = _Reader(buf, context)
    tick, n_members = r.unpack("<qH")
    members = {}
    for _ in range(n_members):
        sid = r.read_str()
        (ts,) = r.unpack("<q")
        members[sid] = TimedSample(sid, ts, _decode_payload(r))
    return SyncedTuple(tick, members)


def write_episode(episode: Episode, path) -> None:
    header = json.dumps(
        {
            "rate_hz": episode.rate_hz,
            "tolerance_us": episode.tolerance_us,
            "streams": list(episode.streams),
            "calibration_ref": episode.calibration_ref,
            "metadata": episode.metadata,
            "tuple_count": len(episode.tuples),
        }
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(EPISODE_MAGIC)
        fh.write(struct.pack("<H", EPISODE_VERSION))
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for tup in episode.tuples:
            payload = _encode_tuple(tup)
            fh.write(struct.pack("<I", len(payload)))
            fh.write(payload)
            fh.write(struct.pack("<I", zlib.crc32(payload)))


def read_episode(path) -> Episode:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != EPISODE_MAGIC:
        raise EpisodeVersionError(f"{path}: bad magic, not an episode file")
    if len(data) < 10:
        raise TruncatedFileError(f"{path}: header incomplete")
    (version,) = struct.unpack_from("<H", data, 4)
    if version != EPISODE_VERSION:
        raise EpisodeVersionError(f"{path}: unsupported version {version}")
    (header_len,) = struct.unpack_from("<I", data, 6)
    pos = 10
    if pos + header_len > len(data):
        raise TruncatedFileError(f"{path}: header incomplete")
    header = json.loads(data[pos : pos + header_len].decode("utf-8"))
    pos += header_len
    tuples = []
    for i in range(int(header.get("tuple_count", 0))):
        ctx = f"{path} record {i}"
        if pos + 4 > len(data):
            raise TruncatedFileError(f"{ctx}: length prefix missing")
        (n,) = struct.unpack_from("<I", data, pos)
        pos += 4
        if pos + n + 4 > len(data):
            raise TruncatedFileError(f"{ctx}: payload or CRC missing")
        payload = data[pos : pos + n]
        pos += n
        (stored,) = struct.unpack_from("<I", data, pos)
        pos += 4
        if zlib.crc32(payload) != stored:
            raise ChecksumError(f"{ctx}: CRC32 mismatch")
        tuples.append(_decode_tuple(payload, ctx))
    return Episode(
        rate_hz=float(header["rate_hz"]),
        tolerance_us=int(header["tolerance_us"]),
        streams=list(header["streams"]),
        tuples=tuples,
        calibration_ref=str(header.get("calibration_ref", "")),
        metadata=dict(header.get("metadata", {})),
    )
