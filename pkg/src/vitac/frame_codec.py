"""Bit-exact wire codec for the pad readout stream.

Frame layout (338 bytes total):

    offset  size  field
    0       2     magic 0xA5 0x5A
    2       1     version (= 1)
    3       1     pad_id
    4       4     seq, unsigned little-endian
    8       8     timestamp_us, unsigned little-endian
    16      320   payload: 256 readings, 10 bits each, packed MSB-first
    336     2     CRC-16/CCITT-FALSE over bytes [0, 336), stored big-endian

The stream decoder resynchronizes on the magic bytes: garbage is skipped
one byte at a time, and a candidate frame that fails CRC costs only its
two magic bytes before the scan resumes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, VitacError
from .sensor_model import PAD_SHAPE, TactileFrame

MAGIC = b"\xa5\x5a"
VERSION = 1
HEADER_LEN = 16
PAYLOAD_LEN = 320  # ceil(256 * 10 / 8)
FRAME_LEN = HEADER_LEN + PAYLOAD_LEN + 2
READING_BITS = 10
MAX_READING = (1 << READING_BITS) - 1


def _make_crc_table() -> list[int]:
    table = []
    for byte in range(256):
        crc = byte << 8
        for _ in range(8):
            crc = ((crc << 1) ^ 0x1021) & 0xFFFF if crc & 0x8000 else (crc << 1) & 0xFFFF
        table.append(crc)
    return table


_CRC_TABLE = _make_crc_table()


def crc16_ccitt_false(data: bytes, crc: int = 0xFFFF) -> int:
    for byte in data:
        crc = ((crc << 8) & 0xFFFF) ^ _CRC_TABLE[(crc >> 8) ^ byte]
    return crc


class FrameDecodeError(VitacError):
    """A candidate frame failed validation."""

    kind = "decode-error"


class NeedMoreDataError(FrameDecodeError):
    kind = "need-more-data"


class BadMagicError(FrameDecodeError):
    kind = "bad-magic"


class BadVersionError(FrameDecodeError):
    kind = "bad-version"


class CrcMismatchError(FrameDecodeError):
    kind = "crc-mismatch"


@dataclass(frozen=True, eq=False)
class WireFrame:
    """A decoded frame: header fields plus the unpacked 16x16 reading grid."""

    pad_id: int
    seq: int
    timestamp_us: int
    readings: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.readings, dtype=np.uint16).reshape(PAD_SHAPE)
        r.setflags(write=False)
        object.__setattr__(self, "readings", r)

    def to_tactile_frame(self) -> TactileFrame:
        return TactileFrame(self.pad_id, self.timestamp_us, self.readings, normalized=False)


def pack_readings(readings: np.ndarray) -> bytes:
    """Pack 256 10-bit readings MSB-first into 320 bytes."""
    flat = np.asarray(readings, dtype=np.uint16).reshape(256)
    if np.any(flat > MAX_READING):
        raise InvalidInputError(f"readings exceed {READING_BITS}-bit range")
    shifts = np.arange(READING_BITS - 1, -1, -1)
    bits = ((flat[:, None] >> shifts) & 1).astype(np.uint8).ravel()
    return np.packbits(bits).tobytes()


def unpack_readings(payload: bytes) -> np.ndarray:
    if len(payload) != PAYLOAD_LEN:
        raise InvalidInputError(f"payload must be {PAYLOAD_LEN} bytes, got {len(payload)}")
    bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8)).reshape(256, READING_BITS)
    weights = (1 << np.arange(READING_BITS - 1, -1, -1)).astype(np.uint16)
    return (bits.astype(np.uint16) * weights).sum(axis=1).astype(np.uint16).reshape(PAD_SHAPE)


def encode_frame(frame: TactileFrame, seq: int) -> bytes:
    """Serialize a raw frame; decode_frame inverts this exactly."""
    if frame.normalized:
        raise InvalidInputError("only raw frames can be encoded")
    if np.any(frame.readings > MAX_READING):
        raise InvalidInputError(f"readings exceed {READING_BITS}-bit range")
    if not (0 <= seq < 1 << 32):
        raise InvalidInputError(f"seq {seq} does not fit in u32")
    if not (0 <= frame.pad_id < 256):
        raise InvalidInputError(f"pad_id {frame.pad_id} does not fit in one byte")
    if not (0 <= frame.timestamp_us < 1 << 64):
        raise InvalidInputError("timestamp_us does not fit in u64")
    head = (
        MAGIC
        + bytes([VERSION, frame.pad_id])
        + seq.to_bytes(4, "little")
        + frame.timestamp_us.to_bytes(8, "little")
    )
    body = head + pack_readings(frame.readings)
    crc = crc16_ccitt_false(body)
    return body + crc.to_bytes(2, "big")


def decode_frame(data: bytes) -> WireFrame:
    """Validate and unpack one 338-byte candidate starting at its magic."""
    if len(data) < FRAME_LEN:
        raise NeedMoreDataError(f"need {FRAME_LEN} bytes, got {len(data)}")
    data = bytes(data[:FRAME_LEN])
    if data[:2] != MAGIC:
        raise BadMagicError("candidate does not start with magic bytes")
    stored = int.from_bytes(data[336:338], "big")
    if crc16_ccitt_false(data[:336]) != stored:
        raise CrcMismatchError("CRC mismatch")
    if data[2] != VERSION:
        raise BadVersionError(f"unsupported version {data[2]}")
    return WireFrame(
        pad_id=data[3],
        seq=int.from_bytes(data[4:8], "little"),
        timestamp_us=int.from_bytes(data[8:16], "little"),
        readings=unpack_readings(data[HEADER_LEN : HEADER_LEN + PAYLOAD_LEN]),
    )


@dataclass
class DecodeDiagnostics:
    """Counters surfaced by the stream decoder; anomalies are never fatal."""

    frames: int = 0
    bytes_skipped: int = 0
    resync_events: int = 0
    crc_mismatches: int = 0
    bad_versions: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


class StreamDecoder:
    """Incremental decoder over a possibly noisy byte channel.

    Feed arbitrary chunks in arrival order; complete valid frames are
    emitted in order. The emitted sequence is independent of chunking.
    Owned by one consumer at a time.
    """

    def __init__(self):
        self._buf = bytearray()
        self.diagnostics = DecodeDiagnostics()

    def feed(self, chunk: bytes) -> list[WireFrame]:
        self._buf.extend(chunk)
        frames = []
        while True:
            start = self._buf.find(MAGIC)
            if start < 0:
                # keep a trailing first-magic-byte, it may pair with the next chunk
                keep = 1 if self._buf[-1:] == MAGIC[:1] else 0
                dropped = len(self._buf) - keep
                if dropped:
                    self._skip(dropped)
                del self._buf[:dropped]
                break
            if start > 0:
                self._skip(start)
                del self._buf[:start]
            if len(self._buf) < FRAME_LEN:
                break
            try:
                frames.append(decode_frame(self._buf))
                self.diagnostics.frames += 1
                del self._buf[:FRAME_LEN]
            except CrcMismatchError:
                self.diagnostics.crc_mismatches += 1
                self._skip(2)
                del self._buf[:2]
            except BadVersionError:
                self.diagnostics.bad_versions += 1
                self._skip(2)
                del self._buf[:2]
        return frames

    def _skip(self, n: int) -> None:
        self.diagnostics.bytes_skipped += n
        self.diagnostics.resync_events += 1

    @property
    def pending_bytes(self) -> int:
        return len(self._buf)
