import numpy as np
import pytest

from vitac.errors import InvalidInputError
from vitac.frame_codec import (
    FRAME_LEN,
    PAYLOAD_LEN,
    BadVersionError,
    CrcMismatchError,
    NeedMoreDataError,
    StreamDecoder,
    crc16_ccitt_false,
    decode_frame,
    encode_frame,
    pack_readings,
    unpack_readings,
)
from vitac.sensor_model import TactileFrame


def random_frame(rng, pad_id=None):
    return TactileFrame(
        pad_id=int(rng.integers(0, 256)) if pad_id is None else pad_id,
        timestamp_us=int(rng.integers(0, 2**63)),
        readings=rng.integers(0, 1024, size=(16, 16)),
    )


def test_crc_check_value():
    # CRC-16/CCITT-FALSE reference check value
    assert crc16_ccitt_false(b"123456789") == 0x29B1


def test_payload_size():
    assert PAYLOAD_LEN == -(-256 * 10 // 8) == 320
    assert FRAME_LEN == 338


def test_all_zero_frame():
    frame = TactileFrame(0, 0, np.zeros((16, 16), dtype=int))
    data = encode_frame(frame, seq=0)
    assert len(data) == 338
    assert data[16:336] == bytes(320)


def test_all_ones_payload():
    frame = TactileFrame(0, 0, np.full((16, 16), 1023))
    data = encode_frame(frame, seq=0)
    assert data[16:336] == b"\xff" * 320


def test_pack_unpack_roundtrip():
    rng = np.random.default_rng(0)
    for _ in range(100):
        readings = rng.integers(0, 1024, size=(16, 16))
        assert np.array_equal(unpack_readings(pack_readings(readings)), readings)


def test_encode_decode_roundtrip():
    rng = np.random.default_rng(1)
    for _ in range(200):
        frame = random_frame(rng)
        seq = int(rng.integers(0, 2**32))
        wire = decode_frame(encode_frame(frame, seq))
        assert wire.pad_id == frame.pad_id
        assert wire.seq == seq
        assert wire.timestamp_us == frame.timestamp_us
        assert np.array_equal(wire.readings, frame.readings)


def test_encode_rejects_out_of_range():
    high = np.zeros((16, 16), dtype=int)
    high[0, 0] = 1024
    with pytest.raises(InvalidInputError):
        encode_frame(TactileFrame(0, 0, high), seq=0)
    frame = TactileFrame(0, 0, np.zeros((16, 16), dtype=int))
    with pytest.raises(InvalidInputError):
        encode_frame(frame, seq=2**32)


def test_decode_flipped_byte_is_crc_mismatch():
    rng = np.random.default_rng(2)
    data = bytearray(encode_frame(random_frame(rng), seq=7))
    for pos in (16, 100, 335):
        bad = bytearray(data)
        bad[pos] ^= 0x40
        with pytest.raises(CrcMismatchError):
            decode_frame(bytes(bad))


def test_decode_bad_version():
    rng = np.random.default_rng(3)
    data = bytearray(encode_frame(random_frame(rng), seq=1))
    data[2] = 2
    # patch the CRC so only the version check can fail
    crc = crc16_ccitt_false(bytes(data[:336]))
    data[336:338] = crc.to_bytes(2, "big")
    with pytest.raises(BadVersionError):
        decode_frame(bytes(data))


def test_decode_short_input():
    with pytest.raises(NeedMoreDataError):
        decode_frame(b"\xa5\x5a\x01")


def _stream_of(frames_and_seqs):
    return b"".join(encode_frame(f, s) for f, s in frames_and_seqs)


def test_stream_decoder_chunked():
    rng = np.random.default_rng(4)
    frames = [(random_frame(rng), i) for i in range(10)]
    stream = _stream_of(frames)
    dec = StreamDecoder()
    out = []
    for i in range(0, len(stream), 7):
        out.extend(dec.feed(stream[i : i + 7]))
        assert dec.pending_bytes <= 2 * FRAME_LEN
    assert [w.seq for w in out] == list(range(10))
    assert dec.diagnostics.frames == 10
    assert dec.diagnostics.bytes_skipped == 0


def test_stream_decoder_chunking_invariance():
    rng = np.random.default_rng(5)
    frames = [(random_frame(rng), i) for i in range(20)]
    stream = b"junk" + _stream_of(frames[:10]) + b"\xa5noise" + _stream_of(frames[10:])
    reference = None
    for trial in range(50):
        cuts = np.sort(rng.integers(0, len(stream) + 1, size=rng.integers(1, 40)))
        chunks = np.split(np.frombuffer(stream, dtype=np.uint8), cuts)
        dec = StreamDecoder()
        out = []
        for chunk in chunks:
            out.extend(dec.feed(chunk.tobytes()))
        got = [(w.pad_id, w.seq, w.timestamp_us) for w in out]
        if reference is None:
            reference = got
            assert [g[1] for g in got] == list(range(20))
        else:
            assert got == reference


def test_stream_decoder_prepended_garbage():
    rng = np.random.default_rng(6)
    frames = [(random_frame(rng), i) for i in range(3)]
    garbage = b"\x01\x02\x03\x04\x05"
    dec = StreamDecoder()
    out = dec.feed(garbage + _stream_of(frames))
    assert [w.seq for w in out] == [0, 1, 2]
    assert dec.diagnostics.bytes_skipped == 5


def test_stream_decoder_corruption_recovery():
    rng = np.random.default_rng(7)
    frames = [(random_frame(rng), i) for i in range(10)]
    stream = bytearray(_stream_of(frames))
    pos = 3 * FRAME_LEN + int(rng.integers(0, FRAME_LEN))  # inside frame 3
    stream[pos] ^= 0xFF
    dec = StreamDecoder()
    out = dec.feed(bytes(stream))
    seqs = [w.seq for w in out]
    assert len(seqs) >= 9
    assert set(range(10)) - set(seqs) <= {3}


def test_stream_decoder_corruption_fuzz():
    # fuzz oracle: any single corrupted byte costs at most the frame it hits
    rng = np.random.default_rng(8)
    frames = [(random_frame(rng), i) for i in range(10)]
    clean = _stream_of(frames)
    for _ in range(300):
        stream = bytearray(clean)
        pos = int(rng.integers(0, len(stream)))
        flip = int(rng.integers(1, 256))
        stream[pos] ^= flip
        dec = StreamDecoder()
        out = dec.feed(bytes(stream))
        assert len(out) >= 9, f"lost too many frames corrupting byte {pos}"


def test_stream_decoder_burst_resync():
    rng = np.random.default_rng(9)
    frames = [(random_frame(rng), i) for i in range(6)]
    stream = _stream_of(frames[:3]) + bytes(rng.integers(0, 256, size=200, dtype=np.uint8)) + _stream_of(frames[3:])
    dec = StreamDecoder()
    out = dec.feed(stream)
    seqs = [w.seq for w in out]
    # every intact frame after the burst is recovered
    assert seqs[:3] == [0, 1, 2]
    assert seqs[-3:] == [3, 4, 5]
