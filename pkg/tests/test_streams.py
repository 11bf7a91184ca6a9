import numpy as np
import pytest

from ionhbt.streams import (
    PS_PER_S,
    StreamFormatError,
    TimeTagStream,
    read_stream,
    seconds_to_ps,
    write_stream,
)


def make_stream(n=1000, seed=0, duration=1.0, channel=0):
    rng = np.random.default_rng(seed)
    tags = np.unique(rng.integers(0, int(duration * PS_PER_S), size=n))
    return TimeTagStream(channel, tags.astype(np.uint64), duration,
                         metadata={"seed": seed})


class TestStreamType:
    def test_rejects_unsorted(self):
        with pytest.raises(StreamFormatError):
            TimeTagStream(0, np.array([5, 3], dtype=np.uint64), 1.0)

    def test_rejects_duplicates(self):
        with pytest.raises(StreamFormatError):
            TimeTagStream(0, np.array([3, 3], dtype=np.uint64), 1.0)

    def test_rejects_tag_beyond_duration(self):
        with pytest.raises(StreamFormatError):
            TimeTagStream(0, np.array([2 * PS_PER_S], dtype=np.uint64), 1.0)

    def test_rate(self):
        stream = TimeTagStream(0, np.array([1, 2], dtype=np.uint64), 2.0)
        assert stream.rate == 1.0


class TestRoundTrip:
    def test_bit_exact_round_trip(self, tmp_path):
        stream = make_stream()
        path = tmp_path / "chan.tags"
        write_stream(stream, path)
        back = read_stream(path)
        assert back.channel_id == stream.channel_id
        assert back.duration == stream.duration
        assert np.array_equal(back.timestamps, stream.timestamps)
        assert back.metadata["seed"] == 0

    def test_write_is_deterministic(self, tmp_path):
        stream = make_stream(seed=3)
        p1, p2 = tmp_path / "a.tags", tmp_path / "b.tags"
        write_stream(stream, p1)
        write_stream(stream, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_empty_stream_round_trip(self, tmp_path):
        stream = TimeTagStream(1, np.array([], dtype=np.uint64), 0.5)
        path = tmp_path / "empty.tags"
        write_stream(stream, path)
        back = read_stream(path)
        assert len(back) == 0
        assert back.duration == 0.5


class TestFormatErrors:
    def test_bad_magic_names_offset(self, tmp_path):
        path = tmp_path / "bad.tags"
        path.write_bytes(b"JUNK" + b"\x00" * 12)
        with pytest.raises(StreamFormatError, match="byte offset 0"):
            read_stream(path)

    def test_truncated_header(self, tmp_path):
        path = tmp_path / "short.tags"
        path.write_bytes(b"IHBT")
        with pytest.raises(StreamFormatError, match="offset 0"):
            read_stream(path)

    def test_ragged_timestamp_section(self, tmp_path):
        stream = make_stream(n=10)
        path = tmp_path / "ragged.tags"
        write_stream(stream, path)
        path.write_bytes(path.read_bytes() + b"\x01\x02\x03")
        with pytest.raises(StreamFormatError, match="multiple"):
            read_stream(path)

    def test_non_monotonic_body_names_offset(self, tmp_path):
        path = tmp_path / "nonmono.tags"
        header = b"IHBT" + (1).to_bytes(2, "little") + (0).to_bytes(2, "little") \
            + b"\x00" * 8
        body = np.array([100, 50], dtype="<u8").tobytes()
        path.write_bytes(header + body)
        with pytest.raises(StreamFormatError, match="byte offset 24"):
            read_stream(path)

    def test_unsupported_version(self, tmp_path):
        path = tmp_path / "v9.tags"
        header = b"IHBT" + (9).to_bytes(2, "little") + (0).to_bytes(2, "little") \
            + b"\x00" * 8
        path.write_bytes(header)
        with pytest.raises(StreamFormatError, match="version"):
            read_stream(path)


class TestQuantization:
    def test_seconds_to_ps_rounds(self):
        out = seconds_to_ps(np.array([1e-12, 1.4e-12, 1.6e-12]))
        assert out.tolist() == [1, 1, 2]
