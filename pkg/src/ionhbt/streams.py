"""Time-tag streams and their on-disk format.

A stream is one detector channel's click times as strictly increasing
picosecond integers.  Files carry a fixed 16-byte header (magic "IHBT",
version, channel id, reserved) followed by consecutive little-endian
unsigned 64-bit timestamps; run metadata lives in a JSON sidecar next to
the binary.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"IHBT"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHH8s")  # magic, version, channel, reserved
PS_PER_S = 1_000_000_000_000


class StreamFormatError(ValueError):
    """A tag file violates the on-disk format; message names the byte offset."""


@dataclass
class TimeTagStream:
    """Ordered click times of one detector channel."""

    channel_id: int
    timestamps: np.ndarray  # ps, uint64, strictly increasing
    duration: float  # s
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.uint64)
        self.timestamps = ts
        if self.duration <= 0:
            raise StreamFormatError("stream duration must be positive")
        if len(ts):
            if (np.diff(ts.astype(np.int64)) <= 0).any():
                raise StreamFormatError("timestamps must be strictly increasing")
            if int(ts[-1]) >= self.duration * PS_PER_S:
                raise StreamFormatError("timestamp beyond stream duration")

    def __len__(self) -> int:
        return len(self.timestamps)

    @property
    def rate(self) -> float:
        """Mean click rate, Hz."""
        return len(self.timestamps) / self.duration


def write_stream(stream: TimeTagStream, path) -> None:
    path = Path(path)
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, stream.channel_id, b"\x00" * 8)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(stream.timestamps.astype("<u8").tobytes())
    sidecar = dict(stream.metadata)
    sidecar.update({
        "channel_id": stream.channel_id,
        "duration_s": stream.duration,
        "count": int(len(stream.timestamps)),
        "rate_hz": stream.rate,
    })
    with open(path.with_suffix(path.suffix + ".json"), "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_stream(path) -> TimeTagStream:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise StreamFormatError(
            f"{path}: truncated header ({len(raw)} bytes) at byte offset 0")
    magic, version, channel, _ = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise StreamFormatError(
            f"{path}: bad magic {magic!r} at byte offset 0 (expected {MAGIC!r})")
    if version != FORMAT_VERSION:
        raise StreamFormatError(
            f"{path}: unsupported version {version} at byte offset 4")
    body = raw[_HEADER.size:]
    if len(body) % 8:
        raise StreamFormatError(
            f"{path}: timestamp section length {len(body)} is not a multiple "
            f"of 8 at byte offset {_HEADER.size}")
    ts = np.frombuffer(body, dtype="<u8")
    diffs = np.diff(ts.astype(np.int64))
    bad = np.where(diffs <= 0)[0]
    if len(bad):
        offset = _HEADER.size + 8 * (int(bad[0]) + 1)
        raise StreamFormatError(
            f"{path}: timestamps not strictly increasing at byte offset {offset}")
    metadata = {}
    sidecar = path.with_suffix(path.suffix + ".json")
    duration = None
    if sidecar.exists():
        metadata = json.loads(sidecar.read_text())
        duration = metadata.get("duration_s")
    if duration is None:
        # fall back to the last tag; sidecar-less files stay readable
        duration = (int(ts[-1]) + 1) / PS_PER_S if len(ts) else 1.0
    return TimeTagStream(channel_id=channel, timestamps=ts.copy(),
                         duration=float(duration), metadata=metadata)


def seconds_to_ps(times: np.ndarray) -> np.ndarray:
    """Quantize float seconds to the 1 ps integer grid of the file format."""
    return np.round(np.asarray(times, dtype=float) * PS_PER_S).astype(np.uint64)
