"""TTAG binary time-tag files and their CSV debug export.

A TTAG file holds one detector channel: a 16-byte little-endian header
{magic "TTAG", version u16, channel u16, count u64} followed by `count`
u64 picosecond timestamps.
"""

import logging
import struct
from collections.abc import Iterable, Iterator
from pathlib import Path

import numpy as np
import pandas as pd

from tripletsim.errors import TimeTagFormatError
from tripletsim.models.results import TimeTagStream

logger = logging.getLogger(__name__)

MAGIC = b"TTAG"
VERSION = 1
HEADER = struct.Struct("<4sHHQ")
TIMESTAMP_DTYPE = np.dtype("<u8")


def _read_header(f, path: Path) -> tuple[int, int]:
    raw = f.read(HEADER.size)
    if len(raw) != HEADER.size:
        raise TimeTagFormatError(f"timetags: {path} is shorter than the {HEADER.size}-byte header")
    magic, version, channel, count = HEADER.unpack(raw)
    if magic != MAGIC:
        raise TimeTagFormatError(f"timetags: {path} has magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise TimeTagFormatError(f"timetags: {path} has unsupported version {version}")
    return channel, count


def write_timetags(path: str | Path, stream: TimeTagStream) -> Path:
    path = Path(path)
    if not stream.is_sorted():
        raise TimeTagFormatError(f"timetags: {stream.label} timestamps are not strictly increasing")
    if stream.timestamps_ps.size and stream.timestamps_ps[0] < 0:
        raise TimeTagFormatError(f"timetags: {stream.label} has negative timestamps")
    with open(path, "wb") as f:
        f.write(HEADER.pack(MAGIC, VERSION, stream.channel, len(stream)))
        f.write(stream.timestamps_ps.astype(TIMESTAMP_DTYPE).tobytes())
    logger.info(f"Wrote {len(stream)} tags of {stream.label} to {path}")
    return path


def read_timetags(
    path: str | Path, label: str | None = None, duration_ps: int | None = None
) -> TimeTagStream:
    """Load a whole TTAG file.

    The file does not store the simulated span, so duration_ps defaults to one past the last tag.
    """
    path = Path(path)
    with open(path, "rb") as f:
        channel, count = _read_header(f, path)
    size = path.stat().st_size
    if size != HEADER.size + count * TIMESTAMP_DTYPE.itemsize:
        held = (size - HEADER.size) / TIMESTAMP_DTYPE.itemsize
        raise TimeTagFormatError(f"timetags: {path} declares {count} tags but holds {held:g}")
    blocks = list(iter_timetag_blocks(path))
    timestamps = np.concatenate(blocks) if blocks else np.empty(0, dtype=np.int64)
    if np.any(np.diff(timestamps) <= 0):
        raise TimeTagFormatError(f"timetags: {path} timestamps are not strictly increasing")
    if duration_ps is None:
        duration_ps = int(timestamps[-1]) + 1 if count else 0
    return TimeTagStream(
        label=label or path.stem, channel=channel, timestamps_ps=timestamps, duration_ps=duration_ps
    )


def iter_timetag_blocks(path: str | Path, block_size: int = 1_000_000) -> Iterator[np.ndarray]:
    """Stream a TTAG file in blocks of at most block_size timestamps."""
    path = Path(path)
    with open(path, "rb") as f:
        _, count = _read_header(f, path)
        remaining = count
        while remaining:
            n = min(block_size, remaining)
            buffer = f.read(n * TIMESTAMP_DTYPE.itemsize)
            if len(buffer) != n * TIMESTAMP_DTYPE.itemsize:
                held = count - remaining + len(buffer) // TIMESTAMP_DTYPE.itemsize
                raise TimeTagFormatError(f"timetags: {path} ends after {held} whole tags")
            block = np.frombuffer(buffer, dtype=TIMESTAMP_DTYPE)
            remaining -= n
            yield block.astype(np.int64)


def timetags_frame(streams: Iterable[TimeTagStream]) -> pd.DataFrame:
    frames = [
        pd.DataFrame({"channel": np.full(len(s), s.channel, dtype=np.int64), "timestamp_ps": s.timestamps_ps})
        for s in streams
    ]
    if not frames:
        return pd.DataFrame(columns=["channel", "timestamp_ps"])
    return pd.concat(frames, ignore_index=True).sort_values(["timestamp_ps", "channel"], kind="stable")


def export_csv(path: str | Path, streams: Iterable[TimeTagStream]) -> Path:
    path = Path(path)
    timetags_frame(streams).to_csv(path, index=False)
    return path
