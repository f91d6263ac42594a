import struct

import numpy as np
import pandas as pd
import pytest

from tests.helpers import stream
from tripletsim.errors import TimeTagFormatError
from tripletsim.timetags import (
    HEADER,
    export_csv,
    iter_timetag_blocks,
    read_timetags,
    timetags_frame,
    write_timetags,
)


def test_header_layout(tmp_path) -> None:
    path = write_timetags(tmp_path / "d3.ttag", stream([7, 2**40 + 3], channel=3))
    raw = path.read_bytes()
    assert raw[:4] == b"TTAG"
    assert struct.unpack("<HHQ", raw[4:16]) == (1, 3, 2)
    assert struct.unpack("<QQ", raw[16:]) == (7, 2**40 + 3)


def test_file_holds_channel_and_timestamps(tmp_path) -> None:
    times = np.cumsum(np.random.default_rng(1).integers(1, 10**6, 5000))
    original = stream(times, "D1", 1, int(times[-1]) + 10)
    path = write_timetags(tmp_path / "d1.ttag", original)
    loaded = read_timetags(path, label="D1", duration_ps=original.duration_ps)
    assert loaded.channel == 1
    assert np.array_equal(loaded.timestamps_ps, times)
    assert loaded.duration_ps == original.duration_ps
    assert read_timetags(path).label == "d1"


def test_default_duration_is_one_past_the_last_tag(tmp_path) -> None:
    path = write_timetags(tmp_path / "d3.ttag", stream([5, 9], duration_ps=100))
    assert read_timetags(path).duration_ps == 10


def test_empty_stream(tmp_path) -> None:
    path = write_timetags(tmp_path / "empty.ttag", stream([], duration_ps=50))
    assert path.stat().st_size == HEADER.size
    loaded = read_timetags(path)
    assert len(loaded) == 0
    assert loaded.duration_ps == 0


def test_blocks_cover_the_file(tmp_path) -> None:
    times = np.arange(1, 2501) * 3
    path = write_timetags(tmp_path / "d2.ttag", stream(times, "D2", 2))
    blocks = list(iter_timetag_blocks(path, block_size=1000))
    assert [b.size for b in blocks] == [1000, 1000, 500]
    assert np.array_equal(np.concatenate(blocks), times)


def test_bad_magic_is_rejected(tmp_path) -> None:
    path = tmp_path / "bad.ttag"
    path.write_bytes(HEADER.pack(b"TTAX", 1, 3, 0))
    with pytest.raises(TimeTagFormatError, match="magic"):
        read_timetags(path)


def test_unknown_version_is_rejected(tmp_path) -> None:
    path = tmp_path / "v2.ttag"
    path.write_bytes(HEADER.pack(b"TTAG", 2, 3, 0))
    with pytest.raises(TimeTagFormatError, match="version"):
        read_timetags(path)


def test_truncated_file_is_rejected(tmp_path) -> None:
    path = write_timetags(tmp_path / "d3.ttag", stream([1, 2, 3]))
    path.write_bytes(path.read_bytes()[:-4])
    with pytest.raises(TimeTagFormatError):
        read_timetags(path)
    with pytest.raises(TimeTagFormatError):
        list(iter_timetag_blocks(path))


def test_partial_timestamp_in_a_later_block_is_rejected(tmp_path) -> None:
    path = write_timetags(tmp_path / "d3.ttag", stream([1, 2, 3, 4, 5]))
    path.write_bytes(path.read_bytes()[:-5])
    blocks = iter_timetag_blocks(path, block_size=2)
    assert next(blocks).tolist() == [1, 2]
    assert next(blocks).tolist() == [3, 4]
    with pytest.raises(TimeTagFormatError, match="4 whole tags"):
        next(blocks)


def test_short_header_is_rejected(tmp_path) -> None:
    path = tmp_path / "short.ttag"
    path.write_bytes(b"TTAG")
    with pytest.raises(TimeTagFormatError):
        read_timetags(path)


def test_unsorted_stream_is_not_written(tmp_path) -> None:
    with pytest.raises(TimeTagFormatError):
        write_timetags(tmp_path / "x.ttag", stream([3, 1], duration_ps=10))


def test_unsorted_file_is_rejected(tmp_path) -> None:
    path = tmp_path / "unsorted.ttag"
    path.write_bytes(HEADER.pack(b"TTAG", 1, 3, 2) + struct.pack("<QQ", 9, 4))
    with pytest.raises(TimeTagFormatError):
        read_timetags(path)


def test_csv_export_merges_channels_in_time_order(tmp_path) -> None:
    streams = [stream([10, 30], "D1", 1, 40), stream([20, 30], "D3", 3, 40)]
    frame = timetags_frame(streams)
    assert frame["timestamp_ps"].tolist() == [10, 20, 30, 30]
    assert frame["channel"].tolist() == [1, 3, 1, 3]
    path = export_csv(tmp_path / "tags.csv", streams)
    assert pd.read_csv(path).equals(frame.reset_index(drop=True))
    assert timetags_frame([]).columns.tolist() == ["channel", "timestamp_ps"]
