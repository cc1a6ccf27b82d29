"""Minimal ISO base-media (MP4/MOV) box parsing.

Just enough structure awareness for three jobs: probing movie duration,
locating and blanking location-metadata boxes in place, and reading
uncompressed PCM audio tracks. No re-muxing: callers never move boxes, so
chunk-offset tables stay valid.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Iterator

# container boxes whose payload is a sequence of child boxes
CONTAINERS = {
    b"moov", b"trak", b"mdia", b"minf", b"stbl", b"udta", b"edts",
    b"dinf", b"mvex", b"moof", b"traf", b"ilst",
}
# full boxes with header bytes before their children start
CHILD_OFFSET = {b"meta": 4, b"stsd": 8}


@dataclass(frozen=True)
class Box:
    type: bytes
    start: int       # absolute offset of the box header
    size: int        # total size including header
    header: int      # header length (8, or 16 with largesize)

    @property
    def payload_start(self) -> int:
        return self.start + self.header

    @property
    def end(self) -> int:
        return self.start + self.size


def parse_boxes(data: bytes, start: int, end: int) -> Iterator[Box]:
    """Iterate sibling boxes in data[start:end]; stops at malformed tail."""
    pos = start
    while pos + 8 <= end:
        size = struct.unpack_from(">I", data, pos)[0]
        btype = bytes(data[pos + 4:pos + 8])
        header = 8
        if size == 1:
            if pos + 16 > end:
                return
            size = struct.unpack_from(">Q", data, pos + 8)[0]
            header = 16
        elif size == 0:
            size = end - pos
        if size < header or pos + size > end:
            return
        yield Box(btype, pos, size, header)
        pos += size


def iter_tree(data: bytes, start: int = 0, end: int | None = None, path: tuple = ()) -> Iterator[tuple[Box, tuple]]:
    """Depth-first walk of the box tree, yielding (box, ancestor-type path)."""
    if end is None:
        end = len(data)
    for box in parse_boxes(data, start, end):
        yield box, path
        if box.type in CONTAINERS or box.type in CHILD_OFFSET:
            child_start = box.payload_start + CHILD_OFFSET.get(box.type, 0)
            yield from iter_tree(data, child_start, box.end, path + (box.type,))


def find_first(data: bytes, type_path: tuple[bytes, ...]) -> Box | None:
    """First box whose ancestor path plus own type equals type_path."""
    for box, path in iter_tree(data):
        if path + (box.type,) == type_path:
            return box
    return None


def movie_duration_s(data: bytes) -> float | None:
    """Duration from the movie header, None when no parseable mvhd exists."""
    mvhd = find_first(data, (b"moov", b"mvhd"))
    if mvhd is None:
        return None
    p = mvhd.payload_start
    version = data[p]
    try:
        if version == 1:
            timescale = struct.unpack_from(">I", data, p + 20)[0]
            duration = struct.unpack_from(">Q", data, p + 24)[0]
        else:
            timescale = struct.unpack_from(">I", data, p + 12)[0]
            duration = struct.unpack_from(">I", data, p + 16)[0]
    except struct.error:
        return None
    if timescale == 0:
        return None
    return duration / timescale


def is_bmff(data: bytes) -> bool:
    return len(data) >= 12 and data[4:8] in (b"ftyp", b"moov", b"mdat", b"wide", b"free", b"skip")


def mdat_ranges(data: bytes) -> list[tuple[int, int]]:
    """Payload byte ranges of top-level mdat boxes (media data, not metadata)."""
    return [
        (box.payload_start, box.end)
        for box in parse_boxes(data, 0, len(data))
        if box.type == b"mdat"
    ]
