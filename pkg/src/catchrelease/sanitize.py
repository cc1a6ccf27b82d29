"""Location-metadata removal and auditing.

Stripping is unconditional and happens before anything is persisted: the
field teams' phones geotag recordings by default, and stored media must never
expose where a clip was taken. Containers are scrubbed in place (boxes are
renamed to ``free`` and their payloads zeroed) so no byte offsets move;
JPEG/PNG images are rebuilt without their metadata segments, which is safe
because those formats carry no absolute offsets.
"""

from __future__ import annotations

import re
import struct

from . import bmff

# ISO-BMFF box types that carry coordinates
LOCATION_BOX_TYPES = {b"\xa9xyz", b"loci", b"gps "}

# metadata key names (meta/keys + ilst) that carry coordinates
LOCATION_KEY_PATTERN = re.compile(rb"location|gps", re.IGNORECASE)

# XMP / XML attribute and element forms
XMP_GPS_ATTR = re.compile(rb'[A-Za-z]+:GPS[A-Za-z]+\s*=\s*"[^"]*"')
XMP_GPS_ELEM = re.compile(rb"<[A-Za-z]+:GPS[A-Za-z]+>[^<]*</[A-Za-z]+:GPS[A-Za-z]+>")

# ISO 6709 coordinate string, e.g. +37.5090+127.0243/ or -8.4095+115.1889/
ISO6709 = re.compile(rb"[+-]\d{1,3}(?:\.\d+)?[+-]\d{1,3}(?:\.\d+)?(?:[+-]\d+(?:\.\d+)?)?/")

EXIF_GPS_IFD_TAG = 0x8825


def sanitize_media(data: bytes) -> bytes:
    """Return a copy of the media bytes with location metadata removed."""
    if bmff.is_bmff(data):
        return _sanitize_bmff(data)
    if data[:2] == b"\xff\xd8":
        return _sanitize_jpeg(data)
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        return _sanitize_png(data)
    return data


def scan_location_tags(data: bytes) -> list[str]:
    """Audit: list every location tag still present. Empty list = clean."""
    findings: list[str] = []
    if bmff.is_bmff(data):
        skip = bmff.mdat_ranges(data)
        for box, path in bmff.iter_tree(data):
            if box.type in LOCATION_BOX_TYPES:
                findings.append(f"box {box.type!r} at {box.start}")
        for idx, _s, _e in _location_keys(data):
            findings.append(f"location metadata key #{idx}")
        for pattern, label in ((XMP_GPS_ATTR, "xmp-gps-attr"), (XMP_GPS_ELEM, "xmp-gps-elem"), (ISO6709, "iso6709")):
            for m in pattern.finditer(data):
                if not any(a <= m.start() < b for a, b in skip):
                    findings.append(f"{label} at {m.start()}")
    elif data[:2] == b"\xff\xd8":
        for start, _end, payload in _jpeg_app1_segments(data):
            if payload.startswith(b"Exif\x00\x00") and _tiff_has_gps(payload[6:]):
                findings.append(f"jpeg exif gps ifd at {start}")
            if XMP_GPS_ATTR.search(payload) or XMP_GPS_ELEM.search(payload):
                findings.append(f"jpeg xmp gps at {start}")
    elif data[:8] == b"\x89PNG\r\n\x1a\n":
        for ctype, payload, start, _end in _png_chunks(data):
            if ctype == b"eXIf" and _tiff_has_gps(payload):
                findings.append(f"png exif gps at {start}")
            if ctype in (b"tEXt", b"iTXt", b"zTXt") and (
                XMP_GPS_ATTR.search(payload) or XMP_GPS_ELEM.search(payload)
            ):
                findings.append(f"png text gps at {start}")
    return findings


# -- ISO-BMFF -----------------------------------------------------------------


def _blank_box(buf: bytearray, box: bmff.Box) -> None:
    """Neutralize a box without moving bytes: retype to free, zero payload."""
    buf[box.start + 4:box.start + 8] = b"free"
    buf[box.payload_start:box.end] = b"\x00" * (box.end - box.payload_start)


def _location_keys(data: bytes) -> list[tuple[int, int, int]]:
    """(index, name_start, name_end) of location-like keys-table entries.

    Indices are 1-based; ilst items reference them through their type field.
    """
    keys = bmff.find_first(data, (b"moov", b"udta", b"meta", b"keys")) or bmff.find_first(
        data, (b"moov", b"meta", b"keys")
    )
    if keys is None:
        return []
    p = keys.payload_start
    try:
        entry_count = struct.unpack_from(">I", data, p + 4)[0]
    except struct.error:
        return []
    found = []
    pos = p + 8
    for idx in range(1, entry_count + 1):
        if pos + 8 > keys.end:
            break
        size = struct.unpack_from(">I", data, pos)[0]
        if size < 8 or pos + size > keys.end:
            break
        name = bytes(data[pos + 8:pos + size])
        if LOCATION_KEY_PATTERN.search(name):
            found.append((idx, pos + 8, pos + size))
        pos += size
    return found


def _sanitize_bmff(data: bytes) -> bytes:
    buf = bytearray(data)
    location_keys = _location_keys(data)
    location_indices = {idx for idx, _s, _e in location_keys}
    for _idx, name_start, name_end in location_keys:
        buf[name_start:name_end] = b"x" * (name_end - name_start)
    for box, path in bmff.iter_tree(data):
        if box.type in LOCATION_BOX_TYPES:
            _blank_box(buf, box)
        elif path and path[-1] == b"ilst" and len(box.type) == 4:
            idx = struct.unpack(">I", box.type)[0]
            if idx in location_indices:
                _blank_box(buf, box)
        elif box.type == b"uuid":
            _blank_patterns(buf, box.payload_start, box.end)
    # coordinate strings hiding in any non-media metadata region
    media = bmff.mdat_ranges(data)
    pos = 0
    for a, b in sorted(media):
        _blank_patterns(buf, pos, a)
        pos = b
    _blank_patterns(buf, pos, len(buf))
    return bytes(buf)


def _blank_patterns(buf: bytearray, start: int, end: int) -> None:
    region = bytes(buf[start:end])
    for pattern in (XMP_GPS_ATTR, XMP_GPS_ELEM, ISO6709):
        for m in pattern.finditer(region):
            buf[start + m.start():start + m.end()] = b" " * (m.end() - m.start())


# -- JPEG ----------------------------------------------------------------------


def _jpeg_app1_segments(data: bytes):
    """Yield (start, end, payload) of APP1 segments in the pre-scan header."""
    pos = 2
    while pos + 4 <= len(data):
        if data[pos] != 0xFF:
            return
        marker = data[pos + 1]
        if marker in (0xD8, 0x01) or 0xD0 <= marker <= 0xD7:
            pos += 2
            continue
        if marker == 0xDA:  # start of scan: entropy-coded data follows
            return
        length = struct.unpack_from(">H", data, pos + 2)[0]
        end = pos + 2 + length
        if marker == 0xE1:
            yield pos, end, bytes(data[pos + 4:end])
        pos = end


def _sanitize_jpeg(data: bytes) -> bytes:
    """Drop Exif and GPS-bearing XMP APP1 segments wholesale."""
    drop: list[tuple[int, int]] = []
    for start, end, payload in _jpeg_app1_segments(data):
        if payload.startswith(b"Exif\x00\x00"):
            drop.append((start, end))
        elif XMP_GPS_ATTR.search(payload) or XMP_GPS_ELEM.search(payload):
            drop.append((start, end))
    if not drop:
        return data
    out = bytearray()
    pos = 0
    for start, end in drop:
        out += data[pos:start]
        pos = end
    out += data[pos:]
    return bytes(out)


def _tiff_has_gps(tiff: bytes) -> bool:
    if len(tiff) < 8:
        return False
    if tiff[:2] == b"II":
        fmt = "<"
    elif tiff[:2] == b"MM":
        fmt = ">"
    else:
        return False
    try:
        ifd_offset = struct.unpack_from(fmt + "I", tiff, 4)[0]
        count = struct.unpack_from(fmt + "H", tiff, ifd_offset)[0]
        for i in range(count):
            tag = struct.unpack_from(fmt + "H", tiff, ifd_offset + 2 + i * 12)[0]
            if tag == EXIF_GPS_IFD_TAG:
                return True
    except struct.error:
        return False
    return False


# -- PNG -----------------------------------------------------------------------


def _png_chunks(data: bytes):
    pos = 8
    while pos + 8 <= len(data):
        length = struct.unpack_from(">I", data, pos)[0]
        ctype = bytes(data[pos + 4:pos + 8])
        end = pos + 12 + length
        if end > len(data):
            return
        yield ctype, bytes(data[pos + 8:pos + 8 + length]), pos, end
        pos = end


def _sanitize_png(data: bytes) -> bytes:
    drop: list[tuple[int, int]] = []
    for ctype, payload, start, end in _png_chunks(data):
        if ctype == b"eXIf":
            drop.append((start, end))
        elif ctype in (b"tEXt", b"iTXt", b"zTXt") and (
            XMP_GPS_ATTR.search(payload) or XMP_GPS_ELEM.search(payload) or b"geotag" in payload.lower()
        ):
            drop.append((start, end))
    if not drop:
        return data
    out = bytearray()
    pos = 0
    for start, end in drop:
        out += data[pos:start]
        pos = end
    out += data[pos:]
    return bytes(out)
