"""Synthetic media authoring for tests, demos, and local development.

Builds small mp4 clips with distinct animated scenes, muxes uncompressed PCM
audio tracks into them, plants location metadata in the container layouts
seen on real phones (so stripping can be exercised), and writes WAV and
EXIF/PNG fixtures. Everything here produces files; nothing here is used by
the ingest path itself.

Ordering note: the box appenders require moov to be the final top-level box
(true for files written by make_video). Inject container tags first, then mux
audio, then append any trailing uuid box; that order never invalidates chunk
offsets.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import cv2
import numpy as np

from . import bmff

MOVIE_TIMESCALE_FALLBACK = 1000


# -- video authoring ---------------------------------------------------------


def scene_frame(
    scene: int,
    step: int,
    size: tuple[int, int] = (512, 512),
    animate: bool = True,
) -> np.ndarray:
    """Checkerboard frame for one scene; scenes differ in palette and cell size."""
    w, h = size
    cell = 16 + 8 * (scene % 4)
    hue = (scene * 37) % 180
    hsv = np.uint8([[[hue, 255, 230]]])
    bright = cv2.cvtColor(hsv, cv2.COLOR_HSV2BGR)[0, 0]
    dark = (bright * 0.2).astype(np.uint8)
    ys = (np.arange(h) // cell)[:, None]
    xs = (np.arange(w) // cell)[None, :]
    board = ((ys + xs) % 2).astype(np.uint8)
    frame = np.where(board[:, :, None] == 1, bright[None, None, :], dark[None, None, :])
    if animate:
        frame = np.roll(frame, (step * 7) % h, axis=0)
        frame = np.roll(frame, (step * 13) % w, axis=1)
    return np.ascontiguousarray(frame, dtype=np.uint8)


def make_video(
    path: str | Path,
    duration_s: float,
    fps: float = 15.0,
    size: tuple[int, int] = (512, 512),
    scene_bounds: list[tuple[float, float]] | None = None,
    animate: bool = True,
) -> None:
    """Write an mp4 whose content switches pattern at each scene boundary."""
    writer = cv2.VideoWriter(
        str(path), cv2.VideoWriter_fourcc(*"mp4v"), fps, size
    )
    if not writer.isOpened():
        raise RuntimeError(f"cannot open video writer for {path}")
    try:
        n_frames = round(duration_s * fps)
        for i in range(n_frames):
            t = i / fps
            scene = 0
            if scene_bounds:
                for idx, (start, end) in enumerate(scene_bounds):
                    if start <= t < end:
                        scene = idx
                        break
                else:
                    scene = len(scene_bounds)
            writer.write(scene_frame(scene, i, size, animate))
    finally:
        writer.release()


def video_bytes(
    tmp_path: str | Path,
    duration_s: float,
    fps: float = 15.0,
    size: tuple[int, int] = (512, 512),
    scene_bounds: list[tuple[float, float]] | None = None,
    animate: bool = True,
) -> bytes:
    target = Path(tmp_path) / f"synth-{duration_s}-{fps}-{size[0]}.mp4"
    make_video(target, duration_s, fps, size, scene_bounds, animate)
    return target.read_bytes()


# -- box building ------------------------------------------------------------


def _box(btype: bytes, payload: bytes) -> bytes:
    return struct.pack(">I", 8 + len(payload)) + btype + payload


def _full(btype: bytes, body: bytes, version: int = 0, flags: int = 0) -> bytes:
    return _box(btype, struct.pack(">B", version) + flags.to_bytes(3, "big") + body)


_UNITY_MATRIX = struct.pack(">9i", 0x10000, 0, 0, 0, 0x10000, 0, 0, 0, 0x40000000)


def _last_moov(data: bytes) -> bmff.Box:
    boxes = list(bmff.parse_boxes(data, 0, len(data)))
    if not boxes or boxes[-1].type != b"moov":
        raise ValueError("expected moov as the final top-level box")
    moov = boxes[-1]
    if moov.header != 8:
        raise ValueError("largesize moov not supported here")
    return moov


def _mvhd_fields(data: bytes, moov: bmff.Box) -> tuple[bmff.Box, int, int, int]:
    mvhd = next(
        (b for b in bmff.parse_boxes(data, moov.payload_start, moov.end) if b.type == b"mvhd"),
        None,
    )
    if mvhd is None:
        return None, MOVIE_TIMESCALE_FALLBACK, 0, 2
    p = mvhd.payload_start
    version = data[p]
    if version == 1:
        timescale = struct.unpack_from(">I", data, p + 20)[0]
        duration = struct.unpack_from(">Q", data, p + 24)[0]
        next_id_at = p + 108
    else:
        timescale = struct.unpack_from(">I", data, p + 12)[0]
        duration = struct.unpack_from(">I", data, p + 16)[0]
        next_id_at = p + 96
    next_id = struct.unpack_from(">I", data, next_id_at)[0]
    return mvhd, timescale, duration, next_id


def append_to_moov(data: bytes, child: bytes) -> bytes:
    """Grow moov by one child box. Safe only while moov is the last box."""
    moov = _last_moov(data)
    out = bytearray(data)
    struct.pack_into(">I", out, moov.start, moov.size + len(child))
    return bytes(out[:moov.end]) + child + bytes(out[moov.end:])


# -- PCM audio muxing --------------------------------------------------------


def _audio_trak(
    track_id: int,
    n_samples: int,
    channels: int,
    rate: int,
    movie_duration: int,
    data_offset: int,
    fmt: bytes = b"sowt",
) -> bytes:
    tkhd = _full(
        b"tkhd",
        struct.pack(">IIII", 0, 0, track_id, 0)
        + struct.pack(">I", movie_duration)
        + b"\x00" * 8
        + struct.pack(">hhHh", 0, 0, 0x0100, 0)
        + _UNITY_MATRIX
        + struct.pack(">II", 0, 0),
        flags=3,
    )
    mdhd = _full(
        b"mdhd",
        struct.pack(">IIII", 0, 0, rate, n_samples) + struct.pack(">HH", 0x55C4, 0),
    )
    hdlr = _full(b"hdlr", struct.pack(">I", 0) + b"soun" + b"\x00" * 12 + b"SoundHandler\x00")
    smhd = _full(b"smhd", struct.pack(">hH", 0, 0))
    dref = _full(b"dref", struct.pack(">I", 1) + _full(b"url ", b"", flags=1))
    dinf = _box(b"dinf", dref)
    sample_width = 1 if fmt == b"raw " else 2
    entry = (
        struct.pack(">I", 36)
        + fmt
        + b"\x00" * 6
        + struct.pack(">H", 1)
        + struct.pack(">HHI", 0, 0, 0)
        + struct.pack(">HHHH", channels, sample_width * 8, 0, 0)
        + struct.pack(">I", rate << 16)
    )
    stsd = _full(b"stsd", struct.pack(">I", 1) + entry)
    stts = _full(b"stts", struct.pack(">III", 1, n_samples, 1))
    stsc = _full(b"stsc", struct.pack(">IIII", 1, 1, n_samples, 1))
    stsz = _full(b"stsz", struct.pack(">II", channels * sample_width, n_samples))
    stco = _full(b"stco", struct.pack(">II", 1, data_offset))
    stbl = _box(b"stbl", stsd + stts + stsc + stsz + stco)
    minf = _box(b"minf", smhd + dinf + stbl)
    mdia = _box(b"mdia", mdhd + hdlr + minf)
    return _box(b"trak", tkhd + mdia)


def mux_pcm_audio(data: bytes, samples: np.ndarray, rate: int, fmt: bytes = b"sowt") -> bytes:
    """Add a PCM audio track; chunk data goes in a trailing mdat.

    fmt picks the stored byte layout: sowt (s16le), twos (s16be), raw (u8).
    """
    if fmt not in (b"sowt", b"twos", b"raw "):
        raise ValueError(f"unsupported PCM format {fmt!r}")
    samples = np.asarray(samples, dtype=np.int16)
    if samples.ndim == 1:
        samples = samples[:, None]
    n, channels = samples.shape
    if n < 1:
        raise ValueError("empty sample array")
    moov = _last_moov(data)
    mvhd, timescale, old_duration, next_id = _mvhd_fields(data, moov)
    audio_duration = round(n / rate * timescale)

    trak = _audio_trak(next_id, n, channels, rate, audio_duration, 0, fmt)
    out = bytearray(data)
    struct.pack_into(">I", out, moov.start, moov.size + len(trak))
    if mvhd is not None:
        p = mvhd.payload_start
        if out[p] == 1:
            struct.pack_into(">Q", out, p + 24, max(old_duration, audio_duration))
            struct.pack_into(">I", out, p + 108, next_id + 1)
        else:
            struct.pack_into(">I", out, p + 16, max(old_duration, audio_duration))
            struct.pack_into(">I", out, p + 96, next_id + 1)

    pcm_offset = len(data) + len(trak) + 8
    trak = trak[:-4] + struct.pack(">I", pcm_offset)
    if fmt == b"sowt":
        payload = samples.astype("<i2").tobytes()
    elif fmt == b"twos":
        payload = samples.astype(">i2").tobytes()
    else:
        payload = ((samples.astype(np.int32) // 256) + 128).astype(np.uint8).tobytes()
    mdat = _box(b"mdat", payload)
    return bytes(out) + trak + mdat


def silence(duration_s: float, rate: int = 8000, channels: int = 1) -> np.ndarray:
    n = round(duration_s * rate)
    shape = (n,) if channels == 1 else (n, channels)
    return np.zeros(shape, dtype=np.int16)


def tone(duration_s: float, freq: float = 440.0, rate: int = 8000) -> np.ndarray:
    t = np.arange(round(duration_s * rate)) / rate
    return (np.sin(2 * np.pi * freq * t) * 12000).astype(np.int16)


# -- location metadata planting ----------------------------------------------


def iso6709(lat: float, lon: float, alt: float | None = None) -> str:
    s = f"{lat:+08.4f}{lon:+09.4f}"
    if alt is not None:
        s += f"{alt:+08.3f}"
    return s + "/"


def inject_gps_xyz(data: bytes, location: str) -> bytes:
    value = location.encode()
    xyz = _box(b"\xa9xyz", struct.pack(">HH", len(value), 0x15C7) + value)
    return append_to_moov(data, _box(b"udta", xyz))


def inject_gps_loci(data: bytes, lat: float, lon: float, name: str = "site") -> bytes:
    body = (
        struct.pack(">H", 0x55C4)
        + name.encode() + b"\x00"
        + b"\x00"
        + struct.pack(">iii", round(lon * 65536), round(lat * 65536), 0)
        + b"\x00\x00"
    )
    loci = _full(b"loci", body)
    return append_to_moov(data, _box(b"udta", loci))


def inject_gps_ilst(data: bytes, location: str, in_udta: bool = False) -> bytes:
    key_name = b"com.apple.quicktime.location.ISO6709"
    hdlr = _full(b"hdlr", struct.pack(">I", 0) + b"mdta" + b"\x00" * 12 + b"\x00")
    keys = _full(b"keys", struct.pack(">I", 1) + struct.pack(">I", 8 + len(key_name)) + b"mdta" + key_name)
    payload = struct.pack(">II", 1, 0) + location.encode()
    data_box = _box(b"data", payload)
    item = struct.pack(">I", 8 + len(data_box)) + struct.pack(">I", 1) + data_box
    ilst = _box(b"ilst", item)
    meta = _full(b"meta", hdlr + keys + ilst)
    child = _box(b"udta", meta) if in_udta else meta
    return append_to_moov(data, child)


XMP_UUID = bytes.fromhex("be7acfcb97a942e89c71999491e3afac")


def xmp_packet(lat: float, lon: float) -> bytes:
    lat_ref = "N" if lat >= 0 else "S"
    lon_ref = "E" if lon >= 0 else "W"
    lat_s = f"{abs(lat):.6f},{0.0:.4f}{lat_ref}"
    lon_s = f"{abs(lon):.6f},{0.0:.4f}{lon_ref}"
    xml = (
        '<?xpacket begin="﻿" id="W5M0MpCehiHzreSzNTczkc9d"?>'
        '<x:xmpmeta xmlns:x="adobe:ns:meta/"><rdf:RDF '
        'xmlns:rdf="http://www.w3.org/1999/02/22-rdf-syntax-ns#">'
        '<rdf:Description xmlns:exif="http://ns.adobe.com/exif/1.0/" '
        f'exif:GPSLatitude="{lat_s}" exif:GPSLongitude="{lon_s}"/>'
        "</rdf:RDF></x:xmpmeta><?xpacket end=\"w\"?>"
    )
    return xml.encode()


def append_xmp_uuid(data: bytes, lat: float, lon: float) -> bytes:
    """Append a top-level uuid metadata box at EOF (always offset-safe)."""
    return data + _box(b"uuid", XMP_UUID + xmp_packet(lat, lon))


# -- still-image fixtures ----------------------------------------------------


def _tiff_with_gps_ifd() -> bytes:
    # IFD0 holds one entry: the GPS sub-IFD pointer (tag 0x8825)
    header = b"II*\x00" + struct.pack("<I", 8)
    ifd0 = struct.pack("<H", 1) + struct.pack("<HHII", 0x8825, 4, 1, 26) + struct.pack("<I", 0)
    gps_ifd = struct.pack("<H", 1) + struct.pack("<HHII", 0x0002, 5, 2, 40) + struct.pack("<I", 0)
    rationals = struct.pack("<IIII", 8, 1, 30, 1)
    return header + ifd0 + gps_ifd + rationals


def jpeg_with_gps(image: np.ndarray) -> bytes:
    ok, buf = cv2.imencode(".jpg", image)
    if not ok:
        raise RuntimeError("jpeg encode failed")
    jpeg = buf.tobytes()
    exif = b"Exif\x00\x00" + _tiff_with_gps_ifd()
    app1 = b"\xff\xe1" + struct.pack(">H", len(exif) + 2) + exif
    return jpeg[:2] + app1 + jpeg[2:]


def png_with_gps(image: np.ndarray) -> bytes:
    ok, buf = cv2.imencode(".png", image)
    if not ok:
        raise RuntimeError("png encode failed")
    png = buf.tobytes()
    exif_tiff = _tiff_with_gps_ifd()
    chunk = struct.pack(">I", len(exif_tiff)) + b"eXIf" + exif_tiff
    chunk += struct.pack(">I", zlib.crc32(b"eXIf" + exif_tiff) & 0xFFFFFFFF)
    ihdr_end = 8 + 8 + 13 + 4
    return png[:ihdr_end] + chunk + png[ihdr_end:]


def wav_bytes(samples: np.ndarray, rate: int) -> bytes:
    """Write int16 samples, mono (n,) or multichannel (n, c), as a WAV file."""
    import io
    import wave

    samples = np.asarray(samples, dtype=np.int16)
    channels = 1 if samples.ndim == 1 else samples.shape[1]
    buf = io.BytesIO()
    with wave.open(buf, "wb") as w:
        w.setnchannels(channels)
        w.setsampwidth(2)
        w.setframerate(rate)
        w.writeframes(samples.astype("<i2").tobytes())
    return buf.getvalue()
