"""Field-video intake: validation, location stripping, frames, audio.

Videos arrive as raw bytes from harvesters' phones. Location metadata is
removed before the bytes are persisted (no opt-out), then the file is stored
content-addressed so re-uploads of the same clip dedup to one object. Frame
extraction samples a bounded segment at a fixed rate through either the
builtin decoder or a configured external command; audio extraction reads
uncompressed PCM tracks natively and hands anything else to an optional
external tool.
"""

from __future__ import annotations

import datetime as dt
import io
import math
import shlex
import struct
import subprocess
import tempfile
import wave
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

from . import bmff
from .errors import (
    DecodeFailure,
    EmptySegment,
    InvariantError,
    NoAudioStream,
    SegmentOutOfRange,
    UndecodableMedia,
    ZeroDuration,
)
from .sanitize import sanitize_media
from .store import ContentStore, sha256_hex

SEASONS = ("wet", "dry")
MAX_FPS = 30.0
BOUNDARY_EPS = 1e-9

BUILTIN_DECODER = "builtin"

# PCM sample-entry formats the native audio reader understands
PCM_FORMATS = {
    b"sowt": ("<i2", 2),   # little-endian signed 16-bit
    b"twos": (">i2", 2),   # big-endian signed 16-bit
    b"raw ": ("u1", 1),    # unsigned 8-bit
}


@dataclass(frozen=True)
class CaptureMeta:
    harvester_id: str
    site: str
    capture_date: dt.date
    season: str
    device_note: str | None = None

    def validate(self) -> None:
        if not self.harvester_id.strip():
            raise InvariantError("capture meta: empty harvester_id")
        if not self.site.strip():
            raise InvariantError("capture meta: empty site")
        if self.season not in SEASONS:
            raise InvariantError(f'capture meta: unknown season "{self.season}"')

    def to_dict(self) -> dict:
        return {
            "harvester_id": self.harvester_id,
            "site": self.site,
            "capture_date": self.capture_date.isoformat(),
            "season": self.season,
            "device_note": self.device_note,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "CaptureMeta":
        return cls(
            harvester_id=raw["harvester_id"],
            site=raw["site"],
            capture_date=dt.date.fromisoformat(raw["capture_date"]),
            season=raw["season"],
            device_note=raw.get("device_note"),
        )


@dataclass(frozen=True)
class FieldVideo:
    video_id: str
    duration_s: float
    width_px: int
    height_px: int
    capture: CaptureMeta
    location_stripped: bool = True

    def to_dict(self) -> dict:
        return {
            "video_id": self.video_id,
            "duration_s": self.duration_s,
            "width_px": self.width_px,
            "height_px": self.height_px,
            "capture": self.capture.to_dict(),
            "location_stripped": self.location_stripped,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "FieldVideo":
        return cls(
            video_id=raw["video_id"],
            duration_s=float(raw["duration_s"]),
            width_px=int(raw["width_px"]),
            height_px=int(raw["height_px"]),
            capture=CaptureMeta.from_dict(raw["capture"]),
            location_stripped=bool(raw["location_stripped"]),
        )


@dataclass(frozen=True)
class Segment:
    """A bounded window of a video, entered as minute/second fields (0-59)."""

    video_id: str
    start_min: int
    start_s: int
    end_min: int
    end_s: int

    def __post_init__(self):
        for name in ("start_min", "start_s", "end_min", "end_s"):
            value = getattr(self, name)
            if not isinstance(value, int) or not 0 <= value <= 59:
                raise SegmentOutOfRange(f"{name}={value!r} outside 0-59")

    @property
    def start_time_s(self) -> float:
        return float(self.start_min * 60 + self.start_s)

    @property
    def end_time_s(self) -> float:
        return float(self.end_min * 60 + self.end_s)

    def validate_against(self, video: FieldVideo) -> None:
        if self.video_id != video.video_id:
            raise SegmentOutOfRange(
                f"segment belongs to {self.video_id[:12]}, not {video.video_id[:12]}"
            )
        if self.start_time_s == self.end_time_s:
            raise EmptySegment(f"start == end == {self.start_time_s}s")
        if self.start_time_s > self.end_time_s:
            raise SegmentOutOfRange(f"start {self.start_time_s}s after end {self.end_time_s}s")
        if self.end_time_s > video.duration_s + BOUNDARY_EPS:
            raise SegmentOutOfRange(
                f"end {self.end_time_s}s beyond video duration {video.duration_s}s"
            )

    def to_dict(self) -> dict:
        return {
            "video_id": self.video_id,
            "start_min": self.start_min,
            "start_s": self.start_s,
            "end_min": self.end_min,
            "end_s": self.end_s,
            "start_time_s": self.start_time_s,
            "end_time_s": self.end_time_s,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "Segment":
        return cls(
            video_id=raw["video_id"],
            start_min=int(raw["start_min"]),
            start_s=int(raw["start_s"]),
            end_min=int(raw["end_min"]),
            end_s=int(raw["end_s"]),
        )


@dataclass(frozen=True)
class FrameRef:
    frame_id: str
    video_id: str
    timestamp_s: float
    width_px: int
    height_px: int

    def to_dict(self) -> dict:
        return {
            "frame_id": self.frame_id,
            "video_id": self.video_id,
            "timestamp_s": self.timestamp_s,
            "width_px": self.width_px,
            "height_px": self.height_px,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "FrameRef":
        return cls(
            frame_id=raw["frame_id"],
            video_id=raw["video_id"],
            timestamp_s=float(raw["timestamp_s"]),
            width_px=int(raw["width_px"]),
            height_px=int(raw["height_px"]),
        )


@dataclass(frozen=True)
class AudioTrack:
    """Reference to a canonical mono 16-bit WAV object in the content store."""

    audio_id: str
    video_id: str
    sample_rate_hz: int
    duration_s: float
    n_samples: int

    def to_dict(self) -> dict:
        return {
            "audio_id": self.audio_id,
            "video_id": self.video_id,
            "sample_rate_hz": self.sample_rate_hz,
            "duration_s": self.duration_s,
            "n_samples": self.n_samples,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "AudioTrack":
        return cls(
            audio_id=raw["audio_id"],
            video_id=raw["video_id"],
            sample_rate_hz=int(raw["sample_rate_hz"]),
            duration_s=float(raw["duration_s"]),
            n_samples=int(raw["n_samples"]),
        )


def plan_sample_times(start_s: float, end_s: float, fps: float) -> list[float]:
    """Sampling instants start + k/fps for k = 0,1,... while t < end."""
    if fps <= 0 or fps > MAX_FPS:
        raise ValueError(f"fps must be in (0, {MAX_FPS}], got {fps}")
    if end_s <= start_s:
        return []
    times = []
    k = 0
    while True:
        t = start_s + k / fps
        if t >= end_s - BOUNDARY_EPS:
            break
        times.append(t)
        k += 1
    return times


def encode_png(image: np.ndarray) -> bytes:
    ok, buf = cv2.imencode(".png", image)
    if not ok:
        raise DecodeFailure(0.0, "png encode failed")
    return buf.tobytes()


class MediaStore:
    """Ingest and extraction operations bound to one content store."""

    def __init__(
        self,
        store: ContentStore,
        decoder_cmd: str = BUILTIN_DECODER,
        audio_cmd: str | None = None,
    ):
        self.store = store
        self.decoder_cmd = decoder_cmd
        self.audio_cmd = audio_cmd

    # -- ingest ---------------------------------------------------------------

    def ingest_video(self, data: bytes, capture: CaptureMeta) -> FieldVideo:
        capture.validate()
        stripped = sanitize_media(data)
        with tempfile.NamedTemporaryFile(suffix=".mp4") as tmp:
            tmp.write(stripped)
            tmp.flush()
            duration, width, height = self._probe(tmp.name, stripped)
        video_id = self.store.put(stripped)
        video = FieldVideo(
            video_id=video_id,
            duration_s=duration,
            width_px=width,
            height_px=height,
            capture=capture,
            location_stripped=True,
        )
        self.store.put_meta(video_id, {"kind": "video", **video.to_dict()})
        return video

    def _probe(self, path: str, data: bytes) -> tuple[float, int, int]:
        cap = cv2.VideoCapture(path)
        try:
            if not cap.isOpened():
                raise UndecodableMedia("container not decodable")
            fps = cap.get(cv2.CAP_PROP_FPS)
            frames = cap.get(cv2.CAP_PROP_FRAME_COUNT)
            width = int(cap.get(cv2.CAP_PROP_FRAME_WIDTH))
            height = int(cap.get(cv2.CAP_PROP_FRAME_HEIGHT))
        finally:
            cap.release()
        duration = bmff.movie_duration_s(data)
        if duration is None:
            duration = frames / fps if fps > 0 else 0.0
        if duration <= 0 or frames <= 0:
            raise ZeroDuration(f"probed duration {duration}s")
        if width < 1 or height < 1:
            raise UndecodableMedia(f"bad resolution {width}x{height}")
        return float(duration), width, height

    def load_video(self, video_id: str) -> FieldVideo:
        meta = self.store.get_meta(video_id)
        if meta is None or meta.get("kind") != "video":
            raise KeyError(f"no video {video_id}")
        return FieldVideo.from_dict(meta)

    # -- frames ---------------------------------------------------------------

    def extract_frames(self, video: FieldVideo, seg: Segment, fps: float) -> list[FrameRef]:
        seg.validate_against(video)
        times = plan_sample_times(seg.start_time_s, seg.end_time_s, fps)
        if not times:
            raise EmptySegment("no sample instants in segment")
        video_path = self.store.object_path(video.video_id)
        if self.decoder_cmd == BUILTIN_DECODER:
            images = decode_frames(str(video_path), times)
        else:
            images = self._decode_external(str(video_path), times)
        refs = []
        for t, image in zip(times, images):
            if image is None:
                raise DecodeFailure(t)
            png = encode_png(image)
            known = self.store.exists(sha256_hex(png))
            frame_id = self.store.put(png)
            h, w = image.shape[:2]
            ref = FrameRef(frame_id=frame_id, video_id=video.video_id, timestamp_s=t, width_px=w, height_px=h)
            if not known:
                # bit-identical re-encounters keep the first recorded instant
                self.store.put_meta(frame_id, {"kind": "frame", **ref.to_dict()})
            refs.append(ref)
        return refs

    def _decode_external(self, video_path: str, times: list[float]) -> list[np.ndarray | None]:
        with tempfile.TemporaryDirectory() as outdir:
            cmd = self.decoder_cmd.format(
                input=shlex.quote(video_path),
                timestamps=",".join(f"{t:.6f}" for t in times),
                outdir=shlex.quote(outdir),
            )
            proc = subprocess.run(cmd, shell=True, capture_output=True, text=True)
            if proc.returncode != 0:
                raise DecodeFailure(times[0], f"decoder command failed: {proc.stderr.strip()[:500]}")
            images: list[np.ndarray | None] = []
            for k in range(len(times)):
                path = Path(outdir) / f"{k:06d}.png"
                if not path.exists():
                    raise DecodeFailure(times[k], f"decoder produced no frame {k:06d}")
                images.append(cv2.imread(str(path), cv2.IMREAD_COLOR))
        return images

    # -- audio ----------------------------------------------------------------

    def extract_audio(self, video: FieldVideo) -> AudioTrack:
        data = self.store.get(video.video_id)
        try:
            samples, rate = read_pcm_track(data)
        except NoAudioStream:
            raise
        except UndecodableMedia:
            if self.audio_cmd:
                samples, rate = self._decode_audio_external(video)
            else:
                raise
        wav_bytes = mono_wav_bytes(samples, rate)
        audio_id = self.store.put(wav_bytes)
        track = AudioTrack(
            audio_id=audio_id,
            video_id=video.video_id,
            sample_rate_hz=rate,
            duration_s=len(samples) / rate,
            n_samples=len(samples),
        )
        self.store.put_meta(audio_id, {"kind": "audio", **track.to_dict()})
        return track

    def _decode_audio_external(self, video: FieldVideo) -> tuple[np.ndarray, int]:
        video_path = self.store.object_path(video.video_id)
        with tempfile.TemporaryDirectory() as outdir:
            out_wav = Path(outdir) / "audio.wav"
            cmd = self.audio_cmd.format(input=shlex.quote(str(video_path)), output=shlex.quote(str(out_wav)))
            proc = subprocess.run(cmd, shell=True, capture_output=True, text=True)
            if proc.returncode != 0 or not out_wav.exists():
                raise UndecodableMedia(f"audio command failed: {proc.stderr.strip()[:500]}")
            return read_wav_mono(out_wav.read_bytes())

    def store_wav_audio(self, wav_data: bytes, video_id: str) -> AudioTrack:
        """Store an uploaded WAV (voiceover) as a canonical mono track."""
        samples, rate = read_wav_mono(wav_data)
        wav_bytes = mono_wav_bytes(samples, rate)
        audio_id = self.store.put(wav_bytes)
        track = AudioTrack(
            audio_id=audio_id,
            video_id=video_id,
            sample_rate_hz=rate,
            duration_s=len(samples) / rate,
            n_samples=len(samples),
        )
        self.store.put_meta(audio_id, {"kind": "audio", **track.to_dict()})
        return track

    def load_audio_samples(self, track: AudioTrack) -> np.ndarray:
        samples, _rate = read_wav_mono(self.store.get(track.audio_id))
        return samples


# -- builtin frame decoding ------------------------------------------------------


def decode_frames(video_path: str, times: list[float]) -> list[np.ndarray | None]:
    """Decode the frame shown at each requested instant, one sequential pass.

    The frame covering t is index floor(t * fps); requested times must be
    ascending (sampling plans always are).
    """
    cap = cv2.VideoCapture(video_path)
    if not cap.isOpened():
        raise UndecodableMedia(video_path)
    try:
        fps = cap.get(cv2.CAP_PROP_FPS)
        total = int(cap.get(cv2.CAP_PROP_FRAME_COUNT))
        if fps <= 0:
            raise UndecodableMedia("video has no frame rate")
        wanted = [min(int(math.floor(t * fps + BOUNDARY_EPS)), total - 1) for t in times]
        out: list[np.ndarray | None] = [None] * len(times)
        current = -1
        frame = None
        for slot, idx in enumerate(wanted):
            while current < idx:
                ok, nxt = cap.read()
                if not ok:
                    raise DecodeFailure(times[slot], f"stream ended before frame {idx}")
                frame = nxt
                current += 1
            out[slot] = frame.copy() if frame is not None else None
        return out
    finally:
        cap.release()


# -- PCM audio track reading ------------------------------------------------------


def _full_payload(data: bytes, box: bmff.Box) -> bytes:
    return data[box.payload_start:box.end]


def _find_child(data: bytes, parent: bmff.Box, btype: bytes, offset: int = 0) -> bmff.Box | None:
    start = parent.payload_start + bmff.CHILD_OFFSET.get(parent.type, 0) + offset
    for box in bmff.parse_boxes(data, start, parent.end):
        if box.type == btype:
            return box
    return None


def read_pcm_track(data: bytes) -> tuple[np.ndarray, int]:
    """Decode the first PCM audio track to mono int16 samples + rate.

    Raises NoAudioStream if the container has no audio track at all and
    UndecodableMedia when the audio codec is compressed (delegate to an
    external tool in that case).
    """
    if not bmff.is_bmff(data):
        raise UndecodableMedia("not an ISO media container")
    moov = bmff.find_first(data, (b"moov",))
    if moov is None:
        raise UndecodableMedia("no moov box")
    audio_trak = None
    for trak in bmff.parse_boxes(data, moov.payload_start, moov.end):
        if trak.type != b"trak":
            continue
        mdia = _find_child(data, trak, b"mdia")
        if mdia is None:
            continue
        hdlr = _find_child(data, mdia, b"hdlr")
        if hdlr is not None and data[hdlr.payload_start + 8:hdlr.payload_start + 12] == b"soun":
            audio_trak = trak
            break
    if audio_trak is None:
        raise NoAudioStream("container has no audio track")

    mdia = _find_child(data, audio_trak, b"mdia")
    minf = _find_child(data, mdia, b"minf")
    stbl = _find_child(data, minf, b"stbl")
    stsd = _find_child(data, stbl, b"stsd")
    entry = next(bmff.parse_boxes(data, stsd.payload_start + 8, stsd.end), None)
    if entry is None:
        raise UndecodableMedia("empty sample description")
    if entry.type not in PCM_FORMATS:
        raise UndecodableMedia(f"unsupported audio codec {entry.type!r}")
    dtype, bytes_per = PCM_FORMATS[entry.type]
    p = entry.payload_start
    channels = struct.unpack_from(">H", data, p + 16)[0]
    sample_rate = struct.unpack_from(">I", data, p + 24)[0] >> 16
    if channels < 1 or sample_rate < 1:
        raise UndecodableMedia(f"bad audio description: {channels}ch @{sample_rate}Hz")

    stsz = _find_child(data, stbl, b"stsz")
    uniform = struct.unpack_from(">I", data, stsz.payload_start + 4)[0]
    n_samples = struct.unpack_from(">I", data, stsz.payload_start + 8)[0]
    frame_bytes = uniform if uniform else channels * bytes_per

    stsc = _find_child(data, stbl, b"stsc")
    stsc_n = struct.unpack_from(">I", data, stsc.payload_start + 4)[0]
    stsc_entries = [
        struct.unpack_from(">III", data, stsc.payload_start + 8 + i * 12)
        for i in range(stsc_n)
    ]

    stco = _find_child(data, stbl, b"stco")
    if stco is not None:
        chunk_n = struct.unpack_from(">I", data, stco.payload_start + 4)[0]
        offsets = [
            struct.unpack_from(">I", data, stco.payload_start + 8 + i * 4)[0]
            for i in range(chunk_n)
        ]
    else:
        co64 = _find_child(data, stbl, b"co64")
        if co64 is None:
            raise UndecodableMedia("audio track has no chunk offsets")
        chunk_n = struct.unpack_from(">I", data, co64.payload_start + 4)[0]
        offsets = [
            struct.unpack_from(">Q", data, co64.payload_start + 8 + i * 8)[0]
            for i in range(chunk_n)
        ]

    # samples-per-chunk table: expand runs to one count per chunk
    per_chunk = []
    for i, (first, count, _desc) in enumerate(stsc_entries):
        last = stsc_entries[i + 1][0] - 1 if i + 1 < len(stsc_entries) else chunk_n
        per_chunk.extend([count] * (last - first + 1))

    raw = bytearray()
    remaining = n_samples
    for offset, count in zip(offsets, per_chunk):
        take = min(count, remaining)
        raw += data[offset:offset + take * frame_bytes]
        remaining -= take
        if remaining <= 0:
            break
    pcm = np.frombuffer(bytes(raw), dtype=dtype)
    if channels > 1:
        usable = (len(pcm) // channels) * channels
        pcm = pcm[:usable].reshape(-1, channels)
        mono = pcm.astype(np.int32).sum(axis=1) // channels
    else:
        mono = pcm.astype(np.int32)
    if dtype == "u1":
        mono = (mono.astype(np.int32) - 128) * 256
    return mono.astype(np.int16), sample_rate


# -- WAV helpers -------------------------------------------------------------------


def mono_wav_bytes(samples: np.ndarray, sample_rate: int) -> bytes:
    buf = io.BytesIO()
    with wave.open(buf, "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(sample_rate)
        w.writeframes(samples.astype("<i2").tobytes())
    return buf.getvalue()


def read_wav_mono(data: bytes) -> tuple[np.ndarray, int]:
    """Read a WAV file, averaging channels down to mono int16."""
    try:
        with wave.open(io.BytesIO(data), "rb") as w:
            channels = w.getnchannels()
            width = w.getsampwidth()
            rate = w.getframerate()
            frames = w.readframes(w.getnframes())
    except (wave.Error, EOFError) as e:
        raise UndecodableMedia(f"not a readable WAV file: {e}") from e
    if width == 2:
        pcm = np.frombuffer(frames, dtype="<i2").astype(np.int32)
    elif width == 1:
        pcm = (np.frombuffer(frames, dtype="u1").astype(np.int32) - 128) * 256
    else:
        raise UndecodableMedia(f"unsupported WAV sample width {width}")
    if channels > 1:
        usable = (len(pcm) // channels) * channels
        pcm = pcm[:usable].reshape(-1, channels).sum(axis=1) // channels
    return pcm.astype(np.int16), rate
