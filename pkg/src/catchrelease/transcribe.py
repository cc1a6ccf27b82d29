"""Timestamped utterances from audio, via pluggable transcription clients.

Two clients ship: a deterministic scripted mock (tests, offline dev) and a
remote HTTP client. Utterance spans are normalized so they never overlap:
spans are sorted by start and a later span's start is clipped to the earlier
span's end. Voiceover attachment re-bases utterance times from
recording-local to video-absolute.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol

import httpx

from .errors import (
    DurationMismatch,
    InvariantError,
    TranscriberRejectedAudio,
    TranscriberUnavailable,
)
from .media import AudioTrack, FieldVideo, Segment
from .registry import MatchResult, Registry, match_label

ORIGINS = ("field_narration", "post_annotation")
VOICEOVER_TOLERANCE_S = 1.0


@dataclass(frozen=True)
class RawUtterance:
    """One span as returned by a transcription client, before normalization."""

    text: str
    start_s: float
    end_s: float
    confidence: float = 1.0


@dataclass(frozen=True)
class Utterance:
    utterance_id: str
    video_id: str
    start_s: float
    end_s: float
    transcript: str
    confidence: float
    match: MatchResult
    origin: str

    def validate(self, video_duration_s: float) -> None:
        if not 0 <= self.start_s < self.end_s <= video_duration_s + 1e-9:
            raise InvariantError(
                f"utterance span [{self.start_s}, {self.end_s}] outside "
                f"[0, {video_duration_s}]"
            )
        if not self.transcript and self.confidence != 0:
            raise InvariantError("empty transcript requires confidence 0")
        if self.origin not in ORIGINS:
            raise InvariantError(f"unknown origin {self.origin!r}")

    def to_dict(self) -> dict:
        return {
            "utterance_id": self.utterance_id,
            "video_id": self.video_id,
            "start_s": self.start_s,
            "end_s": self.end_s,
            "transcript": self.transcript,
            "confidence": self.confidence,
            "match": self.match.to_dict(),
            "origin": self.origin,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "Utterance":
        return cls(
            utterance_id=raw["utterance_id"],
            video_id=raw["video_id"],
            start_s=float(raw["start_s"]),
            end_s=float(raw["end_s"]),
            transcript=raw["transcript"],
            confidence=float(raw["confidence"]),
            match=MatchResult.from_dict(raw["match"]),
            origin=raw["origin"],
        )


class TranscriberClient(Protocol):
    def raw_transcribe(self, wav_data: bytes, language_hint: str) -> list[RawUtterance]:
        ...


class ScriptedTranscriber:
    """Deterministic mock reading `start end text` lines (# starts a comment)."""

    def __init__(self, script: str | Path | Iterable[str], confidence: float = 1.0):
        if isinstance(script, (str, Path)):
            lines = Path(script).read_text().splitlines()
        else:
            lines = list(script)
        self.utterances: list[RawUtterance] = []
        for n, line in enumerate(lines, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(None, 2)
            if len(parts) < 3:
                raise InvariantError(f"script line {n}: expected `start end text`")
            try:
                start, end = float(parts[0]), float(parts[1])
            except ValueError as e:
                raise InvariantError(f"script line {n}: bad timestamp") from e
            self.utterances.append(RawUtterance(parts[2], start, end, confidence))

    def raw_transcribe(self, wav_data: bytes, language_hint: str) -> list[RawUtterance]:
        del wav_data, language_hint
        return list(self.utterances)


class StaticTranscriber:
    """Returns a fixed utterance list; for tests that need per-span confidence."""

    def __init__(self, utterances: list[RawUtterance]):
        self.utterances = list(utterances)

    def raw_transcribe(self, wav_data: bytes, language_hint: str) -> list[RawUtterance]:
        del wav_data, language_hint
        return list(self.utterances)


class RemoteTranscriber:
    """HTTP client: POST the WAV, receive {utterances: [{text, start_s, ...}]}."""

    def __init__(self, endpoint: str, token: str | None = None, timeout_s: float = 60.0):
        self.endpoint = endpoint
        self.token = token
        self.timeout_s = timeout_s

    def raw_transcribe(self, wav_data: bytes, language_hint: str) -> list[RawUtterance]:
        headers = {"Content-Type": "audio/wav", "X-Language-Hint": language_hint}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        try:
            resp = httpx.post(self.endpoint, content=wav_data, headers=headers, timeout=self.timeout_s)
        except httpx.HTTPError as e:
            raise TranscriberUnavailable(str(e)) from e
        if resp.status_code >= 500:
            raise TranscriberUnavailable(f"service returned {resp.status_code}")
        if resp.status_code >= 400:
            raise TranscriberRejectedAudio(f"service returned {resp.status_code}: {resp.text[:200]}")
        return [
            RawUtterance(
                text=u["text"],
                start_s=float(u["start_s"]),
                end_s=float(u["end_s"]),
                confidence=float(u.get("confidence", 1.0)),
            )
            for u in resp.json().get("utterances", [])
        ]


def normalize_spans(raw: list[RawUtterance], duration_s: float) -> list[RawUtterance]:
    """Sort by start and clip each later span's start to the previous end.

    Spans clipped to nothing (and spans outside [0, duration]) are dropped.
    """
    clamped = []
    for u in raw:
        start = max(0.0, u.start_s)
        end = min(u.end_s, duration_s)
        if start < end:
            clamped.append(RawUtterance(u.text, start, end, u.confidence))
    clamped.sort(key=lambda u: (u.start_s, u.end_s))
    out: list[RawUtterance] = []
    cursor = 0.0
    for u in clamped:
        start = max(u.start_s, cursor)
        if start >= u.end_s:
            continue
        out.append(RawUtterance(u.text, start, u.end_s, u.confidence))
        cursor = u.end_s
    return out


def _utterance_id(video_id: str, origin: str, index: int, raw: RawUtterance) -> str:
    h = hashlib.sha256(
        f"{video_id}|{origin}|{index}|{raw.start_s:.6f}|{raw.end_s:.6f}|{raw.text}".encode()
    )
    return f"utt-{h.hexdigest()[:16]}"


def _build(
    spans: list[RawUtterance],
    video_id: str,
    video_duration_s: float,
    registry: Registry,
    origin: str,
    offset_s: float = 0.0,
) -> list[Utterance]:
    out = []
    for i, u in enumerate(spans):
        start = u.start_s + offset_s
        end = min(u.end_s + offset_s, video_duration_s)
        if start >= end:
            continue
        utt = Utterance(
            utterance_id=_utterance_id(video_id, origin, i, u),
            video_id=video_id,
            start_s=start,
            end_s=end,
            transcript=u.text,
            confidence=0.0 if not u.text else u.confidence,
            match=match_label(u.text, registry),
            origin=origin,
        )
        utt.validate(video_duration_s)
        out.append(utt)
    return out


def transcribe(
    audio: AudioTrack,
    wav_data: bytes,
    registry: Registry,
    client: TranscriberClient,
    language_hint: str = "id",
) -> list[Utterance]:
    """Field-narration utterances for a video's own audio track."""
    raw = client.raw_transcribe(wav_data, language_hint)
    spans = normalize_spans(raw, audio.duration_s)
    return _build(spans, audio.video_id, audio.duration_s, registry, "field_narration")


def attach_voiceover(
    video: FieldVideo,
    seg: Segment,
    audio: AudioTrack,
    wav_data: bytes,
    registry: Registry,
    client: TranscriberClient,
    language_hint: str = "id",
) -> list[Utterance]:
    """Transcribe a post-hoc voiceover recorded against one segment.

    The recording starts at the segment start, so utterance times shift by
    seg.start_time_s. Recording length must match the segment within 1 s.
    """
    seg.validate_against(video)
    seg_duration = seg.end_time_s - seg.start_time_s
    if abs(audio.duration_s - seg_duration) > VOICEOVER_TOLERANCE_S:
        raise DurationMismatch(
            f"voiceover runs {audio.duration_s:.2f}s against a {seg_duration:.2f}s segment"
        )
    raw = client.raw_transcribe(wav_data, language_hint)
    spans = normalize_spans(raw, min(audio.duration_s, seg_duration))
    return _build(
        spans, video.video_id, video.duration_s, registry, "post_annotation",
        offset_s=seg.start_time_s,
    )
