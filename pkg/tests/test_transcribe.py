"""Transcription clients, span normalization, and voiceover attachment."""

from __future__ import annotations

from datetime import date

import importlib

import httpx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from catchrelease.errors import (
    DurationMismatch,
    InvariantError,
    SegmentOutOfRange,
    TranscriberRejectedAudio,
    TranscriberUnavailable,
)
from catchrelease.media import AudioTrack, CaptureMeta, FieldVideo, Segment
from catchrelease.registry import MatchResult
from catchrelease.transcribe import (
    RawUtterance,
    RemoteTranscriber,
    ScriptedTranscriber,
    StaticTranscriber,
    Utterance,
    attach_voiceover,
    normalize_spans,
    transcribe,
)

TR_MOD = importlib.import_module("catchrelease.transcribe")


def track(video_id: str = "vid-a", duration_s: float = 10.0) -> AudioTrack:
    rate = 8000
    return AudioTrack(
        audio_id="sha-fake",
        video_id=video_id,
        sample_rate_hz=rate,
        duration_s=duration_s,
        n_samples=int(duration_s * rate),
    )


def video(video_id: str = "vid-a", duration_s: float = 120.0) -> FieldVideo:
    return FieldVideo(
        video_id=video_id,
        duration_s=duration_s,
        width_px=640,
        height_px=480,
        capture=CaptureMeta("h-01", "ridge", date(2025, 4, 2), "dry"),
    )


# -- normalize_spans ---------------------------------------------------------------


def spans(raw: list[RawUtterance]) -> list[tuple[float, float]]:
    return [(u.start_s, u.end_s) for u in raw]


def test_normalize_clips_overlap_to_previous_end():
    raw = [RawUtterance("a", 0.0, 3.0), RawUtterance("b", 2.0, 5.0)]
    assert spans(normalize_spans(raw, 10.0)) == [(0.0, 3.0), (3.0, 5.0)]


def test_normalize_drops_contained_span():
    raw = [RawUtterance("a", 0.0, 5.0), RawUtterance("b", 1.0, 2.0)]
    out = normalize_spans(raw, 10.0)
    assert [u.text for u in out] == ["a"]


def test_normalize_sorts_by_start():
    raw = [RawUtterance("late", 6.0, 8.0), RawUtterance("early", 1.0, 2.0)]
    assert [u.text for u in normalize_spans(raw, 10.0)] == ["early", "late"]


def test_normalize_clamps_to_duration():
    raw = [RawUtterance("tail", 7.0, 30.0)]
    assert spans(normalize_spans(raw, 10.0)) == [(7.0, 10.0)]


def test_normalize_clamps_negative_start():
    raw = [RawUtterance("head", -3.0, 2.0)]
    assert spans(normalize_spans(raw, 10.0)) == [(0.0, 2.0)]


def test_normalize_drops_out_of_range():
    raw = [RawUtterance("before", -5.0, -1.0), RawUtterance("after", 11.0, 12.0)]
    assert normalize_spans(raw, 10.0) == []


def test_normalize_keeps_touching_spans():
    raw = [RawUtterance("a", 0.0, 2.0), RawUtterance("b", 2.0, 4.0)]
    assert spans(normalize_spans(raw, 10.0)) == [(0.0, 2.0), (2.0, 4.0)]


span_lists = st.lists(
    st.tuples(
        st.floats(min_value=-5, max_value=15, allow_nan=False),
        st.floats(min_value=-5, max_value=15, allow_nan=False),
    ),
    max_size=12,
)


@settings(max_examples=200, deadline=None)
@given(span_lists)
def test_normalize_output_disjoint_and_bounded(pairs):
    raw = [RawUtterance(f"u{i}", a, b) for i, (a, b) in enumerate(pairs)]
    out = normalize_spans(raw, 10.0)
    prev_end = 0.0
    for u in out:
        assert 0.0 <= u.start_s < u.end_s <= 10.0
        assert u.start_s >= prev_end
        prev_end = u.end_s


@settings(max_examples=200, deadline=None)
@given(span_lists)
def test_normalize_idempotent(pairs):
    raw = [RawUtterance(f"u{i}", a, b) for i, (a, b) in enumerate(pairs)]
    once = normalize_spans(raw, 10.0)
    assert normalize_spans(once, 10.0) == once


# -- scripted client ---------------------------------------------------------------


def test_scripted_parses_lines():
    client = ScriptedTranscriber(
        [
            "# leading comment",
            "",
            "0.0 3.5 ini pohon durian",
            "4 6.25 bambu petung",
        ],
        confidence=0.9,
    )
    assert client.utterances == [
        RawUtterance("ini pohon durian", 0.0, 3.5, 0.9),
        RawUtterance("bambu petung", 4.0, 6.25, 0.9),
    ]


def test_scripted_reads_file(tmp_path):
    path = tmp_path / "lines.txt"
    path.write_text("1.0 2.0 salak\n")
    client = ScriptedTranscriber(path)
    assert client.utterances == [RawUtterance("salak", 1.0, 2.0, 1.0)]


@pytest.mark.parametrize("line", ["1.0 2.0", "one 2.0 text", "1.0 two text"])
def test_scripted_rejects_malformed(line):
    with pytest.raises(InvariantError):
        ScriptedTranscriber([line])


# -- transcribe --------------------------------------------------------------------


def test_transcribe_builds_field_narration(registry):
    client = ScriptedTranscriber(["0.0 3.0 durian", "3.0 6.0 sepeda motor"])
    utts = transcribe(track(), b"", registry, client)
    assert [u.origin for u in utts] == ["field_narration", "field_narration"]
    assert utts[0].match.kind == "matched" and utts[0].match.taxon_id == "durian"
    assert utts[1].match.kind == "no_match"
    assert all(u.video_id == "vid-a" for u in utts)


def test_transcribe_ids_deterministic(registry):
    client = ScriptedTranscriber(["0.0 3.0 durian"])
    first = transcribe(track(), b"", registry, client)
    second = transcribe(track(), b"", registry, client)
    assert first == second
    assert first[0].utterance_id.startswith("utt-")


def test_transcribe_distinct_ids_per_span(registry):
    client = ScriptedTranscriber(["0.0 3.0 durian", "3.0 6.0 durian"])
    utts = transcribe(track(), b"", registry, client)
    assert utts[0].utterance_id != utts[1].utterance_id


def test_transcribe_empty_text_gets_zero_confidence(registry):
    client = StaticTranscriber([RawUtterance("", 0.0, 2.0, 0.9)])
    (utt,) = transcribe(track(), b"", registry, client)
    assert utt.confidence == 0.0
    utt.validate(10.0)


def test_utterance_validate_rejects_bad_spans(registry):
    client = ScriptedTranscriber(["0.0 3.0 durian"])
    (utt,) = transcribe(track(), b"", registry, client)
    with pytest.raises(InvariantError):
        Utterance(
            utterance_id=utt.utterance_id,
            video_id=utt.video_id,
            start_s=5.0,
            end_s=4.0,
            transcript="x",
            confidence=1.0,
            match=MatchResult.no_match(),
            origin="field_narration",
        ).validate(10.0)
    with pytest.raises(InvariantError):
        Utterance(
            utterance_id="utt-x",
            video_id="vid-a",
            start_s=0.0,
            end_s=1.0,
            transcript="x",
            confidence=1.0,
            match=MatchResult.no_match(),
            origin="studio",
        ).validate(10.0)


def test_utterance_dict_roundtrip(registry):
    client = ScriptedTranscriber(["0.5 2.5 bambu petung"])
    (utt,) = transcribe(track(), b"", registry, client)
    assert Utterance.from_dict(utt.to_dict()) == utt


# -- voiceover attachment ----------------------------------------------------------


def seg(video_id: str = "vid-a") -> Segment:
    # 1:00 .. 1:10, a 10 s window
    return Segment(video_id, 1, 0, 1, 10)


def test_voiceover_rebased_to_video_time(registry):
    client = ScriptedTranscriber(["0.0 4.0 durian", "5.0 8.0 salak"])
    utts = attach_voiceover(video(), seg(), track(duration_s=10.0), b"", registry, client)
    assert [(u.start_s, u.end_s) for u in utts] == [(60.0, 64.0), (65.0, 68.0)]
    assert all(u.origin == "post_annotation" for u in utts)


def test_voiceover_duration_tolerance_boundary(registry):
    client = ScriptedTranscriber(["0.0 1.0 durian"])
    utts = attach_voiceover(video(), seg(), track(duration_s=11.0), b"", registry, client)
    assert len(utts) == 1
    with pytest.raises(DurationMismatch):
        attach_voiceover(video(), seg(), track(duration_s=11.5), b"", registry, client)
    with pytest.raises(DurationMismatch):
        attach_voiceover(video(), seg(), track(duration_s=8.5), b"", registry, client)


def test_voiceover_clips_to_segment(registry):
    # recording a touch long: utterance tail past the segment is clipped
    client = ScriptedTranscriber(["9.0 10.8 manggis"])
    utts = attach_voiceover(video(), seg(), track(duration_s=10.6), b"", registry, client)
    assert [(u.start_s, u.end_s) for u in utts] == [(69.0, 70.0)]


def test_voiceover_rejects_wrong_video(registry):
    client = ScriptedTranscriber(["0.0 1.0 durian"])
    with pytest.raises(SegmentOutOfRange):
        attach_voiceover(video("vid-b"), seg("vid-a"), track(duration_s=10.0), b"", registry, client)


# -- remote client -----------------------------------------------------------------


class PostRecorder:
    def __init__(self, response: httpx.Response | Exception):
        self.response = response
        self.calls: list[dict] = []

    def __call__(self, url, content=None, headers=None, timeout=None):
        self.calls.append(
            {"url": url, "content": content, "headers": headers, "timeout": timeout}
        )
        if isinstance(self.response, Exception):
            raise self.response
        return self.response


def test_remote_parses_response(monkeypatch, registry):
    payload = {
        "utterances": [
            {"text": "durian", "start_s": 0.0, "end_s": 2.0, "confidence": 0.7},
            {"text": "salak", "start_s": 2.0, "end_s": 4.0},
        ]
    }
    recorder = PostRecorder(httpx.Response(200, json=payload))
    monkeypatch.setattr(TR_MOD.httpx, "post", recorder)
    client = RemoteTranscriber("http://asr.local/v1", token="sekrit", timeout_s=5.0)
    raw = client.raw_transcribe(b"RIFFdata", "id")
    assert raw == [
        RawUtterance("durian", 0.0, 2.0, 0.7),
        RawUtterance("salak", 2.0, 4.0, 1.0),
    ]
    call = recorder.calls[0]
    assert call["url"] == "http://asr.local/v1"
    assert call["headers"]["Authorization"] == "Bearer sekrit"
    assert call["headers"]["X-Language-Hint"] == "id"
    assert call["timeout"] == 5.0


def test_remote_no_token_no_auth_header(monkeypatch):
    recorder = PostRecorder(httpx.Response(200, json={"utterances": []}))
    monkeypatch.setattr(TR_MOD.httpx, "post", recorder)
    RemoteTranscriber("http://asr.local/v1").raw_transcribe(b"", "id")
    assert "Authorization" not in recorder.calls[0]["headers"]


def test_remote_server_error_unavailable(monkeypatch):
    recorder = PostRecorder(httpx.Response(503, text="down"))
    monkeypatch.setattr(TR_MOD.httpx, "post", recorder)
    with pytest.raises(TranscriberUnavailable):
        RemoteTranscriber("http://asr.local/v1").raw_transcribe(b"", "id")


def test_remote_client_error_rejects_audio(monkeypatch):
    recorder = PostRecorder(httpx.Response(400, text="bad wav"))
    monkeypatch.setattr(TR_MOD.httpx, "post", recorder)
    with pytest.raises(TranscriberRejectedAudio):
        RemoteTranscriber("http://asr.local/v1").raw_transcribe(b"", "id")


def test_remote_network_failure_unavailable(monkeypatch):
    recorder = PostRecorder(httpx.ConnectError("refused"))
    monkeypatch.setattr(TR_MOD.httpx, "post", recorder)
    with pytest.raises(TranscriberUnavailable):
        RemoteTranscriber("http://asr.local/v1").raw_transcribe(b"", "id")
