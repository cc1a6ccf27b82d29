"""Location-metadata stripping across container layouts."""

from __future__ import annotations

import tempfile
from datetime import date

import cv2
import numpy as np
import pytest

import catchrelease.synthmedia as sm
from catchrelease.media import CaptureMeta, MediaStore
from catchrelease.sanitize import sanitize_media, scan_location_tags
from catchrelease.store import ContentStore

LAT, LON = -8.5069, 115.2625

CAPTURE = CaptureMeta(
    harvester_id="h-01",
    site="north-slope",
    capture_date=date(2025, 3, 14),
    season="wet",
)


def decodable(data: bytes) -> bool:
    with tempfile.NamedTemporaryFile(suffix=".mp4") as f:
        f.write(data)
        f.flush()
        cap = cv2.VideoCapture(f.name)
        try:
            ok, frame = cap.read()
        finally:
            cap.release()
    return ok and frame is not None


INJECTORS = {
    "xyz": lambda d: sm.inject_gps_xyz(d, sm.iso6709(LAT, LON)),
    "loci": lambda d: sm.inject_gps_loci(d, LAT, LON),
    "ilst-meta": lambda d: sm.inject_gps_ilst(d, sm.iso6709(LAT, LON)),
    "ilst-udta": lambda d: sm.inject_gps_ilst(d, sm.iso6709(LAT, LON), in_udta=True),
    "xmp-uuid": lambda d: sm.append_xmp_uuid(d, LAT, LON),
}


@pytest.mark.parametrize("layout", sorted(INJECTORS))
def test_strip_single_layout(video_cache, layout):
    clean = video_cache(duration_s=2.0, fps=10.0)
    tagged = INJECTORS[layout](clean)
    assert scan_location_tags(tagged), layout
    stripped = sanitize_media(tagged)
    assert scan_location_tags(stripped) == []
    assert decodable(stripped)


def test_strip_all_layouts_combined(video_cache):
    data = video_cache(duration_s=2.0, fps=10.0)
    for inject in INJECTORS.values():
        data = inject(data)
    findings = scan_location_tags(data)
    assert len(findings) >= len(INJECTORS) - 1
    stripped = sanitize_media(data)
    assert scan_location_tags(stripped) == []
    assert decodable(stripped)


def test_strip_preserves_length_and_frame_offsets(video_cache):
    # In-place blanking: chunk offsets stay valid because nothing moves.
    tagged = sm.inject_gps_xyz(video_cache(duration_s=2.0, fps=10.0), sm.iso6709(LAT, LON))
    stripped = sanitize_media(tagged)
    assert len(stripped) == len(tagged)


def test_sanitize_idempotent(video_cache):
    tagged = sm.inject_gps_loci(video_cache(duration_s=2.0, fps=10.0), LAT, LON)
    once = sanitize_media(tagged)
    assert sanitize_media(once) == once


def test_clean_input_unchanged(video_cache):
    clean = video_cache(duration_s=2.0, fps=10.0)
    assert scan_location_tags(clean) == []
    assert sanitize_media(clean) == clean


def test_key_name_blanked_in_keys_table(video_cache):
    tagged = sm.inject_gps_ilst(video_cache(duration_s=2.0, fps=10.0), sm.iso6709(LAT, LON))
    assert b"com.apple.quicktime.location.ISO6709" in tagged
    stripped = sanitize_media(tagged)
    assert b"com.apple.quicktime.location.ISO6709" not in stripped


def test_coordinate_string_gone_from_metadata(video_cache):
    loc = sm.iso6709(LAT, LON)
    tagged = sm.inject_gps_xyz(video_cache(duration_s=2.0, fps=10.0), loc)
    assert loc.encode() in tagged
    assert loc.encode() not in sanitize_media(tagged)


def test_audio_survives_strip(tmp_path, video_cache):
    samples = sm.tone(2.0, freq=330.0, rate=8000)
    tagged = sm.inject_gps_xyz(video_cache(duration_s=2.0, fps=10.0), sm.iso6709(LAT, LON))
    tagged = sm.mux_pcm_audio(tagged, samples, 8000)
    assert scan_location_tags(tagged)

    media = MediaStore(ContentStore(tmp_path / "store"))
    video = media.ingest_video(tagged, CAPTURE)
    assert scan_location_tags(media.store.get(video.video_id)) == []
    track = media.extract_audio(video)
    got, _rate = _wav_samples(media.store.get(track.audio_id))
    assert np.array_equal(got, samples)


def _wav_samples(wav: bytes) -> tuple[np.ndarray, int]:
    from catchrelease.media import read_wav_mono

    return read_wav_mono(wav)


def test_jpeg_exif_gps(video_cache):
    image = sm.scene_frame(0, 0.5, (64, 64))
    tagged = sm.jpeg_with_gps(image)
    assert scan_location_tags(tagged)
    stripped = sanitize_media(tagged)
    assert scan_location_tags(stripped) == []
    decoded = cv2.imdecode(np.frombuffer(stripped, np.uint8), cv2.IMREAD_COLOR)
    assert decoded is not None and decoded.shape[:2] == (64, 64)


def test_jpeg_without_gps_unchanged():
    image = sm.scene_frame(1, 0.5, (64, 64))
    ok, buf = cv2.imencode(".jpg", image)
    assert ok
    plain = buf.tobytes()
    assert scan_location_tags(plain) == []
    assert sanitize_media(plain) == plain


def test_png_exif_gps():
    image = sm.scene_frame(2, 0.5, (64, 64))
    tagged = sm.png_with_gps(image)
    assert scan_location_tags(tagged)
    stripped = sanitize_media(tagged)
    assert scan_location_tags(stripped) == []
    decoded = cv2.imdecode(np.frombuffer(stripped, np.uint8), cv2.IMREAD_COLOR)
    assert decoded is not None and decoded.shape[:2] == (64, 64)


def test_png_without_gps_unchanged():
    image = sm.scene_frame(3, 0.5, (64, 64))
    ok, buf = cv2.imencode(".png", image)
    assert ok
    plain = buf.tobytes()
    assert sanitize_media(plain) == plain


def test_unknown_payload_passthrough():
    blob = b"not a media file at all" * 10
    assert sanitize_media(blob) == blob
    assert scan_location_tags(blob) == []
