"""One segment in, one labeled batch out.

Chains the per-module steps in their fixed order: sample frames, pull the
narration track, transcribe it once per video (reused on later segments),
merge any recorded voiceovers, align utterances to frames, score and
deduplicate, then append the labeled frames to the dataset log and queue
the human review items. The batch composition, including QC reports for
frames that never reach the dataset, is journaled in the workflow log so a
rejected batch can still be audited.
"""

from __future__ import annotations

import dataclasses
import uuid
from dataclasses import dataclass, field

from .align import DEFAULT_LEAD_PAD_S, DEFAULT_MIN_CONFIDENCE, align
from .dataset import DatasetStore
from .errors import NoAudioStream
from .media import MediaStore, Segment
from .qc import QcReport, QcThresholds, find_duplicates, score_frame
from .registry import Registry
from .transcribe import TranscriberClient, transcribe
from .workflow import BatchRecord, WorkflowStore, _utcnow


@dataclass(frozen=True)
class PipelineResult:
    batch_id: str
    video_id: str
    segment_id: str
    frame_ids: tuple[str, ...]
    n_utterances: int
    n_labeled: int
    n_pass: int
    review_item_ids: tuple[str, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "batch_id": self.batch_id,
            "video_id": self.video_id,
            "segment_id": self.segment_id,
            "frame_ids": list(self.frame_ids),
            "n_frames": len(self.frame_ids),
            "n_utterances": self.n_utterances,
            "n_labeled": self.n_labeled,
            "n_pass": self.n_pass,
            "review_item_ids": list(self.review_item_ids),
        }


def field_utterances(
    video,
    media: MediaStore,
    workflow: WorkflowStore,
    registry: Registry,
    transcriber: TranscriberClient,
    segment_id: str,
    language_hint: str = "id",
):
    """Transcribe the narration track once per video; reuse it afterwards.

    A video without an audio stream yields no narration; voiceovers still
    label it.
    """
    existing = [
        u for u in workflow.utterances_for_video(video.video_id)
        if u.origin == "field_narration"
    ]
    if existing:
        return existing
    try:
        track = media.extract_audio(video)
    except NoAudioStream:
        return []
    wav_data = media.store.get(track.audio_id)
    utts = transcribe(track, wav_data, registry, transcriber, language_hint)
    if utts:
        workflow.add_utterances(video.video_id, segment_id, utts)
    return utts


def run_segment_pipeline(
    video_id: str,
    seg: Segment,
    fps: float,
    *,
    media: MediaStore,
    dataset: DatasetStore,
    workflow: WorkflowStore,
    registry: Registry,
    transcriber: TranscriberClient,
    thresholds: QcThresholds = QcThresholds(),
    lead_pad_s: float = DEFAULT_LEAD_PAD_S,
    min_confidence: float = DEFAULT_MIN_CONFIDENCE,
    language_hint: str = "id",
    actor: str = "pipeline",
) -> PipelineResult:
    video = media.load_video(video_id)
    seg.validate_against(video)
    segment_id = workflow.register_segment(seg)

    # Content addressing makes bit-identical samples one frame: keep the
    # earliest occurrence, drop re-encounters (within this run and of frames
    # already curated into the dataset).
    already = set(dataset.manifest().entries)
    frames = []
    for f in media.extract_frames(video, seg, fps):
        if f.frame_id in already:
            continue
        already.add(f.frame_id)
        frames.append(f)
    field_utterances(video, media, workflow, registry, transcriber, segment_id, language_hint)
    utterances = workflow.utterances_for_video(video_id)

    assignments, drafts = align(
        utterances, frames, seg,
        lead_pad_s=lead_pad_s, min_confidence=min_confidence,
    )

    # Review noise stays local: only drafts whose utterance can influence
    # this segment become items.
    lo = seg.start_time_s - lead_pad_s
    hi = seg.end_time_s
    spans = {u.utterance_id: (u.start_s, u.end_s) for u in utterances}
    kept_drafts = []
    for d in drafts:
        span = spans.get(d.subject.get("utterance_id", ""))
        if span is None or (span[1] > lo and span[0] < hi):
            kept_drafts.append(d)

    reports: dict[str, QcReport] = {
        f.frame_id: score_frame(f.frame_id, media.store.get(f.frame_id), thresholds)
        for f in frames
    }
    taxa = {
        a.frame_id: a.labels[0][0]
        for a in assignments
        if a.review_state == "machine_proposed" and a.labels
    }
    survivors = [f for f in frames if reports[f.frame_id].verdict == "pass"]
    for frame_id, dup_of in find_duplicates(
        survivors, media.store.get, taxa, thresholds.max_hamming
    ):
        reports[frame_id] = dataclasses.replace(
            reports[frame_id], verdict="reject_duplicate", duplicate_of=dup_of
        )

    batch_id = f"batch-{uuid.uuid4().hex[:12]}"
    entries = []
    labels: dict[str, list] = {}
    for a in assignments:
        if a.review_state != "machine_proposed" or not a.labels:
            continue
        taxon_id, utterance_id = a.labels[0]
        labels[a.frame_id] = [taxon_id, utterance_id]
        entries.append({
            "frame_id": a.frame_id,
            "taxon_id": taxon_id,
            "provenance": {
                "video_id": video.video_id,
                "harvester_id": video.capture.harvester_id,
                "site": video.capture.site,
                "season": video.capture.season,
                "capture_date": video.capture.capture_date.isoformat(),
            },
            "qc_verdict": reports[a.frame_id].verdict,
            "review_state": "machine_proposed",
        })

    if entries:
        dataset.add_batch(batch_id, entries, actor=actor)

    workflow.record_batch(BatchRecord(
        batch_id=batch_id,
        video_id=video_id,
        segment_id=segment_id,
        fps=fps,
        frame_ids=[f.frame_id for f in frames],
        labels=labels,
        qc={fid: rep.to_dict() for fid, rep in reports.items()},
        created_at=_utcnow(),
    ))

    review_ids = []
    for d in kept_drafts:
        subject = dict(d.subject)
        if entries:
            subject["batch_id"] = batch_id
        review_ids.append(workflow.create_review(d.kind, subject).item_id)
    if entries:
        review_ids.append(workflow.create_review("batch_approval", {
            "batch_id": batch_id,
            "video_id": video_id,
            "segment_id": segment_id,
        }).item_id)
        task = workflow.task_for_video(video_id)
        if task is not None and task.linked_batch is None:
            workflow.link_batch(task.task_id, batch_id)

    n_pass = sum(1 for r in reports.values() if r.verdict == "pass")
    return PipelineResult(
        batch_id=batch_id,
        video_id=video_id,
        segment_id=segment_id,
        frame_ids=tuple(f.frame_id for f in frames),
        n_utterances=len(utterances),
        n_labeled=len(entries),
        n_pass=n_pass,
        review_item_ids=tuple(review_ids),
    )
