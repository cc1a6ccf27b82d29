"""Label assignment: map utterance time windows onto extracted frames.

Field narrators name a plant and then film it, so a matched utterance labels
frames from slightly before it is spoken (lead_pad) until the next matched
utterance takes over. Windows are built per origin; post-annotation voiceover
outranks field narration wherever both cover a frame. The function is pure:
same inputs, same output, one assignment per frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import CrossVideoInput
from .media import FrameRef, Segment
from .transcribe import Utterance

REVIEW_STATES = ("machine_proposed", "expert_confirmed", "expert_corrected", "rejected")

DEFAULT_LEAD_PAD_S = 0.5
DEFAULT_MIN_CONFIDENCE = 0.4


@dataclass(frozen=True)
class LabelAssignment:
    frame_id: str
    labels: tuple[tuple[str, str], ...]  # (taxon_id, source_utterance_id)
    review_state: str

    def to_dict(self) -> dict:
        return {
            "frame_id": self.frame_id,
            "labels": [list(pair) for pair in self.labels],
            "review_state": self.review_state,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "LabelAssignment":
        return cls(
            frame_id=raw["frame_id"],
            labels=tuple((t, u) for t, u in raw["labels"]),
            review_state=raw["review_state"],
        )


@dataclass(frozen=True)
class LabelWindow:
    start_s: float
    end_s: float
    taxon_id: str
    utterance_id: str
    origin: str

    def contains(self, t: float) -> bool:
        return self.start_s <= t < self.end_s


@dataclass
class ReviewDraft:
    """A review-queue entry the caller should register (ids assigned there)."""

    kind: str  # ambiguous_utterance | low_confidence_label
    subject: dict = field(default_factory=dict)


def label_windows(
    utterances: list[Utterance],
    seg: Segment,
    lead_pad_s: float = DEFAULT_LEAD_PAD_S,
    min_confidence: float = DEFAULT_MIN_CONFIDENCE,
) -> tuple[list[LabelWindow], list[ReviewDraft]]:
    """Build per-origin windows; collect review drafts for everything demoted.

    Within one origin, window i runs [u_i.start - pad, u_{i+1}.start - pad)
    and the last window runs to the segment end; all clamped to the segment.
    Consecutive windows share a boundary, so same-origin windows never
    overlap. Ambiguous, unmatched, and low-confidence utterances create no
    window and are surfaced for review instead.
    """
    windows: list[LabelWindow] = []
    drafts: list[ReviewDraft] = []
    for origin in ("field_narration", "post_annotation"):
        eligible = []
        for u in sorted(
            (u for u in utterances if u.origin == origin),
            key=lambda u: (u.start_s, u.end_s, u.utterance_id),
        ):
            if u.match.kind == "matched":
                if u.confidence >= min_confidence:
                    eligible.append(u)
                else:
                    drafts.append(ReviewDraft(
                        kind="low_confidence_label",
                        subject={
                            "utterance_id": u.utterance_id,
                            "video_id": u.video_id,
                            "transcript": u.transcript,
                            "confidence": u.confidence,
                            "proposed_taxon": u.match.taxon_id,
                        },
                    ))
            elif u.match.kind == "ambiguous" or (u.match.kind == "no_match" and u.transcript):
                drafts.append(ReviewDraft(
                    kind="ambiguous_utterance",
                    subject={
                        "utterance_id": u.utterance_id,
                        "video_id": u.video_id,
                        "transcript": u.transcript,
                        "match_kind": u.match.kind,
                        "candidates": list(u.match.candidates),
                    },
                ))
        for i, u in enumerate(eligible):
            start = max(u.start_s - lead_pad_s, seg.start_time_s)
            if i + 1 < len(eligible):
                end = min(eligible[i + 1].start_s - lead_pad_s, seg.end_time_s)
            else:
                end = seg.end_time_s
            if start < end:
                windows.append(LabelWindow(start, end, u.match.taxon_id, u.utterance_id, origin))
    return windows, drafts


def align(
    utterances: list[Utterance],
    frames: list[FrameRef],
    seg: Segment,
    lead_pad_s: float = DEFAULT_LEAD_PAD_S,
    min_confidence: float = DEFAULT_MIN_CONFIDENCE,
) -> tuple[list[LabelAssignment], list[ReviewDraft]]:
    """One assignment per frame: labeled, or rejected when no window claims it.

    Should distinct same-origin windows ever both claim a frame, the frame is
    left unlabeled and routed to review.
    """
    for u in utterances:
        if u.video_id != seg.video_id:
            raise CrossVideoInput(
                f"utterance {u.utterance_id} is from video {u.video_id[:12]}"
            )
    for f in frames:
        if f.video_id != seg.video_id:
            raise CrossVideoInput(f"frame {f.frame_id[:12]} is from video {f.video_id[:12]}")
    if any(b.timestamp_s < a.timestamp_s for a, b in zip(frames, frames[1:])):
        raise ValueError("frames must be sorted by timestamp")

    windows, drafts = label_windows(utterances, seg, lead_pad_s, min_confidence)
    post = [w for w in windows if w.origin == "post_annotation"]
    fieldw = [w for w in windows if w.origin == "field_narration"]

    assignments = []
    for f in frames:
        hits = [w for w in post if w.contains(f.timestamp_s)]
        if not hits:
            hits = [w for w in fieldw if w.contains(f.timestamp_s)]
        taxa = {w.taxon_id for w in hits}
        if len(taxa) == 1:
            w = hits[0]
            assignments.append(LabelAssignment(
                frame_id=f.frame_id,
                labels=((w.taxon_id, w.utterance_id),),
                review_state="machine_proposed",
            ))
        else:
            if len(taxa) > 1:
                drafts.append(ReviewDraft(
                    kind="ambiguous_utterance",
                    subject={
                        "frame_id": f.frame_id,
                        "video_id": f.video_id,
                        "timestamp_s": f.timestamp_s,
                        "match_kind": "window_overlap",
                        "candidates": sorted(taxa),
                    },
                ))
            assignments.append(LabelAssignment(
                frame_id=f.frame_id, labels=(), review_state="rejected"
            ))
    return assignments, drafts
