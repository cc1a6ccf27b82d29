"""Field video in, curated and versioned image dataset out.

The package turns narrated foraging videos into labeled, quality-controlled,
split-assigned image datasets, with an auditable collection workflow
(tasks, expert review, remuneration ledger) wrapped around the pipeline.
"""

from .align import LabelAssignment, LabelWindow, ReviewDraft, align, label_windows
from .dataset import (
    BalanceReport,
    DatasetManifest,
    DatasetStore,
    ExportSummary,
    ManifestEntry,
)
from .errors import CatchReleaseError
from .media import (
    AudioTrack,
    CaptureMeta,
    FieldVideo,
    FrameRef,
    MediaStore,
    Segment,
    plan_sample_times,
)
from .qc import QcReport, QcThresholds, find_duplicates, phash64, score_frame
from .registry import (
    MatchResult,
    Registry,
    TaxonRecord,
    levenshtein,
    load_registry,
    match_label,
    similarity_ratio,
)
from .sanitize import sanitize_media, scan_location_tags
from .store import ContentStore, sha256_hex
from .transcribe import (
    RawUtterance,
    RemoteTranscriber,
    ScriptedTranscriber,
    StaticTranscriber,
    Utterance,
    attach_voiceover,
    transcribe,
)
from .workflow import (
    STATE_NAMES,
    CollectionTask,
    LedgerEntry,
    ReviewItem,
    WorkflowStore,
    is_legal_transition,
)

__version__ = "0.1.0"

__all__ = [
    "AudioTrack", "BalanceReport", "CaptureMeta", "CatchReleaseError",
    "CollectionTask", "ContentStore", "DatasetManifest", "DatasetStore",
    "ExportSummary", "FieldVideo", "FrameRef", "LabelAssignment",
    "LabelWindow", "LedgerEntry", "ManifestEntry", "MatchResult",
    "MediaStore", "QcReport", "QcThresholds", "RawUtterance", "Registry",
    "RemoteTranscriber", "ReviewDraft", "ReviewItem", "STATE_NAMES",
    "ScriptedTranscriber", "Segment", "StaticTranscriber", "TaxonRecord",
    "Utterance", "WorkflowStore", "align", "attach_voiceover",
    "find_duplicates", "is_legal_transition", "label_windows", "levenshtein",
    "load_registry", "match_label", "phash64", "plan_sample_times",
    "sanitize_media", "scan_location_tags", "score_frame", "sha256_hex",
    "similarity_ratio", "transcribe",
]
