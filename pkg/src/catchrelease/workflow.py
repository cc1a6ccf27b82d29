"""The twelve-step collection loop as a persisted state machine.

Tasks walk the loop one state at a time; the only backward moves are the two
rework edges (assessment or evaluation sends the team back to collecting).
Guards on entry make the process honest: no payment without an approved
assessment, no extraction before payment, no training data without a linked
batch, no closing the loop without an evaluation record and a fully
confirmed batch. Everything (tasks, payments, reviews, segments, utterances,
batch compositions) is persisted to one write-ahead log and replayed on open,
so a crash loses nothing acknowledged.

Money is decimal end to end: amount_idr is the exact product of the USD
amount and the entered FX rate; floats are rejected outright.
"""

from __future__ import annotations

import datetime as dt
import errno
import hashlib
import json
import os
import threading
import uuid
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from pathlib import Path

from .dataset import DatasetStore
from .errors import (
    AlreadyResolved,
    BadAmount,
    GuardFailed,
    IllegalTransition,
    StorageFull,
    UnknownBatch,
    UnknownItem,
    UnknownTask,
    UnknownTaxon,
    WrongState,
)
from .media import Segment
from .registry import Registry
from .store import ContentStore
from .transcribe import Utterance

STATE_NAMES = {
    1: "SelectPlantSpecies",
    2: "ContactLocalTeam",
    3: "SelectFieldSite",
    4: "CollectVideo",
    5: "SendVideo",
    6: "ExpertAssessment",
    7: "RemunerateLocalTeam",
    8: "VideoToImages",
    9: "ImagesToTrainingData",
    10: "RetrainClassifiers",
    11: "EvaluateResults",
    12: "UpdateCollection",
}

REWORK_EDGES = {(6, 4), (11, 4)}

REVIEW_KINDS = ("batch_approval", "ambiguous_utterance", "low_confidence_label")

RESULT_KINDS = {"training_report": 10, "evaluation_report": 11}


def is_legal_transition(from_state: int, to_state: int) -> bool:
    if not (1 <= from_state <= 12 and 1 <= to_state <= 12):
        return False
    return to_state == from_state + 1 or (from_state, to_state) in REWORK_EDGES


def _utcnow() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat()


@dataclass(frozen=True)
class TransitionRecord:
    from_state: int
    to_state: int
    actor: str
    timestamp: str
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "from_state": self.from_state,
            "to_state": self.to_state,
            "actor": self.actor,
            "timestamp": self.timestamp,
            "note": self.note,
        }


@dataclass(frozen=True)
class LedgerEntry:
    entry_id: str
    task_id: str
    harvester_id: str
    amount_usd: Decimal
    fx_rate_idr_per_usd: Decimal
    amount_idr: Decimal
    confirmation_ref: str
    timestamp: str

    def __post_init__(self):
        if self.amount_usd <= 0:
            raise BadAmount(f"amount_usd {self.amount_usd} must be positive")
        if self.fx_rate_idr_per_usd <= 0:
            raise BadAmount(f"fx_rate {self.fx_rate_idr_per_usd} must be positive")
        if self.amount_idr != self.amount_usd * self.fx_rate_idr_per_usd:
            raise BadAmount(
                f"amount_idr {self.amount_idr} is not amount_usd x fx_rate"
            )

    def to_dict(self) -> dict:
        return {
            "entry_id": self.entry_id,
            "task_id": self.task_id,
            "harvester_id": self.harvester_id,
            "amount_usd": str(self.amount_usd),
            "fx_rate_idr_per_usd": str(self.fx_rate_idr_per_usd),
            "amount_idr": str(self.amount_idr),
            "confirmation_ref": self.confirmation_ref,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "LedgerEntry":
        return cls(
            entry_id=raw["entry_id"],
            task_id=raw["task_id"],
            harvester_id=raw["harvester_id"],
            amount_usd=Decimal(raw["amount_usd"]),
            fx_rate_idr_per_usd=Decimal(raw["fx_rate_idr_per_usd"]),
            amount_idr=Decimal(raw["amount_idr"]),
            confirmation_ref=raw["confirmation_ref"],
            timestamp=raw["timestamp"],
        )


def to_money(value, what: str) -> Decimal:
    """Exact decimal from str/int/Decimal; floats are rejected, not rounded."""
    if isinstance(value, float):
        raise BadAmount(f"{what} must not be a float; send a string")
    try:
        return Decimal(value)
    except (InvalidOperation, TypeError, ValueError) as e:
        raise BadAmount(f"{what} is not a decimal number: {value!r}") from e


@dataclass(frozen=True)
class Resolution:
    decision: str
    actor: str
    timestamp: str

    def to_dict(self) -> dict:
        return {"decision": self.decision, "actor": self.actor, "timestamp": self.timestamp}


@dataclass
class ReviewItem:
    item_id: str
    kind: str
    subject: dict
    created_at: str
    resolution: Resolution | None = None

    def to_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "kind": self.kind,
            "subject": self.subject,
            "created_at": self.created_at,
            "resolution": self.resolution.to_dict() if self.resolution else None,
        }


@dataclass
class CollectionTask:
    task_id: str
    target_taxon: str
    created_at: str
    state: int = 1
    assigned_harvester: str | None = None
    linked_videos: list[str] = field(default_factory=list)
    linked_batch: str | None = None
    history: list[TransitionRecord] = field(default_factory=list)
    attachments: dict[str, list[str]] = field(default_factory=dict)

    @property
    def state_name(self) -> str:
        return STATE_NAMES[self.state]

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "target_taxon": self.target_taxon,
            "created_at": self.created_at,
            "state": self.state,
            "state_name": self.state_name,
            "assigned_harvester": self.assigned_harvester,
            "linked_videos": list(self.linked_videos),
            "linked_batch": self.linked_batch,
            "history": [t.to_dict() for t in self.history],
            "attachments": {k: list(v) for k, v in self.attachments.items()},
        }


@dataclass
class BatchRecord:
    """Composition of one pipeline run: frames, labels, and QC outcomes."""

    batch_id: str
    video_id: str
    segment_id: str
    fps: float
    frame_ids: list[str]
    labels: dict[str, list]       # frame_id -> [taxon_id, utterance_id]
    qc: dict[str, dict]           # frame_id -> QcReport dict
    created_at: str

    def to_dict(self) -> dict:
        return {
            "batch_id": self.batch_id,
            "video_id": self.video_id,
            "segment_id": self.segment_id,
            "fps": self.fps,
            "frame_ids": list(self.frame_ids),
            "labels": self.labels,
            "qc": self.qc,
            "created_at": self.created_at,
        }


class WorkflowStore:
    """All mutable workflow state behind one WAL; replayed on construction."""

    def __init__(
        self,
        root: str | Path,
        registry: Registry,
        dataset: DatasetStore,
        content: ContentStore,
    ):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.registry = registry
        self.dataset = dataset
        self.content = content
        self.wal_path = self.root / "workflow.jsonl"
        self._lock = threading.RLock()
        self.tasks: dict[str, CollectionTask] = {}
        self.ledger: list[LedgerEntry] = []
        self.reviews: dict[str, ReviewItem] = {}
        self.segments: dict[str, Segment] = {}
        self.batches: dict[str, BatchRecord] = {}
        self._utterances: dict[str, list[Utterance]] = {}
        self._replay()

    # -- WAL ----------------------------------------------------------------

    def _replay(self) -> None:
        if not self.wal_path.exists():
            return
        with open(self.wal_path) as f:
            for line in f:
                if line.strip():
                    self._apply(json.loads(line))

    def _commit(self, record: dict) -> None:
        """Apply and durably persist one record (already validated)."""
        line = json.dumps(record, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
        try:
            with open(self.wal_path, "a", encoding="utf-8") as f:
                f.write(line + "\n")
                f.flush()
                os.fsync(f.fileno())
        except OSError as e:
            if e.errno == errno.ENOSPC:
                raise StorageFull("workflow log write failed: no space") from e
            raise
        self._apply(record)

    def _apply(self, r: dict) -> None:
        """State mutation for one record; shared by commands and replay."""
        kind = r["rec"]
        if kind == "task_created":
            self.tasks[r["task_id"]] = CollectionTask(
                task_id=r["task_id"],
                target_taxon=r["target_taxon"],
                created_at=r["timestamp"],
            )
        elif kind == "advanced":
            task = self.tasks[r["task_id"]]
            task.state = r["to_state"]
            task.history.append(TransitionRecord(
                from_state=r["from_state"],
                to_state=r["to_state"],
                actor=r["actor"],
                timestamp=r["timestamp"],
                note=r.get("note", ""),
            ))
        elif kind == "video_linked":
            task = self.tasks[r["task_id"]]
            if r["video_id"] not in task.linked_videos:
                task.linked_videos.append(r["video_id"])
            if task.assigned_harvester is None and r.get("harvester_id"):
                task.assigned_harvester = r["harvester_id"]
        elif kind == "batch_linked":
            self.tasks[r["task_id"]].linked_batch = r["batch_id"]
        elif kind == "payment":
            self.ledger.append(LedgerEntry.from_dict(r["entry"]))
        elif kind == "review_created":
            self.reviews[r["item_id"]] = ReviewItem(
                item_id=r["item_id"],
                kind=r["kind"],
                subject=r["subject"],
                created_at=r["timestamp"],
            )
        elif kind == "review_resolved":
            self.reviews[r["item_id"]].resolution = Resolution(
                decision=r["decision"], actor=r["actor"], timestamp=r["timestamp"]
            )
        elif kind == "result_attached":
            task = self.tasks[r["task_id"]]
            task.attachments.setdefault(r["kind"], []).append(r["digest"])
        elif kind == "segment_created":
            self.segments[r["segment_id"]] = Segment.from_dict(r["segment"])
        elif kind == "utterances_added":
            utts = [Utterance.from_dict(u) for u in r["utterances"]]
            self._utterances.setdefault(r["video_id"], []).extend(utts)
        elif kind == "batch_recorded":
            b = r["batch"]
            self.batches[b["batch_id"]] = BatchRecord(
                batch_id=b["batch_id"],
                video_id=b["video_id"],
                segment_id=b["segment_id"],
                fps=b["fps"],
                frame_ids=b["frame_ids"],
                labels=b["labels"],
                qc=b["qc"],
                created_at=b["created_at"],
            )
        else:
            raise ValueError(f"unknown workflow record {kind!r}")

    def _new_id(self, prefix: str) -> str:
        return f"{prefix}-{uuid.uuid4().hex[:12]}"

    # -- tasks ----------------------------------------------------------------

    def create_task(self, target_taxon: str) -> CollectionTask:
        if target_taxon not in self.registry:
            raise UnknownTaxon(target_taxon)
        with self._lock:
            task_id = self._new_id("task")
            self._commit({
                "rec": "task_created",
                "task_id": task_id,
                "target_taxon": target_taxon,
                "timestamp": _utcnow(),
            })
            return self.tasks[task_id]

    def get_task(self, task_id: str) -> CollectionTask:
        task = self.tasks.get(task_id)
        if task is None:
            raise UnknownTask(task_id)
        return task

    def _check_guard(self, task: CollectionTask, to_state: int) -> None:
        if to_state == 5 and not task.linked_videos:
            raise GuardFailed("entering SendVideo requires at least one linked video")
        if to_state == 7:
            approved = any(
                item.kind == "batch_approval"
                and item.subject.get("task_id") == task.task_id
                and item.resolution is not None
                and item.resolution.decision == "approve"
                for item in self.reviews.values()
            )
            if not approved:
                raise GuardFailed(
                    "entering RemunerateLocalTeam requires an approved assessment"
                )
        if to_state == 8 and not any(e.task_id == task.task_id for e in self.ledger):
            raise GuardFailed("entering VideoToImages requires a ledger entry")
        if to_state == 9 and not task.linked_batch:
            raise GuardFailed("entering ImagesToTrainingData requires a linked batch")
        if to_state == 12:
            if not task.attachments.get("evaluation_report"):
                raise GuardFailed("entering UpdateCollection requires an evaluation record")
            manifest = self.dataset.manifest()
            frames = manifest.batches.get(task.linked_batch or "", [])
            if not frames or any(
                manifest.entries[fid].review_state
                not in ("expert_confirmed", "expert_corrected")
                for fid in frames
            ):
                raise GuardFailed(
                    "entering UpdateCollection requires the linked batch to be fully confirmed"
                )

    def advance(self, task_id: str, to_state: int, actor: str, note: str = "") -> CollectionTask:
        with self._lock:
            task = self.get_task(task_id)
            if not is_legal_transition(task.state, to_state):
                raise IllegalTransition(task.state, to_state)
            self._check_guard(task, to_state)
            self._commit({
                "rec": "advanced",
                "task_id": task_id,
                "from_state": task.state,
                "to_state": to_state,
                "actor": actor,
                "note": note,
                "timestamp": _utcnow(),
            })
            if to_state == 6:
                self.create_review("batch_approval", {
                    "task_id": task_id,
                    "video_ids": list(task.linked_videos),
                })
            return task

    def link_video(self, task_id: str, video_id: str, harvester_id: str | None = None) -> None:
        with self._lock:
            self.get_task(task_id)
            self._commit({
                "rec": "video_linked",
                "task_id": task_id,
                "video_id": video_id,
                "harvester_id": harvester_id,
            })

    def link_batch(self, task_id: str, batch_id: str) -> None:
        with self._lock:
            self.get_task(task_id)
            self._commit({"rec": "batch_linked", "task_id": task_id, "batch_id": batch_id})

    # -- payments ---------------------------------------------------------------

    def record_payment(
        self,
        task_id: str,
        harvester_id: str,
        amount_usd,
        fx_rate,
        confirmation_ref: str,
    ) -> LedgerEntry:
        with self._lock:
            task = self.get_task(task_id)
            if task.state != 7:
                raise WrongState(
                    f"payments are recorded at RemunerateLocalTeam; task is at {task.state_name}"
                )
            usd = to_money(amount_usd, "amount_usd")
            rate = to_money(fx_rate, "fx_rate")
            entry = LedgerEntry(
                entry_id=self._new_id("pay"),
                task_id=task_id,
                harvester_id=harvester_id,
                amount_usd=usd,
                fx_rate_idr_per_usd=rate,
                amount_idr=usd * rate,
                confirmation_ref=confirmation_ref,
                timestamp=_utcnow(),
            )
            self._commit({"rec": "payment", "entry": entry.to_dict()})
            return entry

    def ledger_for_task(self, task_id: str) -> list[LedgerEntry]:
        return [e for e in self.ledger if e.task_id == task_id]

    # -- external results ---------------------------------------------------------

    def attach_external_result(self, task_id: str, kind: str, document: bytes) -> dict:
        if kind not in RESULT_KINDS:
            raise WrongState(f"unknown result kind {kind!r}")
        with self._lock:
            task = self.get_task(task_id)
            if task.state != RESULT_KINDS[kind]:
                raise WrongState(
                    f"{kind} is attached at state {RESULT_KINDS[kind]}; task is at {task.state}"
                )
            digest = self.content.put(document)
            self.content.put_meta(digest, {"kind": kind, "task_id": task_id})
            self._commit({
                "rec": "result_attached",
                "task_id": task_id,
                "kind": kind,
                "digest": digest,
                "timestamp": _utcnow(),
            })
            return {"task_id": task_id, "kind": kind, "digest": digest}

    # -- review queue ---------------------------------------------------------------

    def create_review(self, kind: str, subject: dict) -> ReviewItem:
        if kind not in REVIEW_KINDS:
            raise ValueError(f"unknown review kind {kind!r}")
        with self._lock:
            item_id = self._new_id("rev")
            self._commit({
                "rec": "review_created",
                "item_id": item_id,
                "kind": kind,
                "subject": subject,
                "timestamp": _utcnow(),
            })
            return self.reviews[item_id]

    def unresolved_reviews(self) -> list[ReviewItem]:
        return [i for i in self.reviews.values() if i.resolution is None]

    def resolve_review(self, item_id: str, decision: str, actor: str) -> ReviewItem:
        with self._lock:
            item = self.reviews.get(item_id)
            if item is None:
                raise UnknownItem(item_id)
            if item.resolution is not None:
                raise AlreadyResolved(item_id)
            batch_id = item.subject.get("batch_id")
            if batch_id:
                if item.kind == "batch_approval":
                    if decision == "approve":
                        self.dataset.approve_batch(batch_id, actor)
                    elif decision == "reject":
                        self.dataset.quarantine_batch(
                            batch_id, f"rejected in review {item_id}", actor
                        )
                elif decision in self.registry:
                    self.dataset.relabel_batch(batch_id, decision, actor, self.registry)
            self._commit({
                "rec": "review_resolved",
                "item_id": item_id,
                "decision": decision,
                "actor": actor,
                "timestamp": _utcnow(),
            })
            return item

    # -- segments, utterances, batches -----------------------------------------------

    def register_segment(self, seg: Segment) -> str:
        payload = f"{seg.video_id}:{seg.start_min}:{seg.start_s}:{seg.end_min}:{seg.end_s}"
        segment_id = "seg-" + hashlib.sha256(payload.encode()).hexdigest()[:16]
        with self._lock:
            if segment_id not in self.segments:
                self._commit({
                    "rec": "segment_created",
                    "segment_id": segment_id,
                    "segment": seg.to_dict(),
                })
        return segment_id

    def get_segment(self, segment_id: str) -> Segment:
        seg = self.segments.get(segment_id)
        if seg is None:
            raise UnknownItem(f"no segment {segment_id}")
        return seg

    def add_utterances(self, video_id: str, segment_id: str, utterances: list[Utterance]) -> None:
        with self._lock:
            self._commit({
                "rec": "utterances_added",
                "video_id": video_id,
                "segment_id": segment_id,
                "utterances": [u.to_dict() for u in utterances],
            })

    def utterances_for_video(self, video_id: str) -> list[Utterance]:
        return list(self._utterances.get(video_id, []))

    def record_batch(self, batch: BatchRecord) -> None:
        with self._lock:
            self._commit({"rec": "batch_recorded", "batch": batch.to_dict()})

    def get_batch(self, batch_id: str) -> BatchRecord:
        batch = self.batches.get(batch_id)
        if batch is None:
            raise UnknownBatch(f"no batch {batch_id}")
        return batch

    def task_for_video(self, video_id: str) -> CollectionTask | None:
        for task in self.tasks.values():
            if video_id in task.linked_videos:
                return task
        return None
