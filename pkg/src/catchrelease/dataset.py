"""Append-only event log over labeled frames, with materialized manifests.

Every change to the dataset is an event: batches arrive, get quarantined,
relabeled, or approved, and split policy is (re)applied. The manifest is a
pure fold of the log, so any version can be rebuilt exactly, the full label
history of any frame is recoverable, and a correction never destroys what it
corrects. Split assignment is a deterministic function of (frame_id, seed),
which keeps earlier assignments fixed as the dataset grows.
"""

from __future__ import annotations

import datetime as dt
import errno
import fcntl
import hashlib
import json
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import (
    BadRatios,
    StaleEventId,
    StorageFull,
    UnknownBatch,
    UnknownTaxon,
    UnknownVersion,
    ValidationError,
)
from .qc import VERDICTS, BalanceReport, balance_report_from
from .registry import Registry
from .store import ContentStore, sha256_hex

EVENT_KINDS = ("add_batch", "quarantine_batch", "relabel_batch", "approve_batch", "set_split_policy")
SPLITS = ("train", "val", "test")
REVIEW_STATES = ("machine_proposed", "expert_confirmed", "expert_corrected", "rejected")
PROVENANCE_KEYS = ("video_id", "harvester_id", "site", "season", "capture_date")

DEFAULT_RATIOS = (0.8, 0.1, 0.1)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


@dataclass(frozen=True)
class DatasetEvent:
    event_id: int
    kind: str
    payload: dict
    actor: str
    timestamp: str  # UTC ISO-8601
    batch_id: str

    def to_line(self) -> str:
        return canonical_json({
            "event_id": self.event_id,
            "kind": self.kind,
            "payload": self.payload,
            "actor": self.actor,
            "timestamp": self.timestamp,
            "batch_id": self.batch_id,
        })

    @classmethod
    def from_line(cls, line: str) -> "DatasetEvent":
        raw = json.loads(line)
        return cls(
            event_id=int(raw["event_id"]),
            kind=raw["kind"],
            payload=raw["payload"],
            actor=raw["actor"],
            timestamp=raw["timestamp"],
            batch_id=raw["batch_id"],
        )


@dataclass
class ManifestEntry:
    frame_id: str
    taxon_id: str
    provenance: dict
    qc_verdict: str
    review_state: str
    batch_id: str
    split: str = "unassigned"
    quarantined: bool = False

    def to_dict(self) -> dict:
        return {
            "frame_id": self.frame_id,
            "taxon_id": self.taxon_id,
            "provenance": self.provenance,
            "qc_verdict": self.qc_verdict,
            "review_state": self.review_state,
            "batch_id": self.batch_id,
            "split": self.split,
            "quarantined": self.quarantined,
        }


@dataclass
class DatasetManifest:
    version: int = 0
    entries: dict[str, ManifestEntry] = field(default_factory=dict)
    batches: dict[str, list[str]] = field(default_factory=dict)
    split_policy: dict | None = None

    @property
    def class_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for e in self.entries.values():
            if not e.quarantined and e.qc_verdict == "pass":
                counts[e.taxon_id] = counts.get(e.taxon_id, 0) + 1
        return counts

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "entries": [self.entries[fid].to_dict() for fid in sorted(self.entries)],
            "class_counts": dict(sorted(self.class_counts.items())),
            "split_policy": self.split_policy,
        }

    def canonical_bytes(self) -> bytes:
        return canonical_json(self.to_dict()).encode()


def split_sort_key(seed: int, frame_id: str) -> str:
    return hashlib.sha256(f"{seed}:{frame_id}".encode()).hexdigest()


def largest_remainder(n: int, ratios: tuple[float, float, float]) -> tuple[int, int, int]:
    """Apportion n into three buckets matching ratios, remainders largest-first."""
    exact = [n * r for r in ratios]
    base = [math.floor(x) for x in exact]
    leftover = n - sum(base)
    order = sorted(range(3), key=lambda i: (-(exact[i] - base[i]), i))
    for i in order[:leftover]:
        base[i] += 1
    return tuple(base)


def validate_ratios(ratios) -> tuple[float, float, float]:
    if len(ratios) != 3:
        raise BadRatios(f"expected 3 ratios, got {len(ratios)}")
    r = tuple(float(x) for x in ratios)
    if any(x <= 0 for x in r):
        raise BadRatios(f"ratios must be positive: {r}")
    if abs(sum(r) - 1.0) > 1e-9:
        raise BadRatios(f"ratios sum to {sum(r)}, not 1")
    return r


def _validate_event(event: DatasetEvent, manifest: DatasetManifest) -> None:
    if event.kind not in EVENT_KINDS:
        raise ValidationError(f"unknown event kind {event.kind!r}")
    if not event.batch_id and event.kind != "set_split_policy":
        raise ValidationError("batch_id required")
    p = event.payload
    if event.kind == "add_batch":
        entries = p.get("entries")
        if not entries:
            raise ValidationError("add_batch with no entries")
        seen = set()
        for e in entries:
            for key in ("frame_id", "taxon_id", "provenance", "qc_verdict", "review_state"):
                if key not in e:
                    raise ValidationError(f"entry missing {key}")
            if e["qc_verdict"] not in VERDICTS:
                raise ValidationError(f"bad qc_verdict {e['qc_verdict']!r}")
            if e["review_state"] not in REVIEW_STATES:
                raise ValidationError(f"bad review_state {e['review_state']!r}")
            for key in PROVENANCE_KEYS:
                if key not in e["provenance"]:
                    raise ValidationError(f"provenance missing {key}")
            fid = e["frame_id"]
            if fid in seen or fid in manifest.entries:
                raise ValidationError(f"duplicate frame_id {fid}")
            seen.add(fid)
    elif event.kind == "quarantine_batch":
        if "reason" not in p:
            raise ValidationError("quarantine_batch requires a reason")
    elif event.kind == "relabel_batch":
        if not p.get("new_taxon"):
            raise ValidationError("relabel_batch requires new_taxon")
    elif event.kind == "set_split_policy":
        validate_ratios(p.get("ratios", ()))
        if not isinstance(p.get("seed"), int):
            raise ValidationError("set_split_policy requires an integer seed")


def _apply_split_policy(manifest: DatasetManifest, ratios: tuple, seed: int) -> None:
    """Assign still-unassigned eligible entries, preserving prior assignments.

    Per class: largest-remainder targets over all eligible entries, minus
    what earlier policy applications already placed, filled in keyed-hash
    order. Assigned frames never move because they are simply skipped.
    """
    by_taxon: dict[str, list[ManifestEntry]] = {}
    for e in manifest.entries.values():
        if (
            e.review_state in ("expert_confirmed", "expert_corrected")
            and e.qc_verdict == "pass"
            and not e.quarantined
        ):
            by_taxon.setdefault(e.taxon_id, []).append(e)
    for entries in by_taxon.values():
        targets = largest_remainder(len(entries), ratios)
        existing = {s: sum(1 for e in entries if e.split == s) for s in SPLITS}
        quotas = [max(0, t - existing[s]) for s, t in zip(SPLITS, targets)]
        pending = sorted(
            (e for e in entries if e.split == "unassigned"),
            key=lambda e: split_sort_key(seed, e.frame_id),
        )
        i = 0
        for split, quota in zip(SPLITS, quotas):
            for e in pending[i:i + quota]:
                e.split = split
            i += quota
        for e in pending[i:]:  # residue when a split already exceeds its target
            e.split = "train"


def apply_event(manifest: DatasetManifest, event: DatasetEvent) -> None:
    """Fold one event into the manifest, in place."""
    p = event.payload
    if event.kind == "add_batch":
        ids = []
        for raw in p["entries"]:
            entry = ManifestEntry(
                frame_id=raw["frame_id"],
                taxon_id=raw["taxon_id"],
                provenance=dict(raw["provenance"]),
                qc_verdict=raw["qc_verdict"],
                review_state=raw["review_state"],
                batch_id=event.batch_id,
            )
            manifest.entries[entry.frame_id] = entry
            ids.append(entry.frame_id)
        manifest.batches.setdefault(event.batch_id, []).extend(ids)
    elif event.kind == "quarantine_batch":
        for fid in manifest.batches.get(event.batch_id, ()):
            manifest.entries[fid].quarantined = True
    elif event.kind == "relabel_batch":
        for fid in manifest.batches.get(event.batch_id, ()):
            e = manifest.entries[fid]
            e.taxon_id = p["new_taxon"]
            e.review_state = "expert_corrected"
            e.quarantined = False
    elif event.kind == "approve_batch":
        for fid in manifest.batches.get(event.batch_id, ()):
            e = manifest.entries[fid]
            if e.review_state == "machine_proposed":
                e.review_state = "expert_confirmed"
    elif event.kind == "set_split_policy":
        ratios = tuple(float(r) for r in p["ratios"])
        manifest.split_policy = {"ratios": list(ratios), "seed": p["seed"]}
        _apply_split_policy(manifest, ratios, p["seed"])
    manifest.version = event.event_id


@dataclass(frozen=True)
class ExportSummary:
    version: int
    root: str
    counts: dict  # split -> taxon -> n
    total_files: int

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "root": self.root,
            "counts": self.counts,
            "total_files": self.total_files,
        }


def _file_ext(data: bytes) -> str:
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        return "png"
    if data[:2] == b"\xff\xd8":
        return "jpg"
    return "bin"


class DatasetStore:
    """Single event log file plus an in-memory materialized manifest."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.log_path = self.root / "events.jsonl"
        self._lock_path = self.root / "events.lock"
        self._manifest = DatasetManifest()
        self._offset = 0
        self._catch_up()

    # -- log plumbing -----------------------------------------------------------

    def _catch_up(self) -> None:
        """Fold any log records appended since we last looked."""
        if not self.log_path.exists():
            return
        with open(self.log_path, "rb") as f:
            f.seek(self._offset)
            for line in f:
                if line.strip():
                    apply_event(self._manifest, DatasetEvent.from_line(line.decode()))
            self._offset = f.tell()

    @property
    def version(self) -> int:
        return self._manifest.version

    def events(self, up_to: int | None = None) -> list[DatasetEvent]:
        if not self.log_path.exists():
            return []
        out = []
        with open(self.log_path) as f:
            for line in f:
                if not line.strip():
                    continue
                e = DatasetEvent.from_line(line)
                if up_to is not None and e.event_id > up_to:
                    break
                out.append(e)
        return out

    def append_event(self, event: DatasetEvent) -> int:
        with open(self._lock_path, "w") as lock:
            fcntl.flock(lock, fcntl.LOCK_EX)
            self._catch_up()
            if event.event_id != self._manifest.version + 1:
                raise StaleEventId(
                    f"event_id {event.event_id}, expected {self._manifest.version + 1}"
                )
            _validate_event(event, self._manifest)
            line = event.to_line() + "\n"
            try:
                with open(self.log_path, "a", encoding="utf-8") as f:
                    f.write(line)
                    f.flush()
                    os.fsync(f.fileno())
            except OSError as e:
                if e.errno == errno.ENOSPC:
                    raise StorageFull("event log write failed: no space") from e
                raise
            apply_event(self._manifest, event)
            self._offset += len(line.encode())
        return self._manifest.version

    def _next_event(self, kind: str, payload: dict, actor: str, batch_id: str) -> int:
        # id allocation races with other writers; losing the optimistic check
        # just means another event landed first, so catch up and go again
        for _ in range(64):
            self._catch_up()
            event = DatasetEvent(
                event_id=self.version + 1,
                kind=kind,
                payload=payload,
                actor=actor,
                timestamp=dt.datetime.now(dt.timezone.utc).isoformat(),
                batch_id=batch_id,
            )
            try:
                return self.append_event(event)
            except StaleEventId:
                continue
        raise StaleEventId("could not win an append slot after 64 attempts")

    # -- commands ---------------------------------------------------------------

    def add_batch(self, batch_id: str, entries: list[dict], actor: str) -> int:
        return self._next_event("add_batch", {"entries": entries}, actor, batch_id)

    def quarantine_batch(self, batch_id: str, reason: str, actor: str) -> int:
        if batch_id not in self._manifest.batches:
            raise UnknownBatch(batch_id)
        return self._next_event("quarantine_batch", {"reason": reason}, actor, batch_id)

    def relabel_batch(self, batch_id: str, new_taxon: str, actor: str, registry: Registry) -> int:
        if batch_id not in self._manifest.batches:
            raise UnknownBatch(batch_id)
        if new_taxon not in registry:
            raise UnknownTaxon(new_taxon)
        return self._next_event("relabel_batch", {"new_taxon": new_taxon}, actor, batch_id)

    def approve_batch(self, batch_id: str, actor: str) -> int:
        if batch_id not in self._manifest.batches:
            raise UnknownBatch(batch_id)
        return self._next_event("approve_batch", {}, actor, batch_id)

    def assign_splits(
        self,
        ratios: tuple[float, float, float] = DEFAULT_RATIOS,
        seed: int = 0,
        actor: str = "system",
    ) -> int:
        ratios = validate_ratios(ratios)
        return self._next_event(
            "set_split_policy", {"ratios": list(ratios), "seed": seed}, actor, ""
        )

    # -- views ------------------------------------------------------------------

    def manifest(self, version: int | None = None) -> DatasetManifest:
        self._catch_up()
        if version is None or version == self._manifest.version:
            return self._manifest
        if version < 0 or version > self._manifest.version:
            raise UnknownVersion(f"version {version}, log has {self._manifest.version}")
        m = DatasetManifest()
        for event in self.events(up_to=version):
            apply_event(m, event)
        return m

    def balance_report(self, version: int | None = None) -> BalanceReport:
        return balance_report_from(self.manifest(version).entries.values())

    def frame_history(self, frame_id: str) -> list[dict]:
        """Every (version, taxon, review_state) the frame has carried."""
        history = []
        m = DatasetManifest()
        for event in self.events():
            apply_event(m, event)
            e = m.entries.get(frame_id)
            if e is not None:
                state = {
                    "taxon_id": e.taxon_id,
                    "review_state": e.review_state,
                    "quarantined": e.quarantined,
                }
                if not history or {k: history[-1][k] for k in state} != state:
                    history.append({"version": m.version, **state})
        return history

    # -- export -----------------------------------------------------------------

    def export_dataset(
        self,
        version: int | None,
        root: str | Path,
        content: ContentStore,
        registry: Registry | None = None,
    ) -> ExportSummary:
        manifest = self.manifest(version)
        root = Path(root)
        counts: dict[str, dict[str, int]] = {s: {} for s in SPLITS}
        checksum_lines = []
        total = 0
        try:
            root.mkdir(parents=True, exist_ok=True)
            for fid in sorted(manifest.entries):
                e = manifest.entries[fid]
                if e.quarantined or e.qc_verdict != "pass" or e.split == "unassigned":
                    continue
                data = content.get(e.frame_id)
                rel = Path(e.split) / e.taxon_id / f"{e.frame_id}.{_file_ext(data)}"
                target = root / rel
                target.parent.mkdir(parents=True, exist_ok=True)
                target.write_bytes(data)
                checksum_lines.append(f"{sha256_hex(data)}  {rel.as_posix()}")
                counts[e.split][e.taxon_id] = counts[e.split].get(e.taxon_id, 0) + 1
                total += 1
            (root / "manifest.json").write_bytes(manifest.canonical_bytes())
            (root / "checksums.txt").write_text("\n".join(checksum_lines) + "\n")
            exported_taxa = sorted({t for per in counts.values() for t in per})
            names = {}
            for t in exported_taxa:
                names[t] = registry[t].common_name if registry and t in registry else t
            (root / "classes.json").write_text(canonical_json(names))
        except OSError as err:
            if err.errno == errno.ENOSPC:
                raise StorageFull(f"export to {root} failed: no space") from err
            raise
        return ExportSummary(
            version=manifest.version,
            root=str(root),
            counts={s: dict(sorted(per.items())) for s, per in counts.items()},
            total_files=total,
        )
