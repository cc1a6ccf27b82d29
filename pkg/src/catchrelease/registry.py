"""Canonical vocabulary of plant categories and spoken-name resolution.

The registry is loaded once from a human-editable YAML seed file and is
immutable afterwards; reloading produces a new ``Registry`` value. Spoken
names (transcripts, narration fragments) are resolved against every alias of
every taxon with a normalized Levenshtein ratio.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import InvariantError, ParseError

SEASONS = ("wet", "dry")

DEFAULT_MIN_RATIO = 0.8


@dataclass(frozen=True)
class UseRecord:
    plant_part: str
    stage: str
    use_description: str

    def validate(self, taxon_id: str) -> None:
        for name in ("plant_part", "stage", "use_description"):
            if not getattr(self, name).strip():
                raise InvariantError(f"{taxon_id}: use record field {name} is empty")


@dataclass(frozen=True)
class TaxonRecord:
    taxon_id: str
    common_name: str
    scientific_name: str
    aliases: tuple[str, ...]
    uses: tuple[UseRecord, ...] = ()
    seasons_observed: tuple[str, ...] = ()
    growth_stages: tuple[str, ...] = ()

    def validate(self) -> None:
        if not self.taxon_id.strip():
            raise InvariantError("empty taxon_id")
        tokens = self.scientific_name.split()
        if len(tokens) != 2 or not tokens[0][:1].isupper():
            raise InvariantError(
                f'{self.taxon_id}: scientific_name "{self.scientific_name}" '
                "is not a Genus species binomial"
            )
        if not self.aliases:
            raise InvariantError(f"{self.taxon_id}: aliases must not be empty")
        if normalize_text(self.common_name) not in {normalize_text(a) for a in self.aliases}:
            raise InvariantError(f"{self.taxon_id}: aliases must contain the common name")
        if not self.seasons_observed:
            raise InvariantError(f"{self.taxon_id}: seasons_observed must not be empty")
        for season in self.seasons_observed:
            if season not in SEASONS:
                raise InvariantError(f'{self.taxon_id}: unknown season "{season}"')
        for use in self.uses:
            use.validate(self.taxon_id)


class Registry:
    """Immutable mapping of taxon_id -> TaxonRecord, in seed-file order."""

    def __init__(self, records: list[TaxonRecord]):
        taxa: dict[str, TaxonRecord] = {}
        for rec in records:
            rec.validate()
            if rec.taxon_id in taxa:
                raise InvariantError(f"duplicate taxon_id: {rec.taxon_id}")
            taxa[rec.taxon_id] = rec
        self._taxa = taxa

    @property
    def taxa(self) -> dict[str, TaxonRecord]:
        return dict(self._taxa)

    def __len__(self) -> int:
        return len(self._taxa)

    def __contains__(self, taxon_id: str) -> bool:
        return taxon_id in self._taxa

    def __getitem__(self, taxon_id: str) -> TaxonRecord:
        return self._taxa[taxon_id]

    def __iter__(self):
        return iter(self._taxa.values())

    def __eq__(self, other) -> bool:
        return isinstance(other, Registry) and self._taxa == other._taxa


def _record_from_mapping(raw: dict) -> TaxonRecord:
    try:
        uses = tuple(
            UseRecord(
                plant_part=str(u["plant_part"]),
                stage=str(u["stage"]),
                use_description=str(u["use_description"]),
            )
            for u in raw.get("uses", [])
        )
        aliases = [str(a) for a in raw.get("aliases", [])]
        common_name = str(raw["common_name"])
        if normalize_text(common_name) not in {normalize_text(a) for a in aliases}:
            aliases.append(normalize_text(common_name))
        return TaxonRecord(
            taxon_id=str(raw["taxon_id"]),
            common_name=common_name,
            scientific_name=str(raw["scientific_name"]),
            aliases=tuple(aliases),
            uses=uses,
            seasons_observed=tuple(str(s) for s in raw.get("seasons_observed", [])),
            growth_stages=tuple(str(s) for s in raw.get("growth_stages", [])),
        )
    except KeyError as e:
        raise ParseError(f"registry record missing field {e}: {raw!r}") from e


def load_registry(source: str | Path | io.TextIOBase) -> Registry:
    """Parse a registry seed file and validate every invariant."""
    if isinstance(source, (str, Path)):
        text = Path(source).read_text("utf-8")
    else:
        text = source.read()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ParseError(f"malformed registry file: {e}") from e
    if raw is None:
        raise ParseError("empty registry file")
    if not isinstance(raw, list):
        raise ParseError("registry file must be a list of taxon records")
    records = []
    for item in raw:
        if not isinstance(item, dict):
            raise ParseError(f"registry record is not a mapping: {item!r}")
        records.append(_record_from_mapping(item))
    return Registry(records)


def serialize_registry(registry: Registry) -> str:
    """Render a registry back to seed-file YAML; round-trips through load."""
    out = []
    for rec in registry:
        out.append(
            {
                "taxon_id": rec.taxon_id,
                "common_name": rec.common_name,
                "scientific_name": rec.scientific_name,
                "aliases": list(rec.aliases),
                "uses": [
                    {
                        "plant_part": u.plant_part,
                        "stage": u.stage,
                        "use_description": u.use_description,
                    }
                    for u in rec.uses
                ],
                "seasons_observed": list(rec.seasons_observed),
                "growth_stages": list(rec.growth_stages),
            }
        )
    return yaml.safe_dump(out, sort_keys=False, allow_unicode=True)


def builtin_seed_path() -> Path:
    """Path of the committed bali-26 seed file shipped with the package."""
    return Path(__file__).parent / "data" / "taxa-bali26.seed"


# -- spoken-name matching -----------------------------------------------------


def normalize_text(text: str) -> str:
    """Case-fold and collapse whitespace; the comparison domain for matching."""
    return " ".join(text.casefold().split())


def levenshtein(a: str, b: str) -> int:
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def similarity_ratio(a: str, b: str) -> float:
    """1 - editdistance/max(len); both inputs already normalized."""
    if not a and not b:
        return 1.0
    longest = max(len(a), len(b))
    return 1.0 - levenshtein(a, b) / longest


@dataclass(frozen=True)
class MatchResult:
    kind: str  # "matched" | "ambiguous" | "no_match"
    taxon_id: str | None = None
    ratio: float = 0.0
    candidates: tuple[str, ...] = ()

    @classmethod
    def matched(cls, taxon_id: str, ratio: float) -> "MatchResult":
        return cls(kind="matched", taxon_id=taxon_id, ratio=ratio, candidates=(taxon_id,))

    @classmethod
    def ambiguous(cls, candidates: list[str], ratio: float) -> "MatchResult":
        return cls(kind="ambiguous", ratio=ratio, candidates=tuple(sorted(candidates)))

    @classmethod
    def no_match(cls) -> "MatchResult":
        return cls(kind="no_match")

    @property
    def is_matched(self) -> bool:
        return self.kind == "matched"

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "taxon_id": self.taxon_id,
            "ratio": self.ratio,
            "candidates": list(self.candidates),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "MatchResult":
        return cls(
            kind=raw["kind"],
            taxon_id=raw.get("taxon_id"),
            ratio=float(raw.get("ratio", 0.0)),
            candidates=tuple(raw.get("candidates", ())),
        )


def match_label(spoken: str, registry: Registry, min_ratio: float = DEFAULT_MIN_RATIO) -> MatchResult:
    """Resolve free-text spoken words to a taxon.

    Deterministic: the best alias ratio is computed per taxon; a unique leader
    at or above ``min_ratio`` wins, equal leaders surface as ambiguous so a
    reviewer decides, anything below the floor is no-match.
    """
    norm = normalize_text(spoken)
    best_per_taxon: dict[str, float] = {}
    for rec in registry:
        best = max(similarity_ratio(norm, normalize_text(alias)) for alias in rec.aliases)
        best_per_taxon[rec.taxon_id] = best
    if not best_per_taxon:
        return MatchResult.no_match()
    top = max(best_per_taxon.values())
    if top < min_ratio:
        return MatchResult.no_match()
    leaders = [tid for tid, r in best_per_taxon.items() if r == top]
    if len(leaders) == 1:
        return MatchResult.matched(leaders[0], top)
    return MatchResult.ambiguous(leaders, top)
