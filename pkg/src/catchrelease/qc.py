"""Frame quality gating: sharpness, exposure, resolution, near-duplicates.

All metrics are deliberately simple and reproducible to the bit: grayscale is
a fixed Rec.601 weighting in float64, sharpness is the population variance of
a 4-neighbor Laplacian over the interior pixels, and the perceptual hash is
the sign pattern of the top-left 8x8 block of a 32x32 DCT. Thresholds are
configuration, not code.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import cv2
import numpy as np
import scipy.fft

from .errors import UndecodableImage
from .media import FrameRef

PHASH_GRID = 32
PHASH_BLOCK = 8


@dataclass(frozen=True)
class QcThresholds:
    min_px: int = 512
    luma_min: float = 20.0
    luma_max: float = 235.0
    blur_min: float = 25.0
    max_hamming: int = 8

    @classmethod
    def from_dict(cls, raw: dict) -> "QcThresholds":
        return cls(**{k: raw[k] for k in raw if k in cls.__dataclass_fields__})

    def to_dict(self) -> dict:
        return {
            "min_px": self.min_px,
            "luma_min": self.luma_min,
            "luma_max": self.luma_max,
            "blur_min": self.blur_min,
            "max_hamming": self.max_hamming,
        }


VERDICTS = ("pass", "reject_blur", "reject_exposure", "reject_resolution", "reject_duplicate")


@dataclass(frozen=True)
class QcReport:
    frame_id: str
    sharpness: float
    mean_luma: float
    resolution_ok: bool
    verdict: str
    duplicate_of: str | None = None

    def to_dict(self) -> dict:
        return {
            "frame_id": self.frame_id,
            "sharpness": self.sharpness,
            "mean_luma": self.mean_luma,
            "resolution_ok": self.resolution_ok,
            "verdict": self.verdict,
            "duplicate_of": self.duplicate_of,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "QcReport":
        return cls(
            frame_id=raw["frame_id"],
            sharpness=float(raw["sharpness"]),
            mean_luma=float(raw["mean_luma"]),
            resolution_ok=bool(raw["resolution_ok"]),
            verdict=raw["verdict"],
            duplicate_of=raw.get("duplicate_of"),
        )


def decode_image(data: bytes) -> np.ndarray:
    image = cv2.imdecode(np.frombuffer(data, np.uint8), cv2.IMREAD_COLOR)
    if image is None:
        raise UndecodableImage(f"{len(data)} bytes not decodable as an image")
    return image


def to_gray(image: np.ndarray) -> np.ndarray:
    """Rec.601 luma in float64 (BGR channel order)."""
    if image.ndim == 2:
        return image.astype(np.float64)
    b = image[:, :, 0].astype(np.float64)
    g = image[:, :, 1].astype(np.float64)
    r = image[:, :, 2].astype(np.float64)
    return 0.114 * b + 0.587 * g + 0.299 * r


def laplacian_variance(gray: np.ndarray) -> float:
    """Population variance of the 4-neighbor Laplacian over interior pixels."""
    if gray.shape[0] < 3 or gray.shape[1] < 3:
        return 0.0
    g = gray.astype(np.float64)
    resp = (
        g[:-2, 1:-1] + g[2:, 1:-1] + g[1:-1, :-2] + g[1:-1, 2:] - 4.0 * g[1:-1, 1:-1]
    )
    return float(resp.var())


def score_frame(frame_id: str, data: bytes, thresholds: QcThresholds = QcThresholds()) -> QcReport:
    """Verdict cascade: resolution, then exposure, then blur, then pass."""
    image = decode_image(data)
    gray = to_gray(image)
    sharpness = laplacian_variance(gray)
    mean_luma = float(gray.mean())
    h, w = gray.shape
    resolution_ok = min(w, h) >= thresholds.min_px
    if not resolution_ok:
        verdict = "reject_resolution"
    elif not thresholds.luma_min <= mean_luma <= thresholds.luma_max:
        verdict = "reject_exposure"
    elif sharpness < thresholds.blur_min:
        verdict = "reject_blur"
    else:
        verdict = "pass"
    return QcReport(
        frame_id=frame_id,
        sharpness=sharpness,
        mean_luma=mean_luma,
        resolution_ok=resolution_ok,
        verdict=verdict,
    )


def _block_mean_grid(gray: np.ndarray, n: int = PHASH_GRID) -> np.ndarray:
    """Downsample by averaging cells [floor(i*H/n), floor((i+1)*H/n)) per axis."""
    h, w = gray.shape
    rows = [(i * h) // n for i in range(n + 1)]
    cols = [(j * w) // n for j in range(n + 1)]
    grid = np.empty((n, n), dtype=np.float64)
    for i in range(n):
        r0, r1 = rows[i], max(rows[i + 1], rows[i] + 1)
        for j in range(n):
            c0, c1 = cols[j], max(cols[j + 1], cols[j] + 1)
            grid[i, j] = gray[r0:r1, c0:c1].mean()
    return grid


def phash64(gray: np.ndarray) -> int:
    """Sign bits of the top-left 8x8 DCT block of the 32x32 mean-pooled luma."""
    grid = _block_mean_grid(gray)
    spectrum = scipy.fft.dctn(grid, type=2, norm="ortho")
    bits = 0
    for i in range(PHASH_BLOCK):
        for j in range(PHASH_BLOCK):
            bits = (bits << 1) | (1 if spectrum[i, j] > 0 else 0)
    return bits


def hamming64(a: int, b: int) -> int:
    return bin(a ^ b).count("1")


def find_duplicates(
    frames: list[FrameRef],
    get_bytes,
    taxa: dict[str, str | None] | None = None,
    max_hamming: int = 8,
) -> list[tuple[str, str]]:
    """(frame_id, duplicate_of) pairs within (video, taxon) groups.

    Frames are visited in timestamp order per group; a frame within
    max_hamming of any already-kept frame duplicates the earliest such
    keeper. A negative max_hamming marks nothing.
    """
    taxa = taxa or {}
    groups: dict[tuple, list[FrameRef]] = {}
    for f in frames:
        groups.setdefault((f.video_id, taxa.get(f.frame_id)), []).append(f)
    out: list[tuple[str, str]] = []
    for group in groups.values():
        group.sort(key=lambda f: (f.timestamp_s, f.frame_id))
        kept: list[tuple[str, int]] = []
        for f in group:
            h = phash64(to_gray(decode_image(get_bytes(f.frame_id))))
            dup_of = next(
                (fid for fid, kh in kept if hamming64(h, kh) <= max_hamming), None
            )
            if dup_of is not None:
                out.append((f.frame_id, dup_of))
            else:
                kept.append((f.frame_id, h))
    return out


# -- balance reporting ---------------------------------------------------------


def gini_imbalance(counts: list[int]) -> float:
    """Mean absolute difference over twice the mean; 0 = perfectly balanced."""
    if not counts:
        return 0.0
    x = np.asarray(counts, dtype=np.float64)
    total = x.sum()
    if total == 0:
        return 0.0
    diffs = np.abs(x[:, None] - x[None, :]).sum()
    return float(diffs / (2 * len(x) ** 2 * x.mean()))


@dataclass(frozen=True)
class BalanceReport:
    class_counts: dict[str, int] = field(default_factory=dict)
    season_counts: dict[str, int] = field(default_factory=dict)
    gini_imbalance: float = 0.0

    @property
    def total(self) -> int:
        return sum(self.class_counts.values())

    def to_dict(self) -> dict:
        return {
            "class_counts": dict(sorted(self.class_counts.items())),
            "season_counts": dict(sorted(self.season_counts.items())),
            "gini_imbalance": self.gini_imbalance,
            "total": self.total,
        }

    def to_text(self) -> str:
        lines = [f"{'taxon':<24} count"]
        for taxon, count in sorted(self.class_counts.items()):
            lines.append(f"{taxon:<24} {count}")
        lines.append(f"{'TOTAL':<24} {self.total}")
        for season, count in sorted(self.season_counts.items()):
            lines.append(f"season {season:<17} {count}")
        lines.append(f"gini_imbalance          {self.gini_imbalance:.6f}")
        return "\n".join(lines)

    def to_csv(self) -> str:
        lines = ["taxon_id,count"]
        lines += [f"{t},{c}" for t, c in sorted(self.class_counts.items())]
        return "\n".join(lines) + "\n"


def balance_report_from(entries) -> BalanceReport:
    """Aggregate pass-verdict, non-quarantined entries by class and season."""
    class_counts: dict[str, int] = {}
    season_counts: dict[str, int] = {}
    for e in entries:
        if e.quarantined or e.qc_verdict != "pass":
            continue
        class_counts[e.taxon_id] = class_counts.get(e.taxon_id, 0) + 1
        season = e.provenance.get("season", "unknown")
        season_counts[season] = season_counts.get(season, 0) + 1
    return BalanceReport(
        class_counts=class_counts,
        season_counts=season_counts,
        gini_imbalance=gini_imbalance(list(class_counts.values())),
    )
