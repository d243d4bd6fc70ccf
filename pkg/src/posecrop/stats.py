"""Distribution statistics: crowdedness, occlusion, person scale, empties.

The three controlled axes of a generated dataset are summarized here,
both for finished annotation files and as running aggregates during
generation. Merging shards and a single pass over the concatenated
input produce exactly equal results: per-image occlusion values are
kept as lists and reduced with math.fsum, which is order-independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .coco import Dataset
from .errors import PosecropError
from .geometry import BBox, person_scale

# Scale samples are kept exactly up to this many persons; beyond, a
# deterministic hash-based subsample of SCALE_SAMPLE_K values is used.
SCALE_EXACT_CAP = 10_000_000
SCALE_SAMPLE_K = 1_000_000

_OCCLUSION_CHUNK = 1024


class ScaleSummary(NamedTuple):
    """Five-number summary of person scales (box-plot values)."""

    min: float
    q1: float
    median: float
    q3: float
    max: float


@dataclass(frozen=True)
class DatasetStats:
    persons_per_image_mean: float
    avg_iou: float
    scale_summary: ScaleSummary | None
    empty_fraction: float
    image_count: int
    person_count: int

    def to_dict(self) -> dict:
        return {
            "image_count": self.image_count,
            "person_count": self.person_count,
            "persons_per_image_mean": self.persons_per_image_mean,
            "avg_iou": self.avg_iou,
            "empty_fraction": self.empty_fraction,
            "scale_summary": (None if self.scale_summary is None
                              else dict(self.scale_summary._asdict())),
        }


def image_occlusion(boxes: Sequence[BBox]) -> float:
    """Mean pairwise IoU over the overlapping person pairs of one image.

    Returns 0.0 for fewer than two persons or when no pair overlaps.
    """
    n = len(boxes)
    if n < 2:
        return 0.0
    arr = np.array([(b.x, b.y, b.x2, b.y2, b.area) for b in boxes], dtype=np.float64)
    chunks = []
    for start in range(0, n - 1, _OCCLUSION_CHUNK):
        stop = min(start + _OCCLUSION_CHUNK, n - 1)
        rows = arr[start:stop]
        iw = (np.minimum(rows[:, None, 2], arr[None, :, 2])
              - np.maximum(rows[:, None, 0], arr[None, :, 0]))
        ih = (np.minimum(rows[:, None, 3], arr[None, :, 3])
              - np.maximum(rows[:, None, 1], arr[None, :, 1]))
        inter = np.clip(iw, 0.0, None) * np.clip(ih, 0.0, None)
        # keep strictly-upper-triangle pairs (i < j) in row-major order
        cols = np.arange(n)[None, :]
        keep = (cols > (start + np.arange(stop - start))[:, None]) & (inter > 0)
        if not keep.any():
            continue
        union = rows[:, None, 4] + arr[None, :, 4] - inter
        chunks.append(np.minimum(inter[keep] / union[keep], 1.0).ravel())
    if not chunks:
        return 0.0
    vals = np.concatenate(chunks)
    # fsum is exactly rounded, so the result is permutation-invariant
    return math.fsum(vals.tolist()) / vals.size


class StatsAccumulator:
    """Mergeable running aggregates over a stream of images.

    ``scale_breaks`` optionally carries the five-number scale target used
    by the sampler; it adds per-stratum counts and must match between
    accumulators being merged.
    """

    def __init__(self, scale_breaks: tuple[float, ...] | None = None):
        if scale_breaks is not None and len(scale_breaks) != 5:
            raise ValueError("scale_breaks must be a five-number summary")
        self.scale_breaks = tuple(scale_breaks) if scale_breaks else None
        self.image_count = 0
        self.person_count = 0
        self.empty_count = 0
        self.occlusion_values: list[float] = []
        # running plain sum for cheap projections; finalize uses fsum
        self.occlusion_sum = 0.0
        self.scales: list[float] = []
        self.scales_seen = 0
        self.stratum_counts = [0, 0, 0, 0]

    def add_image(self, person_count: int, occlusion: float, scales: Sequence[float]):
        if len(scales) != person_count:
            raise ValueError("one scale per person expected")
        self.image_count += 1
        self.person_count += person_count
        if person_count == 0:
            self.empty_count += 1
        if person_count >= 2:
            self.occlusion_values.append(occlusion)
            self.occlusion_sum += occlusion
        self.scales.extend(scales)
        self.scales_seen += len(scales)
        if self.scale_breaks:
            for s in scales:
                self.stratum_counts[stratum_of(s, self.scale_breaks)] += 1
        self._condense()

    def merge(self, other: "StatsAccumulator") -> "StatsAccumulator":
        """Combine two accumulators; both must share the same configuration."""
        if self.scale_breaks != other.scale_breaks:
            raise PosecropError("cannot merge accumulators with different scale policies")
        out = StatsAccumulator(self.scale_breaks)
        out.image_count = self.image_count + other.image_count
        out.person_count = self.person_count + other.person_count
        out.empty_count = self.empty_count + other.empty_count
        out.occlusion_values = self.occlusion_values + other.occlusion_values
        out.occlusion_sum = self.occlusion_sum + other.occlusion_sum
        out.scales = self.scales + other.scales
        out.scales_seen = self.scales_seen + other.scales_seen
        out.stratum_counts = [a + b for a, b in
                              zip(self.stratum_counts, other.stratum_counts)]
        out._condense()
        return out

    def _condense(self):
        # Beyond the exact cap, retain the SCALE_SAMPLE_K values with the
        # smallest value-derived hash. The retained set depends only on the
        # multiset of values, never on insertion or merge order, so shard
        # merges stay equivalent to a single pass.
        if self.scales_seen <= SCALE_EXACT_CAP or len(self.scales) <= SCALE_SAMPLE_K:
            return
        arr = np.asarray(self.scales, dtype=np.float64)
        keys = _splitmix64(arr.view(np.uint64))
        order = np.argsort(keys, kind="stable")[:SCALE_SAMPLE_K]
        self.scales = arr[np.sort(order)].tolist()

    def finalize(self) -> DatasetStats:
        if self.image_count == 0:
            raise PosecropError("no images")
        multi = len(self.occlusion_values)
        avg_iou = math.fsum(self.occlusion_values) / multi if multi else 0.0
        summary = None
        if self.scales:
            q = np.quantile(np.asarray(self.scales, dtype=np.float64),
                            [0.0, 0.25, 0.5, 0.75, 1.0])
            summary = ScaleSummary(*(float(v) for v in q))
        return DatasetStats(
            persons_per_image_mean=self.person_count / self.image_count,
            avg_iou=avg_iou,
            scale_summary=summary,
            empty_fraction=self.empty_count / self.image_count,
            image_count=self.image_count,
            person_count=self.person_count,
        )

    def snapshot(self) -> dict:
        """Loose dict form usable even before any image was added."""
        if self.image_count == 0:
            return {"image_count": 0, "person_count": 0}
        return self.finalize().to_dict()


def stratum_of(scale: float, breaks: tuple[float, ...]) -> int:
    """Index (0..3) of the inter-quartile stratum a scale value falls in."""
    if scale < breaks[1]:
        return 0
    if scale < breaks[2]:
        return 1
    if scale < breaks[3]:
        return 2
    return 3


def _splitmix64(x: np.ndarray) -> np.ndarray:
    z = x + np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def dataset_stats(d: Dataset) -> DatasetStats:
    """Distribution summary of a dataset, image by image."""
    acc = StatsAccumulator()
    grouped = d.by_image()
    for im in d.images:
        anns = grouped[im.id]
        boxes = [a.bbox for a in anns]
        scales = [person_scale(b, im.width, im.height) for b in boxes]
        acc.add_image(len(anns), image_occlusion(boxes), scales)
    return acc.finalize()


def format_stats_report(stats: DatasetStats, label: str = "dataset") -> str:
    """Human-readable report: counts plus an ASCII box plot of scales."""
    lines = [
        f"{label}: {stats.image_count} images, {stats.person_count} persons",
        f"  persons/image mean : {stats.persons_per_image_mean:.3f}",
        f"  average IoU        : {stats.avg_iou:.3f}",
        f"  empty fraction     : {stats.empty_fraction:.3f}",
    ]
    s = stats.scale_summary
    if s is None:
        lines.append("  person scale       : (no persons)")
        return "\n".join(lines)
    lines.append("  person scale         min      q1  median      q3     max")
    lines.append("                    " + "".join(f"{v:8.3f}" for v in s))
    width = 56
    pos = [max(0, min(width - 1, int(round(v * (width - 1))))) for v in s]
    row = [" "] * width
    for i in range(pos[0], pos[4] + 1):
        row[i] = "-"
    for i in range(pos[1], pos[3] + 1):
        row[i] = "="
    row[pos[0]] = "|"
    row[pos[4]] = "|"
    row[pos[1]] = "["
    row[pos[3]] = "]"
    row[pos[2]] = "#"
    lines.append("  0 " + "".join(row) + " 1")
    return "\n".join(lines)
