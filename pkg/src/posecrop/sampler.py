"""Semi-random crop sampling steered toward distribution targets.

Crops are proposed independently of the acceptance history: the RNG
stream for proposal geometry and for the exploration coin is derived
from (config seed, slot index, attempt index, lane), so any number of
workers can evaluate proposals speculatively while the accept decision
walks slots and attempts in a fixed serial order. Parallel and serial
runs therefore produce identical accepted sets.

Acceptance combines hard constraints (bounds, aspect, resolution
range, person count limits) with a soft deviation score over the
controlled statistics: persons/image mean, average occlusion IoU,
empty-image fraction, and the four inter-quartile masses of the person
scale target. A crop is accepted when it shrinks the score, when every
controlled statistic is already within tolerance, or with a small
exploration probability that prevents deadlock on conflicting targets.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .coco import SourceScene
from .config import GenerationConfig
from .errors import InfeasibleTargetsError, SceneTooSmallError
from .geometry import Rect, person_scale
from .grid_index import SceneIndex
from .stats import StatsAccumulator, image_occlusion, stratum_of
from .synthesize import include_person, remap_person

_LANE_PROPOSAL = 0
_LANE_ACCEPT = 1

_D_EPSILON = 1e-12


@dataclass
class CropStats:
    """Distribution-relevant measurements of one proposed crop."""

    person_count: int
    occlusion: float
    scales: list[float]
    is_empty: bool


@dataclass
class CropRecord:
    """An accepted crop: source window, output size, its statistics."""

    id: int
    scene_id: int
    source_rect: Rect
    output_size: tuple[int, int]
    stats: CropStats
    person_ids: tuple[int, ...]


def _stream(seed: int, slot: int, attempt: int, lane: int) -> np.random.Generator:
    """Portable per-(slot, attempt, lane) PCG64 stream."""
    return np.random.default_rng(np.random.SeedSequence([seed, slot, attempt, lane]))


def median_person_extent(scene: SourceScene) -> float:
    """Median sqrt(box area) over the scene's persons; 0 for empty scenes."""
    if not scene.persons:
        return 0.0
    return float(np.median([math.sqrt(p.bbox.area) for p in scene.persons]))


def _width_bounds(scene: SourceScene, cfg: GenerationConfig) -> tuple[int, int, int, int]:
    arw, arh = cfg.reduced_aspect()
    w_lo = -(-cfg.min_res[0] // arw) * arw  # snap up to the aspect grid
    w_hi = min(cfg.max_res[0], scene.width, scene.height * arw // arh) // arw * arw
    if w_hi < w_lo:
        raise SceneTooSmallError(
            f"scene {scene.id} ({scene.width}x{scene.height}) is smaller than "
            f"min_res {cfg.min_res[0]}x{cfg.min_res[1]}")
    return w_lo, w_hi, arw, arh


def propose_crop(scene: SourceScene, idx: SceneIndex, cfg: GenerationConfig,
                 rng: np.random.Generator, *, anchored_allowed: bool = True,
                 median_extent: float | None = None,
                 minimal: bool = False) -> Rect:
    """One crop window proposal; deterministic given the rng state.

    The width is log-uniform inside one of four strata mapped from the
    scale target through the scene's median person size (larger target
    scales need smaller crops). The position is anchored inside a
    uniformly chosen person's box with probability ``anchor_prob``,
    otherwise uniform over all valid placements. ``minimal`` forces the
    smallest allowed window, the best shot at person-free regions on
    dense scenes.
    """
    w_lo, w_hi, arw, arh = _width_bounds(scene, cfg)
    if median_extent is None:
        median_extent = median_person_extent(scene)

    lo, hi = float(w_lo), float(w_hi)
    if minimal:
        lo = hi = float(w_lo)
    elif cfg.scale_target is not None and median_extent > 0:
        stratum = min(int(rng.random() * 4), 3)
        s_lo = cfg.scale_target[stratum]
        s_hi = cfg.scale_target[stratum + 1]
        c = math.sqrt(arh / arw)  # sqrt(crop area) = c * width
        k_lo = max(float(w_lo), median_extent / (c * s_hi))
        k_hi = min(float(w_hi), median_extent / (c * s_lo))
        if k_lo <= k_hi:
            lo, hi = k_lo, k_hi
        elif k_lo > float(w_hi):
            # stratum wants crops larger than allowed; take the largest
            lo = hi = float(w_hi)
        else:
            # stratum wants crops smaller than allowed; take the smallest
            lo = hi = float(w_lo)

    w_cont = math.exp(rng.uniform(math.log(lo), math.log(hi))) if hi > lo else lo
    w = int(round(w_cont / arw)) * arw
    w = max(w_lo, min(w_hi, w))
    h = w * arh // arw

    max_x = scene.width - w
    max_y = scene.height - h
    anchored = (anchored_allowed and scene.persons
                and rng.random() < cfg.anchor_prob)
    if anchored:
        p = scene.persons[int(rng.integers(len(scene.persons)))]
        cx = rng.uniform(p.bbox.x, p.bbox.x2)
        cy = rng.uniform(p.bbox.y, p.bbox.y2)
        x = min(max(int(round(cx - w / 2.0)), 0), max_x)
        y = min(max(int(round(cy - h / 2.0)), 0), max_y)
    else:
        x = int(rng.integers(0, max_x + 1))
        y = int(rng.integers(0, max_y + 1))
    return Rect(float(x), float(y), float(w), float(h))


def _output_size(rect: Rect, cfg: GenerationConfig) -> tuple[int, int]:
    native = (int(rect.w), int(rect.h))
    if cfg.downscale_to is not None and cfg.downscale_to[0] < native[0]:
        return cfg.downscale_to
    return native


def _evaluate(rect: Rect, scene: SourceScene, idx: SceneIndex,
              cfg: GenerationConfig) -> tuple[CropStats, list[int], int]:
    out = _output_size(rect, cfg)
    candidates = sorted(idx.query(rect))
    included: list[int] = []
    boxes = []
    scales: list[float] = []
    for pid in candidates:
        p = scene.persons_by_id[pid]
        if not include_person(p, rect):
            continue
        ann = remap_person(p, rect, out)
        included.append(pid)
        boxes.append(ann.bbox)
        scales.append(person_scale(ann.bbox, out[0], out[1]))
    stats = CropStats(
        person_count=len(included),
        occlusion=image_occlusion(boxes),
        scales=scales,
        is_empty=not included,
    )
    return stats, included, len(candidates)


def evaluate_crop(rect: Rect, scene: SourceScene, idx: SceneIndex,
                  cfg: GenerationConfig) -> CropStats:
    """Measure one crop window: included persons, occlusion, scales."""
    stats, _, _ = _evaluate(rect, scene, idx, cfg)
    return stats


def _controlled_stats(acc: StatsAccumulator, cfg: GenerationConfig,
                      crop: CropStats | None) -> list[tuple[str, float, float, float, float]]:
    """(key, value, target, tolerance, weight) for every defined statistic."""
    images = acc.image_count + (1 if crop is not None else 0)
    if images == 0:
        return []
    persons = acc.person_count
    empty = acc.empty_count
    occ_sum = acc.occlusion_sum
    occ_n = len(acc.occlusion_values)
    strata = list(acc.stratum_counts)
    n_scales = len(acc.scales)
    if crop is not None:
        persons += crop.person_count
        empty += 1 if crop.is_empty else 0
        if crop.person_count >= 2:
            occ_sum += crop.occlusion
            occ_n += 1
        if cfg.scale_target is not None:
            for s in crop.scales:
                strata[stratum_of(s, cfg.scale_target)] += 1
            n_scales += len(crop.scales)

    out = [
        ("persons_mean", persons / images, cfg.persons_mean_target,
         cfg.tolerance("persons_mean"), cfg.weight("persons_mean")),
        ("empty_fraction", empty / images, cfg.empty_fraction_target,
         cfg.tolerance("empty_fraction"), cfg.weight("empty_fraction")),
    ]
    if occ_n > 0:
        out.append(("avg_iou", occ_sum / occ_n, cfg.target_avg_iou,
                    cfg.tolerance("avg_iou"), cfg.weight("avg_iou")))
    if cfg.scale_target is not None and n_scales > 0:
        tol = cfg.tolerance("scale_mass")
        w = cfg.weight("scale_mass")
        for k in range(4):
            out.append((f"scale_mass_{k}", strata[k] / n_scales, 0.25, tol, w))
    return out


def deviation_score(acc: StatsAccumulator, cfg: GenerationConfig,
                    crop: CropStats | None = None) -> tuple[float, bool]:
    """Weighted tolerance-normalized distance from the targets.

    Returns (score, all_within_tolerance); statistics that are not yet
    defined (no images, no multi-person image, no scales) contribute
    nothing and count as within tolerance.
    """
    entries = _controlled_stats(acc, cfg, crop)
    score = 0.0
    within = True
    for _, value, target, tol, weight in entries:
        dev = abs(value - target)
        score += weight * dev / tol
        if dev > tol:
            within = False
    return score, within


def accept(stats: CropStats, running: StatsAccumulator, cfg: GenerationConfig,
           rng: np.random.Generator) -> bool:
    """Decide whether a proposed crop joins the dataset.

    Hard person-count limits reject unconditionally; otherwise the crop
    is accepted when it strictly decreases the deviation score, when
    all controlled statistics are already within tolerance, or with
    probability ``explore_prob``.
    """
    if stats.person_count > cfg.persons_max or stats.person_count < cfg.persons_min:
        return False
    current, within = deviation_score(running, cfg, None)
    if within:
        return True
    projected, _ = deviation_score(running, cfg, stats)
    if projected < current - _D_EPSILON:
        return True
    return cfg.explore_prob > 0 and rng.random() < cfg.explore_prob


def _area_weighted_schedule(scenes: list[SourceScene], n: int) -> list[int]:
    """Smooth weighted round-robin over scenes, weight = scene area."""
    total = float(sum(s.width * s.height for s in scenes))
    weights = [s.width * s.height / total for s in scenes]
    credits = [0.0] * len(scenes)
    schedule = []
    for _ in range(n):
        for i, w in enumerate(weights):
            credits[i] += w
        pick = max(range(len(scenes)), key=lambda i: (credits[i], -i))
        credits[pick] -= 1.0
        schedule.append(pick)
    return schedule


def _empty_slot_indices(n: int, empty_fraction: float) -> set[int]:
    quota = min(n, math.ceil(empty_fraction * n)) if empty_fraction > 0 else 0
    if quota == 0:
        return set()
    return {(j * n) // quota for j in range(quota)}


def sample_dataset(scenes: list[SourceScene], cfg: GenerationConfig,
                   *, workers: int = 1,
                   on_progress=None) -> list[CropRecord]:
    """Draw exactly ``cfg.dataset_size`` accepted crops from the scenes.

    Scenes are visited round-robin weighted by area. A quota of
    ``ceil(empty_fraction_target * dataset_size)`` evenly spread slots
    is filled with person-free crops (proposals rejected against the
    spatial index until the window intersects no person at all); every
    other slot must contain at least one person.

    Deterministic given (scenes, cfg); the worker count changes only
    how proposals are evaluated, never which crops are accepted.
    Raises InfeasibleTargetsError when a slot exhausts the proposal
    budget.
    """
    if not scenes:
        raise ValueError("at least one scene is required")
    n = cfg.dataset_size
    indexes = {s.id: SceneIndex.build(s) for s in scenes}
    extents = {s.id: median_person_extent(s) for s in scenes}
    for s in scenes:
        _width_bounds(s, cfg)  # fail fast on scenes below min_res

    schedule = _area_weighted_schedule(scenes, n)
    empty_slots = _empty_slot_indices(n, cfg.empty_fraction_target)
    acc = StatsAccumulator(cfg.scale_target)
    records: list[CropRecord] = []

    def propose_and_evaluate(slot: int, attempt: int):
        scene = scenes[schedule[slot]]
        idx = indexes[scene.id]
        rng = _stream(cfg.seed, slot, attempt, _LANE_PROPOSAL)
        is_empty_slot = slot in empty_slots
        rect = propose_crop(
            scene, idx, cfg, rng,
            anchored_allowed=not is_empty_slot,
            median_extent=extents[scene.id],
            # person-free windows get scarce on dense scenes; spend the
            # second half of the budget on the smallest allowed window
            minimal=is_empty_slot and attempt >= cfg.proposal_budget // 2,
        )
        stats, included, candidates = _evaluate(rect, scene, idx, cfg)
        return rect, stats, included, candidates

    def decide(slot: int, attempt: int, stats: CropStats, candidates: int) -> bool:
        if slot in empty_slots:
            return candidates == 0
        if stats.person_count < max(cfg.persons_min, 1):
            return False
        coin = _stream(cfg.seed, slot, attempt, _LANE_ACCEPT)
        return accept(stats, acc, cfg, coin)

    def commit(slot: int, rect, stats, included):
        scene = scenes[schedule[slot]]
        records.append(CropRecord(
            id=slot + 1,
            scene_id=scene.id,
            source_rect=rect,
            output_size=_output_size(rect, cfg),
            stats=stats,
            person_ids=tuple(included),
        ))
        acc.add_image(stats.person_count, stats.occlusion, stats.scales)
        if on_progress is not None:
            on_progress(slot + 1, n)

    def exhaust(slot: int):
        kind = "person-free quota slot" if slot in empty_slots else "slot"
        raise InfeasibleTargetsError(
            f"{kind} {slot} exhausted the proposal budget of "
            f"{cfg.proposal_budget}; targets appear infeasible for these scenes",
            snapshot=acc.snapshot(),
        )

    if workers <= 1:
        for slot in range(n):
            for attempt in range(cfg.proposal_budget):
                rect, stats, included, candidates = propose_and_evaluate(slot, attempt)
                if decide(slot, attempt, stats, candidates):
                    commit(slot, rect, stats, included)
                    break
            else:
                exhaust(slot)
        return records

    chunk = max(4, workers * 2)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for slot in range(n):
            accepted = False
            attempt = 0
            while not accepted and attempt < cfg.proposal_budget:
                hi = min(attempt + chunk, cfg.proposal_budget)
                futures = [pool.submit(propose_and_evaluate, slot, a)
                           for a in range(attempt, hi)]
                for a, fut in zip(range(attempt, hi), futures):
                    rect, stats, included, candidates = fut.result()
                    if not accepted and decide(slot, a, stats, candidates):
                        commit(slot, rect, stats, included)
                        accepted = True
                attempt = hi
            if not accepted:
                exhaust(slot)
    return records
