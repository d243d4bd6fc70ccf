"""Keypoint-detection scoring: similarity, matching, AP/AR/F1.

Detections are matched to ground truth greedily in score order at ten
similarity thresholds (0.50 to 0.95). Precision is averaged over 101
interpolated recall points per threshold; recall is taken at the
detection cap. The cap itself is a parameter, never hard-coded, since
annotation conventions differ (20 and 30 are both in common use).

Ground-truth persons without a single labeled keypoint cannot be
matched; they are excluded from matching entirely and never count as
false negatives.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .coco import Dataset, PersonAnnotation
from .errors import ParseError, SchemaError
from .geometry import Keypoint
from .skeleton import KEYPOINT_SIGMAS, NUM_KEYPOINTS

OKS_THRESHOLDS: tuple[float, ...] = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))

_RECALL_POINTS = np.linspace(0.0, 1.0, 101)

# kappa_i = 2 * sigma_i enters the similarity kernel squared.
_KAPPA_SQ = np.array([(2.0 * s) ** 2 for s in KEYPOINT_SIGMAS])


@dataclass
class Detection:
    """One detected skeleton with a confidence score."""

    keypoints: np.ndarray  # (17, 2) float64
    score: float


DetectionSet = dict[int, list[Detection]]


@dataclass
class EvalResult:
    ap: float
    ar: float
    f1: float
    per_threshold: list[tuple[float, float, float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "ap": self.ap,
            "ar": self.ar,
            "f1": self.f1,
            "per_threshold": [
                {"oks_threshold": t, "ap": a, "ar": r}
                for t, a, r in self.per_threshold
            ],
        }


def oks(det_keypoints: np.ndarray, gt: PersonAnnotation) -> float:
    """Object keypoint similarity between a detection and one GT person.

    Mean over the GT's labeled keypoints of
    exp(-d_i^2 / (2 * area * kappa_i^2)).
    """
    vis = np.array([k.v for k in gt.keypoints])
    labeled = vis > 0
    if not labeled.any():
        raise ValueError(f"ground truth {gt.id} has no labeled keypoints; unmatchable")
    gt_xy = np.array([(k.x, k.y) for k in gt.keypoints], dtype=np.float64)
    det = np.asarray(det_keypoints, dtype=np.float64).reshape(NUM_KEYPOINTS, -1)[:, :2]
    d_sq = ((det - gt_xy) ** 2).sum(axis=1)
    e = d_sq[labeled] / (2.0 * gt.area * _KAPPA_SQ[labeled])
    return float(np.mean(np.exp(-e)))


def f1(ap: float, ar: float) -> float:
    """Harmonic mean of AP and AR (percent in, percent out)."""
    if ap + ar == 0:
        return 0.0
    return 2.0 * ap * ar / (ap + ar)


def greedy_match(oks_matrix: np.ndarray, threshold: float) -> np.ndarray:
    """Match detections (rows, already score-ordered) to GTs at one threshold.

    Each detection takes the unmatched GT with the highest similarity,
    provided it reaches the threshold. Returns per-detection matched GT
    index or -1.
    """
    n_det, n_gt = oks_matrix.shape
    taken = np.zeros(n_gt, dtype=bool)
    matches = np.full(n_det, -1, dtype=np.int64)
    for di in range(n_det):
        best = -1
        best_oks = -1.0
        for gi in range(n_gt):
            if taken[gi]:
                continue
            v = oks_matrix[di, gi]
            if v >= threshold and v > best_oks:  # ties keep the first GT
                best = gi
                best_oks = v
        if best >= 0:
            taken[best] = True
            matches[di] = best
    return matches


def match_and_score(dets: DetectionSet, gts: Dataset,
                    max_detections: int = 20) -> EvalResult:
    """Score a detection set against ground truth.

    Per image, only the ``max_detections`` highest-scoring detections
    participate. AP averages 101-point interpolated precision over the
    OKS thresholds; AR averages the final recall at the cap.
    """
    matchable: dict[int, list[PersonAnnotation]] = {}
    for im in gts.images:
        matchable[im.id] = []
    for ann in gts.annotations:
        if ann.num_keypoints > 0:
            matchable[ann.image_id].append(ann)
    n_gt_total = sum(len(v) for v in matchable.values())

    all_scores: list[float] = []
    all_matched: list[np.ndarray] = []  # (n_thresholds, n_dets) per image
    for image_id in sorted(matchable):
        image_dets = dets.get(image_id, [])
        order = np.argsort([-d.score for d in image_dets], kind="stable")
        kept = [image_dets[i] for i in order[:max_detections]]
        gt_list = matchable[image_id]
        if not kept:
            continue
        m = np.zeros((len(kept), len(gt_list)), dtype=np.float64)
        for di, det in enumerate(kept):
            for gi, gt in enumerate(gt_list):
                m[di, gi] = oks(det.keypoints, gt)
        flags = np.zeros((len(OKS_THRESHOLDS), len(kept)), dtype=bool)
        for ti, t in enumerate(OKS_THRESHOLDS):
            flags[ti] = greedy_match(m, t) >= 0
        all_scores.extend(d.score for d in kept)
        all_matched.append(flags)

    if n_gt_total == 0 or not all_scores:
        zeros = [(t, 0.0, 0.0) for t in OKS_THRESHOLDS]
        return EvalResult(ap=0.0, ar=0.0, f1=0.0, per_threshold=zeros)

    scores = np.array(all_scores)
    matched = np.concatenate(all_matched, axis=1)
    order = np.argsort(-scores, kind="mergesort")
    matched = matched[:, order]

    per_threshold: list[tuple[float, float, float]] = []
    ap_values = []
    ar_values = []
    for ti, t in enumerate(OKS_THRESHOLDS):
        tp = np.cumsum(matched[ti].astype(np.float64))
        fp = np.cumsum((~matched[ti]).astype(np.float64))
        recall = tp / n_gt_total
        precision = tp / (tp + fp)
        # precision envelope: non-increasing from the right
        precision = np.maximum.accumulate(precision[::-1])[::-1]
        sampled = np.zeros(len(_RECALL_POINTS))
        idx = np.searchsorted(recall, _RECALL_POINTS, side="left")
        valid = idx < len(precision)
        sampled[valid] = precision[idx[valid]]
        ap_t = float(sampled.mean()) * 100.0
        ar_t = float(recall[-1]) * 100.0
        ap_values.append(ap_t)
        ar_values.append(ar_t)
        per_threshold.append((t, ap_t, ar_t))

    ap = sum(ap_values) / len(ap_values)
    ar = sum(ar_values) / len(ar_values)
    return EvalResult(ap=ap, ar=ar, f1=f1(ap, ar), per_threshold=per_threshold)


def load_detections(json_text: str | bytes) -> DetectionSet:
    """Parse a detection results file: a list of
    {image_id, keypoints (flat 51), score} objects."""
    try:
        raw = json.loads(json_text)
    except json.JSONDecodeError as e:
        raise ParseError(f"malformed JSON at byte {e.pos}: {e.msg}", offset=e.pos) from e
    if not isinstance(raw, list):
        raise SchemaError("detection file must be a JSON array")
    out: DetectionSet = {}
    for i, entry in enumerate(raw):
        for key in ("image_id", "keypoints", "score"):
            if key not in entry:
                raise SchemaError(f"detection #{i}: missing required field '{key}'")
        flat = entry["keypoints"]
        if (len(flat) != 3 * NUM_KEYPOINTS
                or not all(isinstance(v, (int, float)) for v in flat)):
            raise SchemaError(
                f"detection #{i}: keypoints must have {3 * NUM_KEYPOINTS} "
                f"numeric entries")
        kps = np.array(flat, dtype=np.float64).reshape(NUM_KEYPOINTS, 3)[:, :2]
        if not isinstance(entry["score"], (int, float)) or isinstance(
                entry["score"], bool) or not math.isfinite(entry["score"]):
            raise SchemaError(f"detection #{i}: score must be a finite number")
        out.setdefault(int(entry["image_id"]), []).append(
            Detection(keypoints=kps, score=float(entry["score"])))
    return out


def detections_from_dataset(d: Dataset, score: float = 1.0) -> DetectionSet:
    """Treat a dataset's labeled annotations as perfect detections."""
    out: DetectionSet = {}
    for ann in d.annotations:
        if ann.num_keypoints == 0:
            continue
        kps = np.array([(k.x, k.y) for k in ann.keypoints], dtype=np.float64)
        out.setdefault(ann.image_id, []).append(Detection(keypoints=kps, score=score))
    return out


def keypoints_to_detection(kps: list[Keypoint], score: float) -> Detection:
    return Detection(
        keypoints=np.array([(k.x, k.y) for k in kps], dtype=np.float64),
        score=score,
    )
