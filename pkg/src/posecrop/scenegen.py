"""Deterministic synthetic ultra-high-resolution scenes.

Stands in for real gigapixel surveillance footage at desk scale:
persons are placed by a mixture of Gaussian clusters and a uniform
background process, and the raster is a pure function of absolute
pixel coordinates so crop extraction is testable pixel-exactly.

Persons inside one cluster share a base size (people at the same
distance from the camera appear the same size), which is what makes
crowded crops with substantial box overlap actually occur.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .coco import Dataset, ImageInfo, PersonAnnotation, SourceScene
from .geometry import BBox, Keypoint, Rect

# Relative (x, y) layout of the 17 keypoints inside a person box.
_POSE_LAYOUT = (
    (0.50, 0.10), (0.56, 0.07), (0.44, 0.07), (0.62, 0.09), (0.38, 0.09),
    (0.68, 0.22), (0.32, 0.22), (0.74, 0.38), (0.26, 0.38), (0.78, 0.52),
    (0.22, 0.52), (0.62, 0.55), (0.38, 0.55), (0.60, 0.74), (0.40, 0.74),
    (0.60, 0.93), (0.40, 0.93),
)

# Size spread of members within one cluster; the cluster-level spread is
# chosen so the overall person-size distribution keeps person_sigma.
MEMBER_SIZE_SIGMA = 0.15


@dataclass
class SceneGenParams:
    width: int = 10_000
    height: int = 7_000
    n_persons: int = 500
    cluster_count: int = 40
    cluster_spread: float = 0.2
    cluster_fraction: float = 0.6
    person_height_frac: float = 0.02
    person_sigma: float = 0.5
    bbox_aspect: float = 0.8
    aspect_jitter: float = 0.12
    pose_jitter: float = 0.04
    visible_prob: float = 0.85
    seed: int = 0


def generate_scene(params: SceneGenParams) -> SourceScene:
    """Build one scene; fully determined by ``params`` (including seed)."""
    rng = np.random.default_rng(np.random.SeedSequence(params.seed))
    w_scene, h_scene = params.width, params.height
    median_h = params.person_height_frac * h_scene
    cluster_sigma = math.sqrt(max(params.person_sigma ** 2 - MEMBER_SIZE_SIGMA ** 2, 0.0))

    n_clustered = round(params.n_persons * params.cluster_fraction)
    n_uniform = params.n_persons - n_clustered

    centers_x = rng.uniform(0.03 * w_scene, 0.97 * w_scene, params.cluster_count)
    centers_y = rng.uniform(0.03 * h_scene, 0.97 * h_scene, params.cluster_count)
    base_h = median_h * np.exp(rng.normal(0.0, cluster_sigma, params.cluster_count))

    persons = []
    for i in range(params.n_persons):
        if i < n_clustered and params.cluster_count > 0:
            c = int(rng.integers(params.cluster_count))
            h = float(base_h[c] * math.exp(rng.normal(0.0, MEMBER_SIZE_SIGMA)))
            cw = base_h[c] * params.bbox_aspect
            cx = float(centers_x[c] + rng.normal(0.0, params.cluster_spread * cw))
            cy = float(centers_y[c] + rng.normal(0.0, params.cluster_spread * base_h[c]))
        else:
            h = float(median_h * math.exp(rng.normal(0.0, params.person_sigma)))
            cx = float(rng.uniform(0.0, w_scene))
            cy = float(rng.uniform(0.0, h_scene))
        aspect = float(np.clip(rng.normal(params.bbox_aspect, params.aspect_jitter),
                               0.35, 1.05))
        w = h * aspect
        w = min(w, w_scene - 2.0)
        h = min(h, h_scene - 2.0)
        x = float(np.clip(cx - w / 2.0, 0.0, w_scene - w))
        y = float(np.clip(cy - h / 2.0, 0.0, h_scene - h))
        box = BBox(x, y, w, h)
        persons.append(PersonAnnotation.build(
            id=i + 1,
            image_id=params.seed,
            bbox=box,
            keypoints=_synth_pose(box, params, rng),
        ))

    return SourceScene(
        id=params.seed,
        width=w_scene,
        height=h_scene,
        uri=f"scene_{params.seed}.png",
        persons=tuple(persons),
    )


def _synth_pose(box: BBox, params: SceneGenParams, rng: np.random.Generator) -> list[Keypoint]:
    kps = []
    for rx, ry in _POSE_LAYOUT:
        kx = box.x + rx * box.w + rng.normal(0.0, params.pose_jitter * box.w)
        ky = box.y + ry * box.h + rng.normal(0.0, params.pose_jitter * box.h)
        v = 2 if rng.random() < params.visible_prob else 1
        kps.append(Keypoint(
            float(np.clip(kx, box.x, box.x2)),
            float(np.clip(ky, box.y, box.y2)),
            v,
        ))
    return kps


def procedural_raster(scene: SourceScene, rect: Rect) -> np.ndarray:
    """RGB block for a crop window; a pure function of pixel coordinates.

    Every pixel value is a hash of (scene id, absolute x, absolute y),
    so overlapping or adjacent reads agree exactly on shared pixels.
    """
    x0, y0 = int(round(rect.x)), int(round(rect.y))
    w, h = int(round(rect.w)), int(round(rect.h))
    xs = np.arange(x0, x0 + w, dtype=np.uint64)[None, :]
    ys = np.arange(y0, y0 + h, dtype=np.uint64)[:, None]
    salt = (scene.id * 0xD6E8FEB86659FD93) & 0xFFFFFFFFFFFFFFFF
    mixed = (xs * np.uint64(0x9E3779B97F4A7C15)
             ^ ys * np.uint64(0xC2B2AE3D27D4EB4F)
             ^ np.uint64(salt))
    z = mixed + np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z = z ^ (z >> np.uint64(31))
    block = np.empty((h, w, 3), dtype=np.uint8)
    block[:, :, 0] = (z & np.uint64(0xFF)).astype(np.uint8)
    block[:, :, 1] = ((z >> np.uint64(8)) & np.uint64(0xFF)).astype(np.uint8)
    block[:, :, 2] = ((z >> np.uint64(16)) & np.uint64(0xFF)).astype(np.uint8)
    return block


def scenes_to_dataset(scenes: list[SourceScene],
                      file_names: dict[int, str] | None = None) -> Dataset:
    """Bundle scenes into one annotation file (ids re-assigned globally)."""
    names = file_names or {}
    images = [ImageInfo(id=s.id, width=s.width, height=s.height,
                        file_name=names.get(s.id, s.uri))
              for s in scenes]
    annotations = []
    next_id = 1
    for s in scenes:
        for p in s.persons:
            annotations.append(PersonAnnotation(
                id=next_id,
                image_id=s.id,
                bbox=p.bbox,
                keypoints=p.keypoints,
                num_keypoints=p.num_keypoints,
                area=p.area,
            ))
            next_id += 1
    return Dataset(images=images, annotations=annotations)
