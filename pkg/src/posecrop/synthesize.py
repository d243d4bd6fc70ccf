"""Turns accepted crops into a finished dataset.

Annotation remapping with boundary handling, stratified split
assignment, optional raster extraction, and COCO emission with a run
manifest. Persons that stay in a crop without any in-crop keypoint are
kept as null-keypoint annotations, matching the convention that
detectors are not penalized for finding unlabeled people.
"""

from __future__ import annotations

import json
import math
import os
from typing import TYPE_CHECKING

import numpy as np

from .coco import (Dataset, ImageInfo, PersonAnnotation, SourceScene,
                   serialize_dataset)
from .config import GenerationConfig
from .geometry import Keypoint, Rect, clip_box, to_crop_coords, transform_box
from .raster import NullRasterSource, RasterSource, downscale_bilinear, quantize_block
from .stats import dataset_stats

if TYPE_CHECKING:
    from .sampler import CropRecord

INCLUDE_MIN_BOX_FRACTION = 0.3

# Bucket widths for stratified split assignment.
_BUCKET_PERSONS = 3
_BUCKET_SCALE = 0.1
_BUCKET_OCCLUSION = 0.1


def include_person(p: PersonAnnotation, crop: Rect,
                   min_fraction: float = INCLUDE_MIN_BOX_FRACTION) -> bool:
    """Keep a person in a crop?

    Included when at least one labeled keypoint lies inside the crop,
    or when at least ``min_fraction`` of the box area does. Heavily
    truncated slivers are dropped either way.
    """
    clipped, fraction = clip_box(p.bbox, crop)
    if clipped is None:
        return False
    if fraction >= min_fraction:
        return True
    return any(k.v > 0 and crop.contains_point(k.x, k.y) for k in p.keypoints)


def remap_person(p: PersonAnnotation, crop: Rect,
                 out_size: tuple[int, int]) -> PersonAnnotation:
    """Express an included person in the crop's output pixel space.

    The box is clipped to the crop; keypoints landing outside the
    output raster are unlabeled (v=0, zero coordinates) and
    num_keypoints is recomputed.
    """
    out_w, out_h = out_size
    clipped, _ = clip_box(p.bbox, crop)
    if clipped is None:
        raise ValueError(f"person {p.id} does not intersect the crop")
    box = transform_box(clipped, crop, out_w, out_h)
    kps: list[Keypoint] = []
    for k in p.keypoints:
        if k.v == 0:
            kps.append(Keypoint(0.0, 0.0, 0))
            continue
        q = to_crop_coords(k, crop, out_w, out_h)
        if 0.0 <= q.x <= out_w and 0.0 <= q.y <= out_h:
            kps.append(q)
        else:
            kps.append(Keypoint(0.0, 0.0, 0))
    return PersonAnnotation.build(
        id=p.id, image_id=p.image_id, bbox=box, keypoints=kps)


def split_bucket_key(record: "CropRecord") -> tuple[int, int, int]:
    """Distribution bucket a crop belongs to for split stratification."""
    scales = record.stats.scales
    scale_median = float(np.median(scales)) if scales else 0.0
    return (
        record.stats.person_count // _BUCKET_PERSONS,
        int(scale_median / _BUCKET_SCALE),
        int(record.stats.occlusion / _BUCKET_OCCLUSION),
    )


def assign_splits(crops: list["CropRecord"], cfg: GenerationConfig) -> dict[int, str]:
    """Deterministic stratified split assignment.

    Every bucket's split counts stay within one crop of the configured
    fractions (largest-remainder quotas). Rounding errors are carried
    from bucket to bucket, so the overall split matches the fractions
    within one crop as well instead of drifting with the bucket count.
    Within a bucket, crops are ordered by id and dealt round-robin.
    """
    names = list(cfg.split_fractions)
    weights = [cfg.split_fractions[n] for n in names]
    # ties go to the larger fraction, then to declaration order
    order = sorted(range(len(names)), key=lambda i: (-weights[i], i))

    buckets: dict[tuple[int, int, int], list[int]] = {}
    for rec in crops:
        buckets.setdefault(split_bucket_key(rec), []).append(rec.id)

    assignment: dict[int, str] = {}
    carried = [0.0] * len(names)  # global over-assignment per split
    for key in sorted(buckets):
        ids = sorted(buckets[key])
        n = len(ids)
        ideal = [w * n for w in weights]
        quota = [math.floor(v) for v in ideal]
        extras = n - sum(quota)
        by_deficit = sorted(order,
                            key=lambda i: (-(ideal[i] - quota[i] - carried[i]),
                                           order.index(i)))
        for i in by_deficit[:extras]:
            quota[i] += 1
        for i in range(len(names)):
            carried[i] += quota[i] - ideal[i]

        credits = [0.0] * len(names)
        remaining = list(quota)
        for crop_id in ids:
            for i in range(len(names)):
                credits[i] += weights[i]
            pick = max((i for i in order if remaining[i] > 0),
                       key=lambda i: credits[i])
            credits[pick] -= 1.0
            remaining[pick] -= 1
            assignment[crop_id] = names[pick]
    return assignment


def extract_raster(record: "CropRecord", scene: SourceScene,
                   src: RasterSource) -> np.ndarray | None:
    """Pixels for one crop: native read, bilinear downscale if requested."""
    block = src.read_region(scene, record.source_rect)
    if block is None:
        return None
    out_w, out_h = record.output_size
    if (out_w, out_h) == (int(record.source_rect.w), int(record.source_rect.h)):
        return block
    return downscale_bilinear(block, out_w, out_h)


def emit_dataset(crops: list["CropRecord"], splits: dict[int, str],
                 scenes: dict[int, SourceScene], src: RasterSource,
                 out_dir: str, cfg: GenerationConfig,
                 tool_version: str = "0") -> dict:
    """Write per-split annotation files, crop images, and the manifest.

    Layout: ``{out_dir}/{split}/{crop_id}.png`` for images,
    ``{out_dir}/annotations/{split}.json`` for annotations, and
    ``{out_dir}/manifest.json`` echoing the resolved config, the seed,
    and the measured per-split statistics.

    Returns the manifest as a dict.
    """
    split_names = list(cfg.split_fractions)
    os.makedirs(os.path.join(out_dir, "annotations"), exist_ok=True)
    write_images = not isinstance(src, NullRasterSource)
    for name in split_names:
        if write_images:
            os.makedirs(os.path.join(out_dir, name), exist_ok=True)

    images: dict[str, list[ImageInfo]] = {n: [] for n in split_names}
    annotations: dict[str, list[PersonAnnotation]] = {n: [] for n in split_names}
    next_ann_id = 1
    for rec in sorted(crops, key=lambda r: r.id):
        split = splits[rec.id]
        out_w, out_h = rec.output_size
        file_name = f"{split}/{rec.id}.png"
        images[split].append(ImageInfo(
            id=rec.id, width=out_w, height=out_h, file_name=file_name))
        scene = scenes[rec.scene_id]
        for pid in rec.person_ids:
            remapped = remap_person(scene.persons_by_id[pid], rec.source_rect,
                                    rec.output_size)
            annotations[split].append(PersonAnnotation(
                id=next_ann_id,
                image_id=rec.id,
                bbox=remapped.bbox,
                keypoints=remapped.keypoints,
                num_keypoints=remapped.num_keypoints,
                area=remapped.area,
            ))
            next_ann_id += 1
        if write_images:
            block = extract_raster(rec, scene, src)
            if block is not None:
                _write_png(os.path.join(out_dir, file_name), quantize_block(block))

    manifest: dict = {
        "tool": "posecrop",
        "version": tool_version,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "splits": {},
    }
    for name in split_names:
        ds = Dataset(images=images[name], annotations=annotations[name])
        _atomic_write(os.path.join(out_dir, "annotations", f"{name}.json"),
                      serialize_dataset(ds))
        split_stats = (dataset_stats(ds).to_dict() if ds.images
                       else {"image_count": 0, "person_count": 0})
        manifest["splits"][name] = {
            "images": len(ds.images),
            "annotations": len(ds.annotations),
            "stats": split_stats,
        }
    _atomic_write(os.path.join(out_dir, "manifest.json"),
                  json.dumps(manifest, indent=2))
    return manifest


def _write_png(path: str, block: np.ndarray):
    from PIL import Image

    Image.fromarray(block).save(path, format="PNG")


def _atomic_write(path: str, text: str):
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)
