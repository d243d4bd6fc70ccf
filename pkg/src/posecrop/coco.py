"""In-memory annotation model plus COCO-keypoint JSON parsing/serialization.

The same format serves as ingestion (machine-annotated source scenes)
and emission (generated datasets). Unknown fields in images,
annotations, and at the top level are preserved opaquely so that a
parse/serialize round trip is lossless.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property

from .errors import ParseError, ReferentialError, SchemaError
from .geometry import BBox, Keypoint
from .skeleton import NUM_KEYPOINTS, category_block

_IMAGE_KEYS = ("id", "width", "height", "file_name")
_ANN_KEYS = ("id", "image_id", "category_id", "bbox", "area", "iscrowd",
             "keypoints", "num_keypoints")


def normalize_keypoints(kps: list[Keypoint] | tuple[Keypoint, ...]) -> tuple[Keypoint, ...]:
    """Zero the coordinates of unlabeled keypoints (v == 0 -> (0, 0, 0))."""
    return tuple(k if k.v > 0 else Keypoint(0.0, 0.0, 0) for k in kps)


@dataclass(frozen=True)
class PersonAnnotation:
    """One person instance: box, 17 keypoints, derived counts."""

    id: int
    image_id: int
    bbox: BBox
    keypoints: tuple[Keypoint, ...]
    num_keypoints: int
    area: float
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.keypoints) != NUM_KEYPOINTS:
            raise ValueError(f"expected {NUM_KEYPOINTS} keypoints, got {len(self.keypoints)}")

    @staticmethod
    def build(id: int, image_id: int, bbox: BBox, keypoints: list[Keypoint],
              extra: dict | None = None) -> "PersonAnnotation":
        """Construct with normalized keypoints and derived num_keypoints/area."""
        kps = normalize_keypoints(keypoints)
        return PersonAnnotation(
            id=id,
            image_id=image_id,
            bbox=bbox,
            keypoints=kps,
            num_keypoints=sum(1 for k in kps if k.v > 0),
            area=bbox.area,
            extra=dict(extra or {}),
        )


@dataclass(frozen=True)
class ImageInfo:
    id: int
    width: int
    height: int
    file_name: str
    extra: dict = field(default_factory=dict)


@dataclass
class Dataset:
    """A list of images and their person annotations."""

    images: list[ImageInfo]
    annotations: list[PersonAnnotation]
    categories: list[dict] = field(default_factory=lambda: [category_block()])
    extra: dict = field(default_factory=dict)

    def by_image(self) -> dict[int, list[PersonAnnotation]]:
        grouped: dict[int, list[PersonAnnotation]] = {im.id: [] for im in self.images}
        for ann in self.annotations:
            grouped[ann.image_id].append(ann)
        return grouped

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.images == other.images
                and self.annotations == other.annotations
                and self.categories == other.categories
                and self.extra == other.extra)


@dataclass(frozen=True)
class SourceScene:
    """An ultra-high-resolution source image plus its person annotations."""

    id: int
    width: int
    height: int
    uri: str
    persons: tuple[PersonAnnotation, ...]

    def __post_init__(self):
        seen: set[int] = set()
        bounds = BBox(0.0, 0.0, float(self.width), float(self.height))
        for p in self.persons:
            if p.id in seen:
                raise SchemaError(f"scene {self.id}: duplicate person id {p.id}")
            seen.add(p.id)
            if not p.bbox.intersects(bounds):
                raise SchemaError(
                    f"scene {self.id}: person {p.id} box lies outside the scene")

    @cached_property
    def persons_by_id(self) -> dict[int, PersonAnnotation]:
        return {p.id: p for p in self.persons}


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise SchemaError(f"{where}: missing required field '{key}'")
    return obj[key]


def _number(obj: dict, key: str, where: str, kind=float):
    value = _require(obj, key, where)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"{where}: field '{key}' must be a number")
    return kind(value)


def _parse_image(raw: dict, position: int) -> ImageInfo:
    where = f"image #{position}"
    info = ImageInfo(
        id=_number(raw, "id", where, int),
        width=_number(raw, "width", where, int),
        height=_number(raw, "height", where, int),
        file_name=str(_require(raw, "file_name", where)),
        extra={k: v for k, v in raw.items() if k not in _IMAGE_KEYS},
    )
    if info.width <= 0 or info.height <= 0:
        raise SchemaError(f"{where}: non-positive dimensions")
    return info


def _parse_annotation(raw: dict, position: int) -> PersonAnnotation:
    where = f"annotation #{position}"
    ann_id = _number(raw, "id", where, int)
    image_id = _number(raw, "image_id", where, int)
    bbox_raw = _require(raw, "bbox", where)
    if len(bbox_raw) != 4 or not all(isinstance(v, (int, float)) for v in bbox_raw):
        raise SchemaError(f"{where}: bbox must have 4 numeric entries")
    if bbox_raw[2] <= 0 or bbox_raw[3] <= 0:
        raise SchemaError(f"{where}: bbox has non-positive size")
    kp_raw = _require(raw, "keypoints", where)
    if (len(kp_raw) != 3 * NUM_KEYPOINTS
            or not all(isinstance(v, (int, float)) for v in kp_raw)):
        raise SchemaError(
            f"{where}: keypoints must have {3 * NUM_KEYPOINTS} numeric entries")
    kps = normalize_keypoints([
        Keypoint(float(kp_raw[i]), float(kp_raw[i + 1]), int(kp_raw[i + 2]))
        for i in range(0, len(kp_raw), 3)
    ])
    for k in kps:
        if k.v not in (0, 1, 2):
            raise SchemaError(f"{where}: keypoint visibility {k.v} outside {{0,1,2}}")
    num = _number(raw, "num_keypoints", where, int)
    labeled = sum(1 for k in kps if k.v > 0)
    if num != labeled:
        raise SchemaError(
            f"{where}: num_keypoints is {num} but {labeled} keypoints are labeled")
    area = _number(raw, "area", where)
    if area <= 0:
        raise SchemaError(f"{where}: non-positive area")
    if raw.get("iscrowd", 0) not in (0, False):
        raise SchemaError(f"{where}: iscrowd regions are not supported")
    return PersonAnnotation(
        id=ann_id,
        image_id=image_id,
        bbox=BBox(float(bbox_raw[0]), float(bbox_raw[1]),
                  float(bbox_raw[2]), float(bbox_raw[3])),
        keypoints=kps,
        num_keypoints=num,
        area=area,
        extra={k: v for k, v in raw.items() if k not in _ANN_KEYS},
    )


def parse_dataset(json_text: str | bytes) -> Dataset:
    """Parse COCO-keypoint JSON into a Dataset.

    Raises ParseError (with byte offset) for malformed JSON,
    SchemaError for missing/inconsistent fields, and ReferentialError
    for annotations pointing at unknown images.
    """
    try:
        root = json.loads(json_text)
    except json.JSONDecodeError as e:
        raise ParseError(f"malformed JSON at byte {e.pos}: {e.msg}", offset=e.pos) from e
    if not isinstance(root, dict):
        raise SchemaError("top level must be a JSON object")
    for key in ("images", "annotations", "categories"):
        if key not in root:
            raise SchemaError(f"top level: missing required field '{key}'")

    images = [_parse_image(raw, i) for i, raw in enumerate(root["images"])]
    image_ids: set[int] = set()
    for im in images:
        if im.id in image_ids:
            raise SchemaError(f"duplicate image id {im.id}")
        image_ids.add(im.id)

    annotations = [_parse_annotation(raw, i) for i, raw in enumerate(root["annotations"])]
    ann_ids: set[int] = set()
    for ann in annotations:
        if ann.id in ann_ids:
            raise SchemaError(f"duplicate annotation id {ann.id}")
        ann_ids.add(ann.id)
        if ann.image_id not in image_ids:
            raise ReferentialError(
                f"annotation {ann.id} references missing image_id {ann.image_id}")

    return Dataset(
        images=images,
        annotations=annotations,
        categories=list(root["categories"]),
        extra={k: v for k, v in root.items()
               if k not in ("images", "annotations", "categories")},
    )


def _image_to_coco(im: ImageInfo) -> dict:
    out = {"id": im.id, "width": im.width, "height": im.height,
           "file_name": im.file_name}
    out.update(im.extra)
    return out


def _annotation_to_coco(ann: PersonAnnotation) -> dict:
    kps: list[float | int] = []
    for k in normalize_keypoints(ann.keypoints):
        kps.extend((k.x, k.y, k.v))
    out = {
        "id": ann.id,
        "image_id": ann.image_id,
        "category_id": 1,
        "bbox": [ann.bbox.x, ann.bbox.y, ann.bbox.w, ann.bbox.h],
        "area": ann.area,
        "iscrowd": 0,
        "keypoints": kps,
        "num_keypoints": ann.num_keypoints,
    }
    out.update(ann.extra)
    return out


def serialize_dataset(d: Dataset) -> str:
    """Serialize to deterministic COCO-keypoint JSON.

    Floats use Python's shortest round-trip decimal form, so
    parse(serialize(d)) reproduces the exact same values.
    """
    root: dict = {
        "images": [_image_to_coco(im) for im in d.images],
        "annotations": [_annotation_to_coco(a) for a in d.annotations],
        "categories": d.categories,
    }
    root.update(d.extra)
    return json.dumps(root, indent=2)


def scenes_from_dataset(d: Dataset, uri_prefix: str = "") -> list[SourceScene]:
    """View each image of a dataset as a croppable source scene."""
    grouped = d.by_image()
    scenes = []
    for im in d.images:
        scenes.append(SourceScene(
            id=im.id,
            width=im.width,
            height=im.height,
            uri=uri_prefix + im.file_name,
            persons=tuple(grouped[im.id]),
        ))
    return scenes
