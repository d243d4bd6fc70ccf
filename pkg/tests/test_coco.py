import json

import numpy as np
import pytest

from posecrop.coco import (Dataset, ImageInfo, PersonAnnotation, SourceScene,
                           parse_dataset, scenes_from_dataset, serialize_dataset)
from posecrop.errors import ParseError, ReferentialError, SchemaError
from posecrop.geometry import BBox, Keypoint
from posecrop.skeleton import NUM_KEYPOINTS, category_block


def minimal_file(images=None, annotations=None) -> str:
    return json.dumps({
        "images": images if images is not None else [],
        "annotations": annotations or [],
        "categories": [category_block()],
    })


def ann_dict(ann_id=1, image_id=1, bbox=(10, 10, 50, 100), labeled=17, **extra):
    kps = []
    for i in range(NUM_KEYPOINTS):
        if i < labeled:
            kps.extend([20.0 + i, 30.0 + i, 2])
        else:
            kps.extend([0, 0, 0])
    d = {
        "id": ann_id,
        "image_id": image_id,
        "category_id": 1,
        "bbox": list(bbox),
        "area": float(bbox[2] * bbox[3]),
        "iscrowd": 0,
        "keypoints": kps,
        "num_keypoints": labeled,
    }
    d.update(extra)
    return d


def image_dict(image_id=1, width=640, height=480):
    return {"id": image_id, "width": width, "height": height,
            "file_name": f"img_{image_id}.png"}


class TestParse:
    def test_minimal_one_image(self):
        d = parse_dataset(minimal_file(images=[image_dict()]))
        assert len(d.images) == 1
        assert d.annotations == []
        assert d.images[0].file_name == "img_1.png"

    def test_null_keypoint_annotation(self):
        # a person record with a box but zero labeled keypoints is legal
        d = parse_dataset(minimal_file(images=[image_dict()],
                                       annotations=[ann_dict(labeled=0)]))
        ann = d.annotations[0]
        assert ann.num_keypoints == 0
        assert all(k == Keypoint(0.0, 0.0, 0) for k in ann.keypoints)

    def test_num_keypoints_mismatch_rejected(self):
        bad = ann_dict(labeled=5)
        bad["num_keypoints"] = 7
        with pytest.raises(SchemaError, match="num_keypoints"):
            parse_dataset(minimal_file(images=[image_dict()], annotations=[bad]))

    def test_malformed_json_reports_offset(self):
        with pytest.raises(ParseError) as exc:
            parse_dataset('{"images": [,]}')
        assert exc.value.offset == 12  # index of the stray comma
        assert "byte 12" in str(exc.value)

    def test_missing_field_named(self):
        bad = ann_dict()
        del bad["bbox"]
        with pytest.raises(SchemaError, match="'bbox'"):
            parse_dataset(minimal_file(images=[image_dict()], annotations=[bad]))
        with pytest.raises(SchemaError, match="'categories'"):
            parse_dataset('{"images": [], "annotations": []}')

    def test_dangling_image_id(self):
        with pytest.raises(ReferentialError, match="image_id 99"):
            parse_dataset(minimal_file(images=[image_dict(1)],
                                       annotations=[ann_dict(image_id=99)]))

    def test_duplicate_ids_rejected(self):
        with pytest.raises(SchemaError, match="duplicate image id"):
            parse_dataset(minimal_file(images=[image_dict(1), image_dict(1)]))
        with pytest.raises(SchemaError, match="duplicate annotation id"):
            parse_dataset(minimal_file(
                images=[image_dict(1)],
                annotations=[ann_dict(1), ann_dict(1)]))

    def test_crowd_regions_rejected(self):
        with pytest.raises(SchemaError, match="iscrowd"):
            parse_dataset(minimal_file(images=[image_dict()],
                                       annotations=[ann_dict(iscrowd=1)]))

    def test_non_numeric_fields_rejected(self):
        bad = ann_dict()
        bad["bbox"] = ["10", 10, 50, 100]
        with pytest.raises(SchemaError, match="numeric"):
            parse_dataset(minimal_file(images=[image_dict()], annotations=[bad]))
        bad = ann_dict()
        bad["area"] = "big"
        with pytest.raises(SchemaError, match="number"):
            parse_dataset(minimal_file(images=[image_dict()], annotations=[bad]))

    def test_unknown_fields_preserved(self):
        img = image_dict()
        img["license"] = 4
        ann = ann_dict(custom_tag="hello")
        text = json.dumps({"images": [img], "annotations": [ann],
                           "categories": [category_block()], "info": {"year": 2021}})
        d = parse_dataset(text)
        assert d.images[0].extra == {"license": 4}
        assert d.annotations[0].extra == {"custom_tag": "hello"}
        assert d.extra == {"info": {"year": 2021}}
        again = parse_dataset(serialize_dataset(d))
        assert again == d


def random_annotation(rng, ann_id, image_id, width, height) -> PersonAnnotation:
    w = float(rng.uniform(5, 80))
    h = float(rng.uniform(10, 160))
    x = float(rng.uniform(0, width - w))
    y = float(rng.uniform(0, height - h))
    kps = []
    for _ in range(NUM_KEYPOINTS):
        v = int(rng.integers(0, 3))
        kps.append(Keypoint(float(rng.uniform(x, x + w)),
                            float(rng.uniform(y, y + h)), v))
    return PersonAnnotation.build(ann_id, image_id, BBox(x, y, w, h), kps)


class TestSerialize:
    def test_empty_dataset(self):
        text = serialize_dataset(Dataset(images=[], annotations=[]))
        root = json.loads(text)
        assert root["images"] == []
        assert root["annotations"] == []
        assert root["categories"][0]["name"] == "person"

    def test_round_trip_100_annotations(self):
        rng = np.random.default_rng(3)
        images = [ImageInfo(i, 640, 480, f"im{i}.png") for i in range(1, 11)]
        annotations = [random_annotation(rng, i + 1, (i % 10) + 1, 640, 480)
                       for i in range(100)]
        d = Dataset(images=images, annotations=annotations)
        assert parse_dataset(serialize_dataset(d)) == d

    def test_serialization_is_deterministic(self):
        rng = np.random.default_rng(5)
        d = Dataset(images=[ImageInfo(1, 640, 480, "a.png")],
                    annotations=[random_annotation(rng, 1, 1, 640, 480)])
        assert serialize_dataset(d) == serialize_dataset(d)

    def test_unlabeled_keypoint_zeroed_on_write(self):
        kps = [Keypoint(12.3, 4.5, 0)] + [Keypoint(5.0, 6.0, 2)] * (NUM_KEYPOINTS - 1)
        ann = PersonAnnotation.build(1, 1, BBox(0, 0, 10, 10), kps)
        d = Dataset(images=[ImageInfo(1, 64, 64, "a.png")], annotations=[ann])
        raw = json.loads(serialize_dataset(d))["annotations"][0]
        assert raw["keypoints"][0:3] == [0.0, 0.0, 0]
        assert raw["num_keypoints"] == NUM_KEYPOINTS - 1

    def test_num_keypoints_consistent_on_every_emitted_annotation(self):
        rng = np.random.default_rng(9)
        anns = [random_annotation(rng, i + 1, 1, 640, 480) for i in range(50)]
        d = Dataset(images=[ImageInfo(1, 640, 480, "a.png")], annotations=anns)
        for raw in json.loads(serialize_dataset(d))["annotations"]:
            labeled = sum(1 for i in range(2, len(raw["keypoints"]), 3)
                          if raw["keypoints"][i] > 0)
            assert raw["num_keypoints"] == labeled


class TestSourceScene:
    def test_scene_views(self):
        d = parse_dataset(minimal_file(images=[image_dict(1), image_dict(2)],
                                       annotations=[ann_dict(1, 1), ann_dict(2, 1)]))
        scenes = scenes_from_dataset(d)
        assert [s.id for s in scenes] == [1, 2]
        assert len(scenes[0].persons) == 2
        assert len(scenes[1].persons) == 0
        assert scenes[0].persons_by_id[1].id == 1

    def test_out_of_bounds_person_rejected(self):
        ann = PersonAnnotation.build(1, 1, BBox(900, 900, 10, 10),
                                     [Keypoint(0, 0, 0)] * NUM_KEYPOINTS)
        with pytest.raises(SchemaError, match="outside"):
            SourceScene(id=1, width=640, height=480, uri="x.png", persons=(ann,))
