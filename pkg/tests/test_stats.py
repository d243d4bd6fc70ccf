import itertools
import math

import numpy as np
import pytest

from posecrop.coco import Dataset, ImageInfo, PersonAnnotation
from posecrop.errors import PosecropError
from posecrop.geometry import BBox, Keypoint, iou, person_scale
from posecrop.skeleton import NUM_KEYPOINTS
from posecrop.stats import (StatsAccumulator, dataset_stats,
                            format_stats_report, image_occlusion, stratum_of)


def pairwise_occlusion_oracle(boxes) -> float:
    """Hand enumeration of overlapping-pair IoUs."""
    vals = [iou(a, b) for a, b in itertools.combinations(boxes, 2) if iou(a, b) > 0]
    return sum(vals) / len(vals) if vals else 0.0


def ann(ann_id, image_id, box: BBox) -> PersonAnnotation:
    return PersonAnnotation.build(
        ann_id, image_id, box,
        [Keypoint(box.x + 1, box.y + 1, 2)] * NUM_KEYPOINTS)


def build_dataset(per_image_boxes: list[list[BBox]], width=640, height=480) -> Dataset:
    images, annotations = [], []
    next_ann = 1
    for i, boxes in enumerate(per_image_boxes, start=1):
        images.append(ImageInfo(i, width, height, f"{i}.png"))
        for b in boxes:
            annotations.append(ann(next_ann, i, b))
            next_ann += 1
    return Dataset(images=images, annotations=annotations)


class TestImageOcclusion:
    def test_single_person(self):
        assert image_occlusion([BBox(0, 0, 10, 10)]) == 0.0

    def test_no_persons(self):
        assert image_occlusion([]) == 0.0

    def test_identical_pair(self):
        assert image_occlusion([BBox(0, 0, 10, 10), BBox(0, 0, 10, 10)]) == 1.0

    def test_one_overlapping_pair_of_three(self):
        boxes = [BBox(0, 0, 10, 10), BBox(5, 0, 10, 10), BBox(100, 100, 5, 5)]
        assert pairwise_occlusion_oracle(boxes) == pytest.approx(1 / 3)
        assert image_occlusion(boxes) == pytest.approx(1 / 3)

    def test_disjoint_boxes(self):
        assert image_occlusion([BBox(0, 0, 5, 5), BBox(50, 50, 5, 5)]) == 0.0

    def test_permutation_invariant(self):
        rng = np.random.default_rng(2)
        boxes = [BBox(float(rng.uniform(0, 80)), float(rng.uniform(0, 80)),
                      float(rng.uniform(1, 30)), float(rng.uniform(1, 30)))
                 for _ in range(12)]
        reference = image_occlusion(boxes)
        for _ in range(10):
            perm = list(rng.permutation(len(boxes)))
            assert image_occlusion([boxes[i] for i in perm]) == reference

    def test_matches_oracle_on_random_inputs(self):
        rng = np.random.default_rng(8)
        for _ in range(50):
            boxes = [BBox(float(rng.uniform(0, 60)), float(rng.uniform(0, 60)),
                          float(rng.uniform(1, 40)), float(rng.uniform(1, 40)))
                     for _ in range(int(rng.integers(0, 15)))]
            assert image_occlusion(boxes) == pytest.approx(
                pairwise_occlusion_oracle(boxes))

    def test_chunked_path_matches_oracle(self):
        rng = np.random.default_rng(21)
        boxes = [BBox(float(rng.uniform(0, 400)), float(rng.uniform(0, 400)),
                      float(rng.uniform(1, 30)), float(rng.uniform(1, 30)))
                 for _ in range(1500)]  # exceeds the 1024-row chunk
        assert image_occlusion(boxes) == pytest.approx(
            pairwise_occlusion_oracle(boxes))


class TestQuantiles:
    def test_type7_linear_interpolation(self):
        # scales [1,2,3,4] (synthetic): q = (n-1)*p interpolation
        acc = StatsAccumulator()
        acc.add_image(4, 0.0, [1.0, 2.0, 3.0, 4.0])
        s = acc.finalize().scale_summary
        assert s.q1 == pytest.approx(1.75)
        assert s.median == pytest.approx(2.5)
        assert s.q3 == pytest.approx(3.25)
        assert s.min == 1.0 and s.max == 4.0

    def test_manual_interpolation_oracle(self):
        rng = np.random.default_rng(4)
        values = sorted(float(v) for v in rng.uniform(0, 1, 37))

        def type7(p):
            pos = (len(values) - 1) * p
            lo = int(math.floor(pos))
            hi = min(lo + 1, len(values) - 1)
            return values[lo] + (pos - lo) * (values[hi] - values[lo])

        acc = StatsAccumulator()
        acc.add_image(len(values), 0.0, values)
        s = acc.finalize().scale_summary
        for got, p in zip(s, (0.0, 0.25, 0.5, 0.75, 1.0)):
            assert got == pytest.approx(type7(p))


class TestDatasetStats:
    def test_mean_persons(self):
        d = build_dataset([
            [BBox(0, 0, 10, 10)],
            [BBox(0, 0, 10, 10), BBox(30, 30, 10, 10)],
            [BBox(0, 0, 10, 10), BBox(30, 30, 10, 10), BBox(60, 60, 10, 10)],
        ])
        st = dataset_stats(d)
        assert st.persons_per_image_mean == 2.0
        assert st.person_count == 6
        assert st.empty_fraction == 0.0

    def test_empty_fraction_and_avg_iou(self):
        d = build_dataset([
            [],  # empty image
            [BBox(0, 0, 10, 10), BBox(0, 0, 10, 10)],      # occlusion 1.0
            [BBox(0, 0, 10, 10), BBox(5, 0, 10, 10)],      # occlusion 1/3
            [BBox(0, 0, 10, 10)],                          # single person, ignored
        ])
        st = dataset_stats(d)
        assert st.empty_fraction == 0.25
        assert st.avg_iou == pytest.approx((1.0 + 1 / 3) / 2)

    def test_scales_use_owning_image_dims(self):
        d = build_dataset([[BBox(0, 0, 100, 100)]], width=1000, height=1000)
        st = dataset_stats(d)
        assert st.scale_summary.median == pytest.approx(
            person_scale(BBox(0, 0, 100, 100), 1000, 1000))

    def test_empty_dataset_errors(self):
        with pytest.raises(PosecropError, match="no images"):
            dataset_stats(Dataset(images=[], annotations=[]))

    def test_quartile_ordering_invariant(self):
        rng = np.random.default_rng(12)
        d = build_dataset([
            [BBox(float(rng.uniform(0, 500)), float(rng.uniform(0, 300)),
                  float(rng.uniform(1, 100)), float(rng.uniform(1, 100)))
             for _ in range(int(rng.integers(0, 8)))]
            for _ in range(40)
        ])
        s = dataset_stats(d).scale_summary
        assert s.min <= s.q1 <= s.median <= s.q3 <= s.max


def random_image_batch(rng, n_images):
    batch = []
    for _ in range(n_images):
        boxes = [BBox(float(rng.uniform(0, 600)), float(rng.uniform(0, 400)),
                      float(rng.uniform(1, 60)), float(rng.uniform(1, 60)))
                 for _ in range(int(rng.integers(0, 10)))]
        batch.append(boxes)
    return batch


def accumulate(batch) -> StatsAccumulator:
    acc = StatsAccumulator()
    for boxes in batch:
        scales = [person_scale(b, 640, 480) for b in boxes]
        acc.add_image(len(boxes), image_occlusion(boxes), scales)
    return acc


class TestAccumulatorMerge:
    def test_merge_with_empty_is_identity(self):
        rng = np.random.default_rng(1)
        acc = accumulate(random_image_batch(rng, 30))
        merged = acc.merge(StatsAccumulator())
        assert merged.finalize() == acc.finalize()

    def test_merge_commutative(self):
        rng = np.random.default_rng(2)
        a = accumulate(random_image_batch(rng, 25))
        b = accumulate(random_image_batch(rng, 35))
        assert a.merge(b).finalize() == b.merge(a).finalize()

    def test_four_shards_equal_single_pass_exactly(self):
        rng = np.random.default_rng(3)
        batch = random_image_batch(rng, 1000)
        single = accumulate(batch).finalize()
        shards = [accumulate(batch[i::4]) for i in range(4)]
        merged = shards[0]
        for s in shards[1:]:
            merged = merged.merge(s)
        assert merged.finalize() == single

    def test_merge_associative(self):
        rng = np.random.default_rng(4)
        a = accumulate(random_image_batch(rng, 10))
        b = accumulate(random_image_batch(rng, 10))
        c = accumulate(random_image_batch(rng, 10))
        assert a.merge(b).merge(c).finalize() == a.merge(b.merge(c)).finalize()

    def test_config_mismatch_rejected(self):
        a = StatsAccumulator(scale_breaks=(0.007, 0.126, 0.216, 0.373, 1.0))
        b = StatsAccumulator()
        with pytest.raises(PosecropError, match="scale policies"):
            a.merge(b)

    def test_stratum_counts_follow_breaks(self):
        breaks = (0.0078125, 0.125, 0.25, 0.5, 1.0)
        acc = StatsAccumulator(scale_breaks=breaks)
        acc.add_image(4, 0.0, [0.05, 0.2, 0.3, 0.9])
        assert acc.stratum_counts == [1, 1, 1, 1]
        assert stratum_of(0.125, breaks) == 1  # boundary goes upward


def test_report_renders_with_and_without_scales():
    acc = StatsAccumulator()
    acc.add_image(0, 0.0, [])
    text = format_stats_report(acc.finalize())
    assert "no persons" in text
    acc.add_image(3, 0.2, [0.1, 0.2, 0.3])
    text = format_stats_report(acc.finalize(), label="probe")
    assert "probe" in text and "median" in text
