import numpy as np
import pytest

from posecrop.coco import PersonAnnotation, SourceScene
from posecrop.geometry import BBox, Keypoint, Rect
from posecrop.grid_index import SceneIndex, build_index
from posecrop.skeleton import NUM_KEYPOINTS


def make_person(pid: int, box: BBox) -> PersonAnnotation:
    return PersonAnnotation.build(
        pid, 1, box, [Keypoint(box.x + 1, box.y + 1, 2)] * NUM_KEYPOINTS)


def make_scene(boxes: list[BBox], width=1000, height=800) -> SourceScene:
    persons = tuple(make_person(i + 1, b) for i, b in enumerate(boxes))
    return SourceScene(id=1, width=width, height=height, uri="s.png", persons=persons)


def brute_force(scene: SourceScene, window: Rect) -> set[int]:
    return {p.id for p in scene.persons if p.bbox.intersects(window)}


def test_empty_scene_returns_nothing():
    idx = build_index(make_scene([]))
    assert idx.query(Rect(0, 0, 1000, 800)) == set()
    assert idx.query(Rect(10, 10, 50, 50)) == set()


def test_box_spanning_four_cells_listed_in_exactly_four():
    # cell size 100: a box straddling a corner occupies 2x2 cells
    scene = make_scene([BBox(95, 95, 10, 10)])
    idx = SceneIndex.build(scene, cell_size=100)
    cells = [cell for cell, ids in idx._cells.items() if 1 in ids]
    assert sorted(cells) == [(0, 0), (0, 1), (1, 0), (1, 1)]


def test_box_ending_on_cell_boundary_does_not_spill():
    scene = make_scene([BBox(0, 0, 100, 100)])
    idx = SceneIndex.build(scene, cell_size=100)
    assert list(idx._cells) == [(0, 0)]


def test_full_scene_query_returns_all():
    rng = np.random.default_rng(0)
    boxes = [BBox(float(rng.uniform(0, 950)), float(rng.uniform(0, 750)),
                  float(rng.uniform(1, 50)), float(rng.uniform(1, 50)))
             for _ in range(1000)]
    scene = make_scene(boxes)
    idx = build_index(scene)
    assert idx.query(Rect(0, 0, 1000, 800)) == set(range(1, 1001))


def test_window_equal_to_one_box():
    scene = make_scene([BBox(100, 100, 40, 40), BBox(500, 500, 40, 40)])
    idx = build_index(scene)
    assert 1 in idx.query(Rect(100, 100, 40, 40))


def test_window_disjoint_from_all():
    scene = make_scene([BBox(0, 0, 10, 10)])
    idx = build_index(scene)
    assert idx.query(Rect(500, 500, 100, 100)) == set()


@pytest.mark.parametrize("cell_size", [None, 13.7, 250])
def test_matches_brute_force_on_random_windows(cell_size):
    rng = np.random.default_rng(123)
    boxes = [BBox(float(rng.uniform(0, 950)), float(rng.uniform(0, 750)),
                  float(rng.uniform(1, 80)), float(rng.uniform(1, 80)))
             for _ in range(1000)]
    scene = make_scene(boxes)
    idx = SceneIndex.build(scene, cell_size=cell_size)
    for _ in range(1000):
        w = float(rng.uniform(1, 400))
        h = float(rng.uniform(1, 400))
        window = Rect(float(rng.uniform(0, 1000 - w)),
                      float(rng.uniform(0, 800 - h)), w, h)
        assert idx.query(window) == brute_force(scene, window)
