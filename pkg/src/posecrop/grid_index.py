"""Uniform-grid spatial index over a scene's person boxes.

Crop proposals need the set of persons intersecting a window; dense
scenes can hold thousands of persons, so a linear scan per proposal is
wasteful. A uniform grid is exact (candidates are re-tested against
the window) and immutable after build, so concurrent queries are safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .coco import SourceScene
from .geometry import BBox, Rect

DEFAULT_CELLS_ACROSS = 64


@dataclass
class SceneIndex:
    cell_size: float
    cols: int
    rows: int
    scene_w: int
    scene_h: int
    _boxes: dict[int, BBox] = field(default_factory=dict)
    _cells: dict[tuple[int, int], list[int]] = field(default_factory=dict)

    @staticmethod
    def build(scene: SourceScene, cell_size: float | None = None) -> "SceneIndex":
        """Index every person of a scene into the cells its box overlaps."""
        if cell_size is None:
            cell_size = max(1.0, scene.width / DEFAULT_CELLS_ACROSS)
        if cell_size <= 0:
            raise ValueError("cell_size must be positive")
        idx = SceneIndex(
            cell_size=float(cell_size),
            cols=max(1, math.ceil(scene.width / cell_size)),
            rows=max(1, math.ceil(scene.height / cell_size)),
            scene_w=scene.width,
            scene_h=scene.height,
        )
        for p in scene.persons:
            idx._boxes[p.id] = p.bbox
            for cell in idx._overlapped_cells(p.bbox):
                idx._cells.setdefault(cell, []).append(p.id)
        return idx

    def _overlapped_cells(self, box: BBox):
        c0 = max(0, int(box.x // self.cell_size))
        r0 = max(0, int(box.y // self.cell_size))
        # open upper edge: a box ending exactly on a cell boundary does
        # not spill into the next cell
        c1 = min(self.cols - 1, int(-(-box.x2 // self.cell_size)) - 1)
        r1 = min(self.rows - 1, int(-(-box.y2 // self.cell_size)) - 1)
        for r in range(r0, r1 + 1):
            for c in range(c0, c1 + 1):
                yield (c, r)

    def query(self, window: Rect) -> set[int]:
        """Ids of all persons whose box shares positive area with ``window``."""
        seen: set[int] = set()
        out: set[int] = set()
        for cell in self._overlapped_cells(window):
            for pid in self._cells.get(cell, ()):
                if pid in seen:
                    continue
                seen.add(pid)
                if self._boxes[pid].intersects(window):
                    out.add(pid)
        return out

    def __len__(self) -> int:
        return len(self._boxes)


def build_index(scene: SourceScene, cell_size: float | None = None) -> SceneIndex:
    return SceneIndex.build(scene, cell_size)
