"""Pixel access behind crop extraction.

Three raster backends: real image files, the procedural test pattern,
and a null reader for annotations-only runs. Downscaling uses plain
bilinear sampling at output pixel centers; for an exact 2:1 reduction
every output pixel is the mean of its 2x2 source block, which is what
the extraction tests pin down.
"""

from __future__ import annotations

import os

import numpy as np

from .coco import SourceScene
from .errors import RasterError
from .geometry import Rect
from . import scenegen


class RasterSource:
    """Reads a rectangular region of a scene, or None when rasterless."""

    def read_region(self, scene: SourceScene, rect: Rect) -> np.ndarray | None:
        raise NotImplementedError


class NullRasterSource(RasterSource):
    """Annotations-only mode: no pixels are ever produced."""

    def read_region(self, scene: SourceScene, rect: Rect) -> np.ndarray | None:
        return None


class ProceduralRasterSource(RasterSource):
    """Backs scenes with the deterministic coordinate-hash pattern."""

    def read_region(self, scene: SourceScene, rect: Rect) -> np.ndarray | None:
        return scenegen.procedural_raster(scene, rect)


class FileRasterSource(RasterSource):
    """Reads regions out of image files referenced by scene uris."""

    def __init__(self, base_dir: str = ""):
        self.base_dir = base_dir
        self._open: dict[str, object] = {}

    def read_region(self, scene: SourceScene, rect: Rect) -> np.ndarray | None:
        from PIL import Image

        path = os.path.join(self.base_dir, scene.uri) if self.base_dir else scene.uri
        try:
            img = self._open.get(path)
            if img is None:
                img = Image.open(path)
                self._open[path] = img
            x0, y0 = int(round(rect.x)), int(round(rect.y))
            w, h = int(round(rect.w)), int(round(rect.h))
            region = img.crop((x0, y0, x0 + w, y0 + h)).convert("RGB")
            return np.asarray(region, dtype=np.uint8)
        except (OSError, ValueError) as e:
            raise RasterError(f"cannot read raster for scene '{scene.uri}': {e}") from e


def downscale_bilinear(block: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Bilinear resample of an (h, w[, c]) block to (out_h, out_w[, c]).

    Samples the source at output pixel centers mapped through
    ``src = (dst + 0.5) * (in/out) - 0.5`` and blends the 2x2 neighbor
    texels with triangle weights. Returns float64; callers quantize.
    """
    in_h, in_w = block.shape[:2]
    if (out_w, out_h) == (in_w, in_h):
        return block.astype(np.float64)
    if out_w > in_w or out_h > in_h:
        raise ValueError("downscale only; output exceeds input size")

    data = block.astype(np.float64)

    def axis_coords(n_in: int, n_out: int):
        c = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        lo = np.floor(c).astype(np.int64)
        frac = c - lo
        lo0 = np.clip(lo, 0, n_in - 1)
        lo1 = np.clip(lo + 1, 0, n_in - 1)
        return lo0, lo1, frac

    x0, x1, fx = axis_coords(in_w, out_w)
    y0, y1, fy = axis_coords(in_h, out_h)
    if data.ndim == 2:
        data = data[:, :, None]
    fx = fx[None, :, None]
    fy = fy[:, None, None]
    top = data[y0][:, x0] * (1 - fx) + data[y0][:, x1] * fx
    bot = data[y1][:, x0] * (1 - fx) + data[y1][:, x1] * fx
    out = top * (1 - fy) + bot * fy
    if block.ndim == 2:
        out = out[:, :, 0]
    return out


def quantize_block(block: np.ndarray) -> np.ndarray:
    """Round a float block to uint8 for writing."""
    if block.dtype == np.uint8:
        return block
    return np.clip(np.rint(block), 0, 255).astype(np.uint8)
