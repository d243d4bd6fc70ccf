"""posecrop: distribution-targeted crop datasets for human pose estimation.

Samples semi-random crops from annotated ultra-high-resolution scenes
so that the resulting dataset matches user-specified person-scale,
crowdedness, and occlusion distributions, and scores pose detections
with OKS-based AP/AR/F1.
"""

__version__ = "0.1.0"

from .coco import (Dataset, ImageInfo, PersonAnnotation, SourceScene,
                   parse_dataset, scenes_from_dataset, serialize_dataset)
from .config import GenerationConfig
from .errors import (InfeasibleTargetsError, ParseError, PosecropError,
                     RasterError, ReferentialError, SceneTooSmallError,
                     SchemaError)
from .evaluate import EvalResult, f1, match_and_score, oks
from .geometry import BBox, Keypoint, Rect, clip_box, iou, person_scale
from .grid_index import SceneIndex, build_index
from .sampler import (CropRecord, CropStats, accept, evaluate_crop,
                      propose_crop, sample_dataset)
from .scenegen import SceneGenParams, generate_scene, procedural_raster
from .stats import (DatasetStats, ScaleSummary, StatsAccumulator,
                    dataset_stats, image_occlusion)
from .synthesize import (assign_splits, emit_dataset, extract_raster,
                         include_person, remap_person)

__all__ = [
    "BBox", "CropRecord", "CropStats", "Dataset", "DatasetStats",
    "EvalResult", "GenerationConfig", "ImageInfo", "InfeasibleTargetsError",
    "Keypoint", "ParseError", "PersonAnnotation", "PosecropError",
    "RasterError", "Rect", "ReferentialError", "ScaleSummary",
    "SceneGenParams", "SceneIndex", "SceneTooSmallError", "SchemaError",
    "SourceScene", "StatsAccumulator", "accept", "assign_splits",
    "build_index", "clip_box", "dataset_stats", "emit_dataset",
    "evaluate_crop", "extract_raster", "f1", "generate_scene",
    "image_occlusion", "include_person", "iou", "match_and_score", "oks",
    "parse_dataset", "person_scale", "procedural_raster", "propose_crop",
    "remap_person", "sample_dataset", "scenes_from_dataset",
    "serialize_dataset",
]
