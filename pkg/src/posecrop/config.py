"""User-tunable generation parameters and their JSON form."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields

from .errors import SchemaError

DEFAULT_SCALE_TARGET = (0.007, 0.126, 0.216, 0.373, 1.0)

DEFAULT_TOLERANCES = {
    "persons_mean": 0.5,
    "avg_iou": 0.03,
    "empty_fraction": 0.01,
    "scale_mass": 0.03,
}


@dataclass
class GenerationConfig:
    """Distribution targets, hard constraints, and sampling knobs.

    ``tolerances`` drive the acceptance deviation score: a statistic is
    considered on-target when within its tolerance of the target value.
    ``scale_mass`` applies to each of the four inter-quartile masses of
    the scale target (each aims at 0.25).
    """

    aspect_ratio: tuple[int, int] = (4, 3)
    min_res: tuple[int, int] = (480, 360)
    max_res: tuple[int, int] = (3840, 2880)
    persons_min: int = 0
    persons_max: int = 30
    persons_mean_target: float = 9.33
    target_avg_iou: float = 0.33
    scale_target: tuple[float, float, float, float, float] | None = DEFAULT_SCALE_TARGET
    empty_fraction_target: float = 0.04
    dataset_size: int = 2000
    split_fractions: dict[str, float] = field(
        default_factory=lambda: {"train": 0.8, "val": 0.2})
    seed: int = 0
    anchor_prob: float = 0.8
    explore_prob: float = 0.05
    proposal_budget: int = 200
    tolerances: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    weights: dict[str, float] = field(default_factory=dict)
    downscale_to: tuple[int, int] | None = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        arw, arh = self.aspect_ratio
        if arw <= 0 or arh <= 0:
            raise SchemaError("aspect_ratio entries must be positive")
        for name, (w, h) in (("min_res", self.min_res), ("max_res", self.max_res)):
            if w <= 0 or h <= 0:
                raise SchemaError(f"{name} must be positive")
            if abs(w * arh - h * arw) > max(arw, arh):  # within 1px of the ratio
                raise SchemaError(f"{name} {w}x{h} does not honor aspect ratio {arw}:{arh}")
        if self.min_res[0] > self.max_res[0] or self.min_res[1] > self.max_res[1]:
            raise SchemaError("min_res exceeds max_res")
        if not (self.persons_min <= self.persons_mean_target <= self.persons_max):
            raise SchemaError("persons_mean_target outside [persons_min, persons_max]")
        if not 0.0 <= self.target_avg_iou <= 1.0:
            raise SchemaError("target_avg_iou outside [0, 1]")
        if self.scale_target is not None:
            st = self.scale_target
            if len(st) != 5 or any(b <= a for a, b in zip(st, st[1:])):
                raise SchemaError("scale_target must be 5 strictly increasing values")
            if st[0] <= 0 or st[-1] > 1:
                raise SchemaError("scale_target values must lie in (0, 1]")
        if not 0.0 <= self.empty_fraction_target <= 1.0:
            raise SchemaError("empty_fraction_target outside [0, 1]")
        if self.dataset_size < 1:
            raise SchemaError("dataset_size must be at least 1")
        if not self.split_fractions:
            raise SchemaError("split_fractions must not be empty")
        total = math.fsum(self.split_fractions.values())
        if abs(total - 1.0) > 1e-9 or any(f < 0 for f in self.split_fractions.values()):
            raise SchemaError("split_fractions must be non-negative and sum to 1")
        if not 0 <= self.seed < 2 ** 64:
            raise SchemaError("seed must fit in 64 bits")
        for name, p in (("anchor_prob", self.anchor_prob),
                        ("explore_prob", self.explore_prob)):
            if not 0.0 <= p <= 1.0:
                raise SchemaError(f"{name} outside [0, 1]")
        if self.proposal_budget < 1:
            raise SchemaError("proposal_budget must be at least 1")
        for key in self.tolerances:
            if key not in DEFAULT_TOLERANCES:
                raise SchemaError(f"unknown tolerance '{key}'")
            if self.tolerances[key] <= 0:
                raise SchemaError(f"tolerance '{key}' must be positive")
        for key in self.weights:
            if key not in DEFAULT_TOLERANCES:
                raise SchemaError(f"unknown weight '{key}'")
        if self.downscale_to is not None:
            w, h = self.downscale_to
            if w <= 0 or h <= 0:
                raise SchemaError("downscale_to must be positive")
            if abs(w * arh - h * arw) > max(arw, arh):
                raise SchemaError(f"downscale_to {w}x{h} does not honor aspect ratio")

    def tolerance(self, key: str) -> float:
        return self.tolerances.get(key, DEFAULT_TOLERANCES[key])

    def weight(self, key: str) -> float:
        return self.weights.get(key, 1.0)

    @property
    def aspect(self) -> float:
        """Width over height."""
        return self.aspect_ratio[0] / self.aspect_ratio[1]

    def reduced_aspect(self) -> tuple[int, int]:
        g = math.gcd(*self.aspect_ratio)
        return self.aspect_ratio[0] // g, self.aspect_ratio[1] // g

    def to_dict(self) -> dict:
        out: dict = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = list(value)
            elif isinstance(value, dict):
                value = dict(value)
            out[f.name] = value
        return out

    @staticmethod
    def from_dict(raw: dict) -> "GenerationConfig":
        known = {f.name: f for f in fields(GenerationConfig)}
        kwargs: dict = {}
        for key, value in raw.items():
            if key not in known:
                raise SchemaError(f"unknown config field '{key}'")
            if key in ("aspect_ratio", "min_res", "max_res"):
                value = tuple(int(v) for v in value)
            elif key in ("scale_target", "downscale_to") and value is not None:
                value = tuple(float(v) for v in value) if key == "scale_target" \
                    else tuple(int(v) for v in value)
            kwargs[key] = value
        return GenerationConfig(**kwargs)

    @staticmethod
    def from_json(text: str) -> "GenerationConfig":
        raw = json.loads(text)
        if not isinstance(raw, dict):
            raise SchemaError("config must be a JSON object")
        return GenerationConfig.from_dict(raw)
