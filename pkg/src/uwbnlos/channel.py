"""Synthetic UWB channel: first-path power and biased TOA readings.

A measured arrival time is modeled as

    toa_measured = geometric_toa + n_toa + bias_mean(class) + n_bias

with zero-mean Gaussian ``n_toa`` (std ``toa_noise_std``) and ``n_bias``
(std ``bias_std(class)``). Realized biases may be negative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import (
    AnchorMap,
    Floorplan,
    Point2,
    PropagationClass,
    classify_link_geometric,
    geometric_toa,
    Anchor,
)


@dataclass(frozen=True)
class NlosStats:
    """Per-class NLOS bias statistics (ns). LOS links carry no bias."""

    nlos_mean: float = 0.49
    nlos_std: float = 1.39
    snlos_mean: float = 1.92
    snlos_std: float = 2.02
    toa_noise_std: float = 0.2

    def __post_init__(self):
        for name in ("nlos_mean", "nlos_std", "snlos_mean", "snlos_std", "toa_noise_std"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.nlos_std < 0 or self.snlos_std < 0:
            raise ValueError("bias standard deviations must be non-negative")
        if self.toa_noise_std < 0:
            raise ValueError("toa_noise_std must be non-negative")

    def bias_mean(self, cls: PropagationClass) -> float:
        return (0.0, self.nlos_mean, self.snlos_mean)[cls]

    def bias_std(self, cls: PropagationClass) -> float:
        return (0.0, self.nlos_std, self.snlos_std)[cls]

    def to_dict(self) -> dict:
        return {
            "toa_noise_std": self.toa_noise_std,
            "nlos": {"mean": self.nlos_mean, "std": self.nlos_std},
            "snlos": {"mean": self.snlos_mean, "std": self.snlos_std},
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "NlosStats":
        kw = {}
        if "toa_noise_std" in doc:
            kw["toa_noise_std"] = float(doc["toa_noise_std"])
        for key in ("nlos", "snlos"):
            sub = doc.get(key) or {}
            if "mean" in sub:
                kw[f"{key}_mean"] = float(sub["mean"])
            if "std" in sub:
                kw[f"{key}_std"] = float(sub["std"])
        return cls(**kw)


DEFAULT_NLOS_STATS = NlosStats()


@dataclass(frozen=True)
class PowerModel:
    """Class-conditional Gaussian first-path power (dBm mean, dB std)."""

    los_mean: float = -75.0
    nlos_mean: float = -81.75
    snlos_mean: float = -88.0
    los_std: float = 1.5
    nlos_std: float = 1.5
    snlos_std: float = 1.5

    def __post_init__(self):
        if not self.los_mean > self.nlos_mean > self.snlos_mean:
            raise ValueError("power means must decrease LOS > NLOS > SNLOS")
        if min(self.los_std, self.nlos_std, self.snlos_std) < 0:
            raise ValueError("power standard deviations must be non-negative")

    def mean(self, cls: PropagationClass) -> float:
        return (self.los_mean, self.nlos_mean, self.snlos_mean)[cls]

    def std(self, cls: PropagationClass) -> float:
        return (self.los_std, self.nlos_std, self.snlos_std)[cls]

    def to_dict(self) -> dict:
        return {
            c.name.lower(): {"mean": self.mean(c), "std": self.std(c)} for c in PropagationClass
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PowerModel":
        kw = {}
        for key in ("los", "nlos", "snlos"):
            sub = doc.get(key) or {}
            if "mean" in sub:
                kw[f"{key}_mean"] = float(sub["mean"])
            if "std" in sub:
                kw[f"{key}_std"] = float(sub["std"])
        return cls(**kw)


@dataclass(frozen=True)
class ToaMeasurement:
    anchor_id: int
    toa_measured: float
    first_path_power: float


def synthesize_toa(
    tag: Point2,
    anchor: Anchor,
    cls: PropagationClass,
    stats: NlosStats,
    rng: np.random.Generator,
) -> float:
    # Both noise terms are always drawn so the stream layout does not depend on class.
    n_toa = rng.normal(0.0, stats.toa_noise_std)
    n_bias = rng.normal(0.0, stats.bias_std(cls))
    return geometric_toa(tag, anchor) + n_toa + stats.bias_mean(cls) + n_bias


def synthesize_first_path_power(
    cls: PropagationClass, model: PowerModel, rng: np.random.Generator
) -> float:
    return model.mean(cls) + rng.normal(0.0, model.std(cls))


def simulate_epoch(
    tag: Point2,
    anchors: AnchorMap,
    plan: Floorplan,
    stats: NlosStats,
    model: PowerModel,
    rng: np.random.Generator,
    classes: dict[int, PropagationClass] | None = None,
) -> tuple[list[ToaMeasurement], dict[int, PropagationClass]]:
    """One reading per anchor, in anchor-id order.

    Returns the measurements and the ground-truth class of every link.
    ``classes`` may be passed to skip the wall-crossing computation when the
    tag is static; it must equal what the floorplan would give.
    """
    if len(anchors) < 3:
        raise ValueError(f"need at least 3 anchors, got {len(anchors)}")
    if classes is None:
        classes = {
            aid: classify_link_geometric(tag, a, plan) for aid, a in sorted(anchors.items())
        }
    out = []
    for aid, a in sorted(anchors.items()):
        cls = classes[aid]
        toa = synthesize_toa(tag, a, cls, stats, rng)
        power = synthesize_first_path_power(cls, model, rng)
        out.append(ToaMeasurement(aid, toa, power))
    return out, dict(classes)
