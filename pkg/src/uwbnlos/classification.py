"""First-path power classification and campaign calibration.

Power above ``los_floor`` is LOS, above ``nlos_floor`` NLOS, anything else
SNLOS. Both comparisons are strict, so a reading exactly on a floor falls
into the worse class.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .channel import NlosStats
from .geometry import AnchorMap, Point2, PropagationClass, geometric_toa

GRID_STEP_DB = 0.1
GRID_MARGIN_DB = 1.0


@dataclass(frozen=True)
class Thresholds:
    los_floor: float = -78.5
    nlos_floor: float = -85.0

    def __post_init__(self):
        if not self.los_floor > self.nlos_floor:
            raise ValueError(
                f"los_floor ({self.los_floor}) must exceed nlos_floor ({self.nlos_floor})"
            )

    def to_dict(self) -> dict:
        return {"los_floor": self.los_floor, "nlos_floor": self.nlos_floor}


DEFAULT_THRESHOLDS = Thresholds()


@dataclass(frozen=True)
class LabeledPowerSample:
    first_path_power: float
    true_class: PropagationClass

    def __post_init__(self):
        if not math.isfinite(self.first_path_power):
            raise ValueError("non-finite power")


@dataclass(frozen=True)
class RangingSample:
    tag_position: Point2
    anchor_id: int
    toa_measured: float
    true_class: PropagationClass

    def __post_init__(self):
        if not math.isfinite(self.toa_measured):
            raise ValueError("non-finite toa")


def classify_power(p: float, t: Thresholds = DEFAULT_THRESHOLDS) -> PropagationClass:
    if p > t.los_floor:
        return PropagationClass.LOS
    if p > t.nlos_floor:
        return PropagationClass.NLOS
    return PropagationClass.SNLOS


def threshold_grid(powers: np.ndarray) -> np.ndarray:
    """Candidate thresholds: 0.1 dB steps covering the samples plus 1 dB margin.

    Grid points are multiples of the step so they do not depend on float
    accumulation.
    """
    k0 = math.floor(round((powers.min() - GRID_MARGIN_DB) / GRID_STEP_DB, 6))
    k1 = math.ceil(round((powers.max() + GRID_MARGIN_DB) / GRID_STEP_DB, 6))
    return np.arange(k0, k1 + 1) / round(1 / GRID_STEP_DB)


def _split(samples: Sequence[LabeledPowerSample]) -> tuple[np.ndarray, np.ndarray]:
    powers = np.array([s.first_path_power for s in samples], dtype=float)
    labels = np.array([int(s.true_class) for s in samples], dtype=int)
    return powers, labels


def calibrate_thresholds(
    samples: Sequence[LabeledPowerSample],
) -> tuple[Thresholds, float]:
    """Pick the threshold pair with the highest classification success rate.

    Every pair ``los_floor > nlos_floor`` on the grid is scored. Ties go to the
    pair with the best worst-class recall, then to the smallest ``los_floor``,
    then the smallest ``nlos_floor``.
    """
    if not samples:
        raise ValueError("no samples")
    powers, labels = _split(samples)
    n_cls = np.bincount(labels, minlength=3)
    if np.any(n_cls == 0):
        missing = [PropagationClass(c).name for c in range(3) if n_cls[c] == 0]
        raise ValueError(f"calibration set lacks classes: {', '.join(missing)}")

    grid = threshold_grid(powers)
    # above[c][g] = samples of class c with power > grid[g]
    above = []
    for c in range(3):
        pc = np.sort(powers[labels == c])
        above.append(len(pc) - np.searchsorted(pc, grid, side="right"))
    los_ok = above[0][:, None]  # indexed by los_floor (rows)
    nlos_ok = above[1][None, :] - above[1][:, None]
    snlos_ok = (n_cls[2] - above[2])[None, :]  # indexed by nlos_floor (cols)
    correct = los_ok + nlos_ok + snlos_ok
    valid = grid[:, None] > grid[None, :]
    correct = np.where(valid, correct, -1)

    best = correct.max()
    recall = np.minimum(
        np.minimum(los_ok / n_cls[0], nlos_ok / n_cls[1]), snlos_ok / n_cls[2]
    )
    cand = correct == best
    best_recall = recall[cand].max()
    # recall of tied pairs can differ only in the last ulp
    cand &= recall >= best_recall - 1e-12
    i, j = np.argwhere(cand)[0]  # row-major: smallest los_floor, then nlos_floor
    return Thresholds(float(grid[i]), float(grid[j])), float(best) / len(samples)


def success_rate(samples: Sequence[LabeledPowerSample], t: Thresholds) -> float:
    hits = sum(classify_power(s.first_path_power, t) == s.true_class for s in samples)
    return hits / len(samples)


def estimate_bias_stats(
    samples: Iterable[RangingSample],
    anchors: AnchorMap,
    toa_noise_std: float = 0.2,
) -> NlosStats:
    """Per-class sample mean and (n-1) standard deviation of TOA bias.

    ``toa_noise_std`` is an assumed figure carried into the result, not
    estimated. LOS samples are ignored because LOS bias is zero by definition.
    """
    biases: dict[PropagationClass, list[float]] = {c: [] for c in PropagationClass}
    for s in samples:
        try:
            anchor = anchors[s.anchor_id]
        except KeyError:
            raise ValueError(f"unknown anchor id {s.anchor_id}") from None
        biases[s.true_class].append(s.toa_measured - geometric_toa(s.tag_position, anchor))
    kw = {}
    for cls in (PropagationClass.NLOS, PropagationClass.SNLOS):
        b = np.asarray(biases[cls])
        if b.size < 2:
            raise ValueError(f"need at least 2 {cls.name} samples, got {b.size}")
        key = cls.name.lower()
        kw[f"{key}_mean"] = float(b.mean())
        kw[f"{key}_std"] = float(b.std(ddof=1))
    return NlosStats(toa_noise_std=toa_noise_std, **kw)


# Delimited-text sample files. A leading header row is optional.


def _rows(path: str | Path) -> list[list[str]]:
    with open(path, newline="") as f:
        rows = [r for r in csv.reader(f) if r and not r[0].lstrip().startswith("#")]
    if rows:
        try:
            float(rows[0][0])
        except ValueError:
            rows = rows[1:]
    return rows


def read_power_samples(path: str | Path) -> list[LabeledPowerSample]:
    out = []
    for lineno, r in enumerate(_rows(path), 1):
        if len(r) != 2:
            raise ValueError(f"{path}: row {lineno}: expected 'power,class'")
        out.append(LabeledPowerSample(float(r[0]), PropagationClass.parse(r[1])))
    return out


def read_ranging_samples(path: str | Path) -> list[RangingSample]:
    out = []
    for lineno, r in enumerate(_rows(path), 1):
        if len(r) != 5:
            raise ValueError(f"{path}: row {lineno}: expected 'tag_x,tag_y,anchor_id,toa,class'")
        out.append(
            RangingSample(
                Point2(float(r[0]), float(r[1])),
                int(r[2]),
                float(r[3]),
                PropagationClass.parse(r[4]),
            )
        )
    return out


def write_power_samples(path: str | Path, samples: Iterable[LabeledPowerSample]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["power_dbm", "class"])
        for s in samples:
            w.writerow([repr(s.first_path_power), s.true_class.name])


def write_ranging_samples(path: str | Path, samples: Iterable[RangingSample]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["tag_x", "tag_y", "anchor_id", "toa_ns", "class"])
        for s in samples:
            w.writerow(
                [
                    repr(s.tag_position.x),
                    repr(s.tag_position.y),
                    s.anchor_id,
                    repr(s.toa_measured),
                    s.true_class.name,
                ]
            )
