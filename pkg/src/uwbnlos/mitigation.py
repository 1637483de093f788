"""NLOS bias correction, variance inflation and TDOA assembly.

Each anchor's TOA is classified from its first-path power, the class mean
bias is subtracted and its variance becomes ``toa_noise_std**2 +
bias_std(class)**2``. TDOAs are then formed against a single reference
anchor, so every entry shares the reference noise and the covariance ``R``
has the reference variance on all off-diagonal entries.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .channel import NlosStats, ToaMeasurement
from .classification import DEFAULT_THRESHOLDS, Thresholds, classify_power
from .geometry import PropagationClass

REFERENCE_POLICIES = ("lowest", "best-class")


@dataclass(frozen=True)
class CorrectedToa:
    anchor_id: int
    toa_corrected: float
    variance: float
    cls: PropagationClass = PropagationClass.LOS


@dataclass(frozen=True)
class TdoaVector:
    reference_anchor_id: int
    anchor_ids: tuple[int, ...]
    values: np.ndarray  # ns
    R: np.ndarray  # ns^2

    def __post_init__(self):
        n = len(self.anchor_ids)
        if self.reference_anchor_id in self.anchor_ids:
            raise ValueError("reference anchor must not appear among the entries")
        if self.values.shape != (n,) or self.R.shape != (n, n):
            raise ValueError("values/R shapes do not match the entry count")

    def __len__(self):
        return len(self.anchor_ids)

    def permuted(self, order: Sequence[int]) -> "TdoaVector":
        order = list(order)
        return TdoaVector(
            self.reference_anchor_id,
            tuple(self.anchor_ids[i] for i in order),
            self.values[order],
            self.R[np.ix_(order, order)],
        )

    def to_dict(self) -> dict:
        return {
            "reference": self.reference_anchor_id,
            "anchors": list(self.anchor_ids),
            "values": [float(v) for v in self.values],
            "R": [[float(v) for v in row] for row in self.R],
        }


def correct_toa(
    m: ToaMeasurement,
    t: Thresholds = DEFAULT_THRESHOLDS,
    stats: NlosStats = NlosStats(),
) -> CorrectedToa:
    cls = classify_power(m.first_path_power, t)
    return CorrectedToa(
        m.anchor_id,
        m.toa_measured - stats.bias_mean(cls),
        stats.toa_noise_std**2 + stats.bias_std(cls) ** 2,
        cls,
    )


def uncorrected_toa(m: ToaMeasurement, stats: NlosStats = NlosStats()) -> CorrectedToa:
    """Baseline path: raw TOA, every link treated as LOS."""
    return CorrectedToa(m.anchor_id, m.toa_measured, stats.toa_noise_std**2)


def select_reference(corrected: Sequence[CorrectedToa], policy: str = "lowest") -> int:
    """Reference anchor id under ``policy``.

    ``lowest`` takes the smallest id. ``best-class`` takes the smallest
    variance (the least obstructed link), ties broken by id.
    """
    if not corrected:
        raise ValueError("no measurements")
    if policy == "lowest":
        return min(c.anchor_id for c in corrected)
    if policy == "best-class":
        return min(corrected, key=lambda c: (c.variance, c.anchor_id)).anchor_id
    raise ValueError(f"unknown reference policy {policy!r}; choose from {REFERENCE_POLICIES}")


def build_tdoa_vector(
    corrected: Sequence[CorrectedToa],
    reference_anchor_id: int,
    diagonal: bool = False,
) -> TdoaVector:
    """Star TDOAs ``toa_i - toa_ref`` with their joint covariance.

    With ``diagonal=True`` the shared-reference cross terms are dropped.
    """
    by_id = {}
    for c in corrected:
        if c.anchor_id in by_id:
            raise ValueError(f"duplicate anchor id {c.anchor_id}")
        by_id[c.anchor_id] = c
    if reference_anchor_id not in by_id:
        raise ValueError(f"reference anchor {reference_anchor_id} not among the measurements")
    ref = by_id[reference_anchor_id]
    others = [by_id[a] for a in sorted(by_id) if a != reference_anchor_id]
    if len(others) < 2:
        raise ValueError(f"need at least 3 TOAs to form 2 TDOAs, got {len(by_id)}")

    values = np.array([c.toa_corrected - ref.toa_corrected for c in others])
    var = np.array([c.variance for c in others])
    if diagonal:
        R = np.diag(var + ref.variance)
    else:
        R = np.full((len(others), len(others)), ref.variance)
        R[np.diag_indices_from(R)] += var
    return TdoaVector(reference_anchor_id, tuple(c.anchor_id for c in others), values, R)


def mitigate_epoch(
    measurements: Sequence[ToaMeasurement],
    stats: NlosStats,
    t: Thresholds = DEFAULT_THRESHOLDS,
    *,
    enabled: bool = True,
    diagonal: bool = False,
    reference: str = "lowest",
    reference_anchor_id: int | None = None,
) -> TdoaVector:
    """Full per-epoch pipeline from raw readings to a TDOA vector.

    ``enabled=False`` is the unmitigated baseline. A fixed
    ``reference_anchor_id`` overrides ``reference``.
    """
    if enabled:
        corrected = [correct_toa(m, t, stats) for m in measurements]
    else:
        corrected = [uncorrected_toa(m, stats) for m in measurements]
    if reference_anchor_id is None:
        reference_anchor_id = select_reference(corrected, reference)
    return build_tdoa_vector(corrected, reference_anchor_id, diagonal=diagonal)
