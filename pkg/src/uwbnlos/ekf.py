"""Extended Kalman filter for 2-D TDOA tracking.

State is ``[px, py, vx, vy]`` in meters and m/s with a constant-velocity
transition and discrete white noise acceleration (DWNA) process noise.
Measurements are TDOAs in nanoseconds; the conversion through the speed of
light happens inside the measurement function and its Jacobian so that the
covariance from :mod:`uwbnlos.mitigation` is used as is.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .geometry import C_M_PER_NS, AnchorMap, Floorplan
from .mitigation import TdoaVector

MIN_ANCHOR_DISTANCE = 1e-9


class SingularGeometryError(ValueError):
    """The linearization point coincides with an anchor."""


class InnovationSingularError(LinAlgError):
    """``H P H^T + R`` could not be factorized."""


@dataclass(frozen=True)
class EkfState:
    x: np.ndarray
    P: np.ndarray

    @property
    def position(self) -> np.ndarray:
        return self.x[:2]

    def is_valid(self, tol: float = 1e-9) -> bool:
        """Symmetric within ``tol`` with no eigenvalue below ``-tol``."""
        if not np.allclose(self.P, self.P.T, atol=tol, rtol=0):
            return False
        return bool(np.linalg.eigvalsh(self.P).min() >= -tol)


@dataclass(frozen=True)
class EkfModel:
    anchors: AnchorMap
    reference_anchor_id: int | None = None
    dt: float = 0.1
    sigma_a: float = 0.5
    joseph: bool = False
    _positions: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.sigma_a < 0:
            raise ValueError("sigma_a must be non-negative")
        if len(self.anchors) < 3:
            raise ValueError("need at least 3 anchors")
        if self.reference_anchor_id is None:
            object.__setattr__(self, "reference_anchor_id", min(self.anchors))
        elif self.reference_anchor_id not in self.anchors:
            raise ValueError(f"unknown reference anchor {self.reference_anchor_id}")
        object.__setattr__(
            self,
            "_positions",
            {aid: np.array([a.position.x, a.position.y]) for aid, a in self.anchors.items()},
        )

    def anchor_ids(self) -> tuple[int, ...]:
        return tuple(a for a in sorted(self.anchors) if a != self.reference_anchor_id)

    def position_of(self, anchor_id: int) -> np.ndarray:
        return self._positions[anchor_id]


def make_f(dt: float) -> np.ndarray:
    if not dt > 0:
        raise ValueError("dt must be positive")
    F = np.eye(4)
    F[0, 2] = F[1, 3] = dt
    return F


def make_q(dt: float, sigma_a: float) -> np.ndarray:
    if not dt > 0:
        raise ValueError("dt must be positive")
    if sigma_a < 0:
        raise ValueError("sigma_a must be non-negative")
    q = sigma_a**2
    Q = np.zeros((4, 4))
    for i in (0, 1):
        Q[i, i] = q * dt**4 / 4
        Q[i, i + 2] = Q[i + 2, i] = q * dt**3 / 2
        Q[i + 2, i + 2] = q * dt**2
    return Q


def _sym(P: np.ndarray) -> np.ndarray:
    return 0.5 * (P + P.T)


def init_state(plan: Floorplan, velocity_std: float = 1.0) -> EkfState:
    """Tag at rest in the middle of the floorplan with a wide prior."""
    c = plan.center
    sp = 0.5 * plan.diagonal
    return EkfState(
        np.array([c.x, c.y, 0.0, 0.0]),
        np.diag([sp**2, sp**2, velocity_std**2, velocity_std**2]),
    )


def predict(s: EkfState, m: EkfModel) -> EkfState:
    F = make_f(m.dt)
    return EkfState(F @ s.x, _sym(F @ s.P @ F.T + make_q(m.dt, m.sigma_a)))


def _ids(m: EkfModel, reference_id, anchor_ids):
    ref = m.reference_anchor_id if reference_id is None else reference_id
    ids = m.anchor_ids() if anchor_ids is None else tuple(anchor_ids)
    if ref in ids:
        raise ValueError("reference anchor listed among TDOA entries")
    return ref, ids


def measurement_function(
    position: Sequence[float],
    m: EkfModel,
    reference_id: int | None = None,
    anchor_ids: Sequence[int] | None = None,
) -> np.ndarray:
    """Predicted TDOAs (ns) at ``position`` for the given anchor ordering."""
    ref, ids = _ids(m, reference_id, anchor_ids)
    p = np.asarray(position, dtype=float)[:2]
    d_ref = np.linalg.norm(p - m.position_of(ref))
    return np.array([np.linalg.norm(p - m.position_of(a)) - d_ref for a in ids]) / C_M_PER_NS


def jacobian(
    position: Sequence[float],
    m: EkfModel,
    reference_id: int | None = None,
    anchor_ids: Sequence[int] | None = None,
) -> np.ndarray:
    ref, ids = _ids(m, reference_id, anchor_ids)
    p = np.asarray(position, dtype=float)[:2]

    def unit(aid):
        d = p - m.position_of(aid)
        n = np.linalg.norm(d)
        if n <= MIN_ANCHOR_DISTANCE:
            raise SingularGeometryError(f"position {p} coincides with anchor {aid}")
        return d / n

    u_ref = unit(ref)
    H = np.zeros((len(ids), 4))
    for row, a in enumerate(ids):
        H[row, :2] = (unit(a) - u_ref) / C_M_PER_NS
    return H


def update(s: EkfState, z: TdoaVector, m: EkfModel) -> EkfState:
    """Measurement update with the TDOA vector ``z``.

    Raises :class:`InnovationSingularError` if the innovation covariance is
    not positive definite and :class:`SingularGeometryError` if the prior
    position sits on an anchor.
    """
    if len(z) < 2:
        raise ValueError("need at least 2 TDOA entries")
    H = jacobian(s.x, m, z.reference_anchor_id, z.anchor_ids)
    innovation = z.values - measurement_function(s.x, m, z.reference_anchor_id, z.anchor_ids)
    S = H @ s.P @ H.T + z.R
    try:
        cf = cho_factor(S)
    except LinAlgError as exc:
        raise InnovationSingularError(f"innovation covariance not positive definite: {exc}")
    K = cho_solve(cf, H @ s.P).T
    x = s.x + K @ innovation
    IKH = np.eye(4) - K @ H
    if m.joseph:
        P = IKH @ s.P @ IKH.T + K @ z.R @ K.T
    else:
        P = IKH @ s.P
    return EkfState(x, _sym(P))


def step(s: EkfState, z: TdoaVector, m: EkfModel) -> EkfState:
    return update(predict(s, m), z, m)
