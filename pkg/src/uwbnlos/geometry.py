"""Planar geometry: points, anchors, floorplans and wall-crossing tests.

Units are fixed across the package: meters for space, nanoseconds for time,
dBm for power.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import yaml

#: Speed of light in meters per nanosecond.
C_M_PER_NS = 0.299792458


class PropagationClass(enum.IntEnum):
    """Propagation condition of a tag-anchor link, ordered by severity."""

    LOS = 0
    NLOS = 1
    SNLOS = 2

    @classmethod
    def parse(cls, value: str | int | "PropagationClass") -> "PropagationClass":
        if isinstance(value, str):
            try:
                return cls[value.strip().upper()]
            except KeyError:
                raise ValueError(f"unknown propagation class {value!r}") from None
        return cls(int(value))


@dataclass(frozen=True)
class Point2:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite point ({self.x}, {self.y})")

    def __iter__(self):
        yield self.x
        yield self.y


@dataclass(frozen=True)
class Anchor:
    id: int
    position: Point2


AnchorMap = Mapping[int, Anchor]


def make_anchor_map(anchors: Iterable[Anchor]) -> dict[int, Anchor]:
    """Index anchors by id, rejecting duplicates. Iteration order is by id."""
    out: dict[int, Anchor] = {}
    for a in sorted(anchors, key=lambda a: a.id):
        if a.id in out:
            raise ValueError(f"duplicate anchor id {a.id}")
        out[a.id] = a
    return out


Segment = tuple[Point2, Point2]


@dataclass(frozen=True)
class Floorplan:
    """Wall segments inside an axis-aligned bounding box ``(x0, y0, x1, y1)``."""

    walls: tuple[Segment, ...] = ()
    bounds: tuple[float, float, float, float] = (0.0, 0.0, 1.0, 1.0)

    def __post_init__(self):
        x0, y0, x1, y1 = self.bounds
        if not all(math.isfinite(v) for v in self.bounds) or x1 <= x0 or y1 <= y0:
            raise ValueError(f"degenerate bounds {self.bounds}")
        object.__setattr__(self, "walls", tuple((a, b) for a, b in self.walls))
        for a, b in self.walls:
            for p in (a, b):
                if not self.contains(p):
                    raise ValueError(f"wall endpoint {p} outside bounds {self.bounds}")

    def contains(self, p: Point2) -> bool:
        x0, y0, x1, y1 = self.bounds
        return x0 <= p.x <= x1 and y0 <= p.y <= y1

    @property
    def center(self) -> Point2:
        x0, y0, x1, y1 = self.bounds
        return Point2(0.5 * (x0 + x1), 0.5 * (y0 + y1))

    @property
    def diagonal(self) -> float:
        x0, y0, x1, y1 = self.bounds
        return math.hypot(x1 - x0, y1 - y0)


@dataclass(frozen=True)
class Site:
    """A floorplan together with its anchor installation."""

    floorplan: Floorplan
    anchors: dict[int, Anchor] = field(default_factory=dict)


def distance(p: Point2, q: Point2) -> float:
    return math.hypot(p.x - q.x, p.y - q.y)


def geometric_toa(tag: Point2, anchor: Anchor) -> float:
    """Line-of-sight time of flight from ``tag`` to ``anchor`` in ns."""
    return distance(tag, anchor.position) / C_M_PER_NS


def _orient(a: Point2, b: Point2, c: Point2) -> float:
    return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)


def _on_box(a: Point2, b: Point2, p: Point2) -> bool:
    return min(a.x, b.x) <= p.x <= max(a.x, b.x) and min(a.y, b.y) <= p.y <= max(a.y, b.y)


def segments_intersect(p1: Point2, p2: Point2, q1: Point2, q2: Point2) -> bool:
    """Closed-segment intersection test.

    Touching at an endpoint and collinear overlap both count as intersecting.
    """
    d1 = _orient(q1, q2, p1)
    d2 = _orient(q1, q2, p2)
    d3 = _orient(p1, p2, q1)
    d4 = _orient(p1, p2, q2)
    if ((d1 > 0 and d2 < 0) or (d1 < 0 and d2 > 0)) and (
        (d3 > 0 and d4 < 0) or (d3 < 0 and d4 > 0)
    ):
        return True
    if d1 == 0 and _on_box(q1, q2, p1):
        return True
    if d2 == 0 and _on_box(q1, q2, p2):
        return True
    if d3 == 0 and _on_box(p1, p2, q1):
        return True
    if d4 == 0 and _on_box(p1, p2, q2):
        return True
    return False


def count_wall_crossings(a: Point2, b: Point2, plan: Floorplan) -> int:
    """Number of walls hit by the link ``a``-``b``.

    Each wall counts at most once; an endpoint resting on a wall counts.
    """
    return sum(1 for w0, w1 in plan.walls if segments_intersect(a, b, w0, w1))


def classify_link_geometric(tag: Point2, anchor: Anchor, plan: Floorplan) -> PropagationClass:
    n = count_wall_crossings(tag, anchor.position, plan)
    if n == 0:
        return PropagationClass.LOS
    if n == 1:
        return PropagationClass.NLOS
    return PropagationClass.SNLOS


def _as_point(v: Sequence[float]) -> Point2:
    if len(v) != 2:
        raise ValueError(f"expected [x, y], got {v!r}")
    return Point2(float(v[0]), float(v[1]))


def site_from_dict(doc: Mapping) -> Site:
    """Build a :class:`Site` from ``{bounds, walls, anchors}`` mappings."""
    try:
        bounds = tuple(float(v) for v in doc["bounds"])
    except KeyError:
        raise ValueError("site description needs 'bounds'") from None
    if len(bounds) != 4:
        raise ValueError(f"bounds must be [x0, y0, x1, y1], got {doc['bounds']!r}")
    walls = []
    for w in doc.get("walls") or []:
        if len(w) != 4:
            raise ValueError(f"wall must be [x1, y1, x2, y2], got {w!r}")
        walls.append((_as_point(w[:2]), _as_point(w[2:])))
    plan = Floorplan(walls=tuple(walls), bounds=bounds)
    anchors = make_anchor_map(
        Anchor(int(a["id"]), Point2(float(a["x"]), float(a["y"])))
        for a in doc.get("anchors") or []
    )
    return Site(plan, anchors)


def site_to_dict(site: Site) -> dict:
    return {
        "bounds": list(site.floorplan.bounds),
        "walls": [[a.x, a.y, b.x, b.y] for a, b in site.floorplan.walls],
        "anchors": [
            {"id": a.id, "x": a.position.x, "y": a.position.y} for a in site.anchors.values()
        ],
    }


def load_site(path: str | Path) -> Site:
    """Read a floorplan + anchor file (YAML; JSON is accepted as a subset)."""
    with open(path) as f:
        doc = yaml.safe_load(f)
    if not isinstance(doc, Mapping):
        raise ValueError(f"{path}: expected a mapping at top level")
    return site_from_dict(doc)
