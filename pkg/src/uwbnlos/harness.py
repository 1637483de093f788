"""Static-tag experiment: EKF with and without NLOS mitigation.

For each test point and replication, the tag sits still for
``epochs_per_point`` epochs. Each epoch draws one set of readings, and every
requested mode filters that same set. So the modes are compared on paired
realizations.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import yaml

from . import ekf
from .channel import NlosStats, PowerModel, simulate_epoch
from .classification import LabeledPowerSample, RangingSample, Thresholds
from .geometry import (
    Point2,
    PropagationClass,
    Site,
    classify_link_geometric,
    load_site,
    site_from_dict,
)
from .mitigation import REFERENCE_POLICIES, mitigate_epoch

MODES = ("off", "on", "on-diagonal-R")
CONVERGED_FRACTION = 0.2
DIVERGENCE_FACTOR = 10.0
EQUAL_TOL_M = 1e-3


@dataclass(frozen=True)
class ScenarioConfig:
    site: Site
    test_points: tuple[Point2, ...]
    epochs_per_point: int = 150
    seed: int = 0
    replications: int = 1
    nlos_stats: NlosStats = NlosStats()
    # what the simulator draws from; defaults to nlos_stats
    channel_stats: NlosStats | None = None
    power_model: PowerModel = PowerModel()
    thresholds: Thresholds = Thresholds()
    dt: float = 0.1
    sigma_a: float = 0.5
    velocity_std: float = 1.0
    joseph: bool = False
    modes: tuple[str, ...] = ("off", "on")
    reference: str = "lowest"
    reference_anchor: int | None = None
    floorplan: str | None = None

    def __post_init__(self):
        if self.epochs_per_point < 1:
            raise ValueError("epochs_per_point must be >= 1")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if not self.test_points:
            raise ValueError("no test points")
        for p in self.test_points:
            if not self.site.floorplan.contains(p):
                raise ValueError(f"test point {p} outside floorplan bounds")
        if len(self.site.anchors) < 3:
            raise ValueError("need at least 3 anchors")
        bad = [m for m in self.modes if m not in MODES]
        if bad or not self.modes:
            raise ValueError(f"modes must be drawn from {MODES}, got {list(self.modes)}")
        if self.reference not in REFERENCE_POLICIES:
            raise ValueError(f"reference must be one of {REFERENCE_POLICIES}")
        if self.reference_anchor is not None and self.reference_anchor not in self.site.anchors:
            raise ValueError(f"unknown reference anchor {self.reference_anchor}")
        if self.nlos_stats.toa_noise_std <= 0:
            raise ValueError("assumed toa_noise_std must be positive")
        # validates dt / sigma_a
        self.ekf_model()

    @property
    def true_stats(self) -> NlosStats:
        return self.channel_stats if self.channel_stats is not None else self.nlos_stats

    def ekf_model(self) -> ekf.EkfModel:
        return ekf.EkfModel(
            self.site.anchors,
            reference_anchor_id=self.reference_anchor,
            dt=self.dt,
            sigma_a=self.sigma_a,
            joseph=self.joseph,
        )


def _mode_name(v) -> str:
    # YAML 1.1 reads bare on/off as booleans
    if isinstance(v, bool):
        return "on" if v else "off"
    return str(v)


def _stats_or_none(doc):
    return None if doc is None else NlosStats.from_dict(doc)


def config_from_dict(doc: Mapping, base_dir: Path | None = None) -> ScenarioConfig:
    """Build a config from a parsed document.

    ``floorplan`` is a path (relative to ``base_dir``) or an inline site
    mapping. ``test_points`` is a list of ``[x, y]``.
    """
    doc = dict(doc)
    known = {
        "floorplan", "test_points", "epochs_per_point", "seed", "replications",
        "nlos_stats", "channel_stats", "power_model", "thresholds", "ekf",
        "modes", "reference", "reference_anchor",
    }
    unknown = set(doc) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    fp = doc.get("floorplan")
    floorplan_ref = None
    if fp is None:
        raise ValueError("config needs 'floorplan'")
    if isinstance(fp, Mapping):
        site = site_from_dict(fp)
    else:
        path = Path(fp)
        if not path.is_absolute() and base_dir is not None:
            path = base_dir / path
        site = load_site(path)
        floorplan_ref = str(fp)
    ekf_doc = doc.get("ekf") or {}
    thr = doc.get("thresholds") or {}
    return ScenarioConfig(
        site=site,
        floorplan=floorplan_ref,
        test_points=tuple(Point2(float(x), float(y)) for x, y in doc.get("test_points") or []),
        epochs_per_point=int(doc.get("epochs_per_point", 150)),
        seed=int(doc.get("seed", 0)),
        replications=int(doc.get("replications", 1)),
        nlos_stats=NlosStats.from_dict(doc.get("nlos_stats") or {}),
        channel_stats=_stats_or_none(doc.get("channel_stats")),
        power_model=PowerModel.from_dict(doc.get("power_model") or {}),
        thresholds=Thresholds(
            float(thr.get("los_floor", -78.5)), float(thr.get("nlos_floor", -85.0))
        ),
        dt=float(ekf_doc.get("dt", 0.1)),
        sigma_a=float(ekf_doc.get("sigma_a", 0.5)),
        velocity_std=float(ekf_doc.get("velocity_std", 1.0)),
        joseph=bool(ekf_doc.get("joseph", False)),
        modes=tuple(_mode_name(m) for m in doc.get("modes") or ("off", "on")),
        reference=str(doc.get("reference", "lowest")),
        reference_anchor=(
            None if doc.get("reference_anchor") is None else int(doc["reference_anchor"])
        ),
    )


def load_config(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    with open(path) as f:
        doc = yaml.safe_load(f)
    if not isinstance(doc, Mapping):
        raise ValueError(f"{path}: expected a mapping at top level")
    return config_from_dict(doc, base_dir=path.parent)


def default_config(**overrides) -> ScenarioConfig:
    """The packaged 26-point apartment scenario."""
    data = resources.files("uwbnlos") / "data"
    with resources.as_file(data / "scenario.yaml") as p:
        cfg = load_config(p)
    return replace(cfg, **overrides) if overrides else cfg


# ---------------------------------------------------------------------------


@dataclass
class PointResult:
    index: int
    truth: Point2
    epoch_errors: np.ndarray  # (replications, epochs), m
    final_estimates: np.ndarray  # (replications, 2)
    diverged: int = 0

    @property
    def converged_errors(self) -> np.ndarray:
        n = self.epoch_errors.shape[1]
        tail = max(1, math.ceil(CONVERGED_FRACTION * n))
        return self.epoch_errors[:, -tail:].mean(axis=1)

    @property
    def converged_error(self) -> float:
        return float(self.converged_errors.mean())


@dataclass
class RunResult:
    modes: tuple[str, ...]
    points: dict[str, list[PointResult]] = field(default_factory=dict)

    def converged(self, mode: str) -> np.ndarray:
        return np.array([p.converged_error for p in self.points[mode]])

    def pooled_errors(self, mode: str) -> np.ndarray:
        """Converged-window per-epoch errors of every point and replication."""
        chunks = []
        for p in self.points[mode]:
            n = p.epoch_errors.shape[1]
            tail = max(1, math.ceil(CONVERGED_FRACTION * n))
            chunks.append(p.epoch_errors[:, -tail:].ravel())
        return np.concatenate(chunks)


@dataclass
class _UnitOutput:
    point: int
    rep: int
    errors: dict[str, np.ndarray]
    finals: dict[str, np.ndarray]
    diverged: dict[str, int]
    trace: list[dict]


def unit_rng(seed: int, point: int, rep: int) -> np.random.Generator:
    """Independent stream for one (point, replication) work unit."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(point, rep))))


def _run_unit(cfg: ScenarioConfig, point: int, rep: int, trace: bool) -> _UnitOutput:
    tag = cfg.test_points[point]
    plan = cfg.site.floorplan
    anchors = cfg.site.anchors
    model = cfg.ekf_model()
    rng = unit_rng(cfg.seed, point, rep)
    classes = {aid: classify_link_geometric(tag, a, plan) for aid, a in anchors.items()}
    limit = DIVERGENCE_FACTOR * plan.diagonal
    truth = np.array([tag.x, tag.y])

    states = {m: ekf.init_state(plan, cfg.velocity_std) for m in cfg.modes}
    errors = {m: np.empty(cfg.epochs_per_point) for m in cfg.modes}
    diverged = {m: 0 for m in cfg.modes}
    records = []
    for k in range(cfg.epochs_per_point):
        meas, _ = simulate_epoch(
            tag, anchors, plan, cfg.true_stats, cfg.power_model, rng, classes=classes
        )
        for mode in cfg.modes:
            z = mitigate_epoch(
                meas,
                cfg.nlos_stats,
                cfg.thresholds,
                enabled=mode != "off",
                diagonal=mode == "on-diagonal-R",
                reference=cfg.reference,
                reference_anchor_id=cfg.reference_anchor,
            )
            s = ekf.predict(states[mode], model)
            try:
                s = ekf.update(s, z, model)
            except (ekf.SingularGeometryError, ekf.InnovationSingularError):
                diverged[mode] += 1
            err = float(np.linalg.norm(s.position - truth))
            if not np.isfinite(err) or err > limit:
                diverged[mode] += 1
                s = ekf.init_state(plan, cfg.velocity_std)
                err = float(np.linalg.norm(s.position - truth))
            states[mode] = s
            errors[mode][k] = err
            if trace:
                records.append(
                    {
                        "point": point,
                        "replication": rep,
                        "epoch": k,
                        "mode": mode,
                        "estimate": [float(v) for v in s.position],
                        "error": err,
                        "tdoa": z.to_dict(),
                    }
                )
    finals = {m: states[m].position.copy() for m in cfg.modes}
    return _UnitOutput(point, rep, errors, finals, diverged, records)


def _run_unit_args(args):
    return _run_unit(*args)


def run_scenario(
    cfg: ScenarioConfig, trace: bool = False, workers: int = 1
) -> tuple[RunResult, list[dict]]:
    """Run every (point, replication) unit and gather per-mode results.

    Returns the result and, when ``trace`` is set, per-epoch trace records in
    (point, replication, epoch, mode) order.
    """
    units = [
        (cfg, i, r, trace) for i in range(len(cfg.test_points)) for r in range(cfg.replications)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(_run_unit_args, units, chunksize=4))
    else:
        outputs = [_run_unit(*u) for u in units]

    result = RunResult(tuple(cfg.modes))
    records: list[dict] = []
    by_point: dict[int, list[_UnitOutput]] = {}
    for o in outputs:
        by_point.setdefault(o.point, []).append(o)
        records.extend(o.trace)
    for mode in cfg.modes:
        pts = []
        for i, tag in enumerate(cfg.test_points):
            outs = sorted(by_point[i], key=lambda o: o.rep)
            pts.append(
                PointResult(
                    i,
                    tag,
                    np.stack([o.errors[mode] for o in outs]),
                    np.stack([o.finals[mode] for o in outs]),
                    sum(o.diverged[mode] for o in outs),
                )
            )
        result.points[mode] = pts
    return result, records


def empirical_cdf(errors: Iterable[float]) -> list[tuple[float, float]]:
    """Right-continuous empirical CDF at each distinct error value."""
    e = np.asarray(list(errors), dtype=float)
    if e.size == 0:
        raise ValueError("empty error list")
    u = np.unique(e)
    frac = np.searchsorted(np.sort(e), u, side="right") / e.size
    return [(float(a), float(b)) for a, b in zip(u, frac)]


def summarize(r: RunResult, baseline: str = "off") -> dict:
    """Per-mode error statistics plus a per-point comparison to ``baseline``.

    A point counts as equal when the converged errors differ by at most 1 mm.
    """
    out: dict = {"modes": {}, "comparison": {}}
    for mode in r.modes:
        conv = r.converged(mode)
        pooled = r.pooled_errors(mode)
        out["modes"][mode] = {
            "points": len(conv),
            "median_converged_error_m": float(np.median(conv)),
            "p90_converged_error_m": float(np.percentile(conv, 90)),
            "pooled_median_error_m": float(np.median(pooled)),
            "pooled_p90_error_m": float(np.percentile(pooled, 90)),
            "diverged": int(sum(p.diverged for p in r.points[mode])),
        }
    if baseline in r.modes:
        base = r.converged(baseline)
        for mode in r.modes:
            if mode == baseline:
                continue
            diff = r.converged(mode) - base
            out["comparison"][mode] = {
                "improved": int(np.sum(diff < -EQUAL_TOL_M)),
                "equal": int(np.sum(np.abs(diff) <= EQUAL_TOL_M)),
                "worse": int(np.sum(diff > EQUAL_TOL_M)),
                "max_worsening_m": float(max(diff.max(), 0.0)),
            }
    return out


def _fmt(v: float) -> str:
    return repr(float(v))


def write_cdf(path: Path, cdf: Sequence[tuple[float, float]]) -> None:
    with open(path, "w") as f:
        f.write("error_m,cdf\n")
        for e, p in cdf:
            f.write(f"{_fmt(e)},{_fmt(p)}\n")


def write_outputs(r: RunResult, out_dir: str | Path, records: Sequence[dict] = ()) -> dict:
    """Write ``cdf_<mode>.csv``, ``points.csv``, ``errors_<mode>.txt``,
    ``summary.json`` and, if records are given, ``trace.jsonl``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for mode in r.modes:
        pooled = r.pooled_errors(mode)
        write_cdf(out / f"cdf_{mode}.csv", empirical_cdf(pooled))
        with open(out / f"errors_{mode}.txt", "w") as f:
            f.writelines(f"{_fmt(e)}\n" for e in pooled)
    with open(out / "points.csv", "w") as f:
        f.write("point,x,y,mode,converged_error_m,final_x,final_y,diverged\n")
        for mode in r.modes:
            for p in r.points[mode]:
                fx, fy = p.final_estimates.mean(axis=0)
                f.write(
                    f"{p.index},{_fmt(p.truth.x)},{_fmt(p.truth.y)},{mode},"
                    f"{_fmt(p.converged_error)},{_fmt(fx)},{_fmt(fy)},{p.diverged}\n"
                )
    summary = summarize(r)
    with open(out / "summary.json", "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
    if records:
        with open(out / "trace.jsonl", "w") as f:
            for rec in records:
                f.write(json.dumps(rec, sort_keys=True) + "\n")
    return summary


def simulate_campaign(
    cfg: ScenarioConfig, epochs: int = 20, seed: int | None = None
) -> tuple[list[LabeledPowerSample], list[RangingSample]]:
    """Labeled power and ranging samples at every test point.

    Labels are the geometric ground truth, as a site survey would assign them.
    """
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    plan, anchors = cfg.site.floorplan, cfg.site.anchors
    powers, ranging = [], []
    for tag in cfg.test_points:
        for _ in range(epochs):
            meas, classes = simulate_epoch(
                tag, anchors, plan, cfg.true_stats, cfg.power_model, rng
            )
            for m in meas:
                cls = classes[m.anchor_id]
                powers.append(LabeledPowerSample(m.first_path_power, cls))
                ranging.append(RangingSample(tag, m.anchor_id, m.toa_measured, cls))
    return powers, ranging


def class_counts(cfg: ScenarioConfig) -> dict[str, int]:
    counts = {c.name: 0 for c in PropagationClass}
    for tag in cfg.test_points:
        for a in cfg.site.anchors.values():
            counts[classify_link_geometric(tag, a, cfg.site.floorplan).name] += 1
    return counts
