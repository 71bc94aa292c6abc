"""
Beam search over sequences of clipping planes.

Each stage expands every node of the beam: all candidate planes of its
remaining solid are scored in bulk, those violating the platform
criteria are dropped, and the survivors of all nodes are pooled. The
progressive fill admits up to ``pool`` of them, most restrictive
residual threshold first, and a selector keeps ``beam_width`` of those
for the next stage.

The remaining solid is always printed on the platform along +z; a
branch is complete once that solid has no overhang, once no candidate
is feasible for it, or after ``max_stages`` cuts.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DegenerateCut, NoFeasibleStart
from .features import N_FEATURES, FeatureContext, featurize_batch
from .geometry import Plane, clip
from .manufacturability import (
    UP,
    DecompositionPlan,
    FeasibilityReport,
    PlaneBatchEvaluator,
    plane_offsets,
    risky_area,
    sample_directions,
)


@dataclass(frozen=True)
class SearchConfig:
    beam_width: int = 1
    pool: int = 50
    delta_init: float = 1e-4
    delta_factor: float = 5.0
    max_stages: int = 10
    jobs: int = 1

    def __post_init__(self):
        if self.beam_width < 1:
            raise ConfigError("beam width must be >= 1")
        if self.pool < self.beam_width:
            raise ConfigError("pool must be at least the beam width")
        if not self.delta_init > 0:
            raise ConfigError("delta_init must be positive")
        if not self.delta_factor > 1:
            raise ConfigError("delta_factor must exceed 1")
        if self.max_stages < 1:
            raise ConfigError("max_stages must be >= 1")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")


@dataclass(eq=False)
class SearchNode:
    """
    State after one cut.

    ``remaining`` is the solid left on the platform, ``part`` the solid
    cut off above ``cut``. The root has no cut and holds the input.
    """

    remaining: object
    cut: Plane | None
    features: np.ndarray
    parent: SearchNode | None
    stage: int
    accumulated_removed_risk: float
    accumulated_residual_risk: float
    part: object = None
    residual: float = 0.0
    remaining_risk: float = 0.0
    trace_ref: tuple | None = None

    @property
    def m2(self):
        return float(self.features[1]) if self.parent is not None else 0.0

    def path(self):
        chain, node = [], self
        while node is not None:
            chain.append(node)
            node = node.parent
        return chain[::-1]


@dataclass
class Trajectory:
    nodes: list
    cost: float
    plan: DecompositionPlan

    @property
    def leaf(self):
        return self.nodes[-1]

    @property
    def cuts(self):
        return len(self.nodes) - 1


@dataclass
class TraceRecord:
    model_id: str
    stage: int
    candidate_index: int
    metrics: tuple
    kept: bool
    on_trajectory_J: float | None
    plane: Plane
    residual: float
    removed: float
    upper_volume: float

    def to_json(self):
        return {
            "model_id": self.model_id,
            "stage": self.stage,
            "candidate_index": self.candidate_index,
            "metrics": [float(x) for x in self.metrics],
            "kept": self.kept,
            "on_trajectory_J": self.on_trajectory_J,
        }


@dataclass
class SearchResult:
    best: Trajectory
    trajectories: list
    trace: list = field(default_factory=list)
    stats: dict = field(default_factory=dict)

    def __iter__(self):
        return iter((self.best, self.trajectories, self.trace))


def write_trace(trace, path):
    with open(path, "w") as fh:
        for rec in trace:
            fh.write(json.dumps(rec.to_json(), sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Progressive fill
# ---------------------------------------------------------------------------


def fill_order(residual, removed, upper_volume, offset, slots, delta_init=1e-4, delta_factor=5.0,
               accept=None, return_delta=False):
    """
    Indices admitted by the progressive fill, in admission order.

    Candidates with residual below the threshold are admitted by
    decreasing removed risk (ties: larger upper volume, lower offset,
    lower index). While slots remain the threshold is multiplied by
    ``delta_factor`` and the rest are reconsidered. ``accept`` may veto a
    candidate when it comes up for admission; vetoed candidates are
    never reconsidered.
    """
    residual = np.asarray(residual, float)
    n = len(residual)
    if n == 0 or slots <= 0:
        return ([], []) if return_delta else []
    order = np.lexsort((np.arange(n), np.asarray(offset, float), -np.asarray(upper_volume, float),
                        -np.asarray(removed, float)))
    pending = np.ones(n, bool)
    admitted, deltas = [], []
    delta = float(delta_init)
    while pending.any() and len(admitted) < slots:
        eligible = order[pending[order] & (residual[order] < delta)]
        for i in eligible:
            pending[i] = False
            if accept is None or accept(int(i)):
                admitted.append(int(i))
                deltas.append(delta)
                if len(admitted) == slots:
                    break
        if not math.isfinite(delta):
            break
        delta *= delta_factor
    return (admitted, deltas) if return_delta else admitted


def progressive_fill(candidates, slots, delta_init=1e-4, delta_factor=5.0, return_delta=False):
    """
    Progressive fill over (Plane, FeasibilityReport, removed_risk) triples.

    Returns the admitted triples in admission order, and with
    ``return_delta`` also the threshold each one was admitted under.
    """
    if not candidates:
        return ([], []) if return_delta else []
    reps = [c[1] for c in candidates]
    idx, deltas = fill_order(
        [r.residual_risk for r in reps],
        [c[2] for c in candidates],
        [r.upper_volume for r in reps],
        [c[0].offset for c in candidates],
        slots, delta_init, delta_factor, return_delta=True,
    )
    picked = [candidates[i] for i in idx]
    return (picked, deltas) if return_delta else picked


# ---------------------------------------------------------------------------
# Selectors
# ---------------------------------------------------------------------------


def select_learned(features, model, b):
    """
    Keep ``b`` pool entries by model score.

    Scores are arg-sorted descending with ties broken by pool index. The
    pool head (the fill's own favourite) is always kept: if the model
    leaves it out it replaces the lowest-scored pick.
    """
    features = np.asarray(features, float)
    if b >= len(features):
        return list(range(len(features)))
    scores = np.asarray(model.score(features), float).reshape(-1)
    top = [int(i) for i in np.argsort(-scores, kind="stable")[:b]]
    if 0 not in top:
        top[-1] = 0
    return top


class BaselineSelector:
    """Keep the first ``b`` entries of the pool."""

    name = "baseline"

    def __call__(self, features, b):
        return list(range(min(b, len(features))))


class LearnedSelector:
    name = "learned"

    def __init__(self, model):
        self.model = model

    def __call__(self, features, b):
        return select_learned(features, self.model, b)


# ---------------------------------------------------------------------------
# Search
# ---------------------------------------------------------------------------


@dataclass
class _Block:
    """Feasible-by-platform candidates of one beam node."""

    node: SearchNode
    evaluator: PlaneBatchEvaluator
    dirs: np.ndarray
    offsets: np.ndarray
    residual: np.ndarray
    removed: np.ndarray
    upper_volume: np.ndarray
    features: np.ndarray


def _expand(node, dirs, cfg, ctx):
    ev = PlaneBatchEvaluator(node.remaining, cfg)
    verts = node.remaining.vertices
    rad = cfg.platform.radius
    cols = {k: [] for k in ("dirs", "offsets", "residual", "removed", "upper_volume", "features")}
    for d in dirs:
        s = verts @ d
        offs = plane_offsets(s.min(), s.max(), cfg.plane_step)
        # every platform point must lie strictly below the plane
        offs = offs[offs - rad * math.hypot(d[0], d[1]) > 0]
        if not len(offs):
            continue
        meas = ev.evaluate(d, offs)
        cols["dirs"].append(np.repeat(d[None], len(offs), axis=0))
        cols["offsets"].append(offs)
        cols["residual"].append(meas["residual"])
        cols["removed"].append(meas["removed"])
        cols["upper_volume"].append(meas["upper_volume"])
        cols["features"].append(
            featurize_batch(ctx, node.m2, node.accumulated_residual_risk, d, offs, meas))
    if not cols["offsets"]:
        empty = np.zeros(0)
        return _Block(node, ev, np.zeros((0, 3)), empty, empty, empty, empty, np.zeros((0, N_FEATURES)))
    return _Block(node, ev, *(np.concatenate(cols[k]) for k in
                              ("dirs", "offsets", "residual", "removed", "upper_volume", "features")))


def _single_part(m, cfg, risk):
    root = _root(m, risk)
    plan = DecompositionPlan([(m, cfg.platform.plane)], risk)
    return Trajectory([root], risk, plan)


def _root(m, risk):
    return SearchNode(m, None, np.zeros(N_FEATURES), None, 0, 0.0, 0.0, remaining_risk=risk)


def _trajectory(leaf, cfg):
    chain = leaf.path()
    parts = [(leaf.remaining, cfg.platform.plane)]
    parts += [(n.part, n.cut) for n in reversed(chain[1:])]
    cost = leaf.accumulated_residual_risk + leaf.remaining_risk
    return Trajectory(chain, cost, DecompositionPlan(parts, cost))


def search(m, cfg, scfg, selector=None, ctx=None, model_id="model"):
    """
    Beam search for a low-overhang decomposition of ``m``.

    Parameters
    ----------
    m : Mesh
      Watertight solid resting on the platform.
    cfg : PrintConfig
    scfg : SearchConfig
    selector : callable (features, b) -> pool indices, optional
      Defaults to :class:`BaselineSelector`.
    ctx : FeatureContext, optional
      Per-model feature constants; built from ``m`` when omitted.

    Returns
    -------
    SearchResult
      Unpacks to (best, trajectories, trace).

    Raises
    ------
    NoFeasibleStart
      The input has overhang but no first cut is feasible. The
      single-part result is attached.
    """
    selector = selector or BaselineSelector()
    base = cfg.platform.plane
    root_risk = risky_area(m, UP, cfg, base)
    stats = {"evaluated": 0, "clips": 0, "stages": 0}
    if root_risk == 0:
        t = _single_part(m, cfg, 0.0)
        return SearchResult(t, [t], [], stats)
    if ctx is None:
        ctx = FeatureContext.build(m, cfg)
    dirs = sample_directions(cfg)
    beam = [_root(m, root_risk)]
    completed, trace = [], []
    pool_map = ThreadPoolExecutor(scfg.jobs).map if scfg.jobs > 1 else map

    for stage in range(1, scfg.max_stages + 1):
        blocks = list(pool_map(lambda node: _expand(node, dirs, cfg, ctx), beam))
        stats["stages"] = stage
        sizes = [len(b.offsets) for b in blocks]
        stats["evaluated"] += sum(sizes)
        owner = np.repeat(np.arange(len(blocks)), sizes)
        local = np.concatenate([np.arange(s) for s in sizes]) if sizes else np.zeros(0, int)
        cat = (lambda key: np.concatenate([getattr(b, key) for b in blocks])) if blocks else None
        residual, removed = cat("residual"), cat("removed")
        volume, offsets = cat("upper_volume"), cat("offsets")

        def accept(i):
            blk, j = blocks[owner[i]], local[i]
            plane = Plane(tuple(blk.dirs[j]), float(blk.offsets[j]))
            try:
                return blk.evaluator.lower_connected(plane)
            except DegenerateCut:
                return False

        pooled = fill_order(residual, removed, volume, offsets, scfg.pool,
                            scfg.delta_init, scfg.delta_factor, accept)

        # nodes without a pooled child either have no feasible cut (done)
        # or lost out to other nodes (pruned)
        has_child = np.zeros(len(blocks), bool)
        has_child[owner[pooled]] = True
        for k, blk in enumerate(blocks):
            if has_child[k]:
                continue
            mine = np.nonzero(owner == k)[0]
            alive = fill_order(residual[mine], removed[mine], volume[mine], offsets[mine], 1,
                               scfg.delta_init, scfg.delta_factor, lambda j: accept(int(mine[j])))
            if not alive:
                if stage == 1:
                    t = _single_part(m, cfg, root_risk)
                    raise NoFeasibleStart("no feasible first cut", SearchResult(t, [t], trace, stats))
                completed.append(blk.node)
        if not pooled:
            break

        feats = np.stack([blocks[owner[i]].features[local[i]] for i in pooled])
        keep = selector(feats, scfg.beam_width)
        kept = set(keep)
        first = len(trace)
        for pos, i in enumerate(pooled):
            blk, j = blocks[owner[i]], local[i]
            trace.append(TraceRecord(
                model_id, stage, pos, tuple(float(x) for x in feats[pos]), pos in kept, None,
                Plane(tuple(blk.dirs[j]), float(blk.offsets[j])),
                float(residual[i]), float(removed[i]), float(volume[i])))

        beam = []
        for pos in keep:
            i = pooled[pos]
            blk, j = blocks[owner[i]], local[i]
            plane = trace[first + pos].plane
            try:
                upper, lower, _ = clip(blk.node.remaining, plane)
            except DegenerateCut:
                trace[first + pos].kept = False
                stats["degenerate"] = stats.get("degenerate", 0) + 1
                continue
            stats["clips"] += 1
            parent = blk.node
            r = risky_area(upper, plane.n, cfg, plane)
            child = SearchNode(
                lower, plane, feats[pos], parent, stage,
                parent.accumulated_removed_risk + float(removed[i]),
                parent.accumulated_residual_risk + r,
                part=upper, residual=r,
                remaining_risk=risky_area(lower, UP, cfg, base),
                trace_ref=first + pos,
            )
            if child.remaining_risk == 0 or stage == scfg.max_stages:
                completed.append(child)
            else:
                beam.append(child)
        if not beam:
            break

    trajectories = [_trajectory(n, cfg) for n in completed]
    for t in trajectories:
        for n in t.nodes[1:]:
            rec = trace[n.trace_ref]
            if rec.on_trajectory_J is None or t.cost < rec.on_trajectory_J:
                rec.on_trajectory_J = t.cost
    best = min(trajectories, key=lambda t: t.cost)
    return SearchResult(best, trajectories, trace, stats)


__all__ = [
    "SearchConfig", "SearchNode", "Trajectory", "TraceRecord", "SearchResult", "FeasibilityReport",
    "progressive_fill", "fill_order", "select_learned", "BaselineSelector", "LearnedSelector",
    "search", "write_trace",
]
