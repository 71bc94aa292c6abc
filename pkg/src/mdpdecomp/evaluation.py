"""
Ranking metrics, feature analysis and the search comparison harness.
"""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import LengthMismatch, MDPError, NoFeasibleStart
from .features import FeatureContext
from .search import BaselineSelector, LearnedSelector, search

NDCG_DEPTHS = (1, 2, 3, 4, 5)


# ---------------------------------------------------------------------------
# NDCG
# ---------------------------------------------------------------------------


def _dcg(rel_sorted, k):
    rel = np.asarray(rel_sorted[:k], float)
    return float(((2.0 ** rel - 1.0) / np.log2(np.arange(2, len(rel) + 2))).sum())


def ndcg_at_k(predicted_scores, relevances, k):
    """
    Normalised discounted cumulative gain of the top ``k`` predictions.

    Items are ordered by descending score with ties broken by index.
    Gains are 2^rel - 1 with a log2(i + 1) discount. A list without any
    positive relevance scores 1. ``k`` larger than the list is clamped.
    """
    s = np.asarray(predicted_scores, float).ravel()
    r = np.asarray(relevances, float).ravel()
    if len(s) != len(r):
        raise LengthMismatch(f"{len(s)} scores for {len(r)} relevances")
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(r) == 0:
        raise LengthMismatch("empty list")
    k = min(int(k), len(r))
    ideal = _dcg(np.sort(r)[::-1], k)
    if ideal == 0:
        return 1.0
    order = np.argsort(-s, kind="stable")
    return _dcg(r[order], k) / ideal


def _scorer(model):
    return model.score if hasattr(model, "score") else model


def _stack(lists):
    M = np.concatenate([lst.features for lst in lists])
    bounds = np.cumsum([0] + [len(lst) for lst in lists])
    return M, bounds


def _mean_from_scores(g, bounds, lists, k):
    total = 0.0
    for i, lst in enumerate(lists):
        total += ndcg_at_k(g[bounds[i]:bounds[i + 1]], lst.relevance, k)
    return total / len(lists)


def mean_ndcg(model, lists, k=5):
    """Mean NDCG@k over ranked lists; ``model`` is a scorer or has ``score``."""
    if not lists:
        raise ValueError("no lists to evaluate")
    M, bounds = _stack(lists)
    g = np.asarray(_scorer(model)(M), float).ravel()
    return _mean_from_scores(g, bounds, lists, k)


def ndcg_table(model, lists, depths=NDCG_DEPTHS):
    M, bounds = _stack(lists)
    g = np.asarray(_scorer(model)(M), float).ravel()
    return {k: _mean_from_scores(g, bounds, lists, k) for k in depths}


class RandomScorer:
    """Seeded uniform scores, the chance baseline."""

    def __init__(self, seed=0):
        self.seed = seed

    def score(self, M):
        return np.random.default_rng(self.seed).random(len(M))


def write_ndcg_csv(tables, path, depths=NDCG_DEPTHS):
    """One row per method, one column per NDCG depth."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method"] + [f"NDCG@{k}" for k in depths])
        for name, table in tables.items():
            w.writerow([name] + [f"{table[k]:.6f}" for k in depths])


# ---------------------------------------------------------------------------
# Feature analysis
# ---------------------------------------------------------------------------


def permutation_importance(model, lists, K=10, seed=0, k=5, permuter=None):
    """
    Drop in mean NDCG@k when one metric column is shuffled.

    Each column is permuted jointly across all rows of all lists, K
    times per column, and the mean score over those K runs is
    subtracted from the unshuffled score.

    Parameters
    ----------
    permuter : callable (rng, n) -> index array, optional
      Replaces ``rng.permutation``.

    Returns
    -------
    importance : (F,) float
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    score = _scorer(model)
    M, bounds = _stack(lists)
    base = _mean_from_scores(np.asarray(score(M), float).ravel(), bounds, lists, k)
    rng = np.random.default_rng(seed)
    permuter = permuter or (lambda r, n: r.permutation(n))
    out = np.zeros(M.shape[1])
    for j in range(M.shape[1]):
        drops = np.empty(K)
        for r in range(K):
            P = M.copy()
            P[:, j] = M[permuter(rng, len(M)), j]
            drops[r] = base - _mean_from_scores(np.asarray(score(P), float).ravel(), bounds, lists, k)
        out[j] = drops.mean()
    return out


def pearson_correlation(columns):
    """
    Pearson correlation of the columns of an (N, F) matrix.

    Population moments are used. A constant column correlates 0 with
    every other column and 1 with itself.

    Returns
    -------
    r : (F, F) float
    constant : (F,) bool
      Columns flagged as constant.
    """
    X = np.asarray(columns, float)
    if X.ndim != 2 or len(X) < 2:
        raise ValueError("need an (N, F) matrix with N >= 2")
    Xc = X - X.mean(axis=0)
    sd = np.sqrt((Xc ** 2).mean(axis=0))
    constant = sd <= 1e-12 * np.maximum(1.0, np.abs(X).max(axis=0))
    Z = np.where(constant, 0.0, Xc / np.where(constant, 1.0, sd))
    r = Z.T @ Z / len(X)
    r = np.clip(0.5 * (r + r.T), -1.0, 1.0)
    np.fill_diagonal(r, 1.0)
    return r, constant


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


@dataclass
class EvalReport:
    ndcg_at: dict = field(default_factory=dict)
    importance: list | None = None
    correlation: list | None = None
    constant_columns: list | None = None
    j_improvement_pct: dict = field(default_factory=dict)
    runtimes: dict = field(default_factory=dict)

    def to_json(self):
        return {
            "ndcg_at": {name: {str(k): v for k, v in t.items()} for name, t in self.ndcg_at.items()},
            "importance": self.importance,
            "correlation": self.correlation,
            "constant_columns": self.constant_columns,
            "j_improvement_pct": self.j_improvement_pct,
            "runtimes": self.runtimes,
        }


@dataclass(frozen=True)
class RunSpec:
    """One search configuration of a comparison."""

    selector: str
    beam_width: int
    model: object = None

    @property
    def name(self):
        return f"{self.selector}-b{self.beam_width}"


@dataclass
class Comparison:
    """
    Outcome of :func:`compare_configurations`.

    ``rows`` and ``summary`` depend only on the inputs; wall-clock
    numbers are kept apart in ``seconds`` and ``timing``.
    """

    rows: list
    summary: dict
    seconds: dict
    timing: dict

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["mesh", "config", "J", "cuts", "error"])
            for r in self.rows:
                J = "" if r["J"] is None else repr(r["J"])
                w.writerow([r["mesh"], r["config"], J, r["cuts"], r["error"] or ""])

    def write_timing_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["mesh", "config", "seconds"])
            for (mesh, name), sec in self.seconds.items():
                w.writerow([mesh, name, f"{sec:.6f}"])


def _run_one(mesh, cfg, scfg, spec, ctx, model_id):
    selector = LearnedSelector(spec.model) if spec.selector == "learned" else BaselineSelector()
    try:
        res = search(mesh, cfg, scfg, selector, ctx=ctx, model_id=model_id)
    except NoFeasibleStart as exc:
        res = exc.result
    return res.best


def compare_configurations(corpus, specs, cfg, scfg, repeats=3, timed=True):
    """
    Search every mesh under every configuration.

    Parameters
    ----------
    corpus : list of (name, Mesh)
    specs : list of RunSpec
      Should contain baseline b=1 (reference for reductions) and
      baseline b=2 (reference for runtime ratios).
    cfg : PrintConfig
    scfg : SearchConfig
      Pool, stage limit and job count; the beam width comes from each spec.
    repeats : int
      Timing is the median over this many runs of each search.

    Returns
    -------
    Comparison
    """
    if not corpus:
        raise ValueError("empty corpus")
    rows, seconds = [], {}
    for name, mesh in corpus:
        try:
            ctx = FeatureContext.build(mesh, cfg)
        except MDPError as exc:
            ctx, err = None, exc
        else:
            err = None
        for spec in specs:
            row = {"mesh": name, "config": spec.name, "J": None, "cuts": 0, "error": None}
            if err is not None:
                row["error"] = type(err).__name__
                rows.append(row)
                continue
            sc = replace(scfg, beam_width=spec.beam_width, pool=max(scfg.pool, spec.beam_width))
            times = []
            try:
                for _ in range(repeats if timed else 1):
                    t0 = time.perf_counter()
                    best = _run_one(mesh, cfg, sc, spec, ctx, name)
                    times.append(time.perf_counter() - t0)
                row["J"], row["cuts"] = float(best.cost), best.cuts
            except MDPError as exc:
                row["error"] = type(exc).__name__
            seconds[(name, spec.name)] = float(np.median(times)) if times else 0.0
            rows.append(row)
    summary, timing = _summarize(rows, seconds, specs)
    return Comparison(rows, summary, seconds, timing)


def _summarize(rows, seconds, specs):
    names = [s.name for s in specs]
    ok_meshes = sorted({r["mesh"] for r in rows}
                       - {r["mesh"] for r in rows if r["J"] is None})
    J = {n: {r["mesh"]: r["J"] for r in rows if r["config"] == n} for n in names}
    mean_J = {n: float(np.mean([J[n][m] for m in ok_meshes])) if ok_meshes else None for n in names}
    ref = mean_J.get("baseline-b1")
    reduction = {}
    for n in names:
        if ref is None or mean_J[n] is None:
            reduction[n] = None
        elif ref == 0:
            reduction[n] = 0.0
        else:
            reduction[n] = 100.0 * (ref - mean_J[n]) / ref
    summary = {
        "meshes": len({r["mesh"] for r in rows}),
        "meshes_compared": len(ok_meshes),
        "failures": [[r["mesh"], r["config"], r["error"]] for r in rows if r["error"]],
        "mean_J": mean_J,
        "J_reduction_pct_vs_baseline_b1": reduction,
    }
    total = {n: float(sum(seconds.get((m, n), 0.0) for m in ok_meshes)) for n in names}
    ref_t = total.get("baseline-b2")
    timing = {
        "total_seconds": total,
        "runtime_ratio_vs_baseline_b2": {
            n: (total[n] / ref_t if ref_t else None) for n in names
        },
    }
    return summary, timing

