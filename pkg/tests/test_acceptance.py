"""
Acceptance suite. Each test records one PASS/FAIL line that is printed
in the terminal summary, then asserts.
"""
import math
import time

import numpy as np
import pytest
from acceptance_log import record
from oracles import exhaustive_search, risky_faces

from mdpdecomp import shapes
from mdpdecomp.cli import main
from mdpdecomp.corpus import corpus, corpus_config, corpus_search_config
from mdpdecomp.evaluation import (
    RandomScorer,
    RunSpec,
    compare_configurations,
    mean_ndcg,
    ndcg_at_k,
    pearson_correlation,
    permutation_importance,
)
from mdpdecomp.geometry import Plane, Platform, clip, save_obj
from mdpdecomp.manufacturability import (
    UP,
    PrintConfig,
    generate_candidates,
    is_risky,
    plane_offsets,
    residual_risky_area,
    risky_area,
    sample_directions,
)
from mdpdecomp.ranking import (
    RankedList,
    ScoringModel,
    TrainConfig,
    extract_ranked_lists,
    gradient_check,
    split_by_model,
    synthetic_lists,
    train,
    train_ranknet,
    urank_from_scores,
)
from mdpdecomp.search import SearchConfig, search

CORPUS = corpus()


# -- 1 --------------------------------------------------------------------


def test_c01_clip_conservation():
    rng = np.random.default_rng(1)
    solids = [m for _, m in CORPUS] + [shapes.icosphere(1.0, 2), shapes.tetrahedron(), shapes.hourglass()]
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        m = solids[rng.integers(len(solids))]
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        s = m.vertices @ d
        p = Plane(tuple(d), float(rng.uniform(s.min(), s.max())))
        upper, lower, _ = clip(m, p)
        worst = max(worst, abs(upper.volume + lower.volume - m.volume) / m.volume,
                    abs(upper.non_cap_area + lower.non_cap_area - m.area) / m.area)
    dt = time.perf_counter() - t0
    ok = worst <= 1e-6 and dt < 60
    record(1, "clip conservation", ok, f"max rel err {worst:.2e}, {dt:.1f} s")
    assert ok


# -- 2 --------------------------------------------------------------------


def test_c02_risky_face_oracle():
    cfg = corpus_config()
    base = cfg.platform.plane
    dirs = sample_directions(PrintConfig(direction_samples=12))
    mismatches = 0
    for name, m in CORPUS:
        for d in dirs:
            flags, _ = risky_faces(m.vertices, m.faces, d, cfg.alpha_max)
            mine = np.array([is_risky(n, d, cfg.alpha_max) for n in m.normals], bool)
            mismatches += int(np.sum(mine != flags))
        _, oracle = risky_faces(m.vertices, m.faces, UP, cfg.alpha_max, base.n, base.offset)
        mismatches += int(not math.isclose(risky_area(m, UP, cfg, base), oracle, rel_tol=1e-12, abs_tol=1e-12))
        planes = generate_candidates(m, PrintConfig(direction_samples=6, plane_step=4.0,
                                                    platform=cfg.platform))
        for p in planes[:: max(1, len(planes) // 8)]:
            upper, _, _ = clip(m, p)
            _, oracle = risky_faces(upper.vertices, upper.faces, p.n, cfg.alpha_max, p.n, p.offset)
            mismatches += int(not math.isclose(residual_risky_area(m, p, cfg), oracle,
                                               rel_tol=1e-12, abs_tol=1e-12))
    ok = mismatches == 0
    record(2, "risky-face oracle", ok, f"{mismatches} mismatches over {len(CORPUS)} solids")
    assert ok


# -- 3 --------------------------------------------------------------------

AXES = ((0, 0, 1), (0, 0, -1), (1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0))


def test_c03_exhaustive_equivalence():
    t0 = time.perf_counter()
    bad = []
    for name, m in CORPUS:
        # 5 mm spacing, widened on large solids to keep at most 8 offsets per axis
        extent = float((m.bounds[1] - m.bounds[0]).max())
        cfg = PrintConfig(directions=AXES, plane_step=max(5.0, extent / 9), platform=Platform(5.0))
        for d in AXES:
            s = m.vertices @ np.asarray(d, float)
            assert len(plane_offsets(s.min(), s.max(), cfg.plane_step)) <= 8, name
        opt = min(c for c, _ in exhaustive_search(m, cfg, 3))
        full = search(m, cfg, SearchConfig(beam_width=100000, pool=100000, max_stages=3)).best.cost
        greedy = search(m, cfg, SearchConfig(beam_width=1, pool=100000, max_stages=3)).best.cost
        if not math.isclose(full, opt, rel_tol=1e-9, abs_tol=1e-9) or greedy < opt - 1e-9:
            bad.append(name)
    dt = time.perf_counter() - t0
    ok = not bad and dt < 300
    record(3, "exhaustive-search equivalence", ok, f"{len(CORPUS) - len(bad)}/{len(CORPUS)} solids, {dt:.0f} s")
    assert ok, bad


# -- 4 --------------------------------------------------------------------


def test_c04_gradient_check():
    rng = np.random.default_rng(4)
    errs = []
    for i in range(20):
        model = ScoringModel.init(int(rng.integers(2, 16)), int(rng.integers(2, 16)), seed=i)
        n = int(rng.integers(2, 15))
        rel = rng.integers(0, 6, n)
        rel[0] = max(rel[0], 1)
        lst = RankedList("g", i, rng.normal(size=(n, 6)), rel)
        errs.append(gradient_check(model, lst, 1e-5))
    ok = max(errs) < 1e-4
    record(4, "gradient check", ok, f"max rel err {max(errs):.2e}")
    assert ok


# -- 5 --------------------------------------------------------------------


def test_c05_loss_and_ndcg_fixtures():
    loss, _ = urank_from_scores([0.0, 0.0], [1, 0])
    a = ndcg_at_k([3, 2, 1], [2, 1, 0], 3)
    b = ndcg_at_k([3, 2, 1], [0, 0, 1], 3)
    ok = abs(loss - 0.6931) <= 1e-4 and a == 1.0 and b == 0.5
    record(5, "loss and NDCG fixtures", ok, f"loss {loss:.6f}, NDCG {a}, {b}")
    assert ok


# -- 6 and 9 --------------------------------------------------------------


@pytest.fixture(scope="module")
def synthetic_run():
    t0 = time.perf_counter()
    lists = synthetic_lists(500, seed=0)
    tr, va, te = split_by_model(lists)
    urank, _ = train(tr, va, TrainConfig())
    ranknet, _ = train_ranknet(tr, va, TrainConfig())
    return lists, te, urank, ranknet, time.perf_counter() - t0


def test_c06_learning_signal(synthetic_run):
    _, te, urank, ranknet, dt = synthetic_run
    u5 = mean_ndcg(urank, te, 5)
    u1 = mean_ndcg(urank, te, 1)
    r1 = mean_ndcg(ranknet, te, 1)
    z1 = mean_ndcg(RandomScorer(0), te, 1)
    ok = u5 >= 0.9 and u1 > r1 and u1 > z1 and dt < 600
    record(6, "learning signal", ok,
           f"uRank NDCG@5 {u5:.3f}, NDCG@1 uRank {u1:.3f} / RankNet {r1:.3f} / random {z1:.3f}, {dt:.0f} s")
    assert ok


def test_c09_feature_analysis(synthetic_run):
    lists, te, urank, _, _ = synthetic_run
    dead = urank.copy()
    dead.W1[4] = 0.0
    zero = permutation_importance(dead, te[:40], K=3, seed=0)[4]
    X = np.concatenate([lst.features for lst in lists])
    r, _ = pearson_correlation(X)
    pearson_ok = (np.allclose(r, r.T) and np.allclose(np.diag(r), 1.0)
                  and np.linalg.eigvalsh(r).min() > -1e-9)
    imp = permutation_importance(urank, te, K=5, seed=0)
    top2 = set(np.argsort(-imp)[:2].tolist())
    ok = zero == 0.0 and pearson_ok and top2 == {0, 1}
    record(9, "feature analysis", ok,
           f"zeroed column {zero}, Pearson ok {pearson_ok}, top-2 {sorted(f'm{j + 1}' for j in top2)}")
    assert ok


# -- 7 and 8 --------------------------------------------------------------


@pytest.fixture(scope="module")
def baseline_comparison():
    specs = [RunSpec("baseline", b) for b in (1, 2, 5, 10)]
    return compare_configurations(CORPUS, specs, corpus_config(), corpus_search_config(), repeats=3)


def test_c08_runtime_scaling(baseline_comparison):
    total = baseline_comparison.timing["total_seconds"]
    t = [total[f"baseline-b{b}"] for b in (1, 2, 5, 10)]
    ok = all(x < y for x, y in zip(t, t[1:]))
    record(8, "runtime scaling", ok, "baseline seconds " + " < ".join(f"{x:.2f}" for x in t))
    assert ok


def test_c07_learned_acceleration(baseline_comparison):
    cfg = corpus_config()
    lists = []
    for name, m in CORPUS:
        res = search(m, cfg, corpus_search_config(beam_width=20, pool=20), model_id=name)
        lists += extract_ranked_lists(res.trace, 5)
    mean_J = baseline_comparison.summary["mean_J"]
    b2, b5 = mean_J["baseline-b2"], mean_J["baseline-b5"]
    t5 = baseline_comparison.timing["total_seconds"]["baseline-b5"]
    tried = []
    for seed in (0, 1, 2):
        model, _ = train(lists, lists, TrainConfig(seed=seed))
        comp = compare_configurations(CORPUS, [RunSpec("learned", 2, model)], cfg, corpus_search_config(),
                                      repeats=3)
        J = comp.summary["mean_J"]["learned-b2"]
        ratio = comp.timing["total_seconds"]["learned-b2"] / t5
        ok = J <= b2 and J <= 1.05 * b5 and ratio < 0.6
        tried.append(f"seed {seed}: J {J:.2f}, time ratio {ratio:.2f}")
        if ok:
            break
    record(7, "learned acceleration", ok,
           f"baseline-b2 J {b2:.2f}, baseline-b5 J {b5:.2f}; " + "; ".join(tried))
    assert ok


# -- 10 -------------------------------------------------------------------

VOLATILE = {"manifest.json", "timing.csv", "timing.json"}


def _snapshot(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.name not in VOLATILE}


def test_c10_cli_determinism(tmp_path):
    cdir = tmp_path / "corpus"
    cdir.mkdir()
    for name, m in CORPUS:
        if name in ("t_tilt", "mushroom_tilt", "stair"):
            save_obj(m, cdir / f"{name}.obj")
    flags = ["--direction-samples", "60", "--plane-step", "2", "--platform-radius", "25", "--max-stages", "3"]
    snaps = {}
    for run, jobs in (("a", 1), ("b", 1), ("c", 8)):
        out = tmp_path / f"dec_{run}"
        assert main(["decompose", str(cdir / "t_tilt.obj"), "--out", str(out), "--beam", "3", "--pool", "10",
                     "--trace", "--jobs", str(jobs)] + flags) == 0
        cmp_out = tmp_path / f"cmp_{run}"
        assert main(["compare", str(cdir), "--widths", "1,2", "--pool", "10", "--repeats", "1",
                     "--out", str(cmp_out), "--jobs", str(jobs)] + flags) == 0
        snaps[run] = (_snapshot(out), _snapshot(cmp_out))
    ok = snaps["a"] == snaps["b"] == snaps["c"]
    n = sum(len(x) for x in snaps["a"])
    record(10, "CLI determinism", ok, f"{n} files identical over 2 runs and --jobs 1 vs 8")
    assert ok
