import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mdpdecomp import shapes
from mdpdecomp.features import FeatureContext, featurize, featurize_batch
from mdpdecomp.geometry import Plane, Platform, detect_fragile_regions
from mdpdecomp.manufacturability import UP, PlaneBatchEvaluator, PrintConfig, plane_offsets, risky_area
from mdpdecomp.search import SearchConfig, search

CFG = PrintConfig(platform=Platform(0.5), plane_step=0.25)


def test_t_solid_crossbar_cut():
    t = shapes.t_solid()
    J = risky_area(t, UP, CFG, CFG.platform.plane)
    f = featurize(None, t, Plane((0, 0, 1), 2.0), CFG, J, [])
    assert f[0] == pytest.approx(1.0)
    assert f[1] == pytest.approx(1.0)
    assert f[2] == pytest.approx(1.5 / 3.5)
    assert f[5] == 0.0


def test_convex_solid_has_unit_m5():
    sphere = shapes.icosphere(1.0, 2, center=(0, 0, 1))
    J = risky_area(sphere, UP, CFG, CFG.platform.plane)
    f = featurize(None, sphere, Plane((0.3, 0, 1), 1.2), CFG, J, [])
    assert f[4] == 1.0


def test_unit_cube_m4_is_offset_over_half_diagonal():
    cube = shapes.box()
    f = featurize(None, cube, Plane((0, 0, 1), 0.5), PrintConfig(), 1.0, [])
    assert f[3] == pytest.approx(0.5 / (math.sqrt(3) / 2))


def test_m5_uses_fragile_points():
    db = shapes.dumbbell()
    ctx = FeatureContext.build(db, PrintConfig(platform=Platform(0.5), fragile_threshold=0.1))
    assert len(ctx.fragile_points)
    z_neck = ctx.fragile_points[:, 2].mean()
    f = featurize_batch(ctx, 0.0, 0.0, UP, [z_neck], {"delta": np.zeros(1), "upper_volume": np.ones(1),
                                                      "residual": np.zeros(1)})
    assert f[0, 4] < 0.2


@pytest.mark.parametrize("make", [shapes.mushroom, shapes.stair, shapes.cross_solid])
def test_batch_features_match_clip_path(make):
    m = make()
    fragile = detect_fragile_regions(m, CFG.fragile_threshold)
    ctx = FeatureContext.build(m, CFG, fragile)
    ev = PlaneBatchEvaluator(m, CFG)
    rng = np.random.default_rng(4)
    for _ in range(4):
        d = rng.normal(size=3)
        d[2] = abs(d[2]) + 0.3
        d /= np.linalg.norm(d)
        s = m.vertices @ d
        offs = plane_offsets(s.min(), s.max(), CFG.plane_step)
        batch = featurize_batch(ctx, 0.0, 0.0, d, offs, ev.evaluate(d, offs))
        for k, c in enumerate(offs):
            ref = featurize(None, m, Plane(tuple(d), float(c)), CFG, ctx.J_total, fragile,
                            volume=ctx.volume, radius=ctx.radius)
            assert np.allclose(batch[k], ref, atol=1e-9)


@given(factor=st.floats(0.1, 50.0))
def test_features_are_scale_invariant(factor):
    m = shapes.mushroom(segments=12)
    p = Plane((0.2, -0.1, 1.0), 1.3)
    cfg = PrintConfig(platform=Platform(0.4))
    J = risky_area(m, UP, cfg, cfg.platform.plane)
    f = featurize(None, m, p, cfg, J, [])
    big = m.scaled(factor)
    cfg2 = PrintConfig(platform=Platform(0.4 * factor), plane_step=factor)
    J2 = risky_area(big, UP, cfg2, cfg2.platform.plane)
    f2 = featurize(None, big, Plane(p.normal, p.offset * factor), cfg2, J2, [])
    assert np.allclose(f, f2, atol=1e-9)


def test_trace_features_ranges_and_prefix_sums():
    m = shapes.stair().scaled(10.0)
    cfg = PrintConfig(direction_samples=40, plane_step=2.0, platform=Platform(5.0))
    res = search(m, cfg, SearchConfig(beam_width=3, pool=10, max_stages=3))
    J = risky_area(m, UP, cfg, cfg.platform.plane)
    F = np.array([r.metrics for r in res.trace])
    assert np.all((F[:, 0] >= -1) & (F[:, 0] <= 1))
    for j in (2, 3, 4, 5):
        assert np.all((F[:, j] >= 0) & (F[:, j] <= 1))
    for t in res.trajectories:
        m1 = [n.features[0] for n in t.nodes[1:]]
        m2 = [n.features[1] for n in t.nodes[1:]]
        m6 = [n.features[5] for n in t.nodes[1:]]
        assert np.allclose(np.cumsum(m1), m2, atol=1e-12)
        acc = np.cumsum([n.residual for n in t.nodes[1:]])
        assert np.allclose(np.minimum(acc / J, 1.0), m6, atol=1e-9)
        assert np.all(np.diff(m6) >= -1e-12)
