import math
import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from oracles import bfs_components, min_enclosing_radius, monte_carlo_volume

from mdpdecomp import shapes
from mdpdecomp.errors import ParseError, TopologyError
from mdpdecomp.geometry import (
    Mesh,
    Plane,
    Platform,
    bounding_sphere,
    clip,
    connected_components,
    detect_fragile_regions,
    load_mesh,
    lower_component_minima,
    save_obj,
    save_stl,
)


def unit_cube():
    return shapes.box()


def test_mesh_invariants_on_generated_solids():
    for m in (unit_cube(), shapes.t_solid(), shapes.mushroom(), shapes.icosphere(1.0, 2)):
        assert m.is_watertight
        assert m.volume > 0
        assert np.allclose(np.linalg.norm(m.normals, axis=1), 1.0, atol=1e-9)


# -- I/O ------------------------------------------------------------------


def test_load_cube_obj(tmp_path):
    p = tmp_path / "cube.obj"
    save_obj(unit_cube(), p)
    m = load_mesh(p)
    assert len(m.faces) == 12 and len(m.vertices) == 8
    assert m.area == pytest.approx(6.0, abs=1e-12)
    assert m.volume == pytest.approx(1.0, abs=1e-12)


def test_stl_soup_welds_to_cube(tmp_path):
    cube = unit_cube()
    for binary in (True, False):
        p = tmp_path / f"cube_{binary}.stl"
        save_stl(cube, p, binary=binary)
        m = load_mesh(p)
        assert len(m.vertices) == 8 and len(m.faces) == 12
        assert m.volume == pytest.approx(1.0, abs=1e-6)


def test_icosphere_volume_close_to_ball(tmp_path):
    p = tmp_path / "ico.stl"
    save_stl(shapes.icosphere(1.0, 3), p)
    m = load_mesh(p)
    assert abs(m.volume - 4 / 3 * math.pi) / (4 / 3 * math.pi) < 0.02


def test_obj_roundtrip_keeps_counts_and_cap_tags(tmp_path):
    upper, lower, _ = clip(shapes.mushroom(), Plane((0.3, 0.1, 1.0), 1.2))
    for part in (upper, lower):
        p = tmp_path / "part.obj"
        save_obj(part, p)
        again = load_mesh(p)
        assert len(again.faces) == len(part.faces)
        assert len(again.vertices) == len(part.vertices)
        assert again.cap.sum() == part.cap.sum()
    assert "# cap" in (tmp_path / "part.obj").read_text()


def test_parse_errors(tmp_path):
    bad = tmp_path / "bad.obj"
    bad.write_text("v 0 0 0\nv 1 0 0\nf 1 2 x\n")
    with pytest.raises(ParseError):
        load_mesh(bad)
    short = tmp_path / "short.stl"
    short.write_bytes(b"\0" * 80 + struct.pack("<I", 5) + b"\0" * 10)
    with pytest.raises(ParseError):
        load_mesh(short)
    unknown = tmp_path / "x.ply"
    unknown.write_text("ply\n")
    with pytest.raises(ParseError):
        load_mesh(unknown)


def test_open_mesh_reports_boundary_edges(tmp_path):
    cube = unit_cube()
    open_box = Mesh(cube.vertices, cube.faces[:-2])
    p = tmp_path / "open.obj"
    save_obj(open_box, p)
    with pytest.raises(TopologyError) as err:
        load_mesh(p)
    assert err.value.boundary_edges == 4


# -- clip -----------------------------------------------------------------


def test_clip_cube_half():
    upper, lower, cap = clip(unit_cube(), Plane((0, 0, 1), 0.5))
    assert upper.volume == pytest.approx(0.5, abs=1e-12)
    assert lower.volume == pytest.approx(0.5, abs=1e-12)
    assert cap == pytest.approx(1.0, abs=1e-12)
    assert upper.cap_area == pytest.approx(1.0) and lower.cap_area == pytest.approx(1.0)
    assert upper.is_watertight and lower.is_watertight


def test_clip_plane_misses():
    cube = unit_cube()
    upper, lower, cap = clip(cube, Plane((0, 0, 1), 2.0))
    assert upper.is_empty and cap == 0.0
    assert lower.volume == cube.volume


def test_clip_tetrahedron_half_height_is_eighth():
    tet = shapes.tetrahedron(1.0)
    h = tet.bounds[1, 2]
    upper, lower, _ = clip(tet, Plane((0, 0, 1), h / 2))
    assert upper.volume / tet.volume == pytest.approx(1 / 8, rel=1e-9)
    # independent check of the clipped solid itself, not just the formula
    est, se = monte_carlo_volume(upper, n=1_000_000, seed=3)
    assert abs(est - upper.volume) / upper.volume < 0.01
    assert se / upper.volume < 0.005


def test_clip_splits_straddling_faces_exactly():
    # plane through a face interior: new vertices lie on the plane
    upper, lower, _ = clip(shapes.icosphere(1.0, 1), Plane((0.2, -0.3, 0.9), 0.1))
    n = np.array([0.2, -0.3, 0.9]) / np.linalg.norm([0.2, -0.3, 0.9])
    for part, sign in ((upper, 1), (lower, -1)):
        s = part.vertices @ n - 0.1
        assert np.all(sign * s >= -1e-9)
        cap_pts = part.vertices[np.unique(part.faces[part.cap])]
        assert np.allclose(cap_pts @ n, 0.1, atol=1e-9)


def test_clip_is_deterministic():
    m = shapes.hourglass(segments=12)
    p = Plane((0.1, 0.2, 1.0), 2.2)
    a = clip(m, p)
    b = clip(m, p)
    for x, y in zip(a[:2], b[:2]):
        assert np.array_equal(x.vertices, y.vertices)
        assert np.array_equal(x.faces, y.faces)
        assert np.array_equal(x.cap, y.cap)


def test_clip_cross_section_with_hole():
    # ring-shaped section: a torus-like solid built as a box with a tunnel
    occ = np.ones((3, 3, 1), bool)
    occ[1, 1, 0] = False
    frame = shapes.grid_solid([0, 1, 2, 3], [0, 1, 2, 3], [0, 1], occ)
    upper, lower, cap = clip(frame, Plane((0, 0, 1), 0.5))
    assert cap == pytest.approx(8.0)
    assert upper.volume + lower.volume == pytest.approx(frame.volume)
    assert upper.is_watertight and lower.is_watertight


SOLIDS = [
    shapes.box((1.0, 2.0, 0.5)),
    shapes.icosphere(1.0, 2),
    shapes.t_solid(),
    shapes.mushroom(segments=12),
    shapes.hourglass(segments=12),
    shapes.tetrahedron(),
]


@given(
    k=st.integers(0, len(SOLIDS) - 1),
    theta=st.floats(0, math.pi),
    phi=st.floats(0, 2 * math.pi),
    t=st.floats(0.05, 0.95),
)
def test_clip_conserves_volume_and_surface(k, theta, phi, t):
    m = SOLIDS[k]
    d = np.array([math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi), math.cos(theta)])
    s = m.vertices @ d
    p = Plane(tuple(d), float(s.min() + t * (s.max() - s.min())))
    upper, lower, cap = clip(m, p)
    assert abs(upper.volume + lower.volume - m.volume) <= 1e-6 * m.volume
    assert abs(upper.non_cap_area + lower.non_cap_area - m.area) <= 1e-6 * m.area
    assert upper.cap_area == pytest.approx(lower.cap_area, rel=1e-9)
    for part in (upper, lower):
        assert part.is_empty or part.is_watertight


# -- components -----------------------------------------------------------


def test_components_counts():
    assert len(connected_components(unit_cube())) == 1
    pair = shapes.two_cubes()
    comps = connected_components(pair)
    assert len(comps) == 2
    assert [c.volume for c in comps] == pytest.approx([1.0, 1.0])


def test_hourglass_waist_cut_matches_bfs():
    hg = shapes.hourglass(segments=12)
    # a vertical plane missing the waist leaves a slab of each bulb below it
    p = Plane((0.0, 1.0, 0.0), -1.0)
    _, lower, _ = clip(hg, p)
    comps = connected_components(lower)
    oracle = bfs_components(lower.faces)
    assert len(comps) == len(oracle) == 2
    assert sorted(len(c.faces) for c in comps) == sorted(len(o) for o in oracle)


def test_lower_component_minima_matches_clip():
    rng = np.random.default_rng(7)
    for m in (shapes.hourglass(segments=12), shapes.h_solid(), shapes.mushroom(segments=12)):
        for _ in range(25):
            d = rng.normal(size=3)
            d /= np.linalg.norm(d)
            s = m.vertices @ d
            p = Plane(tuple(d), float(rng.uniform(s.min(), s.max())))
            _, lower, _ = clip(m, p)
            expect = sorted(c.vertices[:, 2].min() for c in connected_components(lower))
            got = sorted(lower_component_minima(m, p))
            assert np.allclose(got, expect, atol=1e-12)


# -- bounding sphere ------------------------------------------------------


def test_bounding_sphere_cube():
    _, r = bounding_sphere(unit_cube())
    assert math.sqrt(3) / 2 <= r + 1e-12 <= 1.01 * math.sqrt(3) / 2


def test_bounding_sphere_single_point():
    _, r = bounding_sphere(np.ones((5, 3)))
    assert r == 0.0


@pytest.mark.parametrize("seed", range(5))
def test_bounding_sphere_matches_socp(seed):
    pts = np.random.default_rng(seed).normal(size=(100, 3))
    c, r = bounding_sphere(pts)
    assert np.all(np.linalg.norm(pts - c, axis=1) <= r * (1 + 1e-12))
    r_opt, _ = min_enclosing_radius(pts)
    assert r <= 1.01 * r_opt
    assert r == pytest.approx(r_opt, rel=1e-5)


# -- fragile regions ------------------------------------------------------


def test_fragile_cube_none():
    assert detect_fragile_regions(unit_cube(), 0.1) == []


def test_fragile_plate_one_region_on_large_faces():
    plate = shapes.plate()
    regions = detect_fragile_regions(plate, 0.1)
    assert len(regions) == 1
    big = set(np.nonzero(plate.areas > 1.0)[0])
    assert big <= set(regions[0].face_ids)


def test_fragile_dumbbell_neck():
    db = shapes.dumbbell()
    regions = detect_fragile_regions(db, 0.1)
    assert len(regions) == 1
    z = db.centroids[list(regions[0].face_ids), 2]
    neck_lo = 1.0 + math.sqrt(1 - 0.04 ** 2)
    assert z.min() >= neck_lo - 1e-9 and z.max() <= neck_lo + 0.5 + 1e-9


def test_platform_validation():
    with pytest.raises(ValueError):
        Platform(0.0)
    assert Platform(5.0).plane.n.tolist() == [0.0, 0.0, 1.0]
