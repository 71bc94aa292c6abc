"""Procedural closed solids used by tests, demos and the bundled corpus."""
from __future__ import annotations

import math

import numpy as np

from .geometry import Mesh, concatenate


def _oriented(mesh):
    if mesh.volume < 0:
        return Mesh(mesh.vertices, mesh.faces[:, ::-1])
    return mesh


def box(size=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0)):
    """Axis-aligned box with 8 vertices and 12 triangles."""
    sx, sy, sz = size
    v = np.array([[x, y, z] for z in (0, sz) for y in (0, sy) for x in (0, sx)], float) + origin
    f = [
        [0, 2, 1], [1, 2, 3],  # bottom
        [4, 5, 6], [5, 7, 6],  # top
        [0, 1, 4], [1, 5, 4],  # y = 0
        [2, 6, 3], [3, 6, 7],  # y = sy
        [0, 4, 2], [2, 4, 6],  # x = 0
        [1, 3, 5], [3, 7, 5],  # x = sx
    ]
    return Mesh(v, f)


def grid_solid(xs, ys, zs, occupied):
    """
    Union of cells of a rectilinear grid.

    ``occupied[i, j, k]`` fills the cell [xs[i], xs[i+1]] x ... . Only the
    faces between filled and empty cells are emitted and all vertices sit
    on grid nodes, so the surface is conforming. Cells that touch along an
    edge only would make a non-manifold surface and must be avoided.
    """
    occ = np.asarray(occupied, bool)
    nx, ny, nz = occ.shape
    pad = np.zeros((nx + 2, ny + 2, nz + 2), bool)
    pad[1:-1, 1:-1, 1:-1] = occ
    nodes = np.array([[x, y, z] for x in xs for y in ys for z in zs], float)

    def nid(i, j, k):
        return (i * len(ys) + j) * len(zs) + k

    faces = []
    for i, j, k in zip(*np.nonzero(occ)):
        p = (i + 1, j + 1, k + 1)
        # quad corners listed counter-clockwise seen from outside
        if not pad[p[0] - 1, p[1], p[2]]:
            faces.append([nid(i, j, k), nid(i, j, k + 1), nid(i, j + 1, k + 1), nid(i, j + 1, k)])
        if not pad[p[0] + 1, p[1], p[2]]:
            faces.append([nid(i + 1, j, k), nid(i + 1, j + 1, k), nid(i + 1, j + 1, k + 1), nid(i + 1, j, k + 1)])
        if not pad[p[0], p[1] - 1, p[2]]:
            faces.append([nid(i, j, k), nid(i + 1, j, k), nid(i + 1, j, k + 1), nid(i, j, k + 1)])
        if not pad[p[0], p[1] + 1, p[2]]:
            faces.append([nid(i, j + 1, k), nid(i, j + 1, k + 1), nid(i + 1, j + 1, k + 1), nid(i + 1, j + 1, k)])
        if not pad[p[0], p[1], p[2] - 1]:
            faces.append([nid(i, j, k), nid(i, j + 1, k), nid(i + 1, j + 1, k), nid(i + 1, j, k)])
        if not pad[p[0], p[1], p[2] + 1]:
            faces.append([nid(i, j, k + 1), nid(i + 1, j, k + 1), nid(i + 1, j + 1, k + 1), nid(i, j + 1, k + 1)])
    tris = []
    for a, b, c, d in faces:
        tris += [[a, b, c], [a, c, d]]
    tris = np.array(tris)
    used, inv = np.unique(tris.ravel(), return_inverse=True)
    return _oriented(Mesh(nodes[used], inv.reshape(-1, 3)))


def revolve(profile, segments=24):
    """
    Surface of revolution about the z axis.

    ``profile`` is a sequence of (r, z) running from the bottom pole
    (r = 0) to the top pole (r = 0); interior points need r > 0.
    """
    prof = np.asarray(profile, float)
    if prof[0, 0] != 0 or prof[-1, 0] != 0 or np.any(prof[1:-1, 0] <= 0):
        raise ValueError("profile must start and end on the axis")
    ang = 2 * math.pi * np.arange(segments) / segments
    rings = prof[1:-1]
    verts = [[0.0, 0.0, prof[0, 1]]]
    for r, z in rings:
        verts += [[r * math.cos(a), r * math.sin(a), z] for a in ang]
    verts.append([0.0, 0.0, prof[-1, 1]])
    top = len(verts) - 1

    def rid(i, k):
        return 1 + i * segments + (k % segments)

    faces = []
    for k in range(segments):
        faces.append([0, rid(0, k + 1), rid(0, k)])
    for i in range(len(rings) - 1):
        for k in range(segments):
            a, b = rid(i, k), rid(i, k + 1)
            c, d = rid(i + 1, k + 1), rid(i + 1, k)
            faces += [[a, b, c], [a, c, d]]
    last = len(rings) - 1
    for k in range(segments):
        faces.append([top, rid(last, k), rid(last, k + 1)])
    return _oriented(Mesh(verts, faces))


def icosphere(radius=1.0, subdivisions=3, center=(0.0, 0.0, 0.0)):
    t = (1 + math.sqrt(5)) / 2
    v = [[-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0], [0, -1, t], [0, 1, t],
         [0, -1, -t], [0, 1, -t], [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1]]
    f = [[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11], [1, 5, 9], [5, 11, 4],
         [11, 10, 2], [10, 7, 6], [7, 1, 8], [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8],
         [3, 8, 9], [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]]
    verts = [np.array(p, float) / np.linalg.norm(p) for p in v]
    faces = f
    for _ in range(subdivisions):
        cache = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                p = verts[a] + verts[b]
                verts.append(p / np.linalg.norm(p))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        faces = new
    return _oriented(Mesh(np.array(verts) * radius + center, faces))


def tetrahedron(edge=1.0):
    """Regular tetrahedron standing on a face in z = 0."""
    h = edge * math.sqrt(2.0 / 3.0)
    r = edge / math.sqrt(3.0)
    base = [[r * math.cos(a), r * math.sin(a), 0.0] for a in (0, 2 * math.pi / 3, 4 * math.pi / 3)]
    v = base + [[0.0, 0.0, h]]
    return _oriented(Mesh(v, [[0, 2, 1], [0, 1, 3], [1, 2, 3], [2, 0, 3]]))


def centered(mesh):
    """Shift so the footprint is centred on the origin and the bottom rests at z = 0."""
    lo, hi = mesh.bounds
    return mesh.translated([-(lo[0] + hi[0]) / 2, -(lo[1] + hi[1]) / 2, -lo[2]])


# -- named test solids -------------------------------------------------------


def t_solid(scale=1.0):
    """1x1x2 column under a 3x1x0.5 crossbar; 2.0 of downward overhang at scale 1."""
    occ = np.zeros((3, 1, 2), bool)
    occ[1, 0, 0] = True
    occ[:, 0, 1] = True
    m = grid_solid([0, 1, 2, 3], [0, 1], [0, 2, 2.5], occ)
    return centered(m).scaled(scale)


def l_solid(arm=2.0, height=3.0, thickness=1.0):
    """Column with a single horizontal arm sticking out at the top."""
    occ = np.zeros((2, 1, 2), bool)
    occ[0, 0, :] = True
    occ[1, 0, 1] = True
    return centered(grid_solid([0, thickness, thickness + arm], [0, thickness], [0, height - thickness, height], occ))


def h_solid(width=4.0, height=4.0, bar=1.0, thickness=1.0):
    """Two posts joined by a crossbar at mid height."""
    occ = np.zeros((3, 1, 3), bool)
    occ[0, 0, :] = True
    occ[2, 0, :] = True
    occ[1, 0, 1] = True
    zb = (height - bar) / 2
    return centered(grid_solid([0, thickness, width - thickness, width], [0, thickness],
                               [0, zb, zb + bar, height], occ))


def bridge(span=4.0, height=3.0, deck=1.0, post=1.0, depth=1.0):
    """Two posts carrying a deck: an arch with a flat underside."""
    occ = np.zeros((3, 1, 2), bool)
    occ[0, 0, :] = True
    occ[2, 0, :] = True
    occ[1, 0, 1] = True
    return centered(grid_solid([0, post, post + span, 2 * post + span], [0, depth],
                               [0, height - deck, height], occ))


def stair(steps=3, run=1.0, rise=1.0, depth=1.0):
    """Inverted staircase: each step overhangs the one below."""
    occ = np.zeros((steps, 1, steps), bool)
    for k in range(steps):
        occ[: k + 1, 0, k] = True
    xs = [run * i for i in range(steps + 1)]
    zs = [rise * i for i in range(steps + 1)]
    return centered(grid_solid(xs, [0, depth], zs, occ))


def cross_solid(arm=1.5, core=1.0, height=3.0, arm_height=1.0):
    """Column with four arms at the top, overhanging on every side."""
    occ = np.zeros((3, 3, 2), bool)
    occ[1, 1, :] = True
    occ[1, :, 1] = True
    occ[:, 1, 1] = True
    xs = [0, arm, arm + core, 2 * arm + core]
    return centered(grid_solid(xs, xs, [0, height - arm_height, height], occ))


def mushroom(stem_radius=0.5, cap_radius=1.5, stem_height=2.0, cap_thickness=0.5, segments=24):
    prof = [(0, 0), (stem_radius, 0), (stem_radius, stem_height), (cap_radius, stem_height),
            (cap_radius, stem_height + cap_thickness), (0, stem_height + cap_thickness)]
    return revolve(prof, segments)


def hourglass(bulb_radius=2.0, bulb_height=2.0, waist_radius=0.5, waist_height=0.5, segments=24):
    h1 = bulb_height
    h2 = h1 + waist_height
    h3 = h2 + bulb_height
    prof = [(0, 0), (bulb_radius, 0), (bulb_radius, h1), (waist_radius, h1), (waist_radius, h2),
            (bulb_radius, h2), (bulb_radius, h3), (0, h3)]
    return revolve(prof, segments)


def sphere_profile(radius, z0, n, r_start=0.0, r_end=0.0):
    """Points of a sphere meridian from its bottom to its top pole."""
    pts = []
    for i in range(n + 1):
        a = -math.pi / 2 + math.pi * i / n
        pts.append((radius * math.cos(a), z0 + radius + radius * math.sin(a)))
    pts[0] = (0.0, pts[0][1])
    pts[-1] = (0.0, pts[-1][1])
    return pts


def dumbbell(radius=1.0, neck_diameter=0.08, neck_length=0.5, segments=24, rings=12):
    """Two spheres joined by a thin cylindrical neck along z."""
    rn = neck_diameter / 2
    lower = sphere_profile(radius, 0.0, rings)
    z_join = radius + math.sqrt(radius ** 2 - rn ** 2)
    # lower sphere up to where its radius shrinks to the neck radius
    prof = [p for p in lower if p[1] < z_join - 1e-9]
    prof.append((rn, z_join))
    top_z0 = z_join + neck_length
    prof.append((rn, top_z0))
    upper = sphere_profile(radius, top_z0 - (radius - math.sqrt(radius ** 2 - rn ** 2)), rings)
    prof += [p for p in upper if p[1] > top_z0 + 1e-9]
    return revolve(prof, segments)


def plate(sx=10.0, sy=10.0, thickness=0.05):
    return box((sx, sy, thickness))


def two_cubes(gap=1.0):
    return concatenate([box(), box(origin=(1.0 + gap, 0.0, 0.0))])
