"""Slow reference implementations used as test oracles."""
import math
from collections import deque

import numpy as np

from mdpdecomp.errors import DegenerateCut
from mdpdecomp.geometry import Plane, clip
from mdpdecomp.manufacturability import (
    UP,
    components_touch_platform,
    plane_offsets,
    risky_area,
    sample_directions,
)


def exhaustive_search(m, cfg, max_stages):
    """
    Enumerate every complete cut sequence over the candidate set.

    Uses explicit clipping and component analysis throughout. Completion
    follows the same rule as :func:`search`. Returns the list of
    (cost, planes) pairs.
    """
    base = cfg.platform.plane
    dirs = sample_directions(cfg)
    out = []

    def candidates(solid):
        for d in dirs:
            s = solid.vertices @ d
            for c in plane_offsets(s.min(), s.max(), cfg.plane_step):
                yield Plane(tuple(d), float(c))

    def walk(solid, acc, planes, stage):
        risk = risky_area(solid, UP, cfg, base)
        if risk == 0 or stage == max_stages:
            out.append((acc + risk, planes))
            return
        children = []
        for p in candidates(solid):
            if p.offset - cfg.platform.radius * math.hypot(p.normal[0], p.normal[1]) <= 0:
                continue
            try:
                upper, lower, _ = clip(solid, p)
            except DegenerateCut:
                continue
            if lower.is_empty or not components_touch_platform(lower):
                continue
            children.append((p, upper, lower))
        if not children:
            out.append((acc + risk, planes))
            return
        for p, upper, lower in children:
            walk(lower, acc + risky_area(upper, p.n, cfg, p), planes + [p], stage + 1)

    walk(m, 0.0, [], 0)
    return out


def risky_faces(vertices, faces, d, alpha_deg, base_normal=None, base_offset=None, tol=1e-6):
    """
    Face-by-face overhang enumeration from raw triangles.

    Normals come from each triangle's own vertex order, so the check is
    independent of any normal cached on a mesh.
    """
    s = math.sin(math.radians(alpha_deg))
    flags, total = [], []
    for f in faces:
        a, b, c = (vertices[i] for i in f)
        n = np.cross(b - a, c - a)
        area = 0.5 * float(np.linalg.norm(n))
        n = n / (2 * area) if area > 0 else n
        on_base = False
        if base_normal is not None:
            on_base = all(abs(float(np.dot(base_normal, v)) - base_offset) <= tol for v in (a, b, c))
        risky = bool(float(np.dot(n, d)) < -s) and not on_base
        flags.append(risky)
        if risky:
            total.append(area)
    return np.array(flags), math.fsum(total)


def bfs_components(faces):
    """Face components by breadth-first search over shared edges."""
    by_edge = {}
    for i, f in enumerate(faces):
        for k in range(3):
            e = tuple(sorted((int(f[k]), int(f[(k + 1) % 3]))))
            by_edge.setdefault(e, []).append(i)
    adj = [[] for _ in faces]
    for owners in by_edge.values():
        for i in owners:
            adj[i].extend(j for j in owners if j != i)
    label = [-1] * len(faces)
    comps = []
    for start in range(len(faces)):
        if label[start] >= 0:
            continue
        label[start] = len(comps)
        queue, members = deque([start]), []
        while queue:
            i = queue.popleft()
            members.append(i)
            for j in adj[i]:
                if label[j] < 0:
                    label[j] = label[start]
                    queue.append(j)
        comps.append(sorted(members))
    return comps


def inside_mask(points, vertices, faces, direction=(0.5773, 0.5774, 0.5775)):
    """Ray-parity point-in-solid test (Moller-Trumbore) for a closed mesh."""
    d = np.asarray(direction, float)
    d /= np.linalg.norm(d)
    tri = vertices[faces]
    e1 = tri[:, 1] - tri[:, 0]
    e2 = tri[:, 2] - tri[:, 0]
    pvec = np.cross(d, e2)
    det = np.einsum("ij,ij->i", e1, pvec)
    ok = np.abs(det) > 1e-14
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    hits = np.zeros(len(points), int)
    for start in range(0, len(points), 2000):
        P = points[start:start + 2000]
        tvec = P[:, None, :] - tri[None, :, 0]
        u = np.einsum("pfj,fj->pf", tvec, pvec) * inv
        qvec = np.cross(tvec, e1[None])
        v = (qvec @ d) * inv
        t = np.einsum("pfj,fj->pf", qvec, e2) * inv
        hit = ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > 0)
        hits[start:start + 2000] = hit.sum(axis=1)
    return hits % 2 == 1


def monte_carlo_volume(mesh, n=200_000, seed=0):
    """Volume estimate and its standard error from uniform box samples."""
    rng = np.random.default_rng(seed)
    lo, hi = mesh.bounds
    pts = lo + rng.random((n, 3)) * (hi - lo)
    frac = inside_mask(pts, mesh.vertices, mesh.faces).mean()
    box = float(np.prod(hi - lo))
    return frac * box, box * math.sqrt(frac * (1 - frac) / n)


def min_enclosing_radius(points):
    """Smallest enclosing ball radius as a second-order cone program."""
    import cvxpy as cp

    c = cp.Variable(3)
    r = cp.Variable()
    cons = [cp.norm(p - c) <= r for p in np.asarray(points, float)]
    cp.Problem(cp.Minimize(r), cons).solve()
    return float(r.value), np.asarray(c.value)
