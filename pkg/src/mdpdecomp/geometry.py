"""
geometry.py
-----------

Indexed triangle meshes, file I/O, plane clipping with capped
cross-sections, connectivity, bounding spheres and thin-feature
detection. Units are millimetres throughout.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import mapbox_earcut
import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components as _cc
from scipy.spatial import ConvexHull, cKDTree

from .errors import DegenerateCut, ParseError, TopologyError

WELD_TOL = 1e-6
SIDE_TOL = 1e-9
PLANE_TOL = 1e-6


class Mesh:
    """
    Immutable indexed triangle mesh.

    Parameters
    ----------
    vertices : (n, 3) float
    faces : (m, 3) int
      Counter-clockwise seen from outside.
    cap : (m,) bool or None
      Marks faces created to close a planar cut.
    normals : (m, 3) float or None
      Explicit unit normals. Clipping passes the parent face normal
      through so pieces of a face classify exactly like the face.
    """

    def __init__(self, vertices, faces, cap=None, normals=None):
        v = np.array(vertices, dtype=np.float64).reshape(-1, 3)
        f = np.array(faces, dtype=np.int64).reshape(-1, 3)
        c = np.zeros(len(f), dtype=bool) if cap is None else np.array(cap, dtype=bool)
        if len(c) != len(f):
            raise ValueError("cap flags must match face count")
        if len(f) and (f.min() < 0 or f.max() >= len(v)):
            raise ValueError("face index out of range")
        tri = v[f]
        cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        norm = np.linalg.norm(cross, axis=1)
        self.areas = 0.5 * norm
        if normals is None:
            n = np.zeros_like(cross)
            ok = norm > 0
            n[ok] = cross[ok] / norm[ok, None]
        else:
            n = np.array(normals, dtype=np.float64).reshape(-1, 3)
        self.vertices, self.faces, self.cap, self.normals = v, f, c, n
        for arr in (self.vertices, self.faces, self.cap, self.normals, self.areas):
            arr.setflags(write=False)

    def __repr__(self):
        return f"Mesh(vertices={len(self.vertices)}, faces={len(self.faces)})"

    def __len__(self):
        return len(self.faces)

    @property
    def is_empty(self):
        return len(self.faces) == 0

    @classmethod
    def empty(cls):
        return cls(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))

    @property
    def area(self):
        return float(self.areas.sum())

    @property
    def non_cap_area(self):
        return float(self.areas[~self.cap].sum())

    @property
    def cap_area(self):
        return float(self.areas[self.cap].sum())

    @cached_property
    def volume(self):
        """Signed volume by the divergence theorem."""
        if self.is_empty:
            return 0.0
        tri = self.vertices[self.faces]
        return float(np.einsum("ij,ij->i", tri[:, 0], np.cross(tri[:, 1], tri[:, 2])).sum() / 6.0)

    @property
    def bounds(self):
        return np.array([self.vertices.min(axis=0), self.vertices.max(axis=0)])

    @cached_property
    def centroids(self):
        return self.vertices[self.faces].mean(axis=1)

    @cached_property
    def _directed(self):
        e = self.faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
        n = max(len(self.vertices), 1)
        keys = e[:, 0] * n + e[:, 1]
        rkeys = e[:, 1] * n + e[:, 0]
        return e, keys, rkeys

    @cached_property
    def boundary_edge_count(self):
        """Directed edges with no opposite twin, plus duplicated ones."""
        if self.is_empty:
            return 0
        _, keys, rkeys = self._directed
        uniq, counts = np.unique(keys, return_counts=True)
        dup = int((counts - 1).sum())
        return int((~np.isin(rkeys, uniq)).sum()) + dup

    @property
    def is_watertight(self):
        return not self.is_empty and self.boundary_edge_count == 0

    @cached_property
    def edge_faces(self):
        """
        Interior edge adjacency.

        Returns
        -------
        edges : (k, 2) int
          Vertex pairs with edges[:, 0] < edges[:, 1].
        pairs : (k, 2) int
          The two faces sharing each edge.
        """
        e, _, _ = self._directed
        fid = np.repeat(np.arange(len(self.faces)), 3)
        und = np.sort(e, axis=1)
        n = max(len(self.vertices), 1)
        key = und[:, 0] * n + und[:, 1]
        order = np.argsort(key, kind="stable")
        key_s = key[order]
        same = key_s[1:] == key_s[:-1]
        i = np.nonzero(same)[0]
        return und[order[i]], np.stack([fid[order[i]], fid[order[i + 1]]], axis=1)

    def submesh(self, face_mask):
        """Faces selected by ``face_mask`` with unused vertices dropped."""
        idx = np.nonzero(face_mask)[0] if np.asarray(face_mask).dtype == bool else np.asarray(face_mask)
        return _compact(self.vertices, self.faces[idx], self.cap[idx], self.normals[idx])

    def translated(self, offset):
        return Mesh(self.vertices + np.asarray(offset, float), self.faces, self.cap, self.normals)

    def scaled(self, factor):
        return Mesh(self.vertices * float(factor), self.faces, self.cap, self.normals)

    def transformed(self, rotation, offset=(0.0, 0.0, 0.0)):
        r = np.asarray(rotation, float)
        return Mesh(self.vertices @ r.T + np.asarray(offset, float), self.faces, self.cap, self.normals @ r.T)


def _compact(vertices, faces, cap, normals):
    if len(faces) == 0:
        return Mesh.empty()
    used, inv = np.unique(faces.ravel(), return_inverse=True)
    return Mesh(vertices[used], inv.reshape(-1, 3), cap, normals)


def concatenate(meshes):
    """Join meshes into one buffer without welding."""
    meshes = [m for m in meshes if not m.is_empty]
    if not meshes:
        return Mesh.empty()
    offsets = np.cumsum([0] + [len(m.vertices) for m in meshes[:-1]])
    return Mesh(
        np.vstack([m.vertices for m in meshes]),
        np.vstack([m.faces + o for m, o in zip(meshes, offsets)]),
        np.concatenate([m.cap for m in meshes]),
        np.vstack([m.normals for m in meshes]),
    )


@dataclass(frozen=True)
class Plane:
    """The set {x : normal . x = offset}; "above" means normal . x > offset."""

    normal: tuple
    offset: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=np.float64)
        length = np.linalg.norm(n)
        if length == 0:
            raise ValueError("plane normal must be non-zero")
        if abs(length - 1.0) > 1e-9:
            n = n / length
        object.__setattr__(self, "normal", tuple(float(x) for x in n))
        object.__setattr__(self, "offset", float(self.offset))

    @property
    def n(self):
        return np.array(self.normal)

    def signed_distance(self, points):
        return np.asarray(points, float) @ self.n - self.offset

    def to_dict(self):
        return {"normal": list(self.normal), "offset": self.offset}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["normal"]), d["offset"])


@dataclass(frozen=True)
class Platform:
    """Circular build plate of the given radius in the plane z = 0."""

    radius: float = 100.0
    plane: Plane = field(default_factory=lambda: Plane((0.0, 0.0, 1.0), 0.0))

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("platform radius must be positive")


@dataclass(frozen=True)
class FragileRegion:
    face_ids: frozenset
    representative_points: np.ndarray

    def __post_init__(self):
        if not self.face_ids:
            raise ValueError("fragile region needs at least one face")


# ---------------------------------------------------------------------------
# I/O
# ---------------------------------------------------------------------------


def _detect_format(path, data):
    ext = Path(path).suffix.lower()
    if ext == ".obj":
        return "obj"
    if ext == ".stl":
        if data[:5].lower() == b"solid" and b"facet" in data[:1024]:
            return "stl-ascii"
        return "stl-binary"
    raise ParseError(f"unknown mesh format for {path}")


def load_mesh(path, format=None):
    """
    Read a closed triangle mesh and weld coincident vertices.

    Parameters
    ----------
    path : str or Path
    format : {"stl-binary", "stl-ascii", "obj"} or None
      Guessed from the extension and header when None.
    """
    data = Path(path).read_bytes()
    fmt = format or _detect_format(path, data)
    if fmt == "obj":
        vertices, faces, cap = _parse_obj(data)
    elif fmt == "stl-ascii":
        vertices, faces = _parse_stl_ascii(data)
        cap = None
    elif fmt == "stl-binary":
        vertices, faces = _parse_stl_binary(data)
        cap = None
    else:
        raise ParseError(f"unsupported format {fmt!r}")
    return weld(vertices, faces, cap)


def _parse_obj(data):
    vertices, faces, cap = [], [], []
    in_cap = False
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"OBJ is not valid text: {exc}") from None
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split()
        if not parts:
            continue
        tag = parts[0]
        if tag == "#":
            if len(parts) > 1:
                in_cap = parts[1] == "cap"
            continue
        try:
            if tag == "v":
                vertices.append([float(x) for x in parts[1:4]])
            elif tag == "f":
                idx = []
                for tok in parts[1:]:
                    i = int(tok.split("/")[0])
                    idx.append(i - 1 if i > 0 else len(vertices) + i)
                for k in range(1, len(idx) - 1):
                    faces.append([idx[0], idx[k], idx[k + 1]])
                    cap.append(in_cap)
            elif tag in ("g", "o"):
                in_cap = False
        except (ValueError, IndexError):
            raise ParseError(f"OBJ line {lineno}: {line.strip()!r}") from None
    if not faces:
        raise ParseError("OBJ contains no faces")
    v = np.array(vertices, dtype=np.float64).reshape(-1, 3)
    f = np.array(faces, dtype=np.int64)
    if f.min() < 0 or f.max() >= len(v):
        raise ParseError("OBJ face index out of range")
    return v, f, np.array(cap)


def _parse_stl_ascii(data):
    pts = []
    for line in data.decode("ascii", errors="replace").splitlines():
        parts = line.split()
        if parts and parts[0] == "vertex":
            try:
                pts.append([float(x) for x in parts[1:4]])
            except ValueError:
                raise ParseError(f"bad STL vertex line {line.strip()!r}") from None
    if not pts or len(pts) % 3:
        raise ParseError("ASCII STL vertex count is not a multiple of 3")
    v = np.array(pts, dtype=np.float64)
    return v, np.arange(len(v)).reshape(-1, 3)


def _parse_stl_binary(data):
    if len(data) < 84:
        raise ParseError("binary STL shorter than header")
    (count,) = struct.unpack("<I", data[80:84])
    if len(data) < 84 + 50 * count or count == 0:
        raise ParseError(f"binary STL declares {count} triangles but holds {(len(data) - 84) // 50}")
    dt = np.dtype([("n", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")])
    rec = np.frombuffer(data, dtype=dt, count=count, offset=84)
    v = rec["v"].reshape(-1, 3).astype(np.float64)
    return v, np.arange(len(v)).reshape(-1, 3)


def weld(vertices, faces, cap=None, tol=WELD_TOL):
    """
    Merge vertices closer than ``tol`` and validate the result.

    Raises
    ------
    TopologyError
      If the welded surface has boundary or non-manifold edges.
    """
    v = np.asarray(vertices, dtype=np.float64)
    f = np.asarray(faces, dtype=np.int64)
    cap = np.zeros(len(f), bool) if cap is None else np.asarray(cap, bool)
    pairs = cKDTree(v).query_pairs(tol, output_type="ndarray")
    if len(pairs):
        g = sparse.coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(len(v), len(v)))
        _, labels = _cc(g, directed=False)
        # representative = lowest original index of each cluster
        rep = np.full(labels.max() + 1, len(v))
        np.minimum.at(rep, labels, np.arange(len(v)))
        f = rep[labels][f]
    keep = (f[:, 0] != f[:, 1]) & (f[:, 1] != f[:, 2]) & (f[:, 0] != f[:, 2])
    mesh = _compact(v, f[keep], cap[keep], np.zeros((keep.sum(), 3)))
    mesh = Mesh(mesh.vertices, mesh.faces, mesh.cap)
    if mesh.is_empty:
        raise TopologyError("mesh has no non-degenerate faces")
    bad = mesh.boundary_edge_count
    if bad:
        raise TopologyError(f"mesh is not watertight: {bad} boundary edges after welding", bad)
    if mesh.volume < 0:
        mesh = Mesh(mesh.vertices, mesh.faces[:, ::-1], mesh.cap)
    return mesh


def _fmt(x):
    return format(float(x), ".17g")


def save_obj(mesh, path):
    """Write OBJ; cap faces follow a ``# cap`` comment line."""
    lines = ["# mdpdecomp mesh"]
    lines += [f"v {_fmt(a)} {_fmt(b)} {_fmt(c)}" for a, b, c in mesh.vertices]
    body = mesh.faces[~mesh.cap] + 1
    caps = mesh.faces[mesh.cap] + 1
    lines += [f"f {a} {b} {c}" for a, b, c in body]
    if len(caps):
        lines.append("# cap")
        lines += [f"f {a} {b} {c}" for a, b, c in caps]
    Path(path).write_text("\n".join(lines) + "\n")


def save_stl(mesh, path, binary=True):
    tri = mesh.vertices[mesh.faces]
    if binary:
        dt = np.dtype([("n", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")])
        rec = np.zeros(len(tri), dtype=dt)
        rec["n"] = mesh.normals
        rec["v"] = tri
        with open(path, "wb") as fh:
            fh.write(b"mdpdecomp".ljust(80, b" "))
            fh.write(struct.pack("<I", len(tri)))
            fh.write(rec.tobytes())
        return
    out = ["solid mdpdecomp"]
    for n, t in zip(mesh.normals, tri):
        out.append(f"  facet normal {_fmt(n[0])} {_fmt(n[1])} {_fmt(n[2])}")
        out.append("    outer loop")
        out += [f"      vertex {_fmt(p[0])} {_fmt(p[1])} {_fmt(p[2])}" for p in t]
        out.append("    endloop")
        out.append("  endfacet")
    out.append("endsolid mdpdecomp")
    Path(path).write_text("\n".join(out) + "\n")


# ---------------------------------------------------------------------------
# Plane clipping
# ---------------------------------------------------------------------------


def side_distances(mesh, plane):
    """Signed vertex distances with near-zero values snapped to exactly 0."""
    s = mesh.vertices @ plane.n - plane.offset
    s[np.abs(s) <= SIDE_TOL] = 0.0
    return s


def clip(m, p):
    """
    Split a closed mesh by a plane into capped upper and lower solids.

    Vertices within ``SIDE_TOL`` of the plane are treated as lying on it.
    Faces lying in the plane go to the side their outward normal faces
    away from. Straddling triangles are split along the exact crossing
    segment and the open cross-section on each side is closed with
    triangles tagged ``cap``.

    Returns
    -------
    upper, lower : Mesh
      Either may be empty when the plane misses the solid.
    cap_area : float
      Area of the cross-section.
    """
    split = _split(m, p)
    if split[0] == "upper":
        return m, Mesh.empty(), 0.0
    if split[0] == "lower":
        return Mesh.empty(), m, 0.0
    _, verts, s, (up_f, up_c, up_n), (lo_f, lo_c, lo_n) = split
    d = p.n
    u_axis, v_axis = plane_basis(d)
    cap_up, area_up = _cap_faces(up_f, verts, s, u_axis, v_axis)
    cap_lo, area_lo = _cap_faces(lo_f, verts, s, u_axis, -v_axis)

    upper = _assemble(verts, up_f, up_c, up_n, cap_up, -d)
    lower = _assemble(verts, lo_f, lo_c, lo_n, cap_lo, d)
    for part in (upper, lower):
        if not part.is_empty and part.boundary_edge_count:
            raise DegenerateCut("cap does not close the clipped side", None)
    return upper, lower, float(area_up)


def _split(m, p):
    """Classify and split faces; caps are left open.

    Returns ("upper" | "lower", ...) when the whole mesh is on one side,
    else (None, verts, s, upper_parts, lower_parts) with parts given as
    (faces, cap flags, normals).
    """
    d = p.n
    s = side_distances(m, p)
    fs = s[m.faces]
    npos = (fs > 0).sum(axis=1)
    nneg = (fs < 0).sum(axis=1)
    coplanar = (npos == 0) & (nneg == 0)
    down = _coplanar_down(m, d, coplanar, npos) if coplanar.any() else np.zeros(len(fs), bool)
    up_whole = ((nneg == 0) & (npos > 0)) | (coplanar & down)
    lo_whole = ((npos == 0) & (nneg > 0)) | (coplanar & ~down)
    mixed = (npos > 0) & (nneg > 0)

    if not mixed.any():
        if not up_whole.any():
            return ("lower",)
        if not lo_whole.any():
            return ("upper",)

    nv = len(m.vertices)
    mf = m.faces[mixed]
    mfs = fs[mixed]
    lone_pos = npos[mixed] == 1
    lone = np.where(lone_pos, np.argmax(mfs > 0, axis=1), np.argmax(mfs < 0, axis=1))
    rows = np.arange(len(mf))
    iq, ir = (lone + 1) % 3, (lone + 2) % 3
    L, Q, R = mf[rows, lone], mf[rows, iq], mf[rows, ir]
    sQ, sR = mfs[rows, iq], mfs[rows, ir]

    # every L-Q / L-R edge whose far end is not on the plane crosses it
    cq, cr = sQ != 0, sR != 0
    ekeys = np.concatenate([np.sort(np.stack([L[cq], Q[cq]], 1), 1), np.sort(np.stack([L[cr], R[cr]], 1), 1)])
    uniq, inv = np.unique(ekeys, axis=0, return_inverse=True)
    inv = inv.ravel()
    a, b = uniq[:, 0], uniq[:, 1]
    t = s[a] / (s[a] - s[b])
    cut_pts = m.vertices[a] + t[:, None] * (m.vertices[b] - m.vertices[a])
    Xq = Q.copy()
    Xq[cq] = nv + inv[: cq.sum()]
    Xr = R.copy()
    Xr[cr] = nv + inv[cq.sum():]
    verts = np.vstack([m.vertices, cut_pts])

    # lone corner triangle keeps the face orientation; the rest is a quad
    # (Xq, Q, R, Xr) that collapses to a triangle when Q or R is on the plane
    corner = np.stack([L, Xq, Xr], axis=1)
    quad_a = np.stack([Xq, Q, R], axis=1)
    quad_b = np.stack([Xq, R, Xr], axis=1)
    qa_ok = cq  # Q on the plane -> Xq == Q, first quad triangle degenerates
    qb_ok = cr
    only_b = ~cq
    quad_b[only_b] = np.stack([Q[only_b], R[only_b], Xr[only_b]], axis=1)
    mcap = m.cap[mixed]
    mnorm = m.normals[mixed]

    def side(whole, corner_mask):
        quad_mask = ~corner_mask
        parts_f = [m.faces[whole], corner[corner_mask], quad_a[quad_mask & qa_ok], quad_b[quad_mask & qb_ok]]
        parts_c = [m.cap[whole], mcap[corner_mask], mcap[quad_mask & qa_ok], mcap[quad_mask & qb_ok]]
        parts_n = [m.normals[whole], mnorm[corner_mask], mnorm[quad_mask & qa_ok], mnorm[quad_mask & qb_ok]]
        return np.vstack(parts_f), np.concatenate(parts_c), np.vstack(parts_n)

    return None, verts, s, side(up_whole, lone_pos), side(lo_whole, ~lone_pos)


def lower_component_minima(m, p, axis=(0.0, 0.0, 1.0)):
    """
    Lowest value of ``axis . x`` on each solid component below ``p``.

    Same answer as clipping and splitting the lower part, without
    building the caps: open surface patches are joined where their rim
    loops bound one cross-section polygon.
    """
    split = _split(m, p)
    axis = np.asarray(axis, float)
    if split[0] == "upper":
        return np.zeros(0)
    if split[0] == "lower":
        count, labels = face_components(m)
        vals = (m.vertices @ axis)[m.faces].min(axis=1)
        out = np.full(count, np.inf)
        np.minimum.at(out, labels, vals)
        return out
    _, verts, s, _, (faces, _, _) = split
    n = len(faces)
    e = faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
    fid = np.repeat(np.arange(n), 3)
    nv = len(verts)
    key = np.minimum(e[:, 0], e[:, 1]) * nv + np.maximum(e[:, 0], e[:, 1])
    order = np.argsort(key, kind="stable")
    same = key[order][1:] == key[order][:-1]
    i = np.nonzero(same)[0]
    rows, cols = [fid[order[i]]], [fid[order[i + 1]]]
    be, bf = _rim(faces, nv)
    if len(be):
        u_axis, v_axis = plane_basis(p.n)
        sd = np.concatenate([s, np.zeros(nv - len(s))])
        if np.any(sd[be.ravel()] != 0):
            raise DegenerateCut("clipped side has open edges off the cutting plane", verts[be[0]])
        xy = np.stack([verts @ u_axis, verts @ -v_axis], axis=1)
        loops, loop_edges, areas, flat, groups = _rim_groups(be, xy, verts)
        members = [[o] + groups[o] for o in groups] + [[k] for k in np.nonzero(flat)[0]]
        for group in members:
            owners = np.concatenate([bf[loop_edges[k]] for k in group])
            rows.append(owners[:-1])
            cols.append(owners[1:])
    r, c = np.concatenate(rows), np.concatenate(cols)
    g = sparse.coo_matrix((np.ones(len(r)), (r, c)), shape=(n, n))
    count, labels = _cc(g, directed=False)
    vals = (verts @ axis)[faces].min(axis=1)
    out = np.full(count, np.inf)
    np.minimum.at(out, labels, vals)
    return out


def _coplanar_down(m, d, coplanar, npos):
    """Which faces lying in the plane face away from it downwards.

    The geometric normal decides; zero-area slivers (collinear cap
    points) join the side holding most of their edge neighbours.
    """
    tri = m.vertices[m.faces[coplanar]]
    g = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    scale = np.max(np.linalg.norm(tri - tri[:, [1, 2, 0]], axis=2), axis=1) ** 2
    gd = g @ d
    down = np.zeros(len(m.faces), bool)
    idx = np.nonzero(coplanar)[0]
    down[idx] = gd < 0
    sliver = idx[np.abs(gd) <= 1e-12 * np.maximum(scale, 1e-300)]
    if len(sliver):
        _, pairs = m.edge_faces
        up = npos > 0
        for f in sliver:
            nb = np.concatenate([pairs[pairs[:, 0] == f, 1], pairs[pairs[:, 1] == f, 0]])
            votes = [bool(down[k]) if coplanar[k] else bool(up[k]) for k in nb if k not in sliver]
            down[f] = sum(votes) * 2 > len(votes)
    return down


def _assemble(verts, faces, cap, normals, cap_faces, cap_normal):
    if len(faces) == 0:
        return Mesh.empty()
    f = np.vstack([faces, cap_faces]) if len(cap_faces) else faces
    c = np.concatenate([cap, np.ones(len(cap_faces), bool)])
    n = np.vstack([normals, np.tile(cap_normal, (len(cap_faces), 1))])
    return _compact(verts, f, c, n)


def plane_basis(d):
    """Orthonormal (u, v) with u x v = d, chosen deterministically."""
    d = np.asarray(d, float)
    helper = np.array([1.0, 0.0, 0.0]) if abs(d[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = np.cross(helper, d)
    u /= np.linalg.norm(u)
    return u, np.cross(d, u)


def _boundary_edges(faces, nverts):
    return _rim(faces, nverts)[0]


def _rim(faces, nverts):
    """Directed edges without a reversed twin, and the face owning each."""
    e = faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
    keys = e[:, 0] * nverts + e[:, 1]
    rkeys = e[:, 1] * nverts + e[:, 0]
    open_ = ~np.isin(keys, rkeys)
    return e[open_], np.repeat(np.arange(len(faces)), 3)[open_]


def _cap_faces(faces, verts, s, u_axis, v_axis):
    """Triangulate the open rim of one clipped side.

    The 2D frame is chosen so the solid's cross-section lies to the left
    of every rim edge; outer loops are then counter-clockwise and holes
    clockwise, and cap triangles must come out clockwise.
    """
    if len(faces) == 0:
        return np.zeros((0, 3), np.int64), 0.0
    be = _boundary_edges(faces, len(verts))
    if len(be) == 0:
        return np.zeros((0, 3), np.int64), 0.0
    sd = np.concatenate([s, np.zeros(len(verts) - len(s))])
    if np.any(sd[be.ravel()] != 0):
        raise DegenerateCut("clipped side has open edges off the cutting plane", verts[be[0]])
    xy = np.stack([verts @ u_axis, verts @ v_axis], axis=1)
    loops, _, areas, flat, groups = _rim_groups(be, xy, verts)

    tris = []
    total = 0.0
    # loops enclosing no area (the two sides touch along a line) are
    # closed with a fan of zero-area triangles so every rim edge is paired
    for i in np.nonzero(flat)[0]:
        lp = loops[i]
        if len(lp) >= 3:
            tris.append(np.stack([np.full(len(lp) - 2, lp[0]), lp[2:], lp[1:-1]], axis=1))
    for o in groups:
        rings = [loops[o]] + [loops[h] for h in groups[o]]
        simple = [_simplify_ring(r, xy) for r in rings]
        expect = areas[o] + sum(areas[h] for h in groups[o])
        if len(simple[0]) < 3:
            raise DegenerateCut("cross-section loop could not be triangulated", verts[loops[o]])
        simple = [r for r in simple if len(r) >= 3]
        ids = np.concatenate(simple)
        ends = np.cumsum([len(r) for r in simple]).astype(np.uint32)
        tri = mapbox_earcut.triangulate_float64(xy[ids], ends).reshape(-1, 3)
        if len(tri) == 0:
            raise DegenerateCut("cross-section loop could not be triangulated", verts[loops[o]])
        g = ids[tri]
        signed = _signed_areas(xy[g])
        got = abs(signed.sum())
        if abs(got - expect) > 1e-9 * max(expect, 1e-12) + 1e-12 or np.abs(signed).sum() > got * (1 + 1e-9) + 1e-12:
            raise DegenerateCut("cross-section loop is not simple; triangulation area mismatch", verts[loops[o]])
        g = _restore_skipped(g, rings)
        if signed.sum() > 0:
            g = g[:, ::-1]
        tris.append(g)
        total += expect
    if not tris:
        return np.zeros((0, 3), np.int64), 0.0
    return np.vstack(tris), total


def _rim_groups(be, xy, verts):
    """
    Chain rim edges into loops and group each outer loop with its holes.

    Returns loops, edge indices per loop, signed areas, a mask of loops
    enclosing no area, and a dict outer -> list of holes.
    """
    loops, loop_edges = _chain_loops(be, xy)
    areas = np.array([_loop_area(xy[lp]) for lp in loops])
    perim2 = np.array([np.linalg.norm(xy[lp] - xy[np.roll(lp, -1)], axis=1).sum() ** 2 for lp in loops])
    flat = np.abs(areas) <= 1e-10 * np.maximum(perim2, 1e-300)
    outers = [i for i in range(len(loops)) if areas[i] > 0 and not flat[i]]
    holes = [i for i in range(len(loops)) if areas[i] <= 0 and not flat[i]]
    groups = {i: [] for i in outers}
    for h in holes:
        pt = xy[loops[h][0]]
        owners = [o for o in outers if _point_in_loop(pt, xy[loops[o]])]
        if not owners:
            raise DegenerateCut("cross-section hole is not contained in any outer loop", verts[loops[h]])
        groups[min(owners, key=lambda o: areas[o])].append(h)
    return loops, loop_edges, areas, flat, groups


def _signed_areas(p):
    return 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                  - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))


def _simplify_ring(ring, xy):
    """Drop ring vertices that are duplicate or collinear with their neighbours.

    Each pass drops flagged vertices whose predecessor is kept, so a
    corner hidden behind a duplicate point is re-examined next pass.
    """
    pts = np.asarray(ring, np.int64)
    while len(pts) > 3:
        p = xy[pts]
        ab = p - np.roll(p, 1, axis=0)
        bc = np.roll(p, -1, axis=0) - p
        cross = ab[:, 0] * bc[:, 1] - ab[:, 1] * bc[:, 0]
        scale = (np.hypot(ab[:, 0], ab[:, 1]) + np.hypot(bc[:, 0], bc[:, 1])) ** 2
        drop = np.abs(cross) <= 1e-10 * scale
        if not drop.any():
            break
        drop &= ~np.roll(drop, 1) | (drop.all() & (np.arange(len(pts)) == 0))
        if len(pts) - drop.sum() < 3:
            drop[np.nonzero(drop)[0][1:]] = False
        pts = pts[~drop]
    if len(pts) == 3:
        a, b, c = xy[pts]
        ab, ac = b - a, c - a
        if abs(ab[0] * ac[1] - ab[1] * ac[0]) <= 1e-10 * (math.hypot(*ab) + math.hypot(*ac)) ** 2:
            return []
    return [int(x) for x in pts]


def _restore_skipped(tri, rings):
    """Put back ring vertices the triangulator dropped as collinear or duplicate.

    A dropped run lies on the edge joining its used neighbours; the
    triangle on that edge is fanned through the run from its apex.
    """
    tri = [tuple(int(x) for x in t) for t in tri]
    for ring in rings:
        ring = [int(x) for x in ring]
        used = {x for t in tri for x in t}
        pos = [i for i, x in enumerate(ring) if x in used]
        if len(pos) == len(ring) or not pos:
            continue
        for k, i in enumerate(pos):
            j = pos[(k + 1) % len(pos)]
            run = ring[i + 1:j] if j > i else ring[i + 1:] + ring[:j]
            if not run:
                continue
            a, b = ring[i], ring[j]
            for t, (x, y, z) in enumerate(tri):
                cyc = [(x, y, z), (y, z, x), (z, x, y)]
                hit = [c for c in cyc if {c[0], c[1]} == {a, b}]
                if hit:
                    break
            else:
                raise DegenerateCut("cap triangulation lost a rim edge", None)
            p, q, apex = hit[0]
            chain = [a] + run + [b] if p == a else [b] + run[::-1] + [a]
            tri[t:t + 1] = [(chain[m], chain[m + 1], apex) for m in range(len(chain) - 1)]
    return np.array(tri, dtype=np.int64).reshape(-1, 3)


def _loop_area(p):
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _point_in_loop(pt, poly):
    x, y = pt
    xi, yi = poly[:, 0], poly[:, 1]
    xj, yj = np.roll(xi, 1), np.roll(yi, 1)
    crosses = (yi > y) != (yj > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = (xj - xi) * (y - yi) / (yj - yi) + xi
    return bool(np.count_nonzero(crosses & (x < xint)) % 2)


def _chain_loops(edges, xy):
    """Link directed rim edges into closed loops.

    Where several edges leave one vertex the walk takes the sharpest
    left turn, which keeps regions touching at a single point apart.
    """
    out = {}
    for k, (a, b) in enumerate(edges):
        out.setdefault(int(a), []).append(k)
    used = np.zeros(len(edges), bool)
    loops, loop_edges = [], []
    for start in np.lexsort((edges[:, 1], edges[:, 0])):
        if used[start]:
            continue
        loop, ks = [], []
        k = start
        while not used[k]:
            used[k] = True
            a, b = int(edges[k, 0]), int(edges[k, 1])
            loop.append(a)
            ks.append(k)
            if b == loop[0]:
                break
            nxt = [j for j in out.get(b, []) if not used[j]]
            if not nxt:
                break
            if len(nxt) > 1:
                din = xy[b] - xy[a]
                def turn(j):
                    dout = xy[edges[j, 1]] - xy[b]
                    return math.atan2(din[0] * dout[1] - din[1] * dout[0], din @ dout)
                nxt.sort(key=lambda j: (-turn(j), j))
            k = nxt[0]
        if int(edges[k, 1]) != loop[0]:
            raise DegenerateCut("cross-section boundary does not close", xy[loop])
        loops.append(np.array(loop))
        loop_edges.append(np.array(ks))
    return loops, loop_edges


# ---------------------------------------------------------------------------
# Connectivity and measures
# ---------------------------------------------------------------------------


def face_components(m):
    """Component label per face under edge adjacency, ordered by lowest face id."""
    if m.is_empty:
        return 0, np.zeros(0, np.int64)
    _, pairs = m.edge_faces
    n = len(m.faces)
    g = sparse.coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    count, labels = _cc(g, directed=False)
    # relabel so component order follows first face index
    first = np.full(count, n)
    np.minimum.at(first, labels, np.arange(n))
    rank = np.argsort(np.argsort(first))
    return count, rank[labels]


def connected_components(m):
    """Split a mesh into its edge-connected shells."""
    count, labels = face_components(m)
    return [m.submesh(labels == k) for k in range(count)]


def bounding_sphere(m):
    """
    Minimal enclosing sphere of the vertices (Welzl, move-to-front form).

    Points are first reduced to their convex hull and visited in a
    fixed pseudo-random order, so the result is exact and repeatable.

    Returns
    -------
    center : (3,) float
    radius : float
    """
    pts = np.unique(np.asarray(m.vertices if isinstance(m, Mesh) else m, float), axis=0)
    if len(pts) == 0:
        raise ValueError("bounding sphere of an empty point set")
    if len(pts) > 8:
        try:
            pts = pts[ConvexHull(pts).vertices]
        except Exception:
            pass
    order = np.random.default_rng(0).permutation(len(pts))
    pts = pts[order]
    c, r2 = _welzl(pts)
    r = math.sqrt(r2)
    # absorb round-off so every point is enclosed
    r = max(r, float(np.sqrt(((pts - c) ** 2).sum(axis=1)).max()))
    return c, r


def _inside(p, c, r2):
    return ((p - c) ** 2).sum() <= r2 * (1 + 1e-12) + 1e-300


def _ball_from(support):
    p0 = support[0]
    if len(support) == 1:
        return p0.copy(), 0.0
    a = np.array([q - p0 for q in support[1:]])
    m = 2.0 * a @ a.T
    rhs = (a * a).sum(axis=1)
    lam = np.linalg.lstsq(m, rhs, rcond=None)[0]
    c = p0 + lam @ a
    return c, float(((p0 - c) ** 2).sum())


def _welzl(pts):
    def with_support(n, support):
        c, r2 = _ball_from(support)
        for i in range(n):
            if not _inside(pts[i], c, r2):
                if len(support) == 3:
                    c, r2 = _ball_from(support + [pts[i]])
                else:
                    c, r2 = with_support(i, support + [pts[i]])
        return c, r2

    c, r2 = pts[0].copy(), 0.0
    for i in range(1, len(pts)):
        if not _inside(pts[i], c, r2):
            c, r2 = with_support(i, [pts[i]])
    return c, r2


# ---------------------------------------------------------------------------
# Thin-feature detection
# ---------------------------------------------------------------------------


def _ray_hits(origins, dirs, tri, skip, chunk=4096):
    """Nearest positive hit distance per ray (Moller-Trumbore), inf on miss.

    Also returns the index of the face that was hit (-1 on miss).
    """
    v0, e1, e2 = tri[:, 0], tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]
    best = np.full(len(origins), np.inf)
    which = np.full(len(origins), -1)
    step = max(1, chunk * 64 // max(len(tri), 1))
    for lo in range(0, len(origins), step):
        o, dvec = origins[lo:lo + step, None, :], dirs[lo:lo + step, None, :]
        pvec = np.cross(dvec, e2[None])
        det = (e1[None] * pvec).sum(-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / det
            tvec = o - v0[None]
            u = (tvec * pvec).sum(-1) * inv
            qvec = np.cross(tvec, e1[None])
            v = (dvec * qvec).sum(-1) * inv
            t = (e2[None] * qvec).sum(-1) * inv
            ok = (np.abs(det) > 1e-14) & (u >= -1e-12) & (v >= -1e-12) & (u + v <= 1 + 1e-12) & (t > 1e-9)
        ok[np.arange(ok.shape[0]), skip[lo:lo + step]] = False
        t = np.where(ok, t, np.inf)
        j = np.argmin(t, axis=1)
        tb = t[np.arange(len(j)), j]
        best[lo:lo + step] = tb
        which[lo:lo + step] = np.where(np.isfinite(tb), j, -1)
    return best, which


def shape_diameter(m, cone_deg=30.0, rays=8):
    """
    Local thickness per face from rays cast inward.

    ``rays`` directions are spread evenly on a cone of aperture
    ``cone_deg`` around the inverted face normal; the thickness is the
    mean hit distance over the rays that hit. Returns the thickness and
    the face hit by the central inward ray.
    """
    n = m.normals
    ok = np.linalg.norm(n, axis=1) > 0.5
    inward = -n
    helper = np.where(np.abs(inward[:, :1]) < 0.9, np.array([[1.0, 0, 0]]), np.array([[0, 1.0, 0]]))
    e1 = np.cross(inward, helper)
    e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
    e2 = np.cross(inward, e1)
    half = math.radians(cone_deg) / 2.0
    origins = m.centroids
    tri = m.vertices[m.faces]
    fid = np.arange(len(m.faces))
    dirs = []
    for k in range(rays):
        phi = 2 * math.pi * k / rays
        dirs.append(math.cos(half) * inward + math.sin(half) * (math.cos(phi) * e1 + math.sin(phi) * e2))
    all_dirs = np.concatenate(dirs)
    all_orig = np.tile(origins, (rays, 1))
    t, _ = _ray_hits(all_orig, all_dirs, tri, np.tile(fid, rays))
    t = t.reshape(rays, -1)
    hit = np.isfinite(t)
    with np.errstate(invalid="ignore"):
        sdf = np.where(hit.any(axis=0), np.where(hit, t, 0).sum(axis=0) / np.maximum(hit.sum(axis=0), 1), np.inf)
    _, opposite = _ray_hits(origins, inward, tri, fid)
    sdf[~ok] = np.inf
    return sdf, opposite


def detect_fragile_regions(m, thickness_threshold=1.0, cone_deg=30.0, rays=8):
    """
    Thin fins and bridges: faces whose shape diameter is below the threshold.

    Faces are grouped by edge adjacency and additionally joined with the
    face their inward ray hits, so both sides of a thin wall form one
    region. Regions are ordered by their lowest face id.
    """
    if not thickness_threshold > 0:
        raise ValueError("thickness threshold must be positive")
    sdf, opposite = shape_diameter(m, cone_deg, rays)
    thin = sdf < thickness_threshold
    if not thin.any():
        return []
    n = len(m.faces)
    _, pairs = m.edge_faces
    keep = thin[pairs[:, 0]] & thin[pairs[:, 1]]
    rows, cols = [pairs[keep, 0]], [pairs[keep, 1]]
    link = thin & (opposite >= 0)
    link[link] &= thin[opposite[link]]
    rows.append(np.nonzero(link)[0])
    cols.append(opposite[link])
    r, c = np.concatenate(rows), np.concatenate(cols)
    g = sparse.coo_matrix((np.ones(len(r)), (r, c)), shape=(n, n))
    _, labels = _cc(g, directed=False)
    regions = []
    seen = set()
    for f in np.nonzero(thin)[0]:
        lab = labels[f]
        if lab in seen:
            continue
        seen.add(lab)
        ids = np.nonzero((labels == lab) & thin)[0]
        regions.append(FragileRegion(frozenset(int(i) for i in ids), m.centroids[ids].copy()))
    return regions
