"""
manufacturability.py
--------------------

Overhang classification, the risky-area objective, the search criteria
and candidate clipping planes.

The batch evaluator at the bottom scores many parallel planes on a mesh
without clipping it: every per-plane quantity the search needs is a
weighted sum over faces, where the weight is the fraction of the face
lying above the plane.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components as _cc

from .errors import ConfigError
from .geometry import PLANE_TOL, SIDE_TOL, Plane, Platform, clip, connected_components, lower_component_minima

UP = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class PrintConfig:
    """
    alpha_max : float
      Maximal self-supporting angle in degrees.
    direction_samples : int
      Number of candidate printing directions on the unit sphere.
    plane_step : float
      Spacing in mm between parallel candidate planes.
    platform : Platform
    directions : tuple or None
      Explicit candidate directions; overrides sampling when given.
    fragile_threshold : float
      Shape-diameter threshold in mm for thin-feature detection.
    """

    alpha_max: float = 45.0
    direction_samples: int = 600
    plane_step: float = 1.0
    platform: Platform = field(default_factory=Platform)
    directions: tuple | None = None
    fragile_threshold: float = 1.0

    def __post_init__(self):
        if not 0 < self.alpha_max < 90:
            raise ConfigError("alpha_max must lie in (0, 90) degrees")
        if self.direction_samples < 1:
            raise ConfigError("direction_samples must be >= 1")
        if not self.plane_step > 0:
            raise ConfigError("plane_step must be positive")
        if not self.fragile_threshold > 0:
            raise ConfigError("fragile_threshold must be positive")
        if self.directions is not None:
            dirs = tuple(tuple(float(x) for x in d) for d in self.directions)
            if not dirs or any(len(d) != 3 or not any(d) for d in dirs):
                raise ConfigError("directions must be non-zero 3-vectors")
            object.__setattr__(self, "directions", dirs)

    @property
    def sin_alpha(self):
        return math.sin(math.radians(self.alpha_max))

    def to_dict(self):
        return {
            "alpha_max_deg": self.alpha_max,
            "direction_samples": self.direction_samples,
            "plane_step_mm": self.plane_step,
            "platform_radius_mm": self.platform.radius,
            "directions": [list(d) for d in self.directions] if self.directions else None,
            "fragile_threshold_mm": self.fragile_threshold,
        }

    @classmethod
    def from_dict(cls, d):
        known = {"alpha_max_deg", "direction_samples", "plane_step_mm", "platform_radius_mm",
                 "directions", "fragile_threshold_mm"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        try:
            return cls(
                alpha_max=float(d.get("alpha_max_deg", 45.0)),
                direction_samples=int(d.get("direction_samples", 600)),
                plane_step=float(d.get("plane_step_mm", 1.0)),
                platform=Platform(float(d.get("platform_radius_mm", 100.0))),
                directions=d.get("directions"),
                fragile_threshold=float(d.get("fragile_threshold_mm", 1.0)),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None


def load_print_config(path):
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    return PrintConfig.from_dict(data)


@dataclass
class FeasibilityReport:
    passes_connectivity: bool
    passes_platform: bool
    upper_volume: float
    residual_risk: float

    @property
    def feasible(self):
        return self.passes_connectivity and self.passes_platform


@dataclass
class DecompositionPlan:
    """Parts in printing order; ``parts[0]`` stands on the platform."""

    parts: list
    total_J: float = 0.0

    @property
    def volumes(self):
        return [m.volume for m, _ in self.parts]


# ---------------------------------------------------------------------------
# Risk
# ---------------------------------------------------------------------------


def is_risky(face_normal, d, alpha_max):
    """1 if the face overhangs more steeply than ``alpha_max`` w.r.t. ``d``."""
    return int(float(np.dot(face_normal, d)) < -math.sin(math.radians(alpha_max)))


def risky_mask(normals, d, alpha_max):
    return normals @ np.asarray(d, float) < -math.sin(math.radians(alpha_max))


def on_plane_mask(mesh, plane, tol=PLANE_TOL):
    """Faces whose three vertices lie within ``tol`` of the plane."""
    s = np.abs(mesh.vertices @ plane.n - plane.offset)
    return (s[mesh.faces] <= tol).all(axis=1)


def risky_area(m, d, cfg, base):
    """Overhang area of ``m`` printed along ``d`` on ``base``.

    Faces lying on the base plane are where the part meets what is below
    it (a cap, or the platform) and never count.
    """
    if m.is_empty:
        return 0.0
    mask = risky_mask(m.normals, d, cfg.alpha_max) & ~on_plane_mask(m, base)
    return float(m.areas[mask].sum())


def objective_J(plan, cfg):
    return float(sum(risky_area(part, base.n, cfg, base) for part, base in plan.parts))


def residual_risky_area(m_k, p, cfg):
    """Overhang area left on the part above ``p`` when printed along its normal."""
    upper, _, _ = clip(m_k, p)
    return risky_area(upper, p.n, cfg, p)


def disc_plane_distance(plane, platform):
    """Euclidean gap between the platform disc and a plane (0 if they meet).

    Over the disc, n . x - c ranges over [-c - R|n_xy|, -c + R|n_xy|]; the
    distance is the endpoint closest to zero unless the range straddles it.
    """
    n = plane.n
    spread = platform.radius * math.hypot(n[0], n[1])
    lo, hi = -plane.offset - spread, -plane.offset + spread
    if lo <= 0 <= hi:
        return 0.0
    return min(abs(lo), abs(hi))


def platform_below(plane, platform):
    """Platform check: every platform point strictly on the lower side."""
    n = plane.n
    return plane.offset - platform.radius * math.hypot(n[0], n[1]) > 0


def components_touch_platform(m, tol=PLANE_TOL):
    """Connectivity check on an explicit mesh."""
    return all(c.vertices[:, 2].min() <= tol for c in connected_components(m))


def check_criteria(remaining_lower, p, cfg, upper=None):
    """
    Feasibility of a cut whose lower part is ``remaining_lower``.

    ``upper`` (the part above ``p``) fills the volume and residual-risk
    fields; without it both are reported as 0.
    """
    return FeasibilityReport(
        passes_connectivity=bool(not remaining_lower.is_empty and components_touch_platform(remaining_lower)),
        passes_platform=bool(platform_below(p, cfg.platform)),
        upper_volume=float(upper.volume) if upper is not None and not upper.is_empty else 0.0,
        residual_risk=risky_area(upper, p.n, cfg, p) if upper is not None else 0.0,
    )


# ---------------------------------------------------------------------------
# Candidates
# ---------------------------------------------------------------------------


def sample_directions(cfg):
    """Candidate printing directions.

    Fibonacci lattice over the whole sphere with both poles included
    (z_i = 1 - 2i/(n-1)), so horizontal cuts are always available.
    Near-duplicates (within 1e-6) are dropped, keeping the first.
    """
    if cfg.directions is not None:
        dirs = np.array(cfg.directions, float)
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    else:
        n = cfg.direction_samples
        if n == 1:
            return UP[None].copy()
        i = np.arange(n)
        z = 1 - 2 * i / (n - 1)
        r = np.sqrt(np.clip(1 - z * z, 0, None))
        phi = i * math.pi * (3 - math.sqrt(5))
        dirs = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    keep = []
    for k, d in enumerate(dirs):
        if all(np.abs(d - dirs[j]).max() > 1e-6 for j in keep):
            keep.append(k)
    return dirs[keep]


def plane_offsets(lo, hi, step):
    """Offsets lo + j*step for j >= 1 that stay at least one step below hi."""
    count = int(math.floor((hi - lo) / step - 1 + 1e-9))
    if count <= 0:
        return np.zeros(0)
    return lo + step * np.arange(1, count + 1)


def generate_candidates(m_k, cfg):
    planes = []
    for d in sample_directions(cfg):
        s = m_k.vertices @ d
        for c in plane_offsets(s.min(), s.max(), cfg.plane_step):
            planes.append(Plane(tuple(d), float(c)))
    return planes


# ---------------------------------------------------------------------------
# Clip-free batch evaluation
# ---------------------------------------------------------------------------


class PlaneBatchEvaluator:
    """
    Score families of parallel planes on one mesh without clipping.

    For each face the share above a plane is a weight ``w`` in [0, 1]:
    1 for faces wholly above, t1*t2 when a single vertex pokes above (t
    are the edge parameters of the crossing points), 1 - t1*t2 when a
    single vertex pokes below. Faces lying in the plane get w = 0 and are
    tracked separately. Volumes use the cone from a point on the plane,
    for which the cap contributes nothing.
    """

    def __init__(self, mesh, cfg):
        self.mesh = mesh
        self.cfg = cfg
        tri = mesh.vertices[mesh.faces]
        cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        self.cross6 = cross / 6.0
        self.k0 = np.einsum("ij,ij->i", tri[:, 0], cross) / 6.0
        on_platform = (np.abs(mesh.vertices[:, 2])[mesh.faces] <= PLANE_TOL).all(axis=1)
        e_up = risky_mask(mesh.normals, UP, cfg.alpha_max) & ~on_platform
        self.a_up = mesh.areas * e_up
        self.a_up_orig = self.a_up * ~mesh.cap
        self.noncap = ~mesh.cap
        self.total_volume = mesh.volume
        edges, pairs = mesh.edge_faces
        self.edges, self.pairs = edges, pairs
        self.touch_z = mesh.vertices[:, 2] <= PLANE_TOL

    def evaluate(self, d, offsets, return_sides=False):
        """
        Per-plane measures for planes {d . x = c}, c in ``offsets``.

        Returns a dict of (C,) arrays: upper_volume, residual (R),
        removed (overhang area taken off the platform-printed remainder),
        delta (removed minus R, original surface only), and with
        ``return_sides`` the snapped signed distances ``s`` of shape (C, V).
        """
        m = self.mesh
        d = np.asarray(d, float)
        c = np.asarray(offsets, float)
        s = (m.vertices @ d)[None, :] - c[:, None]
        s[np.abs(s) <= SIDE_TOL] = 0.0
        sf = s[:, m.faces]
        pos, neg = sf > 0, sf < 0
        npos, nneg = pos.sum(-1), neg.sum(-1)
        lone = np.where(npos == 1, np.argmax(pos, -1), np.argmax(neg, -1))[..., None]
        sl = np.take_along_axis(sf, lone, -1)[..., 0]
        sq = np.take_along_axis(sf, (lone + 1) % 3, -1)[..., 0]
        sr = np.take_along_axis(sf, (lone + 2) % 3, -1)[..., 0]
        mixed = (npos > 0) & (nneg > 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            tt = np.where(mixed, (sl / (sl - sq)) * (sl / (sl - sr)), 0.0)
        w = np.where((nneg == 0) & (npos > 0), 1.0, 0.0)
        w = np.where(mixed & (npos == 1), tt, w)
        w = np.where(mixed & (npos == 2), 1.0 - tt, w)
        nd = m.normals @ d
        cop_down = ((npos == 0) & (nneg == 0) & (nd < 0)[None]).astype(float)
        risky_d = risky_mask(m.normals, d, self.cfg.alpha_max)
        a_d = m.areas * risky_d
        vol_face = self.k0[None, :] - c[:, None] * (self.cross6 @ d)[None, :]
        upper_volume = (w * vol_face).sum(1)
        residual = w @ a_d
        share = w + cop_down
        removed = share @ self.a_up
        delta = share @ self.a_up_orig - w @ (a_d * self.noncap)
        out = {"upper_volume": upper_volume, "residual": residual, "removed": removed, "delta": delta}
        if return_sides:
            out["s"] = s
        return out

    def lower_connected_fast(self, s_row, d):
        """
        Sufficient connectivity test from vertex sides alone.

        Lower-side faces are linked through shared edges that keep a
        piece below the plane. If every such surface patch already reaches
        the platform, every solid component does too. A False answer is
        inconclusive: patches may still be joined through a cap.
        """
        m = self.mesh
        sf = s_row[m.faces]
        nneg = (sf < 0).sum(1)
        coplanar = (sf == 0).all(1)
        lower = (nneg > 0) | (coplanar & (m.normals @ np.asarray(d, float) > 0))
        a, b = self.edges[:, 0], self.edges[:, 1]
        sa, sb = s_row[a], s_row[b]
        link = ((sa < 0) | (sb < 0) | ((sa == 0) & (sb == 0))) & lower[self.pairs[:, 0]] & lower[self.pairs[:, 1]]
        idx = np.nonzero(lower)[0]
        if len(idx) == 0:
            return False
        remap = np.full(len(m.faces), -1)
        remap[idx] = np.arange(len(idx))
        p = self.pairs[link]
        g = sparse.coo_matrix((np.ones(len(p)), (remap[p[:, 0]], remap[p[:, 1]])), shape=(len(idx), len(idx)))
        count, labels = _cc(g, directed=False)
        vert_ok = self.touch_z & (s_row <= 0)
        face_ok = vert_ok[m.faces[idx]].any(1)
        touched = np.zeros(count, bool)
        touched[labels[face_ok]] = True
        return bool(touched.all())

    def lower_connected(self, plane):
        """Exact connectivity check: the fast test first, then per-component minima."""
        s = self.mesh.vertices @ plane.n - plane.offset
        s[np.abs(s) <= SIDE_TOL] = 0.0
        if self.lower_connected_fast(s, plane.n):
            return True
        minima = lower_component_minima(self.mesh, plane)
        return bool(len(minima) and (minima <= PLANE_TOL).all())
