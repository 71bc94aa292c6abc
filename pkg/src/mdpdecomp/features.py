"""
Six-metric description of a candidate cut.

Every metric is a ratio, so the vector is unchanged when the model and
all length parameters are scaled together:

  m1  overhang area the cut takes off the platform-printed remainder,
      net of the overhang it leaves on the removed part, over J_total
  m2  running sum of m1 along the trajectory, this cut included
  m3  volume above the plane over the model volume
  m4  gap between platform disc and plane over the bounding radius
  m5  smallest distance from a thin feature to the plane over the
      bounding radius (1 when the model has no thin features)
  m6  running residual overhang, this cut included, over J_total

J_total is the overhang area of the whole model printed in one piece
along +z. The remainder always sits on the platform, so +z is the
reference direction for every cut.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import bounding_sphere, clip, detect_fragile_regions
from .manufacturability import UP, disc_plane_distance, on_plane_mask, risky_area, risky_mask

N_FEATURES = 6
NAMES = ("m1", "m2", "m3", "m4", "m5", "m6")


@dataclass
class FeatureContext:
    """Per-model constants shared by every cut of one search."""

    J_total: float
    volume: float
    radius: float
    fragile_points: np.ndarray
    platform: object

    @classmethod
    def build(cls, mesh, cfg, fragile=None):
        if fragile is None:
            fragile = detect_fragile_regions(mesh, cfg.fragile_threshold)
        pts = [r.representative_points for r in fragile]
        pts = np.concatenate(pts) if pts else np.zeros((0, 3))
        _, radius = bounding_sphere(mesh)
        base = cfg.platform.plane
        return cls(
            J_total=risky_area(mesh, UP, cfg, base),
            volume=mesh.volume,
            radius=radius,
            fragile_points=pts,
            platform=cfg.platform,
        )


def _assemble(ctx, parent_m2, parent_residual, delta, upper_volume, gap, fragile_gap, residual):
    jt = ctx.J_total
    m1 = np.clip(delta / jt, -1.0, 1.0)
    m2 = parent_m2 + m1
    m3 = np.clip(upper_volume / ctx.volume, 0.0, 1.0)
    m4 = np.clip(gap / ctx.radius, 0.0, 1.0) if ctx.radius > 0 else np.ones_like(m1)
    m5 = np.clip(fragile_gap / ctx.radius, 0.0, 1.0) if ctx.radius > 0 else np.ones_like(m1)
    m6 = np.clip((parent_residual + residual) / jt, 0.0, 1.0)
    return np.stack([m1, m2, m3, m4, m5, m6], axis=-1)


def featurize_batch(ctx, parent_m2, parent_residual, d, offsets, measures):
    """
    Features for the planes {d . x = c} from batch-evaluator measures.

    Returns
    -------
    features : (C, 6) float
    """
    d = np.asarray(d, float)
    c = np.asarray(offsets, float)
    spread = ctx.platform.radius * np.hypot(d[0], d[1])
    lo, hi = -c - spread, -c + spread
    gap = np.where((lo <= 0) & (hi >= 0), 0.0, np.minimum(np.abs(lo), np.abs(hi)))
    if len(ctx.fragile_points):
        fragile_gap = np.abs((ctx.fragile_points @ d)[None, :] - c[:, None]).min(axis=1)
    else:
        fragile_gap = np.full(len(c), np.inf)
    return _assemble(ctx, parent_m2, parent_residual, measures["delta"], measures["upper_volume"],
                     gap, fragile_gap, measures["residual"])


def featurize(parent, m_k, p, cfg, J_total, fragile, volume=None, radius=None):
    """
    Features of cutting ``m_k`` with ``p``, computed by clipping.

    ``parent`` supplies the running sums through attributes ``m2`` and
    ``accumulated_residual_risk`` (None at the root). ``volume`` and
    ``radius`` describe the full model; both default to those of ``m_k``.
    """
    if volume is None:
        volume = m_k.volume
    if radius is None:
        _, radius = bounding_sphere(m_k)
    pts = [r.representative_points for r in fragile]
    ctx = FeatureContext(J_total, volume, radius, np.concatenate(pts) if pts else np.zeros((0, 3)),
                         cfg.platform)
    upper, _, _ = clip(m_k, p)
    d = p.n
    orig = upper.submesh(~upper.cap) if not upper.is_empty else upper
    if orig.is_empty:
        delta = 0.0
    else:
        # faces on the platform never counted; faces lying in the cut
        # plane were on the remainder's underside
        e_parent = risky_mask(orig.normals, UP, cfg.alpha_max) & ~on_plane_mask(orig, cfg.platform.plane)
        e_own = risky_mask(orig.normals, d, cfg.alpha_max)
        s = np.abs(orig.vertices @ d - p.offset)
        on_cut = (s[orig.faces] <= 1e-6).all(axis=1)
        delta = float((orig.areas * e_parent).sum() - (orig.areas * (e_own & ~on_cut)).sum())
    residual = risky_area(upper, d, cfg, p)
    gap = disc_plane_distance(p, cfg.platform)
    if len(ctx.fragile_points):
        fragile_gap = float(np.abs(ctx.fragile_points @ d - p.offset).min())
    else:
        fragile_gap = np.inf
    m2 = 0.0 if parent is None else parent.m2
    acc = 0.0 if parent is None else parent.accumulated_residual_risk
    return _assemble(ctx, m2, acc, np.float64(delta), np.float64(upper.volume if not upper.is_empty else 0.0),
                     np.float64(gap), np.float64(fragile_gap), np.float64(residual))

