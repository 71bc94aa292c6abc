"""
Bundled corpus of procedural test solids.

Sixteen solids in millimetres: nine upright shapes and seven tilted
copies, re-seated on the platform after rotation. Upright blocky shapes
can usually be made overhang-free; the tilted ones and the sphere
cannot, which is where wider beams pay off.
"""
from __future__ import annotations

from pathlib import Path

from scipy.spatial.transform import Rotation

from . import shapes
from .geometry import Platform, save_obj
from .manufacturability import PrintConfig
from .search import SearchConfig

SCALE = 10.0


def _tilt(mesh, axes, degrees):
    R = Rotation.from_euler(axes, degrees, degrees=True).as_matrix()
    return shapes.centered(mesh.transformed(R))


def corpus():
    """List of (name, Mesh) in a fixed order."""
    s = SCALE
    t = shapes.t_solid(s)
    l_ = shapes.l_solid().scaled(s)
    h = shapes.h_solid().scaled(s)
    br = shapes.bridge().scaled(s)
    st = shapes.stair().scaled(s)
    cr = shapes.cross_solid().scaled(s)
    mu = shapes.mushroom(segments=16).scaled(s)
    return [
        ("t_solid", t),
        ("l_solid", l_),
        ("h_solid", h),
        ("bridge", br),
        ("stair", st),
        ("cross", cr),
        ("mushroom", mu),
        ("hourglass", shapes.hourglass(segments=16).scaled(s)),
        ("sphere", shapes.centered(shapes.icosphere(2.0, 2)).scaled(s)),
        ("t_tilt", _tilt(t, "y", 25)),
        ("l_tilt", _tilt(l_, "x", 30)),
        ("stair_tilt", _tilt(st, "y", -20)),
        ("mushroom_tilt", _tilt(mu, "x", 20)),
        ("cross_tilt", _tilt(cr, "xy", (15, 20))),
        ("h_tilt", _tilt(h, "y", 15)),
        ("bridge_tilt", _tilt(br, "x", 25)),
    ]


def corpus_config():
    """Print settings sized to the corpus (25 mm platform, 1 mm plane step)."""
    return PrintConfig(direction_samples=150, plane_step=1.0, platform=Platform(25.0))


def corpus_search_config(beam_width=1, pool=20, jobs=1):
    return SearchConfig(beam_width=beam_width, pool=pool, max_stages=5, jobs=jobs)


def write_corpus(directory):
    """Write every corpus solid as ``<name>.obj``; returns the paths."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, mesh in corpus():
        p = d / f"{name}.obj"
        save_obj(mesh, p)
        paths.append(p)
    return paths
