"""
Decompose one solid of the bundled corpus and print the plan.

    python3 demos/decompose_corpus_solid.py mushroom_tilt --beam 3
"""
import argparse

from mdpdecomp.corpus import corpus, corpus_config, corpus_search_config
from mdpdecomp.manufacturability import UP, risky_area
from mdpdecomp.search import search


def main():
    names = [n for n, _ in corpus()]
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("name", choices=names)
    ap.add_argument("--beam", type=int, default=2)
    args = ap.parse_args()

    mesh = dict(corpus())[args.name]
    cfg = corpus_config()
    before = risky_area(mesh, UP, cfg, cfg.platform.plane)
    res = search(mesh, cfg, corpus_search_config(beam_width=args.beam))
    best = res.best
    print(f"{args.name}: risky area {before:.2f} mm^2 as one part, {best.cost:.2f} mm^2 after {best.cuts} cuts")
    # parts are listed in printing order; each stands on the plane that cut it off
    for i, (part, plane) in enumerate(best.plan.parts):
        n = ", ".join(f"{x:+.3f}" for x in plane.n)
        print(f"  part {i}: {part.volume:9.1f} mm^3 printed along ({n})")
    print(f"{len(res.trajectories)} trajectories, {len(res.trace)} ranked candidates")


if __name__ == "__main__":
    main()
