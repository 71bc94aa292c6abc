"""
Baseline against learned selection on the bundled corpus.

Builds ranked lists from wide searches over the corpus, trains a scorer
on them and reports mean J and total search time for each setting.
Takes a few minutes.
"""
import argparse

from mdpdecomp.corpus import corpus, corpus_config, corpus_search_config
from mdpdecomp.evaluation import RunSpec, compare_configurations
from mdpdecomp.ranking import TrainConfig, extract_ranked_lists, train
from mdpdecomp.search import search


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--repeats", type=int, default=1)
    args = ap.parse_args()

    solids, cfg = corpus(), corpus_config()
    lists = []
    for name, m in solids:
        res = search(m, cfg, corpus_search_config(beam_width=20, pool=20), model_id=name)
        lists += extract_ranked_lists(res.trace, 5)
    print(f"{len(lists)} ranked lists from {len(solids)} solids")
    # the corpus is small, so the scorer is fitted and early-stopped on the same lists
    model, _ = train(lists, lists, TrainConfig(seed=args.seed))

    specs = [RunSpec("baseline", b) for b in (1, 2, 5)] + [RunSpec("learned", 2, model)]
    comp = compare_configurations(solids, specs, cfg, corpus_search_config(), repeats=args.repeats)
    for s in specs:
        J = comp.summary["mean_J"][s.name]
        red = comp.summary["J_reduction_pct_vs_baseline_b1"][s.name]
        sec = comp.timing["total_seconds"][s.name]
        print(f"{s.name:<12} mean J {J:8.2f}  ({red:+5.1f}% vs b=1)  {sec:6.2f} s")


if __name__ == "__main__":
    main()
