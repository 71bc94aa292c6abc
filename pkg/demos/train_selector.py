"""
Train the listwise and pairwise rankers on synthetic candidate lists
and compare their NDCG on held-out models.

Relevance follows m1 + m2 with a little noise, so a good scorer must
learn to rank by those two columns.
"""
import argparse

import numpy as np

from mdpdecomp.evaluation import RandomScorer, ndcg_table, permutation_importance
from mdpdecomp.features import NAMES
from mdpdecomp.ranking import TrainConfig, split_by_model, synthetic_lists, train, train_ranknet


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--lists", type=int, default=500)
    ap.add_argument("--epochs", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    tr, va, te = split_by_model(synthetic_lists(args.lists, seed=args.seed))
    print(f"{len(tr)} train / {len(va)} val / {len(te)} test lists")
    tc = TrainConfig(max_epochs=args.epochs, early_stop_patience=min(200, args.epochs - 1), seed=args.seed)
    urank, log = train(tr, va, tc)
    ranknet, _ = train_ranknet(tr, va, tc)
    print(f"uRank best epoch {log.best_epoch}")
    print("method    " + " ".join(f"NDCG@{k}" for k in range(1, 6)))
    for name, m in (("uRank", urank), ("RankNet", ranknet), ("random", RandomScorer(args.seed))):
        t = ndcg_table(m, te)
        print(f"{name:<9} " + " ".join(f"{t[k]:6.3f}" for k in range(1, 6)))

    imp = permutation_importance(urank, te, K=5, seed=args.seed)
    print("importance: " + ", ".join(f"{NAMES[j]} {imp[j]:.3f}" for j in np.argsort(-imp)))


if __name__ == "__main__":
    main()
