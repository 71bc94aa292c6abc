"""
Listwise ranking of search candidates.

Search traces become ranked lists (one per model and stage), a small
bias-free MLP scores each candidate from its six metrics, and training
minimises either the stepwise softmax loss (uRank) or the pairwise
logistic loss (RankNet).
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import DatasetError, DimensionMismatch, DivergenceError
from .evaluation import mean_ndcg
from .features import N_FEATURES

WEIGHTS_VERSION = 1

ACTIVATIONS = {
    "relu": (lambda z: np.maximum(z, 0.0), lambda z, a: (z > 0).astype(z.dtype)),
    "identity": (lambda z: z, lambda z, a: np.ones_like(z)),
    "tanh": (np.tanh, lambda z, a: 1.0 - a * a),
    "sigmoid": (lambda z: 0.5 * (1.0 + np.tanh(0.5 * z)), lambda z, a: a * (1.0 - a)),
}


# ---------------------------------------------------------------------------
# Data
# ---------------------------------------------------------------------------


@dataclass
class RankedList:
    """Candidates of one search stage with graded relevance labels."""

    model_id: str
    stage: int
    features: np.ndarray
    relevance: np.ndarray

    def __post_init__(self):
        self.features = np.asarray(self.features, float).reshape(len(self.features), -1)
        self.relevance = np.asarray(self.relevance, np.int64)
        if len(self.features) != len(self.relevance):
            raise DatasetError("features and relevance differ in length")
        if len(self.relevance) < 2:
            raise DatasetError("a ranked list needs at least two rows")
        if np.any(self.relevance < 0):
            raise DatasetError("relevance must be non-negative")
        if not np.all(np.isfinite(self.features)):
            raise DatasetError("features must be finite")

    def __len__(self):
        return len(self.relevance)

    def to_json(self):
        return {
            "model_id": self.model_id,
            "stage": int(self.stage),
            "rows": [{"metrics": [float(x) for x in f], "relevance": int(r)}
                     for f, r in zip(self.features, self.relevance)],
        }

    @classmethod
    def from_json(cls, d):
        try:
            rows = d["rows"]
            return cls(str(d["model_id"]), int(d["stage"]),
                       np.array([r["metrics"] for r in rows], float),
                       np.array([r["relevance"] for r in rows], np.int64))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, DatasetError):
                raise
            raise DatasetError(f"malformed ranked list: {exc}") from None


def write_dataset(lists, path):
    with open(path, "w") as fh:
        for lst in lists:
            fh.write(json.dumps(lst.to_json(), sort_keys=True) + "\n")


def read_dataset(path, n_features=N_FEATURES):
    lists = []
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DatasetError(f"cannot read dataset {path}: {exc}") from None
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            lst = RankedList.from_json(json.loads(line))
        except json.JSONDecodeError as exc:
            raise DatasetError(f"line {lineno}: {exc}") from None
        except DatasetError as exc:
            raise DatasetError(f"line {lineno}: {exc}") from None
        if lst.features.shape[1] != n_features:
            raise DatasetError(f"line {lineno}: expected {n_features} metrics per row")
        lists.append(lst)
    return lists


def extract_ranked_lists(trace, b_label=5):
    """
    One ranked list per (model, stage) of a search trace.

    Pool entries are ordered by the cheapest complete trajectory through
    them; entries on no trajectory follow, and ties keep pool order. The
    first min(b_label, n) entries get relevances m, m-1, ..., 1 and the
    rest 0. Stages with fewer than two entries are skipped.
    """
    groups = {}
    for rec in trace:
        groups.setdefault((rec.model_id, rec.stage), []).append(rec)
    out = []
    for (model_id, stage), recs in groups.items():
        if len(recs) < 2:
            continue
        recs = sorted(recs, key=lambda r: r.candidate_index)
        order = sorted(range(len(recs)), key=lambda i: (
            recs[i].on_trajectory_J is None,
            recs[i].on_trajectory_J if recs[i].on_trajectory_J is not None else 0.0,
            i))
        m = min(b_label, len(recs))
        rel = np.zeros(len(recs), np.int64)
        for rank, i in enumerate(order[:m]):
            rel[i] = m - rank
        out.append(RankedList(model_id, stage, np.array([r.metrics for r in recs], float), rel))
    return out


def split_by_model(lists, fractions=(0.6, 0.15, 0.25)):
    """
    Train / validation / test split that keeps each model in one part.

    Model ids are ordered by their SHA-256 digest and dealt out in the
    given proportions, so every part is non-empty once there are at
    least three models and the split never depends on list order.
    """
    ids = sorted({lst.model_id for lst in lists}, key=lambda s: hashlib.sha256(s.encode()).hexdigest())
    n = len(ids)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    if n >= 3:
        n_train = min(max(n_train, 1), n - 2)
        n_val = min(max(n_val, 1), n - n_train - 1)
    part = {}
    for i, mid in enumerate(ids):
        part[mid] = 0 if i < n_train else (1 if i < n_train + n_val else 2)
    splits = ([], [], [])
    for lst in lists:
        splits[part[lst.model_id]].append(lst)
    return splits


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    max_epochs: int = 1000
    early_stop_patience: int = 200
    batch: int = 1
    seed: int = 0
    k1: int = 100
    k2: int = 100
    activation: str = "relu"
    output_activation: str = "identity"
    optimizer: str = "sgd"
    momentum: float = 0.9
    ranker: str = "urank"

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError("learning rate must be non-negative")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if not 0 < self.early_stop_patience < self.max_epochs:
            raise ValueError("patience must be positive and below max_epochs")
        if self.batch < 1:
            raise ValueError("batch must be >= 1")
        if self.optimizer not in ("sgd", "momentum", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.activation not in ACTIVATIONS or self.output_activation not in ACTIVATIONS:
            raise ValueError("unknown activation")
        if self.ranker not in ("urank", "ranknet"):
            raise ValueError(f"unknown ranker {self.ranker!r}")


class ScoringModel:
    """
    G(M) = out(act(act(M W1) W2) W3) for a (B, 6) metric matrix M.

    There are no bias terms. ``activation`` is used on both hidden
    layers, ``output_activation`` on the score.
    """

    def __init__(self, W1, W2, W3, activation="relu", output_activation="identity", seed=None,
                 train_config=None):
        self.W1 = np.asarray(W1, float)
        self.W2 = np.asarray(W2, float)
        self.W3 = np.asarray(W3, float).reshape(-1, 1)
        if self.W1.shape[1] != self.W2.shape[0] or self.W2.shape[1] != self.W3.shape[0]:
            raise DimensionMismatch("weight shapes do not chain")
        if activation not in ACTIVATIONS or output_activation not in ACTIVATIONS:
            raise ValueError("unknown activation")
        self.activation = activation
        self.output_activation = output_activation
        self.seed = seed
        self.train_config = train_config

    @classmethod
    def init(cls, k1=100, k2=100, n_features=N_FEATURES, seed=0, activation="relu",
             output_activation="identity"):
        """Glorot-uniform weights drawn from a seeded generator."""
        rng = np.random.default_rng(seed)

        def glorot(fan_in, fan_out):
            lim = math.sqrt(6.0 / (fan_in + fan_out))
            return rng.uniform(-lim, lim, size=(fan_in, fan_out))

        return cls(glorot(n_features, k1), glorot(k1, k2), glorot(k2, 1), activation,
                   output_activation, seed)

    @property
    def k1(self):
        return self.W1.shape[1]

    @property
    def k2(self):
        return self.W2.shape[1]

    @property
    def params(self):
        return [self.W1, self.W2, self.W3]

    def copy(self):
        return ScoringModel(self.W1.copy(), self.W2.copy(), self.W3.copy(), self.activation,
                            self.output_activation, self.seed, self.train_config)

    def _check(self, M):
        M = np.asarray(M, float)
        if M.ndim == 1:
            M = M[None]
        if M.ndim != 2 or M.shape[1] != self.W1.shape[0]:
            raise DimensionMismatch(f"expected rows of {self.W1.shape[0]} metrics, got shape {M.shape}")
        return M

    def forward(self, M):
        M = self._check(M)
        act, _ = ACTIVATIONS[self.activation]
        out, _ = ACTIVATIONS[self.output_activation]
        z1 = M @ self.W1
        a1 = act(z1)
        z2 = a1 @ self.W2
        a2 = act(z2)
        z3 = a2 @ self.W3
        g = out(z3)
        return g[:, 0], (M, z1, a1, z2, a2, z3, g)

    def score(self, M):
        return self.forward(M)[0]

    def backward(self, cache, dg):
        """Weight gradients given dLoss/dscore of shape (B,)."""
        M, z1, a1, z2, a2, z3, g = cache
        _, dact = ACTIVATIONS[self.activation]
        _, dout = ACTIVATIONS[self.output_activation]
        d3 = dg[:, None] * dout(z3, g)
        gW3 = a2.T @ d3
        d2 = (d3 @ self.W3.T) * dact(z2, a2)
        gW2 = a1.T @ d2
        d1 = (d2 @ self.W2.T) * dact(z1, a1)
        gW1 = M.T @ d1
        return [gW1, gW2, gW3]

    def to_json(self):
        return {
            "version": WEIGHTS_VERSION,
            "k1": self.k1,
            "k2": self.k2,
            "n_features": int(self.W1.shape[0]),
            "activation": self.activation,
            "output_activation": self.output_activation,
            "W1": self.W1.ravel().tolist(),
            "W2": self.W2.ravel().tolist(),
            "W3": self.W3.ravel().tolist(),
            "seed": self.seed,
            "train_config": self.train_config,
        }

    @classmethod
    def from_json(cls, d):
        try:
            version = int(d.get("version", 1))
            if version > WEIGHTS_VERSION:
                raise DatasetError(f"weights version {version} is newer than supported {WEIGHTS_VERSION}")
            nf, k1, k2 = int(d.get("n_features", N_FEATURES)), int(d["k1"]), int(d["k2"])
            W1 = np.array(d["W1"], float).reshape(nf, k1)
            W2 = np.array(d["W2"], float).reshape(k1, k2)
            W3 = np.array(d["W3"], float).reshape(k2, 1)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, DatasetError):
                raise
            raise DatasetError(f"malformed weights: {exc}") from None
        return cls(W1, W2, W3, d.get("activation", "relu"), d.get("output_activation", "identity"),
                   d.get("seed"), d.get("train_config"))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path):
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise DatasetError(f"cannot read weights {path}: {exc}") from None
        return cls.from_json(data)


def score(model, M):
    return model.score(M)


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------


def _logsumexp(x):
    m = x.max()
    return m + math.log(np.exp(x - m).sum())


def urank_from_scores(g, rel):
    """
    Stepwise softmax loss and its gradient with respect to the scores.

    At each step the rows holding the highest remaining relevance r are
    selected; each contributes (2^r - 1) * log softmax over the rows not
    yet selected. The sum is negated and divided by (n - 1).
    """
    g = np.asarray(g, float)
    rel = np.asarray(rel)
    n = len(g)
    remaining = np.ones(n, bool)
    total = 0.0
    grad = np.zeros(n)
    for r in sorted({int(x) for x in rel if x > 0}, reverse=True):
        chosen = rel == r
        w = 2.0 ** r - 1.0
        live = g[remaining]
        lse = _logsumexp(live)
        total += w * float((g[chosen] - lse).sum())
        p = np.zeros(n)
        p[remaining] = np.exp(live - lse)
        grad += w * (chosen - chosen.sum() * p)
        remaining &= ~chosen
    scale = -1.0 / (n - 1)
    return scale * total, scale * grad


def ranknet_from_scores(g, rel):
    """Sum over in-list pairs with r_i > r_j of log(1 + exp(-(g_i - g_j)))."""
    g = np.asarray(g, float)
    rel = np.asarray(rel)
    i, j = np.nonzero(rel[:, None] > rel[None, :])
    diff = g[i] - g[j]
    loss = float(np.logaddexp(0.0, -diff).sum())
    # d/d diff of softplus(-diff) is -sigmoid(-diff)
    s = -0.5 * (1.0 - np.tanh(0.5 * diff))
    grad = np.zeros(len(g))
    np.add.at(grad, i, s)
    np.add.at(grad, j, -s)
    return loss, grad


LOSSES = {"urank": urank_from_scores, "ranknet": ranknet_from_scores}


def urank_loss(model, lst):
    return urank_from_scores(model.score(lst.features), lst.relevance)[0]


def ranknet_loss(model, lst):
    return ranknet_from_scores(model.score(lst.features), lst.relevance)[0]


def loss_and_grad(model, lst, ranker="urank"):
    g, cache = model.forward(lst.features)
    loss, dg = LOSSES[ranker](g, lst.relevance)
    return loss, model.backward(cache, dg)


def gradient_check(model, lst, epsilon=1e-5, ranker="urank"):
    """
    Largest relative gap between analytic and central-difference gradients.

    The relative error of each weight is |a - f| / max(|a|, |f|, 1e-6),
    so weights with vanishing gradient compare on an absolute scale.
    """
    if not 1e-7 <= epsilon <= 1e-4:
        raise ValueError("epsilon must lie in [1e-7, 1e-4]")
    fn = LOSSES[ranker]
    _, grads = loss_and_grad(model, lst, ranker)
    worst = 0.0
    for W, G in zip(model.params, grads):
        flat = W.reshape(-1)
        for k in range(flat.size):
            old = flat[k]
            flat[k] = old + epsilon
            up = fn(model.score(lst.features), lst.relevance)[0]
            flat[k] = old - epsilon
            down = fn(model.score(lst.features), lst.relevance)[0]
            flat[k] = old
            fd = (up - down) / (2 * epsilon)
            a = G.reshape(-1)[k]
            worst = max(worst, abs(a - fd) / max(abs(a), abs(fd), 1e-6))
    return worst


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


class _Optimizer:
    def __init__(self, params, tc):
        self.tc = tc
        self.state = [[np.zeros_like(p), np.zeros_like(p)] for p in params]
        self.t = 0

    def step(self, params, grads):
        lr = self.tc.learning_rate
        self.t += 1
        for p, g, st in zip(params, grads, self.state):
            if self.tc.optimizer == "sgd":
                p -= lr * g
            elif self.tc.optimizer == "momentum":
                st[0] *= self.tc.momentum
                st[0] += g
                p -= lr * st[0]
            else:
                b1, b2 = 0.9, 0.999
                st[0] = b1 * st[0] + (1 - b1) * g
                st[1] = b2 * st[1] + (1 - b2) * g * g
                mhat = st[0] / (1 - b1 ** self.t)
                vhat = st[1] / (1 - b2 ** self.t)
                p -= lr * mhat / (np.sqrt(vhat) + 1e-8)


@dataclass
class TrainLog:
    epochs: list = field(default_factory=list)
    best_epoch: int = 0
    best_val_ndcg5: float = 0.0

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("epoch,train_loss,val_ndcg5\n")
            for e in self.epochs:
                fh.write(f"{e['epoch']},{e['train_loss']!r},{e['val_ndcg5']!r}\n")


def train(train_lists, val_lists, tc=None, model=None):
    """
    Fit a scoring model on ranked lists.

    One optimiser step per ``tc.batch`` lists, lists visited in a seeded
    random order each epoch. After every epoch the mean validation
    NDCG@5 is measured; the best weights are kept and training stops
    after ``early_stop_patience`` epochs without improvement.

    Returns
    -------
    model : ScoringModel
      Best-validation checkpoint.
    log : TrainLog

    Raises
    ------
    DivergenceError
      The training loss became non-finite.
    """
    tc = tc or TrainConfig()
    if not train_lists:
        raise DatasetError("training split is empty")
    val_lists = val_lists or train_lists
    if model is None:
        model = ScoringModel.init(tc.k1, tc.k2, train_lists[0].features.shape[1], tc.seed,
                                  tc.activation, tc.output_activation)
    model.train_config = asdict(tc)
    rng = np.random.default_rng(tc.seed)
    opt = _Optimizer(model.params, tc)
    log = TrainLog()
    best = model.copy()
    best_score = mean_ndcg(model, val_lists, 5)
    log.best_val_ndcg5 = best_score
    stale = 0
    for epoch in range(1, tc.max_epochs + 1):
        order = rng.permutation(len(train_lists))
        total = 0.0
        for start in range(0, len(order), tc.batch):
            acc = None
            for idx in order[start:start + tc.batch]:
                loss, grads = loss_and_grad(model, train_lists[idx], tc.ranker)
                if not math.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
                    raise DivergenceError(f"non-finite loss at epoch {epoch}")
                total += loss
                acc = grads if acc is None else [a + g for a, g in zip(acc, grads)]
            opt.step(model.params, acc)
        val = mean_ndcg(model, val_lists, 5)
        log.epochs.append({"epoch": epoch, "train_loss": total / len(train_lists), "val_ndcg5": val})
        if val > best_score:
            best_score, best, stale = val, model.copy(), 0
            log.best_epoch = epoch
        else:
            stale += 1
            if stale >= tc.early_stop_patience:
                break
    log.best_val_ndcg5 = best_score
    best.train_config = asdict(tc)
    return best, log


def train_ranknet(train_lists, val_lists, tc=None, model=None):
    tc = tc or TrainConfig()
    tc = TrainConfig(**{**asdict(tc), "ranker": "ranknet"})
    return train(train_lists, val_lists, tc, model)


def synthetic_lists(n_lists=500, rows=20, b_label=5, noise=0.02, signal=(0, 1), seed=0):
    """
    Ranked lists whose labels follow a noisy sum of chosen metric columns.

    Metrics are drawn in the ranges search produces (m1 in [-0.2, 0.6],
    m2 = m1 plus a parent sum, the rest in [0, 1]). The top ``b_label``
    rows by signal plus Gaussian noise get relevances b_label..1. Lists
    are spread over n_lists // 4 model ids.
    """
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n_lists):
        M = rng.random((rows, N_FEATURES))
        M[:, 0] = rng.uniform(-0.2, 0.6, rows)
        M[:, 1] = M[:, 0] + rng.uniform(0.0, 0.5)
        target = M[:, list(signal)].sum(axis=1) + rng.normal(0.0, noise, rows)
        rel = np.zeros(rows, np.int64)
        m = min(b_label, rows)
        top = np.argsort(-target, kind="stable")[:m]
        rel[top] = np.arange(m, 0, -1)
        out.append(RankedList(f"synth{i % max(1, n_lists // 4):04d}", i, M, rel))
    return out
