"""Learning-to-rank trainers over per-user query groups.

Listwise (ListNet, ListMLE), pairwise (RankingSVM, RankNet, LambdaRank) and
boosting (AdaRank) methods. Linear scorers back the ListNet/RankingSVM/ListMLE
losses; RankNet and LambdaRank share a three-layer net with a logistic hidden
layer and a single linear output node. Loss/gradient helpers are exposed
separately so they can be checked against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .aggregation import Ranking
from .errors import Diverged, NoUsefulWeakRanker, SchemaMismatch
from .evaluation import ideal_dcg, ndcg_of_scores
from .regression import _check_width


@dataclass(frozen=True)
class QueryGroup:
    """One user's tweets: feature rows, engagement labels, and tweet ids."""

    user_id: str
    X: np.ndarray
    labels: np.ndarray
    tweet_ids: list[str]

    def __post_init__(self):
        if len(self.tweet_ids) != self.X.shape[0] or self.labels.size != self.X.shape[0]:
            raise SchemaMismatch("group rows, labels and ids must align")
        if self.X.shape[0] < 1:
            raise SchemaMismatch("empty query group")


@dataclass(frozen=True)
class LinearRanker:
    weights: np.ndarray

    def predict(self, X) -> np.ndarray:
        return _check_width(X, self.weights.size) @ self.weights

    def to_dict(self) -> dict:
        return {
            "kind": "linear_ranker",
            "version": 1,
            "weights": [float(w) for w in self.weights],
        }

    @classmethod
    def from_dict(cls, doc) -> "LinearRanker":
        return cls(np.asarray(doc["weights"], dtype=float))


class NeuralRanker:
    """input -> logistic hidden layer -> single linear output node."""

    def __init__(self, w1, b1, w2, b2):
        self.w1 = np.asarray(w1, dtype=float)
        self.b1 = np.asarray(b1, dtype=float)
        self.w2 = np.asarray(w2, dtype=float)
        self.b2 = float(b2)

    @classmethod
    def initialise(cls, n_inputs, hidden, seed) -> "NeuralRanker":
        rng = np.random.default_rng(seed)
        return cls(
            rng.normal(0.0, 1.0 / np.sqrt(n_inputs), size=(hidden, n_inputs)),
            np.zeros(hidden),
            rng.normal(0.0, 1.0 / np.sqrt(hidden), size=hidden),
            0.0,
        )

    def forward(self, X):
        X = _check_width(X, self.w1.shape[1])
        hidden = _sigmoid(X @ self.w1.T + self.b1)
        return hidden @ self.w2 + self.b2, hidden

    def predict(self, X) -> np.ndarray:
        return self.forward(X)[0]

    def finite(self) -> bool:
        return bool(
            np.all(np.isfinite(self.w1))
            and np.all(np.isfinite(self.b1))
            and np.all(np.isfinite(self.w2))
            and np.isfinite(self.b2)
        )

    def to_dict(self) -> dict:
        return {
            "kind": "neural_ranker",
            "version": 1,
            "hidden": int(self.w1.shape[0]),
            "w1": [[float(v) for v in row] for row in self.w1],
            "b1": [float(v) for v in self.b1],
            "w2": [float(v) for v in self.w2],
            "b2": self.b2,
        }

    @classmethod
    def from_dict(cls, doc) -> "NeuralRanker":
        return cls(doc["w1"], doc["b1"], doc["w2"], doc["b2"])


@dataclass(frozen=True)
class BoostedRanker:
    """Linear combination of single-feature weak rankers."""

    rounds: tuple  # of (feature_index, direction, alpha)
    n_inputs: int

    def predict(self, X) -> np.ndarray:
        X = _check_width(X, self.n_inputs)
        scores = np.zeros(X.shape[0])
        for feature, direction, alpha in self.rounds:
            scores += alpha * direction * X[:, feature]
        return scores

    def to_dict(self) -> dict:
        return {
            "kind": "boosted_ranker",
            "version": 1,
            "n_inputs": self.n_inputs,
            "rounds": [
                {"feature": int(f), "direction": int(s), "alpha": float(a)}
                for f, s, a in self.rounds
            ],
        }

    @classmethod
    def from_dict(cls, doc) -> "BoostedRanker":
        rounds = tuple(
            (r["feature"], r["direction"], r["alpha"]) for r in doc["rounds"]
        )
        return cls(rounds, int(doc["n_inputs"]))


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=float)))


def _logsumexp(x):
    m = np.max(x)
    return m + np.log(np.sum(np.exp(x - m)))


def _softmax(x):
    z = np.exp(x - np.max(x))
    return z / z.sum()


def discordant_pairs(labels):
    """Index pairs (hi, lo) with labels[hi] > labels[lo]."""
    labels = np.asarray(labels)
    hi, lo = [], []
    for i in range(labels.size):
        for j in range(labels.size):
            if labels[i] > labels[j]:
                hi.append(i)
                lo.append(j)
    return np.asarray(hi, dtype=int), np.asarray(lo, dtype=int)


def rank_group(model, g: QueryGroup) -> Ranking:
    """Ids sorted by model score descending; ties break by tweet_id."""
    scores = model.predict(g.X)
    order = sorted(range(len(g.tweet_ids)), key=lambda i: (-scores[i], g.tweet_ids[i]))
    return Ranking(g.user_id, tuple(g.tweet_ids[i] for i in order))


# --- ListNet ------------------------------------------------------------------


def listnet_loss_and_grad(w, X, labels, temperature=1.0):
    """Top-1 Plackett-Luce cross entropy between softmaxed labels and scores."""
    target = _softmax(np.asarray(labels, dtype=float) / temperature)
    scores = X @ w
    log_pred = scores - _logsumexp(scores)
    loss = -float(target @ log_pred)
    grad = X.T @ (np.exp(log_pred) - target)
    return loss, grad


def train_listnet(groups, lr=0.05, epochs=200, seed=0, temperature=1.0):
    """Gradient descent on the per-group top-1 cross entropy."""
    active = [g for g in groups if g.X.shape[0] >= 2 and len(set(g.labels)) >= 2]
    if not active:
        raise SchemaMismatch("no group with at least two distinct labels")
    d = active[0].X.shape[1]
    rng = np.random.default_rng(seed)
    w = np.zeros(d)
    for epoch in range(epochs):
        step = lr / np.sqrt(epoch + 1.0)
        total = 0.0
        for idx in rng.permutation(len(active)):
            g = active[idx]
            loss, grad = listnet_loss_and_grad(w, g.X, g.labels, temperature)
            w -= step * grad
            total += loss
        if not np.isfinite(total) or not np.all(np.isfinite(w)):
            raise Diverged(f"non-finite ListNet loss at epoch {epoch}")
    return LinearRanker(w)


# --- RankingSVM ---------------------------------------------------------------


def ranksvm_objective_and_grad(w, diffs, c=1.0):
    """Hinge loss over score differences of discordant pairs plus L2.

    diffs rows are x_hi - x_lo for pairs whose first item has the larger
    label; the objective is 0.5/c * ||w||^2 + mean(max(0, 1 - diffs @ w)).
    """
    diffs = np.atleast_2d(diffs)
    margins = diffs @ w
    violating = margins < 1.0
    loss = 0.5 / c * float(w @ w) + float(np.mean(np.maximum(0.0, 1.0 - margins)))
    grad = w / c - diffs[violating].sum(axis=0) / diffs.shape[0]
    return loss, grad


def _group_pair_diffs(g: QueryGroup):
    hi, lo = discordant_pairs(g.labels)
    if hi.size == 0:
        return None
    return g.X[hi] - g.X[lo]


def train_ranking_svm(groups, c=10.0, epochs=200, lr=0.05, seed=0):
    """Primal stochastic subgradient descent on the pairwise hinge loss."""
    per_group = [(g, _group_pair_diffs(g)) for g in groups]
    per_group = [(g, diffs) for g, diffs in per_group if diffs is not None]
    d = groups[0].X.shape[1]
    w = np.zeros(d)
    if not per_group:
        return LinearRanker(w)  # tie-only groups add no constraints
    rng = np.random.default_rng(seed)
    for epoch in range(epochs):
        step = lr / np.sqrt(epoch + 1.0)
        for idx in rng.permutation(len(per_group)):
            _, diffs = per_group[idx]
            _, grad = ranksvm_objective_and_grad(w, diffs, c)
            w -= step * grad
        if not np.all(np.isfinite(w)):
            raise Diverged(f"non-finite RankingSVM weights at epoch {epoch}")
    return LinearRanker(w)


# --- AdaRank ------------------------------------------------------------------


def weak_ranker_candidates(n_features):
    """Single-feature sorters, both directions, in deterministic order."""
    return [(f, s) for f in range(n_features) for s in (1, -1)]


def train_adarank(groups, rounds=50, k=10, gain="linear"):
    """Boosting over a per-user weight distribution with single-feature weak
    rankers; the weak metric is NDCG@k."""
    groups = list(groups)
    if not any(len(set(g.labels)) >= 2 for g in groups):
        raise NoUsefulWeakRanker("every group has all-tied labels")
    d = groups[0].X.shape[1]
    candidates = weak_ranker_candidates(d)
    # Weak-ranker metrics never change across rounds; evaluate them once.
    E = np.empty((len(candidates), len(groups)))
    for ci, (f, s) in enumerate(candidates):
        for gi, g in enumerate(groups):
            E[ci, gi] = ndcg_of_scores(s * g.X[:, f], g.labels, g.tweet_ids, k, gain)

    p = np.full(len(groups), 1.0 / len(groups))
    combined = [np.zeros(g.X.shape[0]) for g in groups]
    chosen: list[tuple[int, int, float]] = []
    best_prefix: list[tuple[int, int, float]] = []
    best_mean = -np.inf
    for t in range(rounds):
        weighted = E @ p
        ci = int(np.argmax(weighted))
        if weighted[ci] <= 0.0:
            if t == 0:
                raise NoUsefulWeakRanker("no weak ranker with positive weighted gain")
            break
        feature, direction = candidates[ci]
        num = float(p @ (1.0 + E[ci]))
        den = float(p @ (1.0 - E[ci]))
        alpha = 0.5 * np.log(num / max(den, 1e-12))
        chosen.append((feature, direction, float(alpha)))
        for gi, g in enumerate(groups):
            combined[gi] = combined[gi] + alpha * direction * g.X[:, feature]
        e_comb = np.array(
            [
                ndcg_of_scores(combined[gi], g.labels, g.tweet_ids, k, gain)
                for gi, g in enumerate(groups)
            ]
        )
        mean_comb = float(e_comb.mean())
        if mean_comb > best_mean + 1e-12:
            best_mean = mean_comb
            best_prefix = list(chosen)
        else:
            break  # no training improvement from the last weak ranker
        if best_mean >= 1.0 - 1e-12:
            break
        expw = np.exp(-e_comb)
        p = expw / expw.sum()
    return BoostedRanker(tuple(best_prefix), d)


# --- RankNet ------------------------------------------------------------------


def _backprop_score_grads(ranker: NeuralRanker, X, hidden, g):
    """Gradients of sum(g * scores) w.r.t. the net parameters."""
    dz = np.outer(g, ranker.w2) * hidden * (1.0 - hidden)
    return {
        "w1": dz.T @ X,
        "b1": dz.sum(axis=0),
        "w2": hidden.T @ g,
        "b2": float(g.sum()),
    }


def ranknet_loss_and_grad(ranker: NeuralRanker, X, labels):
    """Total pairwise logistic loss over discordant pairs plus its gradients.

    Returns (loss, n_pairs, grads); grads are for the summed (unnormalised)
    loss so they can be compared directly against finite differences.
    """
    hi, lo = discordant_pairs(labels)
    scores, hidden = ranker.forward(X)
    if hi.size == 0:
        zero = {
            "w1": np.zeros_like(ranker.w1),
            "b1": np.zeros_like(ranker.b1),
            "w2": np.zeros_like(ranker.w2),
            "b2": 0.0,
        }
        return 0.0, 0, zero
    diff = scores[hi] - scores[lo]
    loss = float(np.sum(np.logaddexp(0.0, -diff)))
    pair_grad = -_sigmoid(-diff)  # d loss / d diff
    g = np.zeros(scores.size)
    np.add.at(g, hi, pair_grad)
    np.add.at(g, lo, -pair_grad)
    return loss, int(hi.size), _backprop_score_grads(ranker, X, hidden, g)


def _apply_update(ranker: NeuralRanker, grads, step, scale):
    ranker.w1 -= step * grads["w1"] / scale
    ranker.b1 -= step * grads["b1"] / scale
    ranker.w2 -= step * grads["w2"] / scale
    ranker.b2 -= step * grads["b2"] / scale


def train_ranknet(groups, hidden=10, lr=0.1, epochs=500, seed=0):
    """Backprop on the pairwise cross-entropy loss of a three-layer net."""
    active = [g for g in groups if discordant_pairs(g.labels)[0].size > 0]
    if not active:
        raise SchemaMismatch("no group with a label-discordant pair")
    d = active[0].X.shape[1]
    ranker = NeuralRanker.initialise(d, hidden, seed)
    rng = np.random.default_rng(seed)
    for epoch in range(epochs):
        step = lr / np.sqrt(epoch + 1.0)
        total = 0.0
        for idx in rng.permutation(len(active)):
            g = active[idx]
            loss, n_pairs, grads = ranknet_loss_and_grad(ranker, g.X, g.labels)
            _apply_update(ranker, grads, step, n_pairs)
            total += loss
        if not np.isfinite(total) or not ranker.finite():
            raise Diverged(f"non-finite RankNet loss at epoch {epoch}")
    return ranker


# --- LambdaRank ---------------------------------------------------------------


def lambdarank_lambdas(scores, labels, tweet_ids, k=10, gain="linear"):
    """Per-item gradient of the RankNet loss scaled by |delta NDCG@k|.

    The delta for a pair is the NDCG@k change from swapping the two items at
    their current ranked positions."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=float)
    n = scores.size
    order = sorted(range(n), key=lambda i: (-scores[i], tweet_ids[i]))
    pos = np.empty(n, dtype=int)
    for rank, item in enumerate(order):
        pos[item] = rank
    idcg = ideal_dcg(labels, k, gain)
    discounts = np.where(
        np.arange(n) < k, 1.0 / np.log2(np.arange(n) + 2.0), 0.0
    )
    if gain == "linear":
        gains = labels
    else:
        gains = np.exp2(labels) - 1.0
    g = np.zeros(n)
    hi, lo = discordant_pairs(labels)
    for i, j in zip(hi, lo):
        if idcg == 0.0:
            continue
        delta = abs((gains[i] - gains[j]) * (discounts[pos[i]] - discounts[pos[j]])) / idcg
        lam = -_sigmoid(-(scores[i] - scores[j])) * delta
        g[i] += lam
        g[j] -= lam
    return g


def train_lambdarank(groups, hidden=10, lr=0.1, epochs=500, seed=0, k=10, gain="linear"):
    """RankNet updates with pair gradients rescaled by |delta NDCG@k|."""
    active = [g for g in groups if discordant_pairs(g.labels)[0].size > 0]
    if not active:
        raise SchemaMismatch("no group with a label-discordant pair")
    d = active[0].X.shape[1]
    ranker = NeuralRanker.initialise(d, hidden, seed)
    rng = np.random.default_rng(seed)
    for epoch in range(epochs):
        step = lr / np.sqrt(epoch + 1.0)
        for idx in rng.permutation(len(active)):
            g = active[idx]
            scores, hid = ranker.forward(g.X)
            lam = lambdarank_lambdas(scores, g.labels, g.tweet_ids, k, gain)
            n_pairs = max(discordant_pairs(g.labels)[0].size, 1)
            grads = _backprop_score_grads(ranker, g.X, hid, lam)
            _apply_update(ranker, grads, step, n_pairs)
        if not ranker.finite():
            raise Diverged(f"non-finite LambdaRank parameters at epoch {epoch}")
    return ranker


# --- ListMLE ------------------------------------------------------------------


def listmle_target_order(labels, tweet_ids):
    """Ground-truth permutation: labels descending, ties by tweet_id."""
    return sorted(range(len(tweet_ids)), key=lambda i: (-labels[i], tweet_ids[i]))


def listmle_loss_and_grad(w, X, labels, tweet_ids):
    """Negative Plackett-Luce log-likelihood of the label-sorted permutation."""
    order = listmle_target_order(np.asarray(labels, dtype=float), tweet_ids)
    scores = X @ w
    s = scores[order]
    n = s.size
    loss = 0.0
    grad_s = np.zeros(n)  # w.r.t. the permuted scores
    for t in range(n - 1):
        suffix = s[t:]
        lse = _logsumexp(suffix)
        loss += lse - s[t]
        grad_s[t:] += np.exp(suffix - lse)
        grad_s[t] -= 1.0
    grad_scores = np.zeros(n)
    grad_scores[order] = grad_s
    return float(loss), X.T @ grad_scores


def train_listmle(groups, lr=0.05, epochs=200, seed=0):
    """Gradient descent on the listwise Plackett-Luce likelihood."""
    active = [g for g in groups if g.X.shape[0] >= 2]
    if not active:
        raise SchemaMismatch("no group with at least two rows")
    d = active[0].X.shape[1]
    rng = np.random.default_rng(seed)
    w = np.zeros(d)
    for epoch in range(epochs):
        step = lr / np.sqrt(epoch + 1.0)
        total = 0.0
        for idx in rng.permutation(len(active)):
            g = active[idx]
            loss, grad = listmle_loss_and_grad(w, g.X, g.labels, g.tweet_ids)
            w -= step * grad
            total += loss
        if not np.isfinite(total) or not np.all(np.isfinite(w)):
            raise Diverged(f"non-finite ListMLE loss at epoch {epoch}")
    return LinearRanker(w)
