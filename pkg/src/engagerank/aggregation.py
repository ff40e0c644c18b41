"""Rank fusion: Kendall tau distance, weighted Kemeny consensus (exact and
heuristic), a Borda baseline, and randomized-search weight learning.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np

from .dataset import assign_user_folds
from .errors import (
    DegenerateLabels,
    EmptyRankerSet,
    IdSetMismatch,
    InvalidConfig,
)
from .evaluation import ndcg_at_k

OBJECTIVES = ("minimize-disagreement", "maximize-agreement")


@dataclass(frozen=True)
class Ranking:
    user_id: str
    ordered_ids: tuple[str, ...]

    def __post_init__(self):
        ids = tuple(self.ordered_ids)
        if len(set(ids)) != len(ids):
            raise InvalidConfig(f"duplicate ids in ranking for '{self.user_id}'")
        object.__setattr__(self, "ordered_ids", ids)

    def position(self, tweet_id: str) -> int:
        return self.ordered_ids.index(tweet_id)


@dataclass(frozen=True)
class WeightedRankerSet:
    """Named base rankers with per-user outputs and nonnegative weights."""

    outputs: dict[str, dict[str, Ranking]]  # ranker name -> user -> Ranking
    weights: dict[str, float]

    def names(self) -> list[str]:
        return sorted(self.outputs)

    def user_rankings(self, user_id: str) -> list[tuple[Ranking, float]]:
        if not self.outputs:
            raise EmptyRankerSet("no base rankers")
        pairs = []
        for name in self.names():
            per_user = self.outputs[name]
            if user_id not in per_user:
                raise IdSetMismatch(f"ranker '{name}' has no ranking for '{user_id}'")
            weight = float(self.weights.get(name, 1.0))
            if weight < 0:
                raise InvalidConfig(f"negative weight for ranker '{name}'")
            pairs.append((per_user[user_id], weight))
        if sum(w for _, w in pairs) <= 0:
            raise InvalidConfig("ranker weights must sum to a positive value")
        first = set(pairs[0][0].ordered_ids)
        for r, _ in pairs[1:]:
            if set(r.ordered_ids) != first:
                raise IdSetMismatch(f"id sets differ across rankers for '{user_id}'")
        return pairs


def kendall_tau(a: Ranking, b: Ranking) -> int:
    """Number of unordered pairs the two rankings order differently."""
    if set(a.ordered_ids) != set(b.ordered_ids):
        raise IdSetMismatch("rankings cover different id sets")
    pos_b = {tid: i for i, tid in enumerate(b.ordered_ids)}
    return _count_inversions([pos_b[tid] for tid in a.ordered_ids])


def _count_inversions(seq) -> int:
    # merge-sort inversion count
    if len(seq) < 2:
        return 0
    mid = len(seq) // 2
    left, right = list(seq[:mid]), list(seq[mid:])
    count = _count_inversions(left) + _count_inversions(right)
    left.sort()
    right.sort()
    i = j = 0
    merged = 0
    while i < len(left) and j < len(right):
        if left[i] <= right[j]:
            i += 1
        else:
            j += 1
            merged += len(left) - i
    return count + merged


def _pair_cost_matrix(pairs, objective):
    """C[a, b] = weighted cost of placing item a before item b."""
    ids = sorted(pairs[0][0].ordered_ids)
    index = {tid: i for i, tid in enumerate(ids)}
    m = len(ids)
    C = np.zeros((m, m))
    for ranking, weight in pairs:
        pos = {tid: i for i, tid in enumerate(ranking.ordered_ids)}
        for a, b in itertools.combinations(ids, 2):
            if pos[b] < pos[a]:
                C[index[a], index[b]] += weight
            else:
                C[index[b], index[a]] += weight
    if objective == "maximize-agreement":
        C = -C
    elif objective != "minimize-disagreement":
        raise InvalidConfig(f"unknown objective '{objective}'")
    return ids, C


def _order_cost(order, C) -> float:
    idx = np.asarray(order)
    sub = C[np.ix_(idx, idx)]
    return float(sub[np.triu_indices(len(order), k=1)].sum())


def _exact_consensus(C):
    m = C.shape[0]
    best_order = None
    best_cost = np.inf
    for perm in itertools.permutations(range(m)):
        cost = _order_cost(perm, C)
        if cost < best_cost:
            best_cost = cost
            best_order = perm
    return list(best_order), best_cost


def _heuristic_consensus(C):
    """Weighted-Borda start, then adjacent swaps and single-item insertions."""
    m = C.shape[0]
    order = sorted(range(m), key=lambda i: (C[i].sum(), i))
    improved = True
    while improved:
        improved = False
        for i in range(m - 1):
            a, b = order[i], order[i + 1]
            if C[b, a] < C[a, b]:
                order[i], order[i + 1] = b, a
                improved = True
        for i in range(m):
            item = order[i]
            rest = order[:i] + order[i + 1 :]
            deltas = []
            base = 0.0
            # delta of inserting `item` at position j of `rest`
            for j in range(len(rest) + 1):
                cost = sum(C[x, item] for x in rest[:j]) + sum(
                    C[item, x] for x in rest[j:]
                )
                deltas.append(cost)
                if j == i:
                    base = cost
            j_best = int(np.argmin(deltas))
            if deltas[j_best] < base and j_best != i:
                order = rest[:j_best] + [item] + rest[j_best:]
                improved = True
    return order, _order_cost(order, C)


def aggregate(
    rset: WeightedRankerSet,
    user_id: str,
    exact_threshold: int = 8,
    force_heuristic: bool = False,
    objective: str = "minimize-disagreement",
) -> Ranking:
    """Weighted Kemeny consensus for one user.

    Lists of up to ``exact_threshold`` items are solved exactly by exhaustive
    permutation search with a lexicographic tiebreak; longer lists fall back
    to a deterministic local-search heuristic.
    """
    pairs = rset.user_rankings(user_id)
    ids, C = _pair_cost_matrix(pairs, objective)
    if len(ids) == 1:
        return Ranking(user_id, tuple(ids))
    if len(ids) <= exact_threshold and not force_heuristic:
        order, _ = _exact_consensus(C)
    else:
        order, _ = _heuristic_consensus(C)
    return Ranking(user_id, tuple(ids[i] for i in order))


def kemeny_cost(ranking: Ranking, rset: WeightedRankerSet, user_id: str) -> float:
    return sum(
        weight * kendall_tau(ranking, base)
        for base, weight in rset.user_rankings(user_id)
    )


def borda(rset: WeightedRankerSet, user_id: str) -> Ranking:
    """Weighted Borda count baseline; ties break by tweet_id."""
    pairs = rset.user_rankings(user_id)
    ids = sorted(pairs[0][0].ordered_ids)
    m = len(ids)
    scores = {tid: 0.0 for tid in ids}
    for ranking, weight in pairs:
        for pos, tid in enumerate(ranking.ordered_ids):
            scores[tid] += weight * (m - pos)
    ordered = sorted(ids, key=lambda tid: (-scores[tid], tid))
    return Ranking(user_id, tuple(ordered))


# --- supervised weight learning -------------------------------------------------


def _candidate_score(outputs, names, weights, user_folds, labels, k, gain, zero_idcg):
    rset = WeightedRankerSet(
        outputs={name: outputs[name] for name in names},
        weights=dict(zip(names, weights)),
    )
    fold_means = []
    for fold_users in user_folds:
        vals = [
            ndcg_at_k(aggregate(rset, uid), labels, k, gain, zero_idcg)
            for uid in fold_users
        ]
        fold_means.append(float(np.mean(vals)))
    return float(np.mean(fold_means))


def learn_weights(
    outputs,
    labels,
    samples=200,
    folds=5,
    seed=0,
    k=10,
    gain="linear",
    zero_idcg="one",
):
    """Randomized search over the weight simplex scored by fold-partitioned
    mean NDCG@k of the aggregated rankings.

    ``outputs`` maps ranker name -> user_id -> Ranking over training users;
    the uniform vector is always candidate 0 and ties keep the earliest
    candidate. Returns (weights by name, best score).
    """
    names = sorted(outputs)
    if len(names) < 2:
        raise InvalidConfig("need at least two rankers to learn weights")
    users = sorted(outputs[names[0]])
    if len(users) < folds:
        raise InvalidConfig("need at least as many training users as folds")
    degenerate = True
    for uid in users:
        ranking = outputs[names[0]][uid]
        vals = {labels[tid] for tid in ranking.ordered_ids}
        if len(vals) > 1:
            degenerate = False
            break
    if degenerate:
        raise DegenerateLabels("every training user has all-tied labels")

    assignment = assign_user_folds(users, folds, seed)
    user_folds = [
        sorted(u for u in users if assignment[u] == f) for f in range(folds)
    ]
    rng = np.random.default_rng(seed)
    n = len(names)
    candidates = [np.full(n, 1.0 / n)]
    candidates.extend(rng.dirichlet(np.ones(n)) for _ in range(samples))
    best_idx = -1
    best_score = -np.inf
    for idx, cand in enumerate(candidates):
        score = _candidate_score(
            outputs, names, cand, user_folds, labels, k, gain, zero_idcg
        )
        if score > best_score:
            best_idx, best_score = idx, score
    winner = candidates[best_idx]
    return dict(zip(names, (float(w) for w in winner))), best_score


# --- file formats ----------------------------------------------------------------


def write_rankings(path, rankings, scores=None) -> None:
    """JSON-lines ranking file: one object per user, best tweet first."""
    with open(path, "w", encoding="utf-8") as fh:
        for r in sorted(rankings, key=lambda r: r.user_id):
            record = {"user_id": r.user_id, "ranking": list(r.ordered_ids)}
            if scores and r.user_id in scores:
                record["scores"] = [float(s) for s in scores[r.user_id]]
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def read_rankings(path) -> dict[str, Ranking]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            record = json.loads(line)
            r = Ranking(str(record["user_id"]), tuple(record["ranking"]))
            out[r.user_id] = r
    return out


def write_weights(path, weights: dict[str, float]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"weights": {k: float(v) for k, v in sorted(weights.items())}}, fh,
                  indent=2, sort_keys=True)
        fh.write("\n")


def read_weights(path) -> dict[str, float]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return {str(k): float(v) for k, v in doc["weights"].items()}
