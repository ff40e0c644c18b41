"""NDCG@k scoring, cross-validated model evaluation, feature selection by
backward elimination, randomized hyperparameter search, and the paired t-test.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import dataset as ds
from . import features as ft
from .errors import (
    DegenerateDifferences,
    InvalidConfig,
    MissingLabel,
)


def _gains(labels: np.ndarray, gain: str) -> np.ndarray:
    if gain == "linear":
        return labels.astype(float)
    if gain == "exp":
        return np.exp2(labels.astype(float)) - 1.0
    raise InvalidConfig(f"unknown gain mode '{gain}'")


def dcg(ordered_labels, k: int, gain: str = "linear") -> float:
    """Sum of gain(label)/log2(pos+1) over the first k positions (1-based)."""
    g = _gains(np.asarray(ordered_labels, dtype=float)[:k], gain)
    discounts = np.log2(np.arange(2, g.size + 2))
    return float(np.sum(g / discounts))


def ideal_dcg(labels, k: int, gain: str = "linear") -> float:
    return dcg(np.sort(np.asarray(labels, dtype=float))[::-1], k, gain)


def ndcg_of_ordered_labels(ordered_labels, k=10, gain="linear", zero_idcg="one"):
    idcg = ideal_dcg(ordered_labels, k, gain)
    if idcg == 0.0:
        if zero_idcg == "one":
            return 1.0
        if zero_idcg == "zero":
            return 0.0
        raise InvalidConfig(f"unknown zero-IDCG rule '{zero_idcg}'")
    return dcg(ordered_labels, k, gain) / idcg


def ndcg_at_k(ranking, labels: dict, k=10, gain="linear", zero_idcg="one") -> float:
    """NDCG@k of a Ranking against a tweet_id -> engagement label map."""
    ordered = []
    for tid in ranking.ordered_ids:
        if tid not in labels:
            raise MissingLabel(tid)
        ordered.append(labels[tid])
    return ndcg_of_ordered_labels(ordered, k, gain, zero_idcg)


def ndcg_of_scores(scores, labels, tweet_ids, k=10, gain="linear", zero_idcg="one"):
    """NDCG@k of the ranking induced by scores (desc, tweet_id tiebreak)."""
    order = sorted(range(len(tweet_ids)), key=lambda i: (-scores[i], tweet_ids[i]))
    ordered = np.asarray(labels, dtype=float)[order]
    return ndcg_of_ordered_labels(ordered, k, gain, zero_idcg)


@dataclass(frozen=True)
class MetricReport:
    per_user: dict[str, float]
    mean: float
    k: int
    fingerprint: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "mean": self.mean,
            "per_user": dict(sorted(self.per_user.items())),
            "fingerprint": self.fingerprint,
        }


def mean_ndcg(rankings, labels, k=10, gain="linear", zero_idcg="one", fingerprint=None):
    """Per-user NDCG@k and its arithmetic mean over a set of Rankings."""
    per_user = {
        r.user_id: ndcg_at_k(r, labels, k, gain, zero_idcg) for r in rankings
    }
    if not per_user:
        raise InvalidConfig("no rankings to evaluate")
    return MetricReport(
        per_user=per_user,
        mean=float(np.mean(list(per_user.values()))),
        k=k,
        fingerprint=fingerprint or {},
    )


def write_metric_report(report: MetricReport, json_path, csv_path) -> None:
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["user_id", f"ndcg_at_{report.k}"])
        for uid in sorted(report.per_user):
            writer.writerow([uid, repr(report.per_user[uid])])
        writer.writerow(["__mean__", repr(report.mean)])


# --- cross-validated trainer evaluation --------------------------------------


def build_query_groups(
    interactions,
    profiles,
    movie_stats,
    aggregates,
    ref_time,
    normalizer,
    mask,
    holidays=None,
    default_movie_mean=None,
):
    """Featurize interactions and bundle them into per-user QueryGroups."""
    from .ltr import QueryGroup

    ids, users, labels, X = ft.feature_matrix(
        interactions,
        profiles,
        movie_stats,
        aggregates,
        ref_time,
        holidays,
        default_movie_mean,
    )
    Z = mask.apply(normalizer.transform(X))
    groups = {}
    for idx, uid in enumerate(users):
        groups.setdefault(uid, []).append(idx)
    out = []
    for uid in sorted(groups):
        rows = groups[uid]
        out.append(
            QueryGroup(
                user_id=uid,
                X=Z[rows],
                labels=labels[rows],
                tweet_ids=[ids[r] for r in rows],
            )
        )
    return out


def _prepare_fold(train_inter, eval_inter, d, mask, holidays):
    """Fit stats and the normalizer on the train slice, featurize both slices."""
    stats = ft.compute_movie_stats(train_inter)
    default_mean = float(np.mean([i.rating for i in train_inter]))
    train_aggr = ft.compute_user_aggregates(train_inter)
    eval_aggr = ft.compute_user_aggregates(eval_inter)
    _, _, _, X_train = ft.feature_matrix(
        train_inter, d.profiles, stats, train_aggr, d.reference_time, holidays
    )
    normalizer = ft.fit_normalizer(X_train)
    train_groups = build_query_groups(
        train_inter, d.profiles, stats, train_aggr, d.reference_time,
        normalizer, mask, holidays,
    )
    eval_groups = build_query_groups(
        eval_inter, d.profiles, stats, eval_aggr, d.reference_time,
        normalizer, mask, holidays, default_movie_mean=default_mean,
    )
    return train_groups, eval_groups


def evaluate_trainer_on_split(
    trainer, d, train_users, eval_users, mask,
    k=10, gain="linear", zero_idcg="one", holidays=None,
):
    """Train on one user set, rank the other, return its MetricReport."""
    from .ltr import rank_group

    by_user = ds.group_by_user(d)
    train_inter = [i for u in sorted(train_users) for i in by_user[u]]
    eval_inter = [i for u in sorted(eval_users) for i in by_user[u]]
    train_groups, eval_groups = _prepare_fold(train_inter, eval_inter, d, mask, holidays)
    model = trainer(train_groups)
    labels = {i.tweet_id: i.engagement for i in eval_inter}
    rankings = [rank_group(model, g) for g in eval_groups]
    return mean_ndcg(rankings, labels, k, gain, zero_idcg)


def cv_mean_ndcg(
    trainer, d, mask, folds, seed,
    k=10, gain="linear", zero_idcg="one", holidays=None,
):
    """User-grouped k-fold CV: mean over folds of the fold-mean NDCG@k."""
    plan = ds.split_folds(d, folds, seed)
    fold_means = []
    for f in range(folds):
        report = evaluate_trainer_on_split(
            trainer, d, plan.users_outside_fold(f), plan.users_in_fold(f),
            mask, k, gain, zero_idcg, holidays,
        )
        fold_means.append(report.mean)
    return float(np.mean(fold_means))


# --- backward elimination -----------------------------------------------------


def backward_elimination(
    trainer, d, folds=5, seed=0, max_removals=None,
    initial_mask=None, k=10, gain="linear", zero_idcg="one", holidays=None,
):
    """Greedily drop the feature whose removal most improves CV NDCG@k.

    Stops when no single removal improves the score, when only one feature
    remains, or after ``max_removals`` removals.
    """
    mask = initial_mask or ft.FeatureMask.all_features()
    if max_removals is None:
        max_removals = int(mask.selected.sum()) - 1
    best = cv_mean_ndcg(trainer, d, mask, folds, seed, k, gain, zero_idcg, holidays)
    removed = 0
    while removed < max_removals and mask.selected.sum() > 1:
        candidates = []
        for idx in np.flatnonzero(mask.selected):
            trial = mask.without(int(idx))
            score = cv_mean_ndcg(
                trainer, d, trial, folds, seed, k, gain, zero_idcg, holidays
            )
            candidates.append((score, int(idx), trial))
        top_score, _, top_mask = max(candidates, key=lambda c: (c[0], -c[1]))
        if top_score <= best:
            break
        best, mask = top_score, top_mask
        removed += 1
    return mask


# --- randomized hyperparameter search ----------------------------------------


@dataclass(frozen=True)
class SearchSpace:
    """Named parameter ranges.

    Each entry is one of ("uniform", lo, hi), ("log-uniform", lo, hi),
    ("int", lo, hi) with an inclusive upper bound, or ("choice", [values]).
    """

    params: dict[str, tuple]

    def __post_init__(self):
        if not self.params:
            raise InvalidConfig("empty search space")
        for name, spec in self.params.items():
            kind = spec[0]
            if kind in ("uniform", "log-uniform"):
                if not spec[1] < spec[2]:
                    raise InvalidConfig(f"empty range for '{name}'")
                if kind == "log-uniform" and spec[1] <= 0:
                    raise InvalidConfig(f"log-uniform needs positive bounds: '{name}'")
            elif kind == "int":
                if spec[1] > spec[2]:
                    raise InvalidConfig(f"empty range for '{name}'")
            elif kind == "choice":
                if not spec[1]:
                    raise InvalidConfig(f"empty choice list for '{name}'")
            else:
                raise InvalidConfig(f"unknown range kind '{kind}'")

    def is_finite_grid(self) -> bool:
        return all(spec[0] == "choice" for spec in self.params.values())

    def grid_size(self) -> int:
        size = 1
        for spec in self.params.values():
            size *= len(spec[1])
        return size

    def enumerate_grid(self) -> list[dict]:
        names = sorted(self.params)
        combos = [{}]
        for name in names:
            combos = [
                {**c, name: v} for c in combos for v in self.params[name][1]
            ]
        return combos

    def sample(self, rng: np.random.Generator) -> dict:
        out = {}
        for name in sorted(self.params):
            spec = self.params[name]
            kind = spec[0]
            if kind == "uniform":
                out[name] = float(rng.uniform(spec[1], spec[2]))
            elif kind == "log-uniform":
                out[name] = float(
                    math.exp(rng.uniform(math.log(spec[1]), math.log(spec[2])))
                )
            elif kind == "int":
                out[name] = int(rng.integers(spec[1], spec[2] + 1))
            else:
                out[name] = spec[1][int(rng.integers(len(spec[1])))]
        return out


def sample_candidates(space: SearchSpace, samples: int, seed: int) -> list[dict]:
    """Candidate parameter sets; a finite grid that fits the budget is
    enumerated exhaustively instead of sampled."""
    if samples < 1:
        raise InvalidConfig("samples must be >= 1")
    if space.is_finite_grid() and space.grid_size() <= samples:
        return space.enumerate_grid()
    rng = np.random.default_rng(seed)
    return [space.sample(rng) for _ in range(samples)]


def randomized_search(
    trainer_factory, space, d, samples, folds, seed, mask=None,
    k=10, gain="linear", zero_idcg="one", holidays=None,
):
    """Evaluate sampled parameter sets by CV NDCG@k; return the best.

    Returns (params, score, trials) where trials holds every (params, score)
    pair in candidate order. Ties keep the earliest candidate.
    """
    mask = mask or ft.FeatureMask.all_features()
    candidates = sample_candidates(space, samples, seed)
    trials = []
    best_idx = -1
    best_score = -math.inf
    for idx, params in enumerate(candidates):
        score = cv_mean_ndcg(
            trainer_factory(params), d, mask, folds, seed,
            k, gain, zero_idcg, holidays,
        )
        trials.append((params, score))
        if score > best_score:
            best_idx, best_score = idx, score
    assert all(best_score >= s for _, s in trials)
    return candidates[best_idx], best_score, trials


# --- paired t-test ------------------------------------------------------------


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the regularized incomplete beta (Lentz)."""
    tiny = 1e-30
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 300):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-12:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    if x < 0.0 or x > 1.0:
        raise ValueError("x outside [0, 1]")
    if x == 0.0 or x == 1.0:
        return float(x)
    front = math.exp(
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_two_sided_p(t_statistic: float, df: int) -> float:
    """P(|T| >= |t|) for Student's t with df degrees of freedom."""
    x = df / (df + t_statistic * t_statistic)
    return regularized_incomplete_beta(df / 2.0, 0.5, x)


def paired_t_test(a, b):
    """Two-sided paired t-test on equal-length score sequences.

    Returns (t_statistic, p_value); raises DegenerateDifferences when the
    paired differences have zero variance."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise InvalidConfig("need two equal-length score vectors of size >= 2")
    diff = a - b
    sd = diff.std(ddof=1)
    if sd == 0.0:
        raise DegenerateDifferences("paired differences have zero variance")
    n = diff.size
    t_stat = float(diff.mean() / (sd / math.sqrt(n)))
    return t_stat, t_two_sided_p(t_stat, n - 1)


def compare_methods(scores_a, scores_b, alpha=0.01):
    """Paired significance check between two methods' per-fold scores."""
    t_stat, p_value = paired_t_test(scores_a, scores_b)
    return {
        "t_statistic": t_stat,
        "p_value": p_value,
        "significant": bool(p_value < alpha),
        "alpha": alpha,
    }
