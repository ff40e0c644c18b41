"""The 27 per-tweet features: extraction, movie/user statistics, z-scoring.

Feature order is fixed (13 user-based, 2 movie-based, 12 tweet-based); the
index of a name in FEATURE_NAMES is its slot in every feature vector and in
the exported matrix columns f00..f26.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from .dataset import Dataset, Interaction, UserProfile
from .errors import InvalidConfig, NonFiniteFeature

SCHEMA_VERSION = 1

USER_FEATURES = (
    "followers",
    "followees",
    "statuses",
    "imdb_tweets",
    "user_mean_rating",
    "liked_tweets",
    "lists",
    "tweeting_frequency",
    "follower_frequency",
    "following_frequency",
    "like_frequency",
    "followers_per_followee",
    "followers_minus_followees",
)

MOVIE_FEATURES = (
    "movie_tweet_count",
    "movie_mean_rating",
)

TWEET_FEATURES = (
    "rate",
    "mention_count",
    "hashtag_count",
    "tweet_age_days",
    "membership_age_at_tweet_days",
    "opinion_difference",
    "hour",
    "day_of_week",
    "time_of_day",
    "is_holiday",
    "same_language",
    "is_english",
)

FEATURE_NAMES = USER_FEATURES + MOVIE_FEATURES + TWEET_FEATURES
N_FEATURES = len(FEATURE_NAMES)

# Subset kept by the reference feature-selection run; usable as a preset mask.
SELECTED_PRESET = (
    "followers",
    "statuses",
    "imdb_tweets",
    "followers_minus_followees",
    "movie_mean_rating",
    "rate",
    "mention_count",
    "opinion_difference",
    "is_holiday",
    "same_language",
    "is_english",
)


@dataclass(frozen=True)
class MovieStats:
    movie_id: str
    tweet_count: int
    mean_rating: float


@dataclass(frozen=True)
class UserAggregates:
    user_id: str
    imdb_tweets: int
    mean_rating: float


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    schema_version: int = SCHEMA_VERSION


@dataclass(frozen=True)
class Normalizer:
    means: np.ndarray
    stds: np.ndarray
    fitted_on: int

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        safe = np.where(self.stds > 0, self.stds, 1.0)
        z = (X - self.means) / safe
        if X.ndim == 1:
            z[self.stds == 0] = 0.0
        else:
            z[:, self.stds == 0] = 0.0
        return z


@dataclass(frozen=True)
class FeatureMask:
    selected: np.ndarray  # bool, length N_FEATURES

    def __post_init__(self):
        sel = np.asarray(self.selected, dtype=bool)
        if sel.shape != (N_FEATURES,):
            raise InvalidConfig(f"mask must have length {N_FEATURES}")
        if not sel.any():
            raise InvalidConfig("mask must keep at least one feature")
        object.__setattr__(self, "selected", sel)

    @classmethod
    def all_features(cls) -> "FeatureMask":
        return cls(np.ones(N_FEATURES, dtype=bool))

    @classmethod
    def paper_selected(cls) -> "FeatureMask":
        return cls.from_names(SELECTED_PRESET)

    @classmethod
    def from_names(cls, names) -> "FeatureMask":
        sel = np.zeros(N_FEATURES, dtype=bool)
        for name in names:
            if name not in FEATURE_NAMES:
                raise InvalidConfig(f"unknown feature '{name}'")
            sel[FEATURE_NAMES.index(name)] = True
        return cls(sel)

    def names(self) -> list[str]:
        return [FEATURE_NAMES[i] for i in np.flatnonzero(self.selected)]

    def without(self, index: int) -> "FeatureMask":
        sel = self.selected.copy()
        sel[index] = False
        return FeatureMask(sel)

    def apply(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X)[..., self.selected]


def compute_movie_stats(interactions) -> dict[str, MovieStats]:
    """Per-movie tweet counts and mean ratings over the given interactions.

    Callers avoiding train/test leakage pass the training slice only.
    """
    if isinstance(interactions, Dataset):
        interactions = interactions.interactions
    interactions = list(interactions)
    if not interactions:
        raise InvalidConfig("cannot compute movie stats on an empty slice")
    counts: dict[str, int] = {}
    sums: dict[str, float] = {}
    for i in interactions:
        counts[i.movie_id] = counts.get(i.movie_id, 0) + 1
        sums[i.movie_id] = sums.get(i.movie_id, 0.0) + i.rating
    return {
        mid: MovieStats(mid, counts[mid], sums[mid] / counts[mid]) for mid in counts
    }


def compute_user_aggregates(interactions) -> dict[str, UserAggregates]:
    if isinstance(interactions, Dataset):
        interactions = interactions.interactions
    counts: dict[str, int] = {}
    sums: dict[str, float] = {}
    for i in interactions:
        counts[i.user_id] = counts.get(i.user_id, 0) + 1
        sums[i.user_id] = sums.get(i.user_id, 0.0) + i.rating
    return {
        uid: UserAggregates(uid, counts[uid], sums[uid] / counts[uid])
        for uid in counts
    }


def fallback_movie_stats(movie_id: str, default_mean: float) -> MovieStats:
    """Stand-in for movies absent from the training slice."""
    return MovieStats(movie_id, 0, default_mean)


def _holiday_flag(dt: datetime, holidays) -> float:
    if holidays is None:
        return 1.0 if dt.weekday() >= 5 else 0.0
    return 1.0 if dt.date() in holidays else 0.0


def _feature_row(
    i: Interaction,
    p: UserProfile,
    m: MovieStats,
    aux: UserAggregates,
    ref_time: int,
    holidays=None,
) -> np.ndarray:
    membership_days = max((ref_time - p.account_created_at) / 86400.0, 1.0)
    dt = datetime.fromtimestamp(i.tweeted_at, tz=timezone.utc)
    row = np.array(
        [
            p.followers,
            p.followees,
            p.statuses,
            aux.imdb_tweets,
            aux.mean_rating,
            p.liked_tweets,
            p.lists,
            p.statuses / membership_days,
            p.followers / membership_days,
            p.followees / membership_days,
            p.liked_tweets / membership_days,
            p.followers / max(p.followees, 1),
            p.followers - p.followees,
            m.tweet_count,
            m.mean_rating,
            i.rating,
            i.mention_count,
            i.hashtag_count,
            (ref_time - i.tweeted_at) / 86400.0,
            (i.tweeted_at - p.account_created_at) / 86400.0,
            i.rating - m.mean_rating,
            dt.hour,
            dt.weekday(),
            dt.hour // 6,
            _holiday_flag(dt, holidays),
            1.0 if i.language == p.default_language else 0.0,
            1.0 if i.language == "en" else 0.0,
        ],
        dtype=float,
    )
    bad = np.flatnonzero(~np.isfinite(row))
    if bad.size:
        raise NonFiniteFeature(int(bad[0]))
    return row


def extract(i, p, m, aux, ref_time, holidays=None) -> FeatureVector:
    """Compute the 27 features for one interaction. Pure and deterministic."""
    return FeatureVector(_feature_row(i, p, m, aux, ref_time, holidays))


def feature_matrix(
    interactions,
    profiles,
    movie_stats,
    aggregates,
    ref_time,
    holidays=None,
    default_movie_mean=None,
):
    """Stack feature rows for many interactions.

    Returns (tweet_ids, user_ids, labels, X). Movies missing from
    ``movie_stats`` fall back to count 0 and ``default_movie_mean`` (required
    when such movies can occur).
    """
    ids, users, labels, rows = [], [], [], []
    for i in interactions:
        m = movie_stats.get(i.movie_id)
        if m is None:
            if default_movie_mean is None:
                raise InvalidConfig(f"no stats for movie '{i.movie_id}'")
            m = fallback_movie_stats(i.movie_id, default_movie_mean)
        rows.append(
            _feature_row(i, profiles[i.user_id], m, aggregates[i.user_id], ref_time, holidays)
        )
        ids.append(i.tweet_id)
        users.append(i.user_id)
        labels.append(i.engagement)
    X = np.vstack(rows) if rows else np.empty((0, N_FEATURES))
    return ids, users, np.asarray(labels, dtype=float), X


def fit_normalizer(rows) -> Normalizer:
    """Per-feature mean and population std over the given rows."""
    if isinstance(rows, np.ndarray):
        X = rows
    else:
        rows = list(rows)
        X = np.vstack([r.values if isinstance(r, FeatureVector) else r for r in rows])
    if X.size == 0:
        raise InvalidConfig("cannot fit a normalizer on zero rows")
    return Normalizer(
        means=X.mean(axis=0), stds=X.std(axis=0), fitted_on=X.shape[0]
    )


def apply_normalizer(n: Normalizer, v: FeatureVector) -> FeatureVector:
    return FeatureVector(n.transform(v.values), v.schema_version)


# --- export -----------------------------------------------------------------


def write_feature_matrix(path, tweet_ids, user_ids, labels, X) -> None:
    X = np.asarray(X)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["tweet_id", "user_id", "engagement"]
            + [f"f{j:02d}" for j in range(X.shape[1])]
        )
        for tid, uid, y, row in zip(tweet_ids, user_ids, labels, X):
            writer.writerow([tid, uid, int(y)] + [repr(float(v)) for v in row])


def read_feature_matrix(path):
    tweet_ids, user_ids, labels, rows = [], [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        n_cols = len(header) - 3
        for row in reader:
            tweet_ids.append(row[0])
            user_ids.append(row[1])
            labels.append(float(row[2]))
            rows.append([float(v) for v in row[3:]])
    X = np.asarray(rows) if rows else np.empty((0, n_cols))
    return tweet_ids, user_ids, np.asarray(labels), X


def write_sidecar(path, normalizer=None, mask=None) -> None:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "feature_names": list(FEATURE_NAMES),
        "normalizer": None
        if normalizer is None
        else {
            "means": [float(v) for v in normalizer.means],
            "stds": [float(v) for v in normalizer.stds],
            "fitted_on": normalizer.fitted_on,
        },
        "mask": None if mask is None else mask.names(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_sidecar(path):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    normalizer = None
    if doc.get("normalizer"):
        nd = doc["normalizer"]
        normalizer = Normalizer(
            np.asarray(nd["means"]), np.asarray(nd["stds"]), int(nd["fitted_on"])
        )
    mask = None if doc.get("mask") is None else FeatureMask.from_names(doc["mask"])
    return doc["schema_version"], doc["feature_names"], normalizer, mask


def parse_holidays(spec: str | None):
    """Comma-separated YYYY-MM-DD list (or @file with one date per line)."""
    if not spec:
        return None
    if spec.startswith("@"):
        with open(spec[1:], encoding="utf-8") as fh:
            parts = [ln.strip() for ln in fh if ln.strip()]
    else:
        parts = [p.strip() for p in spec.split(",") if p.strip()]
    try:
        return {datetime.strptime(p, "%Y-%m-%d").date() for p in parts}
    except ValueError as exc:
        raise InvalidConfig(f"bad holiday date: {exc}") from None
