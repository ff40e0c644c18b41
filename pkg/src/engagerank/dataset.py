"""Interaction data: loading, validation, grouping, fold splits, and synthesis.

File formats (see README): interactions as CSV or JSON-lines with header
``tweet_id,user_id,movie_id,rating,tweeted_at,language,mention_count,
hashtag_count,engagement``; profiles as CSV with header
``user_id,followers,followees,statuses,liked_tweets,lists,
account_created_at,default_language``. Timestamps are ISO-8601 UTC and are
stored internally as integer epoch seconds.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from .errors import (
    EmptyDataset,
    InvalidConfig,
    MissingProfile,
    SchemaViolation,
    TooFewUsers,
)

INTERACTION_FIELDS = (
    "tweet_id",
    "user_id",
    "movie_id",
    "rating",
    "tweeted_at",
    "language",
    "mention_count",
    "hashtag_count",
    "engagement",
)

PROFILE_FIELDS = (
    "user_id",
    "followers",
    "followees",
    "statuses",
    "liked_tweets",
    "lists",
    "account_created_at",
    "default_language",
)


@dataclass(frozen=True)
class UserProfile:
    user_id: str
    followers: int
    followees: int
    statuses: int
    liked_tweets: int
    lists: int
    account_created_at: int  # epoch seconds, UTC
    default_language: str


@dataclass(frozen=True)
class Interaction:
    tweet_id: str
    user_id: str
    movie_id: str
    rating: int
    tweeted_at: int  # epoch seconds, UTC
    language: str
    mention_count: int
    hashtag_count: int
    engagement: int


@dataclass(frozen=True)
class Dataset:
    interactions: tuple[Interaction, ...]
    profiles: dict[str, UserProfile]
    reference_time: int

    def user_ids(self) -> list[str]:
        return sorted({i.user_id for i in self.interactions})

    def restrict_to_users(self, user_ids) -> "Dataset":
        keep = set(user_ids)
        subset = tuple(i for i in self.interactions if i.user_id in keep)
        return Dataset(subset, self.profiles, self.reference_time)


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignment: dict[str, int]
    seed: int

    def users_in_fold(self, fold: int) -> list[str]:
        return sorted(u for u, f in self.assignment.items() if f == fold)

    def users_outside_fold(self, fold: int) -> list[str]:
        return sorted(u for u, f in self.assignment.items() if f != fold)


def parse_timestamp(text: str) -> int:
    """ISO-8601 UTC string -> epoch seconds. Naive timestamps are rejected."""
    raw = text.strip()
    if raw.endswith("Z"):
        raw = raw[:-1] + "+00:00"
    dt = datetime.fromisoformat(raw)
    if dt.tzinfo is None:
        raise ValueError("timestamp must carry a UTC offset")
    return int(dt.timestamp())


def format_timestamp(ts: int) -> str:
    return datetime.fromtimestamp(int(ts), tz=timezone.utc).strftime(
        "%Y-%m-%dT%H:%M:%SZ"
    )


def _require(row: dict, line_no: int, fields) -> None:
    for f in fields:
        if f not in row or row[f] is None or row[f] == "":
            raise SchemaViolation(line_no, f, "missing")


def _int_field(row, line_no, field_name, minimum=0, maximum=None) -> int:
    try:
        value = int(row[field_name])
    except (TypeError, ValueError):
        raise SchemaViolation(line_no, field_name, "not an integer") from None
    if value < minimum or (maximum is not None and value > maximum):
        raise SchemaViolation(line_no, field_name, f"out of range {value}")
    return value


def _ts_field(row, line_no, field_name) -> int:
    try:
        return parse_timestamp(str(row[field_name]))
    except ValueError:
        raise SchemaViolation(line_no, field_name, "bad timestamp") from None


def _parse_interaction(row: dict, line_no: int, profiles) -> Interaction:
    _require(row, line_no, INTERACTION_FIELDS)
    user_id = str(row["user_id"])
    if user_id not in profiles:
        raise MissingProfile(user_id)
    tweeted_at = _ts_field(row, line_no, "tweeted_at")
    if tweeted_at < profiles[user_id].account_created_at:
        raise SchemaViolation(line_no, "tweeted_at", "tweet precedes account creation")
    return Interaction(
        tweet_id=str(row["tweet_id"]),
        user_id=user_id,
        movie_id=str(row["movie_id"]),
        rating=_int_field(row, line_no, "rating", minimum=1, maximum=10),
        tweeted_at=tweeted_at,
        language=str(row["language"]),
        mention_count=_int_field(row, line_no, "mention_count"),
        hashtag_count=_int_field(row, line_no, "hashtag_count"),
        engagement=_int_field(row, line_no, "engagement"),
    )


def load_profiles(path) -> dict[str, UserProfile]:
    profiles: dict[str, UserProfile] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for line_no, row in enumerate(reader, start=2):
            _require(row, line_no, PROFILE_FIELDS)
            user_id = str(row["user_id"])
            if user_id in profiles:
                raise SchemaViolation(line_no, "user_id", "duplicate")
            profiles[user_id] = UserProfile(
                user_id=user_id,
                followers=_int_field(row, line_no, "followers"),
                followees=_int_field(row, line_no, "followees"),
                statuses=_int_field(row, line_no, "statuses"),
                liked_tweets=_int_field(row, line_no, "liked_tweets"),
                lists=_int_field(row, line_no, "lists"),
                account_created_at=_ts_field(row, line_no, "account_created_at"),
                default_language=str(row["default_language"]),
            )
    return profiles


def load_interactions(path, profiles, fmt="csv", reference_time=None) -> Dataset:
    """Load interactions and pair them with ``profiles`` into a Dataset.

    Rows violating the schema raise SchemaViolation with their line number;
    rows citing users absent from ``profiles`` raise MissingProfile.
    """
    if fmt not in ("csv", "jsonl"):
        raise InvalidConfig(f"unknown format '{fmt}'")
    interactions: list[Interaction] = []
    seen_ids: set[str] = set()
    with open(path, newline="", encoding="utf-8") as fh:
        if fmt == "csv":
            rows = enumerate(csv.DictReader(fh), start=2)
        else:
            rows = (
                (ln, json.loads(line))
                for ln, line in enumerate(fh, start=1)
                if line.strip()
            )
        for line_no, row in rows:
            inter = _parse_interaction(row, line_no, profiles)
            if inter.tweet_id in seen_ids:
                raise SchemaViolation(line_no, "tweet_id", "duplicate")
            seen_ids.add(inter.tweet_id)
            interactions.append(inter)
    if not interactions:
        raise EmptyDataset(f"no interactions in {path}")
    latest = max(i.tweeted_at for i in interactions)
    if reference_time is None:
        reference_time = latest
    elif reference_time < latest:
        raise InvalidConfig("reference_time earlier than newest interaction")
    return Dataset(tuple(interactions), dict(profiles), int(reference_time))


def write_interactions(d: Dataset, path, fmt="csv") -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if fmt == "csv":
            writer = csv.writer(fh)
            writer.writerow(INTERACTION_FIELDS)
            for i in d.interactions:
                writer.writerow(
                    [
                        i.tweet_id,
                        i.user_id,
                        i.movie_id,
                        i.rating,
                        format_timestamp(i.tweeted_at),
                        i.language,
                        i.mention_count,
                        i.hashtag_count,
                        i.engagement,
                    ]
                )
        elif fmt == "jsonl":
            for i in d.interactions:
                record = {
                    "tweet_id": i.tweet_id,
                    "user_id": i.user_id,
                    "movie_id": i.movie_id,
                    "rating": i.rating,
                    "tweeted_at": format_timestamp(i.tweeted_at),
                    "language": i.language,
                    "mention_count": i.mention_count,
                    "hashtag_count": i.hashtag_count,
                    "engagement": i.engagement,
                }
                fh.write(json.dumps(record, sort_keys=True) + "\n")
        else:
            raise InvalidConfig(f"unknown format '{fmt}'")


def write_profiles(d: Dataset, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(PROFILE_FIELDS)
        for user_id in sorted(d.profiles):
            p = d.profiles[user_id]
            writer.writerow(
                [
                    p.user_id,
                    p.followers,
                    p.followees,
                    p.statuses,
                    p.liked_tweets,
                    p.lists,
                    format_timestamp(p.account_created_at),
                    p.default_language,
                ]
            )


def assign_user_folds(user_ids, k: int, seed: int) -> dict[str, int]:
    """Deal users round-robin into k folds after a seeded shuffle."""
    users = sorted(user_ids)
    order = np.random.default_rng(seed).permutation(len(users))
    return {users[idx]: pos % k for pos, idx in enumerate(order)}


def split_folds(d: Dataset, k: int, seed: int) -> FoldPlan:
    """User-grouped fold assignment; no user's tweets straddle folds."""
    if k < 2:
        raise InvalidConfig("fold count must be at least 2")
    users = d.user_ids()
    if len(users) < k:
        raise TooFewUsers(f"{len(users)} users for {k} folds")
    return FoldPlan(k=k, assignment=assign_user_folds(users, k, seed), seed=seed)


def group_by_user(d: Dataset) -> dict[str, list[Interaction]]:
    """Per-user groups ordered by (tweeted_at, tweet_id)."""
    groups: dict[str, list[Interaction]] = {}
    for inter in d.interactions:
        groups.setdefault(inter.user_id, []).append(inter)
    for rows in groups.values():
        rows.sort(key=lambda i: (i.tweeted_at, i.tweet_id))
    return groups


# --- synthetic data ---------------------------------------------------------

# Raw quantities the planted utility may read from an interaction/profile.
_PLANTED_EXTRACTORS = {
    "rate": lambda i, p: float(i.rating),
    "mention_count": lambda i, p: float(i.mention_count),
    "hashtag_count": lambda i, p: float(i.hashtag_count),
    "same_language": lambda i, p: 1.0 if i.language == p.default_language else 0.0,
    "log_followers": lambda i, p: math.log1p(p.followers),
}

DEFAULT_PLANTED_COEFFICIENTS = {
    "rate": 0.9,
    "mention_count": 0.45,
    "hashtag_count": 0.3,
    "same_language": 1.2,
    "log_followers": 0.4,
}

SYNTH_START_TIME = 1401580800  # 2014-06-01T00:00:00Z
_LANGUAGES = ("en", "es", "pt", "nl")


def softplus(x: float) -> float:
    return max(x, 0.0) + math.log1p(math.exp(-abs(x)))


@dataclass(frozen=True)
class PlantedModel:
    """Ground-truth engagement generator, kept for oracle tests."""

    bias: float
    coefficients: dict[str, float]

    def raw_features(self, inter: Interaction, profile: UserProfile) -> dict:
        return {
            name: _PLANTED_EXTRACTORS[name](inter, profile)
            for name in self.coefficients
        }

    def utility(self, inter: Interaction, profile: UserProfile) -> float:
        raw = self.raw_features(inter, profile)
        return self.bias + sum(w * raw[name] for name, w in self.coefficients.items())

    def noiseless_engagement(self, inter: Interaction, profile: UserProfile) -> int:
        return int(round(softplus(self.utility(inter, profile))))

    def to_dict(self) -> dict:
        return {"bias": self.bias, "coefficients": dict(self.coefficients)}


@dataclass(frozen=True)
class SynthConfig:
    users: int = 50
    tweets_per_user: int = 8
    movies: int = 20
    noise_rate: float = 0.0  # Poisson rate added to the planted engagement
    start_time: int = SYNTH_START_TIME
    planted: PlantedModel = field(
        default_factory=lambda: PlantedModel(2.5, dict(DEFAULT_PLANTED_COEFFICIENTS))
    )


def generate_synthetic(cfg: SynthConfig, seed: int) -> tuple[Dataset, PlantedModel]:
    """Seeded synthetic dataset with engagement labels from a planted model.

    Engagement = round(softplus(planted utility) + Poisson(noise_rate)); with
    noise_rate 0 the labels are an exact deterministic function of the planted
    coefficients, which are returned for oracle checks.
    """
    if cfg.users < 1 or cfg.tweets_per_user < 1:
        raise InvalidConfig("users and tweets_per_user must be positive")
    if cfg.movies < 1 or cfg.noise_rate < 0:
        raise InvalidConfig("movies must be positive and noise_rate nonnegative")
    unknown = set(cfg.planted.coefficients) - set(_PLANTED_EXTRACTORS)
    if unknown:
        raise InvalidConfig(f"unknown planted fields {sorted(unknown)}")

    rng = np.random.default_rng(seed)
    width = max(4, len(str(cfg.users)))
    profiles: dict[str, UserProfile] = {}
    interactions: list[Interaction] = []
    tweet_no = 0
    for u in range(cfg.users):
        user_id = f"u{u:0{width}d}"
        default_lang = _LANGUAGES[rng.choice(len(_LANGUAGES), p=(0.55, 0.2, 0.15, 0.1))]
        created = cfg.start_time - int(rng.uniform(400, 2500)) * 86400
        profile = UserProfile(
            user_id=user_id,
            followers=int(rng.lognormal(5.5, 1.2)) + 1,
            followees=int(rng.lognormal(5.0, 1.0)) + 1,
            statuses=cfg.tweets_per_user + int(rng.lognormal(6.0, 1.0)),
            liked_tweets=int(rng.lognormal(4.5, 1.3)),
            lists=int(rng.poisson(3)),
            account_created_at=created,
            default_language=default_lang,
        )
        profiles[user_id] = profile
        for _ in range(cfg.tweets_per_user):
            if rng.uniform() < 0.7:
                lang = default_lang
            else:
                lang = _LANGUAGES[rng.choice(len(_LANGUAGES))]
            inter = Interaction(
                tweet_id=f"t{tweet_no:07d}",
                user_id=user_id,
                movie_id=f"m{rng.integers(cfg.movies):04d}",
                rating=int(rng.integers(1, 11)),
                tweeted_at=cfg.start_time + int(rng.uniform(0, 365 * 86400)),
                language=lang,
                mention_count=int(rng.poisson(1.2)),
                hashtag_count=int(rng.poisson(0.8)),
                engagement=0,
            )
            value = softplus(cfg.planted.utility(inter, profile))
            if cfg.noise_rate > 0:
                value += rng.poisson(cfg.noise_rate)
            interactions.append(
                dataclasses.replace(inter, engagement=int(round(value)))
            )
            tweet_no += 1
    reference_time = max(i.tweeted_at for i in interactions)
    return Dataset(tuple(interactions), profiles, reference_time), cfg.planted
