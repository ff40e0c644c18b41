"""Versioned JSON serialization for every trained model kind."""

from __future__ import annotations

import json

from .errors import InvalidConfig
from .ltr import BoostedRanker, LinearRanker, NeuralRanker
from .regression import BayesianRidgeModel, ExtraTreesModel, LinearModel

MODEL_KINDS = {
    "linear_regression": LinearModel,
    "bayesian_ridge": BayesianRidgeModel,
    "extra_trees": ExtraTreesModel,
    "linear_ranker": LinearRanker,
    "neural_ranker": NeuralRanker,
    "boosted_ranker": BoostedRanker,
}


def model_to_dict(model) -> dict:
    return model.to_dict()


def model_from_dict(doc: dict):
    kind = doc.get("kind")
    if kind not in MODEL_KINDS:
        raise InvalidConfig(f"unknown model kind '{kind}'")
    if int(doc.get("version", 0)) != 1:
        raise InvalidConfig(f"unsupported model version {doc.get('version')}")
    return MODEL_KINDS[kind].from_dict(doc)


def save_model(model, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, sort_keys=True)
        fh.write("\n")


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
