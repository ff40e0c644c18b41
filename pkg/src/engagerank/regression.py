"""Global engagement-value regressors: SGD linear, Bayesian ridge, Extra-Trees.

All trainers are deterministic under a fixed seed and all models expose
``predict(X) -> scores`` for per-user ranking downstream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import Diverged, SchemaMismatch, SingularSystem


def _check_width(X: np.ndarray, expected: int) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != expected:
        raise SchemaMismatch(f"expected {expected} features, got {X.shape[1]}")
    return X


@dataclass(frozen=True)
class LinearModel:
    weights: np.ndarray
    bias: float

    def predict(self, X) -> np.ndarray:
        return _check_width(X, self.weights.size) @ self.weights + self.bias

    def to_dict(self) -> dict:
        return {
            "kind": "linear_regression",
            "version": 1,
            "weights": [float(w) for w in self.weights],
            "bias": float(self.bias),
        }

    @classmethod
    def from_dict(cls, doc) -> "LinearModel":
        return cls(np.asarray(doc["weights"], dtype=float), float(doc["bias"]))


@dataclass(frozen=True)
class BayesianRidgeModel:
    weights: np.ndarray
    bias: float
    alpha: float  # noise precision
    lam: float  # weight precision
    iterations_run: int

    def predict(self, X) -> np.ndarray:
        return _check_width(X, self.weights.size) @ self.weights + self.bias

    def to_dict(self) -> dict:
        return {
            "kind": "bayesian_ridge",
            "version": 1,
            "weights": [float(w) for w in self.weights],
            "bias": float(self.bias),
            "alpha": float(self.alpha),
            "lambda": float(self.lam),
            "iterations_run": self.iterations_run,
        }

    @classmethod
    def from_dict(cls, doc) -> "BayesianRidgeModel":
        return cls(
            np.asarray(doc["weights"], dtype=float),
            float(doc["bias"]),
            float(doc["alpha"]),
            float(doc["lambda"]),
            int(doc["iterations_run"]),
        )


@dataclass(frozen=True)
class ExtraTreesModel:
    trees: tuple
    n_trees: int
    k_features: int
    min_samples_leaf: int
    seed: int
    n_inputs: int

    def predict(self, X) -> np.ndarray:
        X = _check_width(X, self.n_inputs)
        preds = np.zeros(X.shape[0])
        for tree in self.trees:
            preds += _tree_predict(tree, X)
        return preds / len(self.trees)

    def to_dict(self) -> dict:
        return {
            "kind": "extra_trees",
            "version": 1,
            "n_trees": self.n_trees,
            "k_features": self.k_features,
            "min_samples_leaf": self.min_samples_leaf,
            "seed": self.seed,
            "n_inputs": self.n_inputs,
            "trees": list(self.trees),
        }

    @classmethod
    def from_dict(cls, doc) -> "ExtraTreesModel":
        return cls(
            tuple(doc["trees"]),
            int(doc["n_trees"]),
            int(doc["k_features"]),
            int(doc["min_samples_leaf"]),
            int(doc["seed"]),
            int(doc["n_inputs"]),
        )


# --- SGD linear regression ----------------------------------------------------


def sgd_objective_and_grad(weights, bias, X, y, l2):
    """Mean squared error plus l2*||w||^2, with its analytic gradient."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    resid = X @ weights + bias - y
    loss = float(np.mean(resid**2) + l2 * np.dot(weights, weights))
    grad_w = 2.0 * X.T @ resid / X.shape[0] + 2.0 * l2 * weights
    grad_b = 2.0 * float(np.mean(resid))
    return loss, grad_w, grad_b


def train_sgd_regressor(X, y, lr=0.01, l2=1e-4, epochs=100, seed=0, batch_size=32):
    """Minimise squared loss + l2 penalty by seeded mini-batch SGD.

    The step size decays as lr/sqrt(epoch+1); rows are reshuffled each epoch.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    n, d = X.shape
    rng = np.random.default_rng(seed)
    w = np.zeros(d)
    b = 0.0
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(epochs):
            step = lr / np.sqrt(epoch + 1.0)
            order = rng.permutation(n)
            for start in range(0, n, batch_size):
                rows = order[start : start + batch_size]
                resid = X[rows] @ w + b - y[rows]
                w -= step * (2.0 * X[rows].T @ resid / rows.size + 2.0 * l2 * w)
                b -= step * 2.0 * float(np.mean(resid))
            if not (np.all(np.isfinite(w)) and np.isfinite(b)):
                raise Diverged(f"non-finite parameters at epoch {epoch}")
    return LinearModel(w, float(b))


# --- Bayesian ridge regression --------------------------------------------------


def train_bayesian_ridge(
    X, y, max_iter=300, tol=1e-3, alpha_init=None, lambda_init=1.0
):
    """Evidence-style re-estimation of noise precision alpha and weight
    precision lambda; returns the posterior-mean weights.

    With max_iter=0 the initial precisions are kept, which reduces to ridge
    regression with penalty lambda/alpha on centered data.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    n, d = X.shape
    x_mean = X.mean(axis=0)
    y_mean = float(y.mean())
    Xc = X - x_mean
    yc = y - y_mean

    var_y = float(yc.var())
    alpha = float(alpha_init) if alpha_init is not None else (
        1.0 / var_y if var_y > 0 else 1.0
    )
    lam = float(lambda_init)
    gram = Xc.T @ Xc
    xty = Xc.T @ yc

    def posterior_mean(alpha, lam):
        A = lam * np.eye(d) + alpha * gram
        try:
            w = np.linalg.solve(A, alpha * xty)
        except np.linalg.LinAlgError as exc:
            raise SingularSystem(str(exc)) from None
        if not np.all(np.isfinite(w)):
            raise SingularSystem("non-finite posterior mean")
        return w, A

    w, A = posterior_mean(alpha, lam)
    iterations = 0
    for _ in range(max_iter):
        gamma = float(d - lam * np.trace(np.linalg.inv(A)))
        lam = gamma / max(float(w @ w), 1e-12)
        resid = yc - Xc @ w
        alpha = max(n - gamma, 1e-12) / max(float(resid @ resid), 1e-12)
        w_new, A = posterior_mean(alpha, lam)
        iterations += 1
        delta = float(np.max(np.abs(w_new - w))) if d else 0.0
        w = w_new
        if delta < tol:
            break
    bias = y_mean - float(w @ x_mean)
    return BayesianRidgeModel(w, bias, alpha, lam, iterations)


# --- Extremely randomized trees -------------------------------------------------


def _split_node(X, y, rows, k_features, min_samples_leaf, rng):
    """Best of k random (feature, uniform threshold) candidates, or None."""
    node_y = y[rows]
    if rows.size < 2 * min_samples_leaf or np.all(node_y == node_y[0]):
        return None
    usable = [f for f in range(X.shape[1]) if X[rows, f].min() < X[rows, f].max()]
    if not usable:
        return None
    k = min(k_features, len(usable))
    chosen = rng.choice(len(usable), size=k, replace=False)
    parent_sse = float(np.sum((node_y - node_y.mean()) ** 2))
    best = None
    for c in sorted(chosen):
        f = usable[c]
        col = X[rows, f]
        thr = float(rng.uniform(col.min(), col.max()))
        left = rows[col < thr]
        right = rows[col >= thr]
        if left.size < min_samples_leaf or right.size < min_samples_leaf:
            continue
        sse = float(np.sum((y[left] - y[left].mean()) ** 2)) + float(
            np.sum((y[right] - y[right].mean()) ** 2)
        )
        reduction = parent_sse - sse
        if best is None or reduction > best[0]:
            best = (reduction, f, thr, left, right)
    return best


def _build_tree(X, y, rows, k_features, min_samples_leaf, rng):
    root: dict = {}
    stack = [(root, rows)]
    while stack:
        node, node_rows = stack.pop()
        best = _split_node(X, y, node_rows, k_features, min_samples_leaf, rng)
        if best is None:
            node["leaf"] = float(y[node_rows].mean())
            continue
        _, f, thr, left, right = best
        node["feature"] = int(f)
        node["threshold"] = thr
        node["left"] = {}
        node["right"] = {}
        stack.append((node["right"], right))
        stack.append((node["left"], left))
    return root


def _tree_predict(tree, X) -> np.ndarray:
    out = np.empty(X.shape[0])
    for i, row in enumerate(X):
        node = tree
        while "leaf" not in node:
            node = node["left"] if row[node["feature"]] < node["threshold"] else node["right"]
        out[i] = node["leaf"]
    return out


def train_extra_trees(X, y, n_trees=100, k_features=None, min_samples_leaf=2, seed=0):
    """Ensemble of trees whose splits pick the best of k random
    (feature, uniform-random threshold) candidates by variance reduction;
    prediction is the mean over trees."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    n, d = X.shape
    if n < 2:
        raise SchemaMismatch("extra trees need at least 2 rows")
    if k_features is None:
        k_features = int(np.ceil(np.sqrt(d)))
    seeds = np.random.SeedSequence(seed).spawn(n_trees)
    rows = np.arange(n)
    trees = tuple(
        _build_tree(X, y, rows, k_features, min_samples_leaf, np.random.default_rng(s))
        for s in seeds
    )
    return ExtraTreesModel(trees, n_trees, k_features, min_samples_leaf, seed, d)


def predict(model, v) -> float:
    """Score a single feature vector with any regression model."""
    values = getattr(v, "values", v)
    return float(model.predict(np.atleast_2d(values))[0])
