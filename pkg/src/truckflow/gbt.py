"""Second-order gradient-boosted regression trees with a squared-error
objective on the log-trip target.

Gradients are ``g = prediction - target`` and hessians are identically 1,
so ``min_child_weight`` acts as a minimum child row count and node covers
are row counts.  Split search is exact greedy over sorted distinct values;
candidate thresholds are midpoints between consecutive distinct values,
ties broken by lowest feature index then lowest threshold.  Leaf values
are stored with the learning rate already applied.  Node covers are
recomputed on the full training set after each tree so explanation-time
expectations reflect the whole training distribution.

Determinism: row subsampling (per round, without replacement) and column
sampling (per tree) use the counter-mode generator in :mod:`truckflow.rng`,
sorting is stable, and ties resolve by fixed scan order, so a fixed seed
reproduces the model byte-for-byte.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from . import rng
from .errors import DataDomainError, ModelFormatError
from .features import FeatureMatrix


@dataclass(frozen=True)
class Hyperparams:
    max_depth: int = 10
    min_child_weight: float = 6.0
    eta: float = 0.01
    subsample: float = 0.8
    colsample_bytree: float = 1.0
    rounds: int = 500
    reg_lambda: float = 1.0
    gamma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.eta <= 1.0:
            raise DataDomainError(f"eta must be in (0, 1], got {self.eta}")
        if not 0.0 < self.subsample <= 1.0:
            raise DataDomainError(f"subsample must be in (0, 1], got {self.subsample}")
        if not 0.0 < self.colsample_bytree <= 1.0:
            raise DataDomainError(f"colsample_bytree must be in (0, 1], got {self.colsample_bytree}")
        if self.max_depth < 1:
            raise DataDomainError(f"max_depth must be >= 1, got {self.max_depth}")
        if self.rounds < 1:
            raise DataDomainError(f"rounds must be >= 1, got {self.rounds}")
        if self.min_child_weight < 0 or self.reg_lambda < 0 or self.gamma < 0:
            raise DataDomainError("min_child_weight, lambda and gamma must be non-negative")


class Tree:
    """One regression tree as parallel node arrays.

    ``feature[i] < 0`` marks a leaf; internal nodes carry the split
    feature, threshold and child indices.  ``cover[i]`` is the number of
    full-training rows routed through node i.
    """

    __slots__ = ("feature", "threshold", "left", "right", "value", "cover")

    def __init__(self, feature, threshold, left, right, value, cover):
        self.feature = np.asarray(feature, dtype=np.int32)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int32)
        self.right = np.asarray(right, dtype=np.int32)
        self.value = np.asarray(value, dtype=np.float64)
        self.cover = np.asarray(cover, dtype=np.float64)

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    def is_leaf(self, node: int) -> bool:
        return self.feature[node] < 0

    def route(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row (left iff value < threshold)."""
        node = np.zeros(X.shape[0], dtype=np.int32)
        pending = self.feature[node] >= 0
        while pending.any():
            idx = np.nonzero(pending)[0]
            cur = node[idx]
            go_left = X[idx, self.feature[cur]] < self.threshold[cur]
            node[idx] = np.where(go_left, self.left[cur], self.right[cur])
            pending[idx] = self.feature[node[idx]] >= 0
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.route(X)]


@dataclass(frozen=True)
class GBTModel:
    base_score: float
    trees: tuple[Tree, ...]
    params: Hyperparams
    feature_names: tuple[str, ...]

    def predict_row(self, row: Sequence[float]) -> float:
        return predict(self, row)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return predict_batch(self, X)


class SplitDecision(NamedTuple):
    feature: int
    threshold: float
    gain: float


def leaf_weight(g_sum: float, h_sum: float, reg_lambda: float) -> float:
    """Optimal leaf output -G/(H + lambda)."""
    return -g_sum / (h_sum + reg_lambda) + 0.0


def split_gain(
    g_left: float,
    h_left: float,
    g_right: float,
    h_right: float,
    reg_lambda: float,
    gamma: float,
) -> float:
    """Objective reduction of a candidate split (already net of gamma)."""
    g_total = g_left + g_right
    h_total = h_left + h_right
    return 0.5 * (
        g_left * g_left / (h_left + reg_lambda)
        + g_right * g_right / (h_right + reg_lambda)
        - g_total * g_total / (h_total + reg_lambda)
    ) - gamma


def best_split(
    X: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    rows: np.ndarray,
    features: np.ndarray,
    params: Hyperparams,
) -> SplitDecision | None:
    """Exact greedy search over the node's rows and candidate features.

    Scans prefix gradient/hessian sums along each feature's sorted values;
    admissible candidates need both children's hessian sums at or above
    ``min_child_weight`` and positive gain.  Returns None when no
    candidate qualifies.
    """
    m = rows.size
    if m < 2:
        return None
    sub = X[rows][:, features]  # (m, F)
    order = np.argsort(sub, axis=0, kind="stable")
    xs = np.take_along_axis(sub, order, axis=0)
    gs = np.take_along_axis(np.broadcast_to(g[rows][:, None], sub.shape), order, axis=0)
    hs = np.take_along_axis(np.broadcast_to(h[rows][:, None], sub.shape), order, axis=0)
    g_total = float(g[rows].sum())
    h_total = float(h[rows].sum())
    gl = np.cumsum(gs, axis=0)[:-1]
    hl = np.cumsum(hs, axis=0)[:-1]
    gr = g_total - gl
    hr = h_total - hl
    admissible = (
        (xs[1:] != xs[:-1])
        & (hl >= params.min_child_weight)
        & (hr >= params.min_child_weight)
    )
    parent_score = g_total * g_total / (h_total + params.reg_lambda)
    gains = (
        0.5 * (gl * gl / (hl + params.reg_lambda) + gr * gr / (hr + params.reg_lambda) - parent_score)
        - params.gamma
    )
    gains[~admissible] = -np.inf
    # Column-major scan: argmax ties resolve to the lowest feature index,
    # then the lowest threshold (positions ascend with value).
    flat = gains.T.reshape(-1)
    best = int(np.argmax(flat))
    best_gain = float(flat[best])
    if not best_gain > 0.0:
        return None
    f_local, pos = divmod(best, m - 1)
    lo = float(xs[pos, f_local])
    hi = float(xs[pos + 1, f_local])
    threshold = (lo + hi) / 2.0
    if threshold <= lo:  # adjacent floats: fall back to the upper value
        threshold = hi
    return SplitDecision(int(features[f_local]), threshold, best_gain)


def _grow_tree(
    X: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    rows: np.ndarray,
    features: np.ndarray,
    params: Hyperparams,
) -> Tree:
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node() -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    stack = [(new_node(), rows, 0)]
    while stack:
        node, idx, depth = stack.pop()
        decision = None
        if depth < params.max_depth and idx.size >= 2:
            decision = best_split(X, g, h, idx, features, params)
        if decision is None:
            g_sum = float(g[idx].sum())
            h_sum = float(h[idx].sum())
            value[node] = leaf_weight(g_sum, h_sum, params.reg_lambda) * params.eta + 0.0
            continue
        feature[node] = decision.feature
        threshold[node] = decision.threshold
        mask = X[idx, decision.feature] < decision.threshold
        left[node] = new_node()
        right[node] = new_node()
        stack.append((right[node], idx[~mask], depth + 1))
        stack.append((left[node], idx[mask], depth + 1))
    return Tree(feature, threshold, left, right, value, np.zeros(len(feature)))


def _finalize_covers(tree: Tree, X: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Set per-node covers from the full training set; returns each row's
    leaf index so the caller can update predictions in the same pass."""
    cover = np.zeros(tree.n_nodes, dtype=np.float64)
    leaf = np.empty(X.shape[0], dtype=np.int32)
    stack = [(0, np.arange(X.shape[0]))]
    while stack:
        node, idx = stack.pop()
        cover[node] = h[idx].sum()
        if tree.feature[node] < 0:
            leaf[idx] = node
            continue
        mask = X[idx, tree.feature[node]] < tree.threshold[node]
        stack.append((tree.left[node], idx[mask]))
        stack.append((tree.right[node], idx[~mask]))
    tree.cover = cover
    return leaf


def train(
    matrix: FeatureMatrix,
    params: Hyperparams,
    validation: FeatureMatrix | None = None,
    patience: int = 50,
) -> GBTModel:
    """Fit ``params.rounds`` trees to the matrix's log-trip target.

    When ``validation`` is given, training stops once its RMSE has not
    improved for ``patience`` rounds and the model is truncated to the
    best round.
    """
    X, y = matrix.rows, matrix.target
    n, n_features = X.shape
    if n < 2:
        raise DataDomainError(f"training needs at least 2 rows, got {n}")
    if not np.isfinite(X).all() or not np.isfinite(y).all():
        raise DataDomainError("training matrix contains NaN or infinite values")
    base = float(np.mean(y))
    pred = np.full(n, base, dtype=np.float64)
    h = np.ones(n, dtype=np.float64)
    row_count = n if params.subsample >= 1.0 else max(1, int(params.subsample * n))
    col_count = n_features if params.colsample_bytree >= 1.0 else max(1, int(params.colsample_bytree * n_features))
    all_rows = np.arange(n)
    all_cols = np.arange(n_features)

    trees: list[Tree] = []
    val_pred = None
    best_rmse = math.inf
    best_round = 0
    if validation is not None:
        val_pred = np.full(validation.n, base, dtype=np.float64)

    for t in range(params.rounds):
        g = pred - y
        rows = all_rows if row_count == n else rng.sample_without_replacement(params.seed, 2 * t, n, row_count)
        cols = all_cols if col_count == n_features else rng.sample_without_replacement(params.seed, 2 * t + 1, n_features, col_count)
        tree = _grow_tree(X, g, h, rows, cols, params)
        leaf = _finalize_covers(tree, X, h)
        pred += tree.value[leaf]
        trees.append(tree)
        if validation is not None:
            val_pred += tree.predict(validation.rows)
            rmse = float(np.sqrt(np.mean((val_pred - validation.target) ** 2)))
            if rmse < best_rmse:
                best_rmse = rmse
                best_round = t + 1
            elif t + 1 - best_round >= patience:
                trees = trees[:best_round]
                break
    return GBTModel(base, tuple(trees), params, matrix.feature_names)


def predict(model: GBTModel, row: Sequence[float]) -> float:
    arr = np.asarray(row, dtype=np.float64)
    if arr.shape != (len(model.feature_names),):
        raise DataDomainError(f"expected {len(model.feature_names)} features, got shape {arr.shape}")
    return float(predict_batch(model, arr[None, :])[0])


def predict_batch(model: GBTModel, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != len(model.feature_names):
        raise DataDomainError(f"expected (n, {len(model.feature_names)}) matrix, got shape {X.shape}")
    if np.isnan(X).any():
        raise DataDomainError("prediction input contains NaN")
    out = np.full(X.shape[0], model.base_score, dtype=np.float64)
    for tree in model.trees:
        out += tree.predict(X)
    return out


def staged_predict_batch(model: GBTModel, X: np.ndarray) -> Iterator[np.ndarray]:
    """Predictions after each boosting round (for training diagnostics)."""
    X = np.asarray(X, dtype=np.float64)
    out = np.full(X.shape[0], model.base_score, dtype=np.float64)
    for tree in model.trees:
        out = out + tree.predict(X)
        yield out


_FORMAT_VERSION = 1


def _fmt_num(x: float | int) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if not math.isfinite(x):
        raise ModelFormatError(f"cannot serialize non-finite number {x}")
    return format(float(x), ".17g")


def _params_dict(params: Hyperparams) -> dict:
    return {
        "max_depth": params.max_depth,
        "min_child_weight": params.min_child_weight,
        "eta": params.eta,
        "subsample": params.subsample,
        "colsample_bytree": params.colsample_bytree,
        "rounds": params.rounds,
        "lambda": params.reg_lambda,
        "gamma": params.gamma,
        "seed": params.seed,
    }


def serialize(model: GBTModel, path: str | Path) -> None:
    """Write the model as JSON with numbers at 17 significant digits."""
    parts = ['{"format_version":%d,"base_score":%s,' % (_FORMAT_VERSION, _fmt_num(model.base_score))]
    params = _params_dict(model.params)
    parts.append('"params":{')
    parts.append(",".join(f"{json.dumps(k)}:{_fmt_num(v)}" for k, v in params.items()))
    parts.append('},"feature_names":[')
    parts.append(",".join(json.dumps(name) for name in model.feature_names))
    parts.append('],"trees":[\n')
    tree_texts = []
    for tree in model.trees:
        nodes = []
        for i in range(tree.n_nodes):
            if tree.feature[i] < 0:
                nodes.append('{"leaf":%s,"cover":%s}' % (_fmt_num(float(tree.value[i])), _fmt_num(float(tree.cover[i]))))
            else:
                nodes.append(
                    '{"feature":%d,"threshold":%s,"left":%d,"right":%d,"cover":%s}'
                    % (
                        int(tree.feature[i]),
                        _fmt_num(float(tree.threshold[i])),
                        int(tree.left[i]),
                        int(tree.right[i]),
                        _fmt_num(float(tree.cover[i])),
                    )
                )
        tree_texts.append('{"nodes":[' + ",".join(nodes) + "]}")
    parts.append(",\n".join(tree_texts))
    parts.append("\n]}\n")
    Path(path).write_text("".join(parts), encoding="utf-8")


def _node_error(tree_index: int, node_index: int, message: str) -> ModelFormatError:
    return ModelFormatError(f"trees[{tree_index}].nodes[{node_index}]: {message}")


def deserialize(path: str | Path) -> GBTModel:
    """Read a model file, validating structure and node integrity."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ModelFormatError(f"{path}: invalid JSON at line {e.lineno} column {e.colno}: {e.msg}")
    if not isinstance(doc, dict):
        raise ModelFormatError(f"{path}: expected a JSON object at top level")
    if doc.get("format_version") != _FORMAT_VERSION:
        raise ModelFormatError(f"{path}: unsupported format_version {doc.get('format_version')!r}")
    for key in ("base_score", "params", "feature_names", "trees"):
        if key not in doc:
            raise ModelFormatError(f"{path}: missing field {key!r}")
    raw_params = doc["params"]
    try:
        params = Hyperparams(
            max_depth=int(raw_params["max_depth"]),
            min_child_weight=float(raw_params["min_child_weight"]),
            eta=float(raw_params["eta"]),
            subsample=float(raw_params["subsample"]),
            colsample_bytree=float(raw_params["colsample_bytree"]),
            rounds=int(raw_params["rounds"]),
            reg_lambda=float(raw_params["lambda"]),
            gamma=float(raw_params["gamma"]),
            seed=int(raw_params["seed"]),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ModelFormatError(f"{path}: invalid params block: {e}")
    feature_names = tuple(doc["feature_names"])
    if not feature_names or not all(isinstance(f, str) for f in feature_names):
        raise ModelFormatError(f"{path}: feature_names must be a non-empty list of strings")
    trees = []
    for ti, raw_tree in enumerate(doc["trees"]):
        if not isinstance(raw_tree, dict) or "nodes" not in raw_tree:
            raise ModelFormatError(f"trees[{ti}]: expected an object with a 'nodes' list")
        raw_nodes = raw_tree["nodes"]
        if not raw_nodes:
            raise ModelFormatError(f"trees[{ti}]: empty node list")
        count = len(raw_nodes)
        feature = np.full(count, -1, dtype=np.int32)
        threshold = np.zeros(count, dtype=np.float64)
        left = np.full(count, -1, dtype=np.int32)
        right = np.full(count, -1, dtype=np.int32)
        value = np.zeros(count, dtype=np.float64)
        cover = np.zeros(count, dtype=np.float64)
        for ni, node in enumerate(raw_nodes):
            if not isinstance(node, dict) or "cover" not in node:
                raise _node_error(ti, ni, "expected an object with a 'cover' field")
            cover[ni] = float(node["cover"])
            if cover[ni] < 0:
                raise _node_error(ti, ni, f"negative cover {node['cover']}")
            if "leaf" in node:
                value[ni] = float(node["leaf"])
                if not math.isfinite(value[ni]):
                    raise _node_error(ti, ni, "non-finite leaf value")
            else:
                for key in ("feature", "threshold", "left", "right"):
                    if key not in node:
                        raise _node_error(ti, ni, f"internal node missing {key!r}")
                feature[ni] = int(node["feature"])
                threshold[ni] = float(node["threshold"])
                left[ni] = int(node["left"])
                right[ni] = int(node["right"])
                if not 0 <= feature[ni] < len(feature_names):
                    raise _node_error(ti, ni, f"feature index {feature[ni]} out of range")
                for child in (left[ni], right[ni]):
                    if not 0 <= child < count:
                        raise _node_error(ti, ni, f"child index {child} out of range")
        trees.append(Tree(feature, threshold, left, right, value, cover))
    return GBTModel(float(doc["base_score"]), tuple(trees), params, feature_names)


def with_params(params: Hyperparams, **overrides) -> Hyperparams:
    """Convenience for CLI/config overrides."""
    return replace(params, **overrides)
