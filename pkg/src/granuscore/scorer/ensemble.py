"""Gradient-boosted regression trees: training config, fitting, prediction.

Training is delegated to LightGBM. The fitted booster is immediately
converted to a :class:`TreeEnsemble`, a plain-array representation that is
what gets archived and what predicts at scoring time, so a saved model does
not depend on the LightGBM binary format.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, fields

import numpy as np

from ..errors import ConfigurationError, DataError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RegressorConfig:
    """Squared-error GBDT settings. Defaults are the tuned production values."""

    objective: str = "regression"
    metric: str = "rmse"
    boosting: str = "gbdt"
    max_iterations: int = 10_000
    early_stopping_rounds: int = 200
    learning_rate: float = 0.0257596
    num_leaves: int = 138
    max_depth: int = -1  # unlimited
    min_data_in_leaf: int = 57
    feature_fraction: float = 0.751449
    bagging_fraction: float = 0.638041
    bagging_freq: int = 7
    drop_rate: float = 0.1  # only read when boosting == "dart"
    max_bin: int = 255
    seed: int = 0
    num_threads: int = 0

    def __post_init__(self):
        if self.objective != "regression" or self.metric != "rmse":
            raise ConfigurationError("only squared-error regression evaluated by RMSE is supported")
        if self.boosting not in ("gbdt", "dart"):
            raise ConfigurationError(f"boosting must be 'gbdt' or 'dart', got {self.boosting!r}")
        if self.max_iterations < 1:
            raise ConfigurationError("max_iterations must be >= 1")
        if self.early_stopping_rounds < 1:
            raise ConfigurationError("early_stopping_rounds must be >= 1")
        if not self.learning_rate > 0:
            raise ConfigurationError("learning_rate must be > 0")
        for name in ("feature_fraction", "bagging_fraction"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ConfigurationError(f"{name} must lie in (0, 1], got {v}")
        if not 0 <= self.drop_rate <= 1:
            raise ConfigurationError("drop_rate must lie in [0, 1]")
        if self.num_leaves < 2 or self.min_data_in_leaf < 1 or self.max_bin < 2:
            raise ConfigurationError("num_leaves >= 2, min_data_in_leaf >= 1 and max_bin >= 2 are required")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RegressorConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown regressor settings: {sorted(unknown)}")
        return cls(**d)

    def lightgbm_params(self) -> dict:
        params = {
            "objective": "regression",
            "metric": "rmse",
            "boosting": self.boosting,
            "learning_rate": self.learning_rate,
            "num_leaves": self.num_leaves,
            "max_depth": self.max_depth,
            "min_data_in_leaf": self.min_data_in_leaf,
            "feature_fraction": self.feature_fraction,
            "bagging_fraction": self.bagging_fraction,
            "bagging_freq": self.bagging_freq,
            "max_bin": self.max_bin,
            "seed": self.seed,
            "deterministic": True,
            "force_row_wise": True,
            "num_threads": self.num_threads,
            "verbosity": -1,
        }
        if self.boosting == "dart":
            params["drop_rate"] = self.drop_rate
        return params


# ---------------------------------------------------------------------- trees


class TreeEnsemble:
    """Additive ensemble of binary regression trees stored as flat arrays.

    All trees share one node table. Internal nodes send ``x[feature] <=
    threshold`` to ``left`` and everything else to ``right``. Leaves have
    ``feature == -1`` and point to themselves, so walking a fixed number of
    steps (the maximum depth) lands every row on its leaf. Leaf values
    already include the learning-rate shrinkage.
    """

    def __init__(self, feature, threshold, left, right, value, roots, n_features: int):
        self.feature = np.asarray(feature, dtype=np.int32)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int32)
        self.right = np.asarray(right, dtype=np.int32)
        self.value = np.asarray(value, dtype=np.float64)
        self.roots = np.asarray(roots, dtype=np.int32)
        self.n_features = int(n_features)
        n = len(self.feature)
        if not (len(self.threshold) == len(self.left) == len(self.right) == len(self.value) == n):
            raise DataError("tree arrays must all have one entry per node")
        if n and (self.feature.max() >= self.n_features):
            raise DataError("a split refers to a feature index beyond the feature vector")
        internal = self.feature >= 0
        for child in (self.left, self.right):
            if ((child < 0) | (child >= n)).any():
                raise DataError("tree child index out of range")
        if (self.left[~internal] != np.flatnonzero(~internal)).any():
            raise DataError("leaves must point to themselves")
        for a in (self.feature, self.threshold, self.left, self.right, self.value, self.roots):
            a.setflags(write=False)
        self.depth = self._max_depth()

    def __len__(self):
        return len(self.roots)

    @property
    def n_trees(self) -> int:
        return len(self.roots)

    def _max_depth(self) -> int:
        depth = np.zeros(len(self.feature), dtype=np.int64)
        best = 0
        # nodes are stored parent-before-child, so one forward pass suffices
        for i in range(len(self.feature)):
            if self.feature[i] >= 0:
                d = depth[i] + 1
                depth[self.left[i]] = d
                depth[self.right[i]] = d
                best = max(best, d)
        return int(best)

    def predict(self, X: np.ndarray, chunk: int = 512) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_features:
            raise DataError(f"expected {self.n_features} features, got {X.shape[1]}")
        bad = ~np.isfinite(X).all(axis=1)
        if bad.any():
            raise DataError(f"feature row {int(np.flatnonzero(bad)[0])} contains a non-finite value")
        out = np.zeros(X.shape[0], dtype=np.float64)
        if not len(self.roots):
            return out
        for s in range(0, X.shape[0], chunk):
            xs = X[s : s + chunk]
            rows = np.arange(xs.shape[0])[:, None]
            node = np.broadcast_to(self.roots, (xs.shape[0], len(self.roots))).copy()
            for _ in range(self.depth):
                f = self.feature[node]
                x = xs[rows, np.maximum(f, 0)]
                go_left = x <= self.threshold[node]
                node = np.where(go_left, self.left[node], self.right[node])
            # accumulate tree by tree so the result does not depend on chunking
            vals = self.value[node]
            acc = np.zeros(xs.shape[0])
            for t in range(vals.shape[1]):
                acc += vals[:, t]
            out[s : s + chunk] = acc
        return out

    # ----------------------------------------------------------- conversion

    @classmethod
    def from_lightgbm_dump(cls, dump: dict, num_iteration: int | None = None) -> "TreeEnsemble":
        """Convert ``Booster.dump_model()`` output to flat arrays."""
        trees = dump["tree_info"]
        if num_iteration is not None and num_iteration > 0:
            trees = trees[:num_iteration]
        feature, threshold, left, right, value, roots = [], [], [], [], [], []

        for tree in trees:
            roots.append(len(feature))
            stack = [(tree["tree_structure"], None, None)]
            while stack:
                node, parent, side = stack.pop()
                me = len(feature)
                if parent is not None:
                    (left if side == "l" else right)[parent] = me
                if "split_index" in node:
                    if node.get("decision_type", "<=") != "<=":
                        raise DataError("only numerical '<=' splits are supported")
                    feature.append(int(node["split_feature"]))
                    threshold.append(float(node["threshold"]))
                    left.append(-1)
                    right.append(-1)
                    value.append(0.0)
                    # push right first so the left subtree is laid out first
                    stack.append((node["right_child"], me, "r"))
                    stack.append((node["left_child"], me, "l"))
                else:
                    feature.append(-1)
                    threshold.append(0.0)
                    left.append(me)
                    right.append(me)
                    value.append(float(node["leaf_value"]))
        n_features = int(dump.get("max_feature_idx", -1)) + 1
        return cls(feature, threshold, left, right, value, roots, n_features)

    def to_dict(self) -> dict:
        return {
            "n_features": self.n_features,
            "roots": self.roots.tolist(),
            "feature": self.feature.tolist(),
            "threshold": [float(x) for x in self.threshold],
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": [float(x) for x in self.value],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TreeEnsemble":
        return cls(d["feature"], d["threshold"], d["left"], d["right"], d["value"], d["roots"], d["n_features"])

    @classmethod
    def stump(cls, feature: int, threshold: float, left_value: float, right_value: float,
              n_features: int) -> "TreeEnsemble":
        """A single one-split tree."""
        return cls([feature, -1, -1], [threshold, 0, 0], [1, 1, 2], [2, 1, 2],
                   [0.0, left_value, right_value], [0], n_features)


# --------------------------------------------------------------------- training


@dataclass
class TrainingResult:
    ensemble: TreeEnsemble
    best_iteration: int
    dev_rmse: float
    history: list[float]


def _check_xy(X, y, name):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2:
        raise DataError(f"{name} features must be a 2-D matrix")
    if X.shape[0] != y.shape[0]:
        raise DataError(f"{name}: {X.shape[0]} feature rows but {y.shape[0]} targets")
    bad = ~np.isfinite(X).all(axis=1) | ~np.isfinite(y)
    if bad.any():
        raise DataError(f"{name} row {int(np.flatnonzero(bad)[0])} has a non-finite feature or target")
    out = (y < 1) | (y > 4)
    if out.any():
        i = int(np.flatnonzero(out)[0])
        raise DataError(f"{name} row {i} has target {y[i]} outside [1, 4]")
    return X, y


def train_regressor(train, dev, config: RegressorConfig | None = None) -> TrainingResult:
    """Fit the ensemble on ``train`` with early stopping on ``dev`` RMSE.

    ``train`` and ``dev`` are ``(features, targets)`` pairs. The returned
    ensemble is truncated at the best dev iteration.
    """
    import lightgbm as lgb

    config = config or RegressorConfig()
    X, y = _check_xy(*train, "train")
    if X.shape[0] == 0:
        raise ConfigurationError("the training set is empty")
    if dev is None or len(dev[1]) == 0:
        raise ConfigurationError("early stopping needs a non-empty dev set")
    Xd, yd = _check_xy(*dev, "dev")
    if Xd.shape[1] != X.shape[1]:
        raise DataError(f"train has {X.shape[1]} features but dev has {Xd.shape[1]}")

    params = config.lightgbm_params()
    dtrain = lgb.Dataset(X, y, params={"max_bin": config.max_bin}, free_raw_data=True)
    ddev = lgb.Dataset(Xd, yd, reference=dtrain)
    history: dict = {}
    callbacks = [lgb.record_evaluation(history)]
    if config.boosting == "gbdt":
        callbacks.append(lgb.early_stopping(config.early_stopping_rounds, verbose=False))
    booster = lgb.train(
        params,
        dtrain,
        num_boost_round=config.max_iterations,
        valid_sets=[ddev],
        valid_names=["dev"],
        callbacks=callbacks,
    )
    rmse = list(history.get("dev", {}).get("rmse", []))
    best = booster.best_iteration if booster.best_iteration > 0 else booster.current_iteration()
    ensemble = TreeEnsemble.from_lightgbm_dump(booster.dump_model(num_iteration=best), best)
    if ensemble.n_features != X.shape[1]:
        # LightGBM reports the highest feature index it saw, which can be short
        # when trailing columns were never usable for a split.
        ensemble = TreeEnsemble(ensemble.feature, ensemble.threshold, ensemble.left, ensemble.right,
                                ensemble.value, ensemble.roots, X.shape[1])
    dev_rmse = float(np.sqrt(np.mean((ensemble.predict(Xd) - yd) ** 2)))
    logger.info("trained %d trees, dev RMSE %.5f", ensemble.n_trees, dev_rmse)
    return TrainingResult(ensemble, int(best), dev_rmse, rmse)
