"""Gradient-boosted regression trees used as the anchor mean model.

Squared-error boosting with exact greedy splits on shallow trees. Stage
count is chosen by RMSE on a held-out fold; the final model is refit on
the larger fold at the selected stage count.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class GbdtConfig:
    max_depth: int = 3
    shrinkage: float = 0.1
    max_stages: int = 500
    min_samples_leaf: int = 5

    def validate(self) -> None:
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if not 0.0 < self.shrinkage <= 1.0:
            raise ValueError("shrinkage must be in (0,1]")
        if self.max_stages < 1:
            raise ValueError("max_stages must be >= 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")


@dataclass
class TreeNode:
    """Either an internal node (feature/threshold set) or a leaf (value set)."""

    feature: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    value: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.left is None


def _best_split(x: np.ndarray, residual: np.ndarray, min_leaf: int):
    """Exact greedy split minimizing summed squared error; None if no valid split."""
    n, d = x.shape
    if n < 2 * min_leaf:
        return None
    total_sum = residual.sum()
    total_sq = (residual**2).sum()
    base = total_sq - total_sum**2 / n
    best = None  # (gain, feature, threshold)
    for j in range(d):
        order = np.argsort(x[:, j], kind="stable")
        xs = x[order, j]
        rs = residual[order]
        csum = np.cumsum(rs)
        # candidate split after position i (left = first i+1 rows)
        counts = np.arange(1, n)
        left_sum = csum[:-1]
        right_sum = total_sum - left_sum
        with np.errstate(invalid="ignore"):
            sse = total_sq - left_sum**2 / counts - right_sum**2 / (n - counts)
        valid = (
            (counts >= min_leaf)
            & (counts <= n - min_leaf)
            & (xs[:-1] < xs[1:])  # distinct adjacent values only
        )
        if not valid.any():
            continue
        sse = np.where(valid, sse, np.inf)
        i = int(np.argmin(sse))
        gain = base - sse[i]
        if gain > 1e-12 and (best is None or gain > best[0]):
            best = (float(gain), j, float(0.5 * (xs[i] + xs[i + 1])))
    return best


def _grow_tree(x: np.ndarray, residual: np.ndarray, depth: int, cfg: GbdtConfig) -> TreeNode:
    if depth >= cfg.max_depth:
        return TreeNode(value=float(residual.mean()))
    split = _best_split(x, residual, cfg.min_samples_leaf)
    if split is None:
        return TreeNode(value=float(residual.mean()))
    _, j, thr = split
    mask = x[:, j] <= thr
    return TreeNode(
        feature=j,
        threshold=thr,
        left=_grow_tree(x[mask], residual[mask], depth + 1, cfg),
        right=_grow_tree(x[~mask], residual[~mask], depth + 1, cfg),
    )


def _tree_predict(node: TreeNode, x: np.ndarray) -> np.ndarray:
    out = np.empty(x.shape[0])
    stack = [(node, np.arange(x.shape[0]))]
    while stack:
        nd, idx = stack.pop()
        if nd.is_leaf:
            out[idx] = nd.value
            continue
        mask = x[idx, nd.feature] <= nd.threshold
        stack.append((nd.left, idx[mask]))
        stack.append((nd.right, idx[~mask]))
    return out


def _tree_to_obj(node: TreeNode) -> dict:
    if node.is_leaf:
        return {"value": node.value}
    return {
        "feature": node.feature,
        "threshold": node.threshold,
        "left": _tree_to_obj(node.left),
        "right": _tree_to_obj(node.right),
    }


def _tree_from_obj(obj: dict) -> TreeNode:
    if "value" in obj:
        return TreeNode(value=obj["value"])
    return TreeNode(
        feature=obj["feature"],
        threshold=obj["threshold"],
        left=_tree_from_obj(obj["left"]),
        right=_tree_from_obj(obj["right"]),
    )


@dataclass
class GbdtModel:
    config: GbdtConfig
    base_value: float
    trees: list = field(default_factory=list)

    @property
    def n_stages(self) -> int:
        return len(self.trees)

    def predict(self, x: np.ndarray, n_stages: int | None = None) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        n_stages = self.n_stages if n_stages is None else n_stages
        pred = np.full(x.shape[0], self.base_value)
        for tree in self.trees[:n_stages]:
            pred += self.config.shrinkage * _tree_predict(tree, x)
        return pred

    def staged_predict(self, x: np.ndarray) -> np.ndarray:
        """(max_stages+1, N) predictions at every prefix of the ensemble."""
        x = np.asarray(x, dtype=np.float64)
        out = np.empty((self.n_stages + 1, x.shape[0]))
        pred = np.full(x.shape[0], self.base_value)
        out[0] = pred
        for s, tree in enumerate(self.trees):
            pred = pred + self.config.shrinkage * _tree_predict(tree, x)
            out[s + 1] = pred
        return out

    def truncated(self, n_stages: int) -> "GbdtModel":
        return GbdtModel(self.config, self.base_value, self.trees[:n_stages])

    def to_json(self) -> str:
        return json.dumps(
            {
                "config": vars(self.config),
                "base_value": self.base_value,
                "trees": [_tree_to_obj(t) for t in self.trees],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "GbdtModel":
        obj = json.loads(text)
        return cls(
            config=GbdtConfig(**obj["config"]),
            base_value=obj["base_value"],
            trees=[_tree_from_obj(t) for t in obj["trees"]],
        )


def fit_gbdt(x: np.ndarray, y: np.ndarray, config: GbdtConfig | None = None) -> GbdtModel:
    """Boost squared-error trees: base = mean(y), each stage fits residuals."""
    config = config or GbdtConfig()
    config.validate()
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    model = GbdtModel(config, base_value=float(y.mean()))
    pred = np.full(y.shape[0], model.base_value)
    for _ in range(config.max_stages):
        residual = y - pred
        tree = _grow_tree(x, residual, 0, config)
        model.trees.append(tree)
        pred = pred + config.shrinkage * _tree_predict(tree, x)
    return model


def select_stages(model: GbdtModel, x_va: np.ndarray, y_va: np.ndarray) -> int:
    """Stage count (>= 1) minimizing held-out RMSE; ties go to fewer stages."""
    staged = model.staged_predict(x_va)
    rmse = np.sqrt(((staged - y_va[None, :]) ** 2).mean(axis=1))
    best = int(np.argmin(rmse[1:])) + 1  # never select the 0-stage constant
    return best


def fit_anchor(
    x_tr: np.ndarray,
    y_tr: np.ndarray,
    x_va: np.ndarray,
    y_va: np.ndarray,
    x_tv: np.ndarray,
    y_tv: np.ndarray,
    config: GbdtConfig | None = None,
) -> tuple[GbdtModel, int]:
    """Two-step anchor fit: select stages on (TR -> VA), refit on TV.

    Returns the refit model (truncated to the selected stage count) and
    the selected count.
    """
    config = config or GbdtConfig()
    sub = fit_gbdt(x_tr, y_tr, config)
    t_star = select_stages(sub, x_va, y_va)
    refit_cfg = GbdtConfig(
        max_depth=config.max_depth,
        shrinkage=config.shrinkage,
        max_stages=t_star,
        min_samples_leaf=config.min_samples_leaf,
    )
    final = fit_gbdt(x_tv, y_tv, refit_cfg)
    return final, t_star
