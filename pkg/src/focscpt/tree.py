"""Decision-tree CPT baseline grown by greedy variable splitting."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .cpt import CptColumn, _cll_terms, _side_cll, smoothed_p1
from .data import FamilyView
from .validation import as_view, check_binary

# zero-gain splits are kept (parity needs them); this absorbs rounding noise
GAIN_TOL = 1e-12


@dataclass(frozen=True)
class Leaf:
    column: CptColumn


@dataclass(frozen=True)
class Split:
    var: int  # position within the family's parents
    lo: "Node"
    hi: "Node"


Node = Union[Leaf, Split]


@dataclass(frozen=True)
class TreeCpt:
    root: Node
    max_depth: int
    child: str = "X"
    parents: tuple[str, ...] = ()

    def to_json(self) -> dict:
        return {"child": self.child, "parents": list(self.parents),
                "max_depth": self.max_depth, "root": _node_json(self.root)}

    @classmethod
    def from_json(cls, obj: dict) -> "TreeCpt":
        return cls(_node_from_json(obj["root"]), int(obj.get("max_depth", -1)),
                   obj.get("child", "X"), tuple(obj.get("parents", ())))


def _node_json(node: Node) -> dict:
    if isinstance(node, Leaf):
        return {"p1": node.column.p1}
    return {"var": node.var, "lo": _node_json(node.lo), "hi": _node_json(node.hi)}


def _node_from_json(obj: dict) -> Node:
    if "p1" in obj:
        return Leaf(CptColumn(float(obj["p1"])))
    return Split(int(obj["var"]), _node_from_json(obj["lo"]), _node_from_json(obj["hi"]))


def learn_tree(view: FamilyView, max_depth: int) -> TreeCpt:
    """Grow a tree by the split with the largest smoothed training-CLL gain.

    A node becomes a leaf at the depth bound, when its records agree on the
    child, or when every available split lowers the training CLL.
    """
    if max_depth < 0:
        raise ValueError("max_depth must be non-negative")
    X = view.X
    y = view.y.astype(float)
    w = view.w.astype(float)

    def grow(rows, depth, used):
        n = w[rows].sum()
        n1 = (w[rows] * y[rows]).sum()
        leaf = Leaf(CptColumn(float(smoothed_p1(n1, n))))
        if depth >= max_depth or n1 == 0 or n1 == n:
            return leaf
        here = float(_side_cll(n1, n))
        best_var, best_gain = None, -math.inf
        for v in range(X.shape[1]):
            if v in used:
                continue
            on = X[rows, v] == 1
            if on.all() or not on.any():
                continue
            r1, r0 = rows[on], rows[~on]
            g = float(_side_cll((w[r0] * y[r0]).sum(), w[r0].sum())
                      + _side_cll((w[r1] * y[r1]).sum(), w[r1].sum())) - here
            if g > best_gain + GAIN_TOL:
                best_var, best_gain = v, g
        if best_var is None or best_gain < -GAIN_TOL:
            return leaf
        on = X[rows, best_var] == 1
        used = used | {best_var}
        return Split(best_var, grow(rows[~on], depth + 1, used), grow(rows[on], depth + 1, used))

    root = grow(np.arange(len(y)), 0, frozenset())
    return TreeCpt(root, max_depth, view.child_name, view.parent_names)


def tree_predict(tree: TreeCpt, u) -> CptColumn:
    node = tree.root
    while isinstance(node, Split):
        node = node.hi if u[node.var] else node.lo
    return node.column


def tree_predict_proba(tree: TreeCpt, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X))
    out = np.empty(X.shape[0])

    def walk(node, rows):
        if isinstance(node, Leaf):
            out[rows] = node.column.p1
            return
        on = X[rows, node.var] == 1
        walk(node.lo, rows[~on])
        walk(node.hi, rows[on])

    walk(tree.root, np.arange(X.shape[0]))
    return out


def tree_cll(view: FamilyView, tree: TreeCpt) -> float:
    p1 = tree_predict_proba(tree, view.X)
    return math.fsum(_cll_terms(p1, view.y, view.w.astype(float)).tolist())


def leaf_count(tree: TreeCpt | Node) -> int:
    node = tree.root if isinstance(tree, TreeCpt) else tree
    if isinstance(node, Leaf):
        return 1
    return leaf_count(node.lo) + leaf_count(node.hi)


def depth(tree: TreeCpt | Node) -> int:
    node = tree.root if isinstance(tree, TreeCpt) else tree
    if isinstance(node, Leaf):
        return 0
    return 1 + max(depth(node.lo), depth(node.hi))


def save_tree(tree: TreeCpt, path) -> None:
    Path(path).write_text(json.dumps(tree.to_json()))


def load_tree(path) -> TreeCpt:
    return TreeCpt.from_json(json.loads(Path(path).read_text()))


class TreeCPTClassifier(ClassifierMixin, BaseEstimator):
    def __init__(self, max_depth=3):
        self.max_depth = max_depth

    def fit(self, X, y=None, sample_weight=None):
        view = as_view(X, y, sample_weight)
        self.tree_ = learn_tree(view, self.max_depth)
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = len(view.parents)
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "tree_")
        p1 = tree_predict_proba(self.tree_, check_binary(X))
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(int)
