"""Functional context-specific CPTs.

Contexts are half-open intervals ``(lo, hi]`` on a scorer's output that tile
the real line; each carries a Laplace-smoothed CPT column.  Thresholds are
learned greedily: every interval proposes its best single split (by smoothed
training conditional log-likelihood) and the largest improvement wins.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import mlp as mlp_mod
from .data import FamilyView
from .mlp import Mlp, StepNetwork, TrainConfig
from .validation import as_view, check_binary

INF = math.inf


@dataclass(frozen=True, order=True)
class Context:
    """Scores ``f`` with ``lo < f <= hi``."""

    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"empty context ({self.lo}, {self.hi}]")

    def contains(self, f) -> bool | np.ndarray:
        return (self.lo < f) & (f <= self.hi)


@dataclass(frozen=True)
class CptColumn:
    p1: float

    @property
    def p0(self) -> float:
        return 1.0 - self.p1

    def prob(self, x: int) -> float:
        return self.p1 if x == 1 else 1.0 - self.p1


def check_tiling(contexts: Sequence[Context]) -> None:
    if not contexts:
        raise ValueError("at least one context is required")
    if contexts[0].lo != -INF or contexts[-1].hi != INF:
        raise ValueError("contexts must cover (-inf, +inf]")
    for a, b in zip(contexts, contexts[1:]):
        if a.hi != b.lo:
            raise ValueError("contexts must be sorted and contiguous")


def context_index(contexts: Sequence[Context], scores) -> np.ndarray:
    """Index of the context containing each score."""
    his = np.array([c.hi for c in contexts[:-1]], dtype=float)
    return np.searchsorted(his, np.asarray(scores, dtype=float), side="left")


@dataclass(frozen=True)
class FoCSCpt:
    scorer: Mlp
    contexts: tuple[Context, ...]
    columns: tuple[CptColumn, ...]
    child: str = "X"
    parents: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "contexts", tuple(self.contexts))
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "parents", tuple(self.parents))
        check_tiling(self.contexts)
        if len(self.columns) != len(self.contexts):
            raise ValueError("one column per context is required")

    @property
    def k(self) -> int:
        return len(self.contexts)

    @property
    def p1(self) -> np.ndarray:
        return np.array([c.p1 for c in self.columns])

    def context_of(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return context_index(self.contexts, self.scorer.score(X))

    def predict_proba(self, X) -> np.ndarray:
        return self.p1[self.context_of(X)]

    def to_json(self) -> dict:
        return {
            "scorer": self.scorer.to_json(),
            "contexts": [
                {"lo": _enc(c.lo), "hi": _enc(c.hi), "p1": col.p1}
                for c, col in zip(self.contexts, self.columns)
            ],
            "child": self.child,
            "parents": list(self.parents),
        }

    @classmethod
    def from_json(cls, obj: dict, base: Path | None = None) -> "FoCSCpt":
        scorer = obj["scorer"]
        if isinstance(scorer, str):
            scorer = json.loads(((base or Path.cwd()) / scorer).read_text())
        ctxs = [Context(_dec(c["lo"]), _dec(c["hi"])) for c in obj["contexts"]]
        cols = [CptColumn(float(c["p1"])) for c in obj["contexts"]]
        return cls(mlp_mod.from_json(scorer), tuple(ctxs), tuple(cols),
                   obj.get("child", "X"), tuple(obj.get("parents", ())))


def _enc(v: float):
    if v == INF:
        return "+inf"
    if v == -INF:
        return "-inf"
    return v


def _dec(v) -> float:
    if isinstance(v, str):
        return {"+inf": INF, "inf": INF, "-inf": -INF}[v]
    return float(v)


def predict(cpt: FoCSCpt, u) -> CptColumn:
    """The column of the unique context containing ``f(u)``."""
    u = np.asarray(u, dtype=float)
    if u.shape != (cpt.scorer.n_inputs,):
        raise ValueError(f"expected {cpt.scorer.n_inputs} parent values")
    return cpt.columns[int(cpt.context_of(u[None, :])[0])]


def smoothed_p1(n1, n):
    return (np.asarray(n1, dtype=float) + 1.0) / (np.asarray(n, dtype=float) + 2.0)


def estimate_columns(view: FamilyView, scorer: Mlp, contexts: Sequence[Context],
                     scores=None) -> list[CptColumn]:
    """Add-one smoothed ``Pr(x=1 | context)`` from one pass over the data."""
    check_tiling(contexts)
    if scores is None:
        scores = scorer.score(view.X)
    idx = context_index(contexts, scores)
    w = view.w
    n = np.bincount(idx, weights=w, minlength=len(contexts))
    n1 = np.bincount(idx, weights=w * view.y, minlength=len(contexts))
    return [CptColumn(float(p)) for p in smoothed_p1(n1, n)]


def _cll_terms(p1, y, w):
    return w * np.log(np.where(y == 1, p1, 1.0 - p1))


def cll(view: FamilyView, cpt: FoCSCpt) -> float:
    """Conditional log-likelihood (natural log) of the data under ``cpt``."""
    p1 = cpt.predict_proba(view.X)
    return math.fsum(_cll_terms(p1, view.y, view.w.astype(float)).tolist())


def _side_cll(n1, n):
    n1 = np.asarray(n1, dtype=float)
    n = np.asarray(n, dtype=float)
    n0 = n - n1
    return n1 * np.log((n1 + 1.0) / (n + 2.0)) + n0 * np.log((n0 + 1.0) / (n + 2.0))


def learn_threshold(view: FamilyView, scorer: Mlp, within: Context,
                    scores=None) -> tuple[float, float] | None:
    """Best single split of ``within``, or None if no split improves the CLL.

    Returns ``(T, gain)``: the context becomes ``(lo, T] + (T, hi]`` and the
    smoothed training CLL rises by ``gain``.
    """
    if scores is None:
        scores = scorer.score(view.X)
    scores = np.asarray(scores, dtype=float)
    mask = within.contains(scores)
    f = scores[mask]
    if f.size == 0:
        return None
    y = view.y[mask].astype(float)
    w = view.w[mask].astype(float)
    values, inv = np.unique(f, return_inverse=True)
    if values.size < 2:
        return None
    n_g = np.bincount(inv, weights=w)
    n1_g = np.bincount(inv, weights=w * y)
    n_left, n1_left = np.cumsum(n_g)[:-1], np.cumsum(n1_g)[:-1]
    n_all, n1_all = n_g.sum(), n1_g.sum()
    if n1_all == 0 or n1_all == n_all:
        return None
    whole = float(_side_cll(n1_all, n_all))
    gains = _side_cll(n1_left, n_left) + _side_cll(n1_all - n1_left, n_all - n_left) - whole
    best = int(np.argmax(gains))  # first maximum = smallest threshold
    gain = float(gains[best])
    if not gain > 1e-12 * max(1.0, n_all):
        return None
    return float(values[best]), gain


def candidate_partitions(view: FamilyView, scorer: Mlp, within: Context | None = None,
                         scores=None) -> list[tuple[float, list[int], list[int]]]:
    """Every distinct partition a threshold can induce, in ascending order.

    Rows are ``(T, left, right)`` with record indices sorted by score; the
    first row uses ``T = -inf`` (empty left side).
    """
    within = within or Context(-INF, INF)
    if scores is None:
        scores = scorer.score(view.X)
    scores = np.asarray(scores, dtype=float)
    rows = np.flatnonzero(within.contains(scores))
    order = rows[np.argsort(scores[rows], kind="stable")]
    out = [(-INF, [], order.tolist())]
    for t in np.unique(scores[rows]):
        left = [int(i) for i in order if scores[i] <= t]
        right = [int(i) for i in order if scores[i] > t]
        out.append((float(t), left, right))
    return out


def split_contexts(contexts: Sequence[Context], i: int, t: float) -> tuple[Context, ...]:
    c = contexts[i]
    return (*contexts[:i], Context(c.lo, t), Context(t, c.hi), *contexts[i + 1:])


def learn_focs_path(view: FamilyView, scorer: Mlp, max_contexts: int,
                    min_gain: float = 0.0, validation: FamilyView | None = None,
                    scores=None) -> list[FoCSCpt]:
    """All models visited by greedy refinement, from one context upward."""
    if max_contexts < 1:
        raise ValueError("max_contexts must be at least 1")
    if scores is None:
        scores = scorer.score(view.X)
    val_scores = scorer.score(validation.X) if validation is not None else None

    def build(ctxs):
        cols = estimate_columns(view, scorer, ctxs, scores=scores)
        return FoCSCpt(scorer, ctxs, cols, view.child_name, view.parent_names)

    contexts = (Context(-INF, INF),)
    model = build(contexts)
    path = [model]
    proposals: dict[Context, tuple[float, float] | None] = {}
    while len(contexts) < max_contexts:
        best = None
        for i, c in enumerate(contexts):
            if c not in proposals:
                proposals[c] = learn_threshold(view, scorer, c, scores=scores)
            prop = proposals[c]
            if prop is None:
                continue
            t, g = prop
            if best is None or g > best[2] or (g == best[2] and t < best[1]):
                best = (i, t, g)
        if best is None:
            break
        i, t, g = best
        candidate = build(split_contexts(contexts, i, t))
        if validation is not None:
            v = _cll_on(validation, candidate, val_scores) - _cll_on(validation, model, val_scores)
            improvement = v / validation.total_weight
        else:
            improvement = g / view.total_weight
        if improvement < min_gain:
            break
        contexts, model = candidate.contexts, candidate
        path.append(model)
    return path


def _cll_on(view, cpt, scores):
    p1 = cpt.p1[context_index(cpt.contexts, scores)]
    return math.fsum(_cll_terms(p1, view.y, view.w.astype(float)).tolist())


def learn_focs(view: FamilyView, scorer: Mlp, max_contexts: int, min_gain: float = 0.0,
               validation: FamilyView | None = None) -> FoCSCpt:
    """Greedy threshold refinement up to ``max_contexts`` contexts."""
    return learn_focs_path(view, scorer, max_contexts, min_gain, validation)[-1]


def save_cpt(cpt: FoCSCpt, path) -> None:
    Path(path).write_text(json.dumps(cpt.to_json()))


def load_cpt(path) -> FoCSCpt:
    path = Path(path)
    return FoCSCpt.from_json(json.loads(path.read_text()), base=path.parent)


class FoCSClassifier(ClassifierMixin, TransformerMixin, BaseEstimator):
    """Estimator wrapper: train an MLP scorer, then quantize it into contexts.

    ``transform`` maps parent instantiations to context indices.  Pass a
    fitted ``scorer`` to skip MLP training.  With ``step=True`` the scorer
    is converted to a step network before thresholds are learned, which makes
    the result compilable.
    """

    def __init__(self, max_contexts=2, min_gain=0.0, hidden_units=16, activation="relu",
                 epochs=100, learning_rate=0.05, batch_size=64, optimizer="momentum",
                 seed=0, step=False, scorer=None):
        self.max_contexts = max_contexts
        self.min_gain = min_gain
        self.hidden_units = hidden_units
        self.activation = activation
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.optimizer = optimizer
        self.seed = seed
        self.step = step
        self.scorer = scorer

    def _train_config(self) -> TrainConfig:
        return TrainConfig(self.hidden_units, self.activation, self.epochs, self.learning_rate,
                           self.batch_size, self.seed, self.optimizer)

    def fit(self, X, y=None, sample_weight=None, validation=None):
        view = as_view(X, y, sample_weight)
        scorer = self.scorer if self.scorer is not None else mlp_mod.train(view, self._train_config())
        if self.step and not isinstance(scorer, StepNetwork):
            scorer = mlp_mod.to_step(scorer)
        val = as_view(*validation) if isinstance(validation, tuple) else validation
        self.path_ = learn_focs_path(view, scorer, self.max_contexts, self.min_gain, val)
        self.cpt_ = self.path_[-1]
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = len(view.parents)
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "cpt_")
        p1 = self.cpt_.predict_proba(check_binary(X))
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(int)

    def transform(self, X):
        check_is_fitted(self, "cpt_")
        return self.cpt_.context_of(check_binary(X))

    def score_cll(self, X, y=None, sample_weight=None) -> float:
        """Mean negated CLL per record (lower is better)."""
        view = as_view(X, y, sample_weight)
        return -cll(view, self.cpt_) / view.total_weight
