"""Compile linear threshold units, step networks and FoCS contexts to OBDDs.

Standalone threshold units are compiled in exact rational arithmetic, caching
for every depth the interval of partial sums that leads to the same
sub-diagram.  Step networks are compiled in the same float arithmetic as
:meth:`StepNetwork.output`, so a context boundary sitting exactly on a
training score lands on the same side in the diagram and in the model.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .cpt import FoCSCpt
from .mlp import StepNetwork
from .obdd import DEFAULT_NODE_BUDGET, FALSE, TRUE, BddManager, Obdd, wmc


@dataclass(frozen=True)
class LinearThreshold:
    """The Boolean test ``sum_i weights[i] * u_i >= threshold``."""

    weights: tuple[float, ...]
    threshold: float

    def __post_init__(self):
        w = tuple(float(x) for x in self.weights)
        if not all(math.isfinite(x) for x in w) or not math.isfinite(float(self.threshold)):
            raise ValueError("threshold unit parameters must be finite")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "threshold", float(self.threshold))

    def __call__(self, u) -> bool:
        return sum(Fraction(w) for w, x in zip(self.weights, u) if x) >= Fraction(self.threshold)


def default_order(lt: LinearThreshold) -> list[int]:
    """Inputs by decreasing |weight|, ties by index."""
    return sorted(range(len(lt.weights)), key=lambda i: (-abs(lt.weights[i]), i))


def compile_threshold(lt: LinearThreshold, order: Sequence[int] | None = None,
                      manager: BddManager | None = None,
                      node_budget: int = DEFAULT_NODE_BUDGET) -> Obdd:
    """Reduced OBDD equivalent to ``lt`` (exact rational arithmetic)."""
    if manager is None:
        manager = BddManager(order if order is not None else default_order(lt), node_budget)
    n = len(lt.weights)
    missing = set(range(n)) - set(manager.order)
    if missing:
        raise ValueError(f"variable order does not cover inputs {sorted(missing)}")
    vars_ = sorted(range(n), key=lambda v: manager.level[v])
    w = [Fraction(lt.weights[v]) for v in vars_]
    thr = Fraction(lt.threshold)
    # bounds of the still-unassigned suffix
    min_rest = [Fraction(0)] * (n + 1)
    max_rest = [Fraction(0)] * (n + 1)
    for k in range(n - 1, -1, -1):
        min_rest[k] = min_rest[k + 1] + min(w[k], 0)
        max_rest[k] = max_rest[k + 1] + max(w[k], 0)
    # per depth: sorted interval starts, and (start, end, node) rows
    starts: list[list] = [[] for _ in range(n + 1)]
    rows: list[list] = [[] for _ in range(n + 1)]

    def lookup(k, s):
        i = bisect.bisect_right(starts[k], s) - 1
        if i >= 0:
            a, b, node = rows[k][i]
            if a <= s < b:
                return a, b, node
        return None

    def store(k, a, b, node):
        i = bisect.bisect_right(starts[k], a)
        starts[k].insert(i, a)
        rows[k].insert(i, (a, b, node))

    def rec(k, s):
        # returns (node, a, b): every partial sum in [a, b) yields node
        if s + min_rest[k] >= thr:
            return TRUE, thr - min_rest[k], math.inf
        if s + max_rest[k] < thr:
            return FALSE, -math.inf, thr - max_rest[k]
        hit = lookup(k, s)
        if hit is not None:
            return hit[2], hit[0], hit[1]
        lo, a0, b0 = rec(k + 1, s)
        hi, a1, b1 = rec(k + 1, s + w[k])
        node = manager.mk(manager.level[vars_[k]], lo, hi)
        a, b = max(a0, a1 - w[k]), min(b0, b1 - w[k])
        store(k, a, b, node)
        return node, a, b

    return Obdd(manager, rec(0, Fraction(0))[0])


def _compile_float_sum(manager: BddManager, vars_: Sequence[int], weights: Sequence[float],
                       start: float, lo: float, hi: float, closed_lo: bool = False) -> int:
    """Node for ``lo < s <= hi`` (``lo <= s`` if ``closed_lo``), where
    ``s = start + sum of weights[k] over active vars_[k]`` accumulated left to
    right in float.  ``vars_`` must follow the manager's level order."""
    levels = [manager.level[v] for v in vars_]
    if levels != sorted(levels):
        raise ValueError("accumulation order must follow the variable order")
    n = len(vars_)
    w = [float(x) for x in weights]
    min_rest = [0.0] * (n + 1)
    max_rest = [0.0] * (n + 1)
    for k in range(n - 1, -1, -1):
        min_rest[k] = min_rest[k + 1] + min(w[k], 0.0)
        max_rest[k] = max_rest[k + 1] + max(w[k], 0.0)
    tol = 1e-9 * (1.0 + abs(start) + sum(abs(x) for x in w))
    lo_f = -math.inf if lo is None else lo
    hi_f = math.inf if hi is None else hi

    def above_lo(s):
        return s >= lo_f if closed_lo else s > lo_f

    memo: dict[tuple[int, float], int] = {}

    def rec(k, s):
        if k == n:
            return TRUE if above_lo(s) and s <= hi_f else FALSE
        smin, smax = s + min_rest[k], s + max_rest[k]
        # prune only with a safety margin; near-ties recurse to exact leaves
        if smin > lo_f + tol and smax <= hi_f - tol:
            return TRUE
        if smax < lo_f - tol or smin > hi_f + tol:
            return FALSE
        key = (k, s)
        node = memo.get(key)
        if node is None:
            node = manager.mk(levels[k], rec(k + 1, s), rec(k + 1, s + w[k]))
            memo[key] = node
        return node

    return rec(0, float(start))


def compile_step_network(net: StepNetwork, output_interval: tuple[float, float],
                         manager: BddManager | None = None,
                         node_budget: int = DEFAULT_NODE_BUDGET) -> Obdd:
    """OBDD over the inputs for ``lo < output(u) <= hi``."""
    if not isinstance(net, StepNetwork):
        raise TypeError("compile_step_network needs a StepNetwork")
    if len(net.layers) != 2:
        raise ValueError("only single-hidden-layer step networks can be compiled")
    n = net.n_inputs
    if manager is None:
        manager = BddManager(range(n), node_budget)
    inputs = list(range(n))
    hidden, out = net.layers
    lo, hi = output_interval
    if lo == -math.inf and hi == math.inf:
        return Obdd(manager, TRUE)
    units = [
        _compile_float_sum(manager, inputs, hidden.w[j], hidden.b[j], 0.0, math.inf, closed_lo=True)
        for j in range(hidden.w.shape[0])
    ]
    m = len(units)
    hman = BddManager(range(m), manager.node_budget)
    top = _compile_float_sum(hman, list(range(m)), out.w[0], out.b[0], lo, hi)
    # substitute each hidden variable by its input-space diagram
    memo: dict[int, int] = {FALSE: FALSE, TRUE: TRUE}

    def subst(node):
        r = memo.get(node)
        if r is None:
            g = units[hman.node_var(node)]
            r = manager.ite(g, subst(hman.high(node)), subst(hman.low(node)))
            memo[node] = r
        return r

    return Obdd(manager, subst(top))


def compile_context(cpt: FoCSCpt, i: int, manager: BddManager | None = None,
                    node_budget: int = DEFAULT_NODE_BUDGET) -> Obdd:
    """OBDD over the parents for the ``i``-th context of ``cpt``."""
    if not isinstance(cpt.scorer, StepNetwork):
        raise TypeError("contexts can only be compiled for a step-network scorer")
    c = cpt.contexts[i]
    return compile_step_network(cpt.scorer, (c.lo, c.hi), manager, node_budget)


def compile_contexts(cpt: FoCSCpt, node_budget: int = DEFAULT_NODE_BUDGET) -> list[Obdd]:
    """All context diagrams in one shared manager (family order)."""
    manager = BddManager(range(cpt.scorer.n_inputs), node_budget)
    return [compile_context(cpt, i, manager) for i in range(cpt.k)]


def marginal(cpt: FoCSCpt, prior, contexts: list[Obdd] | None = None) -> tuple[float, list[float]]:
    """``Pr(x=1)`` and the prior mass of each context under independent parents."""
    prior = np.broadcast_to(np.asarray(prior, dtype=float), (cpt.scorer.n_inputs,))
    if np.any(prior < 0) or np.any(prior > 1):
        raise ValueError("prior probabilities must lie in [0, 1]")
    if contexts is None:
        contexts = compile_contexts(cpt)
    masses = [wmc(d, prior) for d in contexts]
    px = math.fsum(col.p1 * m for col, m in zip(cpt.columns, masses))
    return px, masses


def obdd_stats(d: Obdd) -> dict:
    return {"nodes": d.size(), "models": d.model_count(), "order": list(d.order)}
