"""Reduced ordered binary decision diagrams with a shared node table.

Nodes are integers: ``0`` and ``1`` are the terminal sinks, every other id
indexes the manager's node table.  Hash-consing through the unique table keeps
every diagram reduced, so two diagrams for the same function under one manager
share a root.
"""
from __future__ import annotations

import sys
from dataclasses import dataclass
from typing import Callable, Iterator, Mapping, Sequence

FALSE = 0
TRUE = 1

DEFAULT_NODE_BUDGET = 10**7


class NodeBudgetExceeded(RuntimeError):
    """The unique table grew past the configured cap."""


class BddManager:
    """Node table, unique table and operation caches for one variable order.

    ``order`` lists variable ids from the top level down.
    """

    def __init__(self, order: Sequence[int], node_budget: int = DEFAULT_NODE_BUDGET):
        order = [int(v) for v in order]
        if len(set(order)) != len(order):
            raise ValueError("variable order contains duplicates")
        self.order = tuple(order)
        self.level = {v: i for i, v in enumerate(order)}
        self.node_budget = node_budget
        sink = len(order)
        self._lvl = [sink, sink]
        self._lo = [-1, -1]
        self._hi = [-1, -1]
        self._unique: dict[tuple[int, int, int], int] = {}
        self._apply_cache: dict[tuple[str, int, int], int] = {}
        if sys.getrecursionlimit() < 4 * len(order) + 1000:
            sys.setrecursionlimit(4 * len(order) + 1000)

    def __len__(self) -> int:
        return len(self._lvl)

    @property
    def n_vars(self) -> int:
        return len(self.order)

    def mk(self, level: int, lo: int, hi: int) -> int:
        if lo == hi:
            return lo
        key = (level, lo, hi)
        node = self._unique.get(key)
        if node is None:
            if len(self._lvl) >= self.node_budget:
                raise NodeBudgetExceeded(f"OBDD exceeded {self.node_budget} nodes")
            node = len(self._lvl)
            self._lvl.append(level)
            self._lo.append(lo)
            self._hi.append(hi)
            self._unique[key] = node
        return node

    def node_level(self, u: int) -> int:
        return self._lvl[u]

    def node_var(self, u: int) -> int:
        return self.order[self._lvl[u]]

    def low(self, u: int) -> int:
        return self._lo[u]

    def high(self, u: int) -> int:
        return self._hi[u]

    def var(self, v: int) -> int:
        return self.mk(self.level[v], FALSE, TRUE)

    def apply(self, op: str, a: int, b: int) -> int:
        """Binary Boolean operation: ``and``, ``or`` or ``xor``."""
        fn = _OPS[op]
        if op in ("and", "or", "xor") and a > b:
            a, b = b, a
        terminal = fn(a, b)
        if terminal is not None:
            return terminal
        key = (op, a, b)
        res = self._apply_cache.get(key)
        if res is not None:
            return res
        la, lb = self._lvl[a], self._lvl[b]
        top = min(la, lb)
        a0, a1 = (self._lo[a], self._hi[a]) if la == top else (a, a)
        b0, b1 = (self._lo[b], self._hi[b]) if lb == top else (b, b)
        res = self.mk(top, self.apply(op, a0, b0), self.apply(op, a1, b1))
        self._apply_cache[key] = res
        return res

    def neg(self, a: int) -> int:
        return self.apply("xor", a, TRUE)

    def ite(self, f: int, g: int, h: int) -> int:
        return self.apply("or", self.apply("and", f, g), self.apply("and", self.neg(f), h))

    def restrict(self, u: int, var: int, value: int) -> int:
        lvl = self.level[var]
        memo: dict[int, int] = {}

        def go(n):
            if n <= TRUE or self._lvl[n] > lvl:
                return n
            if n in memo:
                return memo[n]
            if self._lvl[n] == lvl:
                r = self._hi[n] if value else self._lo[n]
            else:
                r = self.mk(self._lvl[n], go(self._lo[n]), go(self._hi[n]))
            memo[n] = r
            return r

        return go(u)

    def compose(self, u: int, var: int, g: int) -> int:
        """Substitute the function ``g`` for variable ``var`` in ``u``."""
        return self.ite(g, self.restrict(u, var, 1), self.restrict(u, var, 0))

    def evaluate(self, u: int, assignment: Mapping[int, int] | Sequence[int]) -> bool:
        while u > TRUE:
            u = self._hi[u] if assignment[self.node_var(u)] else self._lo[u]
        return u == TRUE

    def reachable(self, u: int) -> list[int]:
        """Internal nodes below ``u`` in depth-first post-order."""
        seen, out = set(), []

        def go(n):
            if n <= TRUE or n in seen:
                return
            seen.add(n)
            go(self._lo[n])
            go(self._hi[n])
            out.append(n)

        go(u)
        return out

    def weighted_count(self, u: int, prior: Callable[[int], float]) -> float:
        """Probability of ``u`` under independent variables, ``prior(var) = Pr(var=1)``.

        Variables skipped along an edge sum out with factor one.
        """
        val = {FALSE: 0.0, TRUE: 1.0}
        for n in self.reachable(u):
            p = prior(self.node_var(n))
            val[n] = (1.0 - p) * val[self._lo[n]] + p * val[self._hi[n]]
        return val[u]

    def model_count(self, u: int) -> int:
        cnt = {FALSE: 0, TRUE: 1}

        def lvl(n):
            return self._lvl[n]

        for n in self.reachable(u):
            lo, hi = self._lo[n], self._hi[n]
            cnt[n] = (cnt[lo] << (lvl(lo) - lvl(n) - 1)) + (cnt[hi] << (lvl(hi) - lvl(n) - 1))
        return cnt[u] << lvl(u)

    def models(self, u: int) -> Iterator[tuple[int, ...]]:
        """All satisfying assignments, as 0/1 tuples indexed by variable id."""
        nv = self.n_vars
        size = max(self.order) + 1 if self.order else 0
        for bits in range(2**nv):
            a = [0] * size
            for i, v in enumerate(self.order):
                a[v] = (bits >> (nv - 1 - i)) & 1
            if self.evaluate(u, a):
                yield tuple(a)


def _and(a, b):
    if a == FALSE or b == FALSE:
        return FALSE
    if a == TRUE:
        return b
    if b == TRUE:
        return a
    if a == b:
        return a
    return None


def _or(a, b):
    if a == TRUE or b == TRUE:
        return TRUE
    if a == FALSE:
        return b
    if b == FALSE:
        return a
    if a == b:
        return a
    return None


def _xor(a, b):
    if a == b:
        return FALSE
    if a == FALSE:
        return b
    if b == FALSE:
        return a
    if a <= TRUE and b <= TRUE:
        return a ^ b
    return None


_OPS = {"and": _and, "or": _or, "xor": _xor}


@dataclass(frozen=True)
class Obdd:
    """A root in a manager; immutable once built."""

    manager: BddManager
    root: int

    def _check(self, other: "Obdd"):
        if other.manager is not self.manager:
            raise ValueError("operands belong to different managers")

    def __and__(self, other: "Obdd") -> "Obdd":
        self._check(other)
        return Obdd(self.manager, self.manager.apply("and", self.root, other.root))

    def __or__(self, other: "Obdd") -> "Obdd":
        self._check(other)
        return Obdd(self.manager, self.manager.apply("or", self.root, other.root))

    def __xor__(self, other: "Obdd") -> "Obdd":
        self._check(other)
        return Obdd(self.manager, self.manager.apply("xor", self.root, other.root))

    def __invert__(self) -> "Obdd":
        return Obdd(self.manager, self.manager.neg(self.root))

    @property
    def order(self) -> tuple[int, ...]:
        return self.manager.order

    @property
    def is_true(self) -> bool:
        return self.root == TRUE

    @property
    def is_false(self) -> bool:
        return self.root == FALSE

    def size(self) -> int:
        """Internal node count."""
        return len(self.manager.reachable(self.root))

    def evaluate(self, assignment) -> bool:
        return self.manager.evaluate(self.root, assignment)

    def model_count(self) -> int:
        return self.manager.model_count(self.root)

    def models(self) -> list[tuple[int, ...]]:
        return list(self.manager.models(self.root))

    def node_table(self) -> list[tuple[int, int, int]]:
        """Canonical ``(var, lo, hi)`` rows; children refer to row positions,
        with ``-2``/``-1`` standing for the 0/1 sinks."""
        nodes = self.manager.reachable(self.root)
        pos = {n: i for i, n in enumerate(nodes)}
        pos[FALSE], pos[TRUE] = -2, -1
        m = self.manager
        rows = [(m.node_var(n), pos[m.low(n)], pos[m.high(n)]) for n in nodes]
        return rows if self.root > TRUE else [(-1, pos[self.root], pos[self.root])]

    def to_dot(self, names: Sequence[str] | None = None, graph: str = "obdd") -> str:
        m = self.manager
        lines = [f"digraph {graph} {{", '  node [shape=circle];',
                 '  n0 [shape=box,label="0"];', '  n1 [shape=box,label="1"];']
        for n in m.reachable(self.root):
            v = m.node_var(n)
            label = names[v] if names is not None else f"x{v}"
            lines.append(f'  n{n} [label="{label}"];')
            lines.append(f"  n{n} -> n{m.low(n)} [style=dashed];")
            lines.append(f"  n{n} -> n{m.high(n)};")
        lines.append("}")
        return "\n".join(lines) + "\n"


def wmc(d: Obdd, prior) -> float:
    """Weighted model count of ``d`` under a fully factorized prior.

    ``prior`` maps each variable id to Pr(var=1); a sequence or dict works.
    """
    return d.manager.weighted_count(d.root, lambda v: float(prior[v]))
