"""Brute-force reference computations shared by the unit and acceptance tests."""
import itertools
import math

import numpy as np

from focscpt.cpt import CptColumn
from focscpt.data import Dataset
from focscpt.tree import Leaf, Split


def parity_view(n):
    rows = [(*u, sum(u) % 2) for u in itertools.product((0, 1), repeat=n)]
    return Dataset([f"U{i}" for i in range(n)] + ["X"], rows).family("X")


def leaf_stats(y_sub):
    n, n1 = len(y_sub), int(sum(y_sub))
    p1 = (n1 + 1) / (n + 2)
    cll = math.fsum([n1 * math.log(p1), (n - n1) * math.log(1 - p1)])
    correct = p1 != 0.5 and all((p1 > 0.5) == bool(v) for v in y_sub)
    return p1, cll, correct


def enumerate_trees(X, y, build=False):
    """Every tree over the columns of ``X`` (no variable repeated on a path).

    Returns tuples ``(leaves, cll, correct, max_leaf_depth, node)``; ``node``
    is a tree object only when ``build`` is set.  ``correct`` means every
    record is classified correctly by thresholding its leaf column at 0.5.
    """
    def rec(rows, free, depth):
        p1, cll, correct = leaf_stats(y[rows].tolist())
        out = [(1, cll, correct, depth, Leaf(CptColumn(p1)) if build else None)]
        for v in free:
            on = X[rows, v] == 1
            rest = tuple(f for f in free if f != v)
            lo, hi = rec(rows[~on], rest, depth + 1), rec(rows[on], rest, depth + 1)
            for a, b in itertools.product(lo, hi):
                out.append((a[0] + b[0], a[1] + b[1], a[2] and b[2], max(a[3], b[3]),
                            Split(v, a[4], b[4]) if build else None))
        return out

    return rec(np.arange(len(y)), tuple(range(X.shape[1])), 0)


def parity_tree_violations(n):
    """Brute-force check of the parity facts over every tree on ``n`` variables.

    1. A tree classifies parity correctly iff it has all ``2^n`` leaves.
    2. A tree with no leaf at depth ``n`` has exactly zero training-CLL
       advantage over the single smoothed marginal.
    3. Every tree with fewer than ``2^n`` leaves is strictly worse than the
       complete tree.
    Returns human-readable violations; empty means all hold.
    """
    view = parity_view(n)
    _, base, _ = leaf_stats(view.y.tolist())
    trees = enumerate_trees(view.X, view.y)
    complete = max(t[1] for t in trees if t[0] == 2**n)
    bad = []
    for leaves, cll, correct, deepest, _ in trees:
        if correct != (leaves == 2**n):
            bad.append(f"leaves={leaves} correct={correct}")
        if deepest < n and abs(cll - base) > 1e-12:
            bad.append(f"shallow tree with advantage {cll - base}")
        if leaves < 2**n and not cll < complete:
            bad.append(f"incomplete tree matches complete tree (leaves={leaves})")
    return bad, len(trees)


def random_mpe_problem(rng, n_max=12):
    """Random message prior plus a few observed FoCS children over random parent subsets."""
    from conftest import random_focs
    from focscpt.mpe import Family, encode

    n = int(rng.integers(1, n_max + 1))
    fams = []
    for _ in range(int(rng.integers(0, 5))):
        m = int(rng.integers(1, n + 1))
        parents = tuple(sorted(rng.choice(n, size=m, replace=False).tolist()))
        cpt = random_focs(rng, m, int(rng.integers(1, 5)), int(rng.integers(1, 5)))
        fams.append(Family(cpt, int(rng.integers(0, 2)), parents))
    return encode(fams, rng.uniform(0.05, 0.95, n))
