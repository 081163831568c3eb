"""MPE over independent message bits and observed FoCS children.

:func:`encode` writes the query as a 0/1 linear program: big-M constraints tie
each hidden step unit and each context selector to the message bits, and the
objective is the log joint probability.  :func:`solve` is an exact
depth-first branch-and-bound over the message bits only; hidden units and
selectors are implied by the bits, and the bound combines the best completion
of the prior with the best context each family can still reach given interval
ranges of its neurons' partial sums.
"""
from __future__ import annotations

import bisect
import math
import re
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .cpt import FoCSCpt
from .mlp import StepNetwork

EPS = 1e-6
TIE_SLACK = 1e-9


class MpeError(ValueError):
    pass


@dataclass(frozen=True)
class Family:
    """An observed child ``x`` with FoCS CPT ``cpt`` over message bits ``parents``."""

    cpt: FoCSCpt
    x: int
    parents: tuple[int, ...]


@dataclass
class Constraint:
    name: str
    coefs: dict[str, float]
    sense: str  # "<=", ">=" or "="
    rhs: float


@dataclass
class PboProblem:
    n_bits: int
    prior: np.ndarray
    families: tuple[Family, ...]
    variables: list[str] = field(default_factory=list)
    objective: dict[str, float] = field(default_factory=dict)
    constant: float = 0.0
    constraints: list[Constraint] = field(default_factory=list)
    eps: float = EPS

    def objective_value(self, assignment: dict[str, int]) -> float:
        return math.fsum([self.constant] + [c * assignment[v] for v, c in self.objective.items()])

    def violations(self, assignment: dict[str, int], tol: float = 1e-9) -> list[str]:
        """Names of constraints that ``assignment`` breaks."""
        bad = []
        for con in self.constraints:
            lhs = math.fsum(c * assignment[v] for v, c in con.coefs.items())
            if con.sense == "<=" and lhs > con.rhs + tol:
                bad.append(con.name)
            elif con.sense == ">=" and lhs < con.rhs - tol:
                bad.append(con.name)
            elif con.sense == "=" and abs(lhs - con.rhs) > tol:
                bad.append(con.name)
        return bad


@dataclass(frozen=True)
class MpeSolution:
    u: tuple[int, ...]
    logp: float
    optimal: bool
    nodes: int
    seconds: float

    def to_json(self) -> dict:
        return {"u": list(self.u), "logp": self.logp, "optimal": self.optimal,
                "nodes": self.nodes, "seconds": self.seconds}


def _as_families(families, n_bits) -> tuple[Family, ...]:
    out = []
    for fam in families:
        if isinstance(fam, Family):
            out.append(fam)
            continue
        cpt, x, *rest = fam
        parents = tuple(rest[0]) if rest else tuple(range(n_bits))
        out.append(Family(cpt, int(x), parents))
    for fam in out:
        if not isinstance(fam.cpt.scorer, StepNetwork):
            raise MpeError("every family needs a step-network scorer")
        if len(fam.cpt.scorer.layers) != 2:
            raise MpeError("only single-hidden-layer scorers are supported")
        if fam.cpt.scorer.n_inputs != len(fam.parents):
            raise MpeError("scorer arity does not match the family's parents")
        if fam.x not in (0, 1):
            raise MpeError("observations must be 0 or 1")
        if any(not 0 <= p < n_bits for p in fam.parents):
            raise MpeError("parent index out of range")
    return tuple(out)


def _log_theta(fam: Family) -> list[float]:
    return [math.log(c.prob(fam.x)) for c in fam.cpt.columns]


def encode(families, prior, n_bits: int | None = None, eps: float = EPS) -> PboProblem:
    """Build the 0/1 program for ``argmax_u Pr(u) * prod_i Pr(x_i | u)``.

    ``families`` holds :class:`Family` objects or ``(cpt, x[, parents])``
    tuples; parents default to all bits in order.
    """
    prior = np.asarray(prior, dtype=float)
    if n_bits is None:
        if prior.ndim == 0:
            raise MpeError("n_bits is required with a scalar prior")
        n_bits = prior.shape[0]
    prior = np.broadcast_to(prior, (n_bits,)).astype(float)
    if np.any(prior <= 0) or np.any(prior >= 1):
        raise MpeError("prior probabilities must lie strictly between 0 and 1")
    fams = _as_families(families, n_bits)
    p = PboProblem(n_bits, prior, fams, eps=eps)
    u = [f"u{j}" for j in range(n_bits)]
    p.variables.extend(u)
    for j in range(n_bits):
        p.objective[u[j]] = math.log(prior[j]) - math.log1p(-prior[j])
    p.constant = math.fsum(math.log1p(-q) for q in prior)
    for i, fam in enumerate(fams):
        hidden, out = fam.cpt.scorer.layers
        hv = [f"h{i}_{k}" for k in range(hidden.w.shape[0])]
        zv = [f"z{i}_{c}" for c in range(fam.cpt.k)]
        p.variables.extend(hv + zv)
        for k, h in enumerate(hv):
            w, b = hidden.w[k], float(hidden.b[k])
            big_m = float(np.abs(w).sum()) + abs(b) + 1.0
            lin = {u[fam.parents[j]]: float(w[j]) for j in range(len(w)) if w[j] != 0}
            p.constraints.append(Constraint(f"{h}_on", {**lin, h: -big_m}, ">=", -big_m - b))
            p.constraints.append(Constraint(f"{h}_off", {**lin, h: -big_m}, "<=", -eps - b))
        v, c0 = out.w[0], float(out.b[0])
        finite = [abs(x) for ctx in fam.cpt.contexts for x in (ctx.lo, ctx.hi) if math.isfinite(x)]
        big_m = float(np.abs(v).sum()) + abs(c0) + max(finite, default=0.0) + 1.0 + eps
        olin = {hv[k]: float(v[k]) for k in range(len(v)) if v[k] != 0}
        for ctx, z, lt in zip(fam.cpt.contexts, zv, _log_theta(fam)):
            p.objective[z] = lt
            if math.isfinite(ctx.lo):
                p.constraints.append(Constraint(f"{z}_lo", {**olin, z: -big_m}, ">=",
                                                eps + ctx.lo - c0 - big_m))
            if math.isfinite(ctx.hi):
                p.constraints.append(Constraint(f"{z}_hi", {**olin, z: big_m}, "<=",
                                                big_m + ctx.hi - c0))
        p.constraints.append(Constraint(f"one{i}", {z: 1.0 for z in zv}, "=", 1.0))
    return p


def log_joint(problem: PboProblem, u: Sequence[int]) -> float:
    """``ln Pr(u) + sum_i ln Pr(x_i | u)`` evaluated through the FoCS models."""
    terms = [math.log(q) if b else math.log1p(-q) for q, b in zip(problem.prior.tolist(), u)]
    for fam in problem.families:
        terms.append(math.log(_column(fam, u).prob(fam.x)))
    return math.fsum(terms)


def _context_of(fam: Family, u) -> int:
    o = fam.cpt.scorer.output_one([u[j] for j in fam.parents])
    his = [c.hi for c in fam.cpt.contexts[:-1]]
    return bisect.bisect_left(his, o)


def _column(fam: Family, u):
    return fam.cpt.columns[_context_of(fam, u)]


def full_assignment(problem: PboProblem, u: Sequence[int]) -> dict[str, int]:
    """Values of every program variable implied by the message ``u``."""
    a = {f"u{j}": int(b) for j, b in enumerate(u)}
    for i, fam in enumerate(problem.families):
        hid = fam.cpt.scorer.hidden(np.array([[u[j] for j in fam.parents]], dtype=float))[0]
        for k, h in enumerate(hid):
            a[f"h{i}_{k}"] = int(h)
        ci = _context_of(fam, u)
        for c in range(fam.cpt.k):
            a[f"z{i}_{c}"] = int(c == ci)
    return a


class _Search:
    """Vectorized bound bookkeeping; families padded to common shapes."""

    def __init__(self, problem: PboProblem):
        self.p = problem
        n, fams = problem.n_bits, problem.families
        F = len(fams)
        M = max((f.cpt.scorer.layers[0].w.shape[0] for f in fams), default=1)
        K = max((f.cpt.k for f in fams), default=1)
        W = np.zeros((F, M, n))
        b = np.full((F, M), -1.0)  # padded units never fire
        V = np.zeros((F, M))
        c = np.zeros(F)
        lo = np.full((F, K), np.inf)
        hi = np.full((F, K), np.inf)
        lt = np.full((F, K), -np.inf)
        for i, fam in enumerate(fams):
            hid, out = fam.cpt.scorer.layers
            m = hid.w.shape[0]
            for j, par in enumerate(fam.parents):
                W[i, :m, par] += hid.w[:, j]
            b[i, :m] = hid.b
            V[i, :m] = out.w[0]
            c[i] = out.b[0]
            k = fam.cpt.k
            lo[i, :k] = [ctx.lo for ctx in fam.cpt.contexts]
            hi[i, :k] = [ctx.hi for ctx in fam.cpt.contexts]
            lt[i, :k] = _log_theta(fam)
        self.W, self.b, self.V, self.c = W, b, V, c
        self.ctx_lo, self.ctx_hi, self.log_theta = lo, hi, lt
        self.Wneg, self.Wpos = np.minimum(W, 0.0), np.maximum(W, 0.0)
        self.Vneg, self.Vpos = np.minimum(V, 0.0), np.maximum(V, 0.0)
        self.tol_a = 1e-9 * (1.0 + np.abs(b) + np.abs(W).sum(axis=2))
        self.tol_o = 1e-9 * (1.0 + np.abs(c) + np.abs(V).sum(axis=1))
        q = problem.prior
        self.l1, self.l0 = np.log(q), np.log1p(-q)
        self.lbest = np.maximum(self.l1, self.l0)

    def root_state(self):
        return (self.b.copy(), self.Wneg.sum(axis=2), self.Wpos.sum(axis=2), 0.0, float(self.lbest.sum()))

    def assign(self, state, j, val):
        fixed, negrem, posrem, pri, pri_rest = state
        fixed = fixed + self.W[:, :, j] if val else fixed
        return (fixed, negrem - self.Wneg[:, :, j], posrem - self.Wpos[:, :, j],
                pri + (self.l1[j] if val else self.l0[j]), pri_rest - self.lbest[j])

    def bound(self, state) -> float:
        fixed, negrem, posrem, pri, pri_rest = state
        amin, amax = fixed + negrem, fixed + posrem
        on = amin >= self.tol_a
        undecided = ~on & (amax >= -self.tol_a)
        omin = self.c + (self.V * on + self.Vneg * undecided).sum(axis=1) - self.tol_o
        omax = self.c + (self.V * on + self.Vpos * undecided).sum(axis=1) + self.tol_o
        reach = (self.ctx_lo < omax[:, None]) & (self.ctx_hi >= omin[:, None])
        fam = np.where(reach, self.log_theta, -np.inf).max(axis=1) if len(self.c) else np.zeros(0)
        return pri + pri_rest + float(fam.sum())


def upper_bound(problem: PboProblem, partial: dict[int, int]) -> float:
    """The solver's bound for the subtree fixing the bits in ``partial``."""
    s = _Search(problem)
    state = s.root_state()
    for j, v in sorted(partial.items()):
        state = s.assign(state, j, v)
    return s.bound(state)


def branching_order(prior) -> list[int]:
    """Bits by decreasing prior log-odds magnitude, ties by index."""
    lo = np.abs(np.log(prior) - np.log1p(-np.asarray(prior)))
    return sorted(range(len(prior)), key=lambda j: (-lo[j], j))


def solve(p: PboProblem, time_budget: float | None = None) -> MpeSolution:
    """Exact MPE by depth-first branch-and-bound.

    Ties go to the lexicographically smallest message.  If ``time_budget``
    (seconds) runs out, the incumbent is returned with ``optimal=False``.
    """
    t0 = time.perf_counter()
    s = _Search(p)
    n = p.n_bits
    order = branching_order(p.prior)
    prefer = [1 if p.prior[j] >= 0.5 else 0 for j in range(n)]
    best_val, best_u = -math.inf, None
    nodes = 0
    timed_out = False
    # entries: (depth, state, bound, values of order[:depth])
    stack = [(0, s.root_state(), None, ())]
    while stack:
        if time_budget is not None and time.perf_counter() - t0 > time_budget:
            timed_out = True
            break
        depth, state, bnd, bits = stack.pop()
        if bnd is None:
            bnd = s.bound(state)
        if bnd < best_val - TIE_SLACK:
            continue
        if depth == n:
            u = [0] * n
            for j, v in zip(order, bits):
                u[j] = v
            cand = tuple(u)
            val = log_joint(p, cand)
            if val > best_val or (val == best_val and cand < best_u):
                best_val, best_u = val, cand
            continue
        nodes += 1
        j = order[depth]
        first = prefer[j]
        for val in (1 - first, first):  # preferred value popped first
            child = s.assign(state, j, val)
            stack.append((depth + 1, child, s.bound(child), bits + (val,)))
    if best_u is None:
        if timed_out:
            raise MpeError("time budget exhausted before any message was evaluated")
        raise MpeError("internal error: no feasible message found")
    return MpeSolution(best_u, best_val, not timed_out, nodes, time.perf_counter() - t0)


def brute_force(p: PboProblem) -> tuple[tuple[int, ...], float]:
    """Exhaustive MPE over all 2^n messages (lexicographic tie-break)."""
    best_val, best_u = -math.inf, None
    for bits in range(2**p.n_bits):
        u = tuple((bits >> (p.n_bits - 1 - j)) & 1 for j in range(p.n_bits))
        val = log_joint(p, u)
        if val > best_val:
            best_val, best_u = val, u
    return best_u, best_val


def _fmt(x: float) -> str:
    return repr(float(x))


def _terms(coefs: dict[str, float]) -> str:
    parts = []
    for v, c in coefs.items():
        sign = "-" if c < 0 else "+"
        parts.append(f"{sign} {_fmt(abs(c))} {v}")
    return " ".join(parts) if parts else "0 u_none"


def export_lp(p: PboProblem, path) -> None:
    """Write the program in CPLEX LP format (objective constant in a comment)."""
    lines = [f"\\ objective constant: {_fmt(p.constant)}", "Maximize"]
    lines.append(f" obj: {_terms(p.objective)}" if p.objective else " obj:")
    lines.append("Subject To")
    for con in p.constraints:
        lines.append(f" {con.name}: {_terms(con.coefs)} {con.sense} {_fmt(con.rhs)}")
    lines.append("Binary")
    for v in p.variables:
        lines.append(f" {v}")
    lines.append("End")
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass
class LpModel:
    objective: dict[str, float]
    constant: float
    constraints: list[Constraint]
    binaries: list[str]


_TERM = re.compile(r"([+-])\s*([0-9.eE+-]+|inf)\s+([A-Za-z_][\w]*)")


def _parse_terms(text: str) -> dict[str, float]:
    text = text.strip()
    if text and text[0] not in "+-":
        text = "+ " + text
    out: dict[str, float] = {}
    pos = 0
    for m in _TERM.finditer(text):
        if text[pos:m.start()].strip():
            raise ValueError(f"cannot parse LP expression near {text[pos:m.start()]!r}")
        val = float(m.group(2)) * (-1.0 if m.group(1) == "-" else 1.0)
        out[m.group(3)] = out.get(m.group(3), 0.0) + val
        pos = m.end()
    if text[pos:].strip():
        raise ValueError(f"cannot parse LP expression near {text[pos:]!r}")
    return out


def read_lp(path) -> LpModel:
    """Parse files written by :func:`export_lp`."""
    section = None
    objective: dict[str, float] = {}
    constant = 0.0
    constraints: list[Constraint] = []
    binaries: list[str] = []
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if line.startswith("\\"):
            m = re.search(r"objective constant:\s*(\S+)", line)
            if m:
                constant = float(m.group(1))
            continue
        if not line:
            continue
        low = line.lower()
        if low in ("maximize", "subject to", "binary", "end"):
            section = low
            continue
        if section == "maximize":
            body = line.split(":", 1)[1]
            objective = {k: v for k, v in _parse_terms(body).items() if k != "u_none"}
        elif section == "subject to":
            name, body = line.split(":", 1)
            m = re.match(r"(.*?)(<=|>=|=)\s*(\S+)$", body)
            coefs = {k: v for k, v in _parse_terms(m.group(1)).items() if k != "u_none"}
            constraints.append(Constraint(name.strip(), coefs, m.group(2), float(m.group(3))))
        elif section == "binary":
            binaries.extend(line.split())
    return LpModel(objective, constant, constraints, binaries)
