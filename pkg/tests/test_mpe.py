import itertools
import math

import numpy as np
import pytest

from focscpt.cpt import Context, CptColumn, FoCSCpt
from focscpt.mlp import Layer, StepNetwork
from focscpt.mpe import (Family, MpeError, brute_force, encode, export_lp, full_assignment,
                         log_joint, read_lp, solve, upper_bound)

from oracles import random_mpe_problem


def identity_cpt(n, cut, p_lo, p_hi):
    """Context on the number of active inputs: ``count <= cut`` vs ``> cut``."""
    net = StepNetwork((Layer(np.eye(n), np.full(n, -0.5), "step"),
                       Layer([np.ones(n)], [0.0], "identity")))
    return FoCSCpt(net, (Context(-math.inf, cut), Context(cut, math.inf)),
                   (CptColumn(p_lo), CptColumn(p_hi)))


class TestOracle:
    @pytest.mark.parametrize("seed", range(120))
    def test_matches_brute_force(self, seed):
        p = random_mpe_problem(np.random.default_rng(seed))
        sol = solve(p)
        u, val = brute_force(p)
        assert sol.optimal
        assert sol.u == u
        assert sol.logp == pytest.approx(val, abs=1e-9)

    @pytest.mark.parametrize("seed", range(30))
    def test_program_agrees_with_model(self, seed):
        p = random_mpe_problem(np.random.default_rng(1000 + seed), n_max=8)
        for u in itertools.product((0, 1), repeat=p.n_bits):
            a = full_assignment(p, u)
            assert p.violations(a) == []
            assert p.objective_value(a) == pytest.approx(log_joint(p, u), abs=1e-9)

    @pytest.mark.parametrize("seed", range(20))
    def test_bound_is_admissible(self, seed):
        rng = np.random.default_rng(2000 + seed)
        p = random_mpe_problem(rng, n_max=8)
        n = p.n_bits
        for _ in range(5):
            fixed = rng.choice(n, size=int(rng.integers(0, n + 1)), replace=False)
            partial = {int(j): int(rng.integers(0, 2)) for j in fixed}
            free = [j for j in range(n) if j not in partial]
            best = -math.inf
            for vals in itertools.product((0, 1), repeat=len(free)):
                u = [0] * n
                for j, v in partial.items():
                    u[j] = v
                for j, v in zip(free, vals):
                    u[j] = v
                best = max(best, log_joint(p, u))
            assert upper_bound(p, partial) >= best - 1e-9

    def test_eps_doubling_keeps_solution(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            p = random_mpe_problem(rng, n_max=8)
            q = encode(p.families, p.prior, eps=2 * p.eps)
            a, b = solve(p), solve(q)
            assert a.u == b.u and a.logp == b.logp
            assert q.violations(full_assignment(q, b.u)) == []


class TestSmallCases:
    def test_prior_only(self):
        p = encode([], [0.8] * 6)
        sol = solve(p)
        assert sol.u == (1,) * 6
        assert sol.logp == pytest.approx(6 * math.log(0.8), abs=1e-12)
        assert sol.nodes <= 6

    def test_mixed_prior_only(self):
        sol = solve(encode([], [0.3, 0.9, 0.5]))
        # the fair bit ties; the lexicographically smaller message wins
        assert sol.u == (0, 1, 0)

    def test_evidence_overrides_prior(self):
        # x is very likely 1 only when at most one bit is on
        cpt = identity_cpt(3, 1.5, 0.99, 0.01)
        sol = solve(encode([Family(cpt, 1, (0, 1, 2))], [0.6] * 3))
        assert sum(sol.u) <= 1
        assert sol.u == brute_force(encode([Family(cpt, 1, (0, 1, 2))], [0.6] * 3))[0]

    def test_tuple_families(self):
        cpt = identity_cpt(2, 0.5, 0.1, 0.9)
        p = encode([(cpt, 0)], [0.7, 0.7])
        assert p.families[0].parents == (0, 1)
        assert solve(p).u == (0, 0)

    def test_time_budget_zero(self):
        p = random_mpe_problem(np.random.default_rng(3))
        with pytest.raises(MpeError):
            solve(p, time_budget=-1.0)

    @pytest.mark.parametrize("prior", [[0.0, 0.5], [0.5, 1.0]])
    def test_degenerate_prior(self, prior):
        with pytest.raises(MpeError):
            encode([], prior)

    def test_family_validation(self, fig1_net):
        cont = FoCSCpt(fig1_net, (Context(-math.inf, math.inf),), (CptColumn(0.5),))
        with pytest.raises(MpeError):
            encode([(cont, 1)], [0.5, 0.5])
        cpt = identity_cpt(2, 0.5, 0.1, 0.9)
        with pytest.raises(MpeError):
            encode([Family(cpt, 1, (0, 5))], [0.5, 0.5])
        with pytest.raises(MpeError):
            encode([Family(cpt, 2, (0, 1))], [0.5, 0.5])
        with pytest.raises(MpeError):
            encode([Family(cpt, 1, (0,))], [0.5, 0.5])


class TestEncoding:
    def test_variable_names_stable(self):
        cpt = identity_cpt(3, 1.5, 0.2, 0.7)
        p = encode([Family(cpt, 1, (0, 1, 2)), Family(cpt, 0, (2, 1, 0))], [0.4] * 3)
        assert p.variables == ["u0", "u1", "u2", "h0_0", "h0_1", "h0_2", "z0_0", "z0_1",
                               "h1_0", "h1_1", "h1_2", "z1_0", "z1_1"]
        names = [c.name for c in p.constraints]
        assert len(names) == len(set(names))
        assert "one0" in names and "one1" in names

    def test_lp_round_trip(self, tmp_path):
        p = random_mpe_problem(np.random.default_rng(11))
        export_lp(p, tmp_path / "m.lp")
        lp = read_lp(tmp_path / "m.lp")
        assert lp.binaries == p.variables
        assert lp.objective == p.objective
        assert lp.constant == p.constant
        assert [(c.name, c.coefs, c.sense, c.rhs) for c in lp.constraints] == \
            [(c.name, c.coefs, c.sense, c.rhs) for c in p.constraints]
        export_lp(p, tmp_path / "again.lp")
        assert (tmp_path / "m.lp").read_text() == (tmp_path / "again.lp").read_text()

    def test_lp_text(self, tmp_path):
        export_lp(encode([Family(identity_cpt(1, 0.5, 0.2, 0.7), 1, (0,))], [0.5]), tmp_path / "s.lp")
        text = (tmp_path / "s.lp").read_text().splitlines()
        assert text[1:3] == ["Maximize", text[2]] and text[2].startswith(" obj: ")
        assert "Subject To" in text and "Binary" in text and text[-1] == "End"

    @pytest.mark.parametrize("seed", range(10))
    def test_milp_reference(self, tmp_path, seed):
        milp = pytest.importorskip("scipy.optimize").milp
        from scipy.optimize import Bounds, LinearConstraint

        base = random_mpe_problem(np.random.default_rng(500 + seed), n_max=8)
        # HiGHS accepts z = 1 - 1e-6, which times big-M swamps eps = 1e-6; a
        # wider margin keeps the reference honest when the instance allows it
        p = encode(base.families, base.prior, eps=1e-3)
        for u in itertools.product((0, 1), repeat=p.n_bits):
            assert p.violations(full_assignment(p, u)) == []
        export_lp(p, tmp_path / "m.lp")
        lp = read_lp(tmp_path / "m.lp")
        idx = {v: i for i, v in enumerate(lp.binaries)}
        c = np.zeros(len(idx))
        for v, w in lp.objective.items():
            c[idx[v]] = -w
        A = np.zeros((len(lp.constraints), len(idx)))
        lb = np.full(len(lp.constraints), -np.inf)
        ub = np.full(len(lp.constraints), np.inf)
        for r, con in enumerate(lp.constraints):
            for v, w in con.coefs.items():
                A[r, idx[v]] = w
            if con.sense in ("<=", "="):
                ub[r] = con.rhs
            if con.sense in (">=", "="):
                lb[r] = con.rhs
        res = milp(c, constraints=LinearConstraint(A, lb, ub) if len(A) else None,
                   integrality=np.ones(len(idx)), bounds=Bounds(0, 1),
                   options={"mip_rel_gap": 0})
        assert res.status == 0
        assert lp.constant - res.fun == pytest.approx(solve(p).logp, abs=1e-6)


def test_solution_json():
    sol = solve(encode([], [0.7, 0.2]))
    obj = sol.to_json()
    assert obj["u"] == [1, 0] and obj["optimal"] is True
