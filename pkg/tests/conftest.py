import math

import numpy as np
import pytest

from focscpt.cpt import Context, CptColumn, FoCSCpt, estimate_columns
from focscpt.data import Dataset
from focscpt.mlp import Layer, Mlp, StepNetwork, sigmoid

# Figure 1(a): rows d1..d5 over (U1, U2, X)
FIG1_ROWS = [(0, 0, 1), (1, 0, 0), (1, 1, 0), (0, 1, 1), (1, 1, 1)]


@pytest.fixture
def fig1():
    return Dataset(["U1", "U2", "X"], FIG1_ROWS).family("X")


@pytest.fixture
def fig1_net():
    """f(u1, u2) = sigmoid(6 u1 u2 - 4 u1 - 3 u2 + 2) as a ReLU MLP.

    Hidden units compute u1*u2, u1 and u2 exactly on binary inputs.
    """
    hidden = Layer([[1.0, 1.0], [1.0, 0.0], [0.0, 1.0]], [-1.0, 0.0, 0.0], "relu")
    out = Layer([[6.0, -4.0, -3.0]], [2.0], "sigmoid")
    return Mlp((hidden, out))


def random_step_net(rng, n_in, n_hidden, scale=2.0):
    hidden = Layer(rng.normal(0, scale, (n_hidden, n_in)), rng.normal(0, scale, n_hidden), "step")
    out = Layer(rng.normal(0, scale, (1, n_hidden)), rng.normal(0, 1.0, 1), "identity")
    return StepNetwork((hidden, out))


def all_inputs(n):
    return np.array([[(b >> (n - 1 - i)) & 1 for i in range(n)] for b in range(2**n)], dtype=float)


def random_focs(rng, n_in, n_hidden, k):
    """Step-network FoCS CPT with k contexts cut at observed output values."""
    net = random_step_net(rng, n_in, n_hidden)
    outs = np.unique(net.output(all_inputs(n_in)))
    cuts = sorted(rng.choice(outs[:-1], size=min(k - 1, len(outs) - 1), replace=False)) \
        if len(outs) > 1 else []
    bounds = [-math.inf, *[float(c) for c in cuts], math.inf]
    ctxs = tuple(Context(a, b) for a, b in zip(bounds, bounds[1:]))
    cols = tuple(CptColumn(float(p)) for p in rng.uniform(0.02, 0.98, len(ctxs)))
    return FoCSCpt(net, ctxs, cols, "X", tuple(f"U{i}" for i in range(n_in)))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


__all__ = ["FIG1_ROWS", "random_step_net", "all_inputs", "random_focs", "sigmoid",
           "estimate_columns"]
