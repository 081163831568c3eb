"""``focs`` command line: data generation, learning, evaluation, compilation, MPE.

Exit status is 0 on success, 1 for invalid input and 2 when a node or time
budget runs out.  ``--seed`` and ``--threads`` fall back to the ``FOCS_SEED``
and ``FOCS_THREADS`` environment variables, then to built-in defaults.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import codec, mlp
from .compile import compile_contexts, marginal, obdd_stats
from .cpt import FoCSCpt, cll, learn_focs, learn_focs_path, save_cpt
from .data import DataError, gen_cardinality, load_csv, save_csv, train_test_split
from .mlp import TrainConfig
from .mpe import Family, MpeError, encode, export_lp, solve
from .obdd import DEFAULT_NODE_BUDGET, NodeBudgetExceeded
from .tree import TreeCpt, leaf_count, learn_tree, save_tree, tree_cll

logger = logging.getLogger("focscpt")

EXIT_OK, EXIT_INVALID, EXIT_BUDGET = 0, 1, 2


class BudgetExhausted(RuntimeError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _env_int(name: str, default: int) -> int:
    raw = os.environ.get(name)
    if raw is None or raw == "":
        return default
    try:
        return int(raw)
    except ValueError:
        raise DataError(f"environment variable {name} must be an integer, got {raw!r}") from None


def _seed(args) -> int:
    return args.seed if args.seed is not None else _env_int("FOCS_SEED", 0)


def _threads(args) -> int:
    return args.threads if args.threads is not None else _env_int("FOCS_THREADS", 1)


def _fmt(x: float) -> str:
    return f"{x:.10g}"


def _write_json(obj, path):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _load_json(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise DataError(f"{path}: malformed JSON ({e})") from None


def _load_model(path):
    """A FoCS CPT, tree CPT or bare MLP, by the keys of the JSON object."""
    obj = _load_json(path)
    try:
        if "contexts" in obj:
            return FoCSCpt.from_json(obj, base=Path(path).parent)
        if "root" in obj:
            return TreeCpt.from_json(obj)
        if "layers" in obj:
            return mlp.from_json(obj)
    except (KeyError, TypeError) as e:
        raise DataError(f"{path}: malformed model ({e})") from None
    raise DataError(f"{path}: not a FoCS, tree or MLP model")


def _load_cpt(path) -> FoCSCpt:
    model = _load_model(path)
    if not isinstance(model, FoCSCpt):
        raise DataError(f"{path}: expected a FoCS CPT")
    return model


def _family(path, child, parents=None):
    data = load_csv(path)
    return data.family(child, parents)


def _ncll(view, model) -> float:
    """Mean negated conditional log-likelihood per record."""
    if isinstance(model, FoCSCpt):
        total = cll(view, model)
    elif isinstance(model, TreeCpt):
        total = tree_cll(view, model)
    else:
        total = -mlp.cross_entropy(model, view.X, view.y, view.w) * view.total_weight
    return -total / view.total_weight


def _parse_prior(text: str, n: int) -> np.ndarray:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise DataError(f"prior must be a number or comma list, got {text!r}") from None
    if len(vals) == 1:
        vals = vals * n
    if len(vals) != n:
        raise DataError(f"prior lists {len(vals)} values for {n} variables")
    return np.array(vals)


def _parse_bits(text: str) -> list[int]:
    raw = text.replace(",", "").strip()
    if not raw or any(c not in "01" for c in raw):
        raise DataError(f"evidence must be a 0/1 string, got {text!r}")
    return [int(c) for c in raw]


# ---------------------------------------------------------------- commands

def cmd_gen_synth(args):
    view = gen_cardinality(args.n, args.k, args.count, _seed(args))
    save_csv(view, args.out)


def cmd_gen_code(args):
    spec = codec.CodeSpec(args.n, args.window, args.flip_prob, args.prior)
    save_csv(codec.make_pairs(spec, args.count, _seed(args)).dataset, args.out)


def cmd_train_mlp(args):
    view = load_csv(args.data, args.child)
    cfg = TrainConfig(args.hidden, args.activation, args.epochs, args.lr,
                      None if args.batch_size <= 0 else args.batch_size, _seed(args),
                      args.optimizer)
    net = mlp.train(view, cfg)
    if args.step:
        net = mlp.to_step(net)
    mlp.save_model(net, args.out)
    logger.info("final training loss %.6f", net.loss_curve[-1] if net.loss_curve else float("nan"))


def cmd_learn_focs(args):
    view = load_csv(args.data, args.child)
    net = mlp.load_model(args.mlp)
    if args.step:
        net = mlp.to_step(net)
    if net.n_inputs != len(view.parents):
        raise DataError(f"scorer takes {net.n_inputs} inputs, data has {len(view.parents)} parents")
    validation = None
    if args.val_frac > 0:
        view, validation = train_test_split(view, args.val_frac, _seed(args))
    cpt = learn_focs(view, net, args.max_contexts, args.min_gain, validation)
    save_cpt(cpt, args.out)
    logger.info("learned %d contexts", cpt.k)


def cmd_learn_tree(args):
    tree = learn_tree(load_csv(args.data, args.child), args.max_depth)
    save_tree(tree, args.out)
    logger.info("learned %d leaves", leaf_count(tree))


def cmd_eval(args):
    model = _load_model(args.model)
    parents = getattr(model, "parents", None) or None
    view = _family(args.data, args.child, parents)
    print(_fmt(_ncll(view, model)))


def cmd_curve(args):
    full = load_csv(args.data, args.child)
    raw = mlp.load_model(args.mlp)
    net = mlp.to_step(raw) if args.step else raw
    if args.test_frac > 0:
        train, test = train_test_split(full, args.test_frac, _seed(args))
    else:
        train = test = full
    path = learn_focs_path(train, net, args.max_contexts, min_gain=-math.inf)
    trees = []  # (leaves, tree) for increasing depth bounds
    for d in range(len(train.parents) + 1):
        t = learn_tree(train, d)
        if trees and leaf_count(t) == trees[-1][0]:
            break
        trees.append((leaf_count(t), t))
        if leaf_count(t) >= args.max_contexts:
            break
    mlp_ncll = _ncll(test, raw)
    out = sys.stdout if args.out is None else open(args.out, "w", newline="")
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["contexts", "focs_ncll", "tree_ncll", "mlp_ncll"])
        for c in range(1, args.max_contexts + 1):
            focs = path[min(c, len(path)) - 1]
            tree = max((t for n, t in trees if n <= c), key=leaf_count)
            w.writerow([c, _fmt(_ncll(test, focs)), _fmt(_ncll(test, tree)), _fmt(mlp_ncll)])
    finally:
        if out is not sys.stdout:
            out.close()


def cmd_compile(args):
    cpt = _load_cpt(args.model)
    ds = compile_contexts(cpt, args.node_budget)
    if args.out_dot:
        names = list(cpt.parents) or None
        Path(args.out_dot).write_text("".join(d.to_dot(names, f"context{i}") for i, d in enumerate(ds)))
    rows = []
    for i, (ctx, d) in enumerate(zip(cpt.contexts, ds)):
        rows.append({"context": i, "lo": _json_num(ctx.lo), "hi": _json_num(ctx.hi),
                     **obdd_stats(d)})
    if args.stats:
        _write_json(rows, None)
    else:
        for r in rows:
            print(f"context {r['context']} ({r['lo']}, {r['hi']}]: {r['nodes']} nodes, "
                  f"{r['models']} models")


def _json_num(x: float):
    return x if math.isfinite(x) else ("+inf" if x > 0 else "-inf")


def cmd_marginal(args):
    cpt = _load_cpt(args.model)
    prior = _parse_prior(args.prior, cpt.scorer.n_inputs)
    px, masses = marginal(cpt, prior, compile_contexts(cpt, args.node_budget))
    _write_json({"px": px, "masses": masses}, None)


def cmd_mpe(args):
    cpts = [_load_cpt(p) for p in args.models]
    evidence = _parse_bits(args.evidence)
    if len(evidence) != len(cpts):
        raise DataError(f"{len(evidence)} evidence bits for {len(cpts)} models")
    names: list[str] = []
    for cpt in cpts:
        if not cpt.parents:
            raise DataError("models must name their parents")
        for p in cpt.parents:
            if p not in names:
                names.append(p)
    fams = [Family(c, x, tuple(names.index(p) for p in c.parents)) for c, x in zip(cpts, evidence)]
    problem = encode(fams, _parse_prior(args.prior, len(names)), n_bits=len(names))
    if args.export_lp:
        export_lp(problem, args.export_lp)
    sol = solve(problem, args.time_budget)
    _write_json({"names": names, "u": list(sol.u), "logp": sol.logp,
                 "optimal": sol.optimal, "nodes": sol.nodes}, None)
    if not sol.optimal:
        raise BudgetExhausted("time budget exhausted; reported message may not be optimal")


def cmd_study_coding(args):
    spec = codec.CodeSpec(args.n, args.window, args.flip_prob, args.prior)
    d = codec.DECODER_CONFIG
    cfg = TrainConfig(args.hidden, d.hidden_activation, args.epochs, d.learning_rate,
                      d.batch_size, _seed(args), d.optimizer)
    m = codec.run_study(spec, args.count, args.folds, _seed(args), cfg, _threads(args),
                        args.time_budget)
    text = m.to_csv(spec, args.count)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if m.suboptimal:
        raise BudgetExhausted(f"{m.suboptimal} decodes hit the time budget")


# ----------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="focs", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def seeded(sp):
        sp.add_argument("--seed", type=int, default=None, help="default: $FOCS_SEED or 0")

    gen = sub.add_parser("gen", help="generate datasets").add_subparsers(
        dest="what", required=True, parser_class=_Parser)
    g = gen.add_parser("synth", help="cardinality benchmark")
    g.add_argument("--n", type=int, default=16)
    g.add_argument("--k", type=int, default=2)
    g.add_argument("--count", type=int, default=10000)
    g.add_argument("--out", required=True)
    seeded(g)
    g.set_defaults(func=cmd_gen_synth)

    g = gen.add_parser("code", help="message/received pairs of the parity code")
    g.add_argument("--n", type=int, default=10)
    g.add_argument("--window", type=int, default=3)
    g.add_argument("--flip-prob", type=float, default=0.05)
    g.add_argument("--prior", type=float, default=0.8)
    g.add_argument("--count", type=int, default=2**14)
    g.add_argument("--out", required=True)
    seeded(g)
    g.set_defaults(func=cmd_gen_code)

    train = sub.add_parser("train", help="train a scorer").add_subparsers(
        dest="what", required=True, parser_class=_Parser)
    t = train.add_parser("mlp")
    t.add_argument("--data", required=True)
    t.add_argument("--child", required=True)
    t.add_argument("--hidden", type=int, default=16)
    t.add_argument("--activation", choices=("relu", "sigmoid"), default="relu")
    t.add_argument("--epochs", type=int, default=100)
    t.add_argument("--lr", type=float, default=0.05)
    t.add_argument("--batch-size", type=int, default=64, help="0 for full batch")
    t.add_argument("--optimizer", choices=("momentum", "adam"), default="momentum")
    t.add_argument("--step", action="store_true", help="save the step-network conversion")
    t.add_argument("--out", required=True)
    seeded(t)
    t.set_defaults(func=cmd_train_mlp)

    learn = sub.add_parser("learn", help="learn a CPT").add_subparsers(
        dest="what", required=True, parser_class=_Parser)
    lf = learn.add_parser("focs")
    lf.add_argument("--data", required=True)
    lf.add_argument("--child", required=True)
    lf.add_argument("--mlp", required=True)
    lf.add_argument("--max-contexts", type=int, default=2)
    lf.add_argument("--min-gain", type=float, default=0.0, help="nats per record")
    lf.add_argument("--val-frac", type=float, default=0.0)
    lf.add_argument("--step", action="store_true", help="threshold the step conversion")
    lf.add_argument("--out", required=True)
    seeded(lf)
    lf.set_defaults(func=cmd_learn_focs)

    lt = learn.add_parser("tree")
    lt.add_argument("--data", required=True)
    lt.add_argument("--child", required=True)
    lt.add_argument("--max-depth", type=int, default=3)
    lt.add_argument("--out", required=True)
    lt.set_defaults(func=cmd_learn_tree)

    e = sub.add_parser("eval", help="negated CLL per record")
    e.add_argument("--data", required=True)
    e.add_argument("--child", required=True)
    e.add_argument("--model", required=True)
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("curve", help="contexts vs negated CLL for FoCS, tree and MLP")
    c.add_argument("--data", required=True)
    c.add_argument("--child", required=True)
    c.add_argument("--mlp", required=True)
    c.add_argument("--max-contexts", type=int, default=8)
    c.add_argument("--test-frac", type=float, default=0.0)
    c.add_argument("--step", action="store_true")
    c.add_argument("--out")
    seeded(c)
    c.set_defaults(func=cmd_curve)

    co = sub.add_parser("compile", help="compile contexts to OBDDs")
    co.add_argument("--model", required=True)
    co.add_argument("--out-dot")
    co.add_argument("--stats", action="store_true", help="JSON statistics")
    co.add_argument("--node-budget", type=int, default=DEFAULT_NODE_BUDGET)
    co.set_defaults(func=cmd_compile)

    ma = sub.add_parser("marginal", help="Pr(x=1) under a factorized prior")
    ma.add_argument("--model", required=True)
    ma.add_argument("--prior", default="0.5", help="one value or a comma list")
    ma.add_argument("--node-budget", type=int, default=DEFAULT_NODE_BUDGET)
    ma.set_defaults(func=cmd_marginal)

    mp = sub.add_parser("mpe", help="most probable parents given observed children")
    mp.add_argument("--models", nargs="+", required=True)
    mp.add_argument("--evidence", required=True, help="observed children, e.g. 0110")
    mp.add_argument("--prior", default="0.5")
    mp.add_argument("--export-lp")
    mp.add_argument("--time-budget", type=float, default=None, help="seconds")
    mp.set_defaults(func=cmd_mpe)

    study = sub.add_parser("study", help="experiments").add_subparsers(
        dest="what", required=True, parser_class=_Parser)
    s = study.add_parser("coding", help="learn-to-decode cross validation")
    s.add_argument("--n", type=int, default=10)
    s.add_argument("--window", type=int, default=3)
    s.add_argument("--flip-prob", type=float, default=0.05)
    s.add_argument("--prior", type=float, default=0.8)
    s.add_argument("--count", type=int, default=2**14)
    s.add_argument("--folds", type=int, default=5)
    s.add_argument("--hidden", type=int, default=codec.DECODER_CONFIG.hidden_units)
    s.add_argument("--epochs", type=int, default=codec.DECODER_CONFIG.epochs)
    s.add_argument("--time-budget", type=float, default=None, help="seconds per decode")
    s.add_argument("--threads", type=int, default=None, help="default: $FOCS_THREADS or 1")
    s.add_argument("--out")
    seeded(s)
    s.set_defaults(func=cmd_study_coding)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (NodeBudgetExceeded, BudgetExhausted) as e:
        print(f"focs: {e}", file=sys.stderr)
        return EXIT_BUDGET
    except (DataError, MpeError, ValueError, TypeError, OSError) as e:
        print(f"focs: error: {e}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
