"""Learning to decode a cyclic parity code sent over a binary symmetric channel.

Each codeword bit is the parity of ``window`` consecutive message bits
(indices wrap around).  A FoCS CPT is learned for every codeword bit from
message/received pairs, and decoding is an MPE query over the message.
"""
from __future__ import annotations

import csv
import io
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import mlp as mlp_mod
from .cpt import FoCSCpt, learn_focs
from .data import Dataset, FamilyView
from .mlp import TrainConfig
from .mpe import MpeSolution, encode as mpe_encode, solve

logger = logging.getLogger(__name__)

DECODER_CONFIG = TrainConfig(hidden_units=8, hidden_activation="sigmoid", epochs=1500,
                             learning_rate=0.05, batch_size=None, seed=0, optimizer="adam")


@dataclass(frozen=True)
class CodeSpec:
    n: int
    window: int = 3
    flip_prob: float = 0.05
    prior_p: float = 0.8

    def __post_init__(self):
        if not 1 <= self.window <= self.n:
            raise ValueError("window must lie in [1, n]")
        if not 0.0 <= self.flip_prob < 0.5:
            raise ValueError("flip_prob must lie in [0, 0.5)")
        if not 0.0 < self.prior_p < 1.0:
            raise ValueError("prior_p must lie in (0, 1)")


def encode(u, spec: CodeSpec) -> np.ndarray:
    """Codeword bits ``x_i = u_i ^ u_{i+1} ^ ... ^ u_{i+w-1}`` (mod n indices).

    Accepts one message or a 2-D batch of messages.
    """
    u = np.asarray(u, dtype=np.uint8)
    if u.shape[-1] != spec.n:
        raise ValueError(f"message must have {spec.n} bits")
    x = np.zeros_like(u)
    for s in range(spec.window):
        x ^= np.roll(u, -s, axis=-1)
    return x


def channel(x, flip_prob: float, seed=None) -> np.ndarray:
    """Flip each bit independently with probability ``flip_prob``."""
    x = np.asarray(x, dtype=np.uint8)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    flips = rng.random(x.shape) < flip_prob
    return x ^ flips.astype(np.uint8)


@dataclass(frozen=True)
class Pairs:
    spec: CodeSpec
    messages: np.ndarray   # (count, n)
    received: np.ndarray   # (count, n), after the channel
    dataset: Dataset

    def views(self) -> list[FamilyView]:
        """One family per received bit ``X_i`` with parents ``U_0..U_{n-1}``."""
        n = self.spec.n
        return [FamilyView(n + i, tuple(range(n)), self.dataset) for i in range(n)]

    def take(self, rows) -> "Pairs":
        rows = np.asarray(rows, dtype=np.intp)
        return Pairs(self.spec, self.messages[rows], self.received[rows], self.dataset.take(rows))


def make_pairs(spec: CodeSpec, count: int, seed: int) -> Pairs:
    """Sample ``count`` messages, encode them, pass them through the channel."""
    if count < 1:
        raise ValueError("count must be positive")
    msg_rng, chan_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2))
    u = (msg_rng.random((count, spec.n)) < spec.prior_p).astype(np.uint8)
    y = channel(encode(u, spec), spec.flip_prob, chan_rng)
    names = [f"U{i}" for i in range(spec.n)] + [f"X{i}" for i in range(spec.n)]
    return Pairs(spec, u, y, Dataset(names, np.column_stack([u, y])))


def train_decoder(pairs: Pairs, cfg: TrainConfig = DECODER_CONFIG,
                  max_contexts: int = 2) -> list[FoCSCpt]:
    """One FoCS CPT per received bit: MLP, step conversion, threshold learning."""
    models = []
    for i, view in enumerate(pairs.views()):
        bit_cfg = TrainConfig(cfg.hidden_units, cfg.hidden_activation, cfg.epochs,
                              cfg.learning_rate, cfg.batch_size, cfg.seed + i,
                              cfg.optimizer, cfg.momentum)
        net = mlp_mod.to_step(mlp_mod.train(view, bit_cfg))
        models.append(learn_focs(view, net, max_contexts, min_gain=-math.inf))
    return models


def decode(x, models: list[FoCSCpt], prior_p: float,
           time_budget: float | None = None) -> MpeSolution:
    """Most probable message given the received bits ``x``."""
    x = [int(b) for b in x]
    if len(x) != len(models):
        raise ValueError("one model per received bit is required")
    n = models[0].scorer.n_inputs if models else len(x)
    problem = mpe_encode([(m, xi) for m, xi in zip(models, x)], prior_p, n_bits=n)
    return solve(problem, time_budget)


@dataclass
class Metrics:
    word_accuracy: float
    word_std: float
    bit_accuracy: float
    bit_std: float
    hamming_error: float
    hamming_std: float
    seconds: float
    seconds_std: float
    folds: list[dict] = field(default_factory=list)
    suboptimal: int = 0

    CSV_FIELDS = ("n", "window", "flip_prob", "count", "word_acc", "word_std", "bit_acc",
                  "bit_std", "hamming", "hamming_std", "seconds", "seconds_std")

    def csv_row(self, spec: CodeSpec, count: int) -> list:
        return [spec.n, spec.window, spec.flip_prob, count, self.word_accuracy, self.word_std,
                self.bit_accuracy, self.bit_std, self.hamming_error, self.hamming_std,
                self.seconds, self.seconds_std]

    def to_csv(self, spec: CodeSpec, count: int, header: bool = True) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if header:
            w.writerow(self.CSV_FIELDS)
        w.writerow([f"{v:.6g}" if isinstance(v, float) else v for v in self.csv_row(spec, count)])
        return buf.getvalue()


def fold_indices(count: int, folds: int, seed: int) -> list[np.ndarray]:
    """Contiguous blocks of a seeded permutation."""
    if not 2 <= folds <= count:
        raise ValueError("need 2 <= folds <= count")
    perm = np.random.default_rng(seed).permutation(count)
    return np.array_split(perm, folds)


def evaluate_fold(pairs: Pairs, test_rows, cfg: TrainConfig, time_budget=None) -> dict:
    train_rows = np.setdiff1d(np.arange(len(pairs.messages)), test_rows)
    models = train_decoder(pairs.take(train_rows), cfg)
    n = pairs.spec.n
    cache: dict[tuple, MpeSolution] = {}
    correct_words = correct_bits = 0
    seconds = []
    suboptimal = 0
    for r in test_rows:
        key = tuple(int(b) for b in pairs.received[r])
        sol = cache.get(key)
        if sol is None:
            sol = decode(key, models, pairs.spec.prior_p, time_budget)
            cache[key] = sol
            suboptimal += not sol.optimal
        seconds.append(sol.seconds)
        hits = int(np.sum(np.array(sol.u) == pairs.messages[r]))
        correct_bits += hits
        correct_words += hits == n
    m = len(test_rows)
    bit_acc = correct_bits / (m * n)
    return {"word_accuracy": correct_words / m, "bit_accuracy": bit_acc,
            "hamming_error": n * (1.0 - bit_acc), "seconds": float(np.mean(seconds)),
            "instances": m, "distinct": len(cache), "suboptimal": suboptimal}


def _fold_job(args):
    spec, count, seed, test_rows, cfg, time_budget = args
    return evaluate_fold(make_pairs(spec, count, seed), test_rows, cfg, time_budget)


def run_study(spec: CodeSpec, count: int = 2**14, folds: int = 5, seed: int = 0,
              cfg: TrainConfig = DECODER_CONFIG, threads: int = 1,
              time_budget: float | None = None) -> Metrics:
    """k-fold learn-to-decode experiment; returns fold means and std-devs."""
    pairs = make_pairs(spec, count, seed)
    splits = fold_indices(count, folds, seed + 1)
    if threads > 1:
        jobs = [(spec, count, seed, rows, cfg, time_budget) for rows in splits]
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_fold_job, jobs))
    else:
        results = []
        for k, rows in enumerate(splits):
            t0 = time.perf_counter()
            results.append(evaluate_fold(pairs, rows, cfg, time_budget))
            logger.info("fold %d/%d done in %.1fs: %s", k + 1, folds,
                        time.perf_counter() - t0, results[-1])

    def agg(key):
        vals = np.array([r[key] for r in results])
        return float(vals.mean()), float(vals.std(ddof=1)) if len(vals) > 1 else 0.0

    wa, ws = agg("word_accuracy")
    ba, bs = agg("bit_accuracy")
    he, hs = agg("hamming_error")
    sec, ss = agg("seconds")
    return Metrics(wa, ws, ba, bs, he, hs, sec, ss, results,
                   sum(r["suboptimal"] for r in results))
