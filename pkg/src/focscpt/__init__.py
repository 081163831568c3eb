"""Functional context-specific CPTs: learning, compilation and MPE decoding."""
from .codec import CodeSpec, decode, make_pairs, run_study, train_decoder
from .compile import (LinearThreshold, compile_context, compile_contexts, compile_step_network,
                      compile_threshold, marginal)
from .cpt import (Context, CptColumn, FoCSClassifier, FoCSCpt, cll, estimate_columns, learn_focs,
                  learn_focs_path, learn_threshold)
from .data import DataError, Dataset, FamilyView, count, gen_cardinality, load_csv, save_csv
from .mlp import Mlp, MLPScorer, StepNetwork, TrainConfig, to_step, train
from .mpe import brute_force, encode, solve
from .obdd import BddManager, NodeBudgetExceeded, Obdd, wmc
from .tree import TreeCPTClassifier, TreeCpt, learn_tree, tree_cll

__all__ = [
    "BddManager", "CodeSpec", "Context", "CptColumn", "DataError", "Dataset", "FamilyView",
    "FoCSClassifier", "FoCSCpt", "LinearThreshold", "MLPScorer", "Mlp", "NodeBudgetExceeded",
    "Obdd", "StepNetwork", "TrainConfig", "TreeCPTClassifier", "TreeCpt", "brute_force", "cll",
    "compile_context", "compile_contexts", "compile_step_network", "compile_threshold", "count",
    "decode", "encode", "estimate_columns", "gen_cardinality", "learn_focs", "learn_focs_path",
    "learn_threshold", "learn_tree", "load_csv", "make_pairs", "marginal", "run_study",
    "save_csv", "solve", "to_step", "train", "train_decoder", "tree_cll", "wmc",
]
__version__ = "0.1.0"
