"""Multi-intent translation GNN for basket recommendation.

Baskets are first-class graph nodes that emit several latent intent
embeddings, built as translations of the basket embedding by relation
vectors aggregated from the owner and member items. Intents propagate
through a tripartite user/basket/item graph; training is pairwise
ranking on implicit feedback, and cold baskets are scored by inferring
their embeddings from the owner plus seed items.
"""

from .errors import ConfigError, DataError, NumericError, ShapeError
from .graph import (BasketGraph, DataSplit, EntityId, InteractionRecord,
                    TestCase, build_graph, filter_records, load_graph,
                    load_interactions, save_graph, split_inductive,
                    split_transductive, write_split)
from .training import (ModelParams, TrainConfig, TrainResult, bprmf_baseline,
                       load_checkpoint, save_checkpoint, train,
                       transductive_scorer)
from .inductive import InductiveScorer
from .evaluation import DEFAULT_K_SET, MetricReport, evaluate
from .synth import SynthSpec, generate, intent_separation, synth_graph

__version__ = "0.1.0"

__all__ = [
    "BasketGraph", "ConfigError", "DataError", "DataSplit", "DEFAULT_K_SET",
    "EntityId", "InductiveScorer", "InteractionRecord", "MetricReport",
    "ModelParams", "NumericError", "ShapeError", "SynthSpec", "TestCase",
    "TrainConfig", "TrainResult", "bprmf_baseline", "build_graph", "evaluate",
    "filter_records", "generate", "intent_separation", "load_checkpoint",
    "load_graph", "load_interactions", "save_checkpoint", "save_graph",
    "split_inductive", "split_transductive", "synth_graph", "train",
    "transductive_scorer", "write_split",
]
