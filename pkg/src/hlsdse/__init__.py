"""Desk-scale HLS design space exploration.

A multimodal QoR predictor (cooperative graph encoder fused with text
embeddings through multi-head attention) plus an LLM-as-optimizer pragma
search loop, trained and evaluated against a deterministic synthetic oracle
in place of an FPGA toolchain.
"""

__version__ = "0.1.0"

from .cdfg import Cdfg, KernelDescription, build_cdfg, encode_node_features, \
    export_graph, import_graph, insert_pragma_nodes, split_edges_by_direction
from .designspace import BehavioralDescription, DesignConfiguration, DesignSpace, \
    PragmaDirective, enumerate_space, merge, neighbor, sample_random
from .dataset import Dataset, GraphTextSample, TargetScaler, gen_dataset, \
    load_dataset, save_dataset
from .ecognn import EcognnEncoder, GraphBatch
from .explore import DseConfig, LlmBackendSpec, MutationMockBackend, OracleEvaluator, \
    PeodsePrompt, ReplayBackend, build_prompt, parse_solutions, random_baseline, \
    run_llm4dse, sa_baseline
from .model import MpmModel, TrainConfig, mape, per_target_rmse, rmse, split_dataset, \
    train
from .oracle import OracleKernelModel, QorMetrics, evaluate
from .pareto import ParetoArchive, adrs, dominates, reference_front
from .textembed import EmbeddingCache, HashedTextProvider, LayerClsStack, \
    TextEmbedding, average_cls, hashed_featurizer
