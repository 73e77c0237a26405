"""Conversation graphs for dialogue-policy data augmentation, training and evaluation."""

__version__ = "0.1.0"

from .augment import MfsConfig, downsample, duplicate_dialogues, mfs_augment, oracle_augment
from .dialogue import (
    Act,
    Corpus,
    Dialogue,
    Speaker,
    Split,
    Turn,
    Vocabulary,
    build_vocabulary,
    encode_act,
    encode_state,
    load_corpus,
    save_corpus,
)
from .graph import ConvGraph, GraphStats, Level, build_graph, graph_stats, merge_graphs
from .instances import Instance, InstanceSet, dedupe, extract_instances, unique_count
from .metrics import PredictionRecord, ScoreReport, evaluate, f1, soft_f1, welch_ttest
from .policy import (
    Loss,
    PolicyModel,
    TrainConfig,
    bce_loss,
    forward,
    grad_check,
    predict,
    sbce_loss,
    train,
)
