"""Source-free domain adaptation with neighbour and pseudo-label contrastive learning."""

from .config import HyperParams, ModelSpec
from .data import Corpus, ShiftSpec, generate_pair, load_corpus, save_corpus
from .evaluate import EvalReport, cluster_quality, evaluate, project_2d
from .model import EcanModel, load, save
from .trainer import RunLog, adapt, pretrain

__all__ = [
    "Corpus", "EcanModel", "EvalReport", "HyperParams", "ModelSpec", "RunLog", "ShiftSpec",
    "adapt", "cluster_quality", "evaluate", "generate_pair", "load", "load_corpus", "pretrain",
    "project_2d", "save", "save_corpus",
]

__version__ = "0.1.0"
