"""dualfuse: uncertainty-weighted multimodal fusion on synthetic sensor streams."""

__version__ = "0.1.0"

from .config import ExperimentConfig
from .datasim import Corpus, CorpusSpec, generate, load_corpus, save_corpus
from .model import DualFuseModel
from .training import evaluate, train

__all__ = [
    "Corpus",
    "CorpusSpec",
    "DualFuseModel",
    "ExperimentConfig",
    "__version__",
    "evaluate",
    "generate",
    "load_corpus",
    "save_corpus",
    "train",
]
