"""emplite: lightweight word-emphasis selection for short texts.

Trains compact sequence-labeling models (word + character features,
BiLSTM, additive attention), scores them with top-m overlap metrics, and
ships them as single-file binary bundles small enough for on-device use.
"""

from . import _kernels
from .corpus import AnnotatedSentence, Vocabulary, parse_dataset
from .metrics import EvalInstance, average_score, match_m
from .model import ModelConfig, load_model, predict, save_model, train
from .tensor import Tensor

__version__ = "0.1.0"

__all__ = [
    "AnnotatedSentence",
    "EvalInstance",
    "ModelConfig",
    "Tensor",
    "Vocabulary",
    "average_score",
    "kernel_backend",
    "load_model",
    "match_m",
    "parse_dataset",
    "predict",
    "save_model",
    "train",
    "__version__",
]


def kernel_backend():
    """Name of the active compute backend ("cython" or "python")."""
    return _kernels.backend_name()
