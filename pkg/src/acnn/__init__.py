"""Training-free convolutional digit classifier built from one exemplar per class."""

from .conv_builder import BuildConfig
from .evaluation import REFERENCE_CONFIGS, EvalReport, evaluate, sweep
from .mnist_io import binarize, load_idx_images, load_idx_labels, select_exemplars
from .network import AnalyticNetwork, build_network, forward, load, save

__all__ = [
    "AnalyticNetwork", "BuildConfig", "EvalReport", "REFERENCE_CONFIGS", "binarize",
    "build_network", "evaluate", "forward", "load", "load_idx_images",
    "load_idx_labels", "save", "select_exemplars", "sweep",
]
