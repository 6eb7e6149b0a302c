"""Multilayer least-squares networks with Moore-Penrose error pullback and weight recomputation."""

from .autoencoder import AeLayer, encode, train_ae
from .data import Dataset, concat_features, load_features, load_labels, make_blobs, one_hot, split
from .errors import DataError, ModelFormatError, NumericalError, RMLError, ShapeError
from .evaluation import ExperimentSpec, RunReport, run_compare, top1_accuracy
from .network import (
    VARIANTS,
    FeedbackSet,
    StackedModel,
    TrainConfig,
    classify,
    predict,
    pullback,
    recompute,
    stage1_train,
    train_variant,
)
from .persist import load_model, save_model
from .solvers import Activation, RidgeConfig, SparseConfig

__version__ = "0.1.0"
