"""Graph-aware logistic regression and non-neural node-classification baselines."""
from .graph_core import CsrMatrix, SparseGraph, build_graph, dataset_stats, hconcat, row_submatrix, spmm_dense, spmv
from .models import ModelKind, ModelSpec, TrainedModel, fit, predict, spectral_embed
from .optimizer import FitConfig, SoftmaxParams, fit_softmax, predict_softmax

__version__ = "0.1.0"
