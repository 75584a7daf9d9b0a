"""Cross-network homophilous/heterophilous edge classification with supervised graph attention."""
from .graph import DatasetStats, Graph, SynthParams, load_graph, save_graph, synth_pair
from .model import ModelParams, load_params, save_params
from .trainer import TrainConfig, predict_target, train
from .metrics import auc, average_precision, evaluate_target

__version__ = "0.1.0"
