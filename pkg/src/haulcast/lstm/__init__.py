"""Recurrent forecaster: LSTM with attention, trained by backpropagation through time."""

from .network import GATES, LstmParams, backward, forward, init_params, sigmoid
from .optim import AdamState, adam_step
from .training import (
    LstmModelFile, LstmTrainConfig, TrainingHistory, load_lstm, predict_lstm, save_lstm,
    train_lstm, write_history_csv,
)

__all__ = [
    "GATES", "LstmParams", "init_params", "forward", "backward", "sigmoid",
    "AdamState", "adam_step",
    "LstmTrainConfig", "TrainingHistory", "train_lstm", "predict_lstm",
    "save_lstm", "load_lstm", "LstmModelFile", "write_history_csv",
]
