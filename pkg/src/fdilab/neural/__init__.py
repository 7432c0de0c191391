from .checkpoint import load_checkpoint, save_checkpoint
from .layers import (
    LSTM,
    BiLSTM,
    Conv1d,
    Dense,
    LstmCellParams,
    MaxPool1d,
    Tanh,
    bilstm_forward,
    conv1d_forward,
    lstm_cell_backward,
    lstm_cell_step,
    sigmoid,
)
from .optim import Adam, mse_loss

__all__ = [
    "LSTM",
    "Adam",
    "BiLSTM",
    "Conv1d",
    "Dense",
    "LstmCellParams",
    "MaxPool1d",
    "Tanh",
    "bilstm_forward",
    "conv1d_forward",
    "load_checkpoint",
    "lstm_cell_backward",
    "lstm_cell_step",
    "mse_loss",
    "save_checkpoint",
    "sigmoid",
]
