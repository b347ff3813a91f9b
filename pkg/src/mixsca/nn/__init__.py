"""Numpy classifier stack: layers, CCE loss, RMSprop training, checkpoints."""
from .checkpoint import load_model, save_model
from .layers import Conv1D, Dense, Flatten, Pool, SoftmaxOutput, softmax
from .network import (
    Model,
    NetworkSpec,
    NonFiniteError,
    backward,
    build_desk_cnn,
    build_desk_mlp,
    build_network,
    build_reference_cnn,
    cce_loss,
    forward,
)
from .train import (
    TrainConfig,
    TrainingDivergedError,
    TrainReport,
    rmsprop_init,
    rmsprop_step,
    select_best_epoch,
    train,
)
