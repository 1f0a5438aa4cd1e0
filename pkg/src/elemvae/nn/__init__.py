"""A small float64 neural-network engine with hand-written backpropagation."""

from .checkpoint import load_checkpoint, save_checkpoint
from .losses import kl_standard_normal, loss_bce, loss_cce, reparameterize
from .network import (
    Trace,
    backward,
    count_parameters,
    forward,
    init_parameters,
    predict,
)
from .optim import OptimizerSpec, init_state, optimizer_step
from .spec import (
    LayerSpec,
    NetworkSpec,
    ShapeError,
    conv2d,
    conv2d_transpose,
    dense,
    dropout,
    flatten,
    max_pool,
    reshape,
    shape_of,
)
from .training import History, TrainConfig, TrainingDiverged, split_dataset, split_indices, train
