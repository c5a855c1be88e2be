from .layers import (
    Conv2D, Dense, Dropout, Flatten, MaxPool2x2, ShapeError, Tanh, UpSample2x2, ZeroPad,
    conv2d_backward, conv2d_forward, dense_backward, dense_forward, dropout_forward,
    maxpool2x2_backward, maxpool2x2_forward, tanh_backward, tanh_forward, upsample2x2, zeropad,
)
from .network import ModelState, NetworkSpec, backward, forward, init_state, predict
from .optim import OptimizerConfig, adadelta_step, learning_rate_at, optimizer_step, sgd_step
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
