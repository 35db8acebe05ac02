from .functional import (batchnorm, concat_channels, conv2d, conv2d_transpose, hadamard,
                         maxpool2x2, mse_masked_loss, relu)
from .optim import AdamState, adam_step
from .tensor import Tensor

__all__ = ["Tensor", "AdamState", "adam_step", "batchnorm", "concat_channels", "conv2d",
           "conv2d_transpose", "hadamard", "maxpool2x2", "mse_masked_loss", "relu"]
