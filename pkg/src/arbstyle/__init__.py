"""Arbitrary style transfer: a style prediction network feeding a conditionally normalized transfer network.

Everything runs on a small numpy autodiff engine (:mod:`arbstyle.tensor`).
"""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint, write_checkpoint
from .config import RunConfig, load_config, save_config
from .errors import (
    ConfigError,
    FormatError,
    GradCheckFailure,
    IntegrityError,
    InvalidArgument,
    NonFiniteError,
    ShapeError,
    UnsupportedFormat,
    VersionError,
)
from .imageio import load_image, save_image
from .losses import LossNetConfig, LossNetwork, LossReport, content_loss, gram_matrix, style_loss, total_loss
from .model import StyleTransferModel
from .networks import (
    PredictionNetConfig,
    StyleEmbedding,
    TransferNetConfig,
    concatenate_embedding,
    embedding_dim,
    predict_embedding,
    slice_embedding,
    transfer_forward,
)
from .normalization import NormParams, adain_transfer, conditional_instance_norm
from .optim import AdamState, adam_update
from .tensor import Tensor, conv2d, grad_check, no_grad
from .training import direct_optimize, train_adain_baseline, train_joint

__version__ = "0.1.0"
