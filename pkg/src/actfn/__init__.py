"""Activation-function benchmark for fNIRS classification CNNs, on a small numpy autodiff engine."""

__version__ = "0.1.0"

from .activations import ActivationProperties, ActivationSpec, act_backward, act_forward, check_properties, parse_activation
from .architectures import (
    NetworkConfig,
    build,
    build_absolutenet,
    build_fnirsnet,
    build_mdnn,
    build_shallowconvnet,
)
from .tensor import Tensor, backward, no_grad
