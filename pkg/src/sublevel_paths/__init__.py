"""Explicit parameter-space paths inside sublevel sets of network losses.

The package builds closed-form curves between (or down from) parameter points
of fully connected networks, checks their loss contracts by sampling, and
exports them as JSON manifests and CSV traces.
"""

from .activations import Activation, elu, leaky_relu, linear, relu
from .errors import (
    ConstructionError,
    HypothesisError,
    InvalidInputError,
    SublevelError,
)
from .network import Dataset, NetworkSpec, Params, forward_to_layer, loss, loss_target, validate_hypotheses
from .pathkit import ParamPath, PathCertificate, certify, concat, evaluate, export_trace

__all__ = [
    "Activation",
    "ConstructionError",
    "Dataset",
    "HypothesisError",
    "InvalidInputError",
    "NetworkSpec",
    "ParamPath",
    "Params",
    "PathCertificate",
    "SublevelError",
    "certify",
    "concat",
    "elu",
    "evaluate",
    "export_trace",
    "forward_to_layer",
    "leaky_relu",
    "linear",
    "loss",
    "loss_target",
    "relu",
    "validate_hypotheses",
]
