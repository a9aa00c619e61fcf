"""Model layers, assembly and checkpoints."""

from .checkpoint import ConfigMismatchError, load_model, read_checkpoint, save_model, write_checkpoint
from .layers import (
    CrossStitch,
    GINLayer,
    GINStack,
    TransformerReadout,
    l2_normalize,
    stack_channels,
    sum_readout,
    unstack_channels,
    window_and_encode,
)
from .model import (
    AlertGraphModel,
    GraphBatch,
    ModelConfig,
    StateError,
    backward,
    classifier_forward,
    conv_head_forward,
    gin_stack_forward,
    make_batch,
    parameter_digest,
    transformer_readout,
)

__all__ = [
    "AlertGraphModel",
    "ConfigMismatchError",
    "CrossStitch",
    "GINLayer",
    "GINStack",
    "GraphBatch",
    "ModelConfig",
    "StateError",
    "TransformerReadout",
    "backward",
    "classifier_forward",
    "conv_head_forward",
    "gin_stack_forward",
    "l2_normalize",
    "load_model",
    "make_batch",
    "parameter_digest",
    "read_checkpoint",
    "save_model",
    "stack_channels",
    "sum_readout",
    "transformer_readout",
    "unstack_channels",
    "window_and_encode",
    "write_checkpoint",
]
