"""From-scratch reverse-mode autodiff and the episodic planning network."""
from .autodiff import (
    ShapeError,
    Tensor,
    add,
    affine,
    backward,
    concat,
    elu,
    gather_rows,
    global_norm,
    layer_norm,
    log_softmax,
    lstm_cell,
    matmul,
    max_over_rows,
    mean_all,
    mul,
    relu,
    reshape,
    scale,
    sigmoid,
    slice_axis,
    softmax,
    sub,
    sum_all,
    sum_axis,
    tanh_,
    tensor,
    transpose2,
)
from .epn import (
    CHECKPOINT_MAGIC,
    AgentState,
    EpisodicMemory,
    EpnDims,
    EpnParams,
    ForwardTrace,
    epn_forward,
    init_params,
    initial_state,
    load_params,
    sample_action,
    save_params,
    write_memory,
)
from .policy import EpnPolicy

__all__ = [
    "ShapeError", "Tensor", "add", "affine", "backward", "concat", "elu",
    "gather_rows", "global_norm", "layer_norm", "log_softmax", "lstm_cell",
    "matmul", "max_over_rows", "mean_all", "mul", "relu", "reshape", "scale",
    "sigmoid", "slice_axis", "softmax", "sub", "sum_all", "sum_axis", "tanh_",
    "tensor", "transpose2",
    "CHECKPOINT_MAGIC", "AgentState", "EpisodicMemory", "EpnDims", "EpnParams",
    "ForwardTrace", "epn_forward", "init_params", "initial_state",
    "load_params", "sample_action", "save_params", "write_memory",
    "EpnPolicy",
]
