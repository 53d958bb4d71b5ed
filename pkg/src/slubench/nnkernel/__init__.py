"""Minimal neural computation substrate: tensors, blocks, CRF, verification."""

from .tensor import (
    Tensor,
    add,
    broadcast_rows,
    concat_cols,
    concat_rows,
    cross_entropy,
    embedding_gather,
    layer_norm,
    matmul,
    mean_rows,
    mul,
    relu,
    rowwise_scale,
    scale_shift,
    sigmoid,
    slice_cols,
    slice_rows,
    softmax_rows,
    sum_all,
    tanh,
    transpose,
)
from .blocks import (
    AttentionConfig,
    ParamStore,
    crossmodal_attention_block,
    encoder_layer,
    feed_forward,
    gru_layer,
    init_attention,
    init_block,
    init_feed_forward,
    init_gru,
    multi_head_attention,
    multi_head_self_attention,
)
from .crf import crf_forward, crf_nll, crf_viterbi
from .gradcheck import gradient_check
from .optim import global_grad_norm, sgd_step
from .checkpoint import load_params, save_params

__all__ = [
    "AttentionConfig",
    "ParamStore",
    "Tensor",
    "add",
    "broadcast_rows",
    "concat_cols",
    "concat_rows",
    "crf_forward",
    "crf_nll",
    "crf_viterbi",
    "cross_entropy",
    "crossmodal_attention_block",
    "embedding_gather",
    "encoder_layer",
    "feed_forward",
    "global_grad_norm",
    "gradient_check",
    "gru_layer",
    "init_attention",
    "init_block",
    "init_feed_forward",
    "init_gru",
    "layer_norm",
    "load_params",
    "matmul",
    "mean_rows",
    "mul",
    "multi_head_attention",
    "multi_head_self_attention",
    "relu",
    "rowwise_scale",
    "save_params",
    "scale_shift",
    "sgd_step",
    "sigmoid",
    "slice_cols",
    "slice_rows",
    "softmax_rows",
    "sum_all",
    "tanh",
    "transpose",
]
