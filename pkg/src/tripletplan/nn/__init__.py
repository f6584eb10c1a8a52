from .tensor import (
    Tensor,
    as_tensor,
    clip,
    concat,
    exp,
    flip,
    gather_rows,
    grad_enabled,
    layer_norm,
    linear,
    log,
    logsigmoid,
    make_op,
    masked_fill,
    matmul,
    mean,
    minimum,
    no_grad,
    relu,
    reshape,
    sigmoid,
    softmax,
    sum_,
    tanh,
    transpose,
    ShapeMismatch,
)
from .layers import (
    BiLSTM,
    CausalSelfAttentionBlock,
    Embedding,
    LSTM,
    LayerNorm,
    Linear,
    Module,
    lstm_seq,
    parameter,
)
from .losses import mse, multilabel_bce, softmax_ce
from .optim import Adam
