from .gradcheck import NondeterministicError, grad_check, relative_error
from .layers import (
    ACTIVATIONS,
    DTYPE,
    AttentivePooling,
    Dense,
    Dropout,
    Embedding,
    LayerParams,
    MultiHeadSelfAttention,
    PositionEmbedding,
    ShapeError,
    xavier_uniform,
    Tensor,
    masked_softmax,
    sigmoid,
    softmax_backward,
)
from .optim import SGD, Adam, apply_sgd, make_optimizer
from .tape import ForwardTape, TapeError
