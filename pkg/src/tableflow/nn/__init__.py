from .tensor import Tensor, concat, cross_entropy, embedding, layer_norm, masked_softmax, no_grad
from .layers import (
    AttentionMask,
    Embedding,
    LayerNorm,
    Linear,
    LoRALinear,
    LoraAdapter,
    Mlp,
    Module,
    Parameter,
    SelfAttention,
    TransformerBlock,
    enable_lora,
    masked_attention,
)
from .encoding import fourier_encode, fourier_encode_many
from .optim import AdamW
from .checkpoint import load_checkpoint, save_checkpoint
