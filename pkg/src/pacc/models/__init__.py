"""Drug-sensitivity encoders: fingerprint DNN, bRNN, SCNN, SA, CA and MCA."""
from .layers import contextual_attention, gene_attention, masked_max, self_attention
from .model import Batch, ForwardOutput, Model, ModelWithoutAttention, concat_width
from .spec import ATTENTION_KINDS, KINDS, TOKEN_KINDS, ModelSpec, SpecError

__all__ = [
    "ATTENTION_KINDS", "Batch", "ForwardOutput", "KINDS", "Model", "ModelSpec", "ModelWithoutAttention",
    "SpecError", "TOKEN_KINDS", "concat_width", "contextual_attention", "gene_attention", "masked_max",
    "self_attention",
]
