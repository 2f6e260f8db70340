"""ChangeFormer architecture: encoder, difference modules, decoder"""
from .changeformer import ChangeFormer, forward
from .complexity import AttentionMacs, attention_macs, measure_attention_macs
from .decoder import (
    DifferencePyramid,
    decode,
    difference,
    fuse,
    uncovered_pixels,
    unify_and_upsample,
    upsample_and_classify,
)
from .encoder import (
    FeaturePyramid,
    check_input_size,
    efficient_self_attention,
    encode,
    mix_ffn,
    patch_embed,
    sequence_reduce,
    transformer_block,
)
from .parameters import (
    Buffers,
    ParameterSpec,
    Params,
    buffer_specs,
    count_parameters,
    init_buffers,
    init_weights,
    norm_state,
    parameter_specs,
)

__all__ = [
    "ChangeFormer",
    "forward",
    "AttentionMacs",
    "attention_macs",
    "measure_attention_macs",
    "DifferencePyramid",
    "decode",
    "difference",
    "fuse",
    "uncovered_pixels",
    "unify_and_upsample",
    "upsample_and_classify",
    "FeaturePyramid",
    "check_input_size",
    "efficient_self_attention",
    "encode",
    "mix_ffn",
    "patch_embed",
    "sequence_reduce",
    "transformer_block",
    "Buffers",
    "ParameterSpec",
    "Params",
    "buffer_specs",
    "count_parameters",
    "init_buffers",
    "init_weights",
    "norm_state",
    "parameter_specs",
]
