"""Command line interface"""
from .commands import (
    OPTIONS,
    build_parser,
    cmd_eval,
    cmd_gradcheck,
    cmd_infer,
    cmd_patchify,
    cmd_synth,
    cmd_train,
    main,
    resolve,
)

__all__ = [
    "OPTIONS",
    "build_parser",
    "cmd_eval",
    "cmd_gradcheck",
    "cmd_infer",
    "cmd_patchify",
    "cmd_synth",
    "cmd_train",
    "main",
    "resolve",
]
