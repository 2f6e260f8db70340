"""Datasets, patching, augmentation and synthetic change generation"""
from .augment import augment, color_jitter, draw_rescale_factor, gaussian_blur, hflip, rescale_crop, vflip
from .dataset import ChangeDataset, SampleRef, load_dataset, patchify, scan_triplets, write_dataset
from .imageio import read_label, read_rgb, write_mask, write_rgb
from .patches import (
    SPLIT_NAMES,
    SPLIT_PRESETS,
    DatasetSplit,
    crop_array,
    crop_patches,
    split_random,
    stitch_array,
    stitch_patches,
)
from .samples import BiTemporalSample, stack_batch
from .synthetic import Scene, Shape, random_scene, render_scene, synth_generate

__all__ = [
    "augment",
    "color_jitter",
    "draw_rescale_factor",
    "gaussian_blur",
    "hflip",
    "rescale_crop",
    "vflip",
    "ChangeDataset",
    "SampleRef",
    "load_dataset",
    "patchify",
    "scan_triplets",
    "write_dataset",
    "read_label",
    "read_rgb",
    "write_mask",
    "write_rgb",
    "SPLIT_NAMES",
    "SPLIT_PRESETS",
    "DatasetSplit",
    "crop_array",
    "crop_patches",
    "split_random",
    "stitch_array",
    "stitch_patches",
    "BiTemporalSample",
    "stack_batch",
    "Scene",
    "Shape",
    "random_scene",
    "render_scene",
    "synth_generate",
]
