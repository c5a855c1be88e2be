"""Datasets: canonical on-disk format, synthetic generator, augmentation and crops."""
from .augment import AugmentConfig, Transform2D, apply_transform, augment, draw_transform, sample_seed, warp_nearest
from .biwi import convert_biwi, read_biwi_depth, read_calibration, read_pose, write_biwi_depth
from .canonical import load_canonical_dataset, read_dataset_meta, record_to_sample, sample_to_record, write_canonical
from .pgm import read_pgm, write_pgm
from .preprocess import crop_resize, gray_to_unit, preprocess
from .sample import DataError, Sample
from .split import BIWI_TEST_SEQUENCES, PANDORA_TEST_SUBJECTS, DatasetSplit, make_split, parse_rule
from .synth import SynthConfig, SynthHeadParams, render, shoulder_joints, synth_dataset, synth_generate

__all__ = [
    "AugmentConfig", "Transform2D", "apply_transform", "augment", "draw_transform", "sample_seed", "warp_nearest",
    "convert_biwi", "read_biwi_depth", "read_calibration", "read_pose", "write_biwi_depth",
    "load_canonical_dataset", "read_dataset_meta", "record_to_sample", "sample_to_record", "write_canonical",
    "read_pgm", "write_pgm", "crop_resize", "gray_to_unit", "preprocess", "DataError", "Sample",
    "BIWI_TEST_SEQUENCES", "PANDORA_TEST_SUBJECTS", "DatasetSplit", "make_split", "parse_rule",
    "SynthConfig", "SynthHeadParams", "render", "shoulder_joints", "synth_dataset", "synth_generate",
]
