"""Bilinear supervised discrete hashing.

Features are arrays of shape (n, d1, d2), labels are 0/1 arrays of shape
(l, n) and codes are int8 arrays of shape (bits, n) over {-1, +1}.
"""

from ._core import (
    BsdhError,
    FormatError,
    HyperParams,
    InvalidValueError,
    Model,
    NoRelevantItemsError,
    NumericalError,
    PackedCodes,
    ShapeError,
    bpbc_encode,
    encode,
    evaluate_retrieval,
    hamming_distance,
    load_b2f,
    load_idx,
    lsh_encode,
    mean_average_precision,
    pack_codes,
    save_b2f,
    seeded_split,
    synth_multilabel,
    train,
    unpack_codes,
)

__all__ = [
    "BsdhError",
    "FormatError",
    "HyperParams",
    "InvalidValueError",
    "Model",
    "NoRelevantItemsError",
    "NumericalError",
    "PackedCodes",
    "ShapeError",
    "bpbc_encode",
    "encode",
    "evaluate_retrieval",
    "hamming_distance",
    "load_b2f",
    "load_idx",
    "lsh_encode",
    "mean_average_precision",
    "pack_codes",
    "save_b2f",
    "seeded_split",
    "synth_multilabel",
    "train",
    "unpack_codes",
]
