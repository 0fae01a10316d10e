"""Feature extraction entry points and the dimension contract.

Every record carries three tensors: per-token text rows (32 positions,
each the concatenation of four 768-wide encoder layers), a 4096-wide
global image vector, and 49 region rows of width 512 from the encoder's
7x7 spatial grid. The extract functions validate whatever encoder they
are handed against these shapes, so a misconfigured encoder fails here
with a clear message instead of producing an unreadable file.
"""

import numpy as np

__all__ = [
    "SEQ_LEN",
    "HIDDEN_DIM",
    "N_LAYERS",
    "TEXT_DIM",
    "GLOBAL_DIM",
    "REGION_GRID",
    "N_REGIONS",
    "REGION_DIM",
    "IMAGE_SIZE",
    "extract_text_features",
    "extract_image_features",
]

SEQ_LEN = 32
HIDDEN_DIM = 768
N_LAYERS = 4
TEXT_DIM = N_LAYERS * HIDDEN_DIM  # 3072
GLOBAL_DIM = 4096
REGION_GRID = 7
N_REGIONS = REGION_GRID * REGION_GRID  # 49
REGION_DIM = 512
IMAGE_SIZE = 224


def extract_text_features(text, encoder) -> np.ndarray:
    """Encode preprocessed text to exactly SEQ_LEN x TEXT_DIM float32.

    Texts longer than SEQ_LEN tokens are truncated on the right and
    shorter ones padded on the right; both are the encoder's job, this
    checks the outcome. Empty text is valid and encodes to padding rows.
    """
    mat = np.ascontiguousarray(encoder.encode(text), dtype=np.float32)
    if mat.shape != (SEQ_LEN, TEXT_DIM):
        raise ValueError(
            f"text encoder returned shape {mat.shape}, expected ({SEQ_LEN}, {TEXT_DIM})"
        )
    return mat


def extract_image_features(path, encoder):
    """Encode one image file to its global vector and region rows.

    Returns (GLOBAL_DIM,) and (N_REGIONS, REGION_DIM) float32 arrays;
    region rows are the encoder's 7x7 spatial grid flattened row-major.
    Undecodable files raise ImageDecodeError from the encoder.
    """
    vec, regions = encoder.encode(path)
    vec = np.ascontiguousarray(vec, dtype=np.float32)
    regions = np.ascontiguousarray(regions, dtype=np.float32)
    if vec.shape != (GLOBAL_DIM,):
        raise ValueError(
            f"image encoder returned global shape {vec.shape}, expected ({GLOBAL_DIM},)"
        )
    if regions.shape != (N_REGIONS, REGION_DIM):
        raise ValueError(
            f"image encoder returned region shape {regions.shape}, "
            f"expected ({N_REGIONS}, {REGION_DIM})"
        )
    return vec, regions
