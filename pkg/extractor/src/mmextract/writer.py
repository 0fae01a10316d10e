"""Feature-file output implementing the MMFF byte layout.

Header: the 4-byte magic "MMFF", then seven little-endian u32 fields:
version (1), sample count, seq_len 32, text_dim 3072, n_regions 49,
region_dim 512, global_dim 4096. Records are fixed-size and contiguous:
u64 id, u8 label, then token rows, the global vector, and region rows
as little-endian float32 in row-major order, no padding anywhere. The
sample count is patched into the header on close, so records stream to
disk without being held in memory.

Consumers of these files validate the header and byte count before
reading records; everything this module writes must satisfy them
bit-for-bit.
"""

import struct

import numpy as np

from .features import GLOBAL_DIM, N_REGIONS, REGION_DIM, SEQ_LEN, TEXT_DIM

__all__ = ["MAGIC", "VERSION", "HEADER_SIZE", "RECORD_SIZE", "FeatureWriter"]

MAGIC = b"MMFF"
VERSION = 1

_HEADER = struct.Struct("<4sIIIIIII")
_PREFIX = struct.Struct("<QB")
HEADER_SIZE = _HEADER.size
RECORD_SIZE = _PREFIX.size + 4 * (SEQ_LEN * TEXT_DIM + GLOBAL_DIM + N_REGIONS * REGION_DIM)

_F32LE = np.dtype("<f4")


class FeatureWriter:
    """Streaming single-writer for one feature file; a context manager.

    A file with zero records is still valid: header only, count zero.
    """

    def __init__(self, path):
        self._path = path
        self._n = 0
        self._f = open(path, "wb")
        self._f.write(
            _HEADER.pack(MAGIC, VERSION, 0, SEQ_LEN, TEXT_DIM,
                         N_REGIONS, REGION_DIM, GLOBAL_DIM)
        )

    def add(self, sample_id: int, label: int, tokens, image_global, regions) -> None:
        """Append one record; arrays are checked against the layout."""
        if self._f is None:
            raise ValueError(f"{self._path}: writer is closed")
        if label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {label!r}")
        tokens = np.ascontiguousarray(tokens, dtype=_F32LE)
        image_global = np.ascontiguousarray(image_global, dtype=_F32LE)
        regions = np.ascontiguousarray(regions, dtype=_F32LE)
        for name, arr, want in (
            ("tokens", tokens, (SEQ_LEN, TEXT_DIM)),
            ("global", image_global, (GLOBAL_DIM,)),
            ("regions", regions, (N_REGIONS, REGION_DIM)),
        ):
            if arr.shape != want:
                raise ValueError(f"{name} has shape {arr.shape}, the layout needs {want}")
        self._f.write(_PREFIX.pack(sample_id, label))
        self._f.write(tokens.tobytes())
        self._f.write(image_global.tobytes())
        self._f.write(regions.tobytes())
        self._n += 1

    @property
    def n_written(self) -> int:
        return self._n

    @property
    def bytes_written(self) -> int:
        return HEADER_SIZE + self._n * RECORD_SIZE

    def close(self) -> None:
        if self._f is None:
            return
        self._f.seek(len(MAGIC) + 4)  # past magic and version
        self._f.write(struct.pack("<I", self._n))
        self._f.close()
        self._f = None

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        self.close()
        return False
