"""Binary containers: MMFF feature files, MMCK checkpoints, synthetic data.

Both formats are little-endian with fixed-size headers. MMFF holds
pre-extracted per-post features as fixed-size records, so readers can
stream lazily and seek by index. MMCK holds named parameter tensors.
Files written by any conforming producer validate here bit-for-bit.
"""

from __future__ import annotations

import os
import struct

import numpy as np

from .model import (
    GLOBAL_DIM,
    N_REGIONS,
    PARAM_SHAPES,
    REGION_DIM,
    SEQ_LEN,
    TEXT_DIM,
    ModelParams,
    SampleFeatures,
)
from .tensor import ConfigError, RngStream, Tensor

__all__ = [
    "FormatError",
    "CorruptionError",
    "HEADER_SIZE",
    "RECORD_SIZE",
    "write_features",
    "read_features",
    "read_header",
    "stack_features",
    "synth_generate",
    "save_checkpoint",
    "load_checkpoint",
]


class FormatError(ValueError):
    """Header or layout of a binary file does not match the format."""


class CorruptionError(ValueError):
    """File is structurally valid but shorter/longer than it declares."""


FEATURE_MAGIC = b"MMFF"
CHECKPOINT_MAGIC = b"MMCK"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<4sIIIIIII")  # magic, version, n_samples, then 5 dims
HEADER_SIZE = _HEADER.size  # 32
_REC_PREFIX = struct.Struct("<QB")  # id, label

_TOKENS_N = SEQ_LEN * TEXT_DIM
_REGIONS_N = N_REGIONS * REGION_DIM
RECORD_SIZE = _REC_PREFIX.size + 4 * (_TOKENS_N + GLOBAL_DIM + _REGIONS_N)

_F32LE = np.dtype("<f4")


def write_features(path, records) -> int:
    """Write header plus records in input order; returns bytes written.

    Accepts any iterable; the sample count is patched into the header after
    the last record, so generators stream without materializing.
    """
    n = 0
    with open(path, "wb") as f:
        f.write(_HEADER.pack(FEATURE_MAGIC, FORMAT_VERSION, 0, SEQ_LEN, TEXT_DIM,
                             N_REGIONS, REGION_DIM, GLOBAL_DIM))
        for rec in records:
            rec.validate()
            f.write(_REC_PREFIX.pack(rec.id, rec.label))
            f.write(np.ascontiguousarray(rec.tokens, dtype=_F32LE).tobytes())
            f.write(np.ascontiguousarray(rec.image_global, dtype=_F32LE).tobytes())
            f.write(np.ascontiguousarray(rec.image_regions, dtype=_F32LE).tobytes())
            n += 1
        f.seek(8)
        f.write(struct.pack("<I", n))
    return HEADER_SIZE + n * RECORD_SIZE


def read_header(path) -> dict:
    """Validate the fixed header and declared length; returns its fields."""
    size = os.path.getsize(path)
    if size < HEADER_SIZE:
        raise CorruptionError(f"{path}: file shorter than the {HEADER_SIZE}-byte header")
    with open(path, "rb") as f:
        raw = f.read(HEADER_SIZE)
    magic, version, n_samples, seq_len, text_dim, n_regions, region_dim, global_dim = (
        _HEADER.unpack(raw)
    )
    if magic != FEATURE_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {FEATURE_MAGIC!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}, expected {FORMAT_VERSION}")
    for field, got, want in (
        ("seq_len", seq_len, SEQ_LEN),
        ("text_dim", text_dim, TEXT_DIM),
        ("n_regions", n_regions, N_REGIONS),
        ("region_dim", region_dim, REGION_DIM),
        ("global_dim", global_dim, GLOBAL_DIM),
    ):
        if got != want:
            raise FormatError(f"{path}: header field {field}={got}, expected {want}")
    expected = HEADER_SIZE + n_samples * RECORD_SIZE
    if size != expected:
        raise CorruptionError(
            f"{path}: expected {expected} bytes for {n_samples} records, found {size}"
        )
    return {
        "n_samples": n_samples,
        "seq_len": seq_len,
        "text_dim": text_dim,
        "n_regions": n_regions,
        "region_dim": region_dim,
        "global_dim": global_dim,
    }


def read_features(path):
    """Stream records lazily after validating the header and file length."""
    header = read_header(path)

    def records():
        with open(path, "rb") as f:
            f.seek(HEADER_SIZE)
            for _ in range(header["n_samples"]):
                raw = f.read(RECORD_SIZE)
                if len(raw) != RECORD_SIZE:
                    raise CorruptionError(
                        f"{path}: expected {RECORD_SIZE}-byte record, found {len(raw)}"
                    )
                rec_id, label = _REC_PREFIX.unpack_from(raw)
                off = _REC_PREFIX.size
                tokens = np.frombuffer(raw, _F32LE, _TOKENS_N, off).reshape(SEQ_LEN, TEXT_DIM)
                off += 4 * _TOKENS_N
                image_global = np.frombuffer(raw, _F32LE, GLOBAL_DIM, off)
                off += 4 * GLOBAL_DIM
                regions = np.frombuffer(raw, _F32LE, _REGIONS_N, off).reshape(
                    N_REGIONS, REGION_DIM
                )
                yield SampleFeatures(
                    id=rec_id,
                    tokens=tokens.copy(),
                    image_global=image_global.copy(),
                    image_regions=regions.copy(),
                    label=int(label),
                )

    return records()


def stack_features(records):
    """Stack records into contiguous batch arrays (tokens, global, regions,
    labels, ids) for the batched forward pass."""
    records = list(records)
    if not records:
        raise ConfigError("dataset is empty")
    tokens = np.stack([r.tokens for r in records]).astype(np.float32, copy=False)
    image_global = np.stack([r.image_global for r in records]).astype(np.float32, copy=False)
    regions = np.stack([r.image_regions for r in records]).astype(np.float32, copy=False)
    labels = np.array([r.label for r in records], dtype=np.int64)
    ids = np.array([r.id for r in records], dtype=np.uint64)
    return tokens, image_global, regions, labels, ids


_GROUP_STRENGTHS = {"tokens": 1.0, "global": 1.0, "regions": 1.0}

# the class geometry is shared by every call on purpose: only the noise is
# seeded, so files generated with different seeds form coherent
# train/test pairs
_DIRECTION_SEED = 193


def synth_generate(seed: int, n: int, separation: float, noise: float = 0.5,
                   group_strengths: dict | None = None):
    """Balanced two-class Gaussian features with a class-mean offset.

    Each feature group (tokens, global image vector, regions) gets its own
    fixed unit direction, the same for every seed; fake samples (label 1)
    are shifted along it by ``separation`` times the group's strength. The
    seed only drives the noise draws, so two calls with different seeds
    sample the same task. Labels alternate starting with fake, so exactly
    ceil(n/2) records carry label 1.
    """
    if n < 2:
        raise ConfigError(f"synth_generate: need n >= 2, got {n}")
    if separation < 0:
        raise ConfigError(f"synth_generate: separation must be >= 0, got {separation}")
    strengths = dict(_GROUP_STRENGTHS)
    if group_strengths:
        unknown = set(group_strengths) - set(strengths)
        if unknown:
            raise ConfigError(f"synth_generate: unknown feature groups {sorted(unknown)}")
        strengths.update(group_strengths)

    root = RngStream(seed)
    dir_stream = RngStream(_DIRECTION_SEED).derive("directions")
    offsets = {}
    for group, dim in (("tokens", TEXT_DIM), ("global", GLOBAL_DIM), ("regions", REGION_DIM)):
        u = dir_stream.normal((dim,))
        u /= np.linalg.norm(u)
        offsets[group] = (separation * strengths[group] * u).astype(np.float32)

    out = []
    for i in range(n):
        label = 1 - (i % 2)
        s = root.derive(f"sample/{i}")
        tokens = (s.normal((SEQ_LEN, TEXT_DIM), scale=noise)).astype(np.float32)
        image_global = (s.normal((GLOBAL_DIM,), scale=noise)).astype(np.float32)
        regions = (s.normal((N_REGIONS, REGION_DIM), scale=noise)).astype(np.float32)
        if label == 1:
            tokens += offsets["tokens"]
            image_global += offsets["global"]
            regions += offsets["regions"]
        out.append(
            SampleFeatures(id=i, tokens=tokens, image_global=image_global,
                           image_regions=regions, label=label)
        )
    return out


# ---------------------------------------------------------------------------
# checkpoints

_CKPT_HEADER = struct.Struct("<4sII")  # magic, version, param count
_U32 = struct.Struct("<I")


def save_checkpoint(path, params: ModelParams) -> int:
    """Write every named parameter as f32; returns bytes written."""
    total = 0
    with open(path, "wb") as f:
        total += f.write(_CKPT_HEADER.pack(CHECKPOINT_MAGIC, FORMAT_VERSION, len(params)))
        for name, t in params.items():
            encoded = name.encode("utf-8")
            total += f.write(_U32.pack(len(encoded)))
            total += f.write(encoded)
            total += f.write(_U32.pack(t.data.ndim))
            for dim in t.shape:
                total += f.write(_U32.pack(dim))
            total += f.write(np.ascontiguousarray(t.data, dtype=_F32LE).tobytes())
    return total


def load_checkpoint(path) -> ModelParams:
    """Read an MMCK file back into a full parameter set.

    Unknown or missing parameter names, or any shape that disagrees with
    the architecture constants, raise FormatError naming the offenders.
    """
    def take(f, nbytes, what):
        raw = f.read(nbytes)
        if len(raw) != nbytes:
            raise CorruptionError(f"{path}: truncated while reading {what}")
        return raw

    tensors = {}
    with open(path, "rb") as f:
        magic, version, count = _CKPT_HEADER.unpack(take(f, _CKPT_HEADER.size, "header"))
        if magic != CHECKPOINT_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {CHECKPOINT_MAGIC!r}")
        if version != FORMAT_VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        for _ in range(count):
            (name_len,) = _U32.unpack(take(f, 4, "name length"))
            name = take(f, name_len, "name").decode("utf-8")
            (rank,) = _U32.unpack(take(f, 4, f"{name} rank"))
            shape = tuple(
                _U32.unpack(take(f, 4, f"{name} dims"))[0] for _ in range(rank)
            )
            count_f = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(take(f, 4 * count_f, f"{name} data"), _F32LE).reshape(shape)
            if name in tensors:
                raise FormatError(f"{path}: duplicate parameter {name}")
            tensors[name] = (shape, data)

    unknown = sorted(set(tensors) - set(PARAM_SHAPES))
    missing = sorted(set(PARAM_SHAPES) - set(tensors))
    if unknown or missing:
        raise FormatError(f"{path}: unknown parameters {unknown}, missing {missing}")
    bad = [
        f"{name} (file {shape}, expected {PARAM_SHAPES[name]})"
        for name, (shape, _) in tensors.items()
        if shape != PARAM_SHAPES[name]
    ]
    if bad:
        raise FormatError(f"{path}: shape mismatch for " + ", ".join(bad))
    ordered = {
        name: Tensor(tensors[name][1].astype(np.float32), requires_grad=True)
        for name in PARAM_SHAPES
    }
    return ModelParams(ordered)
