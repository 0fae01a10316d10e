"""Fusion network: text head, visual head, three attention blocks, combiner.

The text head encodes a 32x3072 token-embedding matrix with four parallel
1-D conv branches (filter sizes 2..5), max pooling, and two residual conv
layers, then flattens to a 32-dim text vector T_f. The visual head reduces
the 4096-dim global image vector to I_f and projects the 49x512 region
matrix to I_m. Three scaled dot-product attention blocks relate the
modalities (text->image, image->text, image self-attention); their outputs
are concatenated with T_f and I_f and classified through a sigmoid.

Heads are written batch-first internally so a whole mini-batch runs as a
few large matrix products; the public per-sample functions below wrap the
batched forms at batch size 1 and carry the documented shapes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tensor import (
    ConfigError,
    RngStream,
    ShapeError,
    Tensor,
    affine,
    bmm,
    concat,
    conv1d_same,
    dropout,
    elementwise_max,
    layer_norm,
    linear,
    matmul,
    maxpool1d,
    relu,
    reshape,
    residual_add,
    sigmoid,
    softmax_rows,
)

SEQ_LEN = 32
TEXT_DIM = 3072
GLOBAL_DIM = 4096
N_REGIONS = 49
REGION_DIM = 512

CONV_FILTERS = 768
CONV_KS = (2, 3, 4, 5)
POOL = 3
T_M_ROWS = len(CONV_KS) * (SEQ_LEN // POOL)  # 4 branches x 10 pooled positions
TEXT_FLAT = T_M_ROWS * CONV_FILTERS
VISUAL_HIDDEN = 2048
D = 32  # shared fusion width
REGION_FLAT = N_REGIONS * D
CONCAT_WIDTH = 5 * D

DROPOUT_RATE = 0.3

ATT_BLOCKS = {
    "att_t2i": (D, D),  # query T_f, keys/values from I_m rows
    "att_i2t": (D, CONV_FILTERS),  # query I_f, keys/values from T_m rows
    "att_i2i": (D, D),  # self-attention over I_m rows
}


def _param_shapes() -> dict:
    shapes = {}
    for k in CONV_KS:
        shapes[f"text.conv_k{k}.w"] = (k, TEXT_DIM, CONV_FILTERS)
        shapes[f"text.conv_k{k}.b"] = (CONV_FILTERS,)
    for i in (1, 2):
        shapes[f"text.res_conv{i}.w"] = (3, CONV_FILTERS, CONV_FILTERS)
        shapes[f"text.res_conv{i}.b"] = (CONV_FILTERS,)
    shapes["text.fc1.w"] = (TEXT_FLAT, CONV_FILTERS)
    shapes["text.fc1.b"] = (CONV_FILTERS,)
    shapes["text.fc2.w"] = (CONV_FILTERS, D)
    shapes["text.fc2.b"] = (D,)

    shapes["visual.fc1.w"] = (GLOBAL_DIM, VISUAL_HIDDEN)
    shapes["visual.fc1.b"] = (VISUAL_HIDDEN,)
    shapes["visual.fc2.w"] = (VISUAL_HIDDEN, D)
    shapes["visual.fc2.b"] = (D,)
    shapes["visual.region_fc.w"] = (REGION_DIM, D)
    shapes["visual.region_fc.b"] = (D,)

    for block, (d_q, d_kv) in ATT_BLOCKS.items():
        shapes[f"{block}.wq"] = (d_q, D)
        shapes[f"{block}.wk"] = (d_kv, D)
        shapes[f"{block}.wv"] = (d_kv, D)
        for i in (1, 2, 3, 4):
            shapes[f"{block}.fc{i}.w"] = (D, D)
            shapes[f"{block}.fc{i}.b"] = (D,)
        shapes[f"{block}.post_fc.w"] = (D, D)
        shapes[f"{block}.post_fc.b"] = (D,)
        shapes[f"{block}.ln.gain"] = (D,)
        shapes[f"{block}.ln.bias"] = (D,)

    shapes["comb.region_fc.w"] = (REGION_FLAT, D)
    shapes["comb.region_fc.b"] = (D,)
    shapes["comb.fc.w"] = (CONCAT_WIDTH, D)
    shapes["comb.fc.b"] = (D,)
    shapes["comb.out.w"] = (D, 1)
    shapes["comb.out.b"] = (1,)
    return shapes


PARAM_SHAPES = _param_shapes()
PARAM_COUNT = len(PARAM_SHAPES)


@dataclass
class SampleFeatures:
    """One post's pre-extracted inputs."""

    id: int
    tokens: np.ndarray  # (32, 3072)
    image_global: np.ndarray  # (4096,)
    image_regions: np.ndarray  # (49, 512)
    label: int  # 0 = real, 1 = fake

    def validate(self):
        if self.tokens.shape != (SEQ_LEN, TEXT_DIM):
            raise ShapeError(f"tokens must be {(SEQ_LEN, TEXT_DIM)}, got {self.tokens.shape}")
        if self.image_global.shape != (GLOBAL_DIM,):
            raise ShapeError(f"image_global must be ({GLOBAL_DIM},), got {self.image_global.shape}")
        if self.image_regions.shape != (N_REGIONS, REGION_DIM):
            raise ShapeError(
                f"image_regions must be {(N_REGIONS, REGION_DIM)}, got {self.image_regions.shape}"
            )
        if self.label not in (0, 1):
            raise ConfigError(f"label must be 0 or 1, got {self.label}")
        return self


@dataclass
class AttentionBlockOutput:
    fused: Tensor  # (rows, 32)
    weights: Tensor  # (rows, keys), each row post-softmax


@dataclass
class ForwardTrace:
    T_m: Tensor  # (40, 768)
    T_f: Tensor  # (32,)
    I_f: Tensor  # (32,)
    I_m: Tensor  # (49, 32)
    R_TI: Tensor  # (32,)
    R_IT: Tensor  # (32,)
    R_II: Tensor  # (49, 32)
    R_II_flat: Tensor  # (32,) after the region-combiner FC
    probability: float
    att_t2i: Tensor  # (1, 49)
    att_i2t: Tensor  # (1, 40)
    att_ii: Tensor  # (49, 49)


class ModelParams:
    """Named, ordered collection of every learnable tensor."""

    def __init__(self, tensors: dict):
        if list(tensors.keys()) != list(PARAM_SHAPES.keys()):
            unknown = sorted(set(tensors) - set(PARAM_SHAPES))
            missing = sorted(set(PARAM_SHAPES) - set(tensors))
            raise ConfigError(
                f"parameter set mismatch: unknown={unknown}, missing={missing}"
            )
        for name, t in tensors.items():
            if t.shape != PARAM_SHAPES[name]:
                raise ShapeError(
                    f"parameter {name}: expected shape {PARAM_SHAPES[name]}, got {t.shape}"
                )
        self.tensors = tensors

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __len__(self) -> int:
        return len(self.tensors)

    def names(self):
        return list(self.tensors.keys())

    def items(self):
        return self.tensors.items()

    @property
    def dtype(self):
        return next(iter(self.tensors.values())).dtype

    def zero_grads(self):
        for t in self.tensors.values():
            t.grad = None

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(
            {
                name: Tensor(t.data.astype(dtype, copy=True), requires_grad=True)
                for name, t in self.tensors.items()
            }
        )

    def copy(self) -> "ModelParams":
        return self.astype(self.dtype)


def _fan(shape) -> tuple:
    if len(shape) == 2:
        return shape[0], shape[1]
    k, c_in, f = shape
    return k * c_in, k * f


def init_params(seed: int, dtype=np.float32) -> ModelParams:
    """Uniform fan-based init for weights, zeros for biases, unit gains."""
    root = RngStream(seed)
    tensors = {}
    for name, shape in PARAM_SHAPES.items():
        if name.endswith(".gain"):
            data = np.ones(shape, dtype=dtype)
        elif name.endswith((".b", ".bias")):
            data = np.zeros(shape, dtype=dtype)
        else:
            fan_in, fan_out = _fan(shape)
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            stream = root.derive("init/" + name)
            data = stream.uniform(shape, -limit, limit).astype(dtype)
        tensors[name] = Tensor(data, requires_grad=True)
    return ModelParams(tensors)


def _check_mode(mode: str):
    if mode not in ("train", "eval"):
        raise ConfigError(f"mode must be 'train' or 'eval', got {mode!r}")


def _site_rng(mode: str, rng: RngStream | None, site: str) -> RngStream | None:
    if mode != "train":
        return None
    if rng is None:
        raise ConfigError("train mode requires an RngStream for dropout")
    return rng.derive("dropout/" + site)


# ---------------------------------------------------------------------------
# batch-first internals: leading axis is the mini-batch


def _text_head_b(tokens: Tensor, params: ModelParams, mode: str, rng, p_drop: float):
    """tokens (B, 32, 3072) -> T_m (B, 40, 768), T_f (B, 32)."""
    n = tokens.shape[0]
    branches = []
    for k in CONV_KS:
        c = relu(conv1d_same(tokens, params[f"text.conv_k{k}.w"], params[f"text.conv_k{k}.b"]))
        branches.append(maxpool1d(c, POOL, POOL))  # (B, 10, 768)
    h = concat(branches, axis=1)  # (B, 40, 768)
    for i in (1, 2):
        c = conv1d_same(h, params[f"text.res_conv{i}.w"], params[f"text.res_conv{i}.b"])
        h = relu(residual_add(c, h))
    t_m = h
    flat = reshape(t_m, (n, TEXT_FLAT))
    z = dropout(
        linear(flat, params["text.fc1.w"], params["text.fc1.b"]),
        p_drop,
        mode == "train",
        _site_rng(mode, rng, "text.fc1"),
    )
    t_f = linear(relu(z), params["text.fc2.w"], params["text.fc2.b"])
    return t_m, t_f


def _visual_head_b(image_global: Tensor, image_regions: Tensor, params, mode, rng, p_drop):
    """(B, 4096), (B, 49, 512) -> I_f (B, 32), I_m (B, 49, 32)."""
    n = image_global.shape[0]
    z = dropout(
        linear(image_global, params["visual.fc1.w"], params["visual.fc1.b"]),
        p_drop,
        mode == "train",
        _site_rng(mode, rng, "visual.fc1"),
    )
    i_f = linear(relu(z), params["visual.fc2.w"], params["visual.fc2.b"])
    rows = reshape(image_regions, (n * N_REGIONS, REGION_DIM))
    i_m = reshape(
        linear(rows, params["visual.region_fc.w"], params["visual.region_fc.b"]),
        (n, N_REGIONS, D),
    )
    return i_f, i_m


def _attention_block_b(query_src: Tensor, kv_src: Tensor, params, block: str):
    """(B, r_q, d_q), (B, r_k, d_kv) -> fused (B, r_q, 32), weights (B, r_q, r_k)."""
    n, r_q, d_q = query_src.shape
    _, r_k, d_kv = kv_src.shape
    q = reshape(matmul(reshape(query_src, (n * r_q, d_q)), params[f"{block}.wq"]), (n, r_q, D))
    k = reshape(matmul(reshape(kv_src, (n * r_k, d_kv)), params[f"{block}.wk"]), (n, r_k, D))
    v = reshape(matmul(reshape(kv_src, (n * r_k, d_kv)), params[f"{block}.wv"]), (n, r_k, D))
    scores = bmm(q, k, transpose_b=True)  # (B, r_q, r_k), scaled by 1/sqrt(d)
    weights = reshape(
        softmax_rows(reshape(affine(scores, 1.0 / math.sqrt(D)), (n * r_q, r_k))),
        (n, r_q, r_k),
    )
    o = reshape(bmm(weights, v), (n * r_q, D))
    four = [
        relu(linear(o, params[f"{block}.fc{i}.w"], params[f"{block}.fc{i}.b"]))
        for i in (1, 2, 3, 4)
    ]
    m = elementwise_max(four)
    fused = layer_norm(
        residual_add(linear(m, params[f"{block}.post_fc.w"], params[f"{block}.post_fc.b"]), m),
        params[f"{block}.ln.gain"],
        params[f"{block}.ln.bias"],
    )
    return reshape(fused, (n, r_q, D)), weights


def _fuse_b(t_f, i_f, r_ti, r_it, r_ii, params, mode, rng, p_drop):
    """Five (B, 32)/(B, 49, 32) inputs -> probabilities (B,), R_II' (B, 32)."""
    n = t_f.shape[0]
    z = dropout(
        linear(reshape(r_ii, (n, REGION_FLAT)), params["comb.region_fc.w"], params["comb.region_fc.b"]),
        p_drop,
        mode == "train",
        _site_rng(mode, rng, "comb.region_fc"),
    )
    r_ii_flat = relu(z)
    cat = concat([t_f, i_f, r_ti, r_it, r_ii_flat], axis=1)  # (B, 160)
    z = dropout(
        linear(cat, params["comb.fc.w"], params["comb.fc.b"]),
        p_drop,
        mode == "train",
        _site_rng(mode, rng, "comb.fc"),
    )
    h = relu(z)
    probs = sigmoid(linear(h, params["comb.out.w"], params["comb.out.b"]))  # (B, 1)
    return reshape(probs, (n,)), r_ii_flat


def forward_batch(
    tokens: Tensor,
    image_global: Tensor,
    image_regions: Tensor,
    params: ModelParams,
    mode: str = "eval",
    rng: RngStream | None = None,
    p_drop: float = DROPOUT_RATE,
) -> dict:
    """Run the whole network on a stacked mini-batch.

    Returns a dict of graph tensors keyed by the trace field names, plus
    ``probs`` of shape (B,). The same computation as per-sample forward,
    applied along the leading axis.
    """
    _check_mode(mode)
    n = tokens.shape[0]
    if tokens.shape != (n, SEQ_LEN, TEXT_DIM):
        raise ShapeError(f"tokens batch must be (B, {SEQ_LEN}, {TEXT_DIM}), got {tokens.shape}")
    if image_global.shape != (n, GLOBAL_DIM):
        raise ShapeError(f"image_global batch must be (B, {GLOBAL_DIM}), got {image_global.shape}")
    if image_regions.shape != (n, N_REGIONS, REGION_DIM):
        raise ShapeError(
            f"image_regions batch must be (B, {N_REGIONS}, {REGION_DIM}), got {image_regions.shape}"
        )

    t_m, t_f = _text_head_b(tokens, params, mode, rng, p_drop)
    i_f, i_m = _visual_head_b(image_global, image_regions, params, mode, rng, p_drop)

    fused_ti, a_t2i = _attention_block_b(reshape(t_f, (n, 1, D)), i_m, params, "att_t2i")
    fused_it, a_i2t = _attention_block_b(reshape(i_f, (n, 1, D)), t_m, params, "att_i2t")
    r_ii, a_ii = _attention_block_b(i_m, i_m, params, "att_i2i")

    r_ti = reshape(fused_ti, (n, D))
    r_it = reshape(fused_it, (n, D))
    probs, r_ii_flat = _fuse_b(t_f, i_f, r_ti, r_it, r_ii, params, mode, rng, p_drop)
    return {
        "T_m": t_m,
        "T_f": t_f,
        "I_f": i_f,
        "I_m": i_m,
        "R_TI": r_ti,
        "R_IT": r_it,
        "R_II": r_ii,
        "R_II_flat": r_ii_flat,
        "att_t2i": a_t2i,
        "att_i2t": a_i2t,
        "att_ii": a_ii,
        "probs": probs,
    }


# ---------------------------------------------------------------------------
# per-sample entry points


def _as_tensor(value, dtype) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype))


def text_head(tokens, params: ModelParams, mode: str = "eval", rng=None, p_drop=DROPOUT_RATE):
    """(32, 3072) -> T_m (40, 768), T_f (32,)."""
    _check_mode(mode)
    tokens = _as_tensor(tokens, params.dtype)
    if tokens.shape != (SEQ_LEN, TEXT_DIM):
        raise ShapeError(f"tokens must be {(SEQ_LEN, TEXT_DIM)}, got {tokens.shape}")
    t_m, t_f = _text_head_b(reshape(tokens, (1, SEQ_LEN, TEXT_DIM)), params, mode, rng, p_drop)
    return reshape(t_m, (T_M_ROWS, CONV_FILTERS)), reshape(t_f, (D,))


def visual_head(image_global, image_regions, params, mode="eval", rng=None, p_drop=DROPOUT_RATE):
    """(4096,), (49, 512) -> I_f (32,), I_m (49, 32)."""
    _check_mode(mode)
    image_global = _as_tensor(image_global, params.dtype)
    image_regions = _as_tensor(image_regions, params.dtype)
    if image_global.shape != (GLOBAL_DIM,):
        raise ShapeError(f"image_global must be ({GLOBAL_DIM},), got {image_global.shape}")
    if image_regions.shape != (N_REGIONS, REGION_DIM):
        raise ShapeError(
            f"image_regions must be {(N_REGIONS, REGION_DIM)}, got {image_regions.shape}"
        )
    i_f, i_m = _visual_head_b(
        reshape(image_global, (1, GLOBAL_DIM)),
        reshape(image_regions, (1, N_REGIONS, REGION_DIM)),
        params,
        mode,
        rng,
        p_drop,
    )
    return reshape(i_f, (D,)), reshape(i_m, (N_REGIONS, D))


def attention_block(query_src, kv_src, params: ModelParams, block: str, mode: str = "eval"):
    """(r_q, d_q), (r_k, d_kv) -> AttentionBlockOutput with fused (r_q, 32)."""
    _check_mode(mode)
    if block not in ATT_BLOCKS:
        raise ConfigError(f"unknown attention block {block!r}; expected one of {sorted(ATT_BLOCKS)}")
    query_src = _as_tensor(query_src, params.dtype)
    kv_src = _as_tensor(kv_src, params.dtype)
    d_q, d_kv = ATT_BLOCKS[block]
    if query_src.data.ndim != 2 or query_src.shape[1] != d_q:
        raise ShapeError(f"{block}: query_src must be (r_q, {d_q}), got {query_src.shape}")
    if kv_src.data.ndim != 2 or kv_src.shape[1] != d_kv:
        raise ShapeError(f"{block}: kv_src must be (r_k, {d_kv}), got {kv_src.shape}")
    r_q, r_k = query_src.shape[0], kv_src.shape[0]
    fused, weights = _attention_block_b(
        reshape(query_src, (1, r_q, d_q)), reshape(kv_src, (1, r_k, d_kv)), params, block
    )
    return AttentionBlockOutput(
        fused=reshape(fused, (r_q, D)), weights=reshape(weights, (r_q, r_k))
    )


def fuse_and_classify(t_f, i_f, r_ti, r_it, r_ii, params, mode="eval", rng=None, p_drop=DROPOUT_RATE):
    """Five per-sample representations -> scalar probability tensor."""
    _check_mode(mode)
    dtype = params.dtype
    t_f, i_f, r_ti, r_it, r_ii = (
        _as_tensor(v, dtype) for v in (t_f, i_f, r_ti, r_it, r_ii)
    )
    for name, v in (("T_f", t_f), ("I_f", i_f), ("R_TI", r_ti), ("R_IT", r_it)):
        if v.shape != (D,):
            raise ShapeError(f"{name} must be ({D},), got {v.shape}")
    if r_ii.shape != (N_REGIONS, D):
        raise ShapeError(f"R_II must be {(N_REGIONS, D)}, got {r_ii.shape}")
    probs, _ = _fuse_b(
        reshape(t_f, (1, D)),
        reshape(i_f, (1, D)),
        reshape(r_ti, (1, D)),
        reshape(r_it, (1, D)),
        reshape(r_ii, (1, N_REGIONS, D)),
        params,
        mode,
        rng,
        p_drop,
    )
    return reshape(probs, ())


def forward(
    sample: SampleFeatures,
    params: ModelParams,
    mode: str = "eval",
    rng: RngStream | None = None,
    p_drop: float = DROPOUT_RATE,
) -> ForwardTrace:
    """Full per-sample pass recording every intermediate and attention map."""
    _check_mode(mode)
    sample.validate()
    dtype = params.dtype
    out = forward_batch(
        Tensor(np.asarray(sample.tokens, dtype=dtype)[None]),
        Tensor(np.asarray(sample.image_global, dtype=dtype)[None]),
        Tensor(np.asarray(sample.image_regions, dtype=dtype)[None]),
        params,
        mode,
        rng,
        p_drop,
    )
    return ForwardTrace(
        T_m=reshape(out["T_m"], (T_M_ROWS, CONV_FILTERS)),
        T_f=reshape(out["T_f"], (D,)),
        I_f=reshape(out["I_f"], (D,)),
        I_m=reshape(out["I_m"], (N_REGIONS, D)),
        R_TI=reshape(out["R_TI"], (D,)),
        R_IT=reshape(out["R_IT"], (D,)),
        R_II=reshape(out["R_II"], (N_REGIONS, D)),
        R_II_flat=reshape(out["R_II_flat"], (D,)),
        probability=float(out["probs"].data[0]),
        att_t2i=reshape(out["att_t2i"], (1, N_REGIONS)),
        att_i2t=reshape(out["att_i2t"], (1, T_M_ROWS)),
        att_ii=reshape(out["att_ii"], (N_REGIONS, N_REGIONS)),
    )
