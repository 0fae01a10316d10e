"""Dense float tensors with reverse-mode automatic differentiation.

Exactly the primitives the fusion network needs: matrix products, 1-D
same-padded convolution, max pooling, row-wise softmax / layer norm,
dropout, elementwise max, and a handful of scalar reductions. Gradients
are recorded on an explicit :class:`Tape`; a tape is consumed by a single
``backward`` sweep.

Structured primitives accept an optional leading batch axis (rank-3 input
for convolution/pooling, batched ``bmm`` for attention) so that a training
step over a mini-batch runs as a few large GEMMs instead of thousands of
skinny ones. The rank-2 forms are the reference semantics; the batched
forms are the same computation applied per leading index.
"""

from __future__ import annotations

import hashlib
import math

import numpy as np

__all__ = [
    "ShapeError",
    "ConfigError",
    "TapeError",
    "RngStream",
    "Tensor",
    "Tape",
    "backward",
    "matmul",
    "bmm",
    "linear",
    "conv1d_same",
    "maxpool1d",
    "softmax_rows",
    "layer_norm",
    "relu",
    "sigmoid",
    "activation",
    "dropout",
    "elementwise_max",
    "residual_add",
    "mul",
    "affine",
    "log",
    "clip",
    "concat",
    "reshape",
    "reduce_sum",
    "reduce_mean",
    "finite_difference_check",
]

_FLOAT_DTYPES = (np.float32, np.float64)


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested primitive."""


class ConfigError(ValueError):
    """A parameter value (rate, size, count) is outside its legal range."""


class TapeError(RuntimeError):
    """Tape misuse: double backward, non-scalar loss, nested tapes."""


def _tag_to_int(tag) -> int:
    if isinstance(tag, int):
        return tag
    digest = hashlib.blake2s(str(tag).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


class RngStream:
    """Deterministic random stream identified by a 64-bit seed.

    Every draw is generated from ``(seed, draw counter)``, so the sequence
    depends only on the seed and the order of calls, never on the sizes of
    earlier draws. ``derive`` yields an independent child stream; streams
    are never shared between consumers.
    """

    def __init__(self, seed: int, counter: int = 0):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.counter = int(counter)

    def _next_gen(self) -> np.random.Generator:
        gen = np.random.default_rng((self.seed, 0, self.counter))
        self.counter += 1
        return gen

    def derive(self, tag) -> "RngStream":
        seq = np.random.SeedSequence((self.seed, 1, _tag_to_int(tag)))
        return RngStream(int(seq.generate_state(1, np.uint64)[0]))

    def uniform(self, shape=None, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        return self._next_gen().uniform(low, high, size=shape)

    def normal(self, shape=None, scale: float = 1.0) -> np.ndarray:
        return self._next_gen().normal(0.0, scale, size=shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._next_gen().permutation(n)

    def integers(self, low: int, high: int) -> int:
        return int(self._next_gen().integers(low, high))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, counter={self.counter})"


class Tensor:
    """Dense float array with an optional gradient slot and tape linkage."""

    __slots__ = ("data", "requires_grad", "grad", "node_id", "_tape")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.node_id: int | None = None
        self._tape: "Tape | None" = None

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        t = cls.__new__(cls)
        t.data = arr
        t.requires_grad = False
        t.grad = None
        t.node_id = None
        t._tape = None
        return t

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name}, requires_grad={self.requires_grad})"


_ACTIVE_TAPE: "Tape | None" = None


class Tape:
    """Ordered record of executed primitives for one forward graph.

    Nodes are appended in execution order, so parents always precede
    children and the reverse sweep is a valid topological order. A tape
    feeds exactly one ``backward`` call; reuse raises :class:`TapeError`.
    """

    def __init__(self):
        self._parents: list[tuple] = []
        self._backward: list = []
        self._leaves: list = []  # tensor ref for leaf nodes, else None
        self.consumed = False

    def __enter__(self) -> "Tape":
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise TapeError("a tape is already active; tapes do not nest")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, exc_type, exc, tb):
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None
        self._release()
        return False

    def __len__(self) -> int:
        return len(self._parents)

    def _release(self) -> None:
        """Drop the recorded graph and unregister leaves.

        Leaves point at the tape and the tape points back at them, a cycle
        the reference counter cannot free; with large parameter sets that
        stranded memory adds up faster than the cycle collector runs, so
        the graph is torn down explicitly once the tape is done.
        """
        for leaf in self._leaves:
            if leaf is not None and leaf._tape is self:
                leaf._tape = None
                leaf.node_id = None
        self._parents = []
        self._backward = []
        self._leaves = []

    def _track(self, t: Tensor) -> int | None:
        """Node id of `t` in this tape, registering a leaf on first use."""
        if t._tape is self and t.node_id is not None:
            return t.node_id
        if t.requires_grad:
            nid = len(self._parents)
            self._parents.append(())
            self._backward.append(None)
            self._leaves.append(t)
            t._tape = self
            t.node_id = nid
            return nid
        return None

    def _append(self, out: Tensor, pids: tuple, backward_fn) -> None:
        nid = len(self._parents)
        self._parents.append(pids)
        self._backward.append(backward_fn)
        self._leaves.append(None)
        out._tape = self
        out.node_id = nid


def _record(out: Tensor, parents: tuple, make_backward) -> Tensor:
    """Record `out = op(parents)` on the active tape, if any.

    `make_backward(need)` receives a tuple of booleans (one per parent,
    True when that parent's gradient is required) and returns the backward
    closure `fn(grad_out) -> tuple of parent grads` (None where not needed).
    """
    tape = _ACTIVE_TAPE
    if tape is None:
        return out
    if tape.consumed:
        raise TapeError("tape has already been consumed by backward")
    pids = tuple(tape._track(p) for p in parents)
    if all(pid is None for pid in pids):
        return out
    need = tuple(pid is not None for pid in pids)
    tape._append(out, pids, make_backward(need))
    return out


def backward(loss: Tensor) -> None:
    """Reverse sweep from a scalar loss; fills ``grad`` on leaf tensors.

    Gradients accumulate into existing ``grad`` arrays, so callers zero
    grads between steps. The tape is consumed; a second call raises.
    """
    tape = loss._tape
    if tape is None or loss.node_id is None:
        raise TapeError("loss was not produced on a live tape")
    if tape.consumed:
        raise TapeError("tape has already been consumed by backward")
    if loss.data.shape != ():
        raise TapeError(f"backward requires a scalar loss, got shape {loss.data.shape}")

    grads: list = [None] * (loss.node_id + 1)
    grads[loss.node_id] = np.ones((), dtype=loss.data.dtype)
    for nid in range(loss.node_id, -1, -1):
        g = grads[nid]
        grads[nid] = None
        if g is None:
            continue
        leaf = tape._leaves[nid]
        if leaf is not None:
            if leaf.grad is None:
                leaf.grad = np.array(g, dtype=leaf.data.dtype, copy=True)
            else:
                np.add(leaf.grad, g, out=leaf.grad)
            continue
        fn = tape._backward[nid]
        parent_grads = fn(g)
        for pid, pg in zip(tape._parents[nid], parent_grads):
            if pid is None or pg is None:
                continue
            if grads[pid] is None:
                grads[pid] = pg
            else:
                grads[pid] = grads[pid] + pg
        tape._backward[nid] = None  # release saved activations early
    tape.consumed = True
    tape._release()


# ---------------------------------------------------------------------------
# primitives


def _check_ndim(name: str, t: Tensor, *ranks: int) -> None:
    if t.data.ndim not in ranks:
        raise ShapeError(f"{name}: expected rank {ranks} tensor, got shape {t.shape}")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of two rank-2 tensors."""
    _check_ndim("matmul", a, 2)
    _check_ndim("matmul", b, 2)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions disagree: {a.shape} x {b.shape}")
    out = Tensor._wrap(a.data @ b.data)
    ad, bd = a.data, b.data

    def make(need):
        def bwd(g):
            da = g @ bd.T if need[0] else None
            db = ad.T @ g if need[1] else None
            return da, db

        return bwd

    return _record(out, (a, b), make)


def bmm(a: Tensor, b: Tensor, transpose_b: bool = False) -> Tensor:
    """Batched matrix product over a shared leading axis (rank-3 inputs)."""
    _check_ndim("bmm", a, 3)
    _check_ndim("bmm", b, 3)
    bd = b.data.transpose(0, 2, 1) if transpose_b else b.data
    if a.shape[0] != b.shape[0] or a.shape[2] != bd.shape[1]:
        raise ShapeError(
            f"bmm: incompatible shapes {a.shape} x {b.shape}"
            f"{' (transposed)' if transpose_b else ''}"
        )
    out = Tensor._wrap(np.matmul(a.data, bd))
    ad = a.data

    def make(need):
        def bwd(g):
            if transpose_b:
                da = np.matmul(g, b.data) if need[0] else None
                db = np.matmul(g.transpose(0, 2, 1), ad) if need[1] else None
            else:
                da = np.matmul(g, b.data.transpose(0, 2, 1)) if need[0] else None
                db = np.matmul(ad.transpose(0, 2, 1), g) if need[1] else None
            return da, db

        return bwd

    return _record(out, (a, b), make)


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Affine map ``x @ w + b`` with the bias broadcast over rows."""
    _check_ndim("linear", x, 2)
    _check_ndim("linear", w, 2)
    _check_ndim("linear", b, 1)
    if x.shape[1] != w.shape[0] or w.shape[1] != b.shape[0]:
        raise ShapeError(
            f"linear: shapes disagree: x {x.shape}, w {w.shape}, b {b.shape}"
        )
    out = Tensor._wrap(x.data @ w.data + b.data)
    xd, wd = x.data, w.data

    def make(need):
        def bwd(g):
            dx = g @ wd.T if need[0] else None
            dw = xd.T @ g if need[1] else None
            db = g.sum(axis=0) if need[2] else None
            return dx, dw, db

        return bwd

    return _record(out, (x, w, b), make)


def conv1d_same(x: Tensor, kernels: Tensor, bias: Tensor) -> Tensor:
    """Same-padded 1-D cross-correlation over the length axis.

    ``x`` is ``(L, C_in)`` or batched ``(B, L, C_in)``; ``kernels`` is
    ``(k, C_in, F)``; output length equals ``L`` (zero pad ``(k-1)//2`` on
    the left, the remainder on the right).

    Internally the padding is never materialized: all k offset products
    come out of one matrix product ``x @ [W_0 .. W_{k-1}]``, and the output
    sums length-shifted slices of it. The weight gradient is likewise a
    single matrix product against the shift-scattered output gradient.
    """
    _check_ndim("conv1d_same", x, 2, 3)
    _check_ndim("conv1d_same", kernels, 3)
    _check_ndim("conv1d_same", bias, 1)
    batched = x.data.ndim == 3
    xd = x.data if batched else x.data[None]
    n_batch, length, c_in = xd.shape
    k, kc, f = kernels.shape
    if kc != c_in or bias.shape[0] != f:
        raise ShapeError(
            f"conv1d_same: shapes disagree: x {x.shape}, kernels {kernels.shape}, "
            f"bias {bias.shape}"
        )
    if k > length:
        raise ConfigError(f"conv1d_same: kernel size {k} exceeds input length {length}")
    pad_left = (k - 1) // 2

    x2 = xd.reshape(n_batch * length, c_in)
    w_all = np.ascontiguousarray(kernels.data.transpose(1, 0, 2)).reshape(c_in, k * f)
    p = (x2 @ w_all).reshape(n_batch, length, k, f)
    out = np.empty(
        (n_batch, length, f), dtype=np.result_type(p.dtype, bias.data.dtype)
    )
    out[:] = bias.data
    for j in range(k):
        s = j - pad_left  # position l reads input row l + s
        lo, hi = max(0, -s), min(length, length - s)
        out[:, lo:hi, :] += p[:, lo + s : hi + s, j, :]
    del p
    result = Tensor._wrap(out if batched else out[0])

    def make(need):
        def bwd(g):
            g3 = g if batched else g[None]
            dx = dk = db = None
            if need[0] or need[1]:
                dp = np.zeros((n_batch, length, k * f), dtype=g3.dtype)
                dp4 = dp.reshape(n_batch, length, k, f)
                for j in range(k):
                    s = j - pad_left
                    lo, hi = max(0, -s), min(length, length - s)
                    dp4[:, lo + s : hi + s, j, :] = g3[:, lo:hi, :]
                dp2 = dp.reshape(n_batch * length, k * f)
                if need[1]:
                    dk = np.ascontiguousarray(
                        (x2.T @ dp2).reshape(c_in, k, f).transpose(1, 0, 2)
                    )
                if need[0]:
                    dx = (dp2 @ w_all.T).reshape(n_batch, length, c_in)
                    if not batched:
                        dx = dx[0]
            if need[2]:
                db = g3.sum(axis=(0, 1))
            return dx, dk, db

        return bwd

    return _record(result, (x, kernels, bias), make)


def maxpool1d(x: Tensor, pool: int = 3, stride: int = 3) -> Tensor:
    """Per-channel max over non-overlapping windows; remainder dropped.

    Backward routes the gradient to the first maximal position of each
    window.
    """
    if pool != stride:
        raise ConfigError("maxpool1d: only non-overlapping windows (pool == stride) are supported")
    if pool < 1:
        raise ConfigError(f"maxpool1d: pool size must be >= 1, got {pool}")
    _check_ndim("maxpool1d", x, 2, 3)
    batched = x.data.ndim == 3
    xd = x.data if batched else x.data[None]
    n_batch, length, channels = xd.shape
    if length < pool:
        raise ConfigError(f"maxpool1d: input length {length} shorter than pool size {pool}")
    n_out = length // pool
    windows = xd[:, : n_out * pool, :].reshape(n_batch, n_out, pool, channels)
    tape = _ACTIVE_TAPE
    tracked = tape is not None and (
        x.requires_grad or (x._tape is tape and x.node_id is not None)
    )
    if tracked:
        amax = windows.argmax(axis=2)  # first occurrence on ties
        out = np.take_along_axis(windows, amax[:, :, None, :], axis=2)[:, :, 0, :]
    else:
        amax = None  # backward unreachable; skip the index bookkeeping
        out = windows.max(axis=2)
    result = Tensor._wrap(out if batched else out[0])

    def make(need):
        def bwd(g):
            g3 = g if batched else g[None]
            dwin = np.zeros((n_batch, n_out, pool, channels), dtype=g3.dtype)
            np.put_along_axis(dwin, amax[:, :, None, :], g3[:, :, None, :], axis=2)
            dx = np.zeros_like(xd)
            dx[:, : n_out * pool, :] = dwin.reshape(n_batch, n_out * pool, channels)
            return (dx if batched else dx[0],)

        return bwd

    return _record(result, (x,), make)


def softmax_rows(x: Tensor) -> Tensor:
    """Row-wise softmax, stabilized by subtracting each row's max."""
    _check_ndim("softmax_rows", x, 2)
    xd = x.data
    shifted = xd - xd.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=1, keepdims=True)
    out = Tensor._wrap(y)

    def make(need):
        def bwd(g):
            dot = (g * y).sum(axis=1, keepdims=True)
            return ((g - dot) * y,)

        return bwd

    return _record(out, (x,), make)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-row standardization followed by learned gain and bias."""
    _check_ndim("layer_norm", x, 2)
    _check_ndim("layer_norm", gain, 1)
    _check_ndim("layer_norm", bias, 1)
    n = x.shape[1]
    if n < 2:
        raise ShapeError(f"layer_norm: need at least 2 features per row, got {n}")
    if gain.shape[0] != n or bias.shape[0] != n:
        raise ShapeError(
            f"layer_norm: shapes disagree: x {x.shape}, gain {gain.shape}, bias {bias.shape}"
        )
    xd = x.data
    mu = xd.mean(axis=1, keepdims=True)
    centered = xd - mu
    var = (centered * centered).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    out = Tensor._wrap(xhat * gain.data + bias.data)
    gd = gain.data

    def make(need):
        def bwd(g):
            dgain = (g * xhat).sum(axis=0) if need[1] else None
            dbias = g.sum(axis=0) if need[2] else None
            dx = None
            if need[0]:
                dxhat = g * gd
                dx = (
                    inv
                    / n
                    * (
                        n * dxhat
                        - dxhat.sum(axis=1, keepdims=True)
                        - xhat * (dxhat * xhat).sum(axis=1, keepdims=True)
                    )
                )
            return dx, dgain, dbias

        return bwd

    return _record(out, (x, gain, bias), make)


def relu(x: Tensor) -> Tensor:
    """Elementwise max(0, x)."""
    y = np.maximum(x.data, 0)
    out = Tensor._wrap(y)

    def make(need):
        def bwd(g):
            return (g * (y > 0),)

        return bwd

    return _record(out, (x,), make)


def sigmoid(x: Tensor) -> Tensor:
    """Elementwise logistic function, numerically stable, output in (0, 1)."""
    xd = x.data
    z = np.exp(-np.abs(xd))
    y = np.where(xd >= 0, 1.0 / (1.0 + z), z / (1.0 + z)).astype(xd.dtype)
    info = np.finfo(xd.dtype)
    np.clip(y, info.tiny, 1.0 - info.epsneg, out=y)
    out = Tensor._wrap(y)

    def make(need):
        def bwd(g):
            return (g * y * (1.0 - y),)

        return bwd

    return _record(out, (x,), make)


def activation(x: Tensor, kind: str) -> Tensor:
    """Named activation dispatch: ``relu`` or ``sigmoid``."""
    if kind == "relu":
        return relu(x)
    if kind == "sigmoid":
        return sigmoid(x)
    raise ConfigError(f"activation: unknown kind {kind!r}")


def dropout(x: Tensor, p: float, training: bool, rng: RngStream | None = None) -> Tensor:
    """Inverted dropout: zero entries with probability p, scale survivors.

    Evaluation mode (or p == 0) is the exact identity.
    """
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"dropout: rate must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ConfigError("dropout: training mode requires an RngStream")
    keep = rng.uniform(x.shape) >= p
    scale = np.asarray(1.0 / (1.0 - p), dtype=x.data.dtype)
    mask = keep.astype(x.data.dtype) * scale
    out = Tensor._wrap(x.data * mask)

    def make(need):
        def bwd(g):
            return (g * mask,)

        return bwd

    return _record(out, (x,), make)


def elementwise_max(vs) -> Tensor:
    """Entrywise maximum of two or more same-shape tensors.

    Backward routes the gradient to the first maximal input at each entry.
    """
    vs = list(vs)
    if len(vs) < 2:
        raise ShapeError("elementwise_max: need at least 2 tensors")
    shape = vs[0].shape
    for v in vs[1:]:
        if v.shape != shape:
            raise ShapeError(
                f"elementwise_max: mismatched shapes {shape} vs {v.shape}"
            )
    stacked = np.stack([v.data for v in vs])
    amax = stacked.argmax(axis=0)
    out = Tensor._wrap(np.take_along_axis(stacked, amax[None], axis=0)[0])

    def make(need):
        def bwd(g):
            return tuple(
                g * (amax == i) if need[i] else None for i in range(len(vs))
            )

        return bwd

    return _record(out, tuple(vs), make)


def residual_add(x: Tensor, y: Tensor) -> Tensor:
    """Elementwise sum of two same-shape tensors; gradient flows to both."""
    if x.shape != y.shape:
        raise ShapeError(f"residual_add: mismatched shapes {x.shape} vs {y.shape}")
    out = Tensor._wrap(x.data + y.data)

    def make(need):
        def bwd(g):
            return g, g

        return bwd

    return _record(out, (x, y), make)


def mul(x: Tensor, y: Tensor) -> Tensor:
    """Elementwise product of two same-shape tensors."""
    if x.shape != y.shape:
        raise ShapeError(f"mul: mismatched shapes {x.shape} vs {y.shape}")
    out = Tensor._wrap(x.data * y.data)
    xd, yd = x.data, y.data

    def make(need):
        def bwd(g):
            return (g * yd if need[0] else None, g * xd if need[1] else None)

        return bwd

    return _record(out, (x, y), make)


def affine(x: Tensor, scale: float = 1.0, shift: float = 0.0) -> Tensor:
    """Elementwise ``x * scale + shift`` with python-float constants."""
    out = Tensor._wrap(x.data * scale + shift)

    def make(need):
        def bwd(g):
            return (g * scale,)

        return bwd

    return _record(out, (x,), make)


def log(x: Tensor) -> Tensor:
    """Elementwise natural logarithm; inputs must be positive."""
    xd = x.data
    out = Tensor._wrap(np.log(xd))

    def make(need):
        def bwd(g):
            return (g / xd,)

        return bwd

    return _record(out, (x,), make)


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp entries to [lo, hi]; gradient passes only where unclamped."""
    xd = x.data
    out = Tensor._wrap(np.clip(xd, lo, hi))
    inside = (xd >= lo) & (xd <= hi)

    def make(need):
        def bwd(g):
            return (g * inside,)

        return bwd

    return _record(out, (x,), make)


def concat(tensors, axis: int = 0) -> Tensor:
    """Concatenate same-rank tensors along an axis."""
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat: need at least one tensor")
    out = Tensor._wrap(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def make(need):
        def bwd(g):
            moved = np.moveaxis(g, axis, 0)
            return tuple(
                np.moveaxis(moved[offsets[i] : offsets[i + 1]], 0, axis)
                if need[i]
                else None
                for i in range(len(sizes))
            )

        return bwd

    return _record(out, tuple(tensors), make)


def reshape(x: Tensor, shape) -> Tensor:
    """View the same data under a new shape; gradient reshapes back."""
    orig = x.data.shape
    out = Tensor._wrap(x.data.reshape(shape))

    def make(need):
        def bwd(g):
            return (g.reshape(orig),)

        return bwd

    return _record(out, (x,), make)


def reduce_sum(x: Tensor) -> Tensor:
    """Sum of all entries as a scalar tensor."""
    out = Tensor._wrap(np.asarray(x.data.sum(), dtype=x.data.dtype))
    shape, dtype = x.data.shape, x.data.dtype

    def make(need):
        def bwd(g):
            return (np.full(shape, g, dtype=dtype),)

        return bwd

    return _record(out, (x,), make)


def reduce_mean(x: Tensor) -> Tensor:
    """Mean of all entries as a scalar tensor."""
    out = Tensor._wrap(np.asarray(x.data.mean(), dtype=x.data.dtype))
    shape, dtype, n = x.data.shape, x.data.dtype, x.data.size

    def make(need):
        def bwd(g):
            return (np.full(shape, g / n, dtype=dtype),)

        return bwd

    return _record(out, (x,), make)


def finite_difference_check(f, x: Tensor, eps: float = 1e-6) -> float:
    """Max relative error between the analytic gradient of ``f`` at ``x``
    and central finite differences.

    ``f`` maps a tensor to a scalar tensor and must be deterministic
    across calls (reconstruct any RngStream it uses internally). The
    difference quotients are evaluated on a float64 copy of ``x`` so the
    oracle itself stays clear of single-precision roundoff; the analytic
    gradient is taken at the dtype of ``x``.

    Central differences carry absolute noise of roughly ulp(f) / eps, so
    callers comparing against tight relative tolerances should keep every
    coordinate's gradient well above that, for instance by adding a
    ``reduce_sum`` of the input to the objective.
    """
    work = Tensor(x.data.copy(), requires_grad=True)
    with Tape() as tape:
        y = f(work)
        if y.data.shape != ():
            raise ShapeError(f"finite_difference_check: f must be scalar-valued, got {y.shape}")
        if y._tape is tape and y.node_id is not None:
            backward(y)  # otherwise f ignored x: analytic gradient is zero
    analytic = work.grad if work.grad is not None else np.zeros_like(work.data)

    probe = x.data.astype(np.float64).copy()
    probe_t = Tensor._wrap(probe)
    worst = 0.0
    flat = probe.reshape(-1)
    aflat = np.asarray(analytic, dtype=np.float64).reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        f_plus = float(f(probe_t).data)
        flat[i] = orig - eps
        f_minus = float(f(probe_t).data)
        flat[i] = orig
        central = (f_plus - f_minus) / (2.0 * eps)
        denom = max(abs(aflat[i]), abs(central), 1e-8)
        worst = max(worst, abs(aflat[i] - central) / denom)
    return worst
