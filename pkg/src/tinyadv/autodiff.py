"""Forward primitives on float32 arrays with an opt-in reverse-mode tape.

Tensors are plain ``numpy.ndarray`` objects of dtype float32 (primitives
keep float64 when handed float64, which reference checks rely on).  Wrapping an
array with :meth:`Tape.watch` yields a :class:`Var`; any primitive that
receives a ``Var`` records itself on that variable's tape, so recording is
opt-in per forward pass.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import kernels
from .errors import InvalidArgument, NumericDomainError

F32 = np.float32


def result_dtype(*arrays):
    return np.float64 if any(getattr(a, "dtype", None) == np.float64 for a in arrays) else F32


class Var:
    """A value recorded on a :class:`Tape`."""

    __slots__ = ("value", "tape", "index", "name")

    def __init__(self, value, tape, index, name=None):
        self.value = value
        self.tape = tape
        self.index = index
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(name={self.name!r}, shape={self.value.shape})"


@dataclass
class _Record:
    kind: str
    inputs: tuple  # slot index per input, or None for constants
    output: int
    ctx: object


class Tape:
    """Ordered record of executed primitives."""

    def __init__(self):
        self.records: list[_Record] = []
        self._nslots = 0
        self._leaves: dict[int, str] = {}
        self._shapes: dict[int, tuple] = {}

    def __len__(self):
        return len(self.records)

    def _slot(self):
        self._nslots += 1
        return self._nslots - 1

    def watch(self, value, name=None) -> Var:
        value = np.asarray(value, dtype=F32)
        if name is None:
            name = f"leaf{len(self._leaves)}"
        if name in self._leaves.values():
            raise InvalidArgument(f"duplicate leaf name {name!r}")
        v = Var(value, self, self._slot(), name)
        self._leaves[v.index] = name
        self._shapes[v.index] = value.shape
        return v


# ----------------------------------------------------------------------------
# primitive registry: forward(values, params) -> (out, ctx); vjp(ctx, g) -> grads
# ----------------------------------------------------------------------------

_FORWARD: dict[str, Callable] = {}
_VJP: dict[str, Callable] = {}


def register_primitive(kind, forward, vjp):
    _FORWARD[kind] = forward
    _VJP[kind] = vjp


def primitive_kinds():
    return sorted(_FORWARD)


def value_of(v):
    return v.value if isinstance(v, Var) else v


def forward_primitive(kind, inputs, params=None):
    """Apply primitive ``kind`` to ``inputs``.

    Returns an ndarray, or a :class:`Var` when any input is a ``Var``.
    """
    try:
        fwd = _FORWARD[kind]
    except KeyError:
        raise InvalidArgument(f"unknown primitive {kind!r}") from None
    params = params or {}
    tape = None
    vals = []
    for v in inputs:
        if isinstance(v, Var):
            if tape is None:
                tape = v.tape
            elif v.tape is not tape:
                raise InvalidArgument("inputs recorded on different tapes")
            vals.append(v.value)
        else:
            vals.append(v)
    for i, a in enumerate(vals):
        if isinstance(a, np.ndarray) and a.dtype.kind == "f" and not np.isfinite(a).all():
            raise NumericDomainError(f"{kind}: input {i} contains non-finite values")
    out, ctx = fwd(vals, params)
    if tape is None:
        return out
    slots = tuple(v.index if isinstance(v, Var) else None for v in inputs)
    var = Var(out, tape, tape._slot())
    tape.records.append(_Record(kind, slots, var.index, ctx))
    return var


def backward(tape: Tape, loss: Var) -> dict[str, np.ndarray]:
    """Reverse-mode sweep from scalar ``loss``.

    Returns gradients keyed by the names given to :meth:`Tape.watch`.
    Leaves the loss does not depend on get zero gradients.
    """
    if not isinstance(loss, Var) or loss.tape is not tape:
        raise InvalidArgument("loss was not produced on this tape")
    if loss.value.size != 1:
        raise InvalidArgument(f"loss must be scalar, got shape {loss.value.shape}")
    grads = {loss.index: np.ones_like(loss.value)}
    for rec in reversed(tape.records):
        g = grads.pop(rec.output, None)
        if g is None:
            continue
        in_grads = _VJP[rec.kind](rec.ctx, g)
        for slot, gi in zip(rec.inputs, in_grads):
            if slot is None or gi is None:
                continue
            if slot in grads:
                grads[slot] = grads[slot] + gi
            else:
                grads[slot] = gi
    # leaves are never record outputs, so anything left in grads is a leaf
    out = {}
    for slot, name in tape._leaves.items():
        g = grads.get(slot)
        out[name] = g.astype(F32, copy=False) if g is not None else np.zeros(tape._shapes[slot], F32)
    return out


def finite_difference_gradient(f, x, h, batched=False, chunk=2048):
    """Central differences ``(f(x+h e_i) - f(x-h e_i)) / 2h`` for every coordinate.

    Perturbed points are formed in float64.  With ``batched=True`` ``f``
    receives a stack of points and must return one value per point.
    """
    if not h > 0:
        raise InvalidArgument("h must be positive")
    x64 = np.asarray(x, dtype=np.float64)
    n = x64.size
    flat = x64.ravel()
    grad = np.empty(n, dtype=np.float64)
    if not batched:
        for i in range(n):
            xp = flat.copy()
            xm = flat.copy()
            xp[i] += h
            xm[i] -= h
            fp = float(f(xp.reshape(x64.shape)))
            fm = float(f(xm.reshape(x64.shape)))
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise NumericDomainError(f"non-finite function value at coordinate {i}")
            grad[i] = (fp - fm) / (2.0 * h)
        return grad.reshape(x64.shape)
    step = max(1, chunk // 2)
    for start in range(0, n, step):
        idx = np.arange(start, min(n, start + step))
        m = idx.size
        pts = np.repeat(flat[None, :], 2 * m, axis=0)
        pts[np.arange(m), idx] += h
        pts[m + np.arange(m), idx] -= h
        vals = np.asarray(f(pts.reshape((2 * m,) + x64.shape)), dtype=np.float64).ravel()
        bad = ~np.isfinite(vals)
        if bad.any():
            j = int(np.flatnonzero(bad)[0])
            raise NumericDomainError(f"non-finite function value at coordinate {int(idx[j % m])}")
        grad[idx] = (vals[:m] - vals[m:]) / (2.0 * h)
    return grad.reshape(x64.shape)


# ----------------------------------------------------------------------------
# helpers
# ----------------------------------------------------------------------------

def _pads(size, k, stride, padding):
    if padding == "valid":
        out = (size - k) // stride + 1
        return out, 0, 0
    if padding == "same":
        out = -(-size // stride)
        total = max((out - 1) * stride + k - size, 0)
        return out, total // 2, total - total // 2
    raise InvalidArgument(f"unknown padding {padding!r}")


def _windows(x, kh, kw, stride, padding):
    """(N,H,W,C) -> contiguous (N,Ho,Wo,kh,kw,C) plus padding bookkeeping."""
    if x.ndim != 4:
        raise InvalidArgument(f"expected NHWC input, got shape {x.shape}")
    n, hgt, wid, c = x.shape
    ho, pt, pb = _pads(hgt, kh, stride, padding)
    wo, pl, pr = _pads(wid, kw, stride, padding)
    if ho < 1 or wo < 1:
        raise InvalidArgument(f"window {kh}x{kw} does not fit input {x.shape}")
    xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0))) if (pt or pb or pl or pr) else x
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    win = win[:, :ho, :wo].transpose(0, 1, 2, 4, 5, 3)
    return np.ascontiguousarray(win), (xp.shape, pt, pl, hgt, wid)


def _col2im(gwin, geom, stride):
    (pshape, pt, pl, hgt, wid) = geom
    gxp = kernels.col2im(gwin, pshape[1:3], stride)
    return gxp[:, pt:pt + hgt, pl:pl + wid]


# ----------------------------------------------------------------------------
# primitives
# ----------------------------------------------------------------------------

def _dense_fwd(v, p):
    x, w, b = v
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0] or b.shape != (w.shape[1],):
        raise InvalidArgument(f"dense shape mismatch: x{x.shape} W{w.shape} b{b.shape}")
    return (x @ w + b).astype(result_dtype(x, w, b), copy=False), (x, w)


def _dense_vjp(ctx, g):
    x, w = ctx
    return g @ w.T, x.T @ g, g.sum(axis=0)


def _conv_fwd(v, p):
    x, k, b = v
    stride, padding = p.get("stride", 1), p.get("padding", "same")
    if k.ndim != 4 or x.ndim != 4 or x.shape[3] != k.shape[2] or b.shape != (k.shape[3],):
        raise InvalidArgument(f"conv2d shape mismatch: x{x.shape} K{k.shape} b{b.shape}")
    kh, kw, c, f = k.shape
    win, geom = _windows(x, kh, kw, stride, padding)
    n, ho, wo = win.shape[:3]
    cols = win.reshape(n * ho * wo, kh * kw * c)
    out = cols @ k.reshape(kh * kw * c, f) + b
    return out.reshape(n, ho, wo, f).astype(result_dtype(x, k, b), copy=False), (cols, k, geom, stride, win.shape)


def _conv_vjp(ctx, g):
    cols, k, geom, stride, wshape = ctx
    f = k.shape[3]
    g2 = g.reshape(-1, f)
    gk = (cols.T @ g2).reshape(k.shape)
    gcols = (g2 @ k.reshape(-1, f).T).reshape(wshape)
    return _col2im(gcols, geom, stride), gk, g2.sum(axis=0)


def _dwconv_fwd(v, p):
    x, k, b = v
    stride, padding = p.get("stride", 1), p.get("padding", "same")
    if k.ndim != 3 or x.ndim != 4 or x.shape[3] != k.shape[2] or b.shape != (k.shape[2],):
        raise InvalidArgument(f"depthwise_conv2d shape mismatch: x{x.shape} K{k.shape} b{b.shape}")
    kh, kw, _ = k.shape
    win, geom = _windows(x, kh, kw, stride, padding)
    out = np.einsum("nhwijc,ijc->nhwc", win, k, optimize=True) + b
    return out.astype(result_dtype(x, k, b), copy=False), (win, k, geom, stride)


def _dwconv_vjp(ctx, g):
    win, k, geom, stride = ctx
    gk = np.einsum("nhwijc,nhwc->ijc", win, g, optimize=True)
    gwin = g[:, :, :, None, None, :] * k
    return _col2im(gwin, geom, stride), gk, g.sum(axis=(0, 1, 2))


def _relu_fwd(v, p):
    x, = v
    mask = x > 0
    return np.where(mask, x, 0).astype(result_dtype(x), copy=False), mask


def _relu_vjp(mask, g):
    return (g * mask,)


def _pool_windows(x, p):
    size = p.get("size", 2)
    stride = p.get("stride", size)
    win, geom = _windows(x, size, size, stride, "valid")
    return win, geom, stride


def _maxpool_fwd(v, p):
    x, = v
    win, geom, stride = _pool_windows(x, p)
    n, ho, wo, kh, kw, c = win.shape
    flat = win.reshape(n, ho, wo, kh * kw, c)
    idx = flat.argmax(axis=3)
    out = np.take_along_axis(flat, idx[:, :, :, None, :], axis=3)[:, :, :, 0, :]
    return out, (idx, win.shape, geom, stride)


def _maxpool_vjp(ctx, g):
    idx, wshape, geom, stride = ctx
    n, ho, wo, kh, kw, c = wshape
    gflat = np.zeros((n, ho, wo, kh * kw, c), dtype=g.dtype)
    np.put_along_axis(gflat, idx[:, :, :, None, :], g[:, :, :, None, :], axis=3)
    return (_col2im(gflat.reshape(wshape), geom, stride),)


def _avgpool_fwd(v, p):
    x, = v
    win, geom, stride = _pool_windows(x, p)
    return win.mean(axis=(3, 4), dtype=result_dtype(x)), (win.shape, geom, stride)


def _avgpool_vjp(ctx, g):
    wshape, geom, stride = ctx
    kh, kw = wshape[3], wshape[4]
    gwin = np.broadcast_to((g / F32(kh * kw))[:, :, :, None, None, :], wshape)
    return (_col2im(gwin, geom, stride),)


def _softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _softmax_fwd(v, p):
    s = _softmax(v[0]).astype(result_dtype(v[0]), copy=False)
    return s, s


def _softmax_vjp(s, g):
    return (s * (g - (g * s).sum(axis=-1, keepdims=True)),)


def _add_fwd(v, p):
    a, b = v
    if np.shape(a) != np.shape(b):
        raise InvalidArgument(f"add shape mismatch: {np.shape(a)} vs {np.shape(b)}")
    return (a + b).astype(result_dtype(a, b), copy=False), None


def _add_vjp(ctx, g):
    return g, g


def _flatten_fwd(v, p):
    x, = v
    return x.reshape(x.shape[0], -1), x.shape


def _flatten_vjp(shape, g):
    return (g.reshape(shape),)


def _scale_fwd(v, p):
    f = result_dtype(v[0])(p["factor"])
    return (v[0] * f).astype(result_dtype(v[0]), copy=False), f


def _scale_vjp(f, g):
    return (g * f,)


def _wsum_fwd(v, p):
    x, = v
    w = np.asarray(p["weights"], dtype=result_dtype(x))
    return np.asarray((x * w).sum(dtype=np.float64), dtype=result_dtype(x)), w


def _wsum_vjp(w, g):
    return (np.broadcast_to(g * w, w.shape).astype(F32),)


def _xent_fwd(v, p):
    """Mean softmax cross-entropy; targets are class indices or probability rows."""
    z, t = v
    if z.ndim != 2:
        raise InvalidArgument(f"cross-entropy expects (N,K) logits, got {z.shape}")
    n, k = z.shape
    if t.ndim == 1:
        t = np.asarray(t, dtype=np.int64)
        if t.shape[0] != n or (t < 0).any() or (t >= k).any():
            raise InvalidArgument("labels do not conform to logits")
        onehot = np.zeros((n, k), dtype=F32)
        onehot[np.arange(n), t] = 1
        t = onehot
    elif t.shape != z.shape:
        raise InvalidArgument(f"soft targets {t.shape} do not match logits {z.shape}")
    zs = z.astype(np.float64) - z.max(axis=1, keepdims=True)
    logp = zs - np.log(np.exp(zs).sum(axis=1, keepdims=True))
    loss = -(t * logp).sum() / n
    return np.asarray(loss, dtype=result_dtype(z)), (np.exp(logp), t, n)


def _xent_vjp(ctx, g):
    s, t, n = ctx
    # labels are constants; fused softmax gradient
    return ((s - t) * (float(g) / n)).astype(F32), None


for _k, _f, _b in [
    ("dense", _dense_fwd, _dense_vjp),
    ("conv2d", _conv_fwd, _conv_vjp),
    ("depthwise_conv2d", _dwconv_fwd, _dwconv_vjp),
    ("relu", _relu_fwd, _relu_vjp),
    ("max_pool", _maxpool_fwd, _maxpool_vjp),
    ("avg_pool", _avgpool_fwd, _avgpool_vjp),
    ("softmax", _softmax_fwd, _softmax_vjp),
    ("add", _add_fwd, _add_vjp),
    ("flatten", _flatten_fwd, _flatten_vjp),
    ("cross_entropy", _xent_fwd, _xent_vjp),
    ("scale", _scale_fwd, _scale_vjp),
    ("weighted_sum", _wsum_fwd, _wsum_vjp),
]:
    register_primitive(_k, _f, _b)


# thin wrappers used by model code

def dense(x, w, b):
    return forward_primitive("dense", [x, w, b])


def conv2d(x, k, b, stride=1, padding="same"):
    return forward_primitive("conv2d", [x, k, b], {"stride": stride, "padding": padding})


def depthwise_conv2d(x, k, b, stride=1, padding="same"):
    return forward_primitive("depthwise_conv2d", [x, k, b], {"stride": stride, "padding": padding})


def relu(x):
    return forward_primitive("relu", [x])


def max_pool(x, size=2, stride=None):
    return forward_primitive("max_pool", [x], {"size": size, "stride": stride or size})


def avg_pool(x, size=2, stride=None):
    return forward_primitive("avg_pool", [x], {"size": size, "stride": stride or size})


def softmax(x):
    return forward_primitive("softmax", [x])


def add(a, b):
    return forward_primitive("add", [a, b])


def flatten(x):
    return forward_primitive("flatten", [x])


def scale(x, factor):
    return forward_primitive("scale", [x], {"factor": factor})


def weighted_sum(x, weights):
    return forward_primitive("weighted_sum", [x], {"weights": weights})


def cross_entropy(logits, targets):
    return forward_primitive("cross_entropy", [logits, np.asarray(targets)])


def softmax_np(z, temperature=1.0):
    """Row softmax in float64 (no tape)."""
    z = np.asarray(z, dtype=np.float64) / temperature
    return _softmax(z)
