"""Post-training int8/int16 quantization and integer inference.

Per-tensor affine quantization: int8 uses asymmetric activations and
symmetric weights, int16 is symmetric throughout.  Rounding is
half-away-from-zero everywhere.  Layer outputs are rescaled with a 31-bit
fixed-point multiplier and a right shift.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import kernels
from .errors import InvalidArgument, QuantOverflowError
from .models import Layer, ModelGraph

F32 = np.float32
SUPPORTED_BITS = (8, 16)
# int8 kernels accumulate in int32; the int16 path uses int64 accumulators
# limited to 47 bits so the fixed-point rescale stays exact
ACC_LIMIT = {8: 2**31 - 1, 16: 2**47 - 1}


def qrange(bits):
    if bits not in SUPPORTED_BITS:
        raise InvalidArgument(f"bit-width must be 8 or 16, got {bits}")
    return -(1 << (bits - 1)), (1 << (bits - 1)) - 1


@dataclass(frozen=True)
class QuantParams:
    scale: float
    zero_point: int
    bits: int
    symmetric: bool

    def __post_init__(self):
        qmin, qmax = qrange(self.bits)
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise InvalidArgument(f"scale must be positive, got {self.scale}")
        if not qmin <= self.zero_point <= qmax:
            raise InvalidArgument(f"zero point {self.zero_point} outside int{self.bits}")
        if self.symmetric and self.zero_point != 0:
            raise InvalidArgument("symmetric quantization requires zero_point == 0")

    @property
    def qmin(self):
        return qrange(self.bits)[0]

    @property
    def qmax(self):
        return qrange(self.bits)[1]


def round_half_away(x):
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def params_from_range(lo, hi, bits, symmetric):
    """Quantization parameters covering ``[lo, hi]`` (extended to include zero)."""
    qmin, qmax = qrange(bits)
    lo, hi = min(float(lo), 0.0), max(float(hi), 0.0)
    if symmetric:
        m = max(abs(lo), abs(hi))
        if m == 0.0:
            return QuantParams(1.0, 0, bits, True)
        return QuantParams(m / qmax, 0, bits, True)
    if hi == lo:
        return QuantParams(1.0, 0, bits, False)
    scale = (hi - lo) / (qmax - qmin)
    zp = int(np.clip(round_half_away(qmin - lo / scale), qmin, qmax))
    return QuantParams(scale, zp, bits, False)


def quantize_tensor(x, p: QuantParams):
    """``clamp(round(x / scale) + zero_point, qmin, qmax)`` as int32."""
    q = round_half_away(np.asarray(x, dtype=np.float64) / p.scale) + p.zero_point
    return np.clip(q, p.qmin, p.qmax).astype(np.int32)


def dequantize_tensor(q, p: QuantParams):
    """``(q - zero_point) * scale`` in float64, so lattice points are exact."""
    return (np.asarray(q, dtype=np.float64) - p.zero_point) * p.scale


def quantize_multiplier(m):
    """Split a positive real into ``(m0, n)`` with ``m ~= m0 * 2**-n`` and ``2**30 <= m0 < 2**31``."""
    if not m > 0:
        raise InvalidArgument(f"multiplier must be positive, got {m}")
    frac, exp = math.frexp(m)
    m0 = int(round_half_away(frac * (1 << 31)))
    if m0 == 1 << 31:
        m0 //= 2
        exp += 1
    n = 31 - exp
    if n < 17:
        raise InvalidArgument(f"rescale multiplier {m} too large for fixed-point requantization")
    return m0, n


def _rshift_round(t, s):
    """Round-half-away right shift of int64 ``t`` by ``s`` bits."""
    if s == 0:
        return t
    mag = (np.abs(t) + (np.int64(1) << (s - 1))) >> s
    return np.where(t < 0, -mag, mag)


# ----------------------------------------------------------------------------
# calibration
# ----------------------------------------------------------------------------

WEIGHTED = ("conv2d", "depthwise_conv2d", "dense")
PASSTHROUGH = ("max_pool", "avg_pool", "flatten")


def calibrate(model: ModelGraph, calibration, bits, batch=256):
    """Per-tensor parameters from exact min/max over ``calibration``.

    Keys: ``"input"``, each layer name (its post-activation output) and
    ``"<layer>/kernel"`` for weights.  Pooling and flatten layers share their
    input's parameters.  The input range always covers the pixel domain [0, 1].
    """
    qrange(bits)
    images = calibration.images if hasattr(calibration, "images") else np.asarray(calibration, dtype=F32)
    if len(images) == 0:
        raise InvalidArgument("empty calibration set")
    act_sym = bits == 16
    lo = np.full(len(model.layers) + 1, np.inf)
    hi = np.full(len(model.layers) + 1, -np.inf)
    for s in range(0, len(images), batch):
        xb = np.asarray(images[s:s + batch], dtype=F32)
        lo[0] = min(lo[0], xb.min())
        hi[0] = max(hi[0], xb.max())
        for i, out in enumerate(model.intermediate(xb)):
            lo[i + 1] = min(lo[i + 1], out.min())
            hi[i + 1] = max(hi[i + 1], out.max())
    params = {"input": params_from_range(min(lo[0], 0.0), max(hi[0], 1.0), bits, act_sym)}
    names = ["input"]
    for i, layer in enumerate(model.layers):
        if layer.kind in PASSTHROUGH:
            src = layer.inputs[0]
            params[layer.name] = params[names[src + 1]]
        else:
            params[layer.name] = params_from_range(lo[i + 1], hi[i + 1], bits, act_sym)
        names.append(layer.name)
        if layer.kind in WEIGHTED:
            w = layer.params["kernel"]
            params[f"{layer.name}/kernel"] = params_from_range(-np.abs(w).max(), np.abs(w).max(), bits, True)
    return params


# ----------------------------------------------------------------------------
# quantized model
# ----------------------------------------------------------------------------

@dataclass
class QLayer:
    name: str
    kind: str
    inputs: tuple
    attrs: dict
    out: QuantParams
    weight: np.ndarray | None = None  # int32
    weight_params: QuantParams | None = None
    bias: np.ndarray | None = None  # int64, scale = s_in * s_w
    multipliers: list = field(default_factory=list)  # [(m0, n)] per rescaled input


class QuantizedModel:
    """Integer model: weights, per-tensor parameters and requantization multipliers."""

    def __init__(self, bits, input_shape, num_classes, input_params, layers, metadata=None):
        self.bits = bits
        self.input_shape = tuple(input_shape)
        self.num_classes = num_classes
        self.input_params = input_params
        self.layers = list(layers)
        self.metadata = dict(metadata or {})

    def tensor_params(self):
        out = {"input": self.input_params}
        for l in self.layers:
            out[l.name] = l.out
            if l.weight_params is not None:
                out[f"{l.name}/kernel"] = l.weight_params
        return out

    def _in_params(self, j):
        return self.input_params if j == -1 else self.layers[j].out

    # integer inference -------------------------------------------------------

    def infer(self, x):
        """Integer forward pass; returns ``(logits, probabilities)`` as float32 / float64."""
        x = np.asarray(x, dtype=np.float64)
        single = x.shape == self.input_shape
        if single:
            x = x[None]
        if x.shape[1:] != self.input_shape:
            raise InvalidArgument(f"input shape {x.shape[1:]} != model input {self.input_shape}")
        q = _int_forward(self, quantize_tensor(x, self.input_params))
        logits = dequantize_tensor(q, self.layers[-1].out).astype(F32)
        probs = ad.softmax_np(logits)
        return (logits[0], probs[0]) if single else (logits, probs)

    def logits(self, x):
        return self.infer(x)[0]

    def probs(self, x):
        return self.infer(x)[1]

    def predict(self, x):
        return np.argmax(self.infer(x)[0], axis=-1)

    def output_codes(self, x):
        """Integer codes of the output tensor."""
        x = np.asarray(x, dtype=np.float64)
        return _int_forward(self, quantize_tensor(x, self.input_params))


def _requant(acc, mult, out: QuantParams, relu, limit, name):
    if np.abs(acc).max(initial=0) > limit:
        raise QuantOverflowError(name, limit)
    m0, n = mult
    y = kernels.mul_shift_round(acc, m0, n) + out.zero_point
    lo = out.zero_point if relu else out.qmin
    return np.clip(y, max(lo, out.qmin), out.qmax).astype(np.int32)


def _int_forward(qm: QuantizedModel, xq):
    limit = ACC_LIMIT[qm.bits]
    outs = []
    for layer in qm.layers:
        src = [xq if j == -1 else outs[j] for j in layer.inputs]
        ps = [qm._in_params(j) for j in layer.inputs]
        relu = layer.attrs.get("activation") == "relu"
        k = layer.kind
        if k in ("conv2d", "depthwise_conv2d"):
            a = src[0].astype(np.int64) - ps[0].zero_point
            stride, padding = layer.attrs.get("stride", 1), layer.attrs.get("padding", "same")
            kh, kw = layer.weight.shape[:2]
            ho, pt, _ = ad._pads(a.shape[1], kh, stride, padding)
            wo, pl, _ = ad._pads(a.shape[2], kw, stride, padding)
            fn = kernels.int_conv2d if k == "conv2d" else kernels.int_depthwise_conv2d
            acc = fn(a, layer.weight, layer.bias, stride, pt, pl, ho, wo)
            y = _requant(acc, layer.multipliers[0], layer.out, relu, limit, layer.name)
        elif k == "dense":
            a = src[0].astype(np.int64) - ps[0].zero_point
            acc = kernels.int_dense(a, layer.weight, layer.bias)
            y = _requant(acc, layer.multipliers[0], layer.out, relu, limit, layer.name)
        elif k == "add":
            y = _int_add(src, ps, layer, relu)
        elif k == "relu":
            a = src[0].astype(np.int64) - ps[0].zero_point
            y = _requant(a, layer.multipliers[0], layer.out, True, limit, layer.name)
        elif k == "max_pool":
            win, _ = ad._windows(src[0], layer.attrs["size"], layer.attrs["size"],
                                 layer.attrs.get("stride") or layer.attrs["size"], "valid")
            y = win.max(axis=(3, 4))
        elif k == "avg_pool":
            size = layer.attrs["size"]
            win, _ = ad._windows(src[0].astype(np.int64) - ps[0].zero_point, size, size,
                                 layer.attrs.get("stride") or size, "valid")
            s = win.sum(axis=(3, 4))
            cnt = size * size
            mag = (np.abs(s) + cnt // 2) // cnt
            y = np.clip(np.where(s < 0, -mag, mag) + layer.out.zero_point, layer.out.qmin, layer.out.qmax)
        elif k == "flatten":
            y = src[0].reshape(src[0].shape[0], -1)
        else:  # pragma: no cover
            raise InvalidArgument(k)
        outs.append(np.asarray(y, dtype=np.int32))
    return outs[-1]


def _int_add(src, ps, layer, relu):
    terms = []
    for q, p, (m0, n) in zip(src, ps, layer.multipliers):
        terms.append(((q.astype(np.int64) - p.zero_point) * m0, n))
    n_hi = max(t[1] for t in terms)
    n_lo = min(t[1] for t in terms)
    n = min(n_hi, n_lo + 14)  # keeps the aligned int64 sum below 2**63
    total = np.zeros_like(terms[0][0])
    for t, nt in terms:
        total = total + (_rshift_round(t, nt - n) if nt > n else t << (n - nt))
    y = _rshift_round(total, n) + layer.out.zero_point
    lo = layer.out.zero_point if relu else layer.out.qmin
    return np.clip(y, lo, layer.out.qmax)


def quantize_model(model: ModelGraph, calibration, bits):
    """Post-training quantization of ``model`` with parameters from :func:`calibrate`."""
    params = calibrate(model, calibration, bits)
    names = ["input"] + [l.name for l in model.layers]
    qlayers = []
    for layer in model.layers:
        out = params[layer.name]
        ins = [params[names[j + 1]] for j in layer.inputs]
        ql = QLayer(layer.name, layer.kind, tuple(layer.inputs), dict(layer.attrs), out)
        if layer.kind in WEIGHTED:
            wp = params[f"{layer.name}/kernel"]
            ql.weight = quantize_tensor(layer.params["kernel"], wp)
            ql.weight_params = wp
            bscale = ins[0].scale * wp.scale
            bq = round_half_away(layer.params["bias"].astype(np.float64) / bscale)
            if np.abs(bq).max(initial=0) > ACC_LIMIT[bits]:
                raise QuantOverflowError(layer.name, ACC_LIMIT[bits])
            ql.bias = bq.astype(np.int64)
            ql.multipliers = [quantize_multiplier(bscale / out.scale)]
        elif layer.kind in ("add", "relu"):
            ql.multipliers = [quantize_multiplier(p.scale / out.scale) for p in ins]
        qlayers.append(ql)
    meta = dict(model.metadata)
    meta["bits"] = bits
    return QuantizedModel(bits, model.input_shape, model.num_classes, params["input"], qlayers, meta)


def integer_infer(qm: QuantizedModel, x):
    """Integer-only forward pass; returns dequantized logits and class probabilities."""
    return qm.infer(x)


# ----------------------------------------------------------------------------
# float reference paths
# ----------------------------------------------------------------------------

def _qdq(x, p):
    return dequantize_tensor(quantize_tensor(x, p), p)


def _qdq_snapped(x, p):
    # x / scale snapped to 2**-24 so exact ties (e.g. pooled means) are not
    # decided by float64 noise
    r = np.round(np.asarray(x, dtype=np.float64) / p.scale * 2.0**24) / 2.0**24
    q = np.clip(round_half_away(r) + p.zero_point, p.qmin, p.qmax)
    return (q - p.zero_point) * p.scale


def _float_layer(kind, attrs, ins, kernel, bias):
    """Float64 versions of the layer ops (no tape)."""
    if kind == "conv2d":
        kh, kw, c, f = kernel.shape
        win, _ = ad._windows(ins[0], kh, kw, attrs.get("stride", 1), attrs.get("padding", "same"))
        y = np.tensordot(win, kernel, axes=([3, 4, 5], [0, 1, 2])) + bias
    elif kind == "depthwise_conv2d":
        kh, kw, _ = kernel.shape
        win, _ = ad._windows(ins[0], kh, kw, attrs.get("stride", 1), attrs.get("padding", "same"))
        y = np.einsum("nhwijc,ijc->nhwc", win, kernel) + bias
    elif kind == "dense":
        y = ins[0] @ kernel + bias
    elif kind == "add":
        y = ins[0] + ins[1]
    elif kind == "relu":
        return np.maximum(ins[0], 0)
    elif kind == "max_pool":
        s = attrs["size"]
        win, _ = ad._windows(ins[0], s, s, attrs.get("stride") or s, "valid")
        return win.max(axis=(3, 4))
    elif kind == "avg_pool":
        s = attrs["size"]
        win, _ = ad._windows(ins[0], s, s, attrs.get("stride") or s, "valid")
        return win.mean(axis=(3, 4))
    elif kind == "flatten":
        return ins[0].reshape(ins[0].shape[0], -1)
    else:  # pragma: no cover
        raise InvalidArgument(kind)
    if attrs.get("activation") == "relu":
        y = np.maximum(y, 0)
    return y


def fake_quant_infer(qm: QuantizedModel, x):
    """Float64 simulation: quantize-dequantize at every tensor boundary; returns logits."""
    x = np.asarray(x, dtype=np.float64)
    single = x.shape == qm.input_shape
    if single:
        x = x[None]
    a = _qdq(x, qm.input_params)
    outs = []
    for l in qm.layers:
        ins = [a if j == -1 else outs[j] for j in l.inputs]
        kernel = bias = None
        if l.weight is not None:
            kernel = dequantize_tensor(l.weight, l.weight_params)
            bias = l.bias.astype(np.float64) * (qm._in_params(l.inputs[0]).scale * l.weight_params.scale)
        y = _float_layer(l.kind, l.attrs, ins, kernel, bias)
        outs.append(_qdq_snapped(y, l.out))
    return outs[-1][0] if single else outs[-1]


def dequantize_model(qm: QuantizedModel) -> ModelGraph:
    """Float graph whose weights are the dequantized integer weights."""
    layers = []
    for l in qm.layers:
        params = {}
        if l.weight is not None:
            params["kernel"] = dequantize_tensor(l.weight, l.weight_params).astype(F32)
            bscale = qm._in_params(l.inputs[0]).scale * l.weight_params.scale
            params["bias"] = (l.bias.astype(np.float64) * bscale).astype(F32)
        layers.append(Layer(l.name, l.kind, tuple(l.inputs), dict(l.attrs), params))
    meta = dict(qm.metadata)
    meta["dequantized_from_bits"] = qm.bits
    return ModelGraph(qm.input_shape, qm.num_classes, layers, meta)


def quantize_adversarial_input(x_adv, qm: QuantizedModel):
    """The float32 lattice point the quantized model actually perceives for ``x_adv``."""
    return _qdq(x_adv, qm.input_params).astype(F32)
