"""Binary model container.

Layout (little-endian)::

    magic      8 bytes  b"TADVMDL\\0"
    version    u16
    kind       u16      0 = float graph, 1 = quantized graph
    header_len u32
    header     JSON (utf-8): graph description, metadata, blob table
    blobs      raw arrays addressed by (offset, nbytes) relative to blob start

Quantized files add a ``quant`` section whose per-tensor parameters live in
a binary blob (scale as float64, zero point, bits, symmetric flag) and whose
requantization multipliers live in a second blob of (m0, shift) pairs.
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .models import Layer, ModelGraph
from .quant import QLayer, QuantizedModel, QuantParams

MAGIC = b"TADVMDL\x00"
VERSION = 1
KIND_FLOAT, KIND_QUANT = 0, 1
_PREFIX = struct.Struct("<8sHHI")

QPARAM_DTYPE = np.dtype([("scale", "<f8"), ("zero_point", "<i8"), ("bits", "<i8"), ("symmetric", "<i8")])
MULT_DTYPE = np.dtype([("m0", "<i8"), ("shift", "<i8")])


class _Blobs:
    def __init__(self):
        self.parts = []
        self.size = 0

    def add(self, array, dtype):
        a = np.ascontiguousarray(array, dtype=dtype)
        entry = {"dtype": np.dtype(dtype).str, "shape": list(a.shape), "offset": self.size, "nbytes": a.nbytes}
        self.parts.append(a.tobytes())
        self.size += a.nbytes
        return entry


def _pack(kind, header, blobs):
    body = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    return _PREFIX.pack(MAGIC, VERSION, kind, len(body)) + body + b"".join(blobs.parts)


def config_hash(config) -> str:
    """Short stable hash of a JSON-serialisable config (used for provenance)."""
    raw = json.dumps(config, sort_keys=True, default=str, separators=(",", ":")).encode()
    return hashlib.sha256(raw).hexdigest()[:16]


def _layer_header(name, kind, inputs, attrs):
    return {"name": name, "kind": kind, "inputs": list(inputs), "attrs": attrs}


def model_to_bytes(model: ModelGraph) -> bytes:
    blobs = _Blobs()
    layers = []
    for l in model.layers:
        h = _layer_header(l.name, l.kind, l.inputs, l.attrs)
        h["params"] = {k: blobs.add(l.params[k], "<f4") for k in sorted(l.params)}
        layers.append(h)
    header = {"input_shape": list(model.input_shape), "num_classes": model.num_classes,
              "metadata": model.metadata, "layers": layers}
    return _pack(KIND_FLOAT, header, blobs)


def quantized_to_bytes(qm: QuantizedModel) -> bytes:
    blobs = _Blobs()
    names = list(qm.tensor_params())
    table = np.zeros(len(names), dtype=QPARAM_DTYPE)
    for i, p in enumerate(qm.tensor_params().values()):
        table[i] = (p.scale, p.zero_point, p.bits, int(p.symmetric))
    mults, layers = [], []
    for l in qm.layers:
        h = _layer_header(l.name, l.kind, l.inputs, l.attrs)
        h["mult_range"] = [len(mults), len(mults) + len(l.multipliers)]
        mults.extend(l.multipliers)
        if l.weight is not None:
            wdt = "<i4"
            h["weight"] = blobs.add(l.weight, wdt)
            h["bias"] = blobs.add(l.bias, "<i8")
        layers.append(h)
    mtab = np.array([tuple(m) for m in mults], dtype=MULT_DTYPE)
    header = {
        "input_shape": list(qm.input_shape), "num_classes": qm.num_classes, "metadata": qm.metadata,
        "layers": layers,
        "quant": {"bits": qm.bits, "tensors": names,
                  "params": blobs.add(table, QPARAM_DTYPE), "multipliers": blobs.add(mtab, MULT_DTYPE)},
    }
    return _pack(KIND_QUANT, header, blobs)


def _parse(raw: bytes):
    if len(raw) < _PREFIX.size:
        raise FormatError("truncated model file header", offset=len(raw))
    magic, version, kind, hlen = _PREFIX.unpack_from(raw, 0)
    if magic != MAGIC:
        raise FormatError("bad magic bytes", offset=0)
    if version != VERSION:
        raise FormatError(f"unsupported format version {version} (expected {VERSION})", offset=8)
    if kind not in (KIND_FLOAT, KIND_QUANT):
        raise FormatError(f"unknown container kind {kind}", offset=10)
    start = _PREFIX.size
    if len(raw) < start + hlen:
        raise FormatError("truncated header", offset=len(raw))
    try:
        header = json.loads(raw[start:start + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"malformed header: {e}", offset=start) from None
    base = start + hlen

    def blob(entry):
        lo = base + entry["offset"]
        hi = lo + entry["nbytes"]
        if hi > len(raw):
            raise FormatError("truncated parameter blob", offset=len(raw))
        dt = np.dtype(entry["dtype"]) if isinstance(entry["dtype"], str) else entry["dtype"]
        return np.frombuffer(raw[lo:hi], dtype=dt).reshape(entry["shape"]).copy()

    return kind, header, blob


def model_from_bytes(raw: bytes):
    kind, header, blob = _parse(raw)
    try:
        if kind == KIND_FLOAT:
            layers = [Layer(h["name"], h["kind"], tuple(h["inputs"]), h["attrs"],
                            {k: blob(e).astype(np.float32) for k, e in h["params"].items()})
                      for h in header["layers"]]
            return ModelGraph(header["input_shape"], header["num_classes"], layers, header["metadata"])
        q = header["quant"]
        qe = dict(q["params"], dtype=QPARAM_DTYPE)
        me = dict(q["multipliers"], dtype=MULT_DTYPE)
        table = blob(qe)
        mtab = blob(me)
        params = {name: QuantParams(float(r["scale"]), int(r["zero_point"]), int(r["bits"]), bool(r["symmetric"]))
                  for name, r in zip(q["tensors"], table)}
        qlayers = []
        for h in header["layers"]:
            a, b = h["mult_range"]
            ql = QLayer(h["name"], h["kind"], tuple(h["inputs"]), h["attrs"], params[h["name"]],
                        multipliers=[(int(m["m0"]), int(m["shift"])) for m in mtab[a:b]])
            if "weight" in h:
                ql.weight = blob(h["weight"]).astype(np.int32)
                ql.bias = blob(h["bias"]).astype(np.int64)
                ql.weight_params = params[f"{h['name']}/kernel"]
            qlayers.append(ql)
        return QuantizedModel(q["bits"], header["input_shape"], header["num_classes"], params["input"],
                              qlayers, header["metadata"])
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, FormatError):
            raise
        raise FormatError(f"inconsistent graph description: {e}", offset=_PREFIX.size) from None


def save_model(model, path):
    data = quantized_to_bytes(model) if isinstance(model, QuantizedModel) else model_to_bytes(model)
    Path(path).write_bytes(data)


def load_model(path):
    return model_from_bytes(Path(path).read_bytes())
