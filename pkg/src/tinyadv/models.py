"""Toy-scale classifiers, training and evaluation."""
from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import InvalidArgument, TrainingDiverged

F32 = np.float32

LAYER_KINDS = ("conv2d", "depthwise_conv2d", "dense", "relu", "max_pool", "avg_pool", "add", "flatten")


@dataclass
class Layer:
    name: str
    kind: str
    inputs: tuple = (-1,)  # indices of producing layers, -1 is the graph input
    attrs: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)


class ModelGraph:
    """Feed-forward classifier over NHWC images (or flat vectors).

    ``forward`` accepts ndarrays or tape variables; parameters can be
    overridden by name (``"layer/kernel"``) so training can watch them.
    """

    def __init__(self, input_shape, num_classes, layers, metadata=None):
        self.input_shape = tuple(int(d) for d in input_shape)
        self.num_classes = int(num_classes)
        self.layers = list(layers)
        self.metadata = dict(metadata or {})
        self._check()

    def _check(self):
        names = set()
        for i, layer in enumerate(self.layers):
            if layer.kind not in LAYER_KINDS:
                raise InvalidArgument(f"unknown layer kind {layer.kind!r}")
            if layer.name in names:
                raise InvalidArgument(f"duplicate layer name {layer.name!r}")
            names.add(layer.name)
            for j in layer.inputs:
                if not -1 <= j < i:
                    raise InvalidArgument(f"layer {layer.name!r} reads from invalid index {j}")
        out = self.forward(np.zeros((1,) + self.input_shape, dtype=F32))
        if out.shape != (1, self.num_classes):
            raise InvalidArgument(f"graph output {out.shape[1:]} does not match {self.num_classes} classes")

    # -- parameters ---------------------------------------------------------

    def parameters(self):
        return {f"{l.name}/{k}": v for l in self.layers for k, v in l.params.items()}

    def set_parameters(self, params):
        for l in self.layers:
            for k in l.params:
                l.params[k] = np.asarray(params[f"{l.name}/{k}"], dtype=F32).copy()

    def num_parameters(self):
        return int(sum(v.size for v in self.parameters().values()))

    def copy(self):
        return copy.deepcopy(self)

    # -- inference ----------------------------------------------------------

    def _run(self, x, params=None, upto=None):
        outs = []
        for i, layer in enumerate(self.layers):
            ins = [x if j == -1 else outs[j] for j in layer.inputs]
            p = {k: (params.get(f"{layer.name}/{k}", v) if params else v) for k, v in layer.params.items()}
            outs.append(_apply(layer, ins, p))
            if upto is not None and i == upto:
                break
        return outs

    def forward(self, x, params=None, return_features=False):
        """Logits for a batch; with ``return_features`` also the penultimate activations."""
        xv = ad.value_of(x)
        if xv.shape[1:] != self.input_shape:
            raise InvalidArgument(f"input shape {xv.shape[1:]} != model input {self.input_shape}")
        outs = self._run(x, params)
        if return_features:
            src = self.layers[-1].inputs[0]
            feats = x if src == -1 else outs[src]
            return outs[-1], feats
        return outs[-1]

    def logits(self, x):
        x = np.asarray(x, dtype=F32)
        single = x.shape == self.input_shape
        out = self.forward(x[None] if single else x)
        return out[0] if single else out

    def probs(self, x):
        return ad.softmax_np(self.logits(x))

    def predict(self, x):
        return np.argmax(self.logits(x), axis=-1)

    def features(self, x):
        _, f = self.forward(np.asarray(x, dtype=F32), return_features=True)
        return f

    def tensor_names(self):
        return ["input"] + [l.name for l in self.layers]

    def intermediate(self, x):
        """All layer outputs (post-activation) for a batch, in layer order."""
        return self._run(np.asarray(x, dtype=F32))


def _apply(layer, ins, p):
    k, a = layer.kind, layer.attrs
    if k == "conv2d":
        y = ad.conv2d(ins[0], p["kernel"], p["bias"], a.get("stride", 1), a.get("padding", "same"))
    elif k == "depthwise_conv2d":
        y = ad.depthwise_conv2d(ins[0], p["kernel"], p["bias"], a.get("stride", 1), a.get("padding", "same"))
    elif k == "dense":
        y = ad.dense(ins[0], p["kernel"], p["bias"])
    elif k == "relu":
        return ad.relu(ins[0])
    elif k == "max_pool":
        return ad.max_pool(ins[0], a["size"], a.get("stride"))
    elif k == "avg_pool":
        return ad.avg_pool(ins[0], a["size"], a.get("stride"))
    elif k == "add":
        y = ad.add(ins[0], ins[1])
    elif k == "flatten":
        return ad.flatten(ins[0])
    else:  # pragma: no cover - guarded by _check
        raise InvalidArgument(k)
    if a.get("activation") == "relu":
        y = ad.relu(y)
    return y


# ----------------------------------------------------------------------------
# builders
# ----------------------------------------------------------------------------

def _he(rng, shape, fan_in):
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(F32)


def _conv(rng, name, cin, cout, k=3, stride=1, act="relu", inputs=(-1,)):
    return Layer(name, "conv2d", tuple(inputs), {"stride": stride, "padding": "same", "activation": act},
                 {"kernel": _he(rng, (k, k, cin, cout), k * k * cin), "bias": np.zeros(cout, F32)})


def _dwconv(rng, name, c, k=3, stride=1, inputs=(-1,)):
    return Layer(name, "depthwise_conv2d", tuple(inputs), {"stride": stride, "padding": "same", "activation": "relu"},
                 {"kernel": _he(rng, (k, k, c), k * k), "bias": np.zeros(c, F32)})


def _dense(rng, name, cin, cout, inputs=(-1,), act=None):
    return Layer(name, "dense", tuple(inputs), {"activation": act},
                 {"kernel": _he(rng, (cin, cout), cin) * F32(0.5), "bias": np.zeros(cout, F32)})


def _check_image_shape(input_shape):
    if len(input_shape) != 3 or input_shape[0] != input_shape[1] or input_shape[2] not in (1, 3):
        raise InvalidArgument(f"expected square RGB or grayscale input, got {tuple(input_shape)}")
    if input_shape[0] < 8 or input_shape[0] % 4:
        raise InvalidArgument(f"image side must be a multiple of 4 and >= 8, got {input_shape[0]}")


def build_toy_resnet(input_shape=(16, 16, 3), classes=10, width=8, seed=0):
    """Stem conv, one residual block, two downsampling stages, global pooling, dense head."""
    _check_image_shape(input_shape)
    rng = np.random.default_rng(seed)
    h, _, c = input_shape
    w2 = 2 * width
    layers = [
        _conv(rng, "stem", c, width),                                    # 0
        _conv(rng, "res_a", width, width, inputs=(0,)),                  # 1
        _conv(rng, "res_b", width, width, act=None, inputs=(1,)),        # 2
        Layer("res_add", "add", (2, 0), {"activation": "relu"}),         # 3
        Layer("pool1", "max_pool", (3,), {"size": 2}),                   # 4
        _conv(rng, "conv2", width, w2, inputs=(4,)),                     # 5
        Layer("pool2", "max_pool", (5,), {"size": 2}),                   # 6
        _conv(rng, "conv3", w2, w2, inputs=(6,)),                        # 7
        Layer("gap", "avg_pool", (7,), {"size": h // 4}),                # 8
        Layer("flat", "flatten", (8,)),                                  # 9
        _dense(rng, "head", w2, classes, inputs=(9,)),                   # 10
    ]
    return ModelGraph(input_shape, classes, layers, {"arch": "toy-resnet", "seed": seed, "width": width})


def build_toy_dscnn(input_shape=(16, 16, 3), classes=2, width=8, seed=0):
    """Strided stem followed by two depthwise-separable blocks."""
    _check_image_shape(input_shape)
    rng = np.random.default_rng(seed)
    h, _, c = input_shape
    w2 = 2 * width
    layers = [
        _conv(rng, "stem", c, width, stride=2),                          # 0
        _dwconv(rng, "dw1", width, inputs=(0,)),                         # 1
        _conv(rng, "pw1", width, w2, k=1, inputs=(1,)),                  # 2
        _dwconv(rng, "dw2", w2, inputs=(2,)),                            # 3
        _conv(rng, "pw2", w2, w2, k=1, inputs=(3,)),                     # 4
        Layer("gap", "avg_pool", (4,), {"size": h // 2}),                # 5
        Layer("flat", "flatten", (5,)),                                  # 6
        _dense(rng, "head", w2, classes, inputs=(6,)),                   # 7
    ]
    return ModelGraph(input_shape, classes, layers, {"arch": "toy-dscnn", "seed": seed, "width": width})


def build_mlp(n_features, hidden, classes, seed=0):
    rng = np.random.default_rng(seed)
    layers = [_dense(rng, "fc1", n_features, hidden, act="relu"), _dense(rng, "head", hidden, classes, inputs=(0,))]
    return ModelGraph((n_features,), classes, layers, {"arch": "mlp", "seed": seed})


def linear_classifier(weights, bias):
    """Dense-only model with logits ``x @ weights + bias``."""
    w = np.asarray(weights, dtype=F32)
    b = np.asarray(bias, dtype=F32)
    layer = Layer("head", "dense", (-1,), {"activation": None}, {"kernel": w, "bias": b})
    return ModelGraph((w.shape[0],), w.shape[1], [layer], {"arch": "linear"})


ARCHITECTURES = {"toy-resnet": build_toy_resnet, "toy-dscnn": build_toy_dscnn}


def build(arch, input_shape, classes, seed=0, **kw):
    if arch not in ARCHITECTURES:
        raise InvalidArgument(f"unknown architecture {arch!r}")
    model = ARCHITECTURES[arch](tuple(input_shape), classes, seed=seed, **kw)
    model.metadata["arch"] = arch
    return model


# ----------------------------------------------------------------------------
# training
# ----------------------------------------------------------------------------

@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 32
    lr: float = 0.05
    optimizer: str = "sgd-momentum"
    momentum: float = 0.9
    seed: int = 0
    clip_norm: float | None = None  # global gradient-norm cap per step

    def __post_init__(self):
        if self.epochs < 1:
            raise InvalidArgument("epochs must be >= 1")
        if not self.lr > 0:
            raise InvalidArgument("learning rate must be positive")
        if self.batch_size < 1:
            raise InvalidArgument("batch size must be >= 1")
        if self.optimizer not in ("sgd", "sgd-momentum"):
            raise InvalidArgument(f"unknown optimizer {self.optimizer!r}")
        if self.clip_norm is not None and not self.clip_norm > 0:
            raise InvalidArgument("clip_norm must be positive")


def cross_entropy_loss(model, params, xb, yb, rng):
    return ad.cross_entropy(model.forward(xb, params), yb)


def fit(model, images, labels, cfg: TrainConfig, loss_fn=cross_entropy_loss, batch_hook=None):
    """Minibatch SGD on ``model`` in place; returns the per-epoch mean loss trace.

    ``loss_fn(model, params, xb, yb, rng)`` must return a scalar tape variable.
    ``batch_hook(model, xb, yb, rng)`` may replace the batch before the step.
    """
    images = np.asarray(images, dtype=F32)
    labels = np.asarray(labels)
    n = len(images)
    if n == 0:
        raise InvalidArgument("empty training set")
    rng = np.random.default_rng(cfg.seed)
    velocity = {k: np.zeros_like(v) for k, v in model.parameters().items()}
    mom = cfg.momentum if cfg.optimizer == "sgd-momentum" else 0.0
    trace = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total, count = 0.0, 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            xb, yb = images[idx], labels[idx]
            if batch_hook is not None:
                xb, yb = batch_hook(model, xb, yb, rng)
            tape = ad.Tape()
            params = {k: tape.watch(v, k) for k, v in model.parameters().items()}
            loss = loss_fn(model, params, xb, yb, rng)
            lv = float(loss.value)
            if not np.isfinite(lv):
                raise TrainingDiverged(epoch, lv)
            grads = ad.backward(tape, loss)
            if cfg.clip_norm is not None:
                norm = np.sqrt(sum(float((g.astype(np.float64) ** 2).sum()) for g in grads.values()))
                if norm > cfg.clip_norm:
                    f = F32(cfg.clip_norm / norm)
                    grads = {k: g * f for k, g in grads.items()}
            new = {}
            for k, v in model.parameters().items():
                velocity[k] = (F32(mom) * velocity[k] + grads[k]).astype(F32)
                new[k] = (v - F32(cfg.lr) * velocity[k]).astype(F32)
            model.set_parameters(new)
            total += lv * len(idx)
            count += len(idx)
        mean = total / count
        if not np.isfinite(mean):
            raise TrainingDiverged(epoch, mean)
        trace.append(mean)
    for k, v in model.parameters().items():
        if not np.isfinite(v).all():
            raise TrainingDiverged(cfg.epochs - 1, float("nan"))
    return trace


def train(model, dataset, cfg: TrainConfig):
    """Train a copy of ``model`` on ``dataset``; returns ``(trained, loss_trace)``."""
    if len(dataset) == 0:
        raise InvalidArgument("empty dataset")
    if (dataset.labels >= model.num_classes).any() or (dataset.labels < 0).any():
        raise InvalidArgument("dataset labels exceed the model's class count")
    trained = model.copy()
    trace = fit(trained, dataset.images, dataset.labels, cfg)
    return trained, trace


def predict_labels(model_or_oracle, images, batch=512):
    """Top-1 labels from a model, a quantized model, an oracle or a plain callable."""
    images = np.asarray(images, dtype=F32)
    if hasattr(model_or_oracle, "predict"):
        fn = model_or_oracle.predict
    elif hasattr(model_or_oracle, "decide"):
        fn = model_or_oracle.decide
    else:
        fn = model_or_oracle
    out = [np.asarray(fn(images[i:i + batch])).reshape(-1) for i in range(0, len(images), batch)]
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def evaluate_accuracy(model_or_oracle, dataset):
    """Exact top-1 accuracy ``#correct / N``."""
    if len(dataset) == 0:
        raise InvalidArgument("empty dataset")
    pred = predict_labels(model_or_oracle, dataset.images)
    if pred.shape[0] != len(dataset):
        raise InvalidArgument("oracle returned the wrong number of predictions")
    return int((pred == dataset.labels).sum()) / len(dataset)
