"""Training-time defenses and the feature-squeezing pre-processor.

Every training defense returns a fresh float ``ModelGraph`` (so it can be
quantized like any other model) tagged with ``metadata["defense"]``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import logsumexp

from . import autodiff as ad
from . import kernels
from .attacks.gradient import fgsm, pgd_batch
from .errors import InvalidArgument, NumericDomainError
from .models import TrainConfig, fit
from .oracles import GradientOracle
from .serialize import config_hash

F32 = np.float32
F64 = np.float64


class _Cfg:
    def to_dict(self):
        return asdict(self)

    def train_config(self):
        return TrainConfig(epochs=self.epochs, batch_size=self.batch_size, lr=self.lr, seed=self.seed,
                           clip_norm=self.clip_norm)


@dataclass
class DistillationConfig(_Cfg):
    temperature: float = 20.0
    alpha: float = 0.1
    epochs: int = 200
    lr: float = 0.02
    batch_size: int = 32
    seed: int = 0
    clip_norm: float | None = None

    def __post_init__(self):
        if self.temperature < 1:
            raise InvalidArgument("temperature must be >= 1")
        if not 0 <= self.alpha <= 1:
            raise InvalidArgument("alpha must lie in [0, 1]")
        self.train_config()


@dataclass
class PGDTrainConfig(_Cfg):
    eps: float = 0.008
    step: float = 0.0008
    iters: int = 10
    epochs: int = 50
    lr: float = 0.02
    batch_size: int = 32
    seed: int = 0
    random_init: bool = True
    clip_norm: float | None = None

    def __post_init__(self):
        if self.eps < 0 or self.step < 0:
            raise InvalidArgument("eps and step must be non-negative")
        if self.step > self.eps:
            raise InvalidArgument("step must not exceed eps")
        if self.iters < 1:
            raise InvalidArgument("iters must be >= 1")
        self.train_config()


@dataclass
class EnsembleTrainConfig(PGDTrainConfig):
    fgsm_eps: float = 0.008

    def __post_init__(self):
        super().__post_init__()
        if self.fgsm_eps < 0:
            raise InvalidArgument("fgsm_eps must be non-negative")


@dataclass
class SinkhornTrainConfig(PGDTrainConfig):
    sink_eps: float = 1.0
    sink_iters: int = 50
    reduction: str = "sum"
    weight: float = 1.0

    def __post_init__(self):
        super().__post_init__()
        if not self.sink_eps > 0:
            raise InvalidArgument("sink_eps must be positive")
        if self.sink_iters < 1:
            raise InvalidArgument("sink_iters must be >= 1")
        if self.reduction not in ("sum", "mean"):
            raise InvalidArgument("reduction must be 'sum' or 'mean'")
        if self.weight < 0:
            raise InvalidArgument("weight must be non-negative")


def odd_window(window):
    """Median windows must be odd: even sizes go to the nearest odd value (ties
    downward), never below 3."""
    window = int(window)
    if window < 1:
        raise InvalidArgument("window must be >= 1")
    if window % 2:
        return window
    return max(3, window - 1)


@dataclass
class SqueezeConfig(_Cfg):
    bit_depth: int = 4
    window: int = 3
    detect_threshold: float = 0.5
    requested_window: int | None = None

    def __post_init__(self):
        if not 1 <= self.bit_depth <= 8:
            raise InvalidArgument("bit_depth must lie in [1, 8]")
        w = odd_window(self.window)
        if w != self.window:
            self.requested_window, self.window = self.window, w
        if self.detect_threshold < 0:
            raise InvalidArgument("detect_threshold must be non-negative")


def _tag(model, kind, cfg, extra=None):
    model.metadata = dict(model.metadata)
    model.metadata["defense"] = {"kind": kind, "config_hash": config_hash(cfg.to_dict()), **(extra or {})}
    return model


# ----------------------------------------------------------------------------
# distillation
# ----------------------------------------------------------------------------

def _tempered_ce(temperature):
    def loss_fn(model, params, xb, yb, rng):
        return ad.cross_entropy(ad.scale(model.forward(xb, params), 1.0 / temperature), yb)
    return loss_fn


def distill_train(model, dataset, cfg=None):
    """Teacher and student share ``model``'s architecture and start from its weights.

    The student loss blends hard-label and teacher soft-label cross-entropy,
    both at temperature T; the returned student is used at temperature 1.
    """
    cfg = cfg or DistillationConfig()
    t = cfg.temperature
    teacher = model.copy()
    fit(teacher, dataset.images, dataset.labels, cfg.train_config(), loss_fn=_tempered_ce(t))
    soft = ad.softmax_np(teacher.logits(dataset.images), temperature=t).astype(F32)
    # the student sees (image, label, row index) so soft targets follow the shuffle
    n = len(dataset)
    order_key = np.arange(n)

    def loss_fn(m, params, xb, yb, rng):
        idx, labels = yb[:, 0], yb[:, 1]
        z = ad.scale(m.forward(xb, params), 1.0 / t)
        hard = ad.cross_entropy(z, labels)
        s = ad.cross_entropy(z, soft[idx])
        return ad.add(ad.scale(hard, cfg.alpha), ad.scale(s, 1.0 - cfg.alpha))

    student = model.copy()
    targets = np.stack([order_key, dataset.labels], axis=1)
    trace = fit(student, dataset.images, targets, cfg.train_config(), loss_fn=loss_fn)
    student.metadata = dict(student.metadata, loss_trace=trace)
    return _tag(student, "distillation", cfg)


# ----------------------------------------------------------------------------
# adversarial training
# ----------------------------------------------------------------------------

def _adversarial_loss(cfg, sink=None):
    """CE on PGD examples made against the current weights, plus an optional
    Sinkhorn term between clean and adversarial penultimate features."""

    def loss_fn(model, params, xb, yb, rng):
        adv = pgd_batch(GradientOracle(model), xb, yb, cfg.eps, cfg.step, cfg.iters, rng,
                        cfg.random_init)
        if sink is None or sink.weight == 0:
            return ad.cross_entropy(model.forward(adv, params), yb)
        z_adv, f_adv = model.forward(adv, params, return_features=True)
        _, f_clean = model.forward(xb, params, return_features=True)
        s = sinkhorn_divergence_op(f_clean, f_adv, sink.sink_eps, sink.sink_iters, sink.reduction)
        return ad.add(ad.cross_entropy(z_adv, yb), ad.scale(s, sink.weight))

    return loss_fn


def pgd_adversarial_train(model, dataset, cfg=None):
    """Every minibatch is replaced by PGD examples crafted on the current weights."""
    cfg = cfg or PGDTrainConfig()
    hardened = model.copy()
    trace = fit(hardened, dataset.images, dataset.labels, cfg.train_config(), loss_fn=_adversarial_loss(cfg))
    hardened.metadata = dict(hardened.metadata, loss_trace=trace)
    return _tag(hardened, "pgd-advt", cfg)


def ensemble_pool(dataset, sources, cfg):
    """Clean data plus FGSM and PGD examples crafted once on each source model."""
    if not sources:
        raise InvalidArgument("ensemble adversarial training needs at least one source model")
    xs, ys = [dataset.images], [dataset.labels]
    counts = {"clean": len(dataset)}
    for i, src in enumerate(sources):
        g = GradientOracle(src)
        rng = np.random.default_rng([cfg.seed, i])
        fg = np.stack([fgsm(g, x, int(y), cfg.fgsm_eps).adversarial
                       for x, y in zip(dataset.images, dataset.labels)])
        pg = np.concatenate([pgd_batch(g, dataset.images[s:s + 256], dataset.labels[s:s + 256], cfg.eps,
                                       cfg.step, cfg.iters, rng, cfg.random_init)
                             for s in range(0, len(dataset), 256)])
        xs += [fg, pg]
        ys += [dataset.labels, dataset.labels]
        counts[f"source{i}/fgsm"] = len(fg)
        counts[f"source{i}/pgd"] = len(pg)
    return np.concatenate(xs).astype(F32), np.concatenate(ys), counts


def ensemble_adversarial_train(model, dataset, sources, cfg=None):
    cfg = cfg or EnsembleTrainConfig()
    images, labels, counts = ensemble_pool(dataset, sources, cfg)
    hardened = model.copy()
    trace = fit(hardened, images, labels, cfg.train_config())
    hardened.metadata = dict(hardened.metadata, loss_trace=trace)
    return _tag(hardened, "ensemble-advt", cfg, {"pool": counts})


def sinkhorn_adversarial_train(model, dataset, cfg=None):
    cfg = cfg or SinkhornTrainConfig()
    hardened = model.copy()
    trace = fit(hardened, dataset.images, dataset.labels, cfg.train_config(),
                loss_fn=_adversarial_loss(cfg, sink=cfg))
    hardened.metadata = dict(hardened.metadata, loss_trace=trace)
    return _tag(hardened, "sinkhorn-advt", cfg)


# ----------------------------------------------------------------------------
# Sinkhorn divergence (log-domain, float64)
# ----------------------------------------------------------------------------

def _sqdist(x, y):
    with np.errstate(invalid="ignore", over="ignore"):  # non-finite inputs are rejected by the caller
        c = (x * x).sum(1)[:, None] + (y * y).sum(1)[None, :] - 2.0 * x @ y.T
    return np.maximum(c, 0.0)


def _ot(x, y, a, b, eps, iters):
    """Entropic OT value (dual form) and the plan.

    Both potentials are updated together and averaged with their previous
    value, then one plain update finishes.  The scheme treats the two measures
    alike, so swapping them only transposes the computation, and for
    ``x == y`` the cross and self terms of the divergence cancel exactly.
    """
    c = _sqdist(x, y)
    if not np.isfinite(c).all():
        raise NumericDomainError("non-finite cost matrix")
    la, lb = np.log(a), np.log(b)

    def update(f, g):
        return (-eps * logsumexp(lb[None, :] + (g[None, :] - c) / eps, axis=1),
                -eps * logsumexp(la[:, None] + (f[:, None] - c) / eps, axis=0))

    f = np.zeros(len(a))
    g = np.zeros(len(b))
    for _ in range(iters):
        ft, gt = update(f, g)
        f, g = 0.5 * (f + ft), 0.5 * (g + gt)
    f, g = update(f, g)
    plan = np.exp((f[:, None] + g[None, :] - c) / eps + la[:, None] + lb[None, :])
    return float(a @ f + b @ g), plan


def _check_measure(x, w):
    x = np.asarray(x, dtype=F64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or len(x) == 0:
        raise InvalidArgument("point sets must be non-empty (n, d) arrays")
    if w is None:
        w = np.full(len(x), 1.0 / len(x))
    w = np.asarray(w, dtype=F64)
    if w.shape != (len(x),) or (w <= 0).any() or abs(w.sum() - 1.0) > 1e-6:
        raise InvalidArgument("weights must be positive and sum to 1")
    return x, w


def sinkhorn_divergence(x, y, eps=1.0, iters=50, a=None, b=None, return_grads=False):
    """Debiased entropic OT ``OT(x,y) - OT(x,x)/2 - OT(y,y)/2`` with squared-Euclidean cost."""
    if not eps > 0:
        raise InvalidArgument("eps must be positive")
    if iters < 1:
        raise InvalidArgument("iters must be >= 1")
    x, a = _check_measure(x, a)
    y, b = _check_measure(y, b)
    if x.shape[1] != y.shape[1]:
        raise InvalidArgument("point sets differ in dimension")
    ot_xy, p_xy = _ot(x, y, a, b, eps, iters)
    ot_xx, p_xx = _ot(x, x, a, a, eps, iters)
    ot_yy, p_yy = _ot(y, y, b, b, eps, iters)
    s = ot_xy - 0.5 * ot_xx - 0.5 * ot_yy
    if not return_grads:
        return s
    # envelope theorem: only the explicit dependence of the cost on positions counts
    gx = 2.0 * (p_xy.sum(1)[:, None] * x - p_xy @ y) - 2.0 * (p_xx.sum(1)[:, None] * x - p_xx @ x)
    gy = 2.0 * (p_xy.sum(0)[:, None] * y - p_xy.T @ x) - 2.0 * (p_yy.sum(1)[:, None] * y - p_yy @ y)
    return s, gx, gy


def _sink_fwd(v, p):
    x, y = v
    s, gx, gy = sinkhorn_divergence(x.reshape(len(x), -1), y.reshape(len(y), -1), p["eps"], p["iters"],
                                    return_grads=True)
    k = float(len(x)) if p["reduction"] == "sum" else 1.0
    return np.asarray(s * k, dtype=ad.result_dtype(x, y)), (gx * k, gy * k, x.shape, y.shape)


def _sink_vjp(ctx, g):
    gx, gy, sx, sy = ctx
    g = float(g)
    return (gx * g).reshape(sx).astype(F32), (gy * g).reshape(sy).astype(F32)


ad.register_primitive("sinkhorn", _sink_fwd, _sink_vjp)


def sinkhorn_divergence_op(x, y, eps=1.0, iters=50, reduction="sum"):
    """Tape-aware Sinkhorn divergence between two batches of feature rows.

    ``reduction="sum"`` scales the (uniform-weight) divergence by the batch size.
    """
    return ad.forward_primitive("sinkhorn", [x, y], {"eps": eps, "iters": iters, "reduction": reduction})


# ----------------------------------------------------------------------------
# feature squeezing
# ----------------------------------------------------------------------------

def reduce_bit_depth(x, bit_depth):
    levels = 2 ** int(bit_depth) - 1
    return (np.rint(np.asarray(x, dtype=F64) * levels) / levels).astype(F32)


def feature_squeeze(x, bit_depth=4, window=3):
    """Bit-depth reduction followed by a per-channel median filter with edge replication."""
    if not 1 <= bit_depth <= 8:
        raise InvalidArgument("bit_depth must lie in [1, 8]")
    if window < 1 or window % 2 == 0:
        raise InvalidArgument("window must be odd and >= 1")
    x = np.asarray(x, dtype=F32)
    single = x.ndim == 3
    xb = x[None] if single else x
    out = reduce_bit_depth(xb, bit_depth)
    if window > 1:
        if xb.ndim != 4:
            raise InvalidArgument("median filtering needs NHWC images")
        out = kernels.median_filter(out, window)
    out = np.clip(out, 0.0, 1.0)
    return out[0] if single else out


def squeezer(cfg):
    return lambda x: feature_squeeze(x, cfg.bit_depth, cfg.window)


def squeeze_detect(score, x, cfg=None):
    """L1 gap between the probability vectors of ``x`` and its squeezed version."""
    cfg = cfg or SqueezeConfig()
    p = score(x)
    q = score(feature_squeeze(x, cfg.bit_depth, cfg.window))
    margin = float(np.abs(np.asarray(p) - np.asarray(q)).sum(axis=-1).max())
    return {"adversarial": margin > cfg.detect_threshold, "l1_margin": margin}
