"""Distortion norms, adversarial accuracy and quantization diagnostics."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import finite_difference_gradient
from .errors import GradientDegenerate, InvalidArgument, UndefinedSimilarity

L0_THRESHOLD = 1e-9
ZERO_TOL = 1e-12
NORMS = ("l0", "l1", "l2", "linf")


def distortion(orig, adv, norm):
    orig = np.asarray(orig, dtype=np.float64)
    adv = np.asarray(adv, dtype=np.float64)
    if orig.shape != adv.shape:
        raise InvalidArgument(f"shape mismatch {orig.shape} vs {adv.shape}")
    d = (adv - orig).ravel()
    if norm == "l0":
        return float(np.count_nonzero(np.abs(d) > L0_THRESHOLD))
    if norm == "l1":
        return float(np.abs(d).sum())
    if norm == "l2":
        return float(np.sqrt(np.dot(d, d)))
    if norm == "linf":
        return float(np.abs(d).max()) if d.size else 0.0
    raise InvalidArgument(f"unknown norm {norm!r}")


def distortions(orig, adv):
    return {n: distortion(orig, adv, n) for n in NORMS}


@dataclass
class DistortionStats:
    mean_all: dict = field(default_factory=dict)
    mean_success: dict = field(default_factory=dict)
    n: int = 0
    n_success: int = 0

    @classmethod
    def from_results(cls, results):
        results = list(results)
        ok = [r for r in results if r.success]

        def means(rs):
            if not rs:
                return {k: None for k in NORMS}
            return {k: float(np.mean([r.distortions[k] for r in rs])) for k in NORMS}

        return cls(means(results), means(ok), len(results), len(ok))

    def to_dict(self):
        return {"mean_all": self.mean_all, "mean_success": self.mean_success,
                "n": self.n, "n_success": self.n_success}


def _decide(oracle, x):
    if hasattr(oracle, "decide"):
        return np.asarray(oracle.decide(x))
    return np.asarray(oracle.predict(x))


def adversarial_accuracy(oracle, results):
    """Fraction of stored adversarial tensors still classified as their original label."""
    results = list(results)
    if not results:
        raise InvalidArgument("no results")
    adv = np.stack([r.adversarial for r in results])
    labels = np.array([r.original_label for r in results])
    return float(np.mean(_decide(oracle, adv).reshape(-1) == labels))


def gradient_zero_density(f, samples, h=1e-4, tol=ZERO_TOL, batched=True):
    """Mean fraction of finite-difference gradient coordinates with ``|g_i| <= tol``.

    ``f`` maps one sample (or, with ``batched``, a stack of samples) to a
    scalar loss.
    """
    fracs = []
    for x in samples:
        g = finite_difference_gradient(f, x, h, batched=batched)
        fracs.append(np.mean(np.abs(g) <= tol))
    return float(np.mean(fracs))


def loss_function(model, label):
    """Batched float64 cross-entropy of ``model``'s logits, for finite differences.

    Works for float graphs and quantized models alike (anything with ``logits``).
    """
    def f(xs):
        z = np.asarray(model.logits(np.asarray(xs, dtype=np.float32)), dtype=np.float64)
        z = z - z.max(axis=1, keepdims=True)
        return np.log(np.exp(z).sum(axis=1)) - z[:, label]
    return f


@dataclass
class CosineResult:
    mean: float
    n_used: int
    n_zero: int


def gradient_cosine_similarity(g_float, g_other, images, labels):
    """Mean cosine between loss gradients of two oracles; zero-gradient samples are skipped."""
    images = np.asarray(images, dtype=np.float32)
    labels = np.asarray(labels)
    _, ga = g_float.loss_and_grad(images, labels)
    _, gb = g_other.loss_and_grad(images, labels)
    ga = ga.reshape(len(images), -1).astype(np.float64)
    gb = gb.reshape(len(images), -1).astype(np.float64)
    na = np.linalg.norm(ga, axis=1)
    nb = np.linalg.norm(gb, axis=1)
    used = (na > 0) & (nb > 0)
    if not used.any():
        raise UndefinedSimilarity("all gradients are zero")
    cos = np.einsum("ij,ij->i", ga[used], gb[used]) / (na[used] * nb[used])
    return CosineResult(float(np.clip(cos, -1, 1).mean()), int(used.sum()), int((~used).sum()))


@dataclass
class BoundaryDistance:
    mean: float | None
    n_used: int
    n_skipped: int
    distances: list = field(default_factory=list)

    @property
    def defined(self):
        return self.mean is not None


def boundary_distance(g, images, labels, cfg=None):
    """Mean DeepFool L2 over correctly classified samples; others are skipped and counted."""
    from .attacks import DeepFoolConfig, deepfool

    cfg = cfg or DeepFoolConfig()
    images = np.asarray(images, dtype=np.float32)
    labels = np.asarray(labels)
    pred = g.predict(images) if len(images) else np.array([], dtype=int)
    dists = []
    for x, y, p in zip(images, labels, pred):
        if p != y:
            continue
        try:
            r = deepfool(g, x, int(y), cfg)
        except GradientDegenerate:
            continue  # flat logits have no defined boundary; counted as skipped
        dists.append(r.distortions["l2"])
    n_skip = len(images) - len(dists)
    return BoundaryDistance(float(np.mean(dists)) if dists else None, len(dists), n_skip, dists)
