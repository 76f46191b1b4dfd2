"""Attacker access tiers: gradients, class probabilities, or decisions only."""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .errors import InvalidArgument

F32 = np.float32


def _batch(x, input_shape):
    x = np.asarray(x, dtype=F32)
    if x.shape == tuple(input_shape):
        return x[None], True
    if x.shape[1:] != tuple(input_shape):
        raise InvalidArgument(f"input shape {x.shape} does not match model input {input_shape}")
    return x, False


class GradientOracle:
    """White-box access to a float model.

    ``grad_calls`` counts backward passes (one per call); ``forward_calls``
    counts gradient-free forward passes.
    """

    def __init__(self, model):
        if not hasattr(model, "forward"):
            raise InvalidArgument("gradient oracles need a float ModelGraph")
        self.model = model
        self.input_shape = model.input_shape
        self.num_classes = model.num_classes
        self.grad_calls = 0
        self.forward_calls = 0

    def logits(self, x):
        xb, single = _batch(x, self.input_shape)
        self.forward_calls += 1
        z = self.model.forward(xb)
        return z[0] if single else z

    def probs(self, x):
        return ad.softmax_np(self.logits(x))

    def predict(self, x):
        return np.argmax(self.logits(x), axis=-1)

    def logits_vjp(self, x, g_logits):
        """Logits at ``x`` and the gradient of ``sum(g_logits * logits)`` w.r.t. ``x``."""
        xb, single = _batch(x, self.input_shape)
        g = np.asarray(g_logits, dtype=F32).reshape(xb.shape[0], self.num_classes)
        self.grad_calls += 1
        tape = ad.Tape()
        xv = tape.watch(xb, "x")
        z = self.model.forward(xv)
        loss = ad.weighted_sum(z, g)
        gx = ad.backward(tape, loss)["x"]
        return (z.value[0], gx[0]) if single else (z.value, gx)

    def loss_and_grad(self, x, y):
        """Per-sample cross-entropy and its input gradient."""
        xb, single = _batch(x, self.input_shape)
        y = np.atleast_1d(np.asarray(y, dtype=np.int64))
        if y.size == 1 and xb.shape[0] > 1:
            y = np.repeat(y, xb.shape[0])
        self.grad_calls += 1
        tape = ad.Tape()
        xv = tape.watch(xb, "x")
        z = self.model.forward(xv)
        p = ad.softmax_np(z.value)
        rows = np.arange(len(y))
        zs = z.value.astype(np.float64)
        zs = zs - zs.max(axis=1, keepdims=True)
        loss = np.log(np.exp(zs).sum(axis=1)) - zs[rows, y]
        dz = p
        dz[rows, y] -= 1.0
        gx = ad.backward(tape, ad.weighted_sum(z, dz.astype(F32)))["x"]
        return (loss[0], gx[0]) if single else (loss, gx)

    def jacobian(self, x):
        """Logits and the full Jacobian ``d logits / dx`` (shape ``(K,) + x.shape``) of one sample."""
        x = np.asarray(x, dtype=F32)
        k = self.num_classes
        z, gx = self.logits_vjp(np.repeat(x[None], k, axis=0), np.eye(k, dtype=F32))
        return z[0], gx

    def as_score_oracle(self):
        return ScoreOracle(self.model.probs if hasattr(self.model, "probs") else self.probs, self.input_shape)

    def as_decision_oracle(self):
        return DecisionOracle(self.model.predict, self.input_shape)


class ScoreOracle:
    """Gray-box access: class probabilities.

    ``calls`` counts invocations; ``queries`` counts evaluated samples, so a
    batched call of B inputs costs B queries.
    """

    def __init__(self, fn, input_shape):
        self._fn = fn
        self.input_shape = tuple(input_shape)
        self.queries = 0
        self.calls = 0

    @classmethod
    def from_model(cls, model):
        return cls(model.probs, model.input_shape)

    def __call__(self, x):
        xb, single = _batch(x, self.input_shape)
        self.queries += xb.shape[0]
        self.calls += 1
        p = np.asarray(self._fn(xb), dtype=np.float64).reshape(xb.shape[0], -1)
        return p[0] if single else p

    def decide(self, x):
        return np.argmax(self(x), axis=-1)


class DecisionOracle:
    """Black-box access: top-1 label only.  Counters as in :class:`ScoreOracle`."""

    def __init__(self, fn, input_shape):
        self._fn = fn
        self.input_shape = tuple(input_shape)
        self.queries = 0
        self.calls = 0

    @classmethod
    def from_model(cls, model):
        return cls(model.predict, model.input_shape)

    def __call__(self, x):
        xb, single = _batch(x, self.input_shape)
        self.queries += xb.shape[0]
        self.calls += 1
        lab = np.asarray(self._fn(xb)).reshape(-1).astype(np.int64)
        return int(lab[0]) if single else lab

    decide = __call__


def with_preprocessing(oracle_fn, transform):
    """Compose an oracle function with an input transform (e.g. feature squeezing)."""
    def fn(x):
        return oracle_fn(transform(x))
    return fn
