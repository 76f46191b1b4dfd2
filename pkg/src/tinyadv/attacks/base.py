"""Result record, per-attack configurations and shared helpers."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import InvalidArgument
from ..metrics import distortions

F32 = np.float32
BOX = (0.0, 1.0)


@dataclass
class AdversarialResult:
    original: np.ndarray
    adversarial: np.ndarray
    original_label: int
    predicted_label: int
    success: bool
    queries: int = 0
    iterations: int = 0
    distortions: dict = field(default_factory=dict)
    attack: str = ""
    extras: dict = field(default_factory=dict)

    def summary(self):
        return {"attack": self.attack, "original_label": self.original_label,
                "predicted_label": self.predicted_label, "success": self.success,
                "queries": self.queries, "iterations": self.iterations,
                "distortions": dict(self.distortions)}


def finalize(decide, x, x_adv, y, attack, queries=0, iterations=0, extras=None, clip=BOX):
    """Build a result from a candidate, re-querying the oracle on the stored float32 tensor."""
    x = np.asarray(x, dtype=F32)
    adv = np.asarray(x_adv, dtype=np.float64)
    if clip is not None:
        adv = np.clip(adv, clip[0], clip[1])
    adv = adv.astype(F32)
    pred = int(np.asarray(decide(adv)).reshape(-1)[0])
    return AdversarialResult(x, adv, int(y), pred, pred != int(y), int(queries), int(iterations),
                             distortions(x, adv), attack, extras or {})


def failed(decide, x, y, attack, queries=0, iterations=0, extras=None):
    """Record for an unsuccessful attack: the clean sample stands in for the adversarial one."""
    return finalize(decide, x, x, y, attack, queries, iterations, extras, clip=None)


def sample_rng(seed, index):
    """Independent generator per (config seed, sample index)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, int(index)]))


def _positive(name, v):
    if v is None or not v > 0:
        raise InvalidArgument(f"{name} must be positive, got {v}")


def _at_least_one(name, v):
    if int(v) < 1:
        raise InvalidArgument(f"{name} must be >= 1, got {v}")


def _check_clip(clip):
    if clip is not None and not clip[0] < clip[1]:
        raise InvalidArgument(f"bad clip box {clip}")


class _Config:
    def to_dict(self):
        d = asdict(self)
        if d.get("clip") is not None:
            d["clip"] = list(d["clip"])
        return d


@dataclass
class FGSMConfig(_Config):
    eps: float = 0.008
    clip: tuple | None = BOX

    def __post_init__(self):
        if self.eps < 0:
            raise InvalidArgument("eps must be non-negative")
        _check_clip(self.clip)


@dataclass
class DeepFoolConfig(_Config):
    max_iter: int = 100
    overshoot: float = 0.008
    clip: tuple | None = BOX

    def __post_init__(self):
        _at_least_one("max_iter", self.max_iter)
        if self.overshoot < 0:
            raise InvalidArgument("overshoot must be non-negative")
        _check_clip(self.clip)


@dataclass
class JSMAConfig(_Config):
    theta: float = 0.08
    gamma: float = 1.0
    clip: tuple | None = BOX

    def __post_init__(self):
        _positive("theta", self.theta)
        if not 0 < self.gamma <= 1:
            raise InvalidArgument("gamma must lie in (0, 1]")
        _check_clip(self.clip)


@dataclass
class CWConfig(_Config):
    max_iter: int = 10
    bs_steps: int = 10
    initial_const: float = 0.01
    lr: float = 0.01
    confidence: float = 0.0
    # L-inf mode
    tau_decay: float = 0.9
    tau_min: float = 1.0 / 256
    linf_const: float = 1e-5
    linf_max_const: float = 20.0
    linf_max_rounds: int = 60
    clip: tuple = BOX

    def __post_init__(self):
        _at_least_one("max_iter", self.max_iter)
        _at_least_one("bs_steps", self.bs_steps)
        _at_least_one("linf_max_rounds", self.linf_max_rounds)
        for k in ("initial_const", "lr", "tau_min", "linf_const", "linf_max_const"):
            _positive(k, getattr(self, k))
        if not 0 < self.tau_decay < 1:
            raise InvalidArgument("tau_decay must lie in (0, 1)")
        if self.confidence < 0:
            raise InvalidArgument("confidence must be non-negative")
        if self.clip is None:
            raise InvalidArgument("the tanh reparameterisation needs a finite box")
        _check_clip(self.clip)


@dataclass
class PGDConfig(_Config):
    eps: float = 0.0008
    step: float = 0.00008
    max_iter: int = 10
    restarts: int = 20
    random_init: bool = True
    seed: int = 0
    clip: tuple | None = BOX

    def __post_init__(self):
        if self.eps < 0 or self.step < 0:
            raise InvalidArgument("eps and step must be non-negative")
        if self.step > self.eps:
            raise InvalidArgument("step must not exceed eps")
        _at_least_one("max_iter", self.max_iter)
        _at_least_one("restarts", self.restarts)
        _check_clip(self.clip)


@dataclass
class EADConfig(_Config):
    max_iter: int = 10
    bs_steps: int = 10
    initial_const: float = 0.01
    beta: float = 1e-3
    lr: float = 0.01
    confidence: float = 0.0
    decision_rule: str = "en"
    clip: tuple | None = BOX

    def __post_init__(self):
        _at_least_one("max_iter", self.max_iter)
        _at_least_one("bs_steps", self.bs_steps)
        _positive("initial_const", self.initial_const)
        _positive("lr", self.lr)
        if self.beta < 0:
            raise InvalidArgument("beta must be non-negative")
        if self.decision_rule not in ("en", "l1"):
            raise InvalidArgument("decision_rule must be 'en' or 'l1'")
        _check_clip(self.clip)


@dataclass
class AutoAttackConfig(_Config):
    eps: float = 0.004
    apgd_iter: int = 100
    square_iter: int = 1000
    square_init_fraction: float = 0.8
    rho: float = 0.75
    seed: int = 0

    def __post_init__(self):
        _positive("eps", self.eps)
        _at_least_one("apgd_iter", self.apgd_iter)
        _at_least_one("square_iter", self.square_iter)
        if not 0 < self.square_init_fraction <= 1:
            raise InvalidArgument("square_init_fraction must lie in (0, 1]")


@dataclass
class ZOOConfig(_Config):
    max_iter: int = 10
    bs_steps: int = 5
    initial_const: float = 0.01
    h: float = 1e-4
    lr: float = 0.01
    batch_coords: int = 128
    confidence: float = 0.0
    seed: int = 0

    def __post_init__(self):
        _at_least_one("max_iter", self.max_iter)
        _at_least_one("bs_steps", self.bs_steps)
        _at_least_one("batch_coords", self.batch_coords)
        for k in ("initial_const", "h", "lr"):
            _positive(k, getattr(self, k))


@dataclass
class SquareConfig(_Config):
    eps: float = 0.015
    max_iter: int = 1000
    init_fraction: float = 0.05
    norm: str = "linf"
    seed: int = 0

    def __post_init__(self):
        _positive("eps", self.eps)
        _at_least_one("max_iter", self.max_iter)
        if not 0 < self.init_fraction <= 1:
            raise InvalidArgument("init_fraction must lie in (0, 1]")
        if self.norm not in ("linf", "l2"):
            raise InvalidArgument("norm must be 'linf' or 'l2'")

    @classmethod
    def l2(cls, **kw):
        kw = {"eps": 1.0, "max_iter": 2000, "init_fraction": 0.8, **kw}
        return cls(norm="l2", **kw)


@dataclass
class BoundaryConfig(_Config):
    eps: float = 1.0
    delta: float = 0.1
    max_iter: int = 500
    init_size: int = 100
    num_trial: int = 25
    sample_size: int = 20
    step_adapt: float = 0.667
    seed: int = 0

    def __post_init__(self):
        _positive("eps", self.eps)
        _positive("delta", self.delta)
        _at_least_one("max_iter", self.max_iter)
        _at_least_one("init_size", self.init_size)
        _at_least_one("num_trial", self.num_trial)
        _at_least_one("sample_size", self.sample_size)
        if not 0 < self.step_adapt < 1:
            raise InvalidArgument("step_adapt must lie in (0, 1)")


@dataclass
class GeoDAConfig(_Config):
    bs_tol: float = 0.0001
    dct_dim: int = 75
    n_iter: int = 5
    probes: int = 200
    sigma: float = 0.0002
    init_size: int = 100
    seed: int = 0

    def __post_init__(self):
        _positive("bs_tol", self.bs_tol)
        _positive("sigma", self.sigma)
        _at_least_one("dct_dim", self.dct_dim)
        _at_least_one("n_iter", self.n_iter)
        _at_least_one("probes", self.probes)
        _at_least_one("init_size", self.init_size)


def margin_logits(z, y):
    """``z_y - max_{j != y} z_j`` and the maximising other class."""
    z = np.asarray(z, dtype=np.float64)
    other = z.copy()
    other[..., y] = -np.inf
    j = int(np.argmax(other))
    return float(z[y] - z[j]), j
