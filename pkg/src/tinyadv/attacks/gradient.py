"""White-box attacks: they need a GradientOracle over a float model."""
from __future__ import annotations

import math

import numpy as np

from ..errors import GradientDegenerate, NumericDomainError
from .base import (AutoAttackConfig, CWConfig, DeepFoolConfig, EADConfig, FGSMConfig, JSMAConfig,
                   PGDConfig, SquareConfig, failed, finalize, margin_logits, sample_rng)

F64 = np.float64


def _clip(a, clip):
    return a if clip is None else np.clip(a, clip[0], clip[1])


def _check_grad(grad):
    if not np.all(np.isfinite(grad)):
        raise GradientDegenerate("non-finite gradient")
    return grad


# ----------------------------------------------------------------------------
# FGSM / PGD
# ----------------------------------------------------------------------------

def fgsm(g, x, y, eps=None, cfg=None):
    cfg = cfg or FGSMConfig(**({} if eps is None else {"eps": eps}))
    if eps is not None and eps != cfg.eps:
        cfg = FGSMConfig(eps=eps, clip=cfg.clip)
    _, grad = g.loss_and_grad(x, y)
    x64 = np.asarray(x, dtype=F64)
    adv = x64 + cfg.eps * np.sign(_check_grad(grad))
    adv = np.clip(adv, x64 - cfg.eps, x64 + cfg.eps)
    return finalize(g.predict, x, _clip(adv, cfg.clip), y, "fgsm", queries=1, iterations=1, clip=cfg.clip)


def _ce(z, y):
    z = np.asarray(z, dtype=F64)
    z = z - z.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1))
    return lse - np.take_along_axis(z, np.asarray(y).reshape(-1, 1), axis=-1)[:, 0]


def pgd_batch(g, images, labels, eps, step, iters, rng=None, random_init=True, clip=(0.0, 1.0)):
    """Final PGD iterates for a batch (one restart each); used inside adversarial training."""
    x64 = np.asarray(images, dtype=F64)
    lo, hi = x64 - eps, x64 + eps
    adv = x64.copy()
    if random_init and eps > 0:
        adv = adv + rng.uniform(-eps, eps, size=x64.shape)
    adv = _clip(np.clip(adv, lo, hi), clip)
    for _ in range(iters):
        _, grad = g.loss_and_grad(adv.astype(np.float32), labels)
        adv = adv + step * np.sign(_check_grad(grad))
        adv = _clip(np.clip(adv, lo, hi), clip)
    return adv.astype(np.float32)


def pgd(g, x, y, cfg=None, index=0):
    """PGD with random restarts run as one batch; the highest-loss iterate wins."""
    cfg = cfg or PGDConfig()
    rng = sample_rng(cfg.seed, index)
    r = cfg.restarts
    x64 = np.asarray(x, dtype=F64)
    lo, hi = x64 - cfg.eps, x64 + cfg.eps
    adv = np.repeat(x64[None], r, axis=0)
    if cfg.random_init and cfg.eps > 0:
        adv = adv + rng.uniform(-cfg.eps, cfg.eps, size=adv.shape)
    adv = _clip(np.clip(adv, lo, hi), cfg.clip)
    labels = np.full(r, y)
    best_loss = np.full(r, -np.inf)
    best = adv.copy()
    for _ in range(cfg.max_iter):
        loss, grad = g.loss_and_grad(adv.astype(np.float32), labels)
        better = loss > best_loss
        best_loss[better], best[better] = loss[better], adv[better]
        adv = adv + cfg.step * np.sign(_check_grad(grad))
        adv = _clip(np.clip(adv, lo, hi), cfg.clip)
    loss = _ce(g.logits(adv.astype(np.float32)), labels)
    better = loss > best_loss
    best_loss[better], best[better] = loss[better], adv[better]
    k = int(np.argmax(best_loss))
    return finalize(g.predict, x, best[k], y, "pgd", queries=cfg.max_iter * r,
                    iterations=cfg.max_iter, extras={"restart": k, "loss": float(best_loss[k])},
                    clip=cfg.clip)


# ----------------------------------------------------------------------------
# DeepFool
# ----------------------------------------------------------------------------

def deepfool(g, x, y, cfg=None):
    cfg = cfg or DeepFoolConfig()
    x64 = np.asarray(x, dtype=F64)
    if int(g.predict(x)) != y:
        return finalize(g.predict, x, x, y, "deepfool", iterations=0, clip=None)
    r_tot = np.zeros_like(x64)
    adv = x64
    it = 0
    for it in range(1, cfg.max_iter + 1):
        z, jac = g.jacobian(adv.astype(np.float32))
        z = z.astype(F64)
        jac = jac.reshape(len(z), -1).astype(F64)
        w = jac - jac[y]
        f = z - z[y]
        norms = np.linalg.norm(w, axis=1)
        norms[y] = 0.0
        others = np.arange(len(z)) != y
        if not np.any(norms[others] > 0):
            raise GradientDegenerate("all class-difference gradients vanish")
        with np.errstate(divide="ignore", invalid="ignore"):
            dist = np.where(norms > 0, np.abs(f) / norms, np.inf)
        dist[y] = np.inf
        k = int(np.argmin(dist))
        r_tot = r_tot + (dist[k] / norms[k]) * w[k].reshape(x64.shape)
        adv = _clip(x64 + (1.0 + cfg.overshoot) * r_tot, cfg.clip)
        if int(g.predict(adv.astype(np.float32))) != y:
            break
    return finalize(g.predict, x, adv, y, "deepfool", queries=it, iterations=it, clip=cfg.clip)


# ----------------------------------------------------------------------------
# JSMA
# ----------------------------------------------------------------------------

def saliency_map(grad_target, grad_others):
    """Zero where the target gradient is negative or the others' sum is positive,
    otherwise ``grad_target * |grad_others|``."""
    a = np.asarray(grad_target, dtype=F64)
    b = np.asarray(grad_others, dtype=F64)
    return np.where((a < 0) | (b > 0), 0.0, a * np.abs(b))


def jsma(g, x, y, cfg=None):
    """Increase the most salient feature by ``theta`` until the label flips.

    The target is re-chosen each step as the strongest wrong class.
    """
    cfg = cfg or JSMAConfig()
    x64 = np.asarray(x, dtype=F64)
    adv = x64.copy().ravel()
    top = np.inf if cfg.clip is None else cfg.clip[1]
    budget = int(math.floor(cfg.gamma * adv.size))
    touched = set()
    it = 0
    while True:
        z, jac = g.jacobian(adv.reshape(x64.shape).astype(np.float32))
        it += 1
        if int(np.argmax(z)) != y:
            break
        _, t = margin_logits(z, y)
        jac = jac.reshape(len(z), -1).astype(F64)
        s = saliency_map(jac[t], jac.sum(axis=0) - jac[t])
        s[adv >= top] = 0.0
        if len(touched) >= budget:
            s[[i for i in range(adv.size) if i not in touched]] = 0.0
        i = int(np.argmax(s))
        if s[i] <= 0:
            break
        touched.add(i)
        adv[i] = min(adv[i] + cfg.theta, top)
    return finalize(g.predict, x, adv.reshape(x64.shape), y, "jsma", queries=it, iterations=it,
                    extras={"features": len(touched)}, clip=cfg.clip)


# ----------------------------------------------------------------------------
# C&W
# ----------------------------------------------------------------------------

def to_tanh_space(x, clip=(0.0, 1.0)):
    lo, hi = clip
    t = (np.asarray(x, dtype=F64) - lo) / (hi - lo) * 2.0 - 1.0
    return np.arctanh(np.clip(t, -1 + 1e-6, 1 - 1e-6))


def from_tanh_space(w, clip=(0.0, 1.0)):
    lo, hi = clip
    return lo + (hi - lo) * 0.5 * (np.tanh(np.asarray(w, dtype=F64)) + 1.0)


class _Adam:
    def __init__(self, shape, lr, b1=0.9, b2=0.999, eps=1e-8):
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps

    def step(self, w, grad):
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * grad
        self.v = self.b2 * self.v + (1 - self.b2) * grad * grad
        mh = self.m / (1 - self.b1 ** self.t)
        vh = self.v / (1 - self.b2 ** self.t)
        return w - self.lr * mh / (np.sqrt(vh) + self.eps)


def _margin_grad(g, xa, y, kappa):
    """Clamped margin ``max(z_y - max_other, -kappa)``, its input gradient, and the logits."""
    k = g.num_classes
    z = g.logits(xa.astype(np.float32))
    m, j = margin_logits(z, y)
    if m <= -kappa:
        return -kappa, np.zeros_like(xa), z
    dz = np.zeros(k, dtype=np.float32)
    dz[y], dz[j] = 1.0, -1.0
    z, gx = g.logits_vjp(xa.astype(np.float32), dz)
    return m, _check_grad(gx.astype(F64)), z


def cw_l2_objective(c, margin, delta):
    return float(np.sum(np.square(delta)) + c * margin)


def _next_const(c, lo, hi, ok):
    if ok:
        hi = min(hi, c)
        return (lo + hi) / 2, lo, hi
    lo = max(lo, c)
    return ((lo + hi) / 2 if hi < 1e9 else c * 10), lo, hi


def _cw_l2(g, x, y, cfg):
    x64 = np.asarray(x, dtype=F64)
    scale = (cfg.clip[1] - cfg.clip[0]) * 0.5
    w0 = to_tanh_space(x64, cfg.clip)
    c, lo, hi = cfg.initial_const, 0.0, 1e10
    best, best_l2 = None, np.inf
    grads = 0
    for _ in range(cfg.bs_steps):
        w = w0.copy()
        opt = _Adam(w.shape, cfg.lr)
        ok = False
        for _ in range(cfg.max_iter):
            xa = from_tanh_space(w, cfg.clip)
            m, gm, z = _margin_grad(g, xa, y, cfg.confidence)
            grads += 1
            if int(np.argmax(z)) != y:
                ok = True
                l2 = float(np.sum((xa.astype(np.float32) - x64) ** 2))
                if l2 < best_l2:
                    best, best_l2 = xa, l2
            gw = (2.0 * (xa - x64) + c * gm) * scale * (1.0 - np.tanh(w) ** 2)
            w = opt.step(w, gw)
            if not np.all(np.isfinite(w)):
                raise NumericDomainError("optimizer diverged")
        c, lo, hi = _next_const(c, lo, hi, ok)
    return best, grads, cfg.bs_steps


def _cw_linf_round(g, x64, y, w_start, tau, c, cfg):
    scale = (cfg.clip[1] - cfg.clip[0]) * 0.5
    w = w_start.copy()
    opt = _Adam(w.shape, cfg.lr)
    grads = 0
    xa = from_tanh_space(w, cfg.clip)
    z = None
    for _ in range(cfg.max_iter):
        xa = from_tanh_space(w, cfg.clip)
        m, gm, z = _margin_grad(g, xa, y, cfg.confidence)
        grads += 1
        d = xa - x64
        over = np.abs(d) > tau
        if int(np.argmax(z)) != y and not over.any():
            return w, xa, grads
        gx = c * gm + np.sign(d) * over
        w = opt.step(w, gx * scale * (1.0 - np.tanh(w) ** 2))
        if not np.all(np.isfinite(w)):
            raise NumericDomainError("optimizer diverged")
    xa = from_tanh_space(w, cfg.clip)
    grads += 1
    if int(g.predict(xa.astype(np.float32))) != y:
        return w, xa, grads
    return None, None, grads


def _cw_linf(g, x, y, cfg):
    """Iterated penalised attack with a shrinking per-coordinate threshold ``tau``."""
    x64 = np.asarray(x, dtype=F64)
    tau, c = 1.0, cfg.linf_const
    w = to_tanh_space(x64, cfg.clip)
    best, best_linf = None, np.inf
    grads = rounds = 0
    while tau > cfg.tau_min and rounds < cfg.linf_max_rounds:
        rounds += 1
        found = None
        while c < cfg.linf_max_const:
            w_new, xa, n = _cw_linf_round(g, x64, y, w, tau, c, cfg)
            grads += n
            if w_new is not None:
                found = xa
                break
            c *= 2
        if found is None:
            break
        w = w_new
        actual = float(np.max(np.abs(found.astype(np.float32) - x64)))
        if actual < best_linf:
            best, best_linf = found, actual
        tau = min(tau, actual) * cfg.tau_decay
    return best, grads, rounds


def cw(g, x, y, norm="l2", cfg=None):
    cfg = cfg or CWConfig()
    name = f"cw-{norm}"
    try:
        if int(g.predict(x)) != y:
            return finalize(g.predict, x, x, y, name, clip=None)
        best, grads, its = (_cw_l2 if norm == "l2" else _cw_linf)(g, x, y, cfg)
    except (NumericDomainError, GradientDegenerate, FloatingPointError) as e:
        return failed(g.predict, x, y, name, extras={"error": str(e)})
    if best is None:
        return failed(g.predict, x, y, name, queries=grads, iterations=its)
    return finalize(g.predict, x, best, y, name, queries=grads, iterations=its, clip=cfg.clip)


# ----------------------------------------------------------------------------
# EAD
# ----------------------------------------------------------------------------

def soft_threshold(z, x0, t):
    """Shrink ``z`` toward ``x0`` by ``t`` (coordinates within ``t`` of ``x0`` snap to it)."""
    z = np.asarray(z, dtype=F64)
    x0 = np.asarray(x0, dtype=F64)
    d = z - x0
    return np.where(d > t, z - t, np.where(d < -t, z + t, x0))


def ead_objective(c, margin, delta, beta):
    delta = np.asarray(delta, dtype=F64)
    return float(c * margin + beta * np.abs(delta).sum() + np.sum(delta ** 2))


def ead(g, x, y, cfg=None):
    """Elastic-net attack solved by FISTA with a binary search on ``c``."""
    cfg = cfg or EADConfig()
    x64 = np.asarray(x, dtype=F64)
    if int(g.predict(x)) != y:
        return finalize(g.predict, x, x, y, "ead", clip=None)
    c, lo, hi = cfg.initial_const, 0.0, 1e10
    best, best_d = None, np.inf
    grads = 0
    try:
        for _ in range(cfg.bs_steps):
            xk = x64.copy()
            yk = x64.copy()
            ok = False
            for it in range(cfg.max_iter):
                lr = cfg.lr * (1.0 - it / cfg.max_iter) ** 0.5
                _, gm, _ = _margin_grad(g, yk, y, cfg.confidence)
                grads += 1
                grad = c * gm + 2.0 * (yk - x64)
                x_new = _clip(soft_threshold(yk - lr * grad, x64, cfg.beta * lr), cfg.clip)
                yk = _clip(x_new + it / (it + 3.0) * (x_new - xk), cfg.clip)
                xk = x_new
                if int(g.predict(x_new.astype(np.float32))) != y:
                    ok = True
                    d = x_new.astype(np.float32) - x64
                    l1 = float(np.abs(d).sum())
                    score = l1 if cfg.decision_rule == "l1" else cfg.beta * l1 + float(np.sum(d ** 2))
                    if score < best_d:
                        best, best_d = x_new, score
            c, lo, hi = _next_const(c, lo, hi, ok)
    except (NumericDomainError, GradientDegenerate, FloatingPointError) as e:
        return failed(g.predict, x, y, "ead", queries=grads, extras={"error": str(e)})
    if best is None:
        return failed(g.predict, x, y, "ead", queries=grads, iterations=cfg.bs_steps)
    return finalize(g.predict, x, best, y, "ead", queries=grads, iterations=cfg.bs_steps, clip=cfg.clip)


# ----------------------------------------------------------------------------
# APGD and the AutoAttack ensemble
# ----------------------------------------------------------------------------

def apgd_checkpoints(n_iter):
    """Iterations at which the step size is reconsidered."""
    p = [0.0, 0.22]
    while True:
        nxt = p[-1] + max(p[-1] - p[-2] - 0.03, 0.06)
        if nxt > 1:
            break
        p.append(nxt)
    return sorted({int(math.ceil(q * n_iter - 1e-9)) for q in p[1:]} - {0})


class StepSizeController:
    """Halve the step at a checkpoint unless the loss rose on at least ``rho`` of the
    iterations since the previous one, or if neither the step nor the best loss
    changed since then."""

    def __init__(self, n_iter, eta0, rho=0.75):
        self.checkpoints = apgd_checkpoints(n_iter)
        self.eta = eta0
        self.rho = rho
        self._last_ckpt = 0
        self._increases = 0
        self._last_f = None
        self.f_best = -np.inf
        self._best_at_ckpt = -np.inf
        self._reduced_at_ckpt = False
        self.trace = []

    def observe(self, k, f):
        """Record ``f(x^(k))``; returns True when the step was halved at ``k``."""
        if self._last_f is not None and f > self._last_f:
            self._increases += 1
        self._last_f = f
        if f > self.f_best:
            self.f_best = f
        halve = False
        if k in self.checkpoints:
            window = k - self._last_ckpt
            oscillating = self._increases < self.rho * window
            stalled = (not self._reduced_at_ckpt) and self._best_at_ckpt >= self.f_best
            halve = oscillating or stalled
            if halve:
                self.eta /= 2.0
            self._reduced_at_ckpt = halve
            self._best_at_ckpt = self.f_best
            self._last_ckpt = k
            self._increases = 0
        self.trace.append(self.eta)
        return halve


def step_size_trace(losses, n_iter, eta0, rho=0.75):
    """Replay the rule on ``losses[k] = f(x^(k))``; returns the step size after each observation."""
    ctl = StepSizeController(n_iter, eta0, rho)
    for k, f in enumerate(losses):
        ctl.observe(k, f)
    return ctl.trace


def _dlr_loss_grad(g, xa, y):
    z = g.logits(xa.astype(np.float32)).astype(F64)
    order = np.argsort(-z, kind="stable")
    m, j = margin_logits(z, y)
    d = z[order[0]] - z[order[2]] + 1e-12
    loss = -m / d
    dz = np.zeros_like(z)
    dz[y] -= 1.0 / d
    dz[j] += 1.0 / d
    dz[order[0]] += m / d ** 2
    dz[order[2]] -= m / d ** 2
    z, gx = g.logits_vjp(xa.astype(np.float32), dz.astype(np.float32))
    return loss, gx.astype(F64), z


def _ce_loss_grad(g, xa, y):
    loss, gx = g.loss_and_grad(xa.astype(np.float32), y)
    return float(loss), gx.astype(F64), None


def apgd(g, x, y, eps, n_iter=100, loss="ce", rng=None, rho=0.75, clip=(0.0, 1.0)):
    """Returns ``(adversarial or None, gradient evaluations)``."""
    rng = rng or np.random.default_rng(0)
    x64 = np.asarray(x, dtype=F64)
    lo, hi = x64 - eps, x64 + eps

    def proj(a):
        return _clip(np.clip(a, lo, hi), clip)

    lg = _ce_loss_grad if loss == "ce" else _dlr_loss_grad

    def evaluate(a):
        f, gr, z = lg(g, a, y)
        if z is None:
            z = g.logits(a.astype(np.float32))
        return f, _check_grad(gr), int(np.argmax(z)) != y

    t = rng.uniform(-1, 1, x64.shape)
    adv = proj(x64 + eps * t / max(np.abs(t).max(), 1e-12))
    f, grad, hit = evaluate(adv)
    if hit:
        return adv, 1
    ctl = StepSizeController(n_iter, 2 * eps, rho)
    ctl.observe(0, f)
    best, f_best, grad_best = adv, f, grad
    prev = adv
    for k in range(n_iter):
        zk = proj(adv + ctl.eta * np.sign(grad))
        new = zk if k == 0 else proj(adv + 0.75 * (zk - adv) + 0.25 * (adv - prev))
        f, gnew, hit = evaluate(new)
        if hit:
            return new, k + 2
        prev, adv, grad = adv, new, gnew
        if f > f_best:
            best, f_best, grad_best = new, f, gnew
        if ctl.observe(k + 1, f):
            adv, grad = best, grad_best
    return None, n_iter + 1


def autoattack(g, score, x, y, cfg=None, index=0):
    """APGD-CE, then APGD-DLR, then Square-L-inf; the first member to succeed wins."""
    from .score import square_attack

    cfg = cfg or AutoAttackConfig()
    if int(g.predict(x)) != y:
        return finalize(g.predict, x, x, y, "autoattack", clip=None)
    rng = sample_rng(cfg.seed, index)
    used = 0
    members = ["apgd-ce"] + (["apgd-dlr"] if g.num_classes >= 3 else [])
    for name in members:
        adv, n = apgd(g, x, y, cfg.eps, cfg.apgd_iter, name[5:], rng, cfg.rho)
        used += n
        if adv is not None:
            r = finalize(g.predict, x, adv, y, "autoattack", queries=used, extras={"member": name})
            if r.success:
                return r
    if np.ndim(x) != 3:
        return failed(g.predict, x, y, "autoattack", queries=used)
    sq = square_attack(score, x, y, SquareConfig(eps=cfg.eps, max_iter=cfg.square_iter,
                                                 init_fraction=cfg.square_init_fraction,
                                                 seed=cfg.seed), index=index)
    used += sq.queries
    if sq.success:
        return finalize(g.predict, x, sq.adversarial, y, "autoattack", queries=used,
                        extras={"member": "square"})
    return failed(g.predict, x, y, "autoattack", queries=used)
