"""Gray-box attacks: only class probabilities are observed."""
from __future__ import annotations

import numpy as np

from ..errors import InvalidArgument
from .base import SquareConfig, ZOOConfig, failed, finalize, sample_rng

F64 = np.float64
_TINY = 1e-30


def log_margin(p, y):
    """``log p_y - max_{j != y} log p_j``; negative means misclassified."""
    lp = np.log(np.maximum(np.asarray(p, dtype=F64), _TINY))
    other = np.delete(lp, y, axis=-1)
    return lp[..., y] - other.max(axis=-1)


def _decide(score):
    return lambda a: score.decide(a)


# ----------------------------------------------------------------------------
# ZOO
# ----------------------------------------------------------------------------

def coordinate_gradient(f, x, idx, h):
    """Symmetric-difference estimates ``(f(x+h e_i) - f(x-h e_i)) / 2h`` for ``i in idx``.

    ``f`` maps a stack of flat points to one value each; all 2k probes go in
    a single call.
    """
    x = np.asarray(x, dtype=F64).ravel()
    idx = np.asarray(idx)
    k = idx.size
    pts = np.repeat(x[None], 2 * k, axis=0)
    pts[np.arange(k), idx] += h
    pts[k + np.arange(k), idx] -= h
    vals = np.asarray(f(pts), dtype=F64)
    return (vals[:k] - vals[k:]) / (2 * h)


def zoo(score, x, y, cfg=None, index=0):
    """Coordinate-wise ADAM on the C&W-L2 objective with symmetric-difference estimates.

    Each probed coordinate costs two queries, each objective evaluation one.
    """
    cfg = cfg or ZOOConfig()
    rng = sample_rng(cfg.seed, index)
    x64 = np.asarray(x, dtype=F64)
    shape = x64.shape
    n = x64.size
    q0 = score.queries
    probes = evals = 0

    def objective(points, c):
        p = score(points.reshape((-1,) + shape))
        m = np.maximum(log_margin(p, y), -cfg.confidence)
        d = points.reshape(len(points), -1) - x64.ravel()
        return np.sum(d * d, axis=1) + c * m, p

    _, p0 = objective(x64.reshape(1, -1), cfg.initial_const)
    evals += 1
    if int(np.argmax(p0[0])) != y:
        return finalize(_decide(score), x, x, y, "zoo", queries=score.queries - q0, clip=None,
                        extras={"probes": 0, "evaluations": evals})
    c, lo, hi = cfg.initial_const, 0.0, 1e10
    best, best_l2 = None, np.inf
    k = min(cfg.batch_coords, n)
    for _ in range(cfg.bs_steps):
        adv = x64.ravel().copy()
        m = np.zeros(n)
        v = np.zeros(n)
        t = np.zeros(n)
        ok = False
        for _ in range(cfg.max_iter):
            idx = rng.choice(n, size=k, replace=False)
            gi = coordinate_gradient(lambda pts: objective(pts, c)[0], adv, idx, cfg.h)
            probes += k
            t[idx] += 1
            m[idx] = 0.9 * m[idx] + 0.1 * gi
            v[idx] = 0.999 * v[idx] + 0.001 * gi * gi
            mh = m[idx] / (1 - 0.9 ** t[idx])
            vh = v[idx] / (1 - 0.999 ** t[idx])
            adv[idx] = np.clip(adv[idx] - cfg.lr * mh / (np.sqrt(vh) + 1e-8), 0.0, 1.0)
            _, p = objective(adv[None], c)
            evals += 1
            if int(np.argmax(p[0])) != y:
                ok = True
                l2 = float(np.sum((adv.astype(np.float32) - x64.ravel()) ** 2))
                if l2 < best_l2:
                    best, best_l2 = adv.copy(), l2
        if ok:
            hi = min(hi, c)
            c = (lo + hi) / 2
        else:
            lo = max(lo, c)
            c = (lo + hi) / 2 if hi < 1e9 else c * 10
    extras = {"probes": probes, "evaluations": evals}
    used = score.queries - q0
    if best is None:
        return failed(_decide(score), x, y, "zoo", queries=used, iterations=cfg.bs_steps, extras=extras)
    r = finalize(_decide(score), x, best.reshape(shape), y, "zoo", queries=used,
                 iterations=cfg.bs_steps, extras=extras)
    return r


# ----------------------------------------------------------------------------
# Square attack
# ----------------------------------------------------------------------------

_SCHEDULE = ((10, 1), (50, 2), (200, 4), (500, 8), (1000, 16), (2000, 32), (4000, 64),
             (6000, 128), (8000, 256), (10000, 512))


def square_fraction(p_init, it, n_iters):
    """Fraction of pixels per square at iteration ``it``, the schedule rescaled to 10000 steps."""
    i = int(it / n_iters * 10000)
    if i <= 10:
        return p_init
    lo = 10
    for hi, div in _SCHEDULE[1:]:
        if lo < i <= hi:
            return p_init / div
        lo = hi
    return p_init


def _side(p, h, w, c, minimum=1):
    s = int(round(np.sqrt(p * h * w)))
    return min(max(s, minimum), h - 1 if h > 1 else 1)


def _gaussian_rect(a, b):
    delta = np.zeros((a, b))
    ac, bc = a // 2 + 1, b // 2 + 1
    ca, cb = ac - 1, bc - 1
    for k in range(max(ac, bc)):
        delta[max(ca, 0):min(ca + 2 * k + 1, a), max(cb, 0):min(cb + 2 * k + 1, b)] += 1.0 / (k + 1) ** 2
        ca -= 1
        cb -= 1
    return delta / np.sqrt(np.sum(delta ** 2))


def gaussian_square(s, rng):
    """Two opposite-signed centred bumps filling an ``s x s`` square, unit L2 norm."""
    d = np.zeros((s, s))
    h = s // 2
    if h:
        d[:h] = _gaussian_rect(h, s)
    d[h:] = -_gaussian_rect(s - h, s)
    d /= np.sqrt(np.sum(d ** 2))
    if rng.random() > 0.5:
        d = d.T
    return d


def square_attack(score, x, y, cfg=None, index=0, norm=None):
    cfg = cfg or SquareConfig()
    if np.ndim(x) != 3:
        raise InvalidArgument(f"square attack needs (H, W, C) images, got shape {np.shape(x)}")
    if norm is not None and norm != cfg.norm:
        cfg = SquareConfig(**{**cfg.to_dict(), "norm": norm})
    run = _square_linf if cfg.norm == "linf" else _square_l2
    return run(score, np.asarray(x, dtype=F64), y, cfg, sample_rng(cfg.seed, index))


def _finish(score, x, x_best, y, cfg, q0, it, trace, name):
    return finalize(_decide(score), x, x_best, y, name, queries=score.queries - q0, iterations=it,
                    extras={"loss_trace": trace})


def _square_linf(score, x, y, cfg, rng):
    h, w, c = x.shape
    eps = cfg.eps
    q0 = score.queries
    lo, hi = np.maximum(x - eps, 0.0), np.minimum(x + eps, 1.0)
    x_best = np.clip(x + eps * rng.choice([-1.0, 1.0], size=(1, w, c)), lo, hi)
    m_best = float(log_margin(score(x_best), y))
    trace = [-m_best]
    it = 0
    for it in range(1, cfg.max_iter):
        if m_best < 0:
            break
        delta = x_best - x
        s = _side(square_fraction(cfg.init_fraction, it - 1, cfg.max_iter), h, w, c)
        r0 = rng.integers(0, h - s + 1)
        c0 = rng.integers(0, w - s + 1)
        win = (slice(r0, r0 + s), slice(c0, c0 + s))
        for _ in range(10):
            if not np.all(np.abs(np.clip(x[win] + delta[win], lo[win], hi[win]) - x_best[win]) < 1e-7):
                break
            delta[win] = eps * rng.choice([-1.0, 1.0], size=(1, 1, c))
        cand = np.clip(x + delta, lo, hi)
        m = float(log_margin(score(cand), y))
        if -m > -m_best:
            x_best, m_best = cand, m
        trace.append(-m_best)
    return _finish(score, x, x_best, y, cfg, q0, it, trace, "square-linf")


def _square_l2(score, x, y, cfg, rng):
    h, w, c = x.shape
    eps = cfg.eps
    q0 = score.queries
    delta = np.zeros_like(x)
    s = max(h // 5, 1)
    start = (h - s * 5) // 2
    ch = start
    for _ in range(h // s):
        cw = start
        for _ in range(w // s):
            if ch + s <= h and cw + s <= w:
                delta[ch:ch + s, cw:cw + s] += (gaussian_square(s, rng)[:, :, None]
                                                * rng.choice([-1.0, 1.0], size=(1, 1, c)))
            cw += s
        ch += s
    x_best = np.clip(x + delta / np.sqrt(np.sum(delta ** 2)) * eps, 0.0, 1.0)
    m_best = float(log_margin(score(x_best), y))
    trace = [-m_best]
    it = 0
    for it in range(1, cfg.max_iter):
        if m_best < 0:
            break
        cur = x_best - x
        s = _side(square_fraction(cfg.init_fraction, it - 1, cfg.max_iter), h, w, c, minimum=3)
        if s % 2 == 0:
            s = s + 1 if s + 1 < h else s - 1
        r1, c1 = rng.integers(0, h - s + 1, 2)
        r2, c2 = rng.integers(0, h - s + 1, 2)
        w1 = (slice(r1, r1 + s), slice(c1, c1 + s))
        w2 = (slice(r2, r2 + s), slice(c2, c2 + s))
        mask = np.zeros((h, w, 1))
        mask[w1] = 1
        mask[w2] = 1
        norm_win1 = np.sqrt(np.sum(cur[w1] ** 2, axis=(0, 1), keepdims=True))
        norm_img = np.sqrt(np.sum(cur ** 2))
        norm_wins = np.sqrt(np.sum((cur * mask) ** 2, axis=(0, 1), keepdims=True))
        new = gaussian_square(s, rng)[:, :, None] * rng.choice([-1.0, 1.0], size=(1, 1, c))
        new = new + cur[w1] / (1e-10 + norm_win1)
        budget = np.maximum(eps ** 2 - norm_img ** 2, 0.0) / c + norm_wins ** 2
        new = new / np.sqrt(np.sum(new ** 2, axis=(0, 1), keepdims=True)) * np.sqrt(budget)
        cur[w2] = 0.0
        cur[w1] = new
        cand = np.clip(x + cur / np.sqrt(np.sum(cur ** 2)) * eps, 0.0, 1.0)
        m = float(log_margin(score(cand), y))
        if -m > -m_best:
            x_best, m_best = cand, m
        trace.append(-m_best)
    return _finish(score, x, x_best, y, cfg, q0, it, trace, "square-l2")
