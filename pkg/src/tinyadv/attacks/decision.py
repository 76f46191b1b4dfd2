"""Black-box attacks: only the top-1 decision is observed."""
from __future__ import annotations

import numpy as np
from scipy.fft import idctn

from ..errors import BoundaryNotBracketed, InitFailed, InvalidArgument
from .base import BoundaryConfig, GeoDAConfig, finalize, sample_rng

F64 = np.float64


def _random_adversarial(dec, x, y, init_size, rng):
    for _ in range(init_size):
        cand = rng.uniform(0.0, 1.0, size=x.shape)
        if dec(cand) != y:
            return cand
    raise InitFailed(f"no adversarial starting point in {init_size} uniform draws")


def boundary_bisect(dec, x_clean, x_adv, y, tol):
    """Shrink the segment [x_clean, x_adv] around the decision boundary.

    Returns the adversarial endpoint once the two endpoints are within ``tol``
    (L2) of each other.
    """
    x_clean = np.asarray(x_clean, dtype=F64)
    x_adv = np.asarray(x_adv, dtype=F64)
    if dec(x_clean) != y or dec(x_adv) == y:
        raise BoundaryNotBracketed("segment endpoints lie on the same side of the boundary")
    cln, adv = x_clean, x_adv
    while np.linalg.norm(adv - cln) > tol:
        mid = 0.5 * (cln + adv)
        if dec(mid) != y:
            adv = mid
        else:
            cln = mid
    return adv, cln


# ----------------------------------------------------------------------------
# Boundary attack
# ----------------------------------------------------------------------------

def _orthogonal_step(rng, delta, current, original):
    """Random step of relative size ``delta`` on the sphere around ``original``."""
    direction = original - current
    dist = np.linalg.norm(direction)
    u = direction / dist
    p = rng.standard_normal(current.shape)
    p /= np.linalg.norm(p)
    p *= delta * dist
    p -= np.sum(p * u) * u
    cand = current + p
    # back onto the sphere of radius dist around the original
    off = cand - original
    return original + off * (dist / np.linalg.norm(off))


def boundary_attack(dec, x, y, cfg=None, index=0):
    """Random walk along the boundary: orthogonal proposals, then steps toward ``x``.

    Only adversarial candidates that do not increase the L2 distance are accepted.
    """
    cfg = cfg or BoundaryConfig()
    rng = sample_rng(cfg.seed, index)
    x64 = np.asarray(x, dtype=F64)
    q0 = dec.queries
    if dec(x64) != y:
        return finalize(dec, x, x, y, "boundary", queries=dec.queries - q0, clip=None)
    start = _random_adversarial(dec, x64, y, cfg.init_size, rng)
    cur, _ = boundary_bisect(dec, x64, start, y, 1e-3 * np.linalg.norm(start - x64))
    dist = float(np.linalg.norm(cur - x64))
    accepted = [dist]
    d_step, e_step = cfg.delta, cfg.eps
    it = 0
    for it in range(1, cfg.max_iter + 1):
        if dist == 0.0:
            break
        found = None
        for _ in range(cfg.num_trial):
            cands = np.stack([np.clip(_orthogonal_step(rng, d_step, cur, x64), 0.0, 1.0)
                              for _ in range(cfg.sample_size)])
            ok = dec(cands) != y
            ratio = ok.mean()
            if ratio < 0.2:
                d_step *= cfg.step_adapt
            elif ratio > 0.5:
                d_step /= cfg.step_adapt
            if ratio > 0:
                found = cands[ok]
                break
        if found is None:
            break
        moved = None
        for _ in range(cfg.num_trial):
            cands = np.clip(found + e_step * (x64 - found), 0.0, 1.0)
            ok = dec(cands) != y
            ratio = ok.mean()
            if ratio < 0.2:
                e_step *= cfg.step_adapt
            elif ratio > 0.5:
                e_step /= cfg.step_adapt
            if ratio > 0:
                good = cands[ok]
                moved = good[np.argmin(np.linalg.norm((good - x64).reshape(len(good), -1), axis=1))]
                break
        if moved is None:
            break
        d_new = float(np.linalg.norm(moved - x64))
        if d_new <= dist:
            cur, dist = moved, d_new
            accepted.append(dist)
    return finalize(dec, x, cur, y, "boundary", queries=dec.queries - q0, iterations=it,
                    extras={"accepted_distances": accepted})


# ----------------------------------------------------------------------------
# GeoDA
# ----------------------------------------------------------------------------

def _frequency_order(shape):
    spatial = shape[:2] if len(shape) >= 2 else shape[:1]
    chans = int(np.prod(shape[len(spatial):], dtype=np.int64)) if len(shape) > len(spatial) else 1
    grids = np.indices(spatial).reshape(len(spatial), -1).T
    order = sorted(map(tuple, grids), key=lambda f: (sum(f), f))
    return [(f, ch) for f in order for ch in range(chans)], chans


def dct_basis(shape, dim):
    """Orthonormal rows spanning the ``dim`` lowest-frequency 2-D DCT components (per channel)."""
    shape = tuple(shape)
    n = int(np.prod(shape))
    if not 1 <= dim <= n:
        raise InvalidArgument(f"dct_dim must lie in [1, {n}], got {dim}")
    order, chans = _frequency_order(shape)
    spatial = shape[:2] if len(shape) >= 2 else shape[:1]
    basis = np.empty((dim, n))
    for i, (freq, ch) in enumerate(order[:dim]):
        coef = np.zeros(spatial)
        coef[freq] = 1.0
        img = idctn(coef, norm="ortho")
        full = np.zeros(spatial + (chans,))
        full[..., ch] = img
        basis[i] = full.ravel()
    return basis


def estimate_normal(dec, x_boundary, y, basis, probes, sigma, rng):
    """Average of signed random subspace directions around a boundary point.

    The sign is +1 when the probe is adversarial, so the result points away
    from the original class.
    """
    coeffs = rng.standard_normal((probes, basis.shape[0]))
    dirs = coeffs @ basis
    pts = np.clip(x_boundary.ravel()[None] + sigma * dirs, 0.0, 1.0)
    labels = dec(pts.reshape((probes,) + x_boundary.shape))
    signs = np.where(labels != y, 1.0, -1.0)
    v = signs @ dirs
    nv = np.linalg.norm(v)
    return (v / nv if nv > 0 else v).reshape(x_boundary.shape)


def _push_along(dec, x, y, direction, tol, max_doublings=30):
    """Smallest multiple of ``direction`` (from ``x``) that flips the label, refined by bisection."""
    t = 1e-3
    for _ in range(max_doublings):
        cand = np.clip(x + t * direction, 0.0, 1.0)
        if dec(cand) != y:
            adv, _ = boundary_bisect(dec, x, cand, y, tol)
            return adv
        t *= 2
    return None


def geoda(dec, x, y, cfg=None, index=0):
    cfg = cfg or GeoDAConfig()
    rng = sample_rng(cfg.seed, index)
    x64 = np.asarray(x, dtype=F64)
    q0 = dec.queries
    if dec(x64) != y:
        return finalize(dec, x, x, y, "geoda", queries=dec.queries - q0, clip=None)
    basis = dct_basis(x64.shape, cfg.dct_dim)
    start = _random_adversarial(dec, x64, y, cfg.init_size, rng)
    xb, _ = boundary_bisect(dec, x64, start, y, cfg.bs_tol)
    best, best_d = xb, float(np.linalg.norm(xb - x64))
    for _ in range(cfg.n_iter):
        normal = estimate_normal(dec, xb, y, basis, cfg.probes, cfg.sigma, rng)
        adv = _push_along(dec, x64, y, normal, cfg.bs_tol)
        if adv is None:
            continue
        d = float(np.linalg.norm(adv - x64))
        if d < best_d:
            best, best_d = adv, d
        xb = adv
    return finalize(dec, x, best, y, "geoda", queries=dec.queries - q0, iterations=cfg.n_iter)
