"""Hot integer and filtering kernels.

Each kernel has a numba implementation and a vectorised numpy one with
identical results.  ``USE_NUMBA`` (see :mod:`tinyadv._accel`) picks which one
the public names point to; both stay importable for benchmarks and tests.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ._accel import USE_NUMBA, njit

__all__ = [
    "USE_NUMBA",
    "int_conv2d",
    "int_depthwise_conv2d",
    "int_dense",
    "mul_shift_round",
    "median_filter",
    "col2im",
]


# ----------------------------------------------------------------------------
# fixed-point rescale: round_half_away(acc * m0 / 2**n), exact for |acc| < 2**47
# ----------------------------------------------------------------------------

@njit
def _mul_shift_round_nb(acc, m0, n):
    out = np.empty(acc.size, dtype=np.int64)
    flat = acc.ravel()
    mh = m0 >> 16
    ml = m0 & 0xFFFF
    half = np.int64(1) << (n - 17)
    sh = n - 16
    for i in range(flat.size):
        a = flat[i]
        mag = -a if a < 0 else a
        t2 = mag * ml
        s = mag * mh + (t2 >> 16)
        r = (s + half) >> sh
        out[i] = -r if a < 0 else r
    return out.reshape(acc.shape)


def _mul_shift_round_np(acc, m0, n):
    acc = np.asarray(acc, dtype=np.int64)
    mag = np.abs(acc)
    mh = np.int64(m0 >> 16)
    ml = np.int64(m0 & 0xFFFF)
    t2 = mag * ml
    s = mag * mh + (t2 >> 16)
    r = (s + (np.int64(1) << (n - 17))) >> (n - 16)
    return np.where(acc < 0, -r, r)


# ----------------------------------------------------------------------------
# integer convolutions; inputs are zero-point-subtracted int32 arrays (NHWC)
# ----------------------------------------------------------------------------

@njit
def _int_conv2d_nb(x, w, bias, stride, pt, pl, ho, wo):
    n, hgt, wid, c = x.shape
    kh, kw, _, f = w.shape
    out = np.empty((n, ho, wo, f), dtype=np.int64)
    for b in range(n):
        for oy in range(ho):
            for ox in range(wo):
                for of in range(f):
                    acc = np.int64(bias[of])
                    for i in range(kh):
                        iy = oy * stride + i - pt
                        if iy < 0 or iy >= hgt:
                            continue
                        for j in range(kw):
                            ix = ox * stride + j - pl
                            if ix < 0 or ix >= wid:
                                continue
                            for ic in range(c):
                                acc += np.int64(x[b, iy, ix, ic]) * np.int64(w[i, j, ic, of])
                    out[b, oy, ox, of] = acc
    return out


@njit
def _int_dwconv2d_nb(x, w, bias, stride, pt, pl, ho, wo):
    n, hgt, wid, c = x.shape
    kh, kw, _ = w.shape
    out = np.empty((n, ho, wo, c), dtype=np.int64)
    for b in range(n):
        for oy in range(ho):
            for ox in range(wo):
                for ic in range(c):
                    acc = np.int64(bias[ic])
                    for i in range(kh):
                        iy = oy * stride + i - pt
                        if iy < 0 or iy >= hgt:
                            continue
                        for j in range(kw):
                            ix = ox * stride + j - pl
                            if ix < 0 or ix >= wid:
                                continue
                            acc += np.int64(x[b, iy, ix, ic]) * np.int64(w[i, j, ic])
                    out[b, oy, ox, ic] = acc
    return out


@njit
def _int_dense_nb(x, w, bias):
    n, k = x.shape
    f = w.shape[1]
    out = np.empty((n, f), dtype=np.int64)
    for b in range(n):
        for o in range(f):
            acc = np.int64(bias[o])
            for i in range(k):
                acc += np.int64(x[b, i]) * np.int64(w[i, o])
            out[b, o] = acc
    return out


def _int_windows(x, kh, kw, stride, pt, pl, ho, wo):
    n, hgt, wid, c = x.shape
    pb = max((ho - 1) * stride + kh - hgt - pt, 0)
    pr = max((wo - 1) * stride + kw - wid - pl, 0)
    xp = np.pad(x.astype(np.int64), ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::stride, ::stride][:, :ho, :wo]
    return win  # (N,Ho,Wo,C,kh,kw)


def _int_conv2d_np(x, w, bias, stride, pt, pl, ho, wo):
    kh, kw, c, f = w.shape
    win = _int_windows(x, kh, kw, stride, pt, pl, ho, wo)
    cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(-1, kh * kw * c)
    out = cols @ w.astype(np.int64).reshape(-1, f) + bias.astype(np.int64)
    return out.reshape(x.shape[0], ho, wo, f)


def _int_dwconv2d_np(x, w, bias, stride, pt, pl, ho, wo):
    kh, kw, c = w.shape
    win = _int_windows(x, kh, kw, stride, pt, pl, ho, wo)
    out = np.einsum("nhwcij,ijc->nhwc", win, w.astype(np.int64)) + bias.astype(np.int64)
    return out


def _int_dense_np(x, w, bias):
    return x.astype(np.int64) @ w.astype(np.int64) + bias.astype(np.int64)


# ----------------------------------------------------------------------------
# median filter, edge-replicate padding, per channel (N,H,W,C)
# ----------------------------------------------------------------------------

@njit
def _median_filter_nb(xp, window):
    # xp: edge-padded, channel-major (N, C, H + 2r, W + 2r)
    n, c, hp, wp = xp.shape
    hgt, wid = hp - window + 1, wp - window + 1
    out = np.empty((n, c, hgt, wid), dtype=xp.dtype)
    buf = np.empty(window * window, dtype=xp.dtype)
    mid = (window * window) // 2
    for b in range(n):
        for ch in range(c):
            for y in range(hgt):
                for xx in range(wid):
                    k = 0
                    for i in range(window):
                        for j in range(window):
                            v = xp[b, ch, y + i, xx + j]
                            p = k
                            while p > 0 and buf[p - 1] > v:  # insertion sort while gathering
                                buf[p] = buf[p - 1]
                                p -= 1
                            buf[p] = v
                            k += 1
                    out[b, ch, y, xx] = buf[mid]
    return out


def _median_filter_np(x, window):
    r = window // 2
    xp = np.pad(x, ((0, 0), (r, r), (r, r), (0, 0)), mode="edge")
    win = sliding_window_view(xp, (window, window), axis=(1, 2))
    flat = win.reshape(win.shape[:4] + (window * window,))
    return np.partition(flat, (window * window) // 2, axis=-1)[..., (window * window) // 2].astype(x.dtype)


# ----------------------------------------------------------------------------
# public dispatch
# ----------------------------------------------------------------------------

# ----------------------------------------------------------------------------
# col2im: scatter-add window gradients (N,Ho,Wo,kh,kw,C) back onto a padded image
# ----------------------------------------------------------------------------

@njit
def _col2im_nb(gwin, ph, pw, stride):
    n, ho, wo, kh, kw, c = gwin.shape
    out = np.zeros((n, ph, pw, c), dtype=gwin.dtype)
    for b in range(n):
        for y in range(ho):
            for x in range(wo):
                for i in range(kh):
                    r = y * stride + i
                    for j in range(kw):
                        q = x * stride + j
                        for ch in range(c):
                            out[b, r, q, ch] += gwin[b, y, x, i, j, ch]
    return out


def _col2im_np(gwin, ph, pw, stride):
    n, ho, wo, kh, kw, c = gwin.shape
    out = np.zeros((n, ph, pw, c), dtype=gwin.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride] += gwin[:, :, :, i, j]
    return out


def mul_shift_round(acc, m0, n, use_numba=None):
    """``round_half_away(acc * m0 / 2**n)`` computed exactly in int64.

    Requires ``17 <= n`` and ``|acc| < 2**47``.
    """
    if n < 17:
        raise ValueError(f"rescale shift {n} too small")
    acc = np.ascontiguousarray(acc, dtype=np.int64)
    nb = USE_NUMBA if use_numba is None else use_numba
    if nb:
        return _mul_shift_round_nb(acc, np.int64(m0), np.int64(n))
    return _mul_shift_round_np(acc, m0, n)


def int_conv2d(x, w, bias, stride, pt, pl, ho, wo, use_numba=None):
    nb = USE_NUMBA if use_numba is None else use_numba
    fn = _int_conv2d_nb if nb else _int_conv2d_np
    return fn(np.ascontiguousarray(x, dtype=np.int32), np.ascontiguousarray(w, dtype=np.int32),
              np.ascontiguousarray(bias, dtype=np.int64), stride, pt, pl, ho, wo)


def int_depthwise_conv2d(x, w, bias, stride, pt, pl, ho, wo, use_numba=None):
    nb = USE_NUMBA if use_numba is None else use_numba
    fn = _int_dwconv2d_nb if nb else _int_dwconv2d_np
    return fn(np.ascontiguousarray(x, dtype=np.int32), np.ascontiguousarray(w, dtype=np.int32),
              np.ascontiguousarray(bias, dtype=np.int64), stride, pt, pl, ho, wo)


def int_dense(x, w, bias, use_numba=None):
    nb = USE_NUMBA if use_numba is None else use_numba
    fn = _int_dense_nb if nb else _int_dense_np
    return fn(np.ascontiguousarray(x, dtype=np.int32), np.ascontiguousarray(w, dtype=np.int32),
              np.ascontiguousarray(bias, dtype=np.int64))


def median_filter(x, window, use_numba=None):
    """Median over ``window x window`` neighbourhoods of an NHWC float array.

    Unlike the other kernels this one defaults to numpy: ``np.partition`` beats
    the compiled loop at every window size we use (see the kernel benchmark),
    since selecting from random data mispredicts nearly every comparison.
    """
    nb = bool(use_numba)
    x = np.ascontiguousarray(x, dtype=np.float32)
    if window == 1:
        return x.copy()
    if not nb:
        return _median_filter_np(x, window)
    r = window // 2
    xp = np.pad(x, ((0, 0), (r, r), (r, r), (0, 0)), mode="edge")
    out = _median_filter_nb(np.ascontiguousarray(xp.transpose(0, 3, 1, 2)), window)
    return np.ascontiguousarray(out.transpose(0, 2, 3, 1))


def col2im(gwin, padded_hw, stride, use_numba=None):
    """Sum window gradients back onto an image of spatial size ``padded_hw``."""
    nb = USE_NUMBA if use_numba is None else use_numba
    n, ho, wo, kh, kw, c = gwin.shape
    ph, pw = padded_hw
    if stride == kh == kw and ho * kh == ph and wo * kw == pw:
        # non-overlapping tiles cover the image exactly: a pure reshuffle
        return np.ascontiguousarray(gwin.transpose(0, 1, 3, 2, 4, 5)).reshape(n, ph, pw, c)
    gwin = np.ascontiguousarray(gwin)
    return _col2im_nb(gwin, ph, pw, stride) if nb else _col2im_np(gwin, ph, pw, stride)
