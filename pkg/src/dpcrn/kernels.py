"""Numeric kernels underneath the neural layers.

Convolutions are expressed as one small matmul per kernel tap (BLAS does the
heavy lifting; identical code on both backends). The LSTM recursions are the
loop-dominated hot path and carry numba-compiled implementations with a pure
numpy fallback, selected in :mod:`dpcrn.backend`.

Array layouts, frozen package-wide:
    conv input   x  [time, freq, ch_in]
    conv kernel  w  [ch_out, ch_in, k_t, k_f]
    lstm input   x  [step, batch, d_in]
    lstm kernels wx [4H, d_in], wh [4H, H], bias [4H], gate order (i, f, g, o)
"""

import math

import numpy as np

from .backend import USE_NUMBA, jit

# ---------------------------------------------------------------------------
# convolution (valid positioning; padding/cropping is done by the callers)
# ---------------------------------------------------------------------------


def conv_valid_fwd(xp, w, st, sf):
    """Valid 2-D convolution of xp [Tp,Fp,Ci] with w [Co,Ci,kt,kf]."""
    tp, fp, ci = xp.shape
    co, ci_w, kt, kf = w.shape
    if ci_w != ci:
        raise ValueError(f"channel mismatch: input {ci}, kernel {ci_w}")
    to = (tp - kt) // st + 1
    fo = (fp - kf) // sf + 1
    y = np.zeros((to, fo, co), dtype=xp.dtype)
    for dt in range(kt):
        for df in range(kf):
            sl = xp[dt : dt + to * st : st, df : df + fo * sf : sf, :]
            y += sl @ w[:, :, dt, df].T
    return y


def conv_adjoint_input(gy, w, st, sf, tp, fp):
    """Exact adjoint of conv_valid_fwd with respect to its input.

    Maps gy [To,Fo,Co] back to the padded input shape [tp,fp,Ci]; also the
    full (uncropped) transposed convolution.
    """
    to, fo, co = gy.shape
    co_w, ci, kt, kf = w.shape
    if co_w != co:
        raise ValueError(f"channel mismatch: grad {co}, kernel {co_w}")
    gxp = np.zeros((tp, fp, ci), dtype=gy.dtype)
    for dt in range(kt):
        for df in range(kf):
            gxp[dt : dt + to * st : st, df : df + fo * sf : sf, :] += (
                gy @ w[:, :, dt, df]
            )
    return gxp


def conv_grad_w(xp, gy, st, sf, kt, kf):
    """Gradient of conv_valid_fwd with respect to the kernel."""
    to, fo, co = gy.shape
    ci = xp.shape[2]
    gw = np.empty((co, ci, kt, kf), dtype=gy.dtype)
    for dt in range(kt):
        for df in range(kf):
            sl = xp[dt : dt + to * st : st, df : df + fo * sf : sf, :]
            gw[:, :, dt, df] = np.tensordot(gy, sl, axes=([0, 1], [0, 1]))
    return gw


# ---------------------------------------------------------------------------
# LSTM forward / backward-through-time
# ---------------------------------------------------------------------------


def _lstm_fwd_impl(x, wxt, wht, b, h0, c0, hs, ifgo, cs, tc):
    s, bb, _ = x.shape
    hdim = h0.shape[1]
    h = h0.copy()
    c = c0.copy()
    for t in range(s):
        z = np.dot(x[t], wxt) + np.dot(h, wht)
        for n in range(bb):
            for k in range(hdim):
                zi = z[n, k] + b[k]
                zf = z[n, hdim + k] + b[hdim + k]
                zg = z[n, 2 * hdim + k] + b[2 * hdim + k]
                zo = z[n, 3 * hdim + k] + b[3 * hdim + k]
                gi = 1.0 / (1.0 + math.exp(-zi))
                gf = 1.0 / (1.0 + math.exp(-zf))
                gg = math.tanh(zg)
                go = 1.0 / (1.0 + math.exp(-zo))
                cv = gf * c[n, k] + gi * gg
                tv = math.tanh(cv)
                c[n, k] = cv
                h[n, k] = go * tv
                ifgo[t, n, k] = gi
                ifgo[t, n, hdim + k] = gf
                ifgo[t, n, 2 * hdim + k] = gg
                ifgo[t, n, 3 * hdim + k] = go
                cs[t, n, k] = cv
                tc[t, n, k] = tv
                hs[t, n, k] = h[n, k]


def _lstm_bwd_impl(x, wx, wh, h0, c0, hs, ifgo, cs, tc, g_hs, gh_last, gc_last,
                   gx, gwx, gwh, gb):
    s, bb, _ = x.shape
    hdim = h0.shape[1]
    gh = gh_last.copy()
    gc = gc_last.copy()
    dz = np.empty((bb, 4 * hdim), dtype=x.dtype)
    for t in range(s - 1, -1, -1):
        for n in range(bb):
            for k in range(hdim):
                gi_ = ifgo[t, n, k]
                gf_ = ifgo[t, n, hdim + k]
                gg_ = ifgo[t, n, 2 * hdim + k]
                go_ = ifgo[t, n, 3 * hdim + k]
                tv = tc[t, n, k]
                ghk = gh[n, k] + g_hs[t, n, k]
                gck = gc[n, k] + ghk * go_ * (1.0 - tv * tv)
                cprev = cs[t - 1, n, k] if t > 0 else c0[n, k]
                dz[n, k] = (gck * gg_) * gi_ * (1.0 - gi_)
                dz[n, hdim + k] = (gck * cprev) * gf_ * (1.0 - gf_)
                dz[n, 2 * hdim + k] = (gck * gi_) * (1.0 - gg_ * gg_)
                dz[n, 3 * hdim + k] = (ghk * tv) * go_ * (1.0 - go_)
                gc[n, k] = gck * gf_
        gx[t] = np.dot(dz, wx)
        dzt = np.ascontiguousarray(dz.T)
        gwx += np.dot(dzt, x[t])
        if t > 0:
            gwh += np.dot(dzt, hs[t - 1])
        else:
            gwh += np.dot(dzt, h0)
        for k in range(4 * hdim):
            acc = 0.0
            for n in range(bb):
                acc += dz[n, k]
            gb[k] += acc
        gh = np.dot(dz, wh)
    return gh, gc


if USE_NUMBA:
    _lstm_fwd_impl = jit(_lstm_fwd_impl)
    _lstm_bwd_impl = jit(_lstm_bwd_impl)
else:

    def _sigmoid(z):
        return 1.0 / (1.0 + np.exp(-z))

    def _lstm_fwd_impl(x, wxt, wht, b, h0, c0, hs, ifgo, cs, tc):  # noqa: F811
        s, _, _ = x.shape
        hdim = h0.shape[1]
        h = h0.copy()
        c = c0.copy()
        for t in range(s):
            z = np.dot(x[t], wxt) + np.dot(h, wht) + b
            gi = _sigmoid(z[:, :hdim])
            gf = _sigmoid(z[:, hdim : 2 * hdim])
            gg = np.tanh(z[:, 2 * hdim : 3 * hdim])
            go = _sigmoid(z[:, 3 * hdim :])
            c = gf * c + gi * gg
            tv = np.tanh(c)
            h = go * tv
            ifgo[t, :, :hdim] = gi
            ifgo[t, :, hdim : 2 * hdim] = gf
            ifgo[t, :, 2 * hdim : 3 * hdim] = gg
            ifgo[t, :, 3 * hdim :] = go
            cs[t] = c
            tc[t] = tv
            hs[t] = h

    def _lstm_bwd_impl(x, wx, wh, h0, c0, hs, ifgo, cs, tc, g_hs,  # noqa: F811
                       gh_last, gc_last, gx, gwx, gwh, gb):
        s, _, _ = x.shape
        hdim = h0.shape[1]
        gh = gh_last.copy()
        gc = gc_last.copy()
        for t in range(s - 1, -1, -1):
            gi = ifgo[t, :, :hdim]
            gf = ifgo[t, :, hdim : 2 * hdim]
            gg = ifgo[t, :, 2 * hdim : 3 * hdim]
            go = ifgo[t, :, 3 * hdim :]
            tv = tc[t]
            ghk = gh + g_hs[t]
            gck = gc + ghk * go * (1.0 - tv * tv)
            cprev = cs[t - 1] if t > 0 else c0
            hprev = hs[t - 1] if t > 0 else h0
            dz = np.concatenate(
                [
                    (gck * gg) * gi * (1.0 - gi),
                    (gck * cprev) * gf * (1.0 - gf),
                    (gck * gi) * (1.0 - gg * gg),
                    (ghk * tv) * go * (1.0 - go),
                ],
                axis=1,
            )
            gx[t] = np.dot(dz, wx)
            gwx += np.dot(dz.T, x[t])
            gwh += np.dot(dz.T, hprev)
            gb += dz.sum(axis=0)
            gh = np.dot(dz, wh)
            gc = gck * gf
        return gh, gc


def lstm_fwd(x, wx, wh, b, h0, c0):
    """Run an LSTM over x [S,B,D]; returns (hs, cache) with hs [S,B,H].

    cache holds everything lstm_bwd needs: post-activation gates, cell
    states, tanh(cell), plus the transposed weight copies used forward.
    """
    s, bb, _ = x.shape
    hdim = h0.shape[1]
    dt = x.dtype
    hs = np.empty((s, bb, hdim), dtype=dt)
    ifgo = np.empty((s, bb, 4 * hdim), dtype=dt)
    cs = np.empty((s, bb, hdim), dtype=dt)
    tc = np.empty((s, bb, hdim), dtype=dt)
    wxt = np.ascontiguousarray(wx.T)
    wht = np.ascontiguousarray(wh.T)
    _lstm_fwd_impl(x, wxt, wht, b, h0, c0, hs, ifgo, cs, tc)
    cache = (x, h0, c0, hs, ifgo, cs, tc)
    return hs, cache


def lstm_bwd(cache, wx, wh, g_hs, gh_last=None, gc_last=None):
    """Backprop through lstm_fwd; returns (gx, gwx, gwh, gb, gh0, gc0)."""
    x, h0, c0, hs, ifgo, cs, tc = cache
    s, bb, d = x.shape
    hdim = h0.shape[1]
    dt = x.dtype
    if gh_last is None:
        gh_last = np.zeros((bb, hdim), dtype=dt)
    if gc_last is None:
        gc_last = np.zeros((bb, hdim), dtype=dt)
    gx = np.empty((s, bb, d), dtype=dt)
    gwx = np.zeros((4 * hdim, d), dtype=dt)
    gwh = np.zeros((4 * hdim, hdim), dtype=dt)
    gb = np.zeros(4 * hdim, dtype=dt)
    wx_c = np.ascontiguousarray(wx)
    wh_c = np.ascontiguousarray(wh)
    gh0, gc0 = _lstm_bwd_impl(
        x, wx_c, wh_c, h0, c0, hs, ifgo, cs, tc,
        np.ascontiguousarray(g_hs), gh_last, gc_last, gx, gwx, gwh, gb,
    )
    return gx, gwx, gwh, gb, gh0, gc0
