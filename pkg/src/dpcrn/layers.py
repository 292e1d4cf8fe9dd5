"""Neural layer primitives: causal 2-D conv, causal transposed conv, batch
norm, PReLU, LSTM, frequency-axis BiLSTM, fully-connected and instant layer
norm. Each op runs on plain arrays (tape=None) or contributes one fused node
with a hand-derived VJP to a GradTape.

Axis conventions: feature maps are [time, freq, channel]; LSTM sequences are
[step, batch, feature]. Time causality in convolutions comes from left-only
zero padding of (k_t - 1) frames.

A causal transposed convolution cannot simultaneously be the exact adjoint of
the causal convolution (the exact adjoint reads future frames). The decoder
op `conv2d_transpose_causal` keeps the first T frames of the full transpose
(output t reads inputs <= t); the exact adjoint is exposed separately as
`conv2d_transpose_adjoint` and doubles as the convolution's input gradient.
"""

import os

import numpy as np

from . import autodiff as ad
from . import kernels
from .autodiff import val
from .errors import ValidationError

BN_EPS = 1e-5
BN_MOMENTUM = 0.99
ILN_EPS = 1e-8

_DEBUG_FINITE = os.environ.get("DPCRN_DEBUG_FINITE", "0") == "1"


def _check(arr):
    if _DEBUG_FINITE and not np.all(np.isfinite(arr)):
        raise FloatingPointError("non-finite values in layer output")
    return arr


def _pad_causal(x, kt, f_pad):
    lo, hi = f_pad
    return np.pad(x, ((kt - 1, 0), (lo, hi), (0, 0)))


# ---------------------------------------------------------------------------
# convolutions
# ---------------------------------------------------------------------------


def conv2d_causal(tape, x, w, b, stride, f_pad):
    """Causal conv: output frame i depends only on input frames <= i*s_t."""
    st, sf = stride
    xd, wd, bd = val(x), val(w), val(b)
    kt, kf = wd.shape[2], wd.shape[3]
    xp = _pad_causal(xd, kt, f_pad)
    out = _check(kernels.conv_valid_fwd(xp, wd, st, sf) + bd)
    if tape is None:
        return out
    f_in = xd.shape[1]

    def vjp(g):
        gb = g.sum(axis=(0, 1))
        gw = kernels.conv_grad_w(xp, g, st, sf, kt, kf)
        gxp = kernels.conv_adjoint_input(g, wd, st, sf, xp.shape[0], xp.shape[1])
        gx = gxp[kt - 1 :, f_pad[0] : f_pad[0] + f_in, :]
        return np.ascontiguousarray(gx), gw, gb

    def fwd(xv, wv, bv):
        return kernels.conv_valid_fwd(_pad_causal(xv, kt, f_pad), wv, st, sf) + bv

    return tape.record(out, (x, w, b), vjp, fwd)


def _transpose_full_shape(y_shape, w_shape, stride):
    t_in, f_in = y_shape[0], y_shape[1]
    kt, kf = w_shape[2], w_shape[3]
    st, sf = stride
    return (t_in - 1) * st + kt, (f_in - 1) * sf + kf


def conv2d_transpose_adjoint(tape, y, w, b, stride, f_crop):
    """Exact adjoint of conv2d_causal with the matching (stride, pad=crop)
    config. Anti-causal in time by k_t - 1 frames; inference never uses it."""
    st, sf = stride
    yd, wd, bd = val(y), val(w), val(b)
    kt, kf = wd.shape[2], wd.shape[3]
    lo, hi = f_crop
    tp, fp = _transpose_full_shape(yd.shape, wd.shape, stride)
    full = kernels.conv_adjoint_input(yd, wd, st, sf, tp, fp)
    out = _check(np.ascontiguousarray(full[kt - 1 :, lo : fp - hi, :]) + bd)
    if tape is None:
        return out

    def embed(g):
        gf = np.zeros((tp, fp, g.shape[2]), dtype=g.dtype)
        gf[kt - 1 :, lo : fp - hi, :] = g
        return gf

    def vjp(g):
        gf = embed(g)
        gy = kernels.conv_valid_fwd(gf, wd, st, sf)
        gw = kernels.conv_grad_w(gf, yd, st, sf, kt, kf)
        return gy, gw, g.sum(axis=(0, 1))

    def fwd(yv, wv, bv):
        fullv = kernels.conv_adjoint_input(yv, wv, st, sf, tp, fp)
        return np.ascontiguousarray(fullv[kt - 1 :, lo : fp - hi, :]) + bv

    return tape.record(out, (y, w, b), vjp, fwd)


def conv2d_transpose_causal(tape, y, w, b, stride, f_crop):
    """Decoder transposed conv: full transpose with the trailing k_t - 1
    time frames dropped, so output frame t reads input frames <= t. Only
    time stride 1 is meaningful for this alignment."""
    st, sf = stride
    if st != 1:
        raise ValidationError(f"causal transposed conv requires s_t=1, got {st}")
    yd, wd, bd = val(y), val(w), val(b)
    kt, kf = wd.shape[2], wd.shape[3]
    lo, hi = f_crop
    tp, fp = _transpose_full_shape(yd.shape, wd.shape, stride)
    t_out = yd.shape[0]
    full = kernels.conv_adjoint_input(yd, wd, st, sf, tp, fp)
    out = _check(np.ascontiguousarray(full[:t_out, lo : fp - hi, :]) + bd)
    if tape is None:
        return out

    def embed(g):
        gf = np.zeros((tp, fp, g.shape[2]), dtype=g.dtype)
        gf[:t_out, lo : fp - hi, :] = g
        return gf

    def vjp(g):
        gf = embed(g)
        gy = kernels.conv_valid_fwd(gf, wd, st, sf)
        gw = kernels.conv_grad_w(gf, yd, st, sf, kt, kf)
        return gy, gw, g.sum(axis=(0, 1))

    def fwd(yv, wv, bv):
        fullv = kernels.conv_adjoint_input(yv, wv, st, sf, tp, fp)
        return np.ascontiguousarray(fullv[:t_out, lo : fp - hi, :]) + bv

    return tape.record(out, (y, w, b), vjp, fwd)


# ---------------------------------------------------------------------------
# normalization and activations
# ---------------------------------------------------------------------------


def batch_norm(tape, x, gamma, beta, running_mean, running_var, mode="infer",
               momentum=BN_MOMENTUM, eps=BN_EPS, state_out=None):
    """Per-channel normalization of [T,F,C] features.

    infer: uses the stored running statistics.
    train: uses batch statistics over (t, f); the updated running stats are
    written into state_out (a (mean, var) pair of arrays) when given.
    """
    xd = val(x)
    gd, bd = val(gamma), val(beta)
    if mode == "infer":
        mu, var = val(running_mean), val(running_var)
    elif mode == "train":
        mu = xd.mean(axis=(0, 1))
        var = xd.var(axis=(0, 1))
        if state_out is not None:
            state_out[0][...] = momentum * val(running_mean) + (1 - momentum) * mu
            state_out[1][...] = momentum * val(running_var) + (1 - momentum) * var
    else:
        raise ValidationError(f"unknown batch_norm mode: {mode!r}")
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (xd - mu) * inv
    out = _check(xhat * gd + bd)
    if tape is None:
        return out

    m = xd.shape[0] * xd.shape[1]

    def vjp(g):
        ggamma = (g * xhat).sum(axis=(0, 1))
        gbeta = g.sum(axis=(0, 1))
        gxhat = g * gd
        if mode == "infer":
            gx = gxhat * inv
        else:
            gvar = (gxhat * (xd - mu)).sum(axis=(0, 1)) * (-0.5) * inv**3
            gmu = -(gxhat.sum(axis=(0, 1))) * inv
            gx = gxhat * inv + gvar * 2.0 * (xd - mu) / m + gmu / m
        return gx, ggamma, gbeta

    def fwd(xv, gv, bv):
        if mode == "infer":
            muv, varv = mu, var
        else:
            muv, varv = xv.mean(axis=(0, 1)), xv.var(axis=(0, 1))
        return (xv - muv) / np.sqrt(varv + eps) * gv + bv

    return tape.record(out, (x, gamma, beta), vjp, fwd)


def prelu(tape, x, alpha):
    """y = x for x >= 0 else alpha*x, alpha per channel (last axis)."""
    xd, a = val(x), val(alpha)
    neg = np.minimum(xd, 0.0)
    out = _check(np.maximum(xd, 0.0) + a * neg)
    if tape is None:
        return out
    mask = xd >= 0.0

    def vjp(g):
        gx = g * np.where(mask, 1.0, a)
        galpha = (g * neg).sum(axis=tuple(range(xd.ndim - 1)))
        return gx, galpha

    def fwd(xv, av):
        return np.maximum(xv, 0.0) + av * np.minimum(xv, 0.0)

    return tape.record(out, (x, alpha), vjp, fwd)


def fully_connected(tape, x, w, b):
    """y = x @ w.T + b over the trailing feature axis."""
    xd, wd, bd = val(x), val(w), val(b)
    if wd.shape[1] != xd.shape[-1]:
        raise ValidationError(
            f"fc shape mismatch: input {xd.shape[-1]}, weight {wd.shape}"
        )
    out = _check(xd @ wd.T + bd)
    if tape is None:
        return out

    def vjp(g):
        g2 = g.reshape(-1, g.shape[-1])
        x2 = xd.reshape(-1, xd.shape[-1])
        return (g @ wd).reshape(xd.shape), g2.T @ x2, g2.sum(axis=0)

    return tape.record(out, (x, w, b), vjp, lambda xv, wv, bv: xv @ wv.T + bv)


def iln(tape, x, gamma, beta, eps=ILN_EPS):
    """Instant layer norm: every frame normalized by its own statistics over
    the joint (freq, channel) axes; gamma/beta [F,C] shared across frames."""
    xd, gd, bd = val(x), val(gamma), val(beta)
    mu = xd.mean(axis=(1, 2), keepdims=True)
    var = xd.var(axis=(1, 2), keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (xd - mu) * inv
    out = _check(xhat * gd + bd)
    if tape is None:
        return out
    m = xd.shape[1] * xd.shape[2]

    def vjp(g):
        ggamma = (g * xhat).sum(axis=0)
        gbeta = g.sum(axis=0)
        gxhat = g * gd
        gvar = (gxhat * (xd - mu)).sum(axis=(1, 2), keepdims=True) * (-0.5) * inv**3
        gmu = -(gxhat.sum(axis=(1, 2), keepdims=True)) * inv
        gx = gxhat * inv + gvar * 2.0 * (xd - mu) / m + gmu / m
        return gx, ggamma, gbeta

    def fwd(xv, gv, bv):
        muv = xv.mean(axis=(1, 2), keepdims=True)
        varv = xv.var(axis=(1, 2), keepdims=True)
        return (xv - muv) / np.sqrt(varv + eps) * gv + bv

    return tape.record(out, (x, gamma, beta), vjp, fwd)


# ---------------------------------------------------------------------------
# recurrent layers
# ---------------------------------------------------------------------------


def lstm_seq(tape, x, wx, wh, b, state0=None):
    """LSTM over x [S,B,D] with gate order (i,f,g,o).

    Returns (hs, (h_final, c_final)); the final states are plain arrays and
    are not differentiated (training always consumes whole sequences).
    """
    xd, wxd, whd, bd = val(x), val(wx), val(wh), val(b)
    s, bb, d = xd.shape
    h4 = wxd.shape[0]
    if h4 % 4 or wxd.shape[1] != d or whd.shape != (h4, h4 // 4) or bd.shape != (h4,):
        raise ValidationError(
            f"lstm weight shapes inconsistent: wx {wxd.shape}, wh {whd.shape}, "
            f"b {bd.shape}, input {xd.shape}"
        )
    hdim = h4 // 4
    if state0 is None:
        h0 = np.zeros((bb, hdim), dtype=xd.dtype)
        c0 = np.zeros((bb, hdim), dtype=xd.dtype)
    else:
        h0, c0 = state0
        if h0.shape != (bb, hdim) or c0.shape != (bb, hdim):
            raise ValidationError(
                f"lstm state shape mismatch: {h0.shape}/{c0.shape}, "
                f"expected {(bb, hdim)}"
            )
    hs, cache = kernels.lstm_fwd(xd, wxd, whd, bd, h0, c0)
    _check(hs)
    final = (hs[-1].copy(), cache[5][-1].copy())
    if tape is None:
        return hs, final

    def vjp(g):
        gx, gwx, gwh, gb, _, _ = kernels.lstm_bwd(cache, wxd, whd, g)
        return gx, gwx, gwh, gb

    def fwd(xv, wxv, whv, bv):
        return kernels.lstm_fwd(xv, wxv, whv, bv, h0, c0)[0]

    node = tape.record(hs, (x, wx, wh, b), vjp, fwd)
    return node, final


def bilstm_over_axis(tape, x, wx_f, wh_f, b_f, wx_b, wh_b, b_b):
    """Bidirectional LSTM over x [S,B,D]; both directions start from zero
    state on every call; outputs concatenated [forward, backward]."""
    fwd_out, _ = lstm_seq(tape, x, wx_f, wh_f, b_f)
    rev_in = ad.reverse(tape, x, 0)
    bwd_out, _ = lstm_seq(tape, rev_in, wx_b, wh_b, b_b)
    bwd_out = ad.reverse(tape, bwd_out, 0)
    return ad.concat(tape, [fwd_out, bwd_out], axis=2)
