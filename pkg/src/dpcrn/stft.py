"""Sine-windowed analysis/synthesis filterbank.

400-sample window, 200-sample hop, 400-point FFT, 201 retained bins. The
same sine window is applied before the FFT and again before overlap-add;
at 50% overlap the squared window pair sums to one, giving perfect
reconstruction away from the signal edges.

Conventions frozen here because masks are scale-coupled to them: frame 0
starts at sample 0 (no centering), forward FFT unnormalized, inverse
scaled by 1/fft_len (the numpy default pairing).
"""

import struct
from dataclasses import dataclass

import numpy as np

from .audio import Signal
from .errors import ValidationError

_DUMP_MAGIC = b"DPSG"


@dataclass(frozen=True)
class StftConfig:
    win_len: int = 400
    hop: int = 200
    fft_len: int = 400

    def __post_init__(self):
        if self.hop * 2 != self.win_len:
            raise ValidationError(
                f"hop must be win_len/2 for overlap-add: {self.hop} vs {self.win_len}"
            )
        if self.fft_len != self.win_len:
            raise ValidationError("fft_len must equal win_len")

    @property
    def n_bins(self):
        return self.fft_len // 2 + 1


@dataclass(frozen=True)
class Spectrogram:
    """Complex time-frequency matrix stored as real/imag planes [T, n_bins]."""

    real: np.ndarray
    imag: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.real)
        i = np.asarray(self.imag)
        if r.shape != i.shape or r.ndim != 2:
            raise ValidationError(
                f"real/imag planes must share a 2-D shape: {r.shape} vs {i.shape}"
            )
        object.__setattr__(self, "real", r)
        object.__setattr__(self, "imag", i)

    @property
    def frames(self):
        return self.real.shape[0]

    @property
    def n_bins(self):
        return self.real.shape[1]


def sine_window(n: int) -> np.ndarray:
    """w[k] = sin(pi*(k+0.5)/n), mirrored so w[k] == w[n-1-k] bit-exactly."""
    if n <= 0 or n % 2:
        raise ValidationError(f"window length must be even and positive: {n}")
    half = np.sin(np.pi * (np.arange(n // 2) + 0.5) / n)
    return np.concatenate([half, half[::-1]])


def frame_count(n_samples: int, cfg: StftConfig) -> int:
    if n_samples < cfg.win_len:
        raise ValidationError(
            f"signal shorter than one window: {n_samples} < {cfg.win_len}"
        )
    return (n_samples - cfg.win_len) // cfg.hop + 1


def analyze(s: Signal, cfg: StftConfig = StftConfig()) -> Spectrogram:
    """Frame, window and real-FFT a signal. Frame t covers samples
    [t*hop, t*hop + win_len)."""
    x = s.samples
    t = frame_count(len(x), cfg)
    idx = np.arange(cfg.win_len)[None, :] + cfg.hop * np.arange(t)[:, None]
    frames = x[idx] * sine_window(cfg.win_len)[None, :]
    spec = np.fft.rfft(frames, n=cfg.fft_len, axis=-1)
    return Spectrogram(np.ascontiguousarray(spec.real),
                       np.ascontiguousarray(spec.imag))


def synthesize(spec: Spectrogram, cfg: StftConfig = StftConfig()) -> Signal:
    """Inverse FFT per frame, synthesis window, overlap-add at the hop."""
    if spec.n_bins != cfg.n_bins:
        raise ValidationError(
            f"expected {cfg.n_bins} bins, got {spec.n_bins}"
        )
    t = spec.frames
    frames = np.fft.irfft(spec.real + 1j * spec.imag, n=cfg.fft_len, axis=-1)
    frames *= sine_window(cfg.win_len)[None, :]
    out = np.zeros((t - 1) * cfg.hop + cfg.win_len, dtype=frames.dtype)
    for i in range(t):
        out[i * cfg.hop : i * cfg.hop + cfg.win_len] += frames[i]
    return Signal(out)


def synthesize_frame(real_bins, imag_bins, cfg: StftConfig = StftConfig()):
    """One frame of windowed inverse FFT (streaming helper)."""
    y = np.fft.irfft(real_bins + 1j * imag_bins, n=cfg.fft_len)
    return y * sine_window(cfg.win_len)


def analyze_frame(samples, cfg: StftConfig = StftConfig()):
    """Window + real-FFT of one raw frame of win_len samples."""
    spec = np.fft.rfft(samples * sine_window(cfg.win_len), n=cfg.fft_len)
    return np.ascontiguousarray(spec.real), np.ascontiguousarray(spec.imag)


def synthesize_adjoint(g_samples, t_frames, cfg: StftConfig = StftConfig()):
    """Adjoint of synthesize: waveform-gradient -> spectrogram-plane
    gradients. Interior rfft bins pick up the Hermitian doubling factor."""
    win = sine_window(cfg.win_len)
    scale = np.full(cfg.n_bins, 2.0 / cfg.fft_len)
    scale[0] = 1.0 / cfg.fft_len
    scale[-1] = 1.0 / cfg.fft_len
    g_real = np.empty((t_frames, cfg.n_bins), dtype=g_samples.dtype)
    g_imag = np.empty((t_frames, cfg.n_bins), dtype=g_samples.dtype)
    for i in range(t_frames):
        seg = g_samples[i * cfg.hop : i * cfg.hop + cfg.win_len] * win
        gf = np.fft.rfft(seg, n=cfg.fft_len)
        g_real[i] = gf.real * scale
        g_imag[i] = gf.imag * scale
    return g_real, g_imag


def write_spectrogram(path, spec: Spectrogram) -> None:
    """Binary dump: magic DPSG, u32 frames, u32 bins, float32 real plane
    then imag plane, little-endian row-major."""
    with open(path, "wb") as fh:
        fh.write(_DUMP_MAGIC)
        fh.write(struct.pack("<II", spec.frames, spec.n_bins))
        fh.write(spec.real.astype("<f4").tobytes())
        fh.write(spec.imag.astype("<f4").tobytes())


def read_spectrogram(path) -> Spectrogram:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12 or blob[:4] != _DUMP_MAGIC:
        raise ValidationError(f"not a spectrogram dump: {path}")
    t, bins = struct.unpack_from("<II", blob, 4)
    plane = t * bins * 4
    if len(blob) != 12 + 2 * plane:
        raise ValidationError("truncated spectrogram dump")
    real = np.frombuffer(blob, dtype="<f4", count=t * bins, offset=12)
    imag = np.frombuffer(blob, dtype="<f4", count=t * bins, offset=12 + plane)
    return Spectrogram(real.reshape(t, bins).astype(np.float64),
                       imag.reshape(t, bins).astype(np.float64))
