"""Waveform I/O, synthetic test signals, RIR convolution and SNR mixing.

Everything is mono 16 kHz; other rates and channel layouts are rejected
rather than resampled.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError, WavFormatError

SAMPLE_RATE = 16_000

_PCM16_SCALE = 32768.0
_FMT_PCM = 1
_FMT_FLOAT = 3


@dataclass(frozen=True)
class Signal:
    """Mono waveform: float samples at 16 kHz."""

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        if self.sample_rate != SAMPLE_RATE:
            raise ValidationError(
                f"unsupported sample rate: {self.sample_rate} "
                f"(engine requires {SAMPLE_RATE})"
            )
        arr = np.asarray(self.samples, dtype=np.float64)
        if arr.ndim != 1:
            raise ValidationError(f"signal must be 1-D, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("signal contains non-finite samples")
        object.__setattr__(self, "samples", arr)

    def __len__(self):
        return len(self.samples)

    @property
    def energy(self):
        return float(np.sum(self.samples * self.samples))


@dataclass(frozen=True)
class MixSpec:
    """Target SNR in dB plus the seed used to pick the noise segment."""

    snr_db: float
    seed: int = 0

    def __post_init__(self):
        if not np.isfinite(self.snr_db):
            raise ValidationError("snr_db must be finite")


def read_wav(path) -> Signal:
    """Read a mono 16 kHz PCM16 or IEEE-float32 RIFF/WAVE file."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12 or blob[:4] != b"RIFF" or blob[8:12] != b"WAVE":
        raise WavFormatError(f"not a RIFF/WAVE file: {path}")

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(blob):
        cid = blob[pos : pos + 4]
        (size,) = struct.unpack_from("<I", blob, pos + 4)
        body = blob[pos + 8 : pos + 8 + size]
        if cid == b"fmt ":
            if size < 16:
                raise WavFormatError("malformed fmt chunk")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif cid == b"data":
            data = body
        pos += 8 + size + (size & 1)  # chunks are word-aligned

    if fmt is None or data is None:
        raise WavFormatError("missing fmt or data chunk")
    audio_format, channels, rate, _, _, bits = fmt
    if audio_format not in (_FMT_PCM, _FMT_FLOAT):
        raise WavFormatError(f"unsupported audio format tag: {audio_format}")
    if channels != 1:
        raise WavFormatError(f"unsupported channel count: {channels}")
    if rate != SAMPLE_RATE:
        raise WavFormatError(f"unsupported sample rate: {rate}")

    if audio_format == _FMT_PCM:
        if bits != 16:
            raise WavFormatError(f"unsupported PCM bit depth: {bits}")
        raw = np.frombuffer(data, dtype="<i2")
        samples = raw.astype(np.float64) / _PCM16_SCALE
    else:
        if bits != 32:
            raise WavFormatError(f"unsupported float bit depth: {bits}")
        samples = np.frombuffer(data, dtype="<f4").astype(np.float64)
    return Signal(samples)


def write_wav(path, s: Signal) -> None:
    """Write a Signal as mono 16 kHz PCM16, clipping to [-1, 1] first."""
    clipped = np.clip(s.samples, -1.0, 1.0)
    q = np.clip(np.round(clipped * _PCM16_SCALE), -32768, 32767).astype("<i2")
    payload = q.tobytes()
    block_align = 2
    byte_rate = SAMPLE_RATE * block_align
    hdr = b"".join(
        [
            b"RIFF",
            struct.pack("<I", 36 + len(payload)),
            b"WAVE",
            b"fmt ",
            struct.pack("<IHHIIHH", 16, _FMT_PCM, 1, SAMPLE_RATE, byte_rate,
                        block_align, 16),
            b"data",
            struct.pack("<I", len(payload)),
        ]
    )
    with open(path, "wb") as fh:
        fh.write(hdr + payload)


def mix_at_snr(speech: Signal, noise: Signal, spec: MixSpec):
    """Scale a noise segment so speech/noise energies realize spec.snr_db.

    Returns (mixture, scaled_noise). The noise segment is cropped to the
    speech length at a seed-determined offset.
    """
    es = speech.energy
    if es <= 0.0 or noise.energy <= 0.0:
        raise ValidationError("degenerate mixing input")
    if len(noise) < len(speech):
        raise ValidationError(
            f"noise shorter than speech: {len(noise)} < {len(speech)}"
        )
    rng = np.random.default_rng(spec.seed)
    start = int(rng.integers(0, len(noise) - len(speech) + 1))
    seg = noise.samples[start : start + len(speech)]
    en = float(np.sum(seg * seg))
    if en <= 0.0:
        raise ValidationError("degenerate mixing input")
    gain = np.sqrt(es / (en * 10.0 ** (spec.snr_db / 10.0)))
    scaled = Signal(seg * gain)
    return Signal(speech.samples + scaled.samples), scaled


def convolve_rir(speech: Signal, rir: Signal) -> Signal:
    """Convolve speech with a room impulse response, truncated to the
    speech length so targets stay time-aligned."""
    if len(rir) == 0:
        raise ValidationError("empty rir")
    if len(rir) >= len(speech):
        raise ValidationError(
            f"rir must be shorter than speech: {len(rir)} >= {len(speech)}"
        )
    out = np.convolve(speech.samples, rir.samples)[: len(speech)]
    return Signal(out)


def gen_synthetic(kind: str, duration_s: float, seed: int = 0,
                  freq_hz: float = 440.0) -> Signal:
    """Deterministic synthetic signals: tone, chirp, white-noise or
    speech-like-harmonic (drifting f0, 8 harmonics, amplitude envelope)."""
    if duration_s <= 0:
        raise ValidationError(f"duration must be positive, got {duration_s}")
    n = int(round(duration_s * SAMPLE_RATE))
    t = np.arange(n) / SAMPLE_RATE
    rng = np.random.default_rng(seed)

    if kind == "tone":
        x = 0.5 * np.sin(2 * np.pi * freq_hz * t)
    elif kind == "chirp":
        f0, f1 = 100.0, 4000.0
        phase = 2 * np.pi * (f0 * t + (f1 - f0) * t * t / (2 * duration_s))
        x = 0.5 * np.sin(phase)
    elif kind == "white-noise":
        x = rng.normal(0.0, 0.1, size=n)
    elif kind == "speech-like-harmonic":
        ph0 = rng.uniform(0, 2 * np.pi, size=3)
        f0 = 120.0 + 25.0 * np.sin(2 * np.pi * 0.6 * t + ph0[0])
        phase = 2 * np.pi * np.cumsum(f0) / SAMPLE_RATE
        x = np.zeros(n)
        for h in range(1, 9):
            x += np.sin(h * phase + ph0[1] * h) / h
        syllables = 0.5 + 0.5 * np.sin(2 * np.pi * 2.7 * t + ph0[2])
        x *= 0.15 + 0.85 * syllables**2
        x *= 0.5 / np.max(np.abs(x))
    else:
        raise ValidationError(f"unknown synthetic kind: {kind!r}")
    return Signal(x)


def measured_snr_db(reference: Signal, interference: Signal) -> float:
    """10·log10 of the reference/interference energy ratio."""
    return 10.0 * np.log10(reference.energy / interference.energy)
