"""Waveform <-> time-frequency conversions.

STFT framing is uncentered: the signal is right-padded with zeros so that a
clip of ``n`` samples yields ``ceil(n / hop)`` frames.  With the canonical
16 kHz / 512 / 384 / 192 configuration a 3 s clip gives 250 frames, i.e. one
frame every 12 ms (83.33 fps).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

SAMPLE_RATE = 16000
FFT_SIZE = 512
WIN_LENGTH = 384
HOP_LENGTH = 192
N_BINS = FFT_SIZE // 2 + 1
LOG_EPS = 1e-7

LINEAR = "linear_magnitude"
LOG = "log_magnitude"
NORMALIZED = "normalized_log"
SCALES = (LINEAR, LOG, NORMALIZED)


@dataclass
class Spectrogram:
    """Real frames x bins grid tagged with its amplitude scale."""

    values: np.ndarray
    scale: str

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError(f"spectrogram must be 2-D, got shape {self.values.shape}")
        if self.scale not in SCALES:
            raise ValueError(f"unknown scale {self.scale!r}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("spectrogram contains non-finite values")
        if self.scale == LINEAR and np.any(self.values < 0):
            raise ValueError("linear magnitudes must be non-negative")

    @property
    def frames(self) -> int:
        return self.values.shape[0]

    @property
    def bins(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class NormStats:
    mean: float
    std: float

    def __post_init__(self):
        if not self.std > 0:
            raise ValueError("NormStats.std must be positive")


def hann_window(length: int = WIN_LENGTH) -> np.ndarray:
    # Sampled at bin midpoints: no exact zeros at the ends, so every input
    # sample (including the very first) survives the overlap-add inversion.
    n = np.arange(length)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * (n + 0.5) / length)


def num_frames(n_samples: int, hop: int = HOP_LENGTH) -> int:
    return -(-n_samples // hop)


def _check_framing(fft_size, win, hop):
    if win > fft_size:
        raise ValueError("window length exceeds FFT size")
    if hop > win or hop < 1:
        raise ValueError("hop must be in [1, win]")


def stft(x, fft_size: int = FFT_SIZE, win: int = WIN_LENGTH, hop: int = HOP_LENGTH) -> np.ndarray:
    """Complex STFT, shape ``(frames, fft_size // 2 + 1)``."""
    _check_framing(fft_size, win, hop)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("waveform must be a non-empty 1-D array")
    if not np.all(np.isfinite(x)):
        raise ValueError("waveform contains non-finite samples")
    n_frames = num_frames(x.size, hop)
    padded = np.zeros((n_frames - 1) * hop + win)
    padded[: x.size] = x
    idx = np.arange(win)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = padded[idx] * hann_window(win)
    return np.fft.rfft(frames, n=fft_size, axis=1)


def istft(spec, original_len: int, fft_size: int = FFT_SIZE, win: int = WIN_LENGTH,
          hop: int = HOP_LENGTH) -> np.ndarray:
    """Least-squares weighted overlap-add inverse of :func:`stft`."""
    _check_framing(fft_size, win, hop)
    spec = np.asarray(spec)
    if spec.ndim != 2 or spec.shape[1] != fft_size // 2 + 1:
        raise ValueError(f"expected (frames, {fft_size // 2 + 1}) spectrogram, got {spec.shape}")
    n_frames = spec.shape[0]
    full_len = (n_frames - 1) * hop + win
    if original_len > hop * n_frames + win:
        raise ValueError("original_len exceeds the span covered by the frames")
    w = hann_window(win)
    frames = np.fft.irfft(spec, n=fft_size, axis=1)[:, :win] * w
    out = np.zeros(max(full_len, original_len))
    norm = np.zeros_like(out)
    for i in range(n_frames):
        out[i * hop: i * hop + win] += frames[i]
        norm[i * hop: i * hop + win] += w * w
    nz = norm > 0
    out[nz] /= norm[nz]
    return out[:original_len]


def log_magnitude(spec) -> Spectrogram:
    return Spectrogram(np.log(np.abs(spec) + LOG_EPS), LOG)


def magnitude_from_log(values, clamp: float = 1e4) -> np.ndarray:
    """Invert the log floor: ``exp(v) - eps``, clipped to ``[0, clamp]``."""
    return np.clip(np.exp(np.minimum(values, math.log(clamp + LOG_EPS))) - LOG_EPS, 0.0, clamp)


def fit_norm_stats(train_specs) -> NormStats:
    """Global mean / population std over every bin of every spectrogram."""
    specs = list(train_specs)
    for s in specs:
        if s.scale != LOG:
            raise ValueError("norm stats are fitted on log-magnitude spectrograms")
    count = sum(s.values.size for s in specs)
    if count < 2:
        raise ValueError("need at least two bins to fit norm stats")
    total = math.fsum(float(s.values.sum()) for s in specs)
    mean = total / count
    sq = math.fsum(float(np.sum((s.values - mean) ** 2)) for s in specs)
    std = math.sqrt(sq / count)
    if std == 0.0:
        raise ValueError("zero-variance training spectrograms")
    return NormStats(mean, std)


def normalize(s: Spectrogram, ns: NormStats) -> Spectrogram:
    if s.scale != LOG:
        raise ValueError(f"normalize expects {LOG}, got {s.scale}")
    return Spectrogram((s.values - ns.mean) / ns.std, NORMALIZED)


def denormalize(s: Spectrogram, ns: NormStats) -> Spectrogram:
    if s.scale != NORMALIZED:
        raise ValueError(f"denormalize expects {NORMALIZED}, got {s.scale}")
    return Spectrogram(s.values * ns.std + ns.mean, LOG)


def spectral_convergence(x, mag, n_frames=None) -> float:
    est = np.abs(stft(x))
    if n_frames is not None:
        est = est[:n_frames]
    return float(np.linalg.norm(est - mag) / max(np.linalg.norm(mag), 1e-300))


def reconstruct_phase(mag, observed, mask, iters: int = 100, return_residuals: bool = False):
    """Griffin-Lim phase retrieval with the reliable region held fixed.

    ``mag`` supplies magnitudes for the lost bins (``mask == 1``); bins with
    ``mask == 0`` are copied from ``observed`` at every iteration, so they
    come back bit-identical.  Lost bins start with zero phase.

    With ``return_residuals=True`` also returns the list of
    ``|| |STFT(x_t)| - target ||`` values, one per iteration, where ``x_t``
    is the waveform synthesised at iteration ``t``.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    if isinstance(mag, Spectrogram):
        if mag.scale != LINEAR:
            raise ValueError("reconstruct_phase needs linear magnitudes")
        mag = mag.values
    mag = np.asarray(mag, dtype=np.float64)
    observed = np.asarray(observed, dtype=np.complex128)
    lost = np.asarray(mask).astype(bool)
    if not (mag.shape == observed.shape == lost.shape):
        raise ValueError(f"shape mismatch: {mag.shape}, {observed.shape}, {lost.shape}")
    target = np.where(lost, mag, np.abs(observed))
    n_frames = mag.shape[0]
    length = n_frames * HOP_LENGTH

    spec = np.where(lost, mag.astype(np.complex128), observed)
    residuals = []
    for _ in range(iters):
        rebuilt = stft(istft(spec, length))
        if return_residuals:
            residuals.append(float(np.linalg.norm(np.abs(rebuilt) - target)))
        phase = np.exp(1j * np.angle(rebuilt))
        spec = np.where(lost, mag * phase, observed)
    if return_residuals:
        return spec, residuals
    return spec


def resample(x, orig_sr: int, target_sr: int = SAMPLE_RATE) -> np.ndarray:
    """Windowed-sinc polyphase resampling."""
    if orig_sr == target_sr:
        return np.asarray(x, dtype=np.float64)
    ratio = Fraction(target_sr, orig_sr)
    return resample_poly(np.asarray(x, dtype=np.float64), ratio.numerator, ratio.denominator)


def read_wav(path) -> np.ndarray:
    """Load a mono PCM WAV as float64 in [-1, 1], resampled to 16 kHz."""
    sr, data = wavfile.read(str(path))
    if data.ndim != 1:
        raise ValueError(f"{path}: only mono audio is supported")
    if data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        x = data.astype(np.float64) / 2147483648.0
    elif data.dtype == np.uint8:
        x = (data.astype(np.float64) - 128.0) / 128.0
    else:
        x = data.astype(np.float64)
    return resample(x, sr, SAMPLE_RATE)


def write_wav(path, x) -> None:
    x = np.clip(np.asarray(x, dtype=np.float64), -1.0, 1.0)
    pcm = np.round(x * 32767.0).astype("<i2")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    wavfile.write(str(path), SAMPLE_RATE, pcm)
