"""Visual features: landmark motion, upsampling to the audio frame rate, fusion."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

N_LANDMARKS = 68
VISUAL_DIM = 2 * N_LANDMARKS
VIDEO_FPS = 25.0
AUDIO_FRAME_S = 0.012


def motion_vectors(points) -> np.ndarray:
    """First-order temporal difference of a landmark track.

    ``points`` is ``(frames, 68, 2)`` or already flattened to
    ``(frames, 136)``.  Row 0 of the result is zero.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 3:
        pts = pts.reshape(pts.shape[0], -1)
    if pts.ndim != 2 or pts.shape[1] != VISUAL_DIM:
        raise ValueError(f"expected (frames, 68, 2) or (frames, 136) landmarks, got {np.shape(points)}")
    if pts.shape[0] < 2:
        raise ValueError("need at least 2 video frames to compute motion")
    if not np.all(np.isfinite(pts)):
        raise ValueError("landmarks contain non-finite values")
    out = np.zeros_like(pts)
    out[1:] = pts[1:] - pts[:-1]
    return out


def upsample_visual(v, target_frames: int, fps: float = VIDEO_FPS,
                    frame_s: float = AUDIO_FRAME_S) -> np.ndarray:
    """Linear interpolation from video-frame times onto audio-frame times.

    Video frame ``f`` sits at ``(f + 0.5) / fps``; audio frame ``l`` at
    ``(l + 0.5) * frame_s``.  Targets outside the source span take the
    nearest endpoint value.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 2 or v.shape[0] == 0:
        raise ValueError("visual sequence must be a non-empty 2-D array")
    src_t = (np.arange(v.shape[0]) + 0.5) / fps
    dst_t = (np.arange(target_frames) + 0.5) * frame_s
    pos = np.interp(dst_t, src_t, np.arange(v.shape[0], dtype=np.float64))
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, v.shape[0] - 1)
    frac = (pos - lo)[:, None]
    return (1.0 - frac) * v[lo] + frac * v[hi]


def concat_av(audio, visual=None) -> np.ndarray:
    """Frame-wise concatenation, audio bins first.  ``visual=None`` passes audio through."""
    audio = np.asarray(getattr(audio, "values", audio), dtype=np.float64)
    if visual is None:
        return audio
    visual = np.asarray(visual, dtype=np.float64)
    if audio.shape[:-1] != visual.shape[:-1]:
        raise ValueError(f"frame mismatch: audio {audio.shape[:-1]} vs visual {visual.shape[:-1]}")
    return np.concatenate([audio, visual], axis=-1)


@dataclass(frozen=True)
class VisualStats:
    """Per-channel standardization for upsampled motion features."""

    mean: np.ndarray
    std: np.ndarray

    def apply(self, v):
        return (np.asarray(v) - self.mean) / self.std


def fit_visual_stats(tracks) -> VisualStats:
    stacked = np.concatenate([np.asarray(t, dtype=np.float64) for t in tracks], axis=0)
    mean = stacked.mean(axis=0)
    std = stacked.std(axis=0)
    # channels that never move (e.g. a static jaw line) are left unscaled
    std = np.where(std > 1e-8, std, 1.0)
    return VisualStats(mean, std)


def visual_features(points, target_frames: int, stats: VisualStats | None = None) -> np.ndarray:
    """Landmark track -> standardized motion features at the audio frame rate."""
    v = upsample_visual(motion_vectors(points), target_frames)
    return stats.apply(v) if stats is not None else v


def read_landmarks(path) -> np.ndarray:
    """Read a landmark CSV (header row, 136 columns x0,y0..x67,y67) as ``(frames, 68, 2)``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty landmark file")
    header, body = rows[0], rows[1:]
    if len(header) != VISUAL_DIM:
        raise ValueError(f"{path}: expected {VISUAL_DIM} columns, got {len(header)}")
    data = np.array([[float(c) for c in r] for r in body if r], dtype=np.float64)
    if data.ndim != 2 or data.shape[1] != VISUAL_DIM:
        raise ValueError(f"{path}: malformed landmark rows")
    return data.reshape(-1, N_LANDMARKS, 2)


def write_landmarks(path, points) -> None:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, VISUAL_DIM)
    header = [f"{axis}{i}" for i in range(N_LANDMARKS) for axis in ("x", "y")]
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in pts:
            w.writerow([f"{v:.6f}" for v in row])
