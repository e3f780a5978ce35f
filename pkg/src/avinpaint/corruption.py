"""Gap sampling and binary time-frequency masking.

All durations are integer milliseconds.  A gap is a half-open interval
``[start, start + duration)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dsp import Spectrogram

MIN_GAP_MS = 36
MAX_TOTAL_MS = 2400
TOTAL_MEAN_MS = 900.0
TOTAL_STD_MS = 300.0
MAX_GAPS = 8
MAX_LOST_FRACTION = 0.8
FIXED_GAP_SIZES = (100, 200, 400, 800, 1600)
HOP_MS = 12.0
_MAX_ATTEMPTS = 1000


@dataclass
class GapPlan:
    gaps: list = field(default_factory=list)

    def __post_init__(self):
        self.gaps = sorted((int(s), int(d)) for s, d in self.gaps)

    @property
    def total_ms(self) -> int:
        return sum(d for _, d in self.gaps)

    def __len__(self):
        return len(self.gaps)

    def validate(self, utterance_ms: float, min_gap_ms: int = MIN_GAP_MS) -> None:
        """Raise ``ValueError`` if the plan breaks a gap-plan invariant."""
        if self.total_ms > MAX_TOTAL_MS:
            raise ValueError(f"total lost duration {self.total_ms} ms exceeds {MAX_TOTAL_MS} ms")
        prev_end = None
        for start, dur in self.gaps:
            if dur < min_gap_ms:
                raise ValueError(f"gap of {dur} ms is shorter than {min_gap_ms} ms")
            if start < 0 or start + dur > utterance_ms:
                raise ValueError(f"gap ({start}, {dur}) lies outside [0, {utterance_ms}] ms")
            if prev_end is not None and start < prev_end:
                raise ValueError("gaps overlap")
            prev_end = start + dur

    def to_list(self):
        return [[s, d] for s, d in self.gaps]

    @classmethod
    def from_list(cls, gaps):
        return cls([tuple(g) for g in gaps or []])


def _split_total(rng, total, count):
    spare = total - MIN_GAP_MS * count
    cuts = np.sort(rng.integers(0, spare, size=count - 1, endpoint=True))
    edges = np.concatenate([[0], cuts, [spare]])
    return [int(d) + MIN_GAP_MS for d in np.diff(edges)]


def _place(rng, durations, utterance_ms):
    for _ in range(_MAX_ATTEMPTS):
        starts = [int(rng.integers(0, int(utterance_ms) - d, endpoint=True)) for d in durations]
        spans = sorted(zip(starts, durations))
        if all(s1 + d1 <= s2 for (s1, d1), (s2, _) in zip(spans, spans[1:])):
            return spans
    return None


def sample_gap_plan(utterance_ms: float, rng_seed) -> GapPlan:
    """Draw a random multi-gap plan.

    The total lost duration is drawn from N(900, 300) ms and redrawn until it
    falls in ``[36, min(2400, 0.8 * utterance_ms)]``.  It is split over 1-8
    gaps (count drawn uniformly, redrawn if the gaps would be shorter than
    36 ms), and the gaps are placed uniformly at random without overlap.
    If placement keeps failing the plan falls back to fewer gaps.
    """
    if utterance_ms < 500:
        raise ValueError(f"utterance of {utterance_ms} ms is too short (need >= 500 ms)")
    rng = np.random.default_rng(rng_seed)
    upper = min(MAX_TOTAL_MS, MAX_LOST_FRACTION * utterance_ms)

    while True:
        total = int(round(rng.normal(TOTAL_MEAN_MS, TOTAL_STD_MS)))
        if MIN_GAP_MS <= total <= upper:
            break
    while True:
        count = int(rng.integers(1, MAX_GAPS, endpoint=True))
        if total >= MIN_GAP_MS * count:
            break

    while count >= 1:
        spans = _place(rng, _split_total(rng, total, count), utterance_ms)
        if spans is not None:
            return GapPlan(spans)
        count -= 1
    raise RuntimeError("could not place gaps")  # unreachable: one gap always fits


def fixed_gap_plan(utterance_ms: float, gap_ms: int, rng_seed) -> GapPlan:
    """A single gap of ``gap_ms`` placed uniformly inside the utterance."""
    if gap_ms <= 0:
        raise ValueError("gap_ms must be positive")
    if gap_ms >= utterance_ms:
        raise ValueError(f"gap of {gap_ms} ms does not fit in a {utterance_ms} ms utterance")
    rng = np.random.default_rng(rng_seed)
    start = int(rng.integers(0, int(utterance_ms) - gap_ms, endpoint=True))
    return GapPlan([(start, int(gap_ms))])


def plan_to_mask(plan: GapPlan, frames: int, bins: int, hop_ms: float = HOP_MS) -> np.ndarray:
    """Frame ``l`` is lost iff its centre ``(l + 0.5) * hop_ms`` lies in a gap."""
    span = frames * hop_ms
    for start, dur in plan.gaps:
        if start < 0 or start + dur > span + 1e-9:
            raise ValueError(f"gap ({start}, {dur}) exceeds {span} ms of frames")
    centers = (np.arange(frames) + 0.5) * hop_ms
    lost = np.zeros(frames, dtype=bool)
    for start, dur in plan.gaps:
        lost |= (centers >= start) & (centers < start + dur)
    return np.repeat(lost[:, None], bins, axis=1).astype(np.uint8)


def apply_mask(s: Spectrogram, m) -> Spectrogram:
    m = np.asarray(m)
    if m.shape != s.values.shape:
        raise ValueError(f"mask shape {m.shape} != spectrogram shape {s.values.shape}")
    return Spectrogram(np.where(m.astype(bool), 0.0, s.values), s.scale)
