"""Deterministic synthetic audio-visual utterances.

Each of the 12 synthetic phones is a harmonic tone stack with its own
fundamental and a formant-like envelope whose peak sits at a distinct
frequency.  The face track is 68 landmarks at 25 fps; the 20 mouth points
take a phone-specific configuration, and while a phone is held they also
circle around it inside a phone-specific plane.  The circling keeps the
frame-to-frame motion non-zero and phone-dependent, which is what the
motion-vector features see.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dsp
from .corruption import GapPlan, sample_gap_plan
from .ctc import write_phone_dict
from .data import Record, write_manifest
from .features import N_LANDMARKS, VIDEO_FPS, write_landmarks

PHONES = ("aa", "ae", "ah", "eh", "ih", "iy", "ow", "uh", "uw", "er", "ay", "oy")
N_PHONES = len(PHONES)
CLIP_S = 3.0
CLIP_SAMPLES = int(CLIP_S * dsp.SAMPLE_RATE)
MOUTH = slice(48, 68)
PHONE_MS = (150.0, 400.0)
NOISE_DB = -30.0
SPEECH_RMS = 0.1
CROSSFADE_S = 0.015
TRANSITION_S = 0.03
CIRCLE_RADIUS = 0.004
CIRCLE_HZ = 3.0
SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class PhoneTable:
    f0: np.ndarray            # (P,) Hz
    formant: np.ndarray       # (P, 2) Hz
    mouth: np.ndarray         # (P, 20, 2) configuration offsets
    plane: np.ndarray         # (P, 2, 40) orthonormal circling directions


def _build_table() -> PhoneTable:
    rng = np.random.default_rng(20200504)
    p = np.arange(N_PHONES)
    f0 = 110.0 + 8.0 * p
    f1 = 400.0 + 250.0 * p
    f2 = f1 + 900.0 + 150.0 * ((p * 5) % N_PHONES)
    mouth = rng.normal(scale=0.02, size=(N_PHONES, 20, 2))
    planes = np.empty((N_PHONES, 2, 40))
    for k in range(N_PHONES):
        q, _ = np.linalg.qr(rng.normal(size=(40, 2)))
        planes[k] = q.T
    return PhoneTable(f0, np.stack([f1, f2], axis=1), mouth, planes)


TABLE = _build_table()


def base_face() -> np.ndarray:
    """Neutral 68-point face in normalized image coordinates."""
    pts = np.zeros((N_LANDMARKS, 2))
    a = np.linspace(-0.9 * np.pi / 2, 0.9 * np.pi / 2, 17)
    pts[0:17] = np.c_[0.5 + 0.3 * np.sin(a), 0.45 + 0.35 * np.cos(a)]          # jaw
    pts[17:22] = np.c_[np.linspace(0.28, 0.45, 5), 0.30 - 0.02 * np.sin(np.linspace(0, np.pi, 5))]
    pts[22:27] = np.c_[np.linspace(0.55, 0.72, 5), 0.30 - 0.02 * np.sin(np.linspace(0, np.pi, 5))]
    pts[27:31] = np.c_[np.full(4, 0.5), np.linspace(0.36, 0.52, 4)]             # nose bridge
    pts[31:36] = np.c_[np.linspace(0.44, 0.56, 5), np.full(5, 0.56)]
    for start, cx in ((36, 0.37), (42, 0.63)):                                 # eyes
        t = np.linspace(0, 2 * np.pi, 6, endpoint=False)
        pts[start:start + 6] = np.c_[cx + 0.05 * np.cos(t), 0.38 + 0.02 * np.sin(t)]
    t = np.linspace(0, 2 * np.pi, 12, endpoint=False)
    pts[48:60] = np.c_[0.5 + 0.10 * np.cos(t), 0.70 + 0.04 * np.sin(t)]          # outer lip
    t = np.linspace(0, 2 * np.pi, 8, endpoint=False)
    pts[60:68] = np.c_[0.5 + 0.06 * np.cos(t), 0.70 + 0.015 * np.sin(t)]         # inner lip
    return pts


BASE_FACE = base_face()


def mouth_template(phone: int | None) -> np.ndarray:
    """Static mouth configuration (20 x 2); ``None`` is the closed rest pose."""
    rest = BASE_FACE[MOUTH]
    return rest.copy() if phone is None else rest + TABLE.mouth[phone]


def decode_mouth(mouth) -> int:
    """Nearest-template lookup of a 20-point mouth configuration."""
    d = [np.linalg.norm(np.asarray(mouth) - mouth_template(p)) for p in range(N_PHONES)]
    return int(np.argmin(d))


def phone_tone(phone: int, n: int, rng) -> np.ndarray:
    t = np.arange(n) / dsp.SAMPLE_RATE
    f0 = TABLE.f0[phone]
    f1, f2 = TABLE.formant[phone]
    k = np.arange(1, int(7800 // f0) + 1)
    freqs = k * f0
    amps = (np.exp(-0.5 * ((freqs - f1) / 120.0) ** 2)
            + 0.35 * np.exp(-0.5 * ((freqs - f2) / 160.0) ** 2) + 0.01)
    phases = rng.uniform(0, 2 * np.pi, size=k.size)
    x = (amps[:, None] * np.sin(2 * np.pi * freqs[:, None] * t[None, :] + phases[:, None])).sum(0)
    return x / np.sqrt(np.mean(x ** 2))


@dataclass
class Utterance:
    id: str
    waveform: np.ndarray
    phones: list
    landmarks: np.ndarray            # (75, 68, 2) at 25 fps
    segments: list                   # (phone, start_s, end_s)
    gaps: GapPlan


def _layout(phone_count, rng):
    lead = rng.uniform(0.1, 0.3)
    avail = CLIP_S - lead - 0.1
    hi = min(PHONE_MS[1] / 1000.0, avail / phone_count)
    durs = rng.uniform(PHONE_MS[0] / 1000.0, hi, size=phone_count)
    phones = []
    for _ in range(phone_count):
        choices = [p for p in range(N_PHONES) if not phones or p != phones[-1]]
        phones.append(int(rng.choice(choices)))
    edges = lead + np.concatenate([[0.0], np.cumsum(durs)])
    return phones, [(p, float(a), float(b)) for p, a, b in zip(phones, edges[:-1], edges[1:])]


def _render_audio(segments, rng):
    n = CLIP_SAMPLES
    t = np.arange(n) / dsp.SAMPLE_RATE
    x = np.zeros(n)
    for phone, a, b in segments:
        env = np.clip(np.minimum(t - a + CROSSFADE_S / 2, b - t + CROSSFADE_S / 2) / CROSSFADE_S, 0.0, 1.0)
        span = np.nonzero(env)[0]
        tone = phone_tone(phone, span.size, rng)
        x[span] += env[span] * tone
    x *= SPEECH_RMS
    x += rng.normal(scale=SPEECH_RMS * 10 ** (NOISE_DB / 20), size=n)
    return x


def _mouth_at(time_s, segments):
    def pose(phone, a, tt):
        if phone is None:
            return mouth_template(None)
        ang = 2 * np.pi * CIRCLE_HZ * (tt - a)
        circle = CIRCLE_RADIUS * (np.cos(ang) * TABLE.plane[phone, 0] + np.sin(ang) * TABLE.plane[phone, 1])
        return mouth_template(phone) + circle.reshape(20, 2)

    # piecewise: rest, phones, rest; linear blends across each boundary
    spans = [(None, -np.inf, segments[0][1])] + list(segments) + [(None, segments[-1][2], np.inf)]
    for idx, (phone, a, b) in enumerate(spans):
        if a <= time_s < b:
            cur = pose(phone, a, time_s)
            if idx > 0 and time_s < a + TRANSITION_S:
                prev = spans[idx - 1]
                w = 0.5 + 0.5 * (time_s - a) / TRANSITION_S
                return w * cur + (1 - w) * pose(prev[0], prev[1], time_s)
            if idx + 1 < len(spans) and time_s > b - TRANSITION_S:
                nxt = spans[idx + 1]
                w = 0.5 + 0.5 * (b - time_s) / TRANSITION_S
                return w * cur + (1 - w) * pose(nxt[0], nxt[1], time_s)
            return cur
    raise AssertionError("time outside all spans")


def _render_face(segments):
    n_frames = int(round(CLIP_S * VIDEO_FPS))
    out = np.repeat(BASE_FACE[None], n_frames, axis=0)
    for f in range(n_frames):
        out[f, MOUTH] = _mouth_at((f + 0.5) / VIDEO_FPS, segments)
    return out


def synth_utterance(phone_count: int, rng_seed, uid: str = "utt", gaps: GapPlan | None = None) -> Utterance:
    if not 3 <= phone_count <= 12:
        raise ValueError("phone_count must be in [3, 12]")
    rng = np.random.default_rng(rng_seed)
    phones, segments = _layout(phone_count, rng)
    wav = _render_audio(segments, rng)
    face = _render_face(segments)
    return Utterance(uid, wav, phones, face, segments, gaps if gaps is not None else GapPlan())


def utterance_seed(dataset_seed: int, uid: str) -> list:
    return [int(dataset_seed), zlib.crc32(uid.encode())]


def synth_dataset(out_dir, n_train: int, n_val: int, n_test: int, rng_seed: int,
                  phone_range=(6, 12)) -> dict:
    """Write WAVs, landmark CSVs, ``phones.txt`` and one manifest per split.

    Returns ``{split: manifest_path}``.
    """
    counts = dict(zip(SPLITS, (n_train, n_val, n_test)))
    if min(counts.values()) < 1:
        raise ValueError("every split needs at least one utterance")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_phone_dict(out / "phones.txt", PHONES)
    utt_ms = 1000.0 * CLIP_S
    manifests = {}
    for split_idx, split in enumerate(SPLITS):
        records = []
        for i in range(counts[split]):
            uid = f"{split}_{i:04d}"
            seed = [int(rng_seed), split_idx, i]
            count = int(np.random.default_rng(seed + [1]).integers(phone_range[0], phone_range[1], endpoint=True))
            plan = sample_gap_plan(utt_ms, utterance_seed(rng_seed, uid))
            utt = synth_utterance(count, seed, uid, plan)
            wav_path = out / split / f"{uid}.wav"
            lm_path = out / split / f"{uid}.csv"
            dsp.write_wav(wav_path, utt.waveform)
            write_landmarks(lm_path, utt.landmarks)
            records.append(Record(uid, wav_path, utt.phones, lm_path, plan))
        manifests[split] = out / f"{split}.jsonl"
        write_manifest(manifests[split], records)
    return manifests
