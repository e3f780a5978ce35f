"""Evaluation: masked L1, phone error rate, STOI, and the reference recognizer."""

from __future__ import annotations

import copy
import logging
import math

import numpy as np
from scipy.signal import firwin, resample_poly

from . import checkpoint, ctc, dsp
from .inpaint import EarlyStopping, clean_log_spectrogram
from .nn import Adam, NetDims, Network, clip_global_norm, softmax

log = logging.getLogger(__name__)


def masked_l1(Y_hat, Y, M) -> float:
    """Mean absolute error over the lost bins only."""
    Y_hat, Y, M = np.asarray(Y_hat), np.asarray(Y), np.asarray(M).astype(bool)
    if not (Y_hat.shape == Y.shape == M.shape):
        raise ValueError("masked_l1: shape mismatch")
    if not M.any():
        raise ValueError("masked_l1: mask has no lost bins")
    return float(np.mean(np.abs(Y_hat[M] - Y[M])))


def edit_distance(a, b) -> int:
    a, b = list(a), list(b)
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i] + [0] * len(b)
        for j, y in enumerate(b, 1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y))
        prev = cur
    return prev[-1]


def per(hyp, ref) -> float:
    """Levenshtein distance (unit costs) divided by the reference length."""
    if len(ref) == 0:
        raise ValueError("PER needs a non-empty reference")
    return edit_distance(hyp, ref) / len(ref)


# --- STOI ---------------------------------------------------------------

STOI_FS = 10000
STOI_FRAME = 256
STOI_NFFT = 512
STOI_BANDS = 15
STOI_MIN_FREQ = 150
STOI_SEGMENT = 30
STOI_BETA = -15.0
STOI_DYN_RANGE = 40.0
_EPS = np.finfo(np.float64).eps


def third_octave_bands(fs=STOI_FS, nfft=STOI_NFFT, num_bands=STOI_BANDS, min_freq=STOI_MIN_FREQ):
    f = np.linspace(0, fs, nfft + 1)[: nfft // 2 + 1]
    k = np.arange(num_bands, dtype=np.float64)
    lo = min_freq * 2.0 ** ((2 * k - 1) / 6)
    hi = min_freq * 2.0 ** ((2 * k + 1) / 6)
    obm = np.zeros((num_bands, f.size))
    for i in range(num_bands):
        a = int(np.argmin((f - lo[i]) ** 2))
        b = int(np.argmin((f - hi[i]) ** 2))
        obm[i, a:b] = 1.0
    return obm


def _resample(x, fs):
    """Polyphase resampling to 10 kHz with a 60 dB Kaiser-windowed sinc, as in the reference STOI."""
    g = math.gcd(STOI_FS, fs)
    up, down = STOI_FS // g, fs // g
    cutoff = 1.0 / (2 * max(up, down))
    half = math.ceil((60.0 - 8.0) / (28.714 * cutoff / 10))
    taps = firwin(2 * half + 1, 2 * cutoff, window=("kaiser", 0.1102 * (60.0 - 8.7)))
    return resample_poly(x, up, down, window=taps / taps.sum())


def _frames(x, framelen, hop):
    w = np.hanning(framelen + 2)[1:-1]
    # the reference drops a final frame that would end exactly at the last sample
    starts = range(0, len(x) - framelen, hop)
    return np.array([w * x[i:i + framelen] for i in starts])


def _remove_silent_frames(x, y, dyn_range=STOI_DYN_RANGE, framelen=STOI_FRAME, hop=STOI_FRAME // 2):
    xf, yf = _frames(x, framelen, hop), _frames(y, framelen, hop)
    energy = 20 * np.log10(np.linalg.norm(xf, axis=1) + _EPS)
    keep = energy > energy.max() - dyn_range
    xf, yf = xf[keep], yf[keep]
    n = (len(xf) - 1) * hop + framelen if len(xf) else 0
    xs, ys = np.zeros(n), np.zeros(n)
    for i in range(len(xf)):
        xs[i * hop:i * hop + framelen] += xf[i]
        ys[i * hop:i * hop + framelen] += yf[i]
    return xs, ys


def stoi(clean, processed, fs: int = dsp.SAMPLE_RATE) -> float:
    """Short-time objective intelligibility of ``processed`` against ``clean``."""
    x = np.asarray(clean, dtype=np.float64)
    y = np.asarray(processed, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError("stoi: signals must have equal length")
    if not np.any(x):
        raise ValueError("stoi: clean signal is silent")
    if fs != STOI_FS:
        x, y = _resample(x, fs), _resample(y, fs)
    x, y = _remove_silent_frames(x, y)
    X = np.abs(np.fft.rfft(_frames(x, STOI_FRAME, STOI_FRAME // 2), n=STOI_NFFT, axis=1)) ** 2
    Y = np.abs(np.fft.rfft(_frames(y, STOI_FRAME, STOI_FRAME // 2), n=STOI_NFFT, axis=1)) ** 2
    if X.shape[0] < STOI_SEGMENT:
        raise ValueError("stoi: not enough non-silent speech (need >= 384 ms)")
    obm = third_octave_bands()
    x_tob = np.sqrt(X @ obm.T).T          # (bands, frames)
    y_tob = np.sqrt(Y @ obm.T).T
    n_seg = x_tob.shape[1] - STOI_SEGMENT + 1
    idx = np.arange(STOI_SEGMENT)[None, :] + np.arange(n_seg)[:, None]
    xs = x_tob[:, idx].transpose(1, 0, 2)  # (segments, bands, N)
    ys = y_tob[:, idx].transpose(1, 0, 2)
    scale = np.linalg.norm(xs, axis=2, keepdims=True) / (np.linalg.norm(ys, axis=2, keepdims=True) + _EPS)
    clip = 10 ** (-STOI_BETA / 20)
    yp = np.minimum(ys * scale, xs * (1 + clip))
    xs = xs - xs.mean(axis=2, keepdims=True)
    yp = yp - yp.mean(axis=2, keepdims=True)
    xs = xs / (np.linalg.norm(xs, axis=2, keepdims=True) + _EPS)
    yp = yp / (np.linalg.norm(yp, axis=2, keepdims=True) + _EPS)
    return float(np.sum(xs * yp) / (xs.shape[0] * xs.shape[1]))


# --- phone recognizer ---------------------------------------------------

class Recognizer:
    """BLSTM stack + linear + softmax phone recognizer over normalized log spectra."""

    def __init__(self, norm: dsp.NormStats, n_phones: int = 12, hidden: int = 250, layers: int = 2,
                 seed: int = 0, params: dict | None = None):
        self.norm = norm
        self.n_phones = n_phones
        self.net = Network(NetDims(dsp.N_BINS, hidden, layers, {"phone": n_phones + 1}),
                           params=params, seed=seed)

    def posteriors(self, features):
        outs, _ = self.net.forward(features)
        return softmax(outs["phone"], axis=-1)

    def decode_features(self, features, beam_width: int = 20):
        return ctc.beam_search_decode(self.posteriors(features), beam_width)

    def recognize(self, wav, beam_width: int = 20):
        feats = dsp.normalize(clean_log_spectrogram(wav), self.norm).values
        return self.decode_features(feats, beam_width)

    def save(self, path):
        t = dict(self.net.params)
        t["norm.mean"] = np.array(self.norm.mean)
        t["norm.std"] = np.array(self.norm.std)
        checkpoint.save_tensors(path, t)

    @classmethod
    def load(cls, path) -> "Recognizer":
        t = checkpoint.load_tensors(path)
        if "inpaint.W" in t or "phone.W" not in t:
            raise ValueError(f"{path} is not a recognizer checkpoint")
        layers = len({k.split(".")[0] for k in t if k.startswith("lstm")})
        params = {k: v for k, v in t.items() if k.startswith(("lstm", "phone"))}
        norm = dsp.NormStats(float(t["norm.mean"]), float(t["norm.std"]))
        return cls(norm, t["phone.W"].shape[0] - 1, t["lstm0.fw.U"].shape[1], layers, params=params)


def _ctc_batch(net, feats, labels, with_grads=True):
    n = len(feats)
    grads = {k: np.zeros_like(v) for k, v in net.params.items()}
    total = 0.0
    by_len = {}
    for f, y in zip(feats, labels):
        by_len.setdefault(f.shape[0], []).append((f, y))
    for T in sorted(by_len):
        group = by_len[T]
        outs, cache = net.forward(np.stack([f for f, _ in group]))
        dlog = np.zeros_like(outs["phone"])
        for j, (_, y) in enumerate(group):
            loss, g = ctc.ctc_loss_and_grad(outs["phone"][j], y)
            total += loss
            dlog[j] = g / n
        if not with_grads:
            continue
        g = net.backward(cache, {"phone": dlog})
        for k in grads:
            grads[k] += g[k]
    return total / n, grads


def train_recognizer(train_feats, train_labels, val_feats, val_labels, norm: dsp.NormStats,
                     n_phones: int = 12, hidden: int = 250, layers: int = 2, batch_size: int = 8,
                     lr: float = 0.001, max_epochs: int = 100, patience: int = 5, seed: int = 0,
                     clip_norm: float = 5.0):
    """CTC training on clean features with early stopping on validation CTC loss.

    ``*_feats`` are normalized log-magnitude arrays ``(T, 257)``.
    Returns ``(recognizer, history)`` with history rows ``(epoch, train, val)``.
    """
    rec = Recognizer(norm, n_phones, hidden, layers, seed=seed)
    opt = Adam(rec.net.params, lr=lr)
    stopper = EarlyStopping(patience)
    best = copy.deepcopy(rec.net.params)
    history = []
    for epoch in range(1, max_epochs + 1):
        order = np.random.default_rng([seed, epoch]).permutation(len(train_feats))
        losses = []
        for s in range(0, len(order), batch_size):
            idx = order[s:s + batch_size]
            loss, grads = _ctc_batch(rec.net, [train_feats[i] for i in idx], [train_labels[i] for i in idx])
            if not math.isfinite(loss):
                raise FloatingPointError(f"recognizer loss diverged at epoch {epoch}")
            opt.step(rec.net.params, clip_global_norm(grads, clip_norm))
            losses.append(loss)
        val = 0.0
        for s in range(0, len(val_feats), batch_size):
            chunk = list(range(s, min(s + batch_size, len(val_feats))))
            l, _ = _ctc_batch(rec.net, [val_feats[i] for i in chunk], [val_labels[i] for i in chunk],
                              with_grads=False)
            val += l * len(chunk)
        val /= len(val_feats)
        history.append((epoch, float(np.mean(losses)), val))
        log.info("recognizer epoch %d train %.4f val %.4f", epoch, history[-1][1], val)
        if stopper.update(val):
            best = copy.deepcopy(rec.net.params)
        if stopper.should_stop:
            break
    return Recognizer(norm, n_phones, hidden, layers, params=best), history
