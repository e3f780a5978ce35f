"""Audio(-visual) speech inpainting model, objectives, training and inference.

The network sees the masked, normalized log-magnitude spectrogram X (lost
bins are exactly 0), optionally concatenated with visual motion features,
and emits O.  The restored spectrogram keeps every reliable bin of X and
takes O only where the mask is set::

    Y_hat = O * M + X
"""

from __future__ import annotations

import copy
import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import checkpoint, ctc, dsp
from .corruption import GapPlan, apply_mask, plan_to_mask
from .features import (VISUAL_DIM, VisualStats, concat_av, fit_visual_stats, motion_vectors,
                       read_landmarks, upsample_visual)
from .nn import Adam, NetDims, Network, clip_global_norm, softmax

log = logging.getLogger(__name__)

VARIANTS = ("A", "AV", "A_MTL", "AV_MTL")


def parse_variant(name: str) -> str:
    v = name.strip().upper().replace("-", "_")
    if v not in VARIANTS:
        raise ValueError(f"unknown variant {name!r}; expected one of a, av, a-mtl, av-mtl")
    return v


def uses_video(variant: str) -> bool:
    return variant.startswith("AV")


def uses_mtl(variant: str) -> bool:
    return variant.endswith("MTL")


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    variant: str = "AV"
    batch_size: int = 8
    lr: float = 0.001
    lam: float = 0.001
    patience: int = 5
    max_epochs: int = 100
    seed: int = 0
    hidden: int = 250
    layers: int = 3
    clip_norm: float = 5.0
    n_phones: int = 12

    def __post_init__(self):
        self.variant = parse_variant(self.variant)
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_epochs < 1 or self.patience < 1:
            raise ValueError("max_epochs and patience must be >= 1")


@dataclass
class Example:
    """One utterance in model space."""

    id: str
    Y: np.ndarray                    # clean normalized log-magnitude (T, K)
    M: np.ndarray                    # binary mask (T, K)
    X: np.ndarray                    # Y with lost bins zeroed
    V: np.ndarray | None = None      # standardized visual features (T, 136)
    phones: list = field(default_factory=list)
    gaps: GapPlan = field(default_factory=GapPlan)

    @property
    def frames(self) -> int:
        return self.Y.shape[0]


def clean_log_spectrogram(wav) -> dsp.Spectrogram:
    return dsp.log_magnitude(dsp.stft(wav))


def raw_visual(landmarks, frames: int) -> np.ndarray:
    return upsample_visual(motion_vectors(landmarks), frames)


def make_example(uid, wav, plan, norm: dsp.NormStats, landmarks=None,
                 vstats: VisualStats | None = None, phones=()) -> Example:
    Y = dsp.normalize(clean_log_spectrogram(wav), norm)
    M = plan_to_mask(plan, Y.frames, Y.bins)
    X = apply_mask(Y, M)
    V = None
    if landmarks is not None:
        V = raw_visual(landmarks, Y.frames)
        if vstats is not None:
            V = vstats.apply(V)
    return Example(uid, Y.values, M, X.values, V, list(phones), plan)


def mse_loss(Y_hat, Y) -> float:
    Y_hat, Y = np.asarray(Y_hat), np.asarray(Y)
    if Y_hat.shape != Y.shape:
        raise ValueError(f"shape mismatch {Y_hat.shape} vs {Y.shape}")
    return float(np.mean((Y_hat - Y) ** 2))


def mtl_loss(Y_hat, Y, phone_logits, phones, lam: float) -> float:
    """J_MSE + lam * J_CTC, the CTC term on softmaxed logits."""
    return mse_loss(Y_hat, Y) + lam * ctc.ctc_loss(softmax(phone_logits, axis=-1), phones)


class InpaintModel:
    """Network plus the feature statistics it was trained with."""

    def __init__(self, variant: str, norm: dsp.NormStats, vstats: VisualStats | None = None,
                 hidden: int = 250, layers: int = 3, n_phones: int = 12, seed: int = 0,
                 params: dict | None = None):
        self.variant = parse_variant(variant)
        if uses_video(self.variant) and vstats is None:
            raise ValueError("audio-visual model needs visual feature statistics")
        self.norm = norm
        self.vstats = vstats if uses_video(self.variant) else None
        heads = {"inpaint": dsp.N_BINS}
        if uses_mtl(self.variant):
            heads["phone"] = n_phones + 1
        input_dim = dsp.N_BINS + (VISUAL_DIM if uses_video(self.variant) else 0)
        self.net = Network(NetDims(input_dim, hidden, layers, heads), params=params, seed=seed)

    @property
    def params(self):
        return self.net.params

    def _inputs(self, X, V):
        if uses_video(self.variant):
            if V is None:
                raise ValueError(f"{self.variant} model requires visual features")
            return concat_av(X, V)
        return np.asarray(X)

    def forward_inpaint(self, X, M, V=None):
        """Returns ``(Y_hat, O, phone_logits_or_None)``."""
        X = np.asarray(X, dtype=np.float64)
        M = np.asarray(M)
        if X.shape != M.shape:
            raise ValueError(f"X shape {X.shape} != mask shape {M.shape}")
        outs, _ = self.net.forward(self._inputs(X, V))
        O = outs["inpaint"]
        return compose(O, M, X), O, outs.get("phone")

    def to_tensors(self) -> dict:
        t = dict(self.net.params)
        t["norm.mean"] = np.array(self.norm.mean)
        t["norm.std"] = np.array(self.norm.std)
        if self.vstats is not None:
            t["visual.mean"] = self.vstats.mean
            t["visual.std"] = self.vstats.std
        return t

    def save(self, path) -> None:
        checkpoint.save_tensors(path, self.to_tensors())

    @classmethod
    def from_tensors(cls, t: dict) -> "InpaintModel":
        if "inpaint.W" not in t:
            raise ValueError("checkpoint has no inpainting head")
        layers = len({k.split(".")[0] for k in t if k.startswith("lstm")})
        hidden = t["lstm0.fw.U"].shape[1]
        av = t["lstm0.fw.W"].shape[1] == dsp.N_BINS + VISUAL_DIM
        mtl = "phone.W" in t
        variant = ("AV" if av else "A") + ("_MTL" if mtl else "")
        n_phones = t["phone.W"].shape[0] - 1 if mtl else 12
        norm = dsp.NormStats(float(t["norm.mean"]), float(t["norm.std"]))
        vstats = VisualStats(t["visual.mean"], t["visual.std"]) if av else None
        params = {k: v for k, v in t.items() if k.startswith(("lstm", "inpaint", "phone"))}
        return cls(variant, norm, vstats, hidden, layers, n_phones, params=params)

    @classmethod
    def load(cls, path) -> "InpaintModel":
        return cls.from_tensors(checkpoint.load_tensors(path))


def compose(O, M, X):
    """``O * M + X`` with reliable bins copied from ``X`` untouched."""
    lost = np.asarray(M).astype(bool)
    with np.errstate(invalid="ignore", over="ignore"):
        return np.where(lost, O * M + X, X)


def _groups(batch):
    by_len = {}
    for ex in batch:
        by_len.setdefault(ex.frames, []).append(ex)
    return [by_len[k] for k in sorted(by_len)]


def batch_loss_and_grads(model: InpaintModel, batch, lam: float = 0.0):
    """Mean objective over ``batch`` and its parameter gradients.

    Equal-length utterances are stacked and run together; different lengths
    run as separate groups, so no padding ever reaches the recurrence.
    Returns ``(loss, mean_mse, mean_ctc, grads)``.
    """
    n = len(batch)
    grads = {k: np.zeros_like(v) for k, v in model.params.items()}
    tot_mse = tot_ctc = 0.0
    mtl = uses_mtl(model.variant)
    for group in _groups(batch):
        X = np.stack([ex.X for ex in group])
        M = np.stack([ex.M for ex in group])
        Y = np.stack([ex.Y for ex in group])
        V = np.stack([ex.V for ex in group]) if uses_video(model.variant) else None
        outs, cache = model.net.forward(model._inputs(X, V))
        Y_hat = compose(outs["inpaint"], M, X)
        diff = Y_hat - Y
        per_item = diff.reshape(len(group), -1)
        tot_mse += float(np.sum(np.mean(per_item ** 2, axis=1)))
        upstream = {"inpaint": (2.0 / (n * diff[0].size)) * diff * M}
        if mtl:
            dlog = np.zeros_like(outs["phone"])
            for j, ex in enumerate(group):
                loss_j, g_j = ctc.ctc_loss_and_grad(outs["phone"][j], ex.phones)
                tot_ctc += loss_j
                dlog[j] = (lam / n) * g_j
            upstream["phone"] = dlog
        g = model.net.backward(cache, upstream)
        for k in grads:
            grads[k] += g[k]
    mean_mse, mean_ctc = tot_mse / n, tot_ctc / n
    return mean_mse + lam * mean_ctc, mean_mse, mean_ctc, grads


def evaluate_losses(model: InpaintModel, examples, batch_size: int = 8):
    """Mean J_MSE (and mean J_CTC for MTL models) without gradients."""
    tot_mse = tot_ctc = 0.0
    for start in range(0, len(examples), batch_size):
        for group in _groups(examples[start:start + batch_size]):
            X = np.stack([ex.X for ex in group])
            M = np.stack([ex.M for ex in group])
            Y = np.stack([ex.Y for ex in group])
            V = np.stack([ex.V for ex in group]) if uses_video(model.variant) else None
            outs, _ = model.net.forward(model._inputs(X, V))
            Y_hat = compose(outs["inpaint"], M, X)
            tot_mse += float(np.sum(np.mean((Y_hat - Y).reshape(len(group), -1) ** 2, axis=1)))
            if uses_mtl(model.variant):
                for j, ex in enumerate(group):
                    tot_ctc += ctc.ctc_loss_and_grad(outs["phone"][j], ex.phones)[0]
    n = len(examples)
    return tot_mse / n, (tot_ctc / n if uses_mtl(model.variant) else float("nan"))


class EarlyStopping:
    """Stop once the monitored loss has not decreased for ``patience`` epochs."""

    def __init__(self, patience: int = 5):
        self.patience = patience
        self.best = math.inf
        self.best_epoch = 0
        self.epoch = 0
        self.stale = 0

    def update(self, value: float) -> bool:
        """Record one epoch; returns True if it is a new best."""
        self.epoch += 1
        if value < self.best:
            self.best, self.best_epoch, self.stale = value, self.epoch, 0
            return True
        self.stale += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.stale >= self.patience


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_mse: float
    val_ctc: float


def train(train_set, val_set, cfg: TrainConfig, norm: dsp.NormStats,
          vstats: VisualStats | None = None, on_epoch=None):
    """Mini-batch Adam training with early stopping on validation J_MSE.

    Returns ``(best_model, history)``; ``history`` is a list of
    :class:`EpochLog`.
    """
    if not train_set or not val_set:
        raise ValueError("training and validation sets must be non-empty")
    model = InpaintModel(cfg.variant, norm, vstats, cfg.hidden, cfg.layers, cfg.n_phones, seed=cfg.seed)
    lam = cfg.lam if uses_mtl(cfg.variant) else 0.0
    opt = Adam(model.params, lr=cfg.lr)
    stopper = EarlyStopping(cfg.patience)
    best_params = copy.deepcopy(model.params)
    history = []
    for epoch in range(1, cfg.max_epochs + 1):
        order = np.random.default_rng([cfg.seed, epoch]).permutation(len(train_set))
        losses = []
        for start in range(0, len(order), cfg.batch_size):
            batch = [train_set[i] for i in order[start:start + cfg.batch_size]]
            loss, _, _, grads = batch_loss_and_grads(model, batch, lam)
            if not math.isfinite(loss):
                raise TrainingDiverged(f"non-finite training loss at epoch {epoch}, "
                                       f"batch starting {start}")
            opt.step(model.params, clip_global_norm(grads, cfg.clip_norm))
            losses.append(loss)
        val_mse, val_ctc = evaluate_losses(model, val_set, cfg.batch_size)
        if not math.isfinite(val_mse):
            raise TrainingDiverged(f"non-finite validation loss at epoch {epoch}")
        entry = EpochLog(epoch, float(np.mean(losses)), val_mse, val_ctc)
        history.append(entry)
        log.info("epoch %d train %.5f val_mse %.5f val_ctc %.4f", epoch, entry.train_loss, val_mse, val_ctc)
        if on_epoch is not None:
            on_epoch(entry)
        if stopper.update(val_mse):
            best_params = copy.deepcopy(model.params)
        if stopper.should_stop:
            break
    best = InpaintModel(cfg.variant, norm, vstats, cfg.hidden, cfg.layers, cfg.n_phones, params=best_params)
    return best, history


def write_history(path, history) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_mse", "val_ctc"])
        for h in history:
            w.writerow([h.epoch, f"{h.train_loss:.8g}", f"{h.val_mse:.8g}", f"{h.val_ctc:.8g}"])


def fit_feature_stats(records):
    """NormStats over clean training spectrograms, visual stats over their motion tracks."""
    specs, tracks = [], []
    for rec in records:
        spec = clean_log_spectrogram(dsp.read_wav(rec.wav))
        specs.append(spec)
        if rec.landmarks is not None:
            tracks.append(raw_visual(read_landmarks(rec.landmarks), spec.frames))
    norm = dsp.fit_norm_stats(specs)
    return norm, (fit_visual_stats(tracks) if tracks else None)


def load_examples(records, norm, vstats=None, with_video=True):
    out = []
    for rec in records:
        wav = dsp.read_wav(rec.wav)
        lm = read_landmarks(rec.landmarks) if with_video and rec.landmarks is not None else None
        out.append(make_example(rec.id, wav, rec.gaps, norm, lm, vstats, rec.phones))
    return out


def restore_spectrogram(model: InpaintModel, wav, plan: GapPlan, landmarks=None):
    """Model-space restoration: returns ``(Y_hat, M, observed_complex)``."""
    observed = dsp.stft(wav)
    norm_log = dsp.normalize(dsp.log_magnitude(observed), model.norm)
    M = plan_to_mask(plan, norm_log.frames, norm_log.bins)
    X = apply_mask(norm_log, M).values
    V = None
    if uses_video(model.variant):
        if landmarks is None:
            raise ValueError("audio-visual checkpoint needs a landmark track")
        V = model.vstats.apply(raw_visual(landmarks, norm_log.frames))
    Y_hat, _, _ = model.forward_inpaint(X, M, V)
    return Y_hat, M, observed


def waveform_from_restored(Y_hat, M, observed, norm: dsp.NormStats, n_samples: int,
                           gl_iters: int = 100) -> np.ndarray:
    log_mag = dsp.denormalize(dsp.Spectrogram(Y_hat, dsp.NORMALIZED), norm)
    mag = dsp.magnitude_from_log(log_mag.values)
    spec = dsp.reconstruct_phase(mag, observed, M, gl_iters)
    return dsp.istft(spec, n_samples)


def infer(model: InpaintModel, wav, plan: GapPlan, landmarks=None, gl_iters: int = 100,
          sample_rate: int = dsp.SAMPLE_RATE) -> np.ndarray:
    """Restore the lost regions of ``wav`` described by ``plan``."""
    if sample_rate != dsp.SAMPLE_RATE:
        raise ValueError(f"expected {dsp.SAMPLE_RATE} Hz audio, got {sample_rate} Hz")
    wav = np.asarray(wav, dtype=np.float64)
    Y_hat, M, observed = restore_spectrogram(model, wav, plan, landmarks)
    return waveform_from_restored(Y_hat, M, observed, model.norm, wav.size, gl_iters)
