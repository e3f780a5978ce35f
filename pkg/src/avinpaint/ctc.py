"""Connectionist temporal classification: loss, gradient and decoding.

Posteriors are ``(T, L + 1)`` arrays whose last column is the blank.
Everything is computed in log space.
"""

from __future__ import annotations

import itertools
from pathlib import Path

import numpy as np
from scipy.special import log_softmax

NEG_INF = -np.inf


def _extend(labels, blank):
    ext = np.full(2 * len(labels) + 1, blank, dtype=np.int64)
    ext[1::2] = labels
    return ext


def _skip_allowed(ext, blank):
    """``skip[s]`` is True when state ``s`` may be entered from ``s - 2``."""
    skip = np.zeros(len(ext), dtype=bool)
    skip[2:] = (ext[2:] != blank) & (ext[2:] != ext[:-2])
    return skip


def min_frames(labels) -> int:
    labels = list(labels)
    repeats = sum(1 for a, b in zip(labels, labels[1:]) if a == b)
    return len(labels) + repeats


def _check_labels(labels, n_classes, T):
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    blank = n_classes - 1
    if np.any(labels < 0) or np.any(labels >= blank):
        raise ValueError(f"labels must lie in [0, {blank - 1}] (blank is {blank})")
    if T < min_frames(labels):
        raise ValueError(f"{T} frames cannot emit {len(labels)} labels "
                         f"(need {min_frames(labels)})")
    return labels, blank


def _forward(logp, labels, blank):
    T = logp.shape[0]
    ext = _extend(labels, blank)
    skip = _skip_allowed(ext, blank)
    S = len(ext)
    alpha = np.full((T, S), NEG_INF)
    alpha[0, 0] = logp[0, blank]
    if S > 1:
        alpha[0, 1] = logp[0, ext[1]]
    for t in range(1, T):
        prev = alpha[t - 1]
        acc = prev.copy()
        acc[1:] = np.logaddexp(acc[1:], prev[:-1])
        acc[2:] = np.where(skip[2:], np.logaddexp(acc[2:], prev[:-2]), acc[2:])
        alpha[t] = acc + logp[t, ext]
    end = alpha[-1, -1] if S == 1 else np.logaddexp(alpha[-1, -1], alpha[-1, -2])
    return alpha, end, ext, skip


def _backward(logp, ext, skip):
    # beta[t, s]: log prob of emitting the remaining suffix from t+1 on,
    # given state s at time t (emission at t excluded).
    T, S = logp.shape[0], len(ext)
    beta = np.full((T, S), NEG_INF)
    beta[-1, -1] = 0.0
    if S > 1:
        beta[-1, -2] = 0.0
    for t in range(T - 2, -1, -1):
        nxt = beta[t + 1] + logp[t + 1, ext]
        acc = nxt.copy()
        acc[:-1] = np.logaddexp(acc[:-1], nxt[1:])
        acc[:-2] = np.where(skip[2:], np.logaddexp(acc[:-2], nxt[2:]), acc[:-2])
        beta[t] = acc
    return beta


def ctc_loss(p, labels) -> float:
    """``-ln P(labels | p)`` for frame posteriors ``p`` of shape ``(T, L + 1)``."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 2:
        raise ValueError("posteriors must be (T, L + 1)")
    if not np.allclose(p.sum(axis=1), 1.0, atol=1e-6) or np.any(p < 0):
        raise ValueError("posterior rows must be probability distributions")
    labels, blank = _check_labels(labels, p.shape[1], p.shape[0])
    with np.errstate(divide="ignore"):
        logp = np.log(p)
    _, end, _, _ = _forward(logp, labels, blank)
    return float(-end)


def ctc_loss_and_grad(logits, labels):
    """Loss and its gradient with respect to the pre-softmax ``logits``."""
    logits = np.asarray(logits, dtype=np.float64)
    labels, blank = _check_labels(labels, logits.shape[1], logits.shape[0])
    logp = log_softmax(logits, axis=1)
    alpha, end, ext, skip = _forward(logp, labels, blank)
    if not np.isfinite(end):
        raise ValueError("label sequence has zero probability under these logits")
    beta = _backward(logp, ext, skip)
    gamma = np.exp(alpha + beta - end)
    occupancy = np.zeros_like(logits)
    for s, k in enumerate(ext):
        occupancy[:, k] += gamma[:, s]
    return float(-end), np.exp(logp) - occupancy


def ctc_grad(logits, labels) -> np.ndarray:
    return ctc_loss_and_grad(logits, labels)[1]


def collapse(path, blank: int):
    """Merge repeats, then drop blanks."""
    return [int(k) for k, _ in itertools.groupby(path) if k != blank]


def beam_search_decode(p, beam_width: int = 20):
    """Prefix beam search over ``(T, L + 1)`` posteriors; returns the best label list."""
    p = np.asarray(p, dtype=np.float64)
    T, C = p.shape
    blank = C - 1
    with np.errstate(divide="ignore"):
        logp = np.log(p)
    # prefix -> (log P ending in blank, log P ending in non-blank)
    beams = {(): (0.0, NEG_INF)}
    for t in range(T):
        row = logp[t]
        nxt = {}

        def add(prefix, pb=NEG_INF, pnb=NEG_INF):
            ob, onb = nxt.get(prefix, (NEG_INF, NEG_INF))
            nxt[prefix] = (np.logaddexp(ob, pb), np.logaddexp(onb, pnb))

        for prefix, (pb, pnb) in beams.items():
            total = np.logaddexp(pb, pnb)
            add(prefix, pb=total + row[blank])
            last = prefix[-1] if prefix else None
            if last is not None:
                add(prefix, pnb=pnb + row[last])
            for c in range(blank):
                if row[c] == NEG_INF:
                    continue
                if c == last:
                    add(prefix + (c,), pnb=pb + row[c])
                else:
                    add(prefix + (c,), pnb=total + row[c])
        ranked = sorted(nxt.items(), key=lambda kv: (-np.logaddexp(*kv[1]), kv[0]))
        beams = dict(ranked[:beam_width])
    return list(next(iter(beams)))


def greedy_decode(p):
    p = np.asarray(p)
    return collapse(np.argmax(p, axis=1), p.shape[1] - 1)


def read_phone_dict(path):
    """One phone symbol per line; the index is the line number, blank is implicit."""
    return [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]


def write_phone_dict(path, symbols) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text("".join(f"{s}\n" for s in symbols))
