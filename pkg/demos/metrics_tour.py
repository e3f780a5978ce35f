"""
Evaluation metrics
==================

Masked L1 in model space, phone error rate, and STOI.
"""

import numpy as np

from avinpaint import metrics, synthdata

# Masked L1 only looks at the lost bins.
Y = np.zeros((4, 3))
Y_hat = np.full((4, 3), 9.0)
M = np.zeros((4, 3))
M[1:3] = 1
Y_hat[1:3] = 0.5
print("masked L1:", metrics.masked_l1(Y_hat, Y, M))

# PER is edit distance over reference length.
print("PER of [a, c] against [a, b, c]:", metrics.per(["a", "c"], ["a", "b", "c"]))

# STOI falls as additive noise grows.
clean = synthdata.synth_utterance(8, rng_seed=3).waveform
noise = np.random.default_rng(0).normal(size=clean.size)
noise *= np.sqrt(np.mean(clean ** 2) / np.mean(noise ** 2))
for snr in (20, 10, 0, -10):
    print("SNR %+3d dB  STOI %.3f" % (snr, metrics.stoi(clean, clean + noise * 10 ** (-snr / 20))))
