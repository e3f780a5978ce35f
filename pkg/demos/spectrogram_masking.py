"""
Spectrograms, gap plans and phase reconstruction
================================================

A walk through the signal side of the toolkit: analyse a synthetic utterance,
knock out a few time gaps, and put a waveform back together.
"""

import numpy as np

from avinpaint import dsp, synthdata
from avinpaint.corruption import apply_mask, plan_to_mask, sample_gap_plan

# A synthetic three-second utterance: harmonic "phones" plus a faint noise floor.
utt = synthdata.synth_utterance(8, rng_seed=0)
print("phones:", [synthdata.PHONES[p] for p in utt.phones])

# 512-point FFT, 24 ms window, 12 ms hop: 250 frames of 257 bins.
spec = dsp.stft(utt.waveform)
print("STFT shape:", spec.shape)
print("round-trip error:", np.max(np.abs(dsp.istft(spec, utt.waveform.size) - utt.waveform)))

# Model space is the normalized log magnitude.
log_mag = dsp.log_magnitude(spec)
stats = dsp.fit_norm_stats([log_mag])
Y = dsp.normalize(log_mag, stats)

# Gap plans are lists of (start_ms, duration_ms).  A frame is lost when its
# centre falls inside a gap, and a lost frame loses every frequency bin.
plan = sample_gap_plan(3000, rng_seed=1)
print("gaps (ms):", plan.gaps, "total", plan.total_ms)
M = plan_to_mask(plan, Y.frames, Y.bins)
X = apply_mask(Y, M)
print("lost frames:", int(M[:, 0].sum()), "of", M.shape[0])

# Without a model, the best we can do is hand Griffin-Lim the true magnitudes
# for the lost bins; the reliable bins keep their observed phase throughout.
observed = spec * (1 - M)
restored, residuals = dsp.reconstruct_phase(np.abs(spec), observed, M, iters=50, return_residuals=True)
print("Griffin-Lim residual, first and last:", residuals[0], residuals[-1])
out = dsp.istft(restored, utt.waveform.size)
print("spectral convergence of the result:", dsp.spectral_convergence(out, np.abs(spec)))

dsp.write_wav("restored_oracle_magnitude.wav", out)
