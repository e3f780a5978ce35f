"""
Training a toy audio-visual inpainter
=====================================

Build a small synthetic corpus, train the audio-only and audio-visual
models for a few epochs, and compare them on one long gap.  The models
here are tiny so the whole script runs in a couple of minutes on a laptop.
"""

import tempfile
from pathlib import Path

import numpy as np

from avinpaint import data, dsp, inpaint, metrics, synthdata
from avinpaint.corruption import fixed_gap_plan

work = Path(tempfile.mkdtemp())
manifests = synthdata.synth_dataset(work, n_train=40, n_val=8, n_test=8, rng_seed=0)
train_recs = data.read_manifest(manifests["train"])
val_recs = data.read_manifest(manifests["val"])
test_recs = data.read_manifest(manifests["test"])

# Statistics come from the clean training audio and landmark motion only.
norm, vstats = inpaint.fit_feature_stats(train_recs)
train_set = inpaint.load_examples(train_recs, norm, vstats)
val_set = inpaint.load_examples(val_recs, norm, vstats)

models = {}
for variant in ("A", "AV"):
    cfg = inpaint.TrainConfig(variant=variant, hidden=24, layers=2, max_epochs=15, lr=0.003, seed=0)
    model, history = inpaint.train(train_set, val_set, cfg, norm, vstats)
    print(variant, "validation MSE per epoch:", [round(h.val_mse, 3) for h in history])
    models[variant] = model

# Score both on the same 800 ms gap per test utterance.
test_recs = [data.Record(r.id, r.wav, r.phones, r.landmarks, fixed_gap_plan(3000, 800, i))
             for i, r in enumerate(test_recs)]
test_set = inpaint.load_examples(test_recs, norm, vstats)
for variant, model in models.items():
    l1 = [metrics.masked_l1(model.forward_inpaint(e.X, e.M, e.V)[0], e.Y, e.M) for e in test_set]
    print(variant, "masked L1 on 800 ms gaps: %.3f" % np.mean(l1))

# Full inference: waveform in, waveform out, reliable audio untouched.
rec = test_recs[0]
wav = dsp.read_wav(rec.wav)
out = inpaint.infer(models["AV"], wav, rec.gaps, inpaint.read_landmarks(rec.landmarks))
dsp.write_wav(work / "restored.wav", out)
print("STOI of restored audio: %.3f" % metrics.stoi(wav, out))
print("outputs in", work)
