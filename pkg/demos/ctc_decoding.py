"""
CTC loss, gradients and prefix beam search
==========================================

The phone head of the multi-task model is trained with connectionist
temporal classification.  The blank symbol is always the last class.
"""

import numpy as np
from scipy.special import softmax

from avinpaint import ctc

rng = np.random.default_rng(0)

# Two frames, one label, uniform posteriors over {label, blank}:
# three of the four paths collapse to the label.
p = np.full((2, 2), 0.5)
print("loss:", ctc.ctc_loss(p, [0]), "=", -np.log(0.75))

# The gradient with respect to pre-softmax logits is softmax minus the
# label occupancy, so every row sums to zero.
logits = rng.normal(size=(12, 5))
loss, grad = ctc.ctc_loss_and_grad(logits, [0, 3, 3, 1])
print("loss %.4f, row sums of gradient %.1e" % (loss, np.abs(grad.sum(axis=1)).max()))

# A few plain gradient steps on the logits drive the loss down.
for step in range(200):
    loss, grad = ctc.ctc_loss_and_grad(logits, [0, 3, 3, 1])
    logits -= 0.5 * grad
print("after 200 steps: loss %.4f" % loss)

# Decoding: greedy best path and prefix beam search (width 20 by default).
posteriors = softmax(logits, axis=1)
print("greedy:", ctc.greedy_decode(posteriors))
print("beam:  ", ctc.beam_search_decode(posteriors))

# Repeated labels need a blank between them; collapse shows why.
print("collapse [0,0,4,0,3,3] ->", ctc.collapse([0, 0, 4, 0, 3, 3], blank=4))
