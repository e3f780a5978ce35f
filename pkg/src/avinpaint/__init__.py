"""Audio-visual speech inpainting with BLSTMs, CTC multi-task learning and
Griffin-Lim phase recovery, in plain numpy."""

from .corruption import GapPlan, apply_mask, fixed_gap_plan, plan_to_mask, sample_gap_plan
from .dsp import NormStats, Spectrogram, istft, log_magnitude, reconstruct_phase, stft
from .inpaint import InpaintModel, TrainConfig, infer, train
from .metrics import masked_l1, per, stoi

__version__ = "0.1.0"

__all__ = [
    "GapPlan", "InpaintModel", "NormStats", "Spectrogram", "TrainConfig", "apply_mask",
    "fixed_gap_plan", "infer", "istft", "log_magnitude", "masked_l1", "per", "plan_to_mask",
    "reconstruct_phase", "sample_gap_plan", "stft", "stoi", "train",
]
