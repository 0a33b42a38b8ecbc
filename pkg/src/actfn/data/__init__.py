from .fnirset import load_fnirset, save_fnirset
from .pipeline import (
    DEFAULT_EXTINCTION,
    RecordingMeta,
    TrialSet,
    balance,
    bandpass,
    epoch,
    intensity_to_od,
    mbll,
    mbll_forward,
    od_to_intensity,
    reject_artifacts,
    resample,
    standardize,
)
from .synthetic import PRESETS, double_gamma_hrf, synth_generate, synth_intensity_recording, synth_preset
