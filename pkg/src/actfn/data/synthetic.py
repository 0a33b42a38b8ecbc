"""Synthetic hemodynamic trials standing in for the private oddball recordings."""
from __future__ import annotations

import numpy as np
from scipy.stats import gamma as gamma_dist

from .pipeline import DEFAULT_EXTINCTION, RecordingMeta, TrialSet, mbll_forward, od_to_intensity

PRESETS = {"paper": 1836, "small": 200}

# Double-gamma shapes with unit scale: response mode at 6 s, undershoot mode at 12 s.
PEAK_SHAPE = 7.0
UNDERSHOOT_SHAPE = 13.0
UNDERSHOOT_RATIO = 1.0 / 6.0
HBR_RATIO = 0.3
JITTER_SD = 0.2


def double_gamma_hrf(t) -> np.ndarray:
    """Canonical double-gamma response normalized to a peak of 1."""
    t = np.asarray(t, dtype=float)
    h = gamma_dist.pdf(t, PEAK_SHAPE) - UNDERSHOOT_RATIO * gamma_dist.pdf(t, UNDERSHOOT_SHAPE)
    fine = np.linspace(0, 30, 3001)
    peak = (gamma_dist.pdf(fine, PEAK_SHAPE) - UNDERSHOOT_RATIO * gamma_dist.pdf(fine, UNDERSHOOT_SHAPE)).max()
    return h / peak


def pink_noise(shape, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Cumulative-sum (low-frequency heavy) noise, each series centered and scaled to ``sigma``."""
    if sigma == 0:
        return np.zeros(shape)
    walk = np.cumsum(rng.standard_normal(shape), axis=-1)
    walk -= walk.mean(axis=-1, keepdims=True)
    sd = walk.std(axis=-1, keepdims=True)
    return sigma * walk / np.where(sd > 0, sd, 1.0)


def synth_generate(
    n_trials: int,
    class_effect: float = 0.8,
    noise_sigma: float = 0.5,
    rng: np.random.Generator | None = None,
    meta: RecordingMeta = RecordingMeta(),
    *,
    n_subjects: int = 9,
    n_runs: int = 6,
) -> TrialSet:
    """Balanced synthetic trials ``(n_trials, channels, timepoints)``.

    HbO2 channels (first half) carry the double-gamma response with amplitude
    1 for standard and ``1 + class_effect`` for deviant trials, times a jitter
    ~ N(1, 0.2^2) drawn per trial and channel pair.  The paired HbR channel
    carries the same response inverted and scaled by 0.3.  Each channel gets
    independent cumulative-sum noise scaled to ``noise_sigma``.
    """
    if n_trials <= 0 or n_trials % 2:
        raise ValueError("n_trials must be a positive even number")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be non-negative")
    if class_effect <= -1:
        raise ValueError("class_effect must exceed -1")
    if meta.channel_count % 2:
        raise ValueError("channel_count must be even (HbO2 + HbR pairs)")
    rng = np.random.default_rng(0) if rng is None else rng

    pairs = meta.channel_count // 2
    t = np.arange(meta.timepoints) / meta.target_rate_hz
    hrf = double_gamma_hrf(t)

    labels = np.repeat([0, 1], n_trials // 2)
    labels = labels[rng.permutation(n_trials)]
    amp = np.where(labels == 1, 1.0 + class_effect, 1.0)
    jitter = rng.normal(1.0, JITTER_SD, size=(n_trials, pairs))
    gain = amp[:, None] * jitter
    hbo = gain[:, :, None] * hrf
    hbr = -HBR_RATIO * hbo
    data = np.concatenate([hbo, hbr], axis=1)
    data += pink_noise(data.shape, noise_sigma, rng)

    idx = np.arange(n_trials)
    return TrialSet(data, labels, idx % n_subjects, (idx // n_subjects) % n_runs)


def synth_preset(preset: str, seed: int = 0, noise_sigma: float = 0.5, class_effect: float = 0.8) -> TrialSet:
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    return synth_generate(PRESETS[preset], class_effect, noise_sigma, np.random.default_rng(seed))


def synth_intensity_recording(
    duration_s: float,
    onsets_s,
    amplitudes,
    rng: np.random.Generator,
    meta: RecordingMeta = RecordingMeta(),
    *,
    baseline=1.0,
    conc_scale: float = 1e-6,
    drift_sigma: float = 0.0,
    extinction=DEFAULT_EXTINCTION,
    dpf=(6.0, 6.0),
    distance_cm: float = 3.0,
) -> np.ndarray:
    """Raw two-wavelength intensities ``(2, pairs, samples)`` at the acquisition rate.

    Concentration changes are summed double-gamma responses at each onset
    (HbO2 positive, HbR inverted) pushed through the forward Beer-Lambert
    model, optionally plus a slow random-walk drift in optical density.
    """
    fs = meta.sampling_rate_hz
    n = int(np.ceil(duration_s * fs))
    t = np.arange(n) / fs
    pairs = meta.channel_count // 2
    response = np.zeros(n)
    for onset, a in zip(np.asarray(onsets_s, float), np.asarray(amplitudes, float)):
        response += a * double_gamma_hrf(t - onset)
    conc = np.empty((2, pairs, n))
    conc[0] = conc_scale * response
    conc[1] = -HBR_RATIO * conc_scale * response
    od = mbll_forward(conc, extinction, dpf, distance_cm)
    if drift_sigma:
        od += drift_sigma * np.cumsum(rng.standard_normal(od.shape), axis=-1) / np.sqrt(n)
    base = np.broadcast_to(np.asarray(baseline, float), (2, pairs))
    return od_to_intensity(od, base)
