"""
From raw light intensity to standardized epochs
===============================================

A synthetic two-wavelength recording walks through the whole chain:
optical density, band-pass, Beer-Lambert inversion, upsampling,
epoching and per-channel standardization.
"""

import numpy as np

from actfn.data import (
    RecordingMeta,
    bandpass,
    epoch,
    intensity_to_od,
    mbll,
    resample,
    standardize,
    synth_intensity_recording,
)

meta = RecordingMeta()  # 7.8125 Hz acquisition, 28 channels, 15 s epochs at 10 Hz
rng = np.random.default_rng(0)

# One stimulus every 20 s; every other one is a "deviant" with a larger response
onsets = np.arange(30.0, 1170.0, 20.0)
labels = np.arange(len(onsets)) % 2
raw = synth_intensity_recording(1200.0, onsets, 1.0 + 0.8 * labels, rng, meta,
                                baseline=2.0, drift_sigma=1e-3)
print("raw intensity       ", raw.shape)   # (wavelength, pair, sample)

od = intensity_to_od(raw.reshape(28, -1)).reshape(raw.shape)
od = bandpass(od, rate_hz=meta.sampling_rate_hz)
conc = mbll(od)
print("HbO2 + HbR          ", conc.shape)  # first 14 rows HbO2, last 14 HbR

conc = resample(conc, meta.sampling_rate_hz, meta.target_rate_hz)
trials = epoch(conc, onsets, labels, meta)
print("epochs              ", trials.shape)

# The deviant response should still be larger after all that
peak = trials.data[:, :14, 40:80].mean(axis=(1, 2))
print("mean HbO2 peak  std / dev: %.2e / %.2e" % (peak[labels == 0].mean(), peak[labels == 1].mean()))

z = standardize(trials)
print("after z-scoring, worst channel mean %.1e, worst |std-1| %.1e"
      % (np.abs(z.data.mean(axis=(0, 2))).max(), np.abs(z.data.std(axis=(0, 2)) - 1).max()))
