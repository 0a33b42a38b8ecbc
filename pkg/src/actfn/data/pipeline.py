"""Signal-processing steps from raw light intensity to standardized epochs."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps

__all__ = [
    "RecordingMeta",
    "TrialSet",
    "DEFAULT_EXTINCTION",
    "intensity_to_od",
    "od_to_intensity",
    "bandpass",
    "mbll",
    "mbll_forward",
    "resample",
    "epoch",
    "balance",
    "standardize",
    "reject_artifacts",
]


@dataclass(frozen=True)
class RecordingMeta:
    sampling_rate_hz: float = 7.8125
    channel_count: int = 28
    epoch_seconds: float = 15.0
    target_rate_hz: float = 10.0

    def __post_init__(self):
        n = self.epoch_seconds * self.target_rate_hz
        if abs(n - round(n)) > 1e-9:
            raise ValueError("epoch_seconds * target_rate_hz must be a whole number of samples")

    @property
    def timepoints(self) -> int:
        return int(round(self.epoch_seconds * self.target_rate_hz))


@dataclass
class TrialSet:
    """Epoched trials ``data[trial, channel, time]`` with labels (deviant=1, standard=0)."""

    data: np.ndarray
    labels: np.ndarray
    subjects: np.ndarray = field(default=None)
    runs: np.ndarray = field(default=None)

    def __post_init__(self):
        self.data = np.asarray(self.data)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        n = len(self.labels)
        if self.data.ndim != 3 or self.data.shape[0] != n:
            raise ValueError(f"data shape {self.data.shape} does not match {n} labels")
        self.subjects = np.zeros(n, np.int64) if self.subjects is None else np.asarray(self.subjects, np.int64)
        self.runs = np.zeros(n, np.int64) if self.runs is None else np.asarray(self.runs, np.int64)
        if self.subjects.shape != (n,) or self.runs.shape != (n,):
            raise ValueError("subjects/runs must have one entry per trial")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def subset(self, idx) -> "TrialSet":
        idx = np.asarray(idx)
        return TrialSet(self.data[idx], self.labels[idx], self.subjects[idx], self.runs[idx])

    def class_counts(self) -> dict:
        vals, counts = np.unique(self.labels, return_counts=True)
        return dict(zip(vals.tolist(), counts.tolist()))

    @staticmethod
    def concat(sets) -> "TrialSet":
        sets = list(sets)
        return TrialSet(
            np.concatenate([s.data for s in sets]),
            np.concatenate([s.labels for s in sets]),
            np.concatenate([s.subjects for s in sets]),
            np.concatenate([s.runs for s in sets]),
        )


def intensity_to_od(raw, baseline=None) -> np.ndarray:
    """Optical density ``-log10(I / I0)`` along the last (time) axis.

    ``baseline`` defaults to each channel's temporal mean.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if np.any(raw <= 0):
        raise ValueError("intensities must be strictly positive")
    if baseline is None:
        baseline = raw.mean(axis=-1)
    baseline = np.asarray(baseline, dtype=np.float64)
    if np.any(baseline <= 0):
        raise ValueError("baselines must be strictly positive")
    return -np.log10(raw / baseline[..., None])


def od_to_intensity(od, baseline) -> np.ndarray:
    """Inverse of :func:`intensity_to_od`."""
    return np.asarray(baseline, dtype=np.float64)[..., None] * 10.0 ** (-np.asarray(od, dtype=np.float64))


def bandpass(x, low_hz: float = 0.005, high_hz: float = 0.7, rate_hz: float = 10.0, order: int = 4) -> np.ndarray:
    """Zero-phase Butterworth band-pass along the last axis (forward-backward)."""
    nyq = rate_hz / 2.0
    if not 0 < low_hz < high_hz < nyq:
        raise ValueError(f"need 0 < low < high < rate/2, got {low_hz}, {high_hz}, {rate_hz}")
    sos = sps.butter(order, [low_hz, high_hz], btype="bandpass", fs=rate_hz, output="sos")
    return sps.sosfiltfilt(sos, np.asarray(x, dtype=np.float64), axis=-1)


# Molar extinction coefficients (cm^-1 / M, base-10), rows = wavelength
# (760 nm, 850 nm), columns = (HbO2, HbR).  Tabulated values after Prahl.
DEFAULT_EXTINCTION = np.array([[586.0, 1548.52], [1058.0, 691.32]])


def mbll_forward(conc, extinction=DEFAULT_EXTINCTION, dpf=(6.0, 6.0), distance_cm: float = 3.0) -> np.ndarray:
    """Concentration changes ``(2, P, T)`` [HbO2, HbR] -> delta OD ``(2, P, T)`` per wavelength."""
    A = np.asarray(extinction, float) * (np.asarray(dpf, float) * distance_cm)[:, None]
    return np.einsum("wc,cpt->wpt", A, np.asarray(conc, float))


def mbll(od_pair, extinction=DEFAULT_EXTINCTION, dpf=(6.0, 6.0), distance_cm: float = 3.0) -> np.ndarray:
    """Modified Beer-Lambert inversion.

    ``od_pair`` has shape ``(2, P, T)``: delta OD at two wavelengths for P
    source-detector pairs.  Returns ``(2P, T)`` concentration changes in molar
    units, all HbO2 channels first, then all HbR channels.
    """
    od = np.asarray(od_pair, dtype=np.float64)
    if od.ndim != 3 or od.shape[0] != 2:
        raise ValueError(f"od_pair must be (2, pairs, time), got {od.shape}")
    E = np.asarray(extinction, dtype=np.float64)
    if E.shape != (2, 2):
        raise ValueError("extinction matrix must be 2x2")
    A = E * (np.asarray(dpf, float) * distance_cm)[:, None]
    if abs(np.linalg.det(A)) < 1e-12 * max(1.0, np.abs(A).max() ** 2):
        raise np.linalg.LinAlgError("extinction matrix is singular")
    conc = np.einsum("cw,wpt->cpt", np.linalg.inv(A), od)
    return conc.reshape(2 * od.shape[1], od.shape[2])


def resample(x, from_hz: float, to_hz: float) -> np.ndarray:
    """Linear-interpolation resampling along the last axis.

    The target grid is ``k / to_hz`` for every k whose time does not pass the
    last input sample.
    """
    if from_hz <= 0 or to_hz <= 0:
        raise ValueError("rates must be positive")
    x = np.asarray(x, dtype=np.float64)
    n_in = x.shape[-1]
    if n_in == 0:
        raise ValueError("empty signal")
    if from_hz == to_hz:
        return x.copy()
    t_last = (n_in - 1) / from_hz
    n_out = int(np.floor(t_last * to_hz + 1e-9)) + 1
    t_in = np.arange(n_in) / from_hz
    t_out = np.arange(n_out) / to_hz
    flat = x.reshape(-1, n_in)
    out = np.stack([np.interp(t_out, t_in, row) for row in flat])
    return out.reshape(x.shape[:-1] + (n_out,))


def epoch(signal, onsets_s, labels, meta: RecordingMeta = RecordingMeta(), subject: int = 0, run: int = 0) -> TrialSet:
    """Cut one ``(channels, timepoints)`` window per onset from a ``(channels, time)`` signal.

    ``signal`` must already be at ``meta.target_rate_hz``.  Windows may overlap.
    """
    signal = np.asarray(signal)
    onsets = np.asarray(onsets_s, dtype=float)
    labels = np.asarray(labels)
    if labels.shape != onsets.shape:
        raise ValueError("need one label per onset")
    n = meta.timepoints
    starts = np.round(onsets * meta.target_rate_hz).astype(int)
    for s, t in zip(starts, onsets):
        if s < 0 or s + n > signal.shape[-1]:
            raise ValueError(f"epoch at {t:g} s runs past the recording end")
    data = np.stack([signal[:, s : s + n] for s in starts]) if len(starts) else np.empty((0, signal.shape[0], n))
    k = len(starts)
    return TrialSet(data, labels, np.full(k, subject), np.full(k, run))


def balance(trials: TrialSet, rng: np.random.Generator) -> TrialSet:
    """Subsample every class to the minority count without replacement, then shuffle."""
    classes, counts = np.unique(trials.labels, return_counts=True)
    if len(classes) < 2 or counts.min() == 0:
        raise ValueError("balance needs at least two non-empty classes")
    m = counts.min()
    keep = []
    for c in classes:
        idx = np.flatnonzero(trials.labels == c)
        keep.append(idx if len(idx) == m else np.sort(rng.choice(idx, size=m, replace=False)))
    keep = np.concatenate(keep)
    return trials.subset(keep[rng.permutation(len(keep))])


def standardize(split: TrialSet) -> TrialSet:
    """Z-score each channel over all trials and timepoints of this split alone."""
    if len(split) < 2:
        raise ValueError("standardize needs at least two trials")
    x = np.asarray(split.data, dtype=np.float64)
    mean = x.mean(axis=(0, 2), keepdims=True)
    centered = x - mean
    std = np.sqrt((centered**2).mean(axis=(0, 2), keepdims=True))
    flat = std.ravel()
    bad = np.flatnonzero(flat <= 1e-12 * max(1.0, float(np.abs(mean).max())))
    if bad.size:
        raise ValueError(f"zero-variance channel(s): {bad.tolist()}")
    z = centered / std
    # one refinement pass removes residual rounding in mean/std
    z -= z.mean(axis=(0, 2), keepdims=True)
    z /= np.sqrt((z**2).mean(axis=(0, 2), keepdims=True))
    return TrialSet(z, split.labels, split.subjects, split.runs)


def reject_artifacts(trials: TrialSet, threshold: float | None = None) -> TrialSet:
    """Drop trials whose peak absolute amplitude exceeds ``threshold``; None keeps all."""
    if threshold is None:
        return trials
    keep = np.abs(trials.data).max(axis=(1, 2)) <= threshold
    return trials.subset(np.flatnonzero(keep))
