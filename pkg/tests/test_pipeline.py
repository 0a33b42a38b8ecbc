import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from actfn.data import (
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

FS = 10.0
T_LONG = np.arange(0, 6000, 1 / FS)  # the 0.005 Hz edge needs minutes to settle


def steady_amplitude(y, f):
    """Least-squares sinusoid amplitude at frequency f over the middle half."""
    m = len(T_LONG) // 4
    t, seg = T_LONG[m:-m], y[m:-m]
    basis = np.stack([np.sin(2 * np.pi * f * t), np.cos(2 * np.pi * f * t)], axis=1)
    coef, *_ = np.linalg.lstsq(basis, seg, rcond=None)
    return float(np.hypot(*coef))


class TestOpticalDensity:
    def test_baseline_gives_zero(self):
        raw = np.full((3, 50), 2.5)
        np.testing.assert_array_equal(intensity_to_od(raw), 0.0)

    def test_decade_attenuation(self):
        od = intensity_to_od(np.full((1, 4), 0.1), baseline=np.array([1.0]))
        np.testing.assert_allclose(od, 1.0, rtol=1e-15)

    def test_roundtrip(self, rng):
        raw = np.exp(rng.standard_normal((5, 200)))
        base = raw.mean(axis=-1)
        back = od_to_intensity(intensity_to_od(raw), base)
        assert np.max(np.abs(back - raw) / raw) < 1e-12

    def test_non_positive(self):
        with pytest.raises(ValueError):
            intensity_to_od(np.array([[1.0, 0.0]]))


class TestBandpass:
    def test_passes_in_band(self):
        y = bandpass(np.sin(2 * np.pi * 0.1 * T_LONG), 0.005, 0.7, FS)
        assert abs(steady_amplitude(y, 0.1) - 1.0) < 0.05

    def test_attenuates_out_of_band(self):
        y = bandpass(np.sin(2 * np.pi * 2.0 * T_LONG), 0.005, 0.7, FS)
        assert steady_amplitude(y, 2.0) < 0.1

    def test_removes_dc(self):
        y = bandpass(np.full(T_LONG.size, 5.0), 0.005, 0.7, FS)
        assert abs(y.mean()) < 1e-3 * 5.0

    def test_zero_phase(self):
        x = np.sin(2 * np.pi * 0.1 * T_LONG)
        y = bandpass(x, 0.005, 0.7, FS)
        m = len(x) // 4
        lag = np.argmax(np.correlate(y[m:-m], x[m:-m], "full")) - (len(x[m:-m]) - 1)
        assert lag == 0

    def test_shape_preserved(self, rng):
        x = rng.standard_normal((3, 28, 500))
        assert bandpass(x).shape == x.shape

    @pytest.mark.parametrize("low,high", [(0.0, 0.7), (0.7, 0.1), (0.1, 5.0), (-1, 1)])
    def test_bad_band(self, low, high):
        with pytest.raises(ValueError):
            bandpass(np.zeros(100), low, high, FS)


class TestMBLL:
    def test_zero(self):
        np.testing.assert_array_equal(mbll(np.zeros((2, 14, 30))), 0.0)

    def test_roundtrip(self, rng):
        conc = rng.standard_normal((2, 14, 40)) * 1e-6
        back = mbll(mbll_forward(conc)).reshape(2, 14, 40)
        assert np.max(np.abs(back - conc)) / np.max(np.abs(conc)) < 1e-10

    def test_channel_layout(self, rng):
        conc = rng.standard_normal((2, 14, 10))
        out = mbll(mbll_forward(conc))
        assert out.shape == (28, 10)
        np.testing.assert_allclose(out[:14], conc[0], rtol=1e-10)
        np.testing.assert_allclose(out[14:], conc[1], rtol=1e-10)

    def test_singular(self):
        with pytest.raises(np.linalg.LinAlgError):
            mbll(np.zeros((2, 1, 5)), extinction=np.array([[1.0, 2.0], [2.0, 4.0]]))

    def test_known_inverse(self):
        # hand-inverted 2x2: A = E * DPF * d with DPF 6, d 3
        E = DEFAULT_EXTINCTION
        A = E * 18.0
        det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
        od = np.array([1e-3, 2e-3]).reshape(2, 1, 1)
        hbo = (A[1, 1] * 1e-3 - A[0, 1] * 2e-3) / det
        hbr = (-A[1, 0] * 1e-3 + A[0, 0] * 2e-3) / det
        np.testing.assert_allclose(mbll(od).ravel(), [hbo, hbr], rtol=1e-12)


class TestResample:
    def test_identity(self, rng):
        x = rng.standard_normal((2, 30))
        np.testing.assert_array_equal(resample(x, 10.0, 10.0), x)

    @settings(max_examples=40, deadline=None)
    @given(st.floats(0.5, 50), st.floats(0.5, 50), st.floats(-3, 3), st.floats(-3, 3))
    def test_ramp_is_preserved(self, f_in, f_out, slope, icpt):
        t = np.arange(200) / f_in
        y = resample(icpt + slope * t, f_in, f_out)
        t_out = np.arange(y.shape[-1]) / f_out
        np.testing.assert_allclose(y, icpt + slope * t_out, atol=1e-9)

    def test_epoch_length_at_target_rate(self):
        n_in = int(np.ceil(15 * 7.8125))  # samples with t < 15 s
        assert resample(np.zeros((28, n_in)), 7.8125, 10.0).shape == (28, 150)

    def test_errors(self):
        with pytest.raises(ValueError):
            resample(np.zeros(5), 0.0, 10.0)
        with pytest.raises(ValueError):
            resample(np.zeros(0), 1.0, 10.0)


class TestEpoch:
    def test_boundary_fit(self):
        ts = epoch(np.zeros((28, 150)), [0.0], [1])
        assert ts.data.shape == (1, 28, 150)

    def test_overlapping_onsets(self, rng):
        sig = rng.standard_normal((4, 400))
        ts = epoch(sig, [0.0, 2.0, 4.0], [0, 1, 0], RecordingMeta(channel_count=4))
        assert ts.data.shape == (3, 4, 150)
        np.testing.assert_array_equal(ts.data[1], sig[:, 20:170])

    def test_tail_too_short(self):
        with pytest.raises(ValueError):
            epoch(np.zeros((28, 160)), [2.0], [0])

    def test_meta_invariant(self):
        assert RecordingMeta().timepoints == 150
        with pytest.raises(ValueError):
            RecordingMeta(epoch_seconds=15.05, target_rate_hz=10)


def make_trials(n0, n1, rng, c=3, t=10):
    labels = np.r_[np.zeros(n0, int), np.ones(n1, int)]
    return TrialSet(rng.standard_normal((n0 + n1, c, t)), labels)


class TestBalance:
    def test_counts(self, rng):
        out = balance(make_trials(5000, 918, rng, c=1, t=2), rng)
        assert len(out) == 1836
        assert out.class_counts() == {0: 918, 1: 918}

    def test_already_balanced_keeps_multiset(self, rng):
        ts = make_trials(20, 20, rng)
        out = balance(ts, rng)
        key = lambda d: sorted(map(bytes, d.reshape(len(d), -1)))
        assert key(out.data) == key(ts.data)

    def test_seeded(self, rng):
        ts = make_trials(50, 10, rng)
        a = balance(ts, np.random.default_rng(3))
        b = balance(ts, np.random.default_rng(3))
        assert a.data.tobytes() == b.data.tobytes()

    def test_empty_class(self, rng):
        with pytest.raises(ValueError):
            balance(make_trials(10, 0, rng), rng)


class TestStandardize:
    def test_zscore(self, rng):
        ts = TrialSet(5 + 3 * rng.standard_normal((40, 28, 150)), np.zeros(40))
        z = standardize(ts).data
        assert np.max(np.abs(z.mean(axis=(0, 2)))) < 1e-10
        assert np.max(np.abs(z.std(axis=(0, 2)) - 1)) < 1e-10

    def test_constant_channel(self, rng):
        data = rng.standard_normal((5, 3, 10))
        data[:, 1] = 2.0
        with pytest.raises(ValueError, match=r"\[1\]"):
            standardize(TrialSet(data, np.zeros(5)))

    def test_idempotent(self, rng):
        ts = TrialSet(rng.standard_normal((10, 4, 20)) * 7 - 2, np.zeros(10))
        once = standardize(ts)
        twice = standardize(once)
        assert np.max(np.abs(once.data - twice.data)) < 1e-12

    def test_splits_use_their_own_statistics(self, rng):
        train = TrialSet(rng.standard_normal((30, 3, 10)) + 1.0, np.zeros(30))
        test = TrialSet(rng.standard_normal((10, 3, 10)) * 2.0, np.zeros(10))
        own = standardize(test).data
        mu = train.data.mean(axis=(0, 2), keepdims=True)
        sd = train.data.std(axis=(0, 2), keepdims=True)
        leaked = (test.data - mu) / sd
        assert not np.allclose(own, leaked)

    def test_needs_two_trials(self, rng):
        with pytest.raises(ValueError):
            standardize(TrialSet(rng.standard_normal((1, 2, 5)), [0]))


def test_shape_conservation(rng):
    ts = TrialSet(rng.standard_normal((6, 28, 150)), np.r_[np.zeros(3), np.ones(3)])
    assert bandpass(ts.data).shape == ts.shape
    assert resample(ts.data, 10.0, 10.0).shape == ts.shape
    assert standardize(ts).shape == ts.shape


def test_artifact_hook(rng):
    ts = make_trials(4, 4, rng)
    assert reject_artifacts(ts) is ts
    ts.data[2] *= 100
    assert len(reject_artifacts(ts, threshold=10.0)) == 7
