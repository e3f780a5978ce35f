import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from avinpaint import dsp


def naive_frame_dft(segment, fft_size=512):
    n = np.arange(fft_size)
    padded = np.zeros(fft_size)
    padded[: segment.size] = segment
    k = np.arange(fft_size // 2 + 1)[:, None]
    return (padded[None, :] * np.exp(-2j * np.pi * k * n[None, :] / fft_size)).sum(axis=1)


class TestStft:
    def test_three_seconds_gives_250_frames(self):
        spec = dsp.stft(np.zeros(48000) + 0.1)
        assert spec.shape == (250, 257)

    def test_zero_waveform(self):
        assert not np.any(dsp.stft(np.zeros(1000)))

    def test_sinusoid_peaks_at_bin_64(self):
        t = np.arange(4800) / 16000
        x = np.sin(2 * np.pi * 2000 * t)
        spec = dsp.stft(x)
        full = spec[: dsp.num_frames(4800) - 2]
        assert np.all(np.argmax(np.abs(full), axis=1) == 64)

    def test_matches_naive_dft(self):
        rng = np.random.default_rng(3)
        x = rng.uniform(-1, 1, 1000)
        spec = dsp.stft(x)
        w = dsp.hann_window()
        padded = np.concatenate([x, np.zeros(2000)])
        for i in (0, 2, spec.shape[0] - 1):
            seg = padded[i * 192: i * 192 + 384] * w
            np.testing.assert_allclose(spec[i], naive_frame_dft(seg), atol=1e-9)

    def test_hann_window_overlap_adds_to_one(self):
        w = dsp.hann_window()
        np.testing.assert_allclose(w[:192] + w[192:], 1.0, atol=1e-12)

    @pytest.mark.parametrize("n", [1, 191, 192, 193, 384, 48000, 48001])
    def test_frame_count(self, n):
        assert dsp.stft(np.ones(n)).shape[0] == math.ceil(n / 192)

    @pytest.mark.parametrize("bad", [np.array([]), np.array([0.0, np.nan])])
    def test_rejects_bad_input(self, bad):
        with pytest.raises(ValueError):
            dsp.stft(bad)

    def test_rejects_bad_framing(self):
        with pytest.raises(ValueError):
            dsp.stft(np.ones(1000), fft_size=256, win=384)


class TestIstft:
    def test_round_trip_random(self):
        rng = np.random.default_rng(0)
        for n in (384, 999, 48000):
            x = rng.uniform(-1, 1, n)
            assert np.max(np.abs(dsp.istft(dsp.stft(x), n) - x)) < 1e-6

    def test_impulse(self):
        for pos in (0, 100, 5000):
            x = np.zeros(9600)
            x[pos] = 1.0
            assert np.max(np.abs(dsp.istft(dsp.stft(x), x.size) - x)) < 1e-6

    def test_zero_spectrogram(self):
        assert not np.any(dsp.istft(np.zeros((10, 257), complex), 1900))

    def test_length_too_long(self):
        with pytest.raises(ValueError):
            dsp.istft(np.zeros((10, 257), complex), 10 * 192 + 385)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(384, 6000), st.integers(0, 2**31 - 1))
    def test_round_trip_property(self, n, seed):
        x = np.random.default_rng(seed).normal(size=n)
        assert np.max(np.abs(dsp.istft(dsp.stft(x), n) - x)) < 1e-6


class TestLogAndNorm:
    def test_unit_magnitude(self):
        s = dsp.log_magnitude(np.exp(1j * np.linspace(0, 3, 12)).reshape(3, 4))
        np.testing.assert_allclose(s.values, math.log(1 + 1e-7))
        assert s.scale == dsp.LOG

    def test_zero_floor(self):
        s = dsp.log_magnitude(np.zeros((2, 3), complex))
        np.testing.assert_allclose(s.values, math.log(1e-7))
        assert s.values[0, 0] == pytest.approx(-16.118, abs=1e-3)

    def test_elementwise(self):
        rng = np.random.default_rng(1)
        z = rng.normal(size=(4, 5)) + 1j * rng.normal(size=(4, 5))
        s = dsp.log_magnitude(z)
        for (i, j), v in np.ndenumerate(s.values):
            assert v == pytest.approx(math.log(math.hypot(z[i, j].real, z[i, j].imag) + 1e-7), abs=1e-14)

    def test_stats_two_values(self):
        ns = dsp.fit_norm_stats([dsp.Spectrogram(np.array([[0.0, 2.0], [2.0, 0.0]]), dsp.LOG)])
        assert ns.mean == 1.0 and ns.std == 1.0

    def test_stats_zero_variance(self):
        with pytest.raises(ValueError):
            dsp.fit_norm_stats([dsp.Spectrogram(np.full((3, 3), 2.5), dsp.LOG)])

    def test_stats_need_log_scale(self):
        with pytest.raises(ValueError):
            dsp.fit_norm_stats([dsp.Spectrogram(np.ones((2, 2)), dsp.LINEAR)])

    def test_stats_match_pooled_numpy(self):
        rng = np.random.default_rng(5)
        specs = [dsp.Spectrogram(rng.normal(3, 2, size=(rng.integers(2, 30), 7)), dsp.LOG)
                 for _ in range(6)]
        pooled = np.concatenate([s.values.ravel() for s in specs])
        ns = dsp.fit_norm_stats(specs)
        assert ns.mean == pytest.approx(pooled.mean(), rel=1e-9)
        assert ns.std == pytest.approx(pooled.std(ddof=0), rel=1e-9)

    def test_normalize_values(self):
        ns = dsp.NormStats(2.0, 4.0)
        s = dsp.normalize(dsp.Spectrogram(np.array([[2.0, 6.0]]), dsp.LOG), ns)
        assert s.values.tolist() == [[0.0, 1.0]]
        assert s.scale == dsp.NORMALIZED

    def test_normalize_round_trip(self):
        rng = np.random.default_rng(2)
        s = dsp.Spectrogram(rng.normal(size=(20, 257)) * 3 - 4, dsp.LOG)
        ns = dsp.NormStats(-3.3, 2.7)
        back = dsp.denormalize(dsp.normalize(s, ns), ns)
        assert np.max(np.abs(back.values - s.values)) < 1e-12

    def test_scale_mismatch(self):
        ns = dsp.NormStats(0.0, 1.0)
        with pytest.raises(ValueError):
            dsp.normalize(dsp.Spectrogram(np.ones((2, 2)), dsp.NORMALIZED), ns)
        with pytest.raises(ValueError):
            dsp.denormalize(dsp.Spectrogram(np.ones((2, 2)), dsp.LOG), ns)

    def test_magnitude_from_log_inverts_floor(self):
        mag = np.array([[0.0, 1e-3, 2.0]])
        back = dsp.magnitude_from_log(dsp.log_magnitude(mag.astype(complex)).values)
        np.testing.assert_allclose(back, mag, atol=1e-12)
        assert dsp.magnitude_from_log(np.array([50.0]))[0] == pytest.approx(1e4)


class TestReconstructPhase:
    def _signal(self, seed, n=4800):
        rng = np.random.default_rng(seed)
        t = np.arange(n) / 16000
        return np.sin(2 * np.pi * 440 * t) * 0.5 + 0.05 * rng.normal(size=n)

    def test_no_mask_returns_observed(self):
        obs = dsp.stft(self._signal(0))
        out = dsp.reconstruct_phase(np.abs(obs), obs, np.zeros(obs.shape), iters=3)
        assert np.array_equal(out, obs)

    def test_reliable_bins_untouched(self):
        obs = dsp.stft(self._signal(1))
        mask = np.zeros(obs.shape, dtype=np.uint8)
        mask[5:12] = 1
        mag = np.abs(obs) * 1.3
        out = dsp.reconstruct_phase(mag, obs, mask, iters=10)
        rel = mask == 0
        assert np.array_equal(out[rel], obs[rel])
        np.testing.assert_allclose(np.abs(out[~rel]), mag[~rel], rtol=1e-12)

    def test_zero_magnitude_in_gap(self):
        obs = dsp.stft(self._signal(2))
        mask = np.zeros(obs.shape)
        mask[3:6] = 1
        out = dsp.reconstruct_phase(np.zeros(obs.shape), obs, mask, iters=5)
        assert not np.any(out[3:6])

    def test_residual_nonincreasing(self):
        x = self._signal(3)
        mag = np.abs(dsp.stft(x))
        _, res = dsp.reconstruct_phase(mag, np.zeros_like(mag, complex), np.ones(mag.shape), 100,
                                       return_residuals=True)
        assert all(b <= a * (1 + 1e-12) + 1e-12 for a, b in zip(res, res[1:]))
        assert res[-1] < res[0]

    def test_zero_iterations(self):
        with pytest.raises(ValueError):
            dsp.reconstruct_phase(np.ones((3, 257)), np.ones((3, 257)), np.ones((3, 257)), iters=0)

    def test_requires_linear_scale(self):
        with pytest.raises(ValueError):
            dsp.reconstruct_phase(dsp.Spectrogram(np.ones((3, 257)), dsp.LOG), np.ones((3, 257)),
                                  np.ones((3, 257)))


class TestWav:
    def test_write_read(self, tmp_path):
        x = 0.5 * np.sin(np.linspace(0, 100, 16000))
        dsp.write_wav(tmp_path / "a.wav", x)
        y = dsp.read_wav(tmp_path / "a.wav")
        assert y.size == x.size
        assert np.max(np.abs(y - x)) < 1 / 32767

    def test_resamples_to_16k(self, tmp_path):
        from scipy.io import wavfile
        t = np.arange(50000) / 50000
        wavfile.write(tmp_path / "b.wav", 50000, (0.3 * np.sin(2 * np.pi * 1000 * t) * 32767).astype(np.int16))
        y = dsp.read_wav(tmp_path / "b.wav")
        assert y.size == 16000
        spec = np.abs(dsp.stft(y))
        assert np.argmax(spec[10]) == 32  # 1000 Hz / 31.25 Hz per bin
