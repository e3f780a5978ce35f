import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from avinpaint import metrics, synthdata
from oracles import levenshtein

seqs = st.lists(st.integers(0, 5), max_size=12)


class TestMaskedL1:
    def test_identity(self):
        Y = np.random.default_rng(0).normal(size=(10, 8))
        assert metrics.masked_l1(Y, Y, np.ones_like(Y)) == 0.0

    def test_constant_difference(self):
        Y = np.zeros((5, 4))
        M = np.zeros((5, 4), dtype=np.uint8)
        M.flat[[0, 3, 5, 7, 8, 11, 13, 15, 17, 19]] = 1
        Y_hat = Y + 0.5 * M
        assert metrics.masked_l1(Y_hat, Y, M) == 0.5

    def test_scalar_oracle(self):
        rng = np.random.default_rng(1)
        a, b = rng.normal(size=(30, 9)), rng.normal(size=(30, 9))
        M = rng.random((30, 9)) < 0.4
        total, n = 0.0, 0
        for i in range(30):
            for j in range(9):
                if M[i, j]:
                    total += abs(a[i, j] - b[i, j])
                    n += 1
        assert abs(metrics.masked_l1(a, b, M) - total / n) < 1e-12

    def test_ignores_reliable_bins(self):
        rng = np.random.default_rng(2)
        a, b = rng.normal(size=(6, 6)), rng.normal(size=(6, 6))
        M = np.eye(6)
        a2 = a + 100 * (1 - M)
        assert metrics.masked_l1(a2, b, M) == metrics.masked_l1(a, b, M)

    def test_errors(self):
        with pytest.raises(ValueError):
            metrics.masked_l1(np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((2, 2)))
        with pytest.raises(ValueError):
            metrics.masked_l1(np.zeros((2, 2)), np.zeros((2, 3)), np.ones((2, 2)))


class TestPER:
    def test_examples(self):
        assert metrics.per([1, 2, 3], [1, 2, 3]) == 0
        assert metrics.per([], [4, 4, 1, 0]) == 1.0
        assert metrics.per(["a", "c"], ["a", "b", "c"]) == pytest.approx(1 / 3)

    def test_empty_reference(self):
        with pytest.raises(ValueError):
            metrics.per([1], [])

    @settings(max_examples=200, deadline=None)
    @given(seqs, seqs)
    def test_edit_distance_matches_table_oracle(self, a, b):
        assert metrics.edit_distance(a, b) == levenshtein(a, b)
        assert metrics.edit_distance(a, b) == metrics.edit_distance(b, a)

    @settings(max_examples=200, deadline=None)
    @given(seqs, seqs.filter(len))
    def test_per_bound(self, hyp, ref):
        assert 0 <= metrics.per(hyp, ref) <= (len(hyp) + len(ref)) / len(ref)


@pytest.fixture(scope="module")
def speech():
    return synthdata.synth_utterance(8, [3, 1]).waveform


class TestSTOI:
    def test_identity(self, speech):
        assert metrics.stoi(speech, speech) >= 0.99

    def test_noise_only(self, speech):
        noise = np.random.default_rng(0).normal(size=speech.size)
        assert metrics.stoi(speech, noise) <= 0.3

    def test_monotone_in_snr(self, speech):
        noise = np.random.default_rng(1).normal(size=speech.size)
        noise *= np.sqrt(np.mean(speech ** 2) / np.mean(noise ** 2))
        scores = [metrics.stoi(speech, speech + noise * 10 ** (-snr / 20)) for snr in (20, 10, 0)]
        assert scores[0] > scores[1] > scores[2]
        assert all(-1 <= s <= 1 for s in scores)

    def test_matches_reference_implementation(self, speech):
        pystoi = pytest.importorskip("pystoi")
        rng = np.random.default_rng(2)
        for snr in (20, 5, -5):
            noisy = speech + rng.normal(size=speech.size) * np.sqrt(np.mean(speech ** 2)) * 10 ** (-snr / 20)
            ref = pystoi.stoi(speech, noisy, 16000, extended=False)
            assert metrics.stoi(speech, noisy) == pytest.approx(ref, abs=1e-9)

    def test_length_mismatch(self, speech):
        with pytest.raises(ValueError):
            metrics.stoi(speech, speech[:-1])

    def test_silent_reference(self):
        with pytest.raises(ValueError):
            metrics.stoi(np.zeros(16000), np.ones(16000))

    def test_band_matrix(self):
        obm = metrics.third_octave_bands()
        assert obm.shape == (15, 257)
        assert set(np.unique(obm)) == {0.0, 1.0}
        # bands do not overlap and are ordered
        starts = [int(np.argmax(row)) for row in obm]
        assert starts == sorted(starts) and obm.sum(axis=0).max() == 1
