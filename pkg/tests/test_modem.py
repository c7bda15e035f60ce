import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dovmodem.channelsim import ParametricChannelModel, apply_parametric, apply_parametric_samples
from dovmodem.errors import InvalidArgument
from dovmodem.modem import (
    VARIANCE_FLOOR,
    ChannelEstimate,
    SymbolParams,
    WaveformCodebook,
    carriers,
    demodulate_corrected,
    demodulate_ml,
    demodulate_stream,
    demultiplex,
    estimate_channel,
    modulate_stream,
    psk_sequence,
    synthesize_symbol,
)
from dovmodem.quatcode import QuaternaryCodebook, lee_distance


def direct_symbol(word, N, k0, A):
    """Evaluate the defining harmonic sum sample by sample."""
    out = []
    for n in range(N):
        acc = 0j
        for k, d in enumerate(word):
            acc += A * np.exp(2j * np.pi * d / 4) * np.exp(1j * (k + k0) * 2 * np.pi * n / N)
        out.append(acc.real)
    return np.array(out)


def ml_oracle(x, cb):
    d = (np.abs(x[:, None, :] - cb.psk[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d, axis=1)


def full_search_oracle(y, cb):
    """Correlate every codeword (no reflection shortcut)."""
    s = (y @ np.conj(psk_sequence(cb.quat.words)).T).real
    return np.argmax(s, axis=1)


class TestSymbolParams:
    def test_baud(self):
        assert SymbolParams(N=20, K=8).baud == 400
        assert SymbolParams(N=40, K=8).baud == 200

    @pytest.mark.parametrize("N, K, k0", [(20, 10, 1), (20, 8, 0), (16, 8, 1)])
    def test_nyquist_and_offset(self, N, K, k0):
        with pytest.raises(InvalidArgument):
            SymbolParams(N=N, K=K, k0=k0)

    def test_default_harmonic_layout(self):
        p = SymbolParams(N=40, K=10, k0=3)
        assert p.harmonic_freqs.tolist() == [600 + 200 * i for i in range(10)]


class TestSynthesis:
    def test_single_cosine(self):
        s = synthesize_symbol(SymbolParams(N=20, K=1, k0=1), [0])
        assert s[0] == pytest.approx(1.0, abs=1e-12)
        assert s[5] == pytest.approx(0.0, abs=1e-12)
        assert np.allclose(s, np.cos(2 * np.pi * np.arange(20) / 20), atol=1e-12)

    def test_all_zero_word_peak(self):
        p = SymbolParams(N=20, K=8, A=0.3)
        assert synthesize_symbol(p, [0] * 8)[0] == pytest.approx(8 * 0.3, abs=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(InvalidArgument):
            synthesize_symbol(SymbolParams(N=20, K=8), [0] * 7)

    @settings(max_examples=30)
    @given(st.lists(st.integers(0, 3), min_size=6, max_size=6), st.floats(0.05, 2.0))
    def test_matches_direct_sum(self, word, A):
        p = SymbolParams(N=40, K=6, k0=3, A=A)
        s = synthesize_symbol(p, word)
        assert np.max(np.abs(s - direct_symbol(word, 40, 3, A))) < 1e-9
        assert np.abs(s).max() <= 6 * A + 1e-12

    def test_codebook_waveforms_match_direct_sum(self, cb64):
        for m in range(0, cb64.M, 7):
            ref = direct_symbol(cb64.quat.words[m], 20, 1, cb64.A)
            assert np.max(np.abs(cb64.waveforms[m] - ref)) < 1e-9

    def test_waveform_reflection(self, cb64):
        assert np.allclose(cb64.waveforms[1::2], -cb64.waveforms[0::2], atol=1e-12)

    def test_equal_energy(self, cb64):
        e = (cb64.waveforms ** 2).sum(axis=1)
        assert np.allclose(e, 20 * 8 * cb64.A ** 2 / 2, rtol=1e-9)

    def test_default_peak(self, cb64):
        assert cb64.peak == pytest.approx(0.9, abs=1e-12)

    def test_carrier_orthogonality(self):
        c = carriers(SymbolParams(N=20, K=8))
        basis = np.vstack([c.real, c.imag])
        gram = basis @ basis.T
        off = gram - np.diag(np.diag(gram))
        assert np.abs(off).max() < 1e-9


class TestDemultiplex:
    def test_round_trip(self):
        p = SymbolParams(N=20, K=2)
        assert np.allclose(demultiplex(synthesize_symbol(p, [0, 2]), p), [1, -1], atol=1e-9)

    def test_zero(self):
        assert np.all(demultiplex(np.zeros(20), SymbolParams(N=20, K=8)) == 0)

    @pytest.mark.parametrize("bin_", [0, 4, 7])
    def test_off_codebook_tone(self, bin_):
        p = SymbolParams(N=20, K=3, k0=1)
        tone = np.cos(2 * np.pi * bin_ * np.arange(20) / 20 + 0.4)
        assert np.abs(demultiplex(tone, p)).max() < 1e-9

    def test_wrong_length(self):
        with pytest.raises(InvalidArgument):
            demultiplex(np.zeros(19), SymbolParams(N=20, K=8))

    @settings(max_examples=30)
    @given(st.lists(st.integers(0, 3), min_size=8, max_size=8), st.floats(0.01, 3.0))
    def test_round_trip_property(self, word, A):
        p = SymbolParams(N=20, K=8, A=A)
        got = demultiplex(synthesize_symbol(p, word), p)
        assert np.max(np.abs(got - psk_sequence(word, A))) < 1e-9 * max(1, A)


class TestIsometry:
    @given(st.lists(st.integers(0, 3), min_size=8, max_size=8),
           st.lists(st.integers(0, 3), min_size=8, max_size=8), st.floats(0.1, 5.0))
    def test_squared_euclid_is_twice_lee(self, a, b, A):
        d2 = (np.abs(psk_sequence(a, A) - psk_sequence(b, A)) ** 2).sum()
        assert d2 == pytest.approx(2 * A * A * lee_distance(a, b), rel=1e-9, abs=1e-12)


class TestEstimateChannel:
    def _train(self, cb, L, model, seed):
        rng = np.random.default_rng(seed)
        idx = rng.integers(0, cb.M, L)
        rx = apply_parametric(cb.psk[idx], model, rng, cb.A)
        return rx, cb.quat.words[idx]

    def test_identity(self, cb64):
        rx, w = self._train(cb64, 50, ParametricChannelModel.identity(8), 0)
        est = estimate_channel(rx, w, cb64.params)
        assert np.allclose(est.phase, 0, atol=1e-12)
        assert np.allclose(est.gain, cb64.A, rtol=1e-12)
        assert np.allclose(est.variance, VARIANCE_FLOOR * cb64.A ** 2)
        assert est.floored.all()

    def test_rotation(self, cb64):
        rx, w = self._train(cb64, 50, ParametricChannelModel.uniform(8, phase=0.3), 1)
        est = estimate_channel(rx, w, cb64.params)
        assert np.allclose(est.phase, 0.3, atol=1e-9)

    def test_noise_variance(self, cb64):
        rx, w = self._train(cb64, 10_000, ParametricChannelModel.uniform(8, noise_var=0.01), 2)
        est = estimate_channel(rx, w, cb64.params)
        assert np.allclose(est.variance, 0.01 * cb64.A ** 2, rtol=0.05)
        assert not est.floored.any()

    def test_needs_two_symbols(self, cb64):
        with pytest.raises(InvalidArgument):
            estimate_channel(cb64.psk[:1], cb64.quat.words[:1], cb64.params)

    def test_misaligned(self, cb64):
        with pytest.raises(InvalidArgument):
            estimate_channel(cb64.psk[:4], cb64.quat.words[:3], cb64.params)


class TestDemodulateML:
    def test_exact(self, cb64):
        assert (demodulate_ml(cb64.psk, cb64) == np.arange(64)).all()

    def test_scaled(self, cb64):
        assert (demodulate_ml(0.5 * cb64.psk, cb64) == np.arange(64)).all()

    def test_single_returns_int(self, cb64):
        assert demodulate_ml(cb64.psk[5], cb64) == 5

    def test_matches_brute_force(self, cb64, rng):
        x = (rng.standard_normal((2000, 8)) + 1j * rng.standard_normal((2000, 8))) * cb64.A
        assert (demodulate_ml(x, cb64) == ml_oracle(x, cb64)).all()

    def test_matches_time_domain_matched_filter(self, cb64, rng):
        idx = rng.integers(0, 64, 3000)
        x = cb64.waveforms[idx] + 0.3 * rng.standard_normal((3000, 20))
        mf = np.argmax(x @ cb64.waveforms.T, axis=1)
        assert (demodulate_ml(demultiplex(x, cb64.params), cb64) == mf).all()

    def test_tie_goes_to_smallest_index(self):
        quat = QuaternaryCodebook.from_words(np.array([[0], [2], [1], [3]]))
        cb = WaveformCodebook.build(quat, N=20)
        # exactly between phase 0 and phase 1
        x = np.array([cb.A * np.exp(1j * np.pi / 4)])
        assert demodulate_ml(x, cb) == 0

    def test_low_noise(self, cb64):
        rng = np.random.default_rng(3)
        d_min = np.sqrt(2 * 6) * cb64.A
        sigma2 = (d_min / 2) ** 2 / 40
        idx = rng.integers(0, 64, 100_000)
        x = apply_parametric(cb64.psk[idx], ParametricChannelModel.uniform(8, noise_var=sigma2 / cb64.A ** 2), rng, cb64.A)
        assert (demodulate_ml(x, cb64) != idx).mean() < 1e-4


class TestDemodulateCorrected:
    def test_identity_estimate_equals_ml(self, cb64, rng):
        x = (rng.standard_normal((10_000, 8)) + 1j * rng.standard_normal((10_000, 8))) * cb64.A
        idx, rel = demodulate_corrected(x, cb64, ChannelEstimate.identity(8, cb64.A))
        assert (idx == demodulate_ml(x, cb64)).all()
        assert ((rel >= 0) & (rel <= 1)).all()

    def test_reflection_shortcut_matches_full_search(self, cb64, rng):
        y = rng.standard_normal((5000, 8)) + 1j * rng.standard_normal((5000, 8))
        idx, _ = demodulate_corrected(y, cb64, ChannelEstimate.identity(8, cb64.A))
        assert (idx == full_search_oracle(y, cb64)).all()

    def test_non_symmetric_codebook_uses_full_search(self, rng):
        quat = QuaternaryCodebook.from_words(rng.permutation(np.array(
            [[a, b, c] for a in range(4) for b in range(4) for c in range(4)]))[:10])
        cb = WaveformCodebook.build(quat, N=20)
        assert not quat.is_reflection_symmetric
        y = rng.standard_normal((500, 3)) + 1j * rng.standard_normal((500, 3))
        idx, _ = demodulate_corrected(y, cb, ChannelEstimate.identity(3, cb.A))
        assert (idx == full_search_oracle(y, cb)).all()

    def test_rotation_compensated(self, cb64):
        est = ChannelEstimate(mean=np.full(8, cb64.A * np.exp(1j * np.pi / 4)),
                              variance=np.full(8, 0.01), L=100, floored=np.zeros(8, bool))
        rx = cb64.psk * np.exp(1j * np.pi / 4)
        idx, rel = demodulate_corrected(rx, cb64, est)
        assert (idx == np.arange(64)).all()
        assert (rel > 0).all()

    def test_variance_weighting_ignores_noisy_harmonic(self):
        words = np.array([[0, 0, 0, 0], [2, 2, 2, 2], [1, 1, 0, 2], [3, 3, 2, 0]])
        cb = WaveformCodebook.build(QuaternaryCodebook.from_words(words), N=20)
        est = ChannelEstimate(mean=np.full(4, cb.A + 0j), variance=np.array([1e-3, 1e-3, 1e-3, 1e3]),
                              L=100, floored=np.zeros(4, bool))
        rx = cb.psk[0].copy()
        rx[3] = -3 * cb.A  # large error on the unreliable harmonic
        assert demodulate_ml(rx, cb) == 2
        assert demodulate_corrected(rx, cb, est)[0] == 0

    def test_adversarial_exhaustive(self, cb64):
        """Error on the high-variance harmonic never flips a decision when the
        low-variance harmonics keep every competitor at Lee distance >= 2."""
        words = cb64.quat.words
        var = np.array([1e-3] * 7 + [1e4])
        est = ChannelEstimate(mean=np.full(8, cb64.A + 0j), variance=var, L=100,
                              floored=np.zeros(8, bool))
        low = words[:, :7].astype(int)
        for m in range(cb64.M):
            diff = (low - low[m]) % 4
            lee_low = np.minimum(diff, 4 - diff).sum(axis=1)
            lee_low[m] = 99
            if lee_low.min() < 2:
                continue
            for bad in range(4):
                rx = cb64.psk[m].copy()
                rx[7] = 3 * cb64.A * np.exp(1j * np.pi * bad / 2)
                assert demodulate_corrected(rx, cb64, est)[0] == m

    @settings(max_examples=40)
    @given(st.integers(0, 2 ** 32 - 1), st.floats(0.01, 100.0))
    def test_scale_invariance(self, cb64, seed, c):
        r = np.random.default_rng(seed)
        x = r.standard_normal((20, 8)) + 1j * r.standard_normal((20, 8))
        est = ChannelEstimate(mean=np.exp(1j * r.uniform(-3, 3, 8)), variance=r.uniform(0.1, 2, 8),
                              L=10, floored=np.zeros(8, bool))
        assert (demodulate_ml(c * x, cb64) == demodulate_ml(x, cb64)).all()
        assert (demodulate_corrected(c * x, cb64, est)[0] == demodulate_corrected(x, cb64, est)[0]).all()


class TestStreams:
    def test_small_round_trip(self, cb64):
        x = modulate_stream([0, 1, 0], cb64)
        assert len(x) == 60
        assert demodulate_stream(x, cb64).indices.tolist() == [0, 1, 0]

    def test_pairs_iteration(self, cb64):
        dec = demodulate_stream(modulate_stream([3, 4], cb64), cb64)
        pairs = list(dec)
        assert [p[0] for p in pairs] == [3, 4]
        assert all(0 <= r <= 1 for _, r in pairs)

    def test_identity_channel_lossless(self, cb64):
        idx = np.random.default_rng(9).integers(0, 64, 100_000)
        dec = demodulate_stream(modulate_stream(idx, cb64), cb64)
        assert (dec.indices == idx).all()

    def test_unknown_index(self, cb64):
        with pytest.raises(InvalidArgument):
            modulate_stream([64], cb64)

    def test_trailing_partial_symbol(self, cb64):
        dec = demodulate_stream(np.concatenate([modulate_stream([5, 6], cb64), np.zeros(7)]), cb64)
        assert dec.indices.tolist() == [5, 6] and dec.trailing == 7

    def test_ser_grows_with_noise(self, cb64):
        rng = np.random.default_rng(4)
        idx = rng.integers(0, 64, 100_000)
        x = modulate_stream(idx, cb64)
        sers = []
        for var in (0.05, 0.5, 0.8, 1.1):
            model = ParametricChannelModel.uniform(8, noise_var=var)
            y = apply_parametric_samples(x, cb64.params, model, np.random.default_rng(int(var * 100)))
            sers.append((demodulate_stream(y, cb64).indices != idx).mean())
        assert sers[0] < 1e-3
        assert sers[1] < sers[2] < sers[3]
