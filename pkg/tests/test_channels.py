import numpy as np
import pytest

from ftnlab.modulation import BPSK, QPSK, FtnConfig, IsiMatrix, modulate
from ftnlab.channels import (
    ChannelMode, ChannelSpec, FadingChannel, MatrixModelSimulator, WaveformModelSimulator, draw_colored_noise,
    draw_fading_channel, esn0_to_ebn0, n0_to_snr_db, simulate_matrix_model, simulate_waveform_model,
    simulator_for, snr_db_to_n0
)
from ftnlab.errors.signal_errors import FadingChannelError, IsiMatrixError


SEED = 20240601


def random_frame(rng, symbols, scheme=BPSK):
    return modulate(rng.integers(0, 2, symbols * scheme.bits_per_symbol), scheme)


class TestSnrConversions:
    """Tests for the Es/N0 and noise density conversions."""

    @pytest.mark.parametrize("snr_db, n0", [(0, 1.), (10, 0.1), (20, 0.01)])
    def test_snr_to_n0(self, snr_db, n0):
        """Es/N0 in dB maps onto N0 for unit symbol energy."""
        assert snr_db_to_n0(snr_db) == pytest.approx(n0)
        assert n0_to_snr_db(n0) == pytest.approx(snr_db)

    def test_noiseless_snr(self):
        """Zero noise density is an infinite SNR."""
        assert n0_to_snr_db(0) == float('inf')

    def test_ebn0(self):
        """QPSK at rate 1/2 carries one bit per symbol, so Eb/N0 equals Es/N0."""
        assert esn0_to_ebn0(8., 2, 0.5) == pytest.approx(8.)
        assert esn0_to_ebn0(8., 2) == pytest.approx(8. - 10 * np.log10(2))


class TestMatrixModel:
    """Tests for the y = X a + w simulator."""

    @pytest.fixture
    def rng(self):
        return np.random.default_rng(SEED)

    def test_noiseless_output(self, rng):
        """Without noise the samples are exactly X a."""
        config = FtnConfig.for_tau(0.8)
        frame = random_frame(rng, 64)
        matrix = config.simulation_matrix(64)
        received = simulate_matrix_model(frame, matrix, 0., rng)

        np.testing.assert_allclose(received.samples, matrix.entries @ frame.symbols, atol=1e-12)
        assert received.sim_mode == "matrix"

    def test_size_mismatch(self, rng):
        """A matrix of the wrong size cannot carry the frame."""
        config = FtnConfig.for_tau(0.8)

        with pytest.raises(IsiMatrixError):
            simulate_matrix_model(random_frame(rng, 10), config.simulation_matrix(12), 0.1, rng)

    def test_white_noise_variance(self, rng):
        """With X = I the per-sample noise variance is N0 / 2."""
        noise = draw_colored_noise(IsiMatrix(np.eye(100), 0), 0.5, rng, frames=10000)

        assert np.var(noise) == pytest.approx(0.25, rel=0.03)

    def test_colored_noise_covariance(self, rng):
        """Noise covariance approaches X * N0 / 2."""
        matrix = FtnConfig.for_tau(0.8).simulation_matrix(32)
        noise = draw_colored_noise(matrix, 1., rng, frames=100000)
        covariance = noise.T @ noise / len(noise)
        expected = matrix.entries / 2

        assert np.linalg.norm(covariance - expected) / np.linalg.norm(expected) < 0.05

    def test_complex_noise_per_dimension(self, rng):
        """Complex noise carries N0 / 2 in each real dimension."""
        noise = draw_colored_noise(IsiMatrix(np.eye(50), 0), 1., rng, is_complex=True, frames=10000)

        assert np.var(noise.real) == pytest.approx(0.5, rel=0.03)
        assert np.var(noise.imag) == pytest.approx(0.5, rel=0.03)

    def test_rejects_fading(self, rng):
        """The matrix path carries no fading."""
        simulator = MatrixModelSimulator(FtnConfig.for_tau(0.9))

        with pytest.raises(FadingChannelError):
            simulator(random_frame(rng, 10), 0.1, rng, FadingChannel.identity())


class TestWaveformModel:
    """Tests for the oversampled waveform simulator."""

    @pytest.fixture
    def rng(self):
        return np.random.default_rng(SEED)

    def test_agrees_with_matrix_model(self, rng):
        """Noiseless waveform samples equal the matrix model on interior symbols."""
        config = FtnConfig.for_tau(0.8)
        frame = random_frame(rng, 100)
        guard = config.span_symbols

        waveform = simulate_waveform_model(frame, config.pulse, 0.8, 0., None, rng)
        matrix = simulate_matrix_model(frame, config.simulation_matrix(100), 0., rng)

        np.testing.assert_allclose(waveform.samples[guard:-guard], matrix.samples[guard:-guard], atol=1e-6)

    def test_nyquist_rate_is_interference_free(self, rng):
        """At tau = 1 interior samples sit on the transmitted symbols."""
        config = FtnConfig.for_tau(1.0)
        frame = random_frame(rng, 80)
        received = simulate_waveform_model(frame, config.pulse, 1.0, 0., None, rng)

        np.testing.assert_allclose(received.samples.real[16:-16], frame.symbols.real[16:-16], atol=5e-3)

    def test_identity_channel(self, rng):
        """A single unit tap at delay zero leaves the samples unchanged."""
        config = FtnConfig.for_tau(0.9)
        frame = random_frame(rng, 40)
        plain = simulate_waveform_model(frame, config.pulse, 0.9, 0., None, rng)
        faded = simulate_waveform_model(frame, config.pulse, 0.9, 0., FadingChannel.identity(), rng)

        np.testing.assert_allclose(faded.samples, plain.samples, atol=1e-12)

    def test_delayed_path(self, rng):
        """A pure one-symbol delay shifts the noiseless samples by one symbol."""
        config = FtnConfig.for_tau(0.9)
        frame = random_frame(rng, 60)
        plain = simulate_waveform_model(frame, config.pulse, 0.9, 0., None, rng)
        channel = FadingChannel(np.array([1e-300, 1.]), np.array([0, 1]))
        delayed = simulate_waveform_model(frame, config.pulse, 0.9, 0., channel, rng)

        np.testing.assert_allclose(delayed.samples[1:], plain.samples[:-1], atol=1e-9)

    def test_noise_variance(self, rng):
        """Matched-filter noise has variance x_0 * N0 / 2 per sample."""
        config = FtnConfig.for_tau(0.8)
        frame = modulate(np.zeros(60, dtype=np.uint8), BPSK)
        clean = simulate_waveform_model(frame, config.pulse, 0.8, 0., None, rng).samples.real
        deviations = np.concatenate([
            simulate_waveform_model(frame, config.pulse, 0.8, 0.5, None, rng).samples.real[20:40] - clean[20:40]
            for _ in range(3000)
        ])

        assert np.var(deviations) == pytest.approx(0.25, rel=0.06)

    def test_empty_frame(self, rng):
        """An empty frame gives no samples."""
        config = FtnConfig.for_tau(0.8)
        received = simulate_waveform_model(modulate([], QPSK), config.pulse, 0.8, 0.1, None, rng)

        assert received.length == 0


class TestFading:
    """Tests for the quasi-static multipath channel."""

    def test_tap_power(self):
        """Each of three equal-power taps averages a power of 1/3."""
        rng = np.random.default_rng(SEED)
        taps = np.array([draw_fading_channel(rng, 3).taps for _ in range(50000)])

        np.testing.assert_allclose(np.mean(np.abs(taps) ** 2, axis=0), 1 / 3, rtol=0.02)

    def test_rayleigh_magnitude(self):
        """Magnitude taps are the absolute values of the complex draw."""
        complex_taps = draw_fading_channel(np.random.default_rng(SEED), 3).taps
        magnitude_taps = draw_fading_channel(np.random.default_rng(SEED), 3, rayleigh_magnitude=True).taps

        np.testing.assert_allclose(magnitude_taps, np.abs(complex_taps))
        assert not np.iscomplexobj(magnitude_taps)

    def test_convolve(self):
        """Convolution on the symbol grid adds each delayed copy."""
        channel = FadingChannel(np.array([1., 0.5]), np.array([0, 2]))

        np.testing.assert_allclose(channel.convolve(np.array([1., -1., 1.])), [1., -1., 1.5, -0.5, 0.5])

    @pytest.mark.parametrize("taps, delays", [([1., 0.5], [1, 2]), ([1., 0.5], [0, 0]), ([1.], [0, 1])])
    def test_invalid_channel(self, taps, delays):
        """Delays must start at zero, increase strictly and pair with the taps."""
        with pytest.raises(FadingChannelError):
            FadingChannel(np.array(taps), np.array(delays))

    def test_channel_sources(self):
        """AWGN draws nothing, fixed fading repeats one channel, block fading redraws."""
        rng = np.random.default_rng(SEED)

        assert ChannelSpec("awgn").create_source()(rng) is None

        fixed = ChannelSpec("fixed_fading", fading_seed=3).create_source()
        assert fixed(rng) is fixed(rng)

        block = ChannelSpec(ChannelMode.block_fading).create_source()
        assert not np.allclose(block(rng).taps, block(rng).taps)

    def test_unknown_mode(self):
        """An unknown channel mode is a configuration error."""
        with pytest.raises(FadingChannelError):
            ChannelSpec("rician")

    def test_simulator_choice(self):
        """Fading links run on the waveform path, AWGN on the matrix path."""
        config = FtnConfig.for_tau(0.9)

        assert isinstance(simulator_for(config, ChannelSpec("awgn")), MatrixModelSimulator)
        assert isinstance(simulator_for(config, ChannelSpec("block_fading")), WaveformModelSimulator)
