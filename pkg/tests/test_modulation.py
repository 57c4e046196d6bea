import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ftnlab.modulation import (
    BPSK, QPSK, QAM16, QAM64, FtnConfig, IsiProfile, ModulationScheme, build_isi_matrix, demodulate_hard,
    export_profile_csv, full_support_profile, isi_coefficients, modulate, rrc_taps, rrc_value, symbol_step
)
from ftnlab.errors.signal_errors import (
    BitCountError, FtnConfigurationError, GridAlignmentError, IsiMatrixError, PulseConfigurationError,
    UnknownModulationError
)


TABLE_I = {
    0.7: (0.999, 0.353, -0.183, 0.0324, 0.0316, -0.0279, 0.0137, 0.000331, -0.00173),
    0.8: (0.999, 0.222, -0.152, 0.0762, -0.0244, 0.00593, 0.00316, -0.00173, 0.000664),
    0.9: (0.999, 0.102, -0.0786, 0.0487, -0.0226, 0.0124, -0.00361, 0.000981, -0.000169),
}


def raised_cosine(t: float, beta: float) -> float:
    return float(np.sinc(t) * np.cos(np.pi * beta * t) / (1 - (2 * beta * t) ** 2))


class TestRrcTaps:
    """Tests for the sampled root-raised-cosine pulse."""

    @pytest.fixture
    def pulse(self):
        return rrc_taps(0.35, 16, 20)

    def test_unit_energy(self, pulse):
        """Sum of squared taps times the grid step is one."""
        assert abs(np.sum(pulse.taps ** 2) / 20 - 1) <= 1e-9
        assert abs(pulse.energy - 1) <= 1e-9

    def test_even_symmetry(self, pulse):
        """Taps are symmetric about the centre."""
        np.testing.assert_allclose(pulse.taps, pulse.taps[::-1], atol=1e-12)

    def test_length_covers_span(self, pulse):
        """A span of 16 symbols at 20 samples per symbol gives 641 taps."""
        assert len(pulse.taps) == 2 * 16 * 20 + 1
        assert pulse.times[0] == pytest.approx(-16) and pulse.times[-1] == pytest.approx(16)

    def test_centre_tap_matches_closed_form(self, pulse):
        """Centre tap equals 1 - beta + 4 beta / pi up to the truncated tail energy."""
        assert pulse.taps[16 * 20] == pytest.approx(1 - 0.35 + 4 * 0.35 / np.pi, abs=5e-6)

    def test_centre_offset_is_the_truncated_energy(self, pulse):
        """Rescaling the closed form by its energy inside the span gives the centre tap exactly."""
        closed_form = rrc_value(np.arange(-16 * 20, 16 * 20 + 1) / 20, 0.35)
        energy_inside_span = np.sum(closed_form ** 2) / 20

        assert 1 - 1e-5 < energy_inside_span < 1
        assert pulse.taps[16 * 20] == pytest.approx(closed_form[16 * 20] / np.sqrt(energy_inside_span), abs=1e-12)

    def test_zero_roll_off_is_sinc(self):
        """With beta = 0 the pulse crosses zero at every nonzero symbol instant."""
        pulse = rrc_taps(0., 16, 20)
        zero_crossings = pulse.taps[::20][np.arange(33) != 16]

        np.testing.assert_allclose(zero_crossings, 0, atol=1e-3)

    @pytest.mark.parametrize("beta, span, samples", [(-0.1, 16, 20), (1.5, 16, 20), (0.35, 4, 20), (0.35, 16, 5)])
    def test_invalid_parameters(self, beta, span, samples):
        """Roll-off outside [0, 1], short spans and coarse grids are rejected."""
        with pytest.raises(PulseConfigurationError):
            rrc_taps(beta, span, samples)


class TestIsiCoefficients:
    """Tests for the sampled raised-cosine ISI profile."""

    @pytest.fixture
    def pulse(self):
        return rrc_taps(0.35)

    @pytest.mark.parametrize("tau", sorted(TABLE_I))
    def test_published_coefficients(self, pulse, tau):
        """Coefficients follow the published table within 2e-2 with matching signs."""
        coeffs = isi_coefficients(pulse, tau, 8).coeffs
        expected = np.array(TABLE_I[tau])

        np.testing.assert_allclose(coeffs, expected, atol=2e-2)

        significant = np.abs(expected) > 2e-2
        np.testing.assert_array_equal(np.sign(coeffs[significant]), np.sign(expected[significant]))

    def test_tau_0_8_first_taps(self, pulse):
        """At tau = 0.8 the first two taps are near 0.222 and -0.152."""
        coeffs = isi_coefficients(pulse, 0.8, 8).coeffs

        assert coeffs[1] == pytest.approx(0.222, abs=2e-2)
        assert coeffs[2] == pytest.approx(-0.152, abs=2e-2)

    def test_nyquist_rate_has_no_interference(self, pulse):
        """At tau = 1 every off-centre tap vanishes."""
        coeffs = isi_coefficients(pulse, 1.0, 4).coeffs

        assert np.all(np.abs(coeffs[1:]) <= 5e-3)
        assert coeffs[0] == pytest.approx(1, abs=1e-6)

    @pytest.mark.parametrize("tau", [0.7, 0.8, 0.9])
    def test_matches_analytic_raised_cosine(self, pulse, tau):
        """Every tap agrees with the closed-form raised cosine at i * tau."""
        coeffs = isi_coefficients(pulse, tau, 8).coeffs
        analytic = [raised_cosine(index * tau, 0.35) for index in range(9)]

        np.testing.assert_allclose(coeffs, analytic, atol=1e-3)

    def test_tau_0_7_first_tap(self, pulse):
        """x_1 at tau = 0.7 is rc(0.7), about 0.348."""
        assert isi_coefficients(pulse, 0.7, 1).coeffs[1] == pytest.approx(0.348, abs=1e-3)

    def test_misaligned_tau(self, pulse):
        """A tau that is not a whole number of grid samples is rejected."""
        with pytest.raises(GridAlignmentError):
            symbol_step(pulse, 0.73)

    def test_full_support_reaches_pulse_edge(self, pulse):
        """The full-support profile keeps every lag inside the autocorrelation."""
        profile = full_support_profile(pulse, 0.8)

        assert profile.n_max == (len(pulse.taps) - 1) // 16

    def test_profile_rejects_non_unit_main_tap(self):
        """A profile whose x_0 is far from one is not a unit-energy profile."""
        with pytest.raises(PulseConfigurationError):
            IsiProfile(0.8, 0.35, np.array([0.5, 0.1]))

    def test_empty_profile(self):
        """A profile without coefficients is a configuration error."""
        with pytest.raises(PulseConfigurationError):
            IsiProfile(0.8, 0.35, np.zeros(0))

    def test_negative_length(self, pulse):
        """A negative profile length is a configuration error."""
        with pytest.raises(PulseConfigurationError):
            isi_coefficients(pulse, 0.8, -1)

    def test_csv_export(self, pulse, tmp_path):
        """Profile export writes an i, x_i header and one row per coefficient."""
        profile = isi_coefficients(pulse, 0.9, 3)
        path = tmp_path / "profile.csv"
        export_profile_csv(profile, path)

        with open(path) as file:
            rows = list(csv.reader(file))

        assert rows[0] == ['i', 'x_i']
        assert len(rows) == 5
        assert float(rows[2][1]) == profile.coeffs[1]


class TestIsiMatrix:
    """Tests for the banded Toeplitz ISI matrix."""

    @pytest.fixture
    def profile(self):
        return isi_coefficients(rrc_taps(0.35), 0.8, 8)

    def test_first_row(self, profile):
        """Row 0 holds x_0..x_N followed by zeros."""
        matrix = build_isi_matrix(profile, 7, 2)
        expected = np.concatenate((profile.coeffs[:3], np.zeros(4)))

        np.testing.assert_array_equal(matrix.entries[0], expected)

    def test_single_symbol(self, profile):
        """K = 1 gives the 1x1 matrix [x_0]."""
        matrix = build_isi_matrix(profile, 1, 2)

        np.testing.assert_array_equal(matrix.entries, [[profile.coeffs[0]]])

    def test_symmetric_toeplitz_band(self, profile):
        """The matrix is symmetric, Toeplitz and zero beyond the band."""
        entries = build_isi_matrix(profile, 20, 3).entries
        rows, columns = np.indices(entries.shape)

        np.testing.assert_array_equal(entries, entries.T)
        assert np.all(entries[np.abs(rows - columns) > 3] == 0)
        assert np.all(np.diag(entries, 2) == profile.coeffs[2])

    def test_band_wider_than_profile(self, profile):
        """N beyond the stored coefficients is an input error."""
        with pytest.raises(IsiMatrixError):
            build_isi_matrix(profile, 20, 12)

    @pytest.mark.parametrize("tau", [0.7, 0.8, 0.9, 1.0])
    def test_simulation_matrix_is_positive_semidefinite(self, tau):
        """The full-support matrix of every shipped tau has no negative eigenvalue."""
        matrix = FtnConfig.for_tau(tau).simulation_matrix(128)

        assert matrix.eigenvalues.min() >= -1e-9

    def test_square_root(self):
        """The cached square root S satisfies S @ S = X."""
        matrix = FtnConfig.for_tau(0.8).simulation_matrix(32)
        root = matrix.square_root

        np.testing.assert_allclose(root @ root, matrix.entries, atol=1e-9)
        np.testing.assert_allclose(root, root.T, atol=1e-12)


class TestModulation:
    """Tests for the Gray-mapped constellations."""

    def test_bpsk_mapping(self):
        """Bit 0 maps to +1 and bit 1 to -1."""
        np.testing.assert_array_equal(modulate([0, 1, 0], BPSK).symbols, [1, -1, 1])

    def test_qpsk_in_phase_bit_first(self):
        """The first bit of a QPSK pair drives the in-phase component."""
        symbols = modulate([0, 0, 1, 0, 0, 1], QPSK).symbols

        np.testing.assert_allclose(symbols, np.array([1 + 1j, -1 + 1j, 1 - 1j]) / np.sqrt(2))

    def test_empty_frame(self):
        """An empty bit stream gives an empty frame."""
        assert modulate([], QPSK).length == 0

    @pytest.mark.parametrize("scheme", [BPSK, QPSK, QAM16, QAM64])
    def test_unit_mean_energy(self, scheme):
        """Average symbol energy over the constellation is one."""
        assert np.mean(np.abs(scheme.constellation) ** 2) == pytest.approx(1, abs=1e-12)

    @pytest.mark.parametrize("scheme", [QAM16, QAM64])
    def test_gray_adjacency(self, scheme):
        """Neighbouring PAM levels differ in exactly one bit."""
        patterns = scheme.bit_patterns.astype(int)

        assert np.all(np.abs(np.diff(patterns, axis=0)).sum(axis=1) == 1)

    def test_first_bit_selects_positive_side(self):
        """Patterns starting with 0 sit on the positive amplitudes."""
        positive = QAM64.amplitudes > 0

        np.testing.assert_array_equal(QAM64.bit_patterns[:, 0] == 0, positive)

    @given(st.sampled_from(["bpsk", "qpsk", "qam16", "qam64"]), st.integers(0, 40), st.integers(0, 2 ** 32 - 1))
    @settings(max_examples=50, deadline=None)
    def test_noiseless_hard_decisions(self, name, symbols, seed):
        """Hard decisions on clean symbols give back the transmitted bits."""
        scheme = ModulationScheme.of(name)
        bits = np.random.default_rng(seed).integers(0, 2, symbols * scheme.bits_per_symbol)

        np.testing.assert_array_equal(demodulate_hard(modulate(bits, scheme).symbols, scheme), bits)

    def test_tie_resolves_to_bit_zero(self):
        """A sample exactly between the BPSK levels decides bit 0."""
        np.testing.assert_array_equal(demodulate_hard(np.zeros(2), BPSK), [0, 0])

    def test_partial_symbol(self):
        """A bit count that does not fill whole symbols is rejected."""
        with pytest.raises(BitCountError):
            modulate([0, 1, 0], QPSK)

    @pytest.mark.parametrize("name, expected", [("QPSK", QPSK), ("qam-16", QAM16), (BPSK, BPSK)])
    def test_scheme_lookup(self, name, expected):
        """Names are matched without regard to case or dashes."""
        assert ModulationScheme.of(name) == expected

    def test_unknown_scheme(self):
        """An unknown modulation name is a configuration error."""
        with pytest.raises(UnknownModulationError):
            ModulationScheme.of("8psk")


class TestFtnConfig:
    """Tests for the link configuration."""

    @pytest.mark.parametrize("tau, isi_length", [(0.7, 8), (0.8, 6), (0.9, 2), (1.0, 1)])
    def test_shipped_isi_lengths(self, tau, isi_length):
        """Every shipped tau carries its detector ISI length."""
        config = FtnConfig.for_tau(tau)

        assert config.isi_length == isi_length
        assert config.window_width == 2 * isi_length + 1
        assert config.detector_profile.n_max == isi_length

    def test_step(self):
        """tau = 0.8 on a 20 sample grid is 16 samples per symbol."""
        assert FtnConfig.for_tau(0.8).step == 16

    def test_unshipped_tau(self):
        """A tau without a shipped ISI length needs it explicitly."""
        with pytest.raises(FtnConfigurationError):
            FtnConfig.for_tau(0.65)

        assert FtnConfig(0.65, 4).isi_length == 4

    @pytest.mark.parametrize("tau", [0., 1.2, 0.73])
    def test_invalid_tau(self, tau):
        """tau outside (0, 1] or off the sample grid is rejected."""
        with pytest.raises(FtnConfigurationError):
            FtnConfig(tau, 2)
