import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ftnlab.modulation import BPSK, QPSK, QAM16, FtnConfig, modulate
from ftnlab.channels import simulate_matrix_model
from ftnlab.networks import (
    KERNEL_ALLOCATIONS, BranchMode, ConvBaselineNetwork, DenseHead, FkLayerSpec, FkNetwork, NetworkDetector,
    allocation_for, bce_loss, conv_baseline_forward, default_window_extension, fk_forward, fk_forward_complex,
    gather_triplet, hard_decision, load_model, make_windows, parse_network_kind, save_model, to_llr
)
from ftnlab.errors.detector_errors import (
    BranchModeError, KernelAllocationError, ModelFileError, ModulationMismatchError, NetworkStructureError,
    TripletDistanceError, UnsupportedModelVersionError, WindowShapeError
)


SEED = 7


def zero_bias(network):
    """Copy of a network with every bias set to zero."""

    return network.with_parameters(
        np.zeros_like(parameter) if parameter.ndim == 1 else parameter
        for parameter in network.parameters
    )


class TestWindows:
    """Tests for window construction and triplet gathering."""

    def test_zero_padded_rows(self):
        """Rows at both frame ends are padded with zeros."""
        samples = np.arange(1., 15.)
        rows = make_windows(samples, 6).rows

        assert rows.shape == (14, 13)
        np.testing.assert_array_equal(rows[0], [0] * 6 + list(samples[:7]))
        np.testing.assert_array_equal(rows[-1], list(samples[-7:]) + [0] * 6)
        np.testing.assert_array_equal(rows[7], samples[1:14])

    def test_single_sample_frame(self):
        """A one-sample frame gives one row with the sample in the centre."""
        np.testing.assert_array_equal(make_windows(np.array([3.]), 2).rows, [[0, 0, 3, 0, 0]])

    def test_window_width(self):
        """The batch reports a width of 2N + 1."""
        batch = make_windows(np.ones(5), 3)

        assert batch.window_width == 7
        assert len(batch) == 5

    def test_triplets(self):
        """Distance i gathers the centre and the two samples i away."""
        window = np.array([1., 2., 3., 4., 5.])

        np.testing.assert_array_equal(gather_triplet(window, 1), [2., 3., 4.])
        np.testing.assert_array_equal(gather_triplet(window, 2), [1., 3., 5.])
        np.testing.assert_array_equal(gather_triplet(np.zeros(5), 2), [0., 0., 0.])

    @pytest.mark.parametrize("distance", [0, 3])
    def test_triplet_out_of_range(self, distance):
        """Distances outside 1..N are input errors."""
        with pytest.raises(TripletDistanceError):
            gather_triplet(np.zeros(5), distance)


class TestAllocations:
    """Tests for the hierarchical kernel allocations."""

    @pytest.mark.parametrize("tau, total", [(0.9, 3), (0.8, 11), (0.7, 25)])
    def test_total_filters(self, tau, total):
        """Shipped allocations hold 3, 11 and 25 filters."""
        assert sum(KERNEL_ALLOCATIONS[tau]) == total
        assert FkNetwork.zeros(tau, allocation_for(tau)).feature_count == total

    def test_allocation_covers_isi_length(self):
        """One kernel layer exists per ISI distance."""
        for tau, allocation in KERNEL_ALLOCATIONS.items():
            assert len(allocation) == FtnConfig.for_tau(tau).isi_length

    def test_window_extension(self):
        """Extension appends single-filter layers."""
        assert allocation_for(0.9, 2) == (2, 1, 1, 1)

    @pytest.mark.parametrize("tau, extension", [(0.9, 2), (0.8, 0), (0.7, 0), (0.65, 0)])
    def test_default_extension(self, tau, extension):
        """Only tau = 0.9 reaches beyond its shipped N by default."""
        assert default_window_extension(tau) == extension

    def test_unknown_tau(self):
        """tau without an allocation needs one explicitly."""
        with pytest.raises(KernelAllocationError):
            allocation_for(0.65)


class TestFkNetwork:
    """Tests for the fixed-kernel detector network."""

    @pytest.fixture
    def network(self):
        return FkNetwork.initialized(0.8, allocation_for(0.8), np.random.default_rng(SEED))

    def test_zero_network_outputs_half(self):
        """All-zero weights give probability 0.5 for any window."""
        network = FkNetwork.zeros(0.9, (2, 1))

        np.testing.assert_array_equal(network.forward(np.random.default_rng(SEED).normal(size=(4, 5))), 0.5)

    def test_hand_evaluated_composition(self):
        """A one-filter network evaluates sigma(w_out * tanh(w_dense * tanh(2)))."""
        head = DenseHead(
            np.array([[0.7], [0.], [0.], [0.]]), np.zeros(4), np.array([[1.3, 0., 0., 0.]]), np.zeros(1)
        )
        network = FkNetwork(1.0, (FkLayerSpec(1, np.array([[0., 1., 0.]]), np.zeros(1)), ), head)
        expected = 1 / (1 + np.exp(-1.3 * np.tanh(0.7 * np.tanh(2.))))

        assert fk_forward(network, np.array([0.4, 2., -0.9]))[0] == pytest.approx(expected, abs=1e-15)

    @given(st.lists(st.floats(-3, 3), min_size=13, max_size=13))
    @settings(max_examples=50, deadline=None)
    def test_sign_antisymmetry(self, window):
        """Without biases p(-w) = 1 - p(w)."""
        network = zero_bias(FkNetwork.initialized(0.8, allocation_for(0.8), np.random.default_rng(SEED)))
        window = np.array(window)

        np.testing.assert_allclose(fk_forward(network, -window), 1 - fk_forward(network, window), atol=1e-12)

    def test_probabilities_inside_unit_interval(self, network):
        """Outputs stay strictly between 0 and 1 even for huge inputs."""
        rows = np.random.default_rng(SEED).normal(scale=1e3, size=(50, 13))
        probabilities = network.forward(rows)

        assert np.all(probabilities > 0) and np.all(probabilities < 1)

    def test_triplet_masking(self, network):
        """Layer i is blind to every window element outside its triplet."""
        rng = np.random.default_rng(SEED)
        window = rng.normal(size=13)
        features = network.features(window)
        offset = 0

        for layer in network.layers:
            perturbed = window.copy()
            untouched = np.setdiff1d(np.arange(13), [6 - layer.distance, 6, 6 + layer.distance])
            perturbed[untouched] += rng.normal(size=len(untouched))
            span = slice(offset, offset + layer.filter_count)

            np.testing.assert_array_equal(network.features(perturbed)[0, span], features[0, span])
            offset += layer.filter_count

    def test_window_width_check(self, network):
        """A window of another width is rejected."""
        with pytest.raises(WindowShapeError):
            network.forward(np.zeros((2, 5)))

    def test_complex_rows_rejected(self, network):
        """Complex windows must be split per dimension first."""
        with pytest.raises(WindowShapeError):
            network.forward(np.zeros((1, 13), dtype=np.complex128))

    def test_layer_order(self):
        """Layers must cover distances 1..N in order."""
        layers = (FkLayerSpec(2, np.zeros((1, 3)), np.zeros(1)), )

        with pytest.raises(NetworkStructureError):
            FkNetwork(0.9, layers, DenseHead.zeros(1, 1))

    def test_head_width_check(self):
        """The dense head must take exactly the kernel features."""
        with pytest.raises(NetworkStructureError):
            FkNetwork(0.9, (FkLayerSpec(1, np.zeros((2, 3)), np.zeros(2)), ), DenseHead.zeros(3, 1))

    def test_qam16_head(self):
        """16-QAM networks emit two bits per dimension."""
        network = FkNetwork.zeros(0.9, (2, 1), QAM16)

        assert network.output_bits == 2
        assert network.forward(np.zeros((3, 5))).shape == (3, 2)

    def test_parameters_round_trip(self, network):
        """with_parameters rebuilds the same network."""
        rebuilt = network.with_parameters(network.parameters)
        rows = np.random.default_rng(SEED).normal(size=(5, 13))

        np.testing.assert_array_equal(rebuilt.forward(rows), network.forward(rows))

    def test_wrong_parameter_shape(self, network):
        """Replacement parameters must keep their shapes."""
        parameters = list(network.parameters)
        parameters[0] = np.zeros((1, 1))

        with pytest.raises(NetworkStructureError):
            network.with_parameters(parameters)


class TestDualBranch:
    """Tests for complex modulations with in-phase and quadrature branches."""

    @pytest.fixture
    def network(self):
        return FkNetwork.initialized(0.9, (2, 1), np.random.default_rng(SEED), QPSK)

    def test_branch_mode(self, network):
        """Complex modulations run in dual mode, BPSK in real mode."""
        assert network.branch_mode is BranchMode.dual
        assert FkNetwork.zeros(0.9, (2, 1)).branch_mode is BranchMode.real

    def test_real_window(self, network):
        """A purely real window gives the zero-window output on the quadrature branch."""
        window = np.array([0.3, -1., 0.8, 0.1, -0.2])
        output = fk_forward_complex(network, window)

        assert output[1] == pytest.approx(fk_forward(network, np.zeros(5))[0])

    def test_symmetric_window(self, network):
        """A window w + jw gives equal branch outputs with shared weights."""
        window = np.array([0.3, -1., 0.8, 0.1, -0.2])
        output = fk_forward_complex(network, window + 1j * window)

        assert output[0] == pytest.approx(output[1])

    def test_real_network_has_no_quadrature(self):
        """Complex inference on a BPSK network is a configuration error."""
        with pytest.raises(BranchModeError):
            fk_forward_complex(FkNetwork.zeros(0.9, (2, 1)), np.zeros(5))

    def test_independent_branches(self):
        """Unshared branches carry their own weights."""
        network = FkNetwork.initialized(0.9, (2, 1), np.random.default_rng(SEED), QPSK, shared_branches=False)

        assert not network.shared_branches
        assert not np.array_equal(network.parameters[0], network.quadrature.parameters[0])

    def test_separable_detection(self):
        """QPSK decisions equal per-dimension BPSK decisions on the same samples."""
        rng = np.random.default_rng(SEED)
        real_network = FkNetwork.initialized(0.9, (2, 1), rng)
        dual_network = FkNetwork(0.9, real_network.layers, real_network.head, QPSK)

        config = FtnConfig.for_tau(0.9, QPSK)
        frame = modulate(rng.integers(0, 2, 200), QPSK)
        received = simulate_matrix_model(frame, config.simulation_matrix(100), 0.1, rng)
        decisions = NetworkDetector(dual_network).detect(received).reshape(-1, 2)

        real_decisions = hard_decision(real_network.forward(make_windows(received.samples.real, 2).rows)[:, 0])
        imag_decisions = hard_decision(real_network.forward(make_windows(received.samples.imag, 2).rows)[:, 0])

        np.testing.assert_array_equal(decisions[:, 0], real_decisions)
        np.testing.assert_array_equal(decisions[:, 1], imag_decisions)


class TestConvBaseline:
    """Tests for the sliding-kernel baseline."""

    def test_positions(self):
        """Each filter produces 2N + 2 - r positions."""
        assert ConvBaselineNetwork.zeros(0.8, 6, 3).positions == 11
        assert ConvBaselineNetwork.zeros(0.8, 6, 13).positions == 1

    def test_zero_network(self):
        """All-zero weights give probability 0.5."""
        network = ConvBaselineNetwork.zeros(0.9, 2, 3)

        assert conv_baseline_forward(network, np.ones(5))[0] == 0.5

    def test_hand_evaluated_preactivations(self):
        """A (1, 1, 1) kernel over five ones gives three preactivations of 3."""
        network = ConvBaselineNetwork(
            0.9, 2, np.array([[1., 1., 1.]]), np.zeros(1), DenseHead.zeros(3, 1)
        )

        np.testing.assert_allclose(network.preactivations(np.ones(5)), [[[3., 3., 3.]]])
        np.testing.assert_allclose(network.features(np.ones(5)), [[np.tanh(3.)] * 3])

    def test_kernel_longer_than_window(self):
        """A kernel wider than the window is a structure error."""
        with pytest.raises(NetworkStructureError):
            ConvBaselineNetwork.zeros(0.9, 2, 6)


class TestDecisions:
    """Tests for hard decisions and LLR conversion."""

    @pytest.mark.parametrize("p, bit", [(0.9, 1), (0.1, 0), (0.5, 0)])
    def test_hard_decision(self, p, bit):
        """Probabilities above one half decide bit 1, ties decide 0."""
        assert hard_decision(p) == bit

    def test_llr_of_half(self):
        """An uninformative probability has zero LLR."""
        assert to_llr(0.5) == pytest.approx(0, abs=1e-15)

    @given(st.floats(0, 1))
    def test_llr_symmetry(self, p):
        """p and 1 - p give opposite LLRs."""
        assert to_llr(p) == pytest.approx(-to_llr(1 - p), abs=1e-6)

    def test_llr_of_sigmoid(self):
        """sigma(-1) maps back to an LLR of +1."""
        assert to_llr(0.2689) == pytest.approx(1., abs=1e-3)

    def test_llr_clamp(self):
        """Certain probabilities are clamped to finite LLRs."""
        assert to_llr(0.) == pytest.approx(np.log((1 - 1e-7) / 1e-7))
        assert np.isfinite(to_llr(np.array([0., 1.]))).all()

    def test_bce_values(self):
        """Binary cross-entropy at known points."""
        assert bce_loss(np.full(4, 0.5), np.array([0, 1, 0, 1])) == pytest.approx(np.log(2))
        assert bce_loss(np.array([0., 1.]), np.array([0., 1.])) <= 1e-11
        assert bce_loss(np.array([0.9]), np.array([0])) == pytest.approx(-np.log(0.1))


class TestModelFiles:
    """Tests for saving and loading models."""

    @pytest.mark.parametrize("network", [
        FkNetwork.initialized(0.8, allocation_for(0.8), np.random.default_rng(SEED)),
        FkNetwork.initialized(0.9, (2, 1), np.random.default_rng(SEED), QPSK, shared_branches=False),
        ConvBaselineNetwork.initialized(0.9, 2, 3, np.random.default_rng(SEED)),
    ])
    def test_round_trip(self, network, tmp_path):
        """A saved model loads back with identical outputs and saves back identically."""
        path = tmp_path / "model.json"
        save_model(network, path)
        loaded = load_model(path)

        rows = np.random.default_rng(SEED).normal(size=(6, network.window_width))
        np.testing.assert_array_equal(loaded.forward(rows), network.forward(rows))
        assert type(loaded) is type(network)
        assert loaded.shared_branches == network.shared_branches

        second_path = tmp_path / "again.json"
        save_model(loaded, second_path)
        assert json.loads(second_path.read_text()) == json.loads(path.read_text())

    def test_missing_file(self, tmp_path):
        """A missing file is a model file error."""
        with pytest.raises(ModelFileError):
            load_model(tmp_path / "absent.json")

    def test_future_version(self, tmp_path):
        """Unknown format versions are refused."""
        path = tmp_path / "model.json"
        save_model(FkNetwork.zeros(0.9, (2, 1)), path)
        document = json.loads(path.read_text())
        document["format_version"] = 99
        path.write_text(json.dumps(document))

        with pytest.raises(UnsupportedModelVersionError):
            load_model(path)

    def test_modulation_mismatch(self):
        """A BPSK detector refuses QPSK frames."""
        config = FtnConfig.for_tau(0.9, QPSK)
        rng = np.random.default_rng(SEED)
        frame = modulate(rng.integers(0, 2, 20), QPSK)
        received = simulate_matrix_model(frame, config.simulation_matrix(10), 0.1, rng)

        with pytest.raises(ModulationMismatchError):
            NetworkDetector(FkNetwork.zeros(0.9, (2, 1), BPSK)).detect(received)


class TestNetworkKinds:
    """Tests for detector name parsing."""

    @pytest.mark.parametrize("name, kind", [
        ("fk-cnn", ("fk", None)), ("FK", ("fk", None)), ("conv-k3", ("conv", 3)), ("cnn-k5", ("conv", 5))
    ])
    def test_known_names(self, name, kind):
        """Fixed-kernel and conv-kR names are recognised."""
        assert parse_network_kind(name) == kind

    def test_unknown_name(self):
        """Other names are structure errors."""
        with pytest.raises(NetworkStructureError):
            parse_network_kind("lstm")
