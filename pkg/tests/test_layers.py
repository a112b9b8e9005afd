import numpy as np
import pytest

from pathseg.errors import ConfigurationError, DomainError, ShapeError
from pathseg.nn import layers as L
from pathseg.nn import softmax_cross_entropy

from gradcheck import central_difference, check_layer_gradients, check_maxpool_gradients, max_rel_error

SEEDS = (0, 1, 2)  # the acceptance suite re-runs with 5 seeds


def built(layer, in_shape, seed=0):
    layer.build(in_shape, np.random.default_rng(seed))
    return layer


class TestDenseForward:
    def test_identity_weights(self):
        layer = built(L.Dense(2), (3, 2))
        layer.params["W"][...] = np.eye(2)
        layer.params["b"][...] = 0
        x = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert np.array_equal(layer.forward(x, False), x)

    def test_hand_matrix_product(self):
        layer = built(L.Dense(2), (3, 2))
        layer.params["W"][...] = np.array([[1.0, 2.0], [3.0, 4.0]])
        layer.params["b"][...] = 0
        out = layer.forward(np.array([[1.0, 1.0]]), False)
        assert out.tolist() == [[4.0, 6.0]]

    @pytest.mark.parametrize("seed", SEEDS)
    def test_gradients(self, seed):
        assert check_layer_gradients(L.Dense(4), (3, 4), seed) < 1e-4

    @pytest.mark.parametrize("seed", SEEDS)
    def test_gradients_timewise(self, seed):
        assert check_layer_gradients(L.Dense(5, "relu"), (2, 6, 3), seed) < 1e-4


class TestConv1dForward:
    def test_ones_kernel_counts_window(self):
        layer = built(L.Conv1D(1, 3), (5, 1))
        layer.params["W"][...] = 1.0
        layer.params["b"][...] = 0
        out = layer.forward(np.ones((1, 5, 1)), False)
        assert out.ravel().tolist() == [3.0, 3.0, 3.0]

    def test_delta_kernel_shifts(self):
        layer = built(L.Conv1D(1, 3), (6, 1))
        layer.params["W"][...] = 0.0
        layer.params["W"][0, 0, 0] = 1.0  # picks x[t + 0]
        layer.params["b"][...] = 0
        x = np.arange(6.0).reshape(1, 6, 1)
        out = layer.forward(x, False)
        assert out.ravel().tolist() == [0.0, 1.0, 2.0, 3.0]

    def test_kernel_longer_than_time_rejected(self):
        with pytest.raises(ShapeError):
            built(L.Conv1D(1, 9), (5, 1))

    @pytest.mark.parametrize("seed", SEEDS)
    def test_gradients(self, seed):
        assert check_layer_gradients(L.Conv1D(4, 3), (2, 7, 3), seed) < 1e-4

    @pytest.mark.parametrize("seed", SEEDS)
    def test_gradients_same_padding(self, seed):
        assert check_layer_gradients(L.Conv1D(3, 4, padding="same"), (2, 6, 2), seed) < 1e-4


class TestConv2dForward:
    def test_ones_kernel_sums_patch(self):
        layer = built(L.Conv2D(1, 3), (3, 3, 1))
        layer.params["W"][...] = 1.0
        layer.params["b"][...] = 0
        out = layer.forward(np.ones((1, 3, 3, 1)), False)
        assert out.ravel().tolist() == [9.0]

    def test_center_delta_kernel_extracts_interior(self):
        layer = built(L.Conv2D(1, 3), (5, 5, 1))
        layer.params["W"][...] = 0.0
        layer.params["W"][1, 1, 0, 0] = 1.0
        layer.params["b"][...] = 0
        x = np.arange(25.0).reshape(1, 5, 5, 1)
        out = layer.forward(x, False)[0, :, :, 0]
        assert np.array_equal(out, x[0, 1:4, 1:4, 0])

    @pytest.mark.parametrize("seed", SEEDS)
    def test_gradients(self, seed):
        assert check_layer_gradients(L.Conv2D(3, 3), (1, 6, 5, 2), seed) < 1e-4

    @pytest.mark.parametrize("seed", SEEDS)
    def test_gradients_same_padding(self, seed):
        assert check_layer_gradients(L.Conv2D(2, (3, 2), padding="same"), (1, 5, 4, 2), seed) < 1e-4


class TestMaxPool:
    def test_hand_enumeration_same_padding(self):
        layer = built(L.MaxPool1D(3), (3, 1))
        out = layer.forward(np.array([[[1.0], [2.0], [3.0]]]), False)
        assert out.ravel().tolist() == [2.0, 3.0, 3.0]

    def test_constant_input_unchanged(self):
        layer = built(L.MaxPool1D(3), (6, 2))
        x = np.full((2, 6, 2), 1.5)
        assert np.array_equal(layer.forward(x, False), x)

    def test_pool_zero_rejected(self):
        with pytest.raises(ConfigurationError):
            L.MaxPool1D(0)

    @pytest.mark.parametrize("seed", SEEDS)
    def test_gradients_1d(self, seed):
        assert check_maxpool_gradients(L.MaxPool1D(3), (2, 8, 3), seed) < 1e-4

    @pytest.mark.parametrize("seed", SEEDS)
    def test_gradients_2d(self, seed):
        assert check_maxpool_gradients(L.MaxPool2D(3), (1, 5, 6, 2), seed) < 1e-4

    def test_tie_routes_to_earliest_index(self):
        layer = built(L.MaxPool1D(3), (3, 1))
        x = np.array([[[2.0], [2.0], [1.0]]])
        layer.forward(x, True)
        dx = layer.backward(np.ones((1, 3, 1)))
        # windows [-inf,2,2], [2,2,1], [2,1,-inf]: ties go to the earliest
        # position, so x[0] collects the first two windows, x[1] the third
        assert dx.ravel().tolist() == [2.0, 1.0, 0.0]


class TestBatchNorm:
    def test_zero_variance_batch_gives_beta(self):
        layer = built(L.BatchNorm(), (3,))
        layer.params["beta"][...] = 0.7
        out = layer.forward(np.full((4, 3), 5.0), True)
        assert np.allclose(out, 0.7, atol=1e-3)

    def test_standardized_batch_near_identity(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(500, 3))
        x = (x - x.mean(axis=0)) / x.std(axis=0)
        layer = built(L.BatchNorm(), (3,))
        out = layer.forward(x, True)
        assert np.max(np.abs(out - x)) < 1e-4

    def test_train_batch_of_one_rejected(self):
        layer = built(L.BatchNorm(), (3,))
        with pytest.raises(DomainError):
            layer.forward(np.zeros((1, 3)), True)

    def test_infer_uses_running_stats(self):
        layer = built(L.BatchNorm(), (2,))
        rng = np.random.default_rng(1)
        for _ in range(200):
            layer.forward(rng.normal(loc=3.0, size=(32, 2)), True)
        out = layer.forward(np.full((1, 2), 3.0), False)
        assert np.max(np.abs(out)) < 0.2  # running mean has converged near 3

    @pytest.mark.parametrize("seed", SEEDS)
    def test_gradients(self, seed):
        assert check_layer_gradients(L.BatchNorm(), (4, 3), seed) < 1e-4

    @pytest.mark.parametrize("seed", SEEDS)
    def test_gradients_4d(self, seed):
        assert check_layer_gradients(L.BatchNorm(), (3, 4, 2, 3), seed) < 1e-4


class TestDropout:
    def test_rate_zero_identity_both_modes(self):
        layer = built(L.Dropout(0.0), (5,))
        x = np.random.default_rng(0).normal(size=(4, 5))
        assert np.array_equal(layer.forward(x, True), x)
        assert np.array_equal(layer.forward(x, False), x)

    def test_infer_identity_any_rate(self):
        layer = built(L.Dropout(0.8), (5,))
        x = np.random.default_rng(0).normal(size=(4, 5))
        assert np.array_equal(layer.forward(x, False), x)

    def test_survivor_fraction(self):
        layer = L.Dropout(0.5)
        layer.build((10_000,), np.random.default_rng(3))
        out = layer.forward(np.ones((1, 10_000)), True)
        survivors = float((out != 0).mean())
        assert survivors == pytest.approx(0.5, abs=0.02)
        # inverted scaling: survivors carry 1/(1-rate)
        assert np.allclose(out[out != 0], 2.0)

    def test_rate_one_rejected(self):
        with pytest.raises(ConfigurationError):
            L.Dropout(1.0)


class TestGlobalAvgPool:
    def test_mean_over_spatial_axes(self):
        layer = built(L.GlobalAvgPool2D(), (2, 3, 4))
        x = np.arange(2 * 2 * 3 * 4, dtype=np.float64).reshape(2, 2, 3, 4)
        assert np.allclose(layer.forward(x, False), x.mean(axis=(1, 2)))

    @pytest.mark.parametrize("seed", SEEDS)
    def test_gradients(self, seed):
        assert check_layer_gradients(L.GlobalAvgPool2D(), (2, 3, 4, 5), seed) < 1e-4


class TestLSTM:
    def test_zero_weights_zero_output(self):
        layer = built(L.LSTM(4, return_sequences=True), (5, 3))
        for name in layer.param_order:
            layer.params[name][...] = 0.0
        out = layer.forward(np.random.default_rng(0).normal(size=(2, 5, 3)), False)
        assert np.array_equal(out, np.zeros((2, 5, 4)))

    def test_saturated_gates_freeze_cell(self):
        # forget gate wide open, input gate closed: c stays at c0 = 0, h stays 0
        layer = built(L.LSTM(4), (5, 3))
        for name in layer.param_order:
            layer.params[name][...] = 0.0
        b = layer.params["b"]
        b[:4] = -50.0   # input gate -> 0
        b[4:8] = 50.0   # forget gate -> 1
        out = layer.forward(np.random.default_rng(0).normal(size=(2, 5, 3)), False)
        assert np.max(np.abs(out)) < 1e-12

    def test_forget_bias_initialized_to_one(self):
        layer = built(L.LSTM(4), (5, 3))
        assert np.array_equal(layer.params["b"][4:8], np.ones(4))
        assert np.array_equal(layer.params["b"][:4], np.zeros(4))

    @pytest.mark.parametrize("seed", SEEDS)
    def test_gradients(self, seed):
        assert check_layer_gradients(L.LSTM(5), (1, 4, 3), seed) < 1e-3

    @pytest.mark.parametrize("seed", SEEDS)
    def test_gradients_sequences(self, seed):
        assert check_layer_gradients(L.LSTM(4, return_sequences=True), (2, 4, 3), seed) < 1e-3


class TestBidirectional:
    def test_zero_weights_double_width_zeros(self):
        layer = built(L.Bidirectional(4), (3, 2))
        for sub in (layer.fwd, layer.bwd):
            for name in sub.param_order:
                sub.params[name][...] = 0.0
        out = layer.forward(np.random.default_rng(0).normal(size=(2, 3, 2)), False)
        assert out.shape == (2, 8)
        assert np.array_equal(out, np.zeros((2, 8)))

    def test_palindrome_with_shared_weights_mirrors(self):
        layer = built(L.Bidirectional(3, return_sequences=True), (5, 2))
        for name in layer.fwd.param_order:
            layer.bwd.params[name][...] = layer.fwd.params[name]
        rng = np.random.default_rng(0)
        half = rng.normal(size=(1, 2, 2))
        mid = rng.normal(size=(1, 1, 2))
        x = np.concatenate([half, mid, half[:, ::-1]], axis=1)  # palindromic in time
        out = layer.forward(x, False)
        fwd_half, bwd_half = out[..., :3], out[..., 3:]
        assert np.allclose(fwd_half, bwd_half[:, ::-1], atol=1e-12)

    @pytest.mark.parametrize("seed", SEEDS)
    def test_gradients(self, seed):
        assert check_layer_gradients(L.Bidirectional(4), (1, 3, 2), seed) < 1e-3

    @pytest.mark.parametrize("seed", SEEDS)
    def test_gradients_sequences(self, seed):
        assert check_layer_gradients(L.Bidirectional(3, return_sequences=True), (2, 4, 2), seed) < 1e-3


class TestSoftmaxCrossEntropy:
    def test_uniform_logits_loss_is_log_classes(self):
        loss, _ = softmax_cross_entropy(np.zeros((2, 5)), np.array([1, 3]))
        assert loss == pytest.approx(np.log(5), abs=1e-12)

    def test_saturated_true_logit(self):
        logits = np.zeros((1, 4))
        logits[0, 2] = 50.0
        loss, _ = softmax_cross_entropy(logits, np.array([2]))
        assert loss < 1e-9

    def test_label_out_of_range(self):
        with pytest.raises(DomainError):
            softmax_cross_entropy(np.zeros((1, 3)), np.array([3]))

    @pytest.mark.parametrize("seed", SEEDS)
    def test_gradient_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        logits = rng.normal(size=(3, 4))
        y = rng.integers(0, 4, size=3)
        _, grad = softmax_cross_entropy(logits, y)

        def loss():
            return softmax_cross_entropy(logits, y)[0]

        idx = np.arange(logits.size)
        numeric = central_difference(loss, logits, idx, h=1e-6)
        assert max_rel_error(grad.ravel(), numeric) < 1e-5
