import numpy as np
import pytest

from scourwatch.errors import TrainingDiverged
from scourwatch.neural.optim import Adam, RmsProp, Sgdm, clip_global_norm, make_optimizer


class TestAdam:
    def test_first_step_hand_trace(self):
        # f(w) = w^2 at w=1: g=2, m_hat=2, v_hat=4, update ~= lr
        lr = 1e-3
        opt = Adam(lr=lr)
        params = {"w": np.array([1.0])}
        opt.step(params, {"w": np.array([2.0])})
        s = opt.state["w"]
        assert s["m"][0] / (1 - 0.9) == pytest.approx(2.0)
        assert s["v"][0] / (1 - 0.999) == pytest.approx(4.0)
        expected = 1.0 - lr * 2.0 / (2.0 + 1e-8)
        assert params["w"][0] == pytest.approx(expected, abs=1e-12)
        assert params["w"][0] == pytest.approx(0.999, abs=1e-8)

    def test_zero_gradient_no_change(self):
        for algo in ("adam", "sgdm", "rmsprop"):
            opt = make_optimizer(algo, 1e-2)
            params = {"w": np.array([3.0, -1.0])}
            opt.step(params, {"w": np.zeros(2)})
            np.testing.assert_array_equal(params["w"], [3.0, -1.0])

    def test_nonfinite_gradient_raises(self):
        opt = Adam()
        with pytest.raises(TrainingDiverged):
            opt.step({"w": np.array([1.0])}, {"w": np.array([np.nan])})


class TestSgdm:
    def test_two_step_displacement(self):
        lr, mom, g = 0.1, 0.9, 2.0
        opt = Sgdm(lr=lr, momentum=mom)
        params = {"w": np.array([0.0])}
        opt.step(params, {"w": np.array([g])})
        first = params["w"][0]
        assert first == pytest.approx(-lr * g)
        opt.step(params, {"w": np.array([g])})
        second_disp = params["w"][0] - first
        assert second_disp == pytest.approx(-lr * g * (1 + mom))


class TestRmsProp:
    def test_first_step(self):
        lr = 0.01
        opt = RmsProp(lr=lr, rho=0.9)
        params = {"w": np.array([1.0])}
        g = 2.0
        opt.step(params, {"w": np.array([g])})
        v = 0.1 * g * g
        assert params["w"][0] == pytest.approx(1.0 - lr * g / (np.sqrt(v) + 1e-8))


class TestConvergence:
    def test_all_optimizers_minimize_quadratic(self):
        # rmsprop takes near-sign steps, so its floor sits around lr/2
        for algo in ("adam", "sgdm", "rmsprop"):
            opt = make_optimizer(algo, 0.05)
            params = {"w": np.array([5.0])}
            for _ in range(1000):
                opt.step(params, {"w": 2.0 * params["w"]})
            assert abs(params["w"][0]) < 0.05, algo


class TestClipping:
    def test_norm_scaled_down(self):
        grads = {"a": np.array([3.0]), "b": np.array([4.0])}
        total = clip_global_norm(grads, 1.0)
        assert total == pytest.approx(5.0)
        clipped = np.sqrt(grads["a"][0] ** 2 + grads["b"][0] ** 2)
        assert clipped == pytest.approx(1.0)

    def test_small_gradients_untouched(self):
        grads = {"a": np.array([0.3])}
        clip_global_norm(grads, 5.0)
        assert grads["a"][0] == 0.3

    def test_zero_max_norm_disables(self):
        grads = {"a": np.array([100.0])}
        clip_global_norm(grads, 0.0)
        assert grads["a"][0] == 100.0
