import math

import numpy as np
import pytest

import polu


def test_polu_examples():
    assert polu.polu_forward(-5.0, 2.0) == pytest.approx(-35 / 36)
    assert polu.polu_forward(3.0, 2.0) == 3.0
    assert polu.polu_derivative(0.0, 2.0) == 1.0
    x = np.linspace(-4, 4, 101)
    np.testing.assert_allclose(polu.forward("polu:n=2", x), np.where(x >= 0, x, (1 - x) ** -2 - 1), rtol=1e-12)


def test_spec_objects_and_derivative():
    spec = polu.ActivationSpec.elu(1.0)
    assert str(spec) == "elu:a=1"
    assert polu.ActivationSpec.parse("elu:a=1") == spec
    d = polu.derivative(spec, np.array([-1.0, 2.0]))
    np.testing.assert_allclose(d, [math.exp(-1), 1.0])
    assert polu.saturation_value("polu:n=2") == -1.0
    assert polu.saturation_value("relu") is None


def test_fixed_point():
    assert polu.negative_fixed_point(2.0) == pytest.approx(1 - (1 + math.sqrt(5)) / 2, abs=1e-12)
    assert polu.negative_fixed_point(1.0) is None


def test_curve_shapes():
    x, f, df = polu.curve("relu", -1, 1, 5)
    assert list(x) == [-1.0, -0.5, 0.0, 0.5, 1.0]
    assert list(f) == [0.0, 0.0, 0.0, 0.5, 1.0]
    assert list(df) == [0.0, 0.0, 1.0, 1.0, 1.0]  # x >= 0 takes the right-hand slope


def test_bounds_are_python_ints():
    assert polu.theorem2_bound(2, [4, 4, 4]) == 2816
    assert polu.theorem1_bound(2, 4) == 11
    assert polu.theorem2_bound(16, [16, 32, 1024]) == polu.theorem2_bound(16, [16, 32, 1024])
    with pytest.raises(polu.PoluError):
        polu.theorem2_bound(3, [2])


def test_construction_and_counting():
    tf = polu.solve_trough_params(2.0, 0.0)
    assert tf["a"] == pytest.approx((math.sqrt(5) - 1) / 2, abs=1e-9)
    sc = polu.build_sum_construction(2.0, 2)
    assert sc["residual"] < 1e-6
    r = polu.count_monotonic_regions(lambda t: abs(t), -1, 1, 10001)
    assert r["count"] == 2
    assert polu.line_regions(16, "relu", seed=3)["count"] <= 17


def test_grad_check_and_errors():
    assert polu.grad_check("polu:n=1.5")["passed"]
    with pytest.raises(ValueError):
        polu.forward("polu:n=-1", np.zeros(3))
    with pytest.raises(ValueError):
        polu.preset("svhn_net")


def test_preset_and_missing_data(tmp_path):
    cfg = polu.preset("mnist_2c2d")
    assert cfg["batch_size"] == 128 and cfg["epochs"] == 30
    with pytest.raises(FileNotFoundError):
        polu.train({"preset": "mnist_2c2d", "epochs": 1}, data_dir=str(tmp_path))


def test_mnist_arrays():
    root = polu.data_root() / "mnist"
    if not root.exists():
        pytest.skip("MNIST not present")
    (xtr, ytr), (xte, yte) = polu.load_mnist(root)
    assert xtr.shape == (60000, 28, 28, 1) and xte.shape == (10000, 28, 28, 1)
    assert list(yte[:5]) == [7, 2, 1, 0, 4]
    assert np.bincount(ytr).size == 10
