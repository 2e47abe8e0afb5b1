import numpy as np
import pytest

from projsqp import DimensionMismatch, MlpSpec, forward, init_params, load_params, save_params
from projsqp import autodiff as ad
from projsqp import model


class TestSpecAndInit:
    def test_count_smallest_net(self):
        spec = MlpSpec((1, 1))
        theta = init_params(spec, 0)
        assert theta.shape == (2,)
        assert theta[1] == 0.0  # bias convention

    def test_same_seed_bit_identical(self):
        spec = MlpSpec((1, 5, 2))
        a = init_params(spec, 1234)
        b = init_params(spec, 1234)
        assert a.tobytes() == b.tobytes()

    def test_param_count_formula(self):
        # widths (1, 32, 32, 32, 1): sum of w_in*w_out + w_out per layer
        widths = (1, 32, 32, 32, 1)
        expected = sum(wi * wo + wo for wi, wo in zip(widths, widths[1:]))
        assert expected == 2209
        assert MlpSpec(widths).n_params == expected
        assert init_params(MlpSpec(widths), 0).shape == (expected,)

    def test_glorot_bounds_and_zero_biases(self):
        spec = MlpSpec((4, 7, 2))
        theta = init_params(spec, 7)
        layers = model.unflatten(spec, theta)
        for (w, b), (wi, wo) in zip(layers, zip(spec.widths, spec.widths[1:])):
            bound = np.sqrt(6.0 / (wi + wo))
            assert np.abs(w).max() <= bound
            np.testing.assert_array_equal(b, 0.0)

    def test_invalid_specs(self):
        with pytest.raises(ValueError):
            MlpSpec((3,))
        with pytest.raises(ValueError):
            MlpSpec((1, 0, 1))


class TestForward:
    def test_zero_params_zero_output(self):
        spec = MlpSpec((2, 6, 3))
        out = forward(spec, np.zeros(spec.n_params), np.array([0.4, -1.0]))
        np.testing.assert_array_equal(out, np.zeros(3))

    def test_affine_net(self):
        spec = MlpSpec((1, 1))
        out = forward(spec, np.array([2.0, 1.0]), np.array([3.0]))
        assert out[0] == pytest.approx(7.0)

    def test_on_tape_equals_off_tape(self):
        spec = MlpSpec((2, 9, 9, 1))
        rng = np.random.default_rng(3)
        theta = init_params(spec, rng) + 0.1 * rng.standard_normal(spec.n_params)
        x = rng.standard_normal((2, 11))
        plain = forward(spec, theta, x)
        tape = ad.Tape()
        leaves = model.param_leaves(spec, theta, tape)
        taped = model.forward_on_tape(spec, leaves, tape, x)
        assert np.abs(plain - taped.value).max() <= 1e-12

    def test_jet_value_component_matches_forward(self):
        spec = MlpSpec((1, 8, 1))
        rng = np.random.default_rng(4)
        theta = init_params(spec, rng)
        ts = rng.uniform(0, 1, 6)
        u0, _, _ = model.forward_jet_values(spec, theta, ts)
        np.testing.assert_allclose(u0, forward(spec, theta, ts[None, :])[0], atol=1e-14)

    def test_input_dimension_checked(self):
        spec = MlpSpec((2, 3, 1))
        with pytest.raises(DimensionMismatch):
            forward(spec, np.zeros(spec.n_params), np.zeros((3, 1)))


class TestFlattening:
    def test_round_trip_exact(self):
        spec = MlpSpec((3, 5, 2))
        rng = np.random.default_rng(5)
        theta = rng.standard_normal(spec.n_params)
        rebuilt = model.flatten(spec, model.unflatten(spec, theta))
        assert rebuilt.tobytes() == theta.tobytes()

    def test_wrong_length_rejected(self):
        with pytest.raises(DimensionMismatch):
            model.unflatten(MlpSpec((2, 2)), np.zeros(5))


class TestContinuity:
    def test_small_parameter_perturbations_stay_small(self):
        spec = MlpSpec((1, 32, 32, 32, 1))
        rng = np.random.default_rng(6)
        theta = init_params(spec, rng)
        x = np.linspace(0, 1, 50)[None, :]
        base = forward(spec, theta, x)
        delta = rng.standard_normal(spec.n_params)
        delta *= 1e-8 / np.linalg.norm(delta)
        moved = forward(spec, theta + delta, x)
        assert np.abs(moved - base).max() <= 1e-4


class TestSerialization:
    def test_round_trip(self, tmp_path):
        spec = MlpSpec((1, 4, 1))
        rng = np.random.default_rng(8)
        theta = init_params(spec, rng)
        path = tmp_path / "params.bin"
        save_params(path, spec, theta)
        spec2, theta2 = load_params(path)
        assert spec2 == spec
        assert theta2.tobytes() == theta.tobytes()

    def test_layout_is_widths_then_doubles(self, tmp_path):
        spec = MlpSpec((1, 1))
        theta = np.array([2.0, -1.0])
        path = tmp_path / "p.bin"
        save_params(path, spec, theta)
        raw = path.read_bytes()
        assert raw[:4] == b"PSQ1"
        assert int.from_bytes(raw[4:8], "little") == 2  # number of widths
        assert int.from_bytes(raw[8:12], "little") == 1
        assert int.from_bytes(raw[12:16], "little") == 1
        np.testing.assert_array_equal(np.frombuffer(raw[16:], dtype="<f8"), theta)

    def test_rejects_foreign_files(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"not a checkpoint")
        with pytest.raises(ValueError):
            load_params(path)
