import numpy as np
import pytest

from projsqp import DivisionByZero, Jet2, Tape, ValueJet, backward, jet_propagate
from projsqp import autodiff as ad
from projsqp import model


def scalar_leaf(tape, x):
    return tape.leaf(np.asarray(float(x)))


class TestTapeOps:
    def test_tanh_value_and_local_partial(self):
        tape = Tape()
        x = scalar_leaf(tape, 0.0)
        y = ad.tanh(x)
        assert y.value == 0.0
        (g,) = backward(tape, y)
        assert g == pytest.approx(1.0, abs=1e-15)

    def test_square_value_and_local_partial(self):
        tape = Tape()
        x = scalar_leaf(tape, 3.0)
        y = ad.square(x)
        assert y.value == 9.0
        (g,) = backward(tape, y)
        assert g == pytest.approx(6.0, abs=1e-15)

    def test_composite_vs_finite_differences(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            a0, b0 = rng.standard_normal(2)
            tape = Tape()
            a = scalar_leaf(tape, a0)
            b = scalar_leaf(tape, b0)
            y = ad.tanh(a * b)
            ga, gb = backward(tape, y)
            step = 1e-5
            fd_a = (np.tanh((a0 + step) * b0) - np.tanh((a0 - step) * b0)) / (2 * step)
            fd_b = (np.tanh(a0 * (b0 + step)) - np.tanh(a0 * (b0 - step))) / (2 * step)
            assert abs(ga - fd_a) <= 1e-6 * (1 + abs(fd_a))
            assert abs(gb - fd_b) <= 1e-6 * (1 + abs(fd_b))

    def test_division(self):
        tape = Tape()
        a = scalar_leaf(tape, 3.0)
        b = scalar_leaf(tape, 2.0)
        y = a / b
        assert y.value == pytest.approx(1.5)
        ga, gb = backward(tape, y)
        assert ga == pytest.approx(0.5)
        assert gb == pytest.approx(-0.75)

    def test_division_by_zero_node(self):
        tape = Tape()
        a = scalar_leaf(tape, 1.0)
        b = scalar_leaf(tape, 0.0)
        with pytest.raises(DivisionByZero):
            _ = a / b
        with pytest.raises(DivisionByZero):
            _ = a / 0.0

    def test_mixed_constant_operands(self):
        tape = Tape()
        x = scalar_leaf(tape, 2.0)
        y = 3.0 * x + 1.0 - x / 2.0
        assert y.value == pytest.approx(6.0)
        (g,) = backward(tape, y)
        assert g == pytest.approx(2.5)

    def test_operands_must_share_a_tape(self):
        t1, t2 = Tape(), Tape()
        with pytest.raises(ValueError):
            _ = scalar_leaf(t1, 1.0) + scalar_leaf(t2, 1.0)


class TestBackward:
    def test_identity_leaf(self):
        tape = Tape()
        x = scalar_leaf(tape, 4.2)
        (g,) = backward(tape, x)
        assert g == 1.0

    def test_square_at_three(self):
        tape = Tape()
        x = scalar_leaf(tape, 3.0)
        (g,) = backward(tape, ad.square(x))
        assert g == pytest.approx(6.0)

    def test_untouched_leaf_gets_zeros(self):
        tape = Tape()
        x = scalar_leaf(tape, 1.0)
        z = tape.leaf(np.zeros(3))
        gx, gz = backward(tape, ad.square(x))
        assert gx == pytest.approx(2.0)
        np.testing.assert_array_equal(gz, np.zeros(3))

    def test_mlp_loss_directional_derivatives(self):
        spec = model.MlpSpec((1, 8, 8, 1))
        rng = np.random.default_rng(5)
        theta = model.init_params(spec, rng) + 0.1 * rng.standard_normal(spec.n_params)
        xs = rng.uniform(0, 1, 12)
        targets = rng.standard_normal(12)

        def loss(th):
            pred = model.forward(spec, th, xs[None, :])[0]
            return float(np.mean((pred - targets) ** 2))

        tape = Tape()
        leaves = model.param_leaves(spec, theta, tape)
        pred = model.forward_on_tape(spec, leaves, tape, xs[None, :])
        out = ad.mean(ad.square(ad.sub(pred, tape.constant(targets[None, :]))))
        g = model.grads_to_flat(spec, backward(tape, out))

        step = 1e-5
        for _ in range(50):
            v = rng.standard_normal(spec.n_params)
            v /= np.linalg.norm(v)
            fd = (loss(theta + step * v) - loss(theta - step * v)) / (2 * step)
            assert abs(g @ v - fd) <= 1e-5 * (1 + abs(fd))

    def test_multiple_sweeps_on_one_tape(self):
        tape = Tape()
        x = scalar_leaf(tape, 2.0)
        y = ad.square(x)
        z = ad.square(y)
        (gy,) = backward(tape, y)
        (gz,) = backward(tape, z)
        assert gy == pytest.approx(4.0)
        assert gz == pytest.approx(32.0)  # d(x^4)/dx = 4 x^3


class TestJets:
    def test_identity_network(self):
        # 1-1 net with weight 1, bias 0 realizes u(t) = t
        spec = model.MlpSpec((1, 1))
        theta = np.array([1.0, 0.0])
        tape = Tape()
        leaves = model.param_leaves(spec, theta, tape)
        jet = model.forward_jet(spec, leaves, tape, np.array([0.3, 0.7]))
        np.testing.assert_allclose(jet.val.value[0], [0.3, 0.7], atol=1e-15)
        np.testing.assert_allclose(jet.d1.value[0], [1.0, 1.0], atol=1e-15)
        np.testing.assert_allclose(jet.d2.value[0], [0.0, 0.0], atol=1e-15)

    def test_tanh_jet_at_zero(self):
        # odd function: u(0) = 0, u'(0) = 1, u''(0) = 0
        def fwd(tape, jet):
            return ad.tanh_jet(jet)

        jet = jet_propagate(fwd, Tape(), 0.0)
        assert jet.val.value[0, 0] == 0.0
        assert jet.d1.value[0, 0] == pytest.approx(1.0)
        assert jet.d2.value[0, 0] == pytest.approx(0.0, abs=1e-15)

    def test_random_net_vs_finite_differences(self):
        spec = model.MlpSpec((1, 8, 8, 1))
        rng = np.random.default_rng(9)
        theta = model.init_params(spec, rng) + 0.1 * rng.standard_normal(spec.n_params)
        ts = rng.uniform(0.1, 0.9, 9)
        tape = Tape()
        leaves = model.param_leaves(spec, theta, tape)
        jet = model.forward_jet(spec, leaves, tape, ts)
        step = 1e-4
        up = model.forward(spec, theta, (ts + step)[None, :])[0]
        dn = model.forward(spec, theta, (ts - step)[None, :])[0]
        mid = model.forward(spec, theta, ts[None, :])[0]
        fd1 = (up - dn) / (2 * step)
        fd2 = (up - 2 * mid + dn) / step ** 2
        assert np.abs(jet.d1.value[0] - fd1).max() <= 1e-4 * (1 + np.abs(fd1).max())
        assert np.abs(jet.d2.value[0] - fd2).max() <= 1e-4 * (1 + np.abs(fd2).max())

    def test_jet_d1_matches_reverse_mode_input_derivative(self):
        spec = model.MlpSpec((1, 6, 1))
        rng = np.random.default_rng(10)
        theta = model.init_params(spec, rng) + 0.2 * rng.standard_normal(spec.n_params)
        t0 = 0.37
        tape = Tape()
        leaves = model.param_leaves(spec, theta, tape)
        jet = model.forward_jet(spec, leaves, tape, t0)

        tape2 = Tape()
        t_leaf = tape2.leaf(np.array([[t0]]))
        leaves2 = model.param_leaves(spec, theta, tape2)
        h = t_leaf
        for w, b in leaves2[:-1]:
            h = ad.tanh(ad.affine(w, h, b))
        w, b = leaves2[-1]
        u = ad.affine(w, h, b)
        grads = backward(tape2, ad.pick(u, 0, 0))
        du_dt = grads[0][0, 0]  # t_leaf registered first
        assert abs(jet.d1.value[0, 0] - du_dt) <= 1e-8

    def test_stacked_jets_match_unfused(self):
        spec = model.MlpSpec((1, 8, 8, 1))
        rng = np.random.default_rng(11)
        theta = model.init_params(spec, rng) + 0.1 * rng.standard_normal(spec.n_params)
        ts = rng.uniform(0, 1, 5)
        t1 = Tape()
        jet = model.forward_jet(spec, model.param_leaves(spec, theta, t1), t1, ts)
        t2 = Tape()
        stacked = model.forward_jet_stacked(spec, model.param_leaves(spec, theta, t2), t2, ts)
        np.testing.assert_array_equal(jet.val.value, stacked.value[0])
        np.testing.assert_array_equal(jet.d1.value, stacked.value[1])
        np.testing.assert_array_equal(jet.d2.value, stacked.value[2])


class TestBackwardColumns:
    def test_matches_per_column_sweeps(self):
        spec = model.MlpSpec((1, 8, 8, 1))
        rng = np.random.default_rng(12)
        theta = model.init_params(spec, rng) + 0.1 * rng.standard_normal(spec.n_params)
        ts = rng.uniform(0, 1, 6)

        tape = Tape()
        leaves = model.param_leaves(spec, theta, tape)
        jet = model.forward_jet(spec, leaves, tape, ts)
        resid = ad.lincomb3(jet.d2, jet.d1, jet.val, 1.0, 4.0, 400.0)
        rows_ref = np.array([
            model.grads_to_flat(spec, backward(tape, ad.pick(resid, 0, i)))
            for i in range(6)
        ])

        tape2 = Tape()
        leaves2 = model.param_leaves(spec, theta, tape2)
        stacked = model.forward_jet_stacked(spec, leaves2, tape2, ts)
        resid2 = ad.jet_combine(stacked, 400.0, 4.0, 1.0)
        per_leaf = ad.backward_columns(tape2, resid2)
        rows = np.concatenate([g.reshape(6, -1) for g in per_leaf], axis=1)
        assert np.abs(rows - rows_ref).max() <= 1e-12 * max(1.0, np.abs(rows_ref).max())

    def test_rejects_non_columnwise_graph(self):
        tape = Tape()
        x = tape.leaf(np.ones((2, 3)))
        m = ad.mean(x)
        y = ad.mul(x, m)  # mean couples the columns
        with pytest.raises(ValueError):
            ad.backward_columns(tape, y)


class TestValueJet:
    def test_exp_rules(self):
        t = ValueJet(0.5, 1.0, 0.0)
        j = ((-2.0) * t).exp()
        e = np.exp(-1.0)
        assert j.val == pytest.approx(e)
        assert j.d1 == pytest.approx(-2.0 * e)
        assert j.d2 == pytest.approx(4.0 * e)

    def test_cos_rules(self):
        t = ValueJet(0.3, 1.0, 0.0)
        j = (3.0 * t).cos()
        assert j.val == pytest.approx(np.cos(0.9))
        assert j.d1 == pytest.approx(-3.0 * np.sin(0.9))
        assert j.d2 == pytest.approx(-9.0 * np.cos(0.9))

    def test_product_second_derivative(self):
        # (t^2 via t*t): second derivative 2
        t = ValueJet(1.7, 1.0, 0.0)
        j = t * t
        assert j.val == pytest.approx(1.7 ** 2)
        assert j.d1 == pytest.approx(2 * 1.7)
        assert j.d2 == pytest.approx(2.0)
