import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from splmotion.gradcore import (
    CheckpointError,
    GradCheckPrecondition,
    GRUCell,
    LrSchedule,
    LSTMCell,
    NonFiniteGradientError,
    ParameterStore,
    ShapeError,
    Tape,
    Tensor,
    adam_step,
    backward,
    dense,
    grad_check,
    gru_step,
    load_checkpoint,
    lstm_step,
    ops,
    save_checkpoint,
)
from splmotion.gradcore.gradcheck import relative_error


def sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x))


class TestPrimitives:
    def test_matmul_shape(self):
        assert ops.matmul(np.ones((2, 3)), np.ones((3, 4))).shape == (2, 4)

    def test_matmul_mismatch_names_op(self):
        with pytest.raises(ShapeError, match=r"matmul.*\(2, 3\).*\(4, 4\)"):
            ops.matmul(np.ones((2, 3)), np.ones((4, 4)))

    @pytest.mark.parametrize("op", [ops.add, ops.sub, ops.mul])
    def test_elementwise_mismatch(self, op):
        with pytest.raises(ShapeError):
            op(np.ones((2, 3)), np.ones((3, 2)))

    def test_relu(self):
        np.testing.assert_array_equal(ops.relu(np.array([-1.0, 0.0, 2.0])).data, [0.0, 0.0, 2.0])

    def test_dropout_rate_zero_is_identity(self):
        x = Tensor(np.arange(6.0).reshape(2, 3))
        assert ops.dropout(x, 0.0, np.random.default_rng(0)) is x

    def test_dropout_eval_is_identity(self):
        x = Tensor(np.arange(6.0).reshape(2, 3))
        assert ops.dropout(x, 0.5, np.random.default_rng(0), training=False) is x

    def test_concat_and_slice(self):
        a, b = np.ones((2, 2)), np.zeros((2, 3))
        c = ops.concat([a, b])
        assert c.shape == (2, 5)
        np.testing.assert_array_equal(ops.slice_last(c, 2, 5).data, b)

    def test_no_tape_records_nothing(self):
        w = Tensor(np.ones((2, 2)), requires_grad=True)
        with Tape() as tape:
            ops.matmul(np.ones((1, 2)), np.ones((2, 2)))
        assert len(tape) == 0
        with Tape() as tape:
            ops.matmul(np.ones((1, 2)), w)
        assert len(tape) == 1

    def test_sigmoid_stable_at_extremes(self):
        y = ops.sigmoid(np.array([-800.0, 0.0, 800.0])).data
        np.testing.assert_allclose(y, [0.0, 0.5, 1.0])


class TestDropoutStatistics:
    @pytest.mark.parametrize("rate", [0.1, 0.5])
    def test_fraction_and_scaling(self, rate):
        n = 100_000
        y = ops.dropout(np.ones((1, n)), rate, np.random.default_rng(7)).data
        zeros = int(np.sum(y == 0.0))
        observed = np.array([zeros, n - zeros])
        expected = np.array([rate * n, (1 - rate) * n])
        # chi-squared goodness of fit with 1 degree of freedom; 10.83 is the 0.1% critical value
        chi2 = np.sum((observed - expected) ** 2 / expected)
        assert chi2 < 10.83
        np.testing.assert_allclose(y[y != 0.0], 1.0 / (1.0 - rate))

    def test_bad_rate(self):
        with pytest.raises(ValueError):
            ops.dropout(np.ones((1, 3)), 1.0, np.random.default_rng(0))


class TestBackward:
    def test_linear_case(self):
        rng = np.random.default_rng(0)
        w = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        x = rng.normal(size=(1, 3))
        with Tape() as tape:
            loss = ops.sum(ops.matmul(x, w))
        g = backward(tape, loss)[w]
        np.testing.assert_allclose(g, np.tile(x.T, (1, 4)))

    def test_non_scalar_rejected(self):
        w = Tensor(np.ones((2, 2)), requires_grad=True)
        with Tape() as tape:
            out = ops.matmul(np.ones((1, 2)), w)
        with pytest.raises(ShapeError, match="scalar"):
            backward(tape, out)

    def test_unreachable_gets_zero(self):
        store = ParameterStore(0)
        a = store.get_or_create("a", (2, 2))
        store.get_or_create("b", (2, 2))
        with Tape() as tape:
            loss = ops.sum(ops.matmul(np.ones((1, 2)), a))
        grads = store.collect(backward(tape, loss))
        np.testing.assert_array_equal(grads["b"], np.zeros((2, 2)))
        assert np.any(grads["a"] != 0)

    def test_shared_use_accumulates(self):
        w = Tensor(np.array([[2.0]]), requires_grad=True)
        with Tape() as tape:
            loss = ops.sum(ops.mul(w, w))
        np.testing.assert_allclose(backward(tape, loss)[w], [[4.0]])

    def test_relu_net_matches_finite_differences(self):
        rng = np.random.default_rng(1)
        store = ParameterStore(1)
        w = store.add("w", rng.normal(size=(4, 5)))
        x = rng.normal(size=(3, 4))
        pre = x @ w.data
        assert np.min(np.abs(pre)) > 1e-3

        report = grad_check(lambda: ops.sum(ops.relu(ops.matmul(x, w))), store)
        assert report.ok and report.max_error < 1e-4

    def test_two_layer_tanh(self):
        rng = np.random.default_rng(2)
        store = ParameterStore(2)
        l1, l2 = dense(store, "l1", 4, 6), dense(store, "l2", 6, 3)
        x = rng.normal(size=(5, 4))
        report = grad_check(lambda: ops.mean(ops.square(l2(ops.tanh(l1(x))))), store)
        assert report.ok, report.errors

    @settings(max_examples=25, deadline=None)
    @given(st.integers(1, 8), st.integers(1, 8), st.integers(1, 8), st.integers(0, 10_000))
    def test_every_primitive_chain(self, b, i, o, seed):
        rng = np.random.default_rng(seed)
        store = ParameterStore(seed)
        w = store.add("w", rng.normal(size=(i, o)))
        v = store.add("v", rng.normal(size=(b, o)))
        bias = store.add("bias", rng.normal(size=(o,)))
        x = rng.normal(size=(b, i))

        def fn():
            h = ops.bias_add(ops.matmul(x, w), bias)
            s = ops.sigmoid(h)
            t = ops.tanh(ops.sub(h, v))
            cat = ops.concat([ops.mul(s, t), ops.scale(v, 0.5)])
            return ops.add(ops.sum(ops.square(ops.slice_last(cat, 0, o))), ops.mean(cat))

        report = grad_check(fn, store)
        assert report.max_error < 1e-4, report.errors


class TestGradCheck:
    def test_linear_is_tight(self):
        rng = np.random.default_rng(3)
        store = ParameterStore(3)
        w = store.add("w", rng.normal(size=(3, 2)))
        x = rng.normal(size=(4, 3))
        assert grad_check(lambda: ops.sum(ops.matmul(x, w)), store).max_error < 1e-10

    def test_dropout_rejected(self):
        store = ParameterStore(0)
        store.get_or_create("w", (2, 2))
        with pytest.raises(GradCheckPrecondition):
            grad_check(lambda: None, store, uses_dropout=True)

    def test_relative_error_definition(self):
        assert relative_error(np.array([1.0, 2.0]), np.array([1.0, 2.2])) == pytest.approx(0.2 / 2.2)
        assert relative_error(np.zeros(3), np.zeros(3)) == 0.0


class TestDense:
    def test_zero_weights(self):
        store = ParameterStore(0)
        f = dense(store, "d", 3, 2)
        store.zero_()
        np.testing.assert_array_equal(f(Tensor(np.ones((4, 3)))).data, np.zeros((4, 2)))

    def test_identity_weights(self):
        store = ParameterStore(0)
        f = dense(store, "d", 3, 3)
        store["d/w"].data = np.eye(3)
        x = np.random.default_rng(4).normal(size=(2, 3))
        np.testing.assert_array_equal(f(Tensor(x)).data, x)

    def test_width_checked(self):
        f = dense(ParameterStore(0), "d", 3, 3)
        with pytest.raises(ShapeError):
            f(Tensor(np.ones((1, 4))))

    def test_glorot_bounds(self):
        store = ParameterStore(5)
        w = store.get_or_create("w", (30, 50)).data
        assert np.abs(w).max() <= math.sqrt(6 / 80)
        assert np.all(store.get_or_create("b", (50,), init="zeros").data == 0)


class TestRecurrentCells:
    def test_lstm_zero_weights_scalar(self):
        store = ParameterStore(0)
        c0 = 0.8
        h, c = lstm_step(store, Tensor([[0.3]]), Tensor([[0.1]]), Tensor([[c0]]))
        store.zero_()
        h, c = lstm_step(store, Tensor([[0.3]]), Tensor([[0.1]]), Tensor([[c0]]))
        assert c.data[0, 0] == pytest.approx(0.5 * c0, abs=1e-15)
        assert h.data[0, 0] == pytest.approx(0.5 * math.tanh(0.5 * c0), abs=1e-15)

    def test_lstm_known_weights_scalar(self):
        store = ParameterStore(0)
        cell = LSTMCell(store, "cell", 1, 1)
        # rows: [x, h]; columns: i, f, g, o
        store["cell/w"].data = np.array([[0.5, -0.3, 0.8, 0.2], [0.1, 0.4, -0.6, 0.7]])
        store["cell/b"].data = np.array([0.05, 0.5, -0.1, 0.0])
        xs = [0.4, -1.0, 0.7]
        h, c = 0.0, 0.0
        state = cell.zero_state(1)
        for x in xs:
            i = sigmoid(0.5 * x + 0.1 * h + 0.05)
            f = sigmoid(-0.3 * x + 0.4 * h + 0.5)
            g = math.tanh(0.8 * x - 0.6 * h - 0.1)
            o = sigmoid(0.2 * x + 0.7 * h)
            c = f * c + i * g
            h = o * math.tanh(c)
            out, state = cell(Tensor([[x]]), state)
            assert out.data[0, 0] == pytest.approx(h, abs=1e-14)
            assert state[1].data[0, 0] == pytest.approx(c, abs=1e-14)

    def test_gru_known_weights_scalar(self):
        store = ParameterStore(0)
        cell = GRUCell(store, "cell", 1, 1)
        store["cell/w_gates"].data = np.array([[0.3, -0.5], [0.9, 0.2]])  # columns r, z
        store["cell/b_gates"].data = np.array([0.1, -0.2])
        store["cell/w_cand"].data = np.array([[0.7], [-0.4]])
        store["cell/b_cand"].data = np.array([0.05])
        h = 0.2
        state = (Tensor([[h]]),)
        for x in [1.0, -0.5, 0.25]:
            r = sigmoid(0.3 * x + 0.9 * h + 0.1)
            z = sigmoid(-0.5 * x + 0.2 * h - 0.2)
            n = math.tanh(0.7 * x - 0.4 * (r * h) + 0.05)
            h = (1 - z) * n + z * h
            out, state = cell(Tensor([[x]]), state)
            assert out.data[0, 0] == pytest.approx(h, abs=1e-14)

    def test_gru_step_helper(self):
        store = ParameterStore(0)
        out = gru_step(store, Tensor(np.ones((2, 3))), Tensor(np.zeros((2, 4))))
        assert out.shape == (2, 4)

    @pytest.mark.parametrize("kind", ["lstm", "gru"])
    def test_three_unrolled_steps_gradient(self, kind):
        rng = np.random.default_rng(6)
        store = ParameterStore(6)
        cls = LSTMCell if kind == "lstm" else GRUCell
        cell = cls(store, "cell", 3, 4)
        for name in store:
            store[name].data = rng.normal(scale=0.5, size=store[name].shape)
        xs = rng.normal(size=(3, 2, 3))

        def fn():
            state = cell.zero_state(2)
            total = None
            for x in xs:
                h, state = cell(Tensor(x), state)
                term = ops.sum(ops.square(h))
                total = term if total is None else ops.add(total, term)
            return total

        report = grad_check(fn, store)
        assert report.max_error < 1e-4, report.errors

    def test_dimension_mismatch(self):
        cell = LSTMCell(ParameterStore(0), "cell", 3, 4)
        with pytest.raises(ShapeError):
            cell(Tensor(np.ones((1, 2))), cell.zero_state(1))


class TestAdam:
    def test_schedule_staircase_values(self):
        s = LrSchedule(1e-3, 0.98, 1000)
        assert s.rate(0) == 1e-3
        assert s.rate(999) == 1e-3
        assert s.rate(1000) == pytest.approx(9.8e-4, rel=1e-15)
        assert s.rate(2500) == pytest.approx(1e-3 * 0.98**2, rel=1e-15)

    @pytest.mark.parametrize("bad", [dict(base=0.0), dict(factor=0.0), dict(factor=1.5), dict(interval=0)])
    def test_schedule_validation(self, bad):
        with pytest.raises(ValueError):
            LrSchedule(**bad)

    def test_scalar_oracle(self):
        store = ParameterStore(0)
        p = store.add("p", np.array(0.7))
        sched = LrSchedule(1e-3, 0.98, 2)
        m = v = 0.0
        theta = 0.7
        gs = [1.0, 1.0, -0.5, 2.0, 0.3]
        for t, g in enumerate(gs, start=1):
            lr = 1e-3 * 0.98 ** ((t - 1) // 2)
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            theta -= lr * (m / (1 - 0.9**t)) / (math.sqrt(v / (1 - 0.999**t)) + 1e-8)
            adam_step(store, {"p": np.array(g)}, sched)
            assert float(p.data) == pytest.approx(theta, abs=1e-12)
        assert store.step == len(gs)

    def test_unit_gradient_moves_by_rate(self):
        store = ParameterStore(0)
        p = store.add("p", np.array(1.0))
        adam_step(store, {"p": np.array(1.0)}, LrSchedule())
        assert 1.0 - float(p.data) == pytest.approx(1e-3, rel=1e-6)

    @pytest.mark.parametrize("bad", [np.nan, np.inf])
    def test_non_finite_halts(self, bad):
        store = ParameterStore(0)
        p = store.add("p", np.array([1.0, 2.0]))
        store.step = 17
        with pytest.raises(NonFiniteGradientError) as err:
            adam_step(store, {"p": np.array([0.1, bad])}, LrSchedule())
        assert err.value.step == 17 and err.value.name == "p"
        np.testing.assert_array_equal(p.data, [1.0, 2.0])

    def test_determinism(self):
        def run():
            store = ParameterStore(11)
            f = dense(store, "d", 4, 3)
            data_rng = np.random.default_rng(12)
            for _ in range(20):
                x = data_rng.normal(size=(5, 4))
                with Tape() as tape:
                    loss = ops.mean(ops.square(ops.dropout(f(Tensor(x)), 0.2, store.rng)))
                adam_step(store, store.collect(backward(tape, loss)), LrSchedule())
            return store.state_dict()

        a, b = run(), run()
        for k in a:
            assert a[k].tobytes() == b[k].tobytes()


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(13)
        tensors = {"a/w": rng.normal(size=(3, 4)), "b": rng.normal(size=(5,)), "s": np.array(np.pi)}
        path = tmp_path / "ck.bin"
        save_checkpoint(path, tensors, {"note": "x"})
        header, back = load_checkpoint(path)
        assert header == {"note": "x"}
        assert set(back) == set(tensors)
        for k in tensors:
            assert back[k].shape == tensors[k].shape
            assert back[k].tobytes() == tensors[k].tobytes()

    def test_layout(self, tmp_path):
        path = tmp_path / "ck.bin"
        save_checkpoint(path, {"w": np.array([[1.5, -2.0]])}, {})
        raw = path.read_bytes()
        assert raw[:4] == b"SPLC"
        version, hlen = struct.unpack("<II", raw[4:12])
        assert version == 1
        pos = 12 + hlen
        (count,) = struct.unpack("<I", raw[pos : pos + 4])
        assert count == 1
        assert raw[-16:] == struct.pack("<2d", 1.5, -2.0)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "ck.bin"
        path.write_bytes(b"NOPE" + bytes(20))
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_truncated(self, tmp_path):
        path = tmp_path / "ck.bin"
        save_checkpoint(path, {"w": np.ones((4, 4))}, {})
        path.write_bytes(path.read_bytes()[:-3])
        with pytest.raises(CheckpointError, match="truncated"):
            load_checkpoint(path)

    def test_trailing_bytes(self, tmp_path):
        path = tmp_path / "ck.bin"
        save_checkpoint(path, {"w": np.ones(2)}, {})
        path.write_bytes(path.read_bytes() + b"\0")
        with pytest.raises(CheckpointError, match="trailing"):
            load_checkpoint(path)

    def test_store_load_strict(self):
        store = ParameterStore(0)
        store.get_or_create("w", (2, 2))
        with pytest.raises(CheckpointError):
            store.load_state_dict({"other": np.ones((2, 2))})
        with pytest.raises(CheckpointError):
            store.load_state_dict({"w": np.ones((3, 2))})
