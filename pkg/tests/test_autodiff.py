"""Unit tests for the tensor engine: forward values against hand/library
references, backward passes against central finite differences."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from inquest import autodiff as ad
from inquest.autodiff import Tape, Tensor
from inquest.optim import Adam, Sgd, clip_global_norm

from helpers import assert_grads_close, numeric_grad


def _check_op(build, arrays, seed_shapes=None):
    """Gradient-check ``build(tensors) -> scalar Tensor`` against FD."""
    tensors = [ad.parameter(a) for a in arrays]
    with Tape() as tape:
        loss = build(tensors)
    tape.backward(loss)
    analytic = [t.grad for t in tensors]

    def forward():
        fresh = [Tensor(a) for a in arrays]
        return float(build(fresh).data)

    numeric = numeric_grad(forward, arrays)
    assert_grads_close(analytic, numeric)


class TestMatmul:
    def test_identity(self):
        a = Tensor(np.eye(2))
        b = Tensor([[1.0, 2.0], [3.0, 4.0]])
        assert np.array_equal(ad.matmul(a, b).data, b.data)

    def test_basis_selection(self):
        out = ad.matmul(Tensor([[1.0, 0.0]]), Tensor([[5.0], [7.0]]))
        assert out.data.tolist() == [[5.0]]

    def test_shape_error_names_both_shapes(self):
        with pytest.raises(ad.ShapeError) as err:
            ad.matmul(Tensor(np.zeros((3, 4))), Tensor(np.zeros((3, 2))))
        assert "(3, 4)" in str(err.value) and "(3, 2)" in str(err.value)

    def test_grad_of_sum_is_ones_times_bT(self):
        rng = np.random.default_rng(3)
        a = rng.normal(size=(3, 4))
        b = rng.normal(size=(4, 2))
        ta = ad.parameter(a)
        with Tape() as tape:
            loss = ad.sum_all(ad.matmul(ta, Tensor(b)))
        tape.backward(loss)
        assert np.allclose(ta.grad, np.ones((3, 2)) @ b.T)
        _check_op(lambda ts: ad.sum_all(ad.matmul(ts[0], ts[1])), [a, b])


class TestSoftmax:
    def test_symmetry(self):
        out = ad.softmax(Tensor([0.0, 0.0, 0.0]), axis=0)
        assert np.allclose(out.data, [1 / 3] * 3)

    def test_saturation_no_overflow(self):
        out = ad.softmax(Tensor([1000.0, 0.0]), axis=0)
        assert np.all(np.isfinite(out.data))
        assert out.data[0] == pytest.approx(1.0)
        assert out.data[1] == pytest.approx(0.0, abs=1e-300)

    def test_direct_evaluation(self):
        out = ad.softmax(Tensor([1.0, 2.0, 3.0]), axis=0)
        e = np.exp([1.0, 2.0, 3.0])
        assert np.allclose(out.data, e / e.sum(), atol=1e-12)
        assert out.data[0] == pytest.approx(0.09003057, abs=1e-7)
        assert out.data[1] == pytest.approx(0.24472847, abs=1e-7)
        assert out.data[2] == pytest.approx(0.66524096, abs=1e-7)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_rows_sum_to_one(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.normal(scale=rng.uniform(0.1, 50), size=(4, 5))
        out = ad.softmax(Tensor(x), axis=1)
        assert np.all(out.data >= 0)
        assert np.allclose(out.data.sum(axis=1), 1.0, atol=1e-12)

    def test_grad(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(3, 4))
        w = rng.normal(size=(3, 4))  # fixed projection so the loss is non-trivial
        _check_op(
            lambda ts: ad.sum_all(ad.mul(ad.softmax(ts[0], axis=1), Tensor(w))), [x]
        )

    def test_groups_matches_per_game_softmax(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(6, 2))
        grouped = ad.softmax_groups(Tensor(x), 3)
        for b in range(2):
            block = ad.softmax(Tensor(x[3 * b : 3 * b + 3]), axis=0)
            assert np.allclose(grouped.data[3 * b : 3 * b + 3], block.data)

    def test_groups_grad(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=(6, 2))
        w = rng.normal(size=(6, 2))
        _check_op(
            lambda ts: ad.sum_all(ad.mul(ad.softmax_groups(ts[0], 3), Tensor(w))), [x]
        )


class TestElementwise:
    def test_self_difference_is_zero(self):
        rng = np.random.default_rng(0)
        a = Tensor(rng.normal(size=(3, 2)))
        out = ad.mul(a, ad.sub(a, a))
        assert np.array_equal(out.data, np.zeros((3, 2)))

    def test_row_broadcast_hand_expansion(self):
        out = ad.mul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([10.0, 100.0]))
        assert out.data.tolist() == [[10.0, 200.0], [30.0, 400.0]]

    def test_add_zero_identity(self):
        a = np.array([[1.5, -2.0], [0.0, 3.0]])
        out = ad.add(Tensor(a), 0.0)
        assert np.array_equal(out.data, a)

    def test_incompatible_shapes(self):
        with pytest.raises(ad.ShapeError):
            ad.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 2))))

    @pytest.mark.parametrize("op", [ad.add, ad.sub, ad.mul, ad.div])
    @pytest.mark.parametrize("b_shape", [(4, 3), (3,), (4, 1), ()])
    def test_broadcast_grads(self, op, b_shape):
        rng = np.random.default_rng(8)
        a = rng.uniform(0.5, 1.5, size=(4, 3))
        b = rng.uniform(0.5, 1.5, size=b_shape)
        w = rng.normal(size=(4, 3))
        _check_op(lambda ts: ad.sum_all(ad.mul(op(ts[0], ts[1]), Tensor(w))), [a, b])


class TestActivations:
    def test_fixed_points(self):
        assert ad.tanh(Tensor(0.0)).data == 0.0
        assert ad.swish(Tensor(0.0)).data == 0.0
        assert ad.tanh(Tensor(1.0)).data == pytest.approx(0.76159, abs=1e-5)
        assert ad.tanh(Tensor(1.0)).data == pytest.approx(math.tanh(1.0), abs=1e-15)
        assert ad.sigmoid(Tensor(0.0)).data == 0.5

    def test_sigmoid_saturates_without_overflow(self):
        out = ad.sigmoid(Tensor([-1000.0, 1000.0]))
        assert np.all(np.isfinite(out.data))
        assert np.allclose(out.data, [0.0, 1.0])

    @pytest.mark.parametrize("fn", [ad.tanh, ad.sigmoid, ad.swish])
    def test_grads(self, fn):
        rng = np.random.default_rng(9)
        x = rng.normal(size=(3, 3))
        w = rng.normal(size=(3, 3))
        _check_op(lambda ts: ad.sum_all(ad.mul(fn(ts[0]), Tensor(w))), [x])


class TestLstmCell:
    def _params(self, rng, d_in, hid, scale=0.5):
        return {
            "w_x": rng.normal(scale=scale, size=(d_in, 4 * hid)),
            "w_h": rng.normal(scale=scale, size=(hid, 4 * hid)),
            "b": rng.normal(scale=scale, size=(4 * hid,)),
        }

    def test_all_zero(self):
        d_in, hid = 3, 2
        zeros = {
            "w_x": np.zeros((d_in, 4 * hid)),
            "w_h": np.zeros((hid, 4 * hid)),
            "b": np.zeros(4 * hid),
        }
        h, c = ad.lstm_cell(
            Tensor(np.zeros((1, d_in))),
            Tensor(np.zeros((1, hid))),
            Tensor(np.zeros((1, hid))),
            Tensor(zeros["w_x"]),
            Tensor(zeros["w_h"]),
            Tensor(zeros["b"]),
        )
        assert np.array_equal(h.data, np.zeros((1, hid)))
        assert np.array_equal(c.data, np.zeros((1, hid)))

    def test_saturated_forget_gate_preserves_cell(self):
        d_in, hid = 3, 2
        b = np.zeros(4 * hid)
        b[hid : 2 * hid] = 50.0  # forget gate wide open
        c0 = np.array([[0.3, -0.7]])
        h, c = ad.lstm_cell(
            Tensor(np.zeros((1, d_in))),
            Tensor(np.zeros((1, hid))),
            Tensor(c0),
            Tensor(np.zeros((d_in, 4 * hid))),
            Tensor(np.zeros((hid, 4 * hid))),
            Tensor(b),
        )
        assert np.allclose(c.data, c0, atol=1e-12)

    def test_grad_every_weight(self):
        rng = np.random.default_rng(10)
        d_in, hid, bsz = 3, 2, 2
        p = self._params(rng, d_in, hid)
        x = rng.normal(size=(bsz, d_in))
        h0 = rng.normal(size=(bsz, hid))
        c0 = rng.normal(size=(bsz, hid))

        def build(ts):
            h, _ = ad.lstm_cell(ts[0], ts[1], ts[2], ts[3], ts[4], ts[5])
            return ad.sum_all(ad.mul(h, h))

        _check_op(build, [x, h0, c0, p["w_x"], p["w_h"], p["b"]])

    def test_chained_cells_match_unrolled_fd(self):
        # backward through k=3 chained steps == FD on the unrolled expression
        rng = np.random.default_rng(11)
        d_in, hid = 2, 2
        p = self._params(rng, d_in, hid)
        xs = rng.normal(size=(3, 1, d_in))

        def build(ts):
            h = Tensor(np.zeros((1, hid)))
            c = Tensor(np.zeros((1, hid)))
            for k in range(3):
                h, c = ad.lstm_cell(Tensor(xs[k]), h, c, ts[0], ts[1], ts[2])
            return ad.sum_all(ad.mul(h, h))

        _check_op(build, [p["w_x"], p["w_h"], p["b"]])

    def test_shape_mismatch(self):
        with pytest.raises(ad.ShapeError):
            ad.lstm_cell(
                Tensor(np.zeros((1, 3))),
                Tensor(np.zeros((1, 2))),
                Tensor(np.zeros((1, 2))),
                Tensor(np.zeros((3, 8))),
                Tensor(np.zeros((2, 7))),  # wrong
                Tensor(np.zeros(8)),
            )


class TestCrossEntropy:
    def test_uniform_logits(self):
        out = ad.cross_entropy(Tensor(np.zeros(4)), 2)
        assert float(out.data) == pytest.approx(math.log(4.0), abs=1e-12)

    def test_confident_logit(self):
        out = ad.cross_entropy(Tensor([50.0, 0.0, 0.0]), 0)
        assert float(out.data) == pytest.approx(0.0, abs=1e-12)

    def test_from_softmax_example(self):
        out = ad.cross_entropy(Tensor([1.0, 2.0, 3.0]), 1)
        assert float(out.data) == pytest.approx(1.40760596, abs=1e-7)

    def test_target_out_of_range(self):
        with pytest.raises(IndexError):
            ad.cross_entropy(Tensor([0.0, 1.0]), 2)

    def test_grad(self):
        rng = np.random.default_rng(12)
        x = rng.normal(size=4)
        _check_op(lambda ts: ad.cross_entropy(ts[0], 1), [x])

    def test_nll_rows_grad(self):
        rng = np.random.default_rng(13)
        x = rng.normal(size=(3, 5))
        targets = np.array([0, 3, 2])
        w = rng.normal(size=(3, 1))
        _check_op(
            lambda ts: ad.sum_all(ad.mul(ad.nll_rows(ts[0], targets), Tensor(w))), [x]
        )


class TestBackwardSemantics:
    def test_sum_grad_is_ones(self):
        x = ad.parameter(np.arange(6.0).reshape(2, 3))
        with Tape() as tape:
            loss = ad.sum_all(x)
        tape.backward(loss)
        assert np.array_equal(x.grad, np.ones((2, 3)))

    def test_square_grad(self):
        data = np.array([[1.0, -2.0], [0.5, 3.0]])
        x = ad.parameter(data.copy())
        with Tape() as tape:
            loss = ad.sum_all(ad.mul(x, x))
        tape.backward(loss)
        assert np.allclose(x.grad, 2 * data)

    def test_repeated_backward_accumulates(self):
        x = ad.parameter(np.ones(3))
        with Tape() as tape:
            loss = ad.sum_all(x)
        tape.backward(loss)
        tape.backward(loss)
        assert np.array_equal(x.grad, 2 * np.ones(3))

    def test_non_scalar_root_rejected(self):
        x = ad.parameter(np.ones(3))
        with Tape() as tape:
            y = ad.mul(x, 2.0)
        with pytest.raises(ad.GradError):
            tape.backward(y)

    def test_reuse_of_node_accumulates(self):
        x = ad.parameter(np.array([2.0]))
        with Tape() as tape:
            y = ad.mul(x, x)  # x used twice
            loss = ad.sum_all(ad.add(y, x))
        tape.backward(loss)
        assert np.allclose(x.grad, [5.0])  # 2x + 1

    def test_no_tape_no_recording(self):
        x = ad.parameter(np.ones(3))
        y = ad.mul(x, 3.0)
        assert y.requires_grad is False


class TestStructuralOps:
    def test_concat_split_grad(self):
        rng = np.random.default_rng(14)
        a = rng.normal(size=(2, 3))
        b = rng.normal(size=(2, 2))
        w = rng.normal(size=(2, 5))
        _check_op(
            lambda ts: ad.sum_all(ad.mul(ad.concat([ts[0], ts[1]], axis=1), Tensor(w))),
            [a, b],
        )

    def test_embedding_forward_and_grad(self):
        rng = np.random.default_rng(15)
        table = rng.normal(size=(5, 3))
        ids = np.array([1, 1, 4])
        out = ad.embedding(Tensor(table), ids)
        assert np.array_equal(out.data, table[ids])
        w = rng.normal(size=(3, 3))
        _check_op(lambda ts: ad.sum_all(ad.mul(ad.embedding(ts[0], ids), Tensor(w))), [table])

    def test_embedding_bad_id(self):
        with pytest.raises(IndexError):
            ad.embedding(Tensor(np.zeros((4, 2))), np.array([4]))

    def test_repeat_rows(self):
        x = np.array([[1.0, 2.0], [3.0, 4.0]])
        out = ad.repeat_rows(Tensor(x), 3)
        assert out.data.shape == (6, 2)
        assert np.array_equal(out.data[:3], np.tile(x[0], (3, 1)))
        rng = np.random.default_rng(16)
        w = rng.normal(size=(6, 2))
        _check_op(lambda ts: ad.sum_all(ad.mul(ad.repeat_rows(ts[0], 3), Tensor(w))), [x.copy()])

    def test_clamp_min(self):
        x = np.array([-1.0, 0.5, 2.0])
        out = ad.clamp_min(Tensor(x), 0.0)
        assert out.data.tolist() == [0.0, 0.5, 2.0]
        rng = np.random.default_rng(17)
        w = rng.normal(size=3)
        _check_op(lambda ts: ad.sum_all(ad.mul(ad.clamp_min(ts[0], 0.0), Tensor(w))), [x.copy()])

    def test_sum_axis_transpose_reshape_grads(self):
        rng = np.random.default_rng(18)
        x = rng.normal(size=(3, 4))
        w0 = rng.normal(size=(3, 1))
        _check_op(
            lambda ts: ad.sum_all(ad.mul(ad.sum_axis(ts[0], 1, keepdims=True), Tensor(w0))),
            [x],
        )
        w1 = rng.normal(size=(4, 3))
        _check_op(lambda ts: ad.sum_all(ad.mul(ad.transpose(ts[0]), Tensor(w1))), [x])
        w2 = rng.normal(size=(12,))
        _check_op(lambda ts: ad.sum_all(ad.mul(ad.reshape(ts[0], (12,)), Tensor(w2))), [x])


class TestDeterminism:
    def test_same_seed_bit_identical(self):
        def run():
            rng = np.random.default_rng(123)
            a = Tensor(rng.normal(size=(4, 4)))
            b = Tensor(rng.normal(size=(4, 4)))
            out = ad.softmax(ad.matmul(ad.tanh(a), b), axis=1)
            return out.data.tobytes()

        assert run() == run()


class TestOptimizers:
    def test_sgd_basic(self):
        p = ad.parameter(np.array([1.0]))
        p.grad = np.array([1.0])
        Sgd([p], lr=0.1).step()
        assert p.data[0] == pytest.approx(0.9)
        assert p.grad is None

    def test_zero_grad_no_change(self):
        p = ad.parameter(np.array([1.0, -2.0]))
        p.grad = np.zeros(2)
        opt = Adam([p], lr=0.1)
        opt.step()
        assert np.allclose(p.data, [1.0, -2.0])

    def test_missing_grad_raises(self):
        p = ad.parameter(np.array([1.0]))
        with pytest.raises(ad.GradError):
            Sgd([p], lr=0.1).step()

    def test_adam_first_step_is_signed_lr(self):
        # hand evaluation of the Adam recurrence at t=1:
        # m_hat = g, v_hat = g^2, update = lr * g / (|g| + eps) ~ lr * sign(g)
        p = ad.parameter(np.array([1.0, 1.0]))
        p.grad = np.array([0.4, -0.002])
        Adam([p], lr=0.01).step()
        assert p.data[0] == pytest.approx(1.0 - 0.01, rel=1e-6)
        assert p.data[1] == pytest.approx(1.0 + 0.01, rel=1e-4)

    def test_adam_two_steps_match_hand_recurrence(self):
        lr, b1, b2, eps = 0.05, 0.9, 0.999, 1e-8
        grads = [np.array([0.3]), np.array([-0.1])]
        p = ad.parameter(np.array([0.7]))
        opt = Adam([p], lr=lr)
        x = 0.7
        m = v = 0.0
        for t, g in enumerate(grads, start=1):
            p.grad = g.copy()
            opt.step()
            m = b1 * m + (1 - b1) * g[0]
            v = b2 * v + (1 - b2) * g[0] ** 2
            x -= lr * (m / (1 - b1**t)) / (math.sqrt(v / (1 - b2**t)) + eps)
        assert p.data[0] == pytest.approx(x, rel=1e-12)

    def test_clip_global_norm(self):
        p1 = ad.parameter(np.zeros(2))
        p2 = ad.parameter(np.zeros(2))
        p1.grad = np.array([3.0, 0.0])
        p2.grad = np.array([0.0, 4.0])
        norm = clip_global_norm([p1, p2], 1.0)
        assert norm == pytest.approx(5.0)
        total = math.sqrt(float((p1.grad**2).sum() + (p2.grad**2).sum()))
        assert total == pytest.approx(1.0)
