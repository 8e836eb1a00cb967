"""GRU/LSTM cells and bidirectional encoders against scalar oracles."""

import math

import numpy as np
import pytest

from medqgen.errors import ShapeError
from medqgen.nn import autograd as ag
from medqgen.nn.autograd import Tensor
from medqgen.nn.layers import (Affine, BiGRULastState, BiLSTMEncoder, GRUCell,
                               LSTMCell, MLP, ParamSet)
from medqgen.nn.optim import finite_difference_gradients, max_relative_error

RNG = np.random.default_rng(11)


def make_gru(d_in, d_h, seed=0):
    ps = ParamSet()
    cell = GRUCell(ps, "gru", d_in, d_h, np.random.default_rng(seed))
    return ps, cell


def zero_params(ps):
    for _, t in ps.items():
        t.data[:] = 0.0


def sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x))


def gru_scalar_oracle(x, h, w_gates, b_gates, w_cand, b_cand, d_h):
    """Step-by-step scalar recomputation of one GRU update."""
    xh = list(x) + list(h)
    gates = [sigmoid(sum(w_gates[i][j] * xh[j] for j in range(len(xh))) + b_gates[i])
             for i in range(2 * d_h)]
    z, r = gates[:d_h], gates[d_h:]
    xrh = list(x) + [r[i] * h[i] for i in range(d_h)]
    cand = [math.tanh(sum(w_cand[i][j] * xrh[j] for j in range(len(xrh))) + b_cand[i])
            for i in range(d_h)]
    return [(1.0 - z[i]) * h[i] + z[i] * cand[i] for i in range(d_h)]


def test_gru_all_zero_fixed_point():
    ps, cell = make_gru(3, 4)
    zero_params(ps)
    out = cell(Tensor(np.zeros(3)), Tensor(np.zeros(4)))
    assert np.array_equal(out.data, np.zeros(4))


def test_gru_update_gate_saturation_carries_state():
    # large negative update-gate bias -> z ~ 0 -> output ~ previous state
    ps, cell = make_gru(3, 4, seed=5)
    cell.b_gates.data[:4] = -50.0
    h = RNG.normal(size=4)
    out = cell(Tensor(RNG.normal(size=3)), Tensor(h))
    assert np.max(np.abs(out.data - h)) < 1e-3


def test_gru_matches_scalar_oracle():
    ps, cell = make_gru(2, 3, seed=9)
    x = RNG.normal(size=2)
    h = RNG.normal(size=3)
    out = cell(Tensor(x), Tensor(h)).data
    expected = gru_scalar_oracle(
        x, h, cell.w_gates.data, cell.b_gates.data,
        cell.w_cand.data, cell.b_cand.data, 3)
    assert np.max(np.abs(out - np.array(expected))) < 1e-10


def test_gru_output_bounded_when_state_is():
    ps, cell = make_gru(3, 4, seed=2)
    for _ in range(10):
        out = cell(Tensor(RNG.normal(size=3)),
                   Tensor(RNG.uniform(-0.99, 0.99, size=4)))
        assert (np.abs(out.data) < 1.0).all()


def lstm_scalar_oracle(x, state, w, b, d_h):
    h, c = state
    xh = list(x) + list(h)
    pre = [sum(w[i][j] * xh[j] for j in range(len(xh))) + b[i] for i in range(4 * d_h)]
    i_g = [sigmoid(v) for v in pre[:d_h]]
    f_g = [sigmoid(v) for v in pre[d_h:2 * d_h]]
    g_g = [math.tanh(v) for v in pre[2 * d_h:3 * d_h]]
    o_g = [sigmoid(v) for v in pre[3 * d_h:]]
    c_new = [f_g[k] * c[k] + i_g[k] * g_g[k] for k in range(d_h)]
    h_new = [o_g[k] * math.tanh(c_new[k]) for k in range(d_h)]
    return h_new, c_new


def test_lstm_matches_scalar_oracle():
    ps = ParamSet()
    cell = LSTMCell(ps, "lstm", 2, 3, np.random.default_rng(3))
    x = RNG.normal(size=2)
    h0 = RNG.normal(size=3)
    c0 = RNG.normal(size=3)
    h_new, c_new = cell(Tensor(x), (Tensor(h0), Tensor(c0)))
    eh, ec = lstm_scalar_oracle(x, (h0, c0), cell.w.data, cell.b.data, 3)
    assert np.max(np.abs(h_new.data - eh)) < 1e-10
    assert np.max(np.abs(c_new.data - ec)) < 1e-10


def test_bilstm_length_one():
    ps = ParamSet()
    enc = BiLSTMEncoder(ps, "enc", 2, 3, np.random.default_rng(4))
    x = Tensor(RNG.normal(size=2))
    out = enc([x])[0]
    fwd, _ = enc.fwd(x, enc.fwd.zero_state())
    bwd, _ = enc.bwd(x, enc.bwd.zero_state())
    assert np.array_equal(out.data, np.concatenate([fwd.data, bwd.data]))


def test_bilstm_palindrome_symmetry_with_tied_directions():
    ps = ParamSet()
    enc = BiLSTMEncoder(ps, "enc", 2, 3, np.random.default_rng(6))
    # tie backward params to forward
    enc.bwd.w.data = enc.fwd.w.data.copy()
    enc.bwd.b.data = enc.fwd.b.data.copy()
    a, b = RNG.normal(size=2), RNG.normal(size=2)
    seq = [Tensor(a), Tensor(b), Tensor(a)]  # palindrome
    outs = enc(seq)
    length = len(seq)
    d = 3
    for k in range(length):
        fwd_k = outs[k].data[:d]
        bwd_mirror = outs[length - 1 - k].data[d:]
        assert np.max(np.abs(fwd_k - bwd_mirror)) < 1e-12


def test_bilstm_matches_unrolled_oracle():
    ps = ParamSet()
    enc = BiLSTMEncoder(ps, "enc", 2, 2, np.random.default_rng(8))
    xs = [RNG.normal(size=2) for _ in range(3)]
    outs = enc([Tensor(x) for x in xs])

    h, c = [0.0, 0.0], [0.0, 0.0]
    fwd_states = []
    for x in xs:
        h, c = lstm_scalar_oracle(x, (h, c), enc.fwd.w.data, enc.fwd.b.data, 2)
        fwd_states.append(h)
    h, c = [0.0, 0.0], [0.0, 0.0]
    bwd_states = [None] * 3
    for k in (2, 1, 0):
        h, c = lstm_scalar_oracle(xs[k], (h, c), enc.bwd.w.data, enc.bwd.b.data, 2)
        bwd_states[k] = h
    for k in range(3):
        expected = np.array(fwd_states[k] + bwd_states[k])
        assert np.max(np.abs(outs[k].data - expected)) < 1e-10


def test_bilstm_empty_sequence_rejected():
    ps = ParamSet()
    enc = BiLSTMEncoder(ps, "enc", 2, 3, np.random.default_rng(4))
    with pytest.raises(ShapeError):
        enc([])


def test_bigru_last_state_single_word():
    ps = ParamSet()
    enc = BiGRULastState(ps, "enc", 2, 3, np.random.default_rng(4))
    x = Tensor(RNG.normal(size=2))
    out = enc([x])
    fwd = enc.fwd(x, enc.fwd.zero_state())
    bwd = enc.bwd(x, enc.bwd.zero_state())
    assert np.array_equal(out.data, np.concatenate([fwd.data, bwd.data]))


def test_bigru_zero_params_zero_output():
    ps = ParamSet()
    enc = BiGRULastState(ps, "enc", 2, 3, np.random.default_rng(4))
    zero_params(ps)
    out = enc([Tensor(RNG.normal(size=2)) for _ in range(3)])
    assert np.array_equal(out.data, np.zeros(6))


def layer_gradcheck(ps, loss_fn, tol=1e-4):
    tensors = [t for _, t in ps.items()]
    loss = loss_fn()
    ps.zero_grad()
    loss.backward()
    numeric = finite_difference_gradients(lambda: loss_fn().item(), tensors)
    for t, num in zip(tensors, numeric):
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        assert max_relative_error(analytic, num) <= tol


def test_gradcheck_affine_and_mlp():
    ps = ParamSet()
    rng = np.random.default_rng(12)
    aff = Affine(ps, "aff", 3, 2, rng)
    mlp = MLP(ps, "mlp", 2, 4, 2, rng)
    x = Tensor(RNG.normal(size=3))

    layer_gradcheck(ps, lambda: ag.tsum(ag.square(mlp(aff(x)))))


def test_gradcheck_gru_cell():
    ps, cell = make_gru(2, 3, seed=21)
    x = Tensor(RNG.normal(size=2))
    h = Tensor(RNG.normal(size=3))
    layer_gradcheck(ps, lambda: ag.tsum(ag.square(cell(x, h))))


def test_gradcheck_bilstm():
    ps = ParamSet()
    enc = BiLSTMEncoder(ps, "enc", 2, 2, np.random.default_rng(22))
    xs = [Tensor(RNG.normal(size=2)) for _ in range(3)]

    def loss():
        outs = enc(xs)
        return ag.tsum(ag.square(ag.add_n(outs)))

    layer_gradcheck(ps, loss)


def test_gradcheck_through_input():
    ps, cell = make_gru(2, 2, seed=30)
    x = Tensor(RNG.normal(size=2), requires_grad=True)
    h = Tensor(RNG.normal(size=2), requires_grad=True)

    def loss():
        return ag.tsum(ag.square(cell(x, h)))

    loss_val = loss()
    x.grad = h.grad = None
    ps.zero_grad()
    loss_val.backward()
    numeric = finite_difference_gradients(lambda: loss().item(), [x, h])
    assert max_relative_error(x.grad, numeric[0]) <= 1e-4
    assert max_relative_error(h.grad, numeric[1]) <= 1e-4
