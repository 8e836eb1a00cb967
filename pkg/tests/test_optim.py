"""Adam update and global-norm clipping."""

import numpy as np
import pytest

from medqgen.errors import NumericError
from medqgen.nn.autograd import Tensor
from medqgen.nn.layers import ParamSet
from medqgen.nn.optim import Adam


def make_params(values):
    ps = ParamSet()
    for i, v in enumerate(values):
        ps.add_value(f"p{i}", np.asarray(v, dtype=np.float64))
    return ps


def test_zero_gradient_leaves_everything_unchanged():
    ps = make_params([[1.0, -2.0]])
    opt = Adam(ps, lr=0.01)
    ps["p0"].grad = np.zeros(2)
    opt.step()
    assert np.array_equal(ps["p0"].data, [1.0, -2.0])
    assert np.array_equal(opt.m["p0"], np.zeros(2))
    assert np.array_equal(opt.v["p0"], np.zeros(2))


def test_constant_gradient_moves_opposite_sign():
    ps = make_params([[0.0, 0.0]])
    opt = Adam(ps, lr=0.01)
    g = np.array([0.5, -1.5])
    prev = ps["p0"].data.copy()
    for _ in range(25):
        ps["p0"].grad = g.copy()
        opt.step()
        cur = ps["p0"].data
        assert cur[0] < prev[0]  # positive gradient -> parameter decreases
        assert cur[1] > prev[1]
        prev = cur.copy()


def test_clip_halves_gradient_of_norm_ten():
    # norm-10 gradient with clip 5 -> effective gradient halved before moments
    ps = make_params([[0.0, 0.0]])
    opt = Adam(ps, lr=0.001, clip_norm=5.0)
    g = np.array([6.0, 8.0])  # norm 10
    ps["p0"].grad = g.copy()
    opt.step()
    eff = g / 2.0
    m = 0.1 * eff
    v = 0.001 * eff * eff
    mhat = m / (1 - 0.9)
    vhat = v / (1 - 0.999)
    expected = -0.001 * mhat / (np.sqrt(vhat) + 1e-8)
    assert np.max(np.abs(ps["p0"].data - expected)) < 1e-12
    assert np.max(np.abs(opt.m["p0"] - m)) < 1e-15
    assert np.max(np.abs(opt.v["p0"] - v)) < 1e-15


def test_clip_is_global_across_parameters():
    ps = make_params([[3.0], [4.0]])
    opt = Adam(ps, lr=0.001, clip_norm=5.0)
    ps["p0"].grad = np.array([30.0])
    ps["p1"].grad = np.array([40.0])  # global norm 50 -> scale 0.1
    opt.step()
    assert abs(opt.m["p0"][0] - 0.1 * 3.0) < 1e-15
    assert abs(opt.m["p1"][0] - 0.1 * 4.0) < 1e-15


def test_nonfinite_gradient_aborts_with_parameter_name():
    ps = make_params([[1.0]])
    opt = Adam(ps)
    ps["p0"].grad = np.array([np.nan])
    with pytest.raises(NumericError, match="p0"):
        opt.step()


def test_missing_grad_treated_as_zero():
    ps = make_params([[1.0], [2.0]])
    opt = Adam(ps, lr=0.05)
    ps["p0"].grad = np.array([1.0])
    opt.step()
    assert ps["p1"].data[0] == 2.0
    assert ps["p0"].data[0] != 1.0
