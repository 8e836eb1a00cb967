"""Neural layers on top of the autograd tensors.

Recurrent cells use the standard formulations (GRU: reset/update gates
with a tanh candidate; LSTM: input/forget/cell/output gates). Gates are
computed from a single combined affine map per cell. All parameters,
biases included, are initialized from U[-0.08, 0.08]; there is no
forget-gate bias offset.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from . import autograd as ag
from .autograd import Tensor

INIT_SCALE = 0.08


class ParamSet:
    """Named, ordered collection of trainable tensors."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, shape, rng: np.random.Generator) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter {name!r}")
        data = rng.uniform(-INIT_SCALE, INIT_SCALE, size=shape)
        t = Tensor(data, requires_grad=True)
        self._params[name] = t
        return t

    def add_value(self, name: str, data) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter {name!r}")
        t = Tensor(np.array(data, dtype=np.float64), requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def names(self):
        return list(self._params)

    def items(self):
        return self._params.items()

    def zero_grad(self):
        for t in self._params.values():
            t.grad = None

    def n_values(self) -> int:
        return sum(t.data.size for t in self._params.values())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self._params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        missing = set(self._params) - set(state)
        extra = set(state) - set(self._params)
        if missing or extra:
            raise ShapeError(f"state mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for k, t in self._params.items():
            arr = np.asarray(state[k], dtype=np.float64)
            if arr.shape != t.data.shape:
                raise ShapeError(f"param {k}: shape {arr.shape} != {t.data.shape}")
            t.data = arr.copy()
            t.grad = None


class Affine:
    """y = W x + b for vector inputs."""

    def __init__(self, params: ParamSet, prefix: str, d_in: int, d_out: int,
                 rng: np.random.Generator):
        self.w = params.add(f"{prefix}.w", (d_out, d_in), rng)
        self.b = params.add(f"{prefix}.b", (d_out,), rng)

    def __call__(self, x: Tensor) -> Tensor:
        return ag.matmul(self.w, x) + self.b


class MLP:
    """One hidden layer with tanh, then affine out."""

    def __init__(self, params: ParamSet, prefix: str, d_in: int, d_hidden: int,
                 d_out: int, rng: np.random.Generator):
        self.hidden = Affine(params, f"{prefix}.hidden", d_in, d_hidden, rng)
        self.out = Affine(params, f"{prefix}.out", d_hidden, d_out, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.out(ag.tanh(self.hidden(x)))


class GRUCell:
    """Single GRU step: h' = (1-z)*h + z*c with reset gate r."""

    def __init__(self, params: ParamSet, prefix: str, d_in: int, d_h: int,
                 rng: np.random.Generator):
        self.d_in, self.d_h = d_in, d_h
        self.w_gates = params.add(f"{prefix}.w_gates", (2 * d_h, d_in + d_h), rng)
        self.b_gates = params.add(f"{prefix}.b_gates", (2 * d_h,), rng)
        self.w_cand = params.add(f"{prefix}.w_cand", (d_h, d_in + d_h), rng)
        self.b_cand = params.add(f"{prefix}.b_cand", (d_h,), rng)

    def __call__(self, x: Tensor, h: Tensor) -> Tensor:
        if x.data.shape != (self.d_in,) or h.data.shape != (self.d_h,):
            raise ShapeError(f"gru_cell got x{x.data.shape}, h{h.data.shape}, "
                             f"expected ({self.d_in},), ({self.d_h},)")
        gates = ag.sigmoid(ag.matmul(self.w_gates, ag.concat([x, h])) + self.b_gates)
        z = ag.narrow(gates, 0, self.d_h)
        r = ag.narrow(gates, self.d_h, self.d_h)
        cand = ag.tanh(ag.matmul(self.w_cand, ag.concat([x, ag.mul(r, h)])) + self.b_cand)
        return ag.add(ag.mul(ag.sub(1.0, z), h), ag.mul(z, cand))

    def zero_state(self) -> Tensor:
        return Tensor(np.zeros(self.d_h))


class LSTMCell:
    """Single LSTM step; returns (h', c')."""

    def __init__(self, params: ParamSet, prefix: str, d_in: int, d_h: int,
                 rng: np.random.Generator):
        self.d_in, self.d_h = d_in, d_h
        self.w = params.add(f"{prefix}.w", (4 * d_h, d_in + d_h), rng)
        self.b = params.add(f"{prefix}.b", (4 * d_h,), rng)

    def __call__(self, x: Tensor, state):
        h, c = state
        pre = ag.matmul(self.w, ag.concat([x, h])) + self.b
        d = self.d_h
        i = ag.sigmoid(ag.narrow(pre, 0, d))
        f = ag.sigmoid(ag.narrow(pre, d, d))
        g = ag.tanh(ag.narrow(pre, 2 * d, d))
        o = ag.sigmoid(ag.narrow(pre, 3 * d, d))
        c_new = ag.add(ag.mul(f, c), ag.mul(i, g))
        h_new = ag.mul(o, ag.tanh(c_new))
        return h_new, c_new

    def zero_state(self):
        return Tensor(np.zeros(self.d_h)), Tensor(np.zeros(self.d_h))


class BiLSTMEncoder:
    """Per-position concatenation of forward and backward LSTM states.

    Output k is [forward state after steps 1..k, backward state after
    steps L..k], i.e. both directions have consumed position k.
    """

    def __init__(self, params: ParamSet, prefix: str, d_in: int, d_h: int,
                 rng: np.random.Generator):
        self.fwd = LSTMCell(params, f"{prefix}.fwd", d_in, d_h, rng)
        self.bwd = LSTMCell(params, f"{prefix}.bwd", d_in, d_h, rng)

    def __call__(self, xs: list[Tensor]) -> list[Tensor]:
        if not xs:
            raise ShapeError("bilstm_encode: empty input sequence")
        state = self.fwd.zero_state()
        fwd_states = []
        for x in xs:
            state = self.fwd(x, state)
            fwd_states.append(state[0])
        state = self.bwd.zero_state()
        bwd_states = [None] * len(xs)
        for k in range(len(xs) - 1, -1, -1):
            state = self.bwd(xs[k], state)
            bwd_states[k] = state[0]
        return [ag.concat([f, b]) for f, b in zip(fwd_states, bwd_states)]


class BiGRULastState:
    """Sequence summary: [last forward GRU state, last backward GRU state]."""

    def __init__(self, params: ParamSet, prefix: str, d_in: int, d_h: int,
                 rng: np.random.Generator):
        self.fwd = GRUCell(params, f"{prefix}.fwd", d_in, d_h, rng)
        self.bwd = GRUCell(params, f"{prefix}.bwd", d_in, d_h, rng)

    def __call__(self, xs: list[Tensor]) -> Tensor:
        if not xs:
            raise ShapeError("bigru encode: empty input sequence")
        h = self.fwd.zero_state()
        for x in xs:
            h = self.fwd(x, h)
        hb = self.bwd.zero_state()
        for x in reversed(xs):
            hb = self.bwd(x, hb)
        return ag.concat([h, hb])


def gru_scan(cell: GRUCell, xs: list[Tensor], h0: Tensor | None = None) -> Tensor:
    """Run a GRU over a sequence, returning the final state.

    An empty sequence returns the (zero) initial state unchanged.
    """
    h = cell.zero_state() if h0 is None else h0
    for x in xs:
        h = cell(x, h)
    return h
