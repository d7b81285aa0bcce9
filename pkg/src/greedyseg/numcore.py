"""Small reverse-mode differentiation engine over numpy arrays.

Every operation accepts either plain ``np.ndarray`` values or :class:`Tensor`
handles. With plain arrays an operation is just the numpy computation (this is
the fast path used by decoding). As soon as one operand is a ``Tensor`` the
operation is recorded on that tensor's :class:`Tape` and a ``Tensor`` is
returned, so the same scoring code serves both inference and training.

Shapes are limited to rank 0 (scalars), 1 (vectors) and 2 (matrices whose
rows are vectors, e.g. a batch of word vectors).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Mapping, Sequence, Union

import numpy as np


class DimensionError(ValueError):
    """Operand shapes do not conform."""


class ContractError(ValueError):
    """A precondition of an operation was violated."""


class Tensor:
    __slots__ = ("value", "tape", "name", "grad")

    def __init__(self, value: np.ndarray, tape: Tape | None = None, name: str | None = None):
        value = np.asarray(value, dtype=np.float64)
        if value.ndim > 2:
            raise DimensionError(f"rank {value.ndim} tensor not supported: shape {value.shape}")
        self.value = value
        self.tape = tape
        self.name = name
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __len__(self) -> int:
        return len(self.value)

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape})"


ArrayLike = Union[np.ndarray, Tensor]


@dataclass
class Record:
    op: str
    inputs: tuple[Tensor | None, ...]
    outputs: tuple[Tensor, ...]
    vjp: Callable[..., tuple[np.ndarray | None, ...]]


class Tape:
    """Ordered log of primitive operations.

    Records are appended in execution order, which is a topological order of
    the computation graph; :func:`backward` replays them in exact reverse.
    """

    def __init__(self) -> None:
        self.records: list[Record] = []
        self.leaves: dict[str, Tensor] = {}

    def __len__(self) -> int:
        return len(self.records)

    def watch(self, params: Mapping[str, np.ndarray]) -> dict[str, Tensor]:
        """Wrap every parameter array as a named leaf on this tape."""
        out = {}
        for name, arr in params.items():
            leaf = Tensor(arr, self, name)
            self.leaves[name] = leaf
            out[name] = leaf
        return out

    def constant(self, value) -> Tensor:
        return Tensor(value, self)


def value(x: ArrayLike) -> np.ndarray:
    return x.value if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def _tape_of(args: Sequence) -> Tape | None:
    for a in args:
        if isinstance(a, Tensor) and a.tape is not None:
            return a.tape
    return None


def _emit(op: str, args: Sequence, outs: Sequence[np.ndarray], vjp):
    """Return raw results, or record them on the tape shared by ``args``."""
    tape = _tape_of(args)
    if tape is None:
        return outs[0] if len(outs) == 1 else tuple(outs)
    nodes = tuple(Tensor(o, tape) for o in outs)
    inputs = tuple(a if isinstance(a, Tensor) else None for a in args)
    tape.records.append(Record(op, inputs, nodes, vjp))
    return nodes[0] if len(nodes) == 1 else nodes


def _same_shape(op: str, a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} differ")


# ---------------------------------------------------------------- primitives


def affine(W: ArrayLike, x: ArrayLike, b: ArrayLike | None = None):
    """``W @ x + b`` for a vector ``x``; row-wise ``x @ W.T + b`` for a matrix ``x``."""
    Wv, xv = value(W), value(x)
    bv = None if b is None else value(b)
    if Wv.ndim != 2 or xv.ndim not in (1, 2) or Wv.shape[1] != xv.shape[-1]:
        raise DimensionError(f"affine: W{Wv.shape} does not conform with x{xv.shape}")
    if bv is not None and bv.shape != (Wv.shape[0],):
        raise DimensionError(f"affine: W{Wv.shape} does not conform with b{bv.shape}")
    out = Wv @ xv if xv.ndim == 1 else xv @ Wv.T
    if bv is not None:
        out = out + bv

    def vjp(g):
        if xv.ndim == 1:
            gW, gx = np.outer(g, xv), Wv.T @ g
            gb = g
        else:
            gW, gx = g.T @ xv, g @ Wv
            gb = g.sum(axis=0)
        return gW, gx, gb

    return _emit("affine", (W, x, b), (out,), vjp)


def tanh(x: ArrayLike):
    out = np.tanh(value(x))
    return _emit("tanh", (x,), (out,), lambda g: (g * (1.0 - out * out),))


def sigmoid(x: ArrayLike):
    # tanh form cannot overflow for large |x|
    out = 0.5 * (1.0 + np.tanh(0.5 * value(x)))
    return _emit("sigmoid", (x,), (out,), lambda g: (g * out * (1.0 - out),))


def hadamard(a: ArrayLike, b: ArrayLike):
    av, bv = value(a), value(b)
    _same_shape("hadamard", av, bv)
    return _emit("hadamard", (a, b), (av * bv,), lambda g: (g * bv, g * av))


def add(a: ArrayLike, b: ArrayLike):
    """Sum of equal shapes, or a vector ``b`` broadcast onto every row of matrix ``a``."""
    av, bv = value(a), value(b)
    if av.shape == bv.shape:
        return _emit("add", (a, b), (av + bv,), lambda g: (g, g))
    if av.ndim == 2 and bv.ndim == 1 and av.shape[1] == bv.shape[0]:
        return _emit("add", (a, b), (av + bv,), lambda g: (g, g.sum(axis=0)))
    raise DimensionError(f"add: shapes {av.shape} and {bv.shape} do not conform")


def sub(a: ArrayLike, b: ArrayLike):
    av, bv = value(a), value(b)
    _same_shape("sub", av, bv)
    return _emit("sub", (a, b), (av - bv,), lambda g: (g, -g))


def scale(x: ArrayLike, factor: float):
    factor = float(factor)
    return _emit("scale", (x,), (value(x) * factor,), lambda g: (g * factor,))


_ELEMENTWISE = {"tanh": tanh, "sigmoid": sigmoid, "hadamard": hadamard, "add": add, "scale": scale}


def elementwise(kind: str, *args):
    try:
        fn = _ELEMENTWISE[kind]
    except KeyError:
        raise ContractError(f"unknown elementwise kind {kind!r}") from None
    return fn(*args)


def dot(a: ArrayLike, b: ArrayLike):
    av, bv = value(a), value(b)
    if av.ndim != 1 or av.shape != bv.shape:
        raise DimensionError(f"dot: shapes {av.shape} and {bv.shape} differ")
    out = np.asarray(av @ bv)
    return _emit("dot", (a, b), (out,), lambda g: (g * bv, g * av))


def total(x: ArrayLike):
    """Sum of all entries, as a scalar."""
    xv = value(x)
    return _emit("total", (x,), (np.asarray(xv.sum()),), lambda g: (np.full(xv.shape, float(g)),))


def gather(M: ArrayLike, idx) -> ArrayLike:
    """Rows ``M[idx]`` as a matrix; gradients scatter-add back into ``M``."""
    Mv = value(M)
    idx = np.asarray(idx, dtype=np.intp)
    if Mv.ndim != 2 or idx.ndim != 1:
        raise DimensionError(f"gather: matrix {Mv.shape} with index shape {idx.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= Mv.shape[0]):
        raise ContractError(f"gather: index out of range for {Mv.shape[0]} rows")
    out = Mv[idx]

    def vjp(g):
        gM = np.zeros_like(Mv)
        np.add.at(gM, idx, g)
        return (gM,)

    return _emit("gather", (M,), (out,), vjp)


def row(M: ArrayLike, i: int):
    Mv = value(M)
    out = Mv[i].copy()

    def vjp(g):
        gM = np.zeros_like(Mv)
        gM[i] = g
        return (gM,)

    return _emit("row", (M,), (out,), vjp)


def reshape(x: ArrayLike, shape: tuple[int, ...]):
    xv = value(x)
    out = xv.reshape(shape)
    return _emit("reshape", (x,), (out,), lambda g: (g.reshape(xv.shape),))


def stack(vectors: Sequence[ArrayLike]):
    """Stack equal-length vectors as the rows of a matrix."""
    vals = [value(v) for v in vectors]
    if not vals:
        raise ContractError("stack: no vectors")
    for v in vals[1:]:
        _same_shape("stack", vals[0], v)
    out = np.stack(vals)
    return _emit("stack", tuple(vectors), (out,), lambda g: tuple(g))


def vstack(mats: Sequence[ArrayLike]):
    vals = [value(m) for m in mats]
    if not vals or any(v.ndim != 2 or v.shape[1] != vals[0].shape[1] for v in vals):
        raise DimensionError(f"vstack: shapes {[v.shape for v in vals]}")
    out = np.concatenate(vals, axis=0)
    bounds = np.cumsum([0] + [v.shape[0] for v in vals])

    def vjp(g):
        return tuple(g[bounds[i] : bounds[i + 1]] for i in range(len(vals)))

    return _emit("vstack", tuple(mats), (out,), vjp)


# ---------------------------------------------------------------- LSTM cell

LSTM_GATE_ORDER = ("input", "forget", "cell", "output")


@lru_cache(maxsize=8)
def _gate_scale(H: int) -> np.ndarray:
    s = np.full(4 * H, 0.5)
    s[2 * H : 3 * H] = 1.0
    s.flags.writeable = False
    return s


@dataclass(frozen=True)
class LstmParams:
    """Input-to-gates ``Wx`` (4H x d), hidden-to-gates ``Wh`` (4H x H), bias ``b`` (4H).

    Gate blocks are stacked in :data:`LSTM_GATE_ORDER`; no peepholes.
    """

    Wx: ArrayLike
    Wh: ArrayLike
    b: ArrayLike

    @property
    def hidden(self) -> int:
        return value(self.Wh).shape[1]


def lstm_step(p: LstmParams, x: ArrayLike, h: ArrayLike, c: ArrayLike):
    """One LSTM step; returns ``(h', c')``."""
    Wx, Wh, b = value(p.Wx), value(p.Wh), value(p.b)
    xv, hv, cv = value(x), value(h), value(c)
    H = Wh.shape[1]
    if (
        Wh.shape != (4 * H, H)
        or Wx.shape[0] != 4 * H
        or b.shape != (4 * H,)
        or xv.shape != (Wx.shape[1],)
        or hv.shape != (H,)
        or cv.shape != (H,)
    ):
        raise DimensionError(
            f"lstm_step: Wx{Wx.shape} Wh{Wh.shape} b{b.shape} x{xv.shape} h{hv.shape} c{cv.shape}"
        )
    z = Wx @ xv + Wh @ hv + b
    # one tanh for all gates: sigmoid(a) = (1 + tanh(a / 2)) / 2
    t = np.tanh(z * _gate_scale(H))
    gi = 0.5 * (1.0 + t[:H])
    gf = 0.5 * (1.0 + t[H : 2 * H])
    gg = t[2 * H : 3 * H]
    go = 0.5 * (1.0 + t[3 * H :])
    c_new = gf * cv + gi * gg
    tc = np.tanh(c_new)
    h_new = go * tc

    def vjp(dh, dc):
        dh = np.zeros(H) if dh is None else dh
        dc_tot = (np.zeros(H) if dc is None else dc) + dh * go * (1.0 - tc * tc)
        dz = np.concatenate(
            [
                dc_tot * gg * gi * (1.0 - gi),
                dc_tot * cv * gf * (1.0 - gf),
                dc_tot * gi * (1.0 - gg * gg),
                dh * tc * go * (1.0 - go),
            ]
        )
        return np.outer(dz, xv), np.outer(dz, hv), dz, Wx.T @ dz, Wh.T @ dz, dc_tot * gf

    return _emit("lstm_step", (p.Wx, p.Wh, p.b, x, h, c), (h_new, c_new), vjp)


def lstm_sequence(p: LstmParams, X: ArrayLike, h0: ArrayLike, c0: ArrayLike):
    """Run :func:`lstm_step` over the rows of ``X``.

    Returns an ``(m + 1) x H`` matrix of hidden states whose first row is
    ``h0``, so row ``i`` is the state before input ``i`` is consumed.
    """
    Wx, Wh, b = value(p.Wx), value(p.Wh), value(p.b)
    Xv, hv, cv = value(X), value(h0), value(c0)
    H = Wh.shape[1]
    if Xv.ndim != 2 or Xv.shape[1] != Wx.shape[1] or Wx.shape[0] != 4 * H or hv.shape != (H,):
        raise DimensionError(f"lstm_sequence: Wx{Wx.shape} Wh{Wh.shape} X{Xv.shape} h0{hv.shape}")
    m = Xv.shape[0]
    scale_ = _gate_scale(H)
    pre = Xv @ Wx.T + b
    hs = np.empty((m + 1, H))
    cs = np.empty((m + 1, H))
    gates = np.empty((m, 4 * H))
    hs[0], cs[0] = hv, cv
    for t in range(m):
        a = np.tanh((pre[t] + Wh @ hs[t]) * scale_)
        a[:H] = 0.5 * (1.0 + a[:H])
        a[H : 2 * H] = 0.5 * (1.0 + a[H : 2 * H])
        a[3 * H :] = 0.5 * (1.0 + a[3 * H :])
        gates[t] = a
        cs[t + 1] = a[H : 2 * H] * cs[t] + a[:H] * a[2 * H : 3 * H]
        hs[t + 1] = a[3 * H :] * np.tanh(cs[t + 1])

    def vjp(g):
        dz = np.empty((m, 4 * H))
        dh = g[m].copy()
        dc = np.zeros(H)
        for t in range(m - 1, -1, -1):
            a = gates[t]
            gi, gf, gg, go = a[:H], a[H : 2 * H], a[2 * H : 3 * H], a[3 * H :]
            tc = np.tanh(cs[t + 1])
            dc_tot = dc + dh * go * (1.0 - tc * tc)
            dz[t, :H] = dc_tot * gg * gi * (1.0 - gi)
            dz[t, H : 2 * H] = dc_tot * cs[t] * gf * (1.0 - gf)
            dz[t, 2 * H : 3 * H] = dc_tot * gi * (1.0 - gg * gg)
            dz[t, 3 * H :] = dh * tc * go * (1.0 - go)
            dh = g[t] + Wh.T @ dz[t]
            dc = dc_tot * gf
        return dz.T @ Xv, dz.T @ hs[:m], dz.sum(axis=0), dz @ Wx, dh, dc

    return _emit("lstm_sequence", (p.Wx, p.Wh, p.b, X, h0, c0), (hs,), vjp)


# ---------------------------------------------------------------- backward


def backward(tape: Tape, output: Tensor) -> dict[str, np.ndarray]:
    """Gradient of scalar ``output`` w.r.t. every leaf watched on ``tape``.

    Leaves the output does not depend on receive zero arrays.
    """
    if not isinstance(output, Tensor) or output.tape is not tape:
        raise ContractError("backward: output was not recorded on this tape")
    if output.value.size != 1:
        raise ContractError(f"backward: seed must be a scalar, got shape {output.shape}")
    # non-finite intermediates propagate into the scalar output
    if not np.isfinite(output.value):
        raise FloatingPointError("backward: output is not finite")
    for rec in tape.records:
        for o in rec.outputs:
            o.grad = None
    for leaf in tape.leaves.values():
        leaf.grad = None
    output.grad = np.ones_like(output.value)
    for rec in reversed(tape.records):
        grads = [o.grad for o in rec.outputs]
        if all(g is None for g in grads):
            continue
        if len(grads) == 1:
            in_grads = rec.vjp(grads[0])
        else:
            in_grads = rec.vjp(*grads)
        for node, g in zip(rec.inputs, in_grads):
            if node is None or g is None:
                continue
            node.grad = g.copy() if node.grad is None else node.grad + g
    return {
        name: (leaf.grad if leaf.grad is not None else np.zeros_like(leaf.value))
        for name, leaf in tape.leaves.items()
    }


def value_and_grad(fn: Callable[[Mapping[str, Tensor]], Tensor], params: Mapping[str, np.ndarray]):
    """Evaluate ``fn`` on a fresh tape; return ``(float value, gradients)``."""
    tape = Tape()
    leaves = tape.watch(params)
    out = fn(leaves)
    if not isinstance(out, Tensor) or out.tape is not tape:
        # output does not depend on any parameter
        return float(value(out)), {k: np.zeros_like(v) for k, v in params.items()}
    return float(out.value), backward(tape, out)


def grad_check(
    loss_fn: Callable[[Mapping[str, ArrayLike]], ArrayLike],
    params: Mapping[str, np.ndarray],
    eps: float = 1e-5,
    grads: Mapping[str, np.ndarray] | None = None,
    max_per_tensor: int | None = None,
    rng: np.random.Generator | None = None,
    floor: float = 1e-3,
) -> float:
    """Worst relative error between analytic gradients and central differences.

    ``loss_fn`` must be deterministic in ``params``. The analytic side comes
    from :func:`backward` unless ``grads`` is supplied. With ``max_per_tensor``
    only that many randomly chosen coordinates per tensor are probed. The
    relative error of one coordinate is ``|a - n| / max(|a|, |n|, floor)``.
    """
    if grads is None:
        _, grads = value_and_grad(loss_fn, params)
    rng = rng or np.random.default_rng(0)
    work = {k: np.array(v, dtype=np.float64, copy=True) for k, v in params.items()}
    worst = 0.0
    for name, arr in work.items():
        if arr.size == 0:
            continue
        flat = arr.reshape(-1)
        coords = np.arange(flat.size)
        if max_per_tensor is not None and flat.size > max_per_tensor:
            coords = rng.choice(flat.size, size=max_per_tensor, replace=False)
        g = np.asarray(grads[name]).reshape(-1)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = float(value(loss_fn(work)))
            flat[i] = orig - eps
            f_minus = float(value(loss_fn(work)))
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            err = abs(g[i] - numeric) / max(abs(g[i]), abs(numeric), floor)
            worst = max(worst, err)
    return worst
