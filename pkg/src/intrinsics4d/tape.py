"""Reverse-mode gradient tape over numpy arrays.

Operations are vectorized: one tape node per array *operation*, not per
element, so graphs stay short even for image-sized batches. Every
differentiable op registers a vector-Jacobian closure; ``Tape.backward``
replays the node list in reverse and accumulates per-leaf gradients.

Plain ndarrays and python scalars mix freely with :class:`Tensor` operands
and are treated as constants (no gradient). Discrete quantities (gather
indices, branch masks, hit flags) are always constants: only the smooth
arithmetic around them is differentiated.

All computation is float64. Checkpoint files store float32 (see
``field.checkpoint``); doing the arithmetic in double keeps central
finite-difference probes at ``eps=1e-4`` well above rounding noise.
"""

from __future__ import annotations

import warnings
from typing import Callable, Iterable, Sequence

import numpy as np

DTYPE = np.float64

ArrayLike = "Tensor | np.ndarray | float"


class GradientNaNError(RuntimeError):
    """A forward value or gradient came back non-finite."""


class Tensor:
    """A value recorded on a tape. Do not construct directly; use
    :meth:`Tape.leaf`, :meth:`Tape.constant`, or tape ops."""

    __slots__ = ("value", "tape", "nid")

    def __init__(self, value: np.ndarray, tape: "Tape", nid: int):
        self.value = value
        self.tape = tape
        self.nid = nid

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, nid={self.nid})"

    # arithmetic sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, key):
        return getitem(self, key)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


class Tape:
    """Ordered record of differentiable operations plus a leaf registry.

    Node order is creation order, which is topological by construction.
    ``backward`` allocates one gradient accumulator per leaf, zeroed at the
    start of the traversal.
    """

    def __init__(self):
        self._nodes: list[tuple[int, tuple]] = []  # (out_id, ((parent_id, vjp), ...))
        self._leaves: dict[str, Tensor] = {}
        self._values: dict[int, np.ndarray] = {}
        self._n = 0

    def _new_id(self) -> int:
        i = self._n
        self._n += 1
        return i

    def leaf(self, value: np.ndarray, name: str) -> Tensor:
        """Register a named parameter array as a gradient target."""
        if name in self._leaves:
            raise ValueError(f"duplicate leaf name {name!r}")
        t = Tensor(np.asarray(value, dtype=DTYPE), self, self._new_id())
        self._leaves[name] = t
        return t

    def constant(self, value) -> Tensor:
        """Wrap a value that participates in the graph but takes no gradient."""
        return Tensor(np.asarray(value, dtype=DTYPE), self, self._new_id())

    def record(self, value: np.ndarray, parents: Sequence[tuple["Tensor", Callable]]) -> Tensor:
        out = Tensor(value, self, self._new_id())
        live = tuple((p.nid, vjp) for p, vjp in parents)
        if live:
            self._nodes.append((out.nid, live))
        return out

    @property
    def leaves(self) -> dict[str, Tensor]:
        return self._leaves

    def __len__(self):
        return len(self._nodes)

    def backward(self, output: Tensor, output_grad: np.ndarray) -> dict[str, np.ndarray]:
        """Accumulate d(output·output_grad)/d(leaf) for every leaf.

        ``output_grad`` must match the recorded output's shape exactly.
        Linear in ``output_grad``.
        """
        if output.tape is not self:
            raise ValueError("output was recorded on a different tape")
        g0 = np.asarray(output_grad, dtype=DTYPE)
        if g0.shape != output.value.shape:
            raise ValueError(
                f"output_grad shape {g0.shape} does not match recorded output "
                f"shape {output.value.shape}"
            )
        grads: dict[int, np.ndarray] = {output.nid: g0}
        # vjp closures may alias their input gradient (add passes it through),
        # so never accumulate in place into an array we did not allocate
        owned: set[int] = set()
        for out_id, parents in reversed(self._nodes):
            g = grads.pop(out_id, None)
            owned.discard(out_id)
            if g is None:
                continue
            for pid, vjp in parents:
                contrib = vjp(g)
                if pid not in grads:
                    grads[pid] = contrib
                elif pid in owned:
                    grads[pid] += contrib
                else:
                    grads[pid] = grads[pid] + contrib
                    owned.add(pid)
        out: dict[str, np.ndarray] = {}
        for name, t in self._leaves.items():
            g = grads.get(t.nid)
            if g is None:
                out[name] = np.zeros_like(t.value)
            else:
                out[name] = np.asarray(g) if t.nid in owned else np.array(g)
        return out


# ---------------------------------------------------------------------------
# op helpers


def value_of(x) -> np.ndarray:
    if isinstance(x, Tensor):
        return x.value
    return np.asarray(x, dtype=DTYPE)


def _tape_of(*xs) -> Tape | None:
    tp = None
    for x in xs:
        if isinstance(x, Tensor):
            if tp is None:
                tp = x.tape
            elif x.tape is not tp:
                raise ValueError("operands recorded on different tapes")
    return tp


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (reverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _binary(a, b, fwd, vjp_a, vjp_b):
    va, vb = value_of(a), value_of(b)
    out = fwd(va, vb)
    tp = _tape_of(a, b)
    if tp is None:
        return out
    parents = []
    if isinstance(a, Tensor):
        parents.append((a, lambda g, va=va, vb=vb: _unbroadcast(vjp_a(g, va, vb), va.shape)))
    if isinstance(b, Tensor):
        parents.append((b, lambda g, va=va, vb=vb: _unbroadcast(vjp_b(g, va, vb), vb.shape)))
    return tp.record(out, parents)


def _unary(a, fwd, vjp):
    va = value_of(a)
    out = fwd(va)
    if not isinstance(a, Tensor):
        return out
    return a.tape.record(out, [(a, lambda g, va=va, out=out: vjp(g, va, out))])


# ---------------------------------------------------------------------------
# arithmetic


def add(a, b):
    return _binary(a, b, lambda x, y: x + y, lambda g, x, y: g, lambda g, x, y: g)


def sub(a, b):
    return _binary(a, b, lambda x, y: x - y, lambda g, x, y: g, lambda g, x, y: -g)


def mul(a, b):
    return _binary(a, b, lambda x, y: x * y, lambda g, x, y: g * y, lambda g, x, y: g * x)


def div(a, b):
    return _binary(
        a, b, lambda x, y: x / y, lambda g, x, y: g / y, lambda g, x, y: -g * x / (y * y)
    )


def neg(a):
    return _unary(a, lambda x: -x, lambda g, x, o: -g)


def power(a, p: float):
    if isinstance(p, Tensor):
        raise TypeError("exponent must be a constant")
    return _unary(a, lambda x: x**p, lambda g, x, o: g * p * x ** (p - 1))


def texp(a):
    return _unary(a, np.exp, lambda g, x, o: g * o)


def tlog(a):
    return _unary(a, np.log, lambda g, x, o: g / x)


def tsqrt(a):
    return _unary(a, np.sqrt, lambda g, x, o: g * 0.5 / np.maximum(o, 1e-300))


def tsin(a):
    return _unary(a, np.sin, lambda g, x, o: g * np.cos(x))


def tcos(a):
    return _unary(a, np.cos, lambda g, x, o: -g * np.sin(x))


def tanh(a):
    return _unary(a, np.tanh, lambda g, x, o: g * (1.0 - o * o))


def sigmoid(a):
    def fwd(x):
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        return out

    return _unary(a, fwd, lambda g, x, o: g * o * (1.0 - o))


def softplus(a):
    fwd = lambda x: np.logaddexp(0.0, x)

    def vjp(g, x, o):
        return g / (1.0 + np.exp(-x))

    return _unary(a, fwd, vjp)


def arccos(a):
    def fwd(x):
        return np.arccos(np.clip(x, -1.0, 1.0))

    def vjp(g, x, o):
        return -g / np.sqrt(np.maximum(1.0 - x * x, 1e-12))

    return _unary(a, fwd, vjp)


def arctan2(y, x):
    def vy(g, yv, xv):
        return g * xv / (xv * xv + yv * yv)

    def vx(g, yv, xv):
        return -g * yv / (xv * xv + yv * yv)

    return _binary(y, x, np.arctan2, vy, vx)


def absolute(a):
    return _unary(a, np.abs, lambda g, x, o: g * np.sign(x))


def maximum(a, c):
    """Elementwise max against a constant threshold."""
    c = value_of(c)
    return _unary(a, lambda x: np.maximum(x, c), lambda g, x, o: g * (x > c))


def minimum(a, c):
    c = value_of(c)
    return _unary(a, lambda x: np.minimum(x, c), lambda g, x, o: g * (x < c))


def clip(a, lo, hi):
    return minimum(maximum(a, lo), hi)


def select(cond: np.ndarray, a, b):
    """``where(cond, a, b)`` with a constant condition mask."""
    cond = np.asarray(cond, dtype=bool)
    return _binary(
        a,
        b,
        lambda x, y: np.where(cond, x, y),
        lambda g, x, y: g * cond,
        lambda g, x, y: g * ~cond,
    )


def detach(a) -> np.ndarray:
    return value_of(a)


# ---------------------------------------------------------------------------
# shape / structure


def reshape(a, shape):
    va = value_of(a)
    if not isinstance(a, Tensor):
        return va.reshape(shape)
    out = va.reshape(shape)
    return a.tape.record(out, [(a, lambda g, s=va.shape: g.reshape(s))])


def transpose(a, axes):
    va = value_of(a)
    out = np.transpose(va, axes)
    if not isinstance(a, Tensor):
        return out
    inv = np.argsort(axes)
    return a.tape.record(out, [(a, lambda g: np.transpose(g, inv))])


def tsum(a, axis=None, keepdims=False):
    va = value_of(a)
    out = va.sum(axis=axis, keepdims=keepdims)
    if not isinstance(a, Tensor):
        return out

    def vjp(g, x=va):
        if axis is None:
            return np.broadcast_to(g, x.shape)
        gg = g if keepdims else np.expand_dims(g, axis)
        return np.broadcast_to(gg, x.shape)

    return a.tape.record(np.asarray(out), [(a, vjp)])


def tmean(a, axis=None, keepdims=False):
    va = value_of(a)
    if axis is None:
        n = va.size
    else:
        n = va.shape[axis] if isinstance(axis, int) else int(np.prod([va.shape[i] for i in axis]))
    return div(tsum(a, axis=axis, keepdims=keepdims), float(n))


def matmul(a, b):
    def va_(g, x, y):
        return g @ y.swapaxes(-1, -2)

    def vb_(g, x, y):
        return x.swapaxes(-1, -2) @ g

    return _binary(a, b, lambda x, y: x @ y, va_, vb_)


def concat(parts: Iterable, axis: int = -1):
    parts = list(parts)
    vals = [value_of(p) for p in parts]
    out = np.concatenate(vals, axis=axis)
    tp = _tape_of(*parts)
    if tp is None:
        return out
    sizes = [v.shape[axis] for v in vals]
    offsets = np.cumsum([0] + sizes)
    parents = []
    for i, p in enumerate(parts):
        if isinstance(p, Tensor):
            lo, hi = offsets[i], offsets[i + 1]

            def vjp(g, lo=lo, hi=hi):
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                return g[tuple(sl)]

            parents.append((p, vjp))
    return tp.record(out, parents)


def stack(parts: Iterable, axis: int = 0):
    parts = list(parts)
    vals = [value_of(p) for p in parts]
    out = np.stack(vals, axis=axis)
    tp = _tape_of(*parts)
    if tp is None:
        return out
    parents = []
    for i, p in enumerate(parts):
        if isinstance(p, Tensor):
            parents.append((p, lambda g, i=i: np.take(g, i, axis=axis)))
    return tp.record(out, parents)


def getitem(a, key):
    va = value_of(a)
    out = va[key]
    if not isinstance(a, Tensor):
        return out

    def vjp(g, shape=va.shape):
        full = np.zeros(shape, dtype=DTYPE)
        np.add.at(full, key, g)
        return full

    return a.tape.record(np.ascontiguousarray(out), [(a, vjp)])


def take_rows(a, idx: np.ndarray):
    """Gather rows along axis 0 (duplicate indices allowed)."""
    idx = np.asarray(idx)
    va = value_of(a)
    out = va[idx]
    if not isinstance(a, Tensor):
        return out

    def vjp(g, shape=va.shape):
        full = np.zeros(shape, dtype=DTYPE)
        np.add.at(full, idx, g)
        return full

    return a.tape.record(out, [(a, vjp)])


def overlay(base, idx: np.ndarray, values):
    """Copy of ``base`` with rows ``idx`` replaced by ``values``.

    ``idx`` must not contain duplicates: the overwrite semantics make the
    adjoint of a duplicated row ill-defined.
    """
    idx = np.asarray(idx)
    vb = value_of(base)
    vv = value_of(values)
    out = vb.copy()
    out[idx] = vv
    tp = _tape_of(base, values)
    if tp is None:
        return out
    parents = []
    if isinstance(base, Tensor):

        def vjp_base(g):
            gb = g.copy()
            gb[idx] = 0.0
            return gb

        parents.append((base, vjp_base))
    if isinstance(values, Tensor):
        parents.append((values, lambda g: g[idx]))
    return tp.record(out, parents)


def norm(a, axis=-1, keepdims=False, eps: float = 1e-12):
    """Smooth euclidean norm sqrt(sum(x^2) + eps)."""
    return tsqrt(tsum(mul(a, a), axis=axis, keepdims=keepdims) + eps)


def normalize(a, axis=-1, eps: float = 1e-12):
    return div(a, norm(a, axis=axis, keepdims=True, eps=eps))


def dot(a, b, axis=-1, keepdims=False):
    return tsum(mul(a, b), axis=axis, keepdims=keepdims)


def cross(a, b):
    """Cross product over the trailing axis of length 3."""
    ax, ay, az = getitem(a, (Ellipsis, 0)), getitem(a, (Ellipsis, 1)), getitem(a, (Ellipsis, 2))
    bx, by, bz = getitem(b, (Ellipsis, 0)), getitem(b, (Ellipsis, 1)), getitem(b, (Ellipsis, 2))
    return stack(
        [sub(mul(ay, bz), mul(az, by)), sub(mul(az, bx), mul(ax, bz)), sub(mul(ax, by), mul(ay, bx))],
        axis=-1,
    )


# ---------------------------------------------------------------------------
# finite differences


def finite_diff_check(
    fn,
    params: dict[str, np.ndarray],
    probes: int,
    eps: float = 1e-4,
    rng: np.random.Generator | None = None,
) -> float:
    """Compare tape gradients of ``fn`` against central finite differences.

    ``fn(tape, pv)`` must build and return a scalar Tensor from the leaf view
    ``pv`` (one Tensor per entry of ``params``) and be deterministic. Probe
    coordinates are drawn at random among those whose analytic derivative is
    measurable by a central difference at this ``eps``: coordinates below the
    double-precision cancellation floor ~|f|*1e-11/eps cannot distinguish a
    correct gradient from noise and are skipped (falling back to any nonzero
    coordinate if none qualify). Returns the worst relative error, with
    denominator ``max(|analytic|, |numeric|, 1e-8)``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if probes == 0:
        warnings.warn("finite_diff_check called with probes=0; nothing checked")
        return 0.0
    rng = rng or np.random.default_rng(0)

    def run(p: dict[str, np.ndarray]):
        tp = Tape()
        pv = {k: tp.leaf(v, k) for k, v in p.items()}
        out = fn(tp, pv)
        if not isinstance(out, Tensor) or out.value.shape != ():
            raise ValueError("fn must return a scalar Tensor")
        if not np.isfinite(out.value):
            raise GradientNaNError("fn returned a non-finite value")
        return tp, out

    tp, out = run(params)
    analytic = tp.backward(out, np.asarray(1.0))

    # candidate probe coordinates: measurable first, any live coordinate else
    floor = (abs(float(out.value)) + 1.0) * 1e-11 / eps
    coords: list[tuple[str, int]] = []
    names = sorted(params)
    nz = [(k, i) for k in names for i in np.flatnonzero(np.abs(analytic[k]) >= floor)]
    if not nz:
        nz = [(k, i) for k in names for i in np.flatnonzero(analytic[k])]
    if nz:
        picks = rng.integers(0, len(nz), size=min(probes, len(nz)))
        coords = [nz[picks[i]] for i in range(len(picks))]
    while len(coords) < probes:
        k = names[rng.integers(len(names))]
        coords.append((k, int(rng.integers(params[k].size))))

    worst = 0.0
    for name, flat in coords:
        base = params[name].flat[flat]
        pp = {k: v.copy() for k, v in params.items()}
        pp[name].flat[flat] = base + eps
        fp = run(pp)[1].value
        pp[name].flat[flat] = base - eps
        fm = run(pp)[1].value
        numeric = (fp - fm) / (2.0 * eps)
        a = analytic[name].flat[flat]
        rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
        worst = max(worst, float(rel))
    return worst
