"""Reverse-mode differentiation over dense float64 grid tensors.

Define-by-run: every operation appends a node to the active :class:`Tape`;
:func:`backward` walks the tape once in reverse.  The same kernel functions
serve both the recorded path and the plain-ndarray path, so evaluating a model
with or without a tape produces bit-identical values.

Shapes are explicit (rank 1-4, optional leading batch axis); there is no
general broadcasting.  Python floats are accepted as scalar operands.
"""

import numpy as np

from .errors import (
    EmptyTape,
    NonFiniteLoss,
    NonFiniteValue,
    NonScalarSeed,
    ShapeMismatch,
    UnknownPrimitive,
)

_GELU_C = 0.7978845608028654  # sqrt(2/pi)
_GELU_A = 0.044715


# ---------------------------------------------------------------------------
# kernels (shared by taped and untaped evaluation)

def k_gelu(x):
    t = np.tanh(_GELU_C * (x + _GELU_A * x * x * x))
    return 0.5 * x * (1.0 + t)


def k_channel_matmul(w, v, axis):
    if v.ndim == 1:
        return w @ v
    vm = np.moveaxis(v, axis, -1)
    return np.moveaxis(vm @ w.T, -1, axis)


def k_axis_matmul(mat, v, axis):
    vm = np.moveaxis(v, axis, -1)
    return np.moveaxis(vm @ mat.T, -1, axis)


def k_circ_stencil(v, taps, axis):
    # accumulation order is fixed: it is part of the bit-exactness contract
    # with the dense-matrix reference stepper
    out = taps[0][1] * np.roll(v, -taps[0][0], axis=axis)
    for offset, weight in taps[1:]:
        out = out + weight * np.roll(v, -offset, axis=axis)
    return out


def k_bias_add(v, b, axis):
    shape = [1] * v.ndim
    shape[axis] = b.shape[0]
    return v + b.reshape(shape)


# ---------------------------------------------------------------------------
# tape machinery

class Node:
    __slots__ = ("op", "parents", "value", "ctx")

    def __init__(self, op, parents, value, ctx):
        self.op = op
        self.parents = parents
        self.value = value
        self.ctx = ctx


class Tensor:
    """Handle to one tape node; `data` lives on the tape."""

    __slots__ = ("tape", "node_id")

    def __init__(self, tape, node_id):
        self.tape = tape
        self.node_id = node_id

    @property
    def data(self) -> np.ndarray:
        return self.tape.nodes[self.node_id].value

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scalar_mul(self, -1.0)

    def __repr__(self):
        return f"Tensor(node={self.node_id}, shape={self.shape})"


class Tape:
    """Append-only operation record plus the gradient map filled by backward."""

    def __init__(self):
        self.nodes = []
        self.gradients = {}

    def leaf(self, value) -> Tensor:
        arr = np.asarray(value, dtype=np.float64)
        _check_finite(arr, "leaf")
        self.nodes.append(Node("leaf", (), arr, None))
        return Tensor(self, len(self.nodes) - 1)

    def _append(self, op, parents, value, ctx) -> Tensor:
        self.nodes.append(Node(op, parents, value, ctx))
        return Tensor(self, len(self.nodes) - 1)


def _check_finite(arr, op):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteValue(f"non-finite value produced by {op!r}")


def _input_value(tape, node, i):
    pid = node.parents[i]
    if pid is not None:
        return tape.nodes[pid].value
    return node.ctx["consts"][i]


def record(tape: Tape, op: str, *inputs, **params) -> Tensor:
    """Record one primitive on `tape` and return the output tensor.

    Inputs may be Tensors (on this tape), ndarrays, or Python floats; the
    latter two are treated as constants that receive no gradient.
    """
    if op not in _FORWARD:
        raise UnknownPrimitive(f"unknown primitive {op!r}")
    parents = []
    values = []
    consts = {}
    for i, x in enumerate(inputs):
        if isinstance(x, Tensor):
            if x.tape is not tape:
                raise ValueError("inputs registered on a different tape")
            parents.append(x.node_id)
            values.append(x.data)
        else:
            val = x if isinstance(x, float) else np.asarray(x, dtype=np.float64)
            parents.append(None)
            values.append(val)
            consts[i] = val
    out, ctx = _FORWARD[op](values, params)
    _check_finite(out, op)
    if consts:
        ctx = dict(ctx or {})
        ctx["consts"] = consts
    return tape._append(op, tuple(parents), out, ctx)


def backward(tape: Tape, seed, retain_all: bool = True) -> dict:
    """Populate and return gradients of `seed` w.r.t. every ancestor node.

    With retain_all=False only leaf gradients are kept; an interior node's
    gradient is dropped as soon as it has been propagated to its parents.
    Long unrolled rollouts need this: retaining the full map costs as much
    memory as the forward tape itself.
    """
    if not tape.nodes:
        raise EmptyTape("backward on an empty tape")
    seed_id = seed.node_id if isinstance(seed, Tensor) else int(seed)
    seed_node = tape.nodes[seed_id]
    if seed_node.value.size != 1:
        raise NonScalarSeed(f"seed must be scalar-shaped, got {seed_node.value.shape}")
    grads = {seed_id: np.ones_like(seed_node.value)}
    for nid in range(seed_id, -1, -1):
        g = grads.get(nid)
        if g is None:
            continue
        node = tape.nodes[nid]
        if node.op == "leaf":
            continue
        contribs = _VJP[node.op](tape, node, g)
        for i, contrib in enumerate(contribs):
            pid = node.parents[i]
            if pid is None or contrib is None:
                continue
            if pid in grads:
                grads[pid] = grads[pid] + contrib
            else:
                grads[pid] = contrib
        if not retain_all:
            del grads[nid]
    tape.gradients = grads
    return grads


def grad_of(tape: Tape, tensor: Tensor) -> np.ndarray:
    """Gradient of the last backward seed w.r.t. `tensor` (zeros if detached)."""
    g = tape.gradients.get(tensor.node_id)
    if g is None:
        return np.zeros_like(tensor.data)
    return g


# ---------------------------------------------------------------------------
# primitive definitions

def _shapes_equal(a, b, op):
    if isinstance(a, float) or isinstance(b, float):
        return
    if a.shape != b.shape:
        raise ShapeMismatch(f"{op}: {a.shape} vs {b.shape}")


def _fw_add(v, p):
    _shapes_equal(v[0], v[1], "add")
    return v[0] + v[1], None


def _fw_sub(v, p):
    _shapes_equal(v[0], v[1], "sub")
    return v[0] - v[1], None


def _fw_mul(v, p):
    _shapes_equal(v[0], v[1], "mul")
    return v[0] * v[1], None


def _fw_scalar_mul(v, p):
    return v[0] * p["scalar"], {"scalar": p["scalar"]}


def _fw_matmul(v, p):
    w, x = v
    axis = p.get("channel_axis")
    if axis is None:
        if x.ndim != 1:
            raise ShapeMismatch("matmul: channel_axis required for rank >= 2 input")
        axis = 0
    if w.ndim != 2 or x.shape[axis] != w.shape[1]:
        raise ShapeMismatch(f"matmul: {w.shape} against axis {axis} of {x.shape}")
    return k_channel_matmul(w, x, axis), {"axis": axis}


def _fw_bias_add(v, p):
    x, b = v
    axis = p.get("channel_axis", 1 if x.ndim >= 3 else 0)
    if b.ndim != 1 or x.shape[axis] != b.shape[0]:
        raise ShapeMismatch(f"bias_add: {b.shape} against axis {axis} of {x.shape}")
    return k_bias_add(x, b, axis), {"axis": axis}


def _fw_gelu(v, p):
    # the tanh is recomputed in the vjp: storing it would add one full-size
    # array per activation to the tape
    return k_gelu(v[0]), None


def _fw_square(v, p):
    return v[0] * v[0], None


def _fw_sum(v, p):
    return np.asarray(np.sum(v[0])), None


def _fw_mean(v, p):
    return np.asarray(np.mean(v[0])), None


def _fw_slice_axis(v, p):
    sl = [slice(None)] * v[0].ndim
    sl[p["axis"]] = slice(p["start"], p["stop"])
    return v[0][tuple(sl)].copy(), {"axis": p["axis"], "start": p["start"],
                                    "stop": p["stop"], "in_shape": v[0].shape}


def _fw_concat(v, p):
    axis = p["axis"]
    return np.concatenate([v[0], v[1]], axis=axis), {
        "axis": axis, "split": v[0].shape[axis]}


def _fw_boundary_overwrite(v, p):
    mask = p["mask"]
    out = np.where(mask, p["value"], v[0])
    if out.shape != v[0].shape:
        raise ShapeMismatch(f"boundary_overwrite: mask {mask.shape} vs {v[0].shape}")
    return out, {"mask": mask}


def _fw_circ_stencil(v, p):
    return k_circ_stencil(v[0], p["taps"], p["axis"]), {
        "taps": p["taps"], "axis": p["axis"]}


def _fw_level_matmul(v, p):
    mat, axis = p["matrix"], p["axis"]
    if v[0].shape[axis] != mat.shape[1]:
        raise ShapeMismatch(
            f"axis matmul: matrix {mat.shape} against axis {axis} of {v[0].shape}")
    return k_axis_matmul(mat, v[0], axis), {"matrix": mat, "axis": axis}


def _vjp_add(tape, node, g):
    return g, g


def _vjp_sub(tape, node, g):
    return g, -g


def _vjp_mul(tape, node, g):
    a = _input_value(tape, node, 0)
    b = _input_value(tape, node, 1)
    return g * b, g * a


def _vjp_scalar_mul(tape, node, g):
    return (g * node.ctx["scalar"],)


def _vjp_matmul(tape, node, g):
    w = _input_value(tape, node, 0)
    x = _input_value(tape, node, 1)
    axis = node.ctx["axis"]
    if x.ndim == 1:
        return np.outer(g, x), w.T @ g
    gm = np.moveaxis(g, axis, -1)
    xm = np.moveaxis(x, axis, -1)
    gw = gm.reshape(-1, w.shape[0]).T @ xm.reshape(-1, w.shape[1])
    gx = np.moveaxis(gm @ w, -1, axis)
    return gw, gx


def _vjp_bias_add(tape, node, g):
    axis = node.ctx["axis"]
    reduce_axes = tuple(i for i in range(g.ndim) if i != axis)
    return g, np.sum(g, axis=reduce_axes)


def _vjp_gelu(tape, node, g):
    x = _input_value(tape, node, 0)
    t = np.tanh(_GELU_C * (x + _GELU_A * x * x * x))
    dx = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * _GELU_C * (1.0 + 3.0 * _GELU_A * x * x)
    return (g * dx,)


def _vjp_square(tape, node, g):
    return (2.0 * _input_value(tape, node, 0) * g,)


def _vjp_sum(tape, node, g):
    x = _input_value(tape, node, 0)
    return (np.broadcast_to(g, x.shape).copy(),)


def _vjp_mean(tape, node, g):
    x = _input_value(tape, node, 0)
    return (np.broadcast_to(g / x.size, x.shape).copy(),)


def _vjp_slice_axis(tape, node, g):
    ctx = node.ctx
    out = np.zeros(ctx["in_shape"])
    sl = [slice(None)] * len(ctx["in_shape"])
    sl[ctx["axis"]] = slice(ctx["start"], ctx["stop"])
    out[tuple(sl)] = g
    return (out,)


def _vjp_concat(tape, node, g):
    axis, split = node.ctx["axis"], node.ctx["split"]
    sl_a = [slice(None)] * g.ndim
    sl_b = [slice(None)] * g.ndim
    sl_a[axis] = slice(0, split)
    sl_b[axis] = slice(split, None)
    return g[tuple(sl_a)].copy(), g[tuple(sl_b)].copy()


def _vjp_boundary_overwrite(tape, node, g):
    return (np.where(node.ctx["mask"], 0.0, g),)


def _vjp_circ_stencil(tape, node, g):
    taps = node.ctx["taps"]
    axis = node.ctx["axis"]
    out = taps[0][1] * np.roll(g, taps[0][0], axis=axis)
    for offset, weight in taps[1:]:
        out = out + weight * np.roll(g, offset, axis=axis)
    return (out,)


def _vjp_level_matmul(tape, node, g):
    return (k_axis_matmul(node.ctx["matrix"].T, g, node.ctx["axis"]),)


_FORWARD = {
    "add": _fw_add,
    "sub": _fw_sub,
    "mul": _fw_mul,
    "scalar_mul": _fw_scalar_mul,
    "matmul": _fw_matmul,
    "bias_add": _fw_bias_add,
    "gelu": _fw_gelu,
    "square": _fw_square,
    "sum": _fw_sum,
    "mean": _fw_mean,
    "slice_axis": _fw_slice_axis,
    "concat": _fw_concat,
    "boundary_overwrite": _fw_boundary_overwrite,
    "circ_stencil": _fw_circ_stencil,
    "dwt_level": _fw_level_matmul,
    "idwt_level": _fw_level_matmul,
}

_VJP = {
    "add": _vjp_add,
    "sub": _vjp_sub,
    "mul": _vjp_mul,
    "scalar_mul": _vjp_scalar_mul,
    "matmul": _vjp_matmul,
    "bias_add": _vjp_bias_add,
    "gelu": _vjp_gelu,
    "square": _vjp_square,
    "sum": _vjp_sum,
    "mean": _vjp_mean,
    "slice_axis": _vjp_slice_axis,
    "concat": _vjp_concat,
    "boundary_overwrite": _vjp_boundary_overwrite,
    "circ_stencil": _vjp_circ_stencil,
    "dwt_level": _vjp_level_matmul,
    "idwt_level": _vjp_level_matmul,
}

PRIMITIVES = tuple(_FORWARD)


# ---------------------------------------------------------------------------
# dispatching op functions: record when any input is a Tensor, else evaluate
# the kernel directly

def _tape_of(*xs):
    for x in xs:
        if isinstance(x, Tensor):
            return x.tape
    return None


def _as_operand(x):
    if isinstance(x, Tensor) or isinstance(x, float):
        return x
    if isinstance(x, (int, np.floating, np.integer)):
        return float(x)
    return np.asarray(x, dtype=np.float64)


def add(a, b):
    a, b = _as_operand(a), _as_operand(b)
    tape = _tape_of(a, b)
    if tape is not None:
        return record(tape, "add", a, b)
    _shapes_equal(a, b, "add")
    return a + b


def sub(a, b):
    a, b = _as_operand(a), _as_operand(b)
    tape = _tape_of(a, b)
    if tape is not None:
        return record(tape, "sub", a, b)
    _shapes_equal(a, b, "sub")
    return a - b


def mul(a, b):
    a, b = _as_operand(a), _as_operand(b)
    tape = _tape_of(a, b)
    if tape is not None:
        return record(tape, "mul", a, b)
    _shapes_equal(a, b, "mul")
    return a * b


def scalar_mul(a, c: float):
    a = _as_operand(a)
    c = float(c)
    if isinstance(a, Tensor):
        return record(a.tape, "scalar_mul", a, scalar=c)
    return a * c


def matmul(w, v, channel_axis=None):
    w, v = _as_operand(w), _as_operand(v)
    tape = _tape_of(w, v)
    if tape is not None:
        return record(tape, "matmul", w, v, channel_axis=channel_axis)
    out, _ = _fw_matmul([w, v], {"channel_axis": channel_axis})
    return out


def bias_add(v, b, channel_axis=None):
    v, b = _as_operand(v), _as_operand(b)
    tape = _tape_of(v, b)
    params = {} if channel_axis is None else {"channel_axis": channel_axis}
    if tape is not None:
        return record(tape, "bias_add", v, b, **params)
    out, _ = _fw_bias_add([v, b], params)
    return out


def gelu(x):
    x = _as_operand(x)
    if isinstance(x, Tensor):
        return record(x.tape, "gelu", x)
    return k_gelu(x)


def square(x):
    x = _as_operand(x)
    if isinstance(x, Tensor):
        return record(x.tape, "square", x)
    return x * x


def total_sum(x):
    x = _as_operand(x)
    if isinstance(x, Tensor):
        return record(x.tape, "sum", x)
    return np.asarray(np.sum(x))


def total_mean(x):
    x = _as_operand(x)
    if isinstance(x, Tensor):
        return record(x.tape, "mean", x)
    return np.asarray(np.mean(x))


def slice_axis(x, axis: int, start: int, stop: int):
    x = _as_operand(x)
    if isinstance(x, Tensor):
        return record(x.tape, "slice_axis", x, axis=axis, start=start, stop=stop)
    out, _ = _fw_slice_axis([x], {"axis": axis, "start": start, "stop": stop})
    return out


def concat(a, b, axis: int):
    a, b = _as_operand(a), _as_operand(b)
    tape = _tape_of(a, b)
    if tape is not None:
        return record(tape, "concat", a, b, axis=axis)
    return np.concatenate([a, b], axis=axis)


def boundary_overwrite(x, mask, value: float):
    x = _as_operand(x)
    mask = np.asarray(mask, dtype=bool)
    if isinstance(x, Tensor):
        return record(x.tape, "boundary_overwrite", x, mask=mask, value=float(value))
    out, _ = _fw_boundary_overwrite([x], {"mask": mask, "value": float(value)})
    return out


def circ_stencil(x, taps, axis: int):
    x = _as_operand(x)
    taps = tuple((int(o), float(w)) for o, w in taps)
    if isinstance(x, Tensor):
        return record(x.tape, "circ_stencil", x, taps=taps, axis=axis)
    return k_circ_stencil(x, taps, axis)


def level_matmul(kind: str, matrix, x, axis: int):
    """Apply a constant per-level wavelet matrix along `axis`.

    `kind` tags the tape node as "dwt_level" or "idwt_level".
    """
    x = _as_operand(x)
    matrix = np.asarray(matrix, dtype=np.float64)
    if isinstance(x, Tensor):
        return record(x.tape, kind, x, matrix=matrix, axis=axis)
    out, _ = _fw_level_matmul([x], {"matrix": matrix, "axis": axis})
    return out


def value_of(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


# ---------------------------------------------------------------------------

def check_gradient(loss_fn, point, step: float) -> float:
    """Max relative disagreement between reverse-mode and central differences.

    `loss_fn` maps a Tensor to a scalar Tensor.  Relative error per coordinate
    is |autodiff - central| / (|central| + 1e-12).
    """
    if step <= 0:
        raise ValueError("step must be positive")
    point = np.asarray(point, dtype=np.float64)

    def eval_loss(values):
        tape = Tape()
        try:
            out = loss_fn(tape.leaf(values))
        except NonFiniteValue as exc:
            raise NonFiniteLoss(str(exc)) from exc
        val = float(value_of(out))
        if not np.isfinite(val):
            raise NonFiniteLoss("loss function returned a non-finite value")
        return out, tape

    tape = Tape()
    x = tape.leaf(point)
    try:
        out = loss_fn(x)
    except NonFiniteValue as exc:
        raise NonFiniteLoss(str(exc)) from exc
    if out.data.size != 1:
        raise NonScalarSeed("loss function must return a scalar")
    if not np.isfinite(float(out.data)):
        raise NonFiniteLoss("loss function returned a non-finite value")
    backward(tape, out)
    auto = grad_of(tape, x)

    flat = point.ravel()
    numeric = np.zeros_like(flat)
    for i in range(flat.size):
        bumped = flat.copy()
        bumped[i] = flat[i] + step
        hi, _ = eval_loss(bumped.reshape(point.shape))
        bumped[i] = flat[i] - step
        lo, _ = eval_loss(bumped.reshape(point.shape))
        numeric[i] = (float(value_of(hi)) - float(value_of(lo))) / (2.0 * step)
    numeric = numeric.reshape(point.shape)
    rel = np.abs(auto - numeric) / (np.abs(numeric) + 1e-12)
    return float(np.max(rel)) if rel.size else 0.0
