"""Dense float64 matrices with a minimal reverse-mode gradient tape.

Every value is a 2-D ``numpy`` array. A :class:`Tape` records each
differentiable operation in creation order, so walking the record backwards
is a valid reverse topological order. Only the left operand of ``matmul``
may be a ``scipy.sparse`` matrix, and only when it is a constant (input
features, aggregation operators).
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


def _as_matrix(value) -> np.ndarray | sp.spmatrix:
    if sp.issparse(value):
        return sp.csr_matrix(value, dtype=np.float64)
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise DimensionError(f"expected a matrix, got array of ndim {arr.ndim}")
    return arr


def _check_finite(value, op: str) -> None:
    data = value.data if sp.issparse(value) else value
    if not np.all(np.isfinite(data)):
        raise FloatingPointError(f"non-finite value produced by {op}")


class Tensor:
    """A matrix value plus an optional gradient slot on a :class:`Tape`."""

    __slots__ = ("value", "grad", "requires_grad", "tape", "parents", "backward_fn", "op")

    def __init__(self, value, tape: Optional["Tape"] = None, requires_grad: bool = False,
                 parents: Sequence["Tensor"] = (), backward_fn=None, op: str = "leaf"):
        self.value = _as_matrix(value)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.tape = tape
        self.parents = tuple(parents)
        self.backward_fn = backward_fn
        self.op = op

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def item(self) -> float:
        if self.shape != (1, 1):
            raise DimensionError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.value[0, 0])

    def numpy(self) -> np.ndarray:
        return self.value.toarray() if sp.issparse(self.value) else self.value

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        if isinstance(other, Tensor):
            return add(self, other)
        return shift(self, float(other))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return sub(self, other)
        return shift(self, -float(other))

    def __rsub__(self, other):
        return shift(scale(self, -1.0), float(other))

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            if other.shape == (1, 1) and self.shape != (1, 1):
                return div_scalar(self, other)
            return div(self, other)
        return scale(self, 1.0 / float(other))

    def __neg__(self):
        return scale(self, -1.0)

    @property
    def T(self):
        return transpose(self)


class Tape:
    """Records operations so that :meth:`backward` can replay them in reverse."""

    def __init__(self):
        self.nodes: list[Tensor] = []
        self.leaves: list[Tensor] = []

    def __len__(self) -> int:
        return len(self.nodes)

    def variable(self, value) -> Tensor:
        t = Tensor(value, tape=self, requires_grad=True)
        if sp.issparse(t.value):
            raise TypeError("sparse variables are not supported")
        _check_finite(t.value, "variable")
        self.leaves.append(t)
        return t

    def constant(self, value) -> Tensor:
        return Tensor(value, tape=self, requires_grad=False)

    def record(self, value, parents: Sequence[Tensor], backward_fn, op: str) -> Tensor:
        _check_finite(value, op)
        needs = any(p.requires_grad for p in parents)
        out = Tensor(value, tape=self, requires_grad=needs,
                     parents=parents if needs else (), backward_fn=backward_fn if needs else None,
                     op=op)
        if needs:
            self.nodes.append(out)
        return out

    def backward(self, out: Tensor, retain_graph: bool = False) -> None:
        """Accumulate d(out)/d(leaf) into every variable's ``grad``.

        The recorded graph is released afterwards unless ``retain_graph``;
        nodes point back at the tape, so keeping them would hold every
        intermediate array until the cycle collector runs.
        """
        if out.shape != (1, 1):
            raise DimensionError(f"backward needs a scalar (1x1) output, got {out.shape}")
        for leaf in self.leaves:
            leaf.grad = np.zeros_like(leaf.value)
        for node in self.nodes:
            node.grad = None
        out.grad = np.ones((1, 1))
        for node in reversed(self.nodes):
            if node.grad is None:
                continue
            grads = node.backward_fn(node.grad)
            for parent, g in zip(node.parents, grads):
                if g is None or not parent.requires_grad:
                    continue
                parent.grad = g if parent.grad is None else parent.grad + g
        if not retain_graph:
            self.release()

    def release(self) -> None:
        for node in self.nodes:
            node.parents, node.backward_fn, node.grad = (), None, None
        self.nodes.clear()


def _tape_of(*tensors: Tensor) -> Tape:
    for t in tensors:
        if t.tape is not None:
            return t.tape
    return Tape()


def _dense(x: Tensor) -> np.ndarray:
    if sp.issparse(x.value):
        raise TypeError(f"operation does not accept sparse operands ({x.op})")
    return x.value


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# ---------------------------------------------------------------------------
# arithmetic


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: {a.shape} @ {b.shape}")
    if sp.issparse(b.value):
        raise TypeError("matmul: only the left operand may be sparse")
    if sp.issparse(a.value) and a.requires_grad:
        raise TypeError("matmul: a sparse left operand must be constant")
    av, bv = a.value, b.value
    value = av @ bv
    if sp.issparse(value):
        value = value.toarray()

    def backward(g):
        ga = g @ bv.T if a.requires_grad else None
        gb = (av.T @ g) if b.requires_grad else None
        if gb is not None and sp.issparse(gb):
            gb = gb.toarray()
        return ga, gb

    return _tape_of(a, b).record(np.asarray(value), (a, b), backward, "matmul")


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; ``b`` may also be a 1xD row broadcast over the rows of ``a``."""
    av, bv = _dense(a), _dense(b)
    row_broadcast = b.shape[0] == 1 and a.shape[0] != 1 and a.shape[1] == b.shape[1]
    if not row_broadcast:
        _same_shape(a, b, "add")

    def backward(g):
        return g, (g.sum(axis=0, keepdims=True) if row_broadcast else g)

    return _tape_of(a, b).record(av + bv, (a, b), backward, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")

    def backward(g):
        return g, -g

    return _tape_of(a, b).record(_dense(a) - _dense(b), (a, b), backward, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "mul")
    av, bv = _dense(a), _dense(b)

    def backward(g):
        return g * bv, g * av

    return _tape_of(a, b).record(av * bv, (a, b), backward, "mul")


def div(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "div")
    av, bv = _dense(a), _dense(b)
    value = av / bv

    def backward(g):
        gb = -g * value / bv if b.requires_grad else None
        return g / bv, gb

    return _tape_of(a, b).record(value, (a, b), backward, "div")


def div_scalar(a: Tensor, s: Tensor) -> Tensor:
    """Divide every entry of ``a`` by the 1x1 tensor ``s``."""
    if s.shape != (1, 1):
        raise DimensionError(f"div_scalar: divisor must be 1x1, got {s.shape}")
    av, sv = _dense(a), float(s.value[0, 0])
    value = av / sv

    def backward(g):
        gs = np.array([[-(g * value).sum() / sv]]) if s.requires_grad else None
        return g / sv, gs

    return _tape_of(a, s).record(value, (a, s), backward, "div_scalar")


def scale(a: Tensor, c: float) -> Tensor:
    def backward(g):
        return (g * c,)

    return _tape_of(a).record(_dense(a) * c, (a,), backward, "scale")


def shift(a: Tensor, c: float) -> Tensor:
    def backward(g):
        return (g,)

    return _tape_of(a).record(_dense(a) + c, (a,), backward, "shift")


def add_diag(a: Tensor, c: float) -> Tensor:
    """``a + c * I`` for square ``a``."""
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"add_diag: square matrix required, got {a.shape}")
    value = _dense(a) + c * np.eye(a.shape[0])

    def backward(g):
        return (g,)

    return _tape_of(a).record(value, (a,), backward, "add_diag")


def transpose(a: Tensor) -> Tensor:
    def backward(g):
        return (g.T,)

    return _tape_of(a).record(_dense(a).T.copy(), (a,), backward, "transpose")


def square(a: Tensor) -> Tensor:
    av = _dense(a)

    def backward(g):
        return (2.0 * g * av,)

    return _tape_of(a).record(av * av, (a,), backward, "square")


def sqrt(a: Tensor) -> Tensor:
    av = _dense(a)
    if np.any(av < 0):
        raise FloatingPointError("sqrt of a negative entry")
    value = np.sqrt(av)

    def backward(g):
        return (g * 0.5 / value,)

    return _tape_of(a).record(value, (a,), backward, "sqrt")


def relu(a: Tensor) -> Tensor:
    av = _dense(a)
    mask = av > 0

    def backward(g):
        return (g * mask,)

    return _tape_of(a).record(av * mask, (a,), backward, "relu")


def dropout(a: Tensor, rate: float, rng: Optional[np.random.Generator], training: bool) -> Tensor:
    """Inverted dropout. Identity when not training or ``rate == 0``."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return a
    if rng is None:
        raise ValueError("dropout in training mode needs an explicit random generator")
    keep = (rng.random(a.shape) >= rate) / (1.0 - rate)

    def backward(g):
        return (g * keep,)

    return _tape_of(a).record(_dense(a) * keep, (a,), backward, "dropout")


def sum_all(a: Tensor) -> Tensor:
    av = _dense(a)

    def backward(g):
        return (np.full(av.shape, g[0, 0]),)

    return _tape_of(a).record(np.array([[av.sum()]]), (a,), backward, "sum")


def mean(a: Tensor) -> Tensor:
    av = _dense(a)
    n = av.size

    def backward(g):
        return (np.full(av.shape, g[0, 0] / n),)

    return _tape_of(a).record(np.array([[av.mean()]]), (a,), backward, "mean")


def row_sum(a: Tensor) -> Tensor:
    av = _dense(a)

    def backward(g):
        return (np.broadcast_to(g, av.shape).copy(),)

    return _tape_of(a).record(av.sum(axis=1, keepdims=True), (a,), backward, "row_sum")


def trace(a: Tensor) -> Tensor:
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"trace: square matrix required, got {a.shape}")
    av = _dense(a)

    def backward(g):
        return (g[0, 0] * np.eye(av.shape[0]),)

    return _tape_of(a).record(np.array([[np.trace(av)]]), (a,), backward, "trace")


def diag(a: Tensor) -> Tensor:
    """Diagonal of a square matrix as a 1xD row."""
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"diag: square matrix required, got {a.shape}")
    av = _dense(a)

    def backward(g):
        return (np.diag(g[0]),)

    return _tape_of(a).record(np.diag(av).reshape(1, -1).copy(), (a,), backward, "diag")


def center_columns(a: Tensor) -> Tensor:
    """Subtract the column mean (a broadcast row vector) from every row."""
    av = _dense(a)

    def backward(g):
        return (g - g.mean(axis=0, keepdims=True),)

    return _tape_of(a).record(av - av.mean(axis=0, keepdims=True), (a,), backward, "center_columns")


def row_normalize(a: Tensor) -> Tensor:
    """Scale each row to unit l2 norm; zero rows stay zero with zero gradient."""
    av = _dense(a)
    norms = np.sqrt((av * av).sum(axis=1, keepdims=True))
    nonzero = norms > 0
    safe = np.where(nonzero, norms, 1.0)
    value = np.where(nonzero, av / safe, 0.0)

    def backward(g):
        proj = (g * value).sum(axis=1, keepdims=True)
        return (np.where(nonzero, (g - value * proj) / safe, 0.0),)

    return _tape_of(a).record(value, (a,), backward, "row_normalize")


def logsumexp_rows(a: Tensor) -> Tensor:
    av = _dense(a)
    m = av.max(axis=1, keepdims=True)
    e = np.exp(av - m)
    s = e.sum(axis=1, keepdims=True)
    value = m + np.log(s)
    soft = e / s

    def backward(g):
        return (g * soft,)

    return _tape_of(a).record(value, (a,), backward, "logsumexp_rows")


def take_rows(a: Tensor, index) -> Tensor:
    idx = np.asarray(index, dtype=np.int64)
    av = _dense(a)

    def backward(g):
        out = np.zeros_like(av)
        np.add.at(out, idx, g)
        return (out,)

    return _tape_of(a).record(av[idx], (a,), backward, "take_rows")


def softmax_cross_entropy(logits: Tensor, labels, rows=None) -> Tensor:
    """Mean categorical cross-entropy over ``rows`` (all rows when ``None``)."""
    z = _dense(logits)
    y = np.asarray(labels, dtype=np.int64)
    if y.shape[0] != z.shape[0]:
        raise DimensionError(f"softmax_cross_entropy: {z.shape[0]} logits vs {y.shape[0]} labels")
    sel = np.arange(z.shape[0]) if rows is None else np.asarray(rows, dtype=np.int64)
    if sel.size == 0:
        raise ValueError("softmax_cross_entropy: empty row selection")
    zs = z[sel]
    m = zs.max(axis=1, keepdims=True)
    e = np.exp(zs - m)
    s = e.sum(axis=1, keepdims=True)
    logp = zs - m - np.log(s)
    ys = y[sel]
    value = -logp[np.arange(sel.size), ys].mean()
    prob = e / s

    def backward(g):
        d = prob.copy()
        d[np.arange(sel.size), ys] -= 1.0
        out = np.zeros_like(z)
        np.add.at(out, sel, d * (g[0, 0] / sel.size))
        return (out,)

    return _tape_of(logits).record(np.array([[value]]), (logits,), backward, "softmax_cross_entropy")


# ---------------------------------------------------------------------------
# numerics used outside the tape


def grad_check(f: Callable[[Tensor], Tensor], x, h: float = 1e-5) -> float:
    """Max relative deviation between tape gradients and central differences.

    ``f`` receives a :class:`Tensor` and must return a 1x1 tensor built on
    the same tape. The error per coordinate is
    ``|analytic - numeric| / max(1, |analytic|)``.
    """
    x0 = np.array(_as_matrix(x), dtype=np.float64)
    tape = Tape()
    xv = tape.variable(x0)
    out = f(xv)
    if not np.isfinite(out.item()):
        raise FloatingPointError("grad_check: f is not finite at x")
    tape.backward(out)
    analytic = xv.grad

    def evaluate(v):
        val = f(Tape().constant(v)).item()
        if not math.isfinite(val):
            raise FloatingPointError("grad_check: f is not finite at a perturbed point")
        return val

    worst = 0.0
    for idx in np.ndindex(*x0.shape):
        xp = x0.copy()
        xp[idx] += h
        xm = x0.copy()
        xm[idx] -= h
        numeric = (evaluate(xp) - evaluate(xm)) / (2.0 * h)
        a = analytic[idx]
        worst = max(worst, abs(a - numeric) / max(1.0, abs(a)))
    return worst


def _round_robin(m: int) -> list[tuple[np.ndarray, np.ndarray]]:
    # circle method: m even, m - 1 rounds of m/2 disjoint pairs
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        p = np.array([players[i] for i in range(m // 2)])
        q = np.array([players[m - 1 - i] for i in range(m // 2)])
        rounds.append((np.minimum(p, q), np.maximum(p, q)))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def eig_sym(m, tol: float = 1e-14, max_sweeps: int = 100,
            vectors: bool = True) -> tuple[np.ndarray, Optional[np.ndarray]]:
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Rotations run in round-robin order, n/2 disjoint pivots at a time, and
    are applied as row updates on the matrix and on its transpose. Returns
    eigenvalues ascending and the matching orthonormal eigenvectors as
    columns (``None`` when ``vectors`` is false).
    """
    a = np.array(_as_matrix(m), dtype=np.float64)
    n = a.shape[0]
    if a.shape[1] != n:
        raise DimensionError(f"eig_sym: square matrix required, got {a.shape}")
    scale_ = max(1.0, np.abs(a).max())
    if np.abs(a - a.T).max() > 1e-10 * scale_:
        raise ValueError("eig_sym: input is not symmetric")
    a = 0.5 * (a + a.T)
    vt = np.eye(n)
    rounds = []
    if n > 1:
        m_even = n + (n % 2)
        rounds = [(p[q < n], q[q < n]) for p, q in _round_robin(m_even)]
    total = np.sqrt((a * a).sum())
    off_mask = ~np.eye(n, dtype=bool)
    for _ in range(max_sweeps):
        if np.sqrt((a * a).sum(where=off_mask)) <= tol * total:
            break
        for p, q in rounds:
            apq = a[p, q]
            active = apq != 0
            if not active.all():
                if not active.any():
                    continue
                p, q, apq = p[active], q[active], apq[active]
            theta = (a[q, q] - a[p, p]) / (2.0 * apq)
            with np.errstate(over="ignore"):
                t = np.sign(theta) / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
            t[theta == 0] = 1.0
            c = (1.0 / np.sqrt(t * t + 1.0))[:, None]
            s = t[:, None] * c
            targets = (a, vt) if vectors else (a,)
            for mat in targets:
                rp, rq = mat[p], mat[q]
                mat[p] = c * rp - s * rq
                mat[q] = s * rp + c * rq
            # A' = J^T A J = J^T (J^T A)^T because A is symmetric
            a = np.ascontiguousarray(a.T)
            rp, rq = a[p], a[q]
            a[p] = c * rp - s * rq
            a[q] = s * rp + c * rq
    w = a.diagonal().copy()
    order = np.argsort(w, kind="stable")
    return w[order], (vt.T[:, order].copy() if vectors else None)


def covariance(h, eps: float = 0.0) -> np.ndarray:
    """Column covariance ``(1/N) Hc^T Hc + eps I`` with ``Hc`` column-centred."""
    hv = np.asarray(h.toarray() if sp.issparse(h) else h, dtype=np.float64)
    if hv.ndim != 2 or hv.shape[0] == 0:
        raise DimensionError("covariance needs a matrix with at least one row")
    if eps < 0:
        raise ValueError("eps must be non-negative")
    hc = hv - hv.mean(axis=0, keepdims=True)
    return hc.T @ hc / hv.shape[0] + eps * np.eye(hv.shape[1])


# ---------------------------------------------------------------------------
# snapshot format: headerless CSV plus "<path>.shape" holding "rows cols"


def save_matrix(path, matrix) -> Path:
    path = Path(path)
    arr = np.asarray(matrix, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError("save_matrix expects a 2-D array")
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, arr, delimiter=",", fmt="%.17g")
    Path(str(path) + ".shape").write_text(f"{arr.shape[0]} {arr.shape[1]}\n", encoding="utf-8")
    return path


def load_matrix(path) -> np.ndarray:
    path = Path(path)
    shape_file = Path(str(path) + ".shape")
    rows, cols = (int(t) for t in shape_file.read_text(encoding="utf-8").split())
    arr = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    if arr.size == 0:
        arr = arr.reshape(rows, cols)
    if arr.shape != (rows, cols):
        raise DimensionError(f"{path}: shape header says {(rows, cols)}, data is {arr.shape}")
    return arr
