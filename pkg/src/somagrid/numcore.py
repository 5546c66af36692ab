"""Dense float64 numerics with reverse-mode automatic differentiation.

Everything the agents compute runs through the small tensor/tape engine in
this module: affine layers, GRU gates, softmax/KL objectives, and the
optimizer. The design goals are bit-determinism and auditability, not speed;
networks here stay in the tens of thousands of parameters and numpy does the
inner arithmetic.

Gradient bookkeeping: operations record a node on the active `Tape` (ordered,
parents-before-children). `backward(loss)` walks the tape once in reverse and
accumulates dLoss/dLeaf into `.grad` of every `requires_grad` leaf. Repeated
backward calls accumulate until `zero_grads`. Any NaN/Inf produced by a
forward or backward computation raises `NumericsError` immediately.

The module also carries the dense linear-algebra routines used by the assay
layer: a cyclic Jacobi eigensolver for symmetric matrices and a PCA built on
it, both fully deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np


class ShapeError(ValueError):
    """Operand dimensions do not match the operation's contract."""


class ContractError(ValueError):
    """An operation was invoked outside its stated preconditions."""


class NumericsError(ArithmeticError):
    """A forward or backward pass produced NaN or Inf."""


def _check_finite(arr: np.ndarray, where: str) -> None:
    # a single-pass reduction: any NaN/Inf entry makes the sum non-finite
    if not math.isfinite(float(arr.sum())):
        raise NumericsError(f"non-finite values in {where}")


# ---------------------------------------------------------------------------
# Tensor and tape
# ---------------------------------------------------------------------------

_ACTIVE_TAPE: Optional["Tape"] = None


class TapeNode:
    __slots__ = ("parents", "bwd")

    def __init__(self, parents: Tuple["Tensor", ...], bwd: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]):
        self.parents = parents
        self.bwd = bwd


class Tape:
    """Ordered record of primitive operations.

    Node i's parents always precede it, so a single reverse walk visits each
    node exactly once. Use as a context manager around a differentiable
    computation; outside any tape, operations run forward-only.
    """

    def __init__(self):
        self.nodes: List[TapeNode] = []
        self._prev: Optional["Tape"] = None

    def __enter__(self) -> "Tape":
        global _ACTIVE_TAPE
        self._prev = _ACTIVE_TAPE
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, *exc) -> None:
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = self._prev
        self._prev = None

    def __len__(self) -> int:
        return len(self.nodes)


class Tensor:
    """Dense float64 array with optional participation in the active tape."""

    __slots__ = ("data", "grad", "requires_grad", "_node", "_tape")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        _check_finite(arr, "tensor construction")
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self._node: Optional[int] = None
        self._tape: Optional[Tape] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        """Value-only view: shares the buffer, drops tape membership."""
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    # operator sugar; const operands are promoted to non-grad tensors
    def __add__(self, other) -> "Tensor":
        return add(self, _promote(other))

    def __sub__(self, other) -> "Tensor":
        return add(self, scale(_promote(other), -1.0))

    def __mul__(self, other) -> "Tensor":
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, _promote(other))

    def __neg__(self) -> "Tensor":
        return scale(self, -1.0)

    def __matmul__(self, other) -> "Tensor":
        return matmul(self, _promote(other))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _promote(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


def _op(data: np.ndarray, parents: Tuple[Tensor, ...], bwd, name: str) -> Tensor:
    _check_finite(data, name)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    tape = _ACTIVE_TAPE
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._node = len(tape.nodes)
        out._tape = tape
        tape.nodes.append(TapeNode(parents, bwd))
    else:
        out.requires_grad = False
        out._node = None
        out._tape = None
    return out


def backward(loss: Tensor) -> None:
    """Accumulate dLoss/dLeaf into every reachable requires_grad leaf.

    `loss` must be a scalar. Visits each tape node at most once; repeated
    calls without zeroing accumulate gradients.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    seed = np.ones_like(loss.data)
    if loss._node is None:
        if loss.requires_grad:
            loss.grad = seed if loss.grad is None else loss.grad + seed
        return
    tape = loss._tape
    assert tape is not None
    pending: dict[int, np.ndarray] = {loss._node: seed}
    for i in range(loss._node, -1, -1):
        g = pending.pop(i, None)
        if g is None:
            continue
        _check_finite(g, "backward pass")
        node = tape.nodes[i]
        parent_grads = node.bwd(g)
        for p, pg in zip(node.parents, parent_grads):
            if pg is None or not p.requires_grad:
                continue
            if p._node is not None and p._tape is tape:
                cur = pending.get(p._node)
                pending[p._node] = pg if cur is None else cur + pg
            else:
                p.grad = pg if p.grad is None else p.grad + pg


def zero_grads(params: Sequence[Tensor]) -> None:
    for p in params:
        p.grad = None


# ---------------------------------------------------------------------------
# Primitive operations
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"add shapes {a.data.shape} vs {b.data.shape}")
    return _op(a.data + b.data, (a, b), lambda g: (g, g), "add")


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"mul shapes {a.data.shape} vs {b.data.shape}")
    ad, bd = a.data, b.data
    return _op(ad * bd, (a, b), lambda g: (g * bd, g * ad), "mul")


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _op(a.data * c, (a,), lambda g: (g * c,), "scale")


def mul_scalar(a: Tensor, s: Tensor) -> Tensor:
    """Vector times a 0-d tensor scalar (broadcasting multiply)."""
    if s.data.ndim != 0:
        raise ShapeError("mul_scalar needs a 0-d scalar tensor")
    ad, sd = a.data, float(s.data)
    return _op(ad * sd, (a, s), lambda g: (g * sd, np.asarray((g * ad).sum())), "mul_scalar")


def shift(a: Tensor, c: float) -> Tensor:
    """a + scalar constant."""
    return _op(a.data + float(c), (a,), lambda g: (g,), "shift")


def one_minus(a: Tensor) -> Tensor:
    return _op(1.0 - a.data, (a,), lambda g: (-g,), "one_minus")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product: (m,n)@(n,k) or (m,n)@(n,)."""
    ad, bd = a.data, b.data
    if ad.ndim != 2 or bd.ndim not in (1, 2) or ad.shape[1] != bd.shape[0]:
        raise ShapeError(f"matmul shapes {ad.shape} vs {bd.shape}")
    if bd.ndim == 1:
        def bwd(g):
            return (np.outer(g, bd), ad.T @ g)
    else:
        def bwd(g):
            return (g @ bd.T, ad.T @ g)
    return _op(ad @ bd, (a, b), bwd, "matmul")


def affine(w: Tensor, x: Tensor, b: Tensor) -> Tensor:
    """Fused w @ x + b for a vector x."""
    wd, xd, bd = w.data, x.data, b.data
    if wd.ndim != 2 or xd.ndim != 1 or wd.shape[1] != xd.shape[0] or bd.shape != (wd.shape[0],):
        raise ShapeError(f"affine shapes {wd.shape}, {xd.shape}, {bd.shape}")

    def bwd(g):
        return (np.outer(g, xd), wd.T @ g, g)

    return _op(wd @ xd + bd, (w, x, b), bwd, "affine")


def affine2(w: Tensor, x: Tensor, u: Tensor, h: Tensor, b: Tensor) -> Tensor:
    """Fused w @ x + u @ h + b (the recurrent-gate preactivation shape)."""
    wd, xd, ud, hd, bd = w.data, x.data, u.data, h.data, b.data
    if wd.shape[1] != xd.shape[0] or ud.shape[1] != hd.shape[0] or wd.shape[0] != ud.shape[0]:
        raise ShapeError("affine2 operand shapes disagree")

    def bwd(g):
        return (np.outer(g, xd), wd.T @ g, np.outer(g, hd), ud.T @ g, g)

    return _op(wd @ xd + ud @ hd + bd, (w, x, u, h, b), bwd, "affine2")


def outer(u: Tensor, v: Tensor) -> Tensor:
    ud, vd = u.data, v.data
    if ud.ndim != 1 or vd.ndim != 1:
        raise ShapeError("outer needs two vectors")
    return _op(np.outer(ud, vd), (u, v), lambda g: (g @ vd, g.T @ ud), "outer")


def reshape(a: Tensor, shape: Tuple[int, ...]) -> Tensor:
    old = a.data.shape
    return _op(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),), "reshape")


def flatten(a: Tensor) -> Tensor:
    return reshape(a, (a.data.size,))


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError("transpose needs a matrix")
    return _op(a.data.T.copy(), (a,), lambda g: (g.T,), "transpose")


def concat(parts: Sequence[Tensor]) -> Tensor:
    parts = list(parts)
    for p in parts:
        if p.data.ndim != 1:
            raise ShapeError("concat joins 1-D vectors")
    offsets = [0]
    for p in parts:
        offsets.append(offsets[-1] + p.data.shape[0])

    def bwd(g):
        return tuple(g[offsets[i]:offsets[i + 1]] for i in range(len(parts)))

    return _op(np.concatenate([p.data for p in parts]), tuple(parts), bwd, "concat")


def pick(a: Tensor, index: int) -> Tensor:
    """Scalar element a[index] of a vector."""
    if a.data.ndim != 1:
        raise ShapeError("pick needs a vector")
    idx = int(index)
    n = a.data.shape[0]

    def bwd(g):
        out = np.zeros(n)
        out[idx] = g
        return (out,)

    return _op(np.asarray(a.data[idx]), (a,), bwd, "pick")


def slice_vec(a: Tensor, start: int, stop: int) -> Tensor:
    if a.data.ndim != 1:
        raise ShapeError("slice_vec needs a vector")
    n = a.data.shape[0]

    def bwd(g):
        out = np.zeros(n)
        out[start:stop] = g
        return (out,)

    return _op(a.data[start:stop].copy(), (a,), bwd, "slice_vec")


def tensor_sum(a: Tensor) -> Tensor:
    shape = a.data.shape
    return _op(np.asarray(a.data.sum()), (a,), lambda g: (np.full(shape, float(g)),), "sum")


def tensor_mean(a: Tensor) -> Tensor:
    shape = a.data.shape
    n = a.data.size
    return _op(np.asarray(a.data.mean()), (a,), lambda g: (np.full(shape, float(g) / n),), "mean")


def add_n(parts: Sequence[Tensor]) -> Tensor:
    """Sum of same-shape tensors in one node (loss accumulation)."""
    parts = tuple(parts)
    if not parts:
        raise ContractError("add_n needs at least one operand")
    total = parts[0].data.copy()
    for p in parts[1:]:
        if p.data.shape != parts[0].data.shape:
            raise ShapeError("add_n operands must share a shape")
        total = total + p.data
    return _op(total, parts, lambda g: tuple(g for _ in parts), "add_n")


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return _op(y, (a,), lambda g: (g * (1.0 - y * y),), "tanh")


def logistic(a: Tensor) -> Tensor:
    y = _sigmoid(a.data)
    return _op(y, (a,), lambda g: (g * y * (1.0 - y),), "logistic")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_scalar(x: float) -> float:
    """Stable logistic for plain floats (environment-side readout)."""
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    ex = math.exp(x)
    return ex / (1.0 + ex)


def log(a: Tensor, floor: float = 1e-8) -> Tensor:
    xf = np.maximum(a.data, floor)
    live = a.data >= floor

    def bwd(g):
        return (g * live / xf,)

    return _op(np.log(xf), (a,), bwd, "log")


def softmax(v: Tensor, temperature: float = 1.0) -> Tensor:
    """Temperature softmax over a vector; entries positive, sum to one."""
    if temperature <= 0:
        raise ValueError(f"softmax temperature must be positive, got {temperature}")
    if v.data.ndim != 1:
        raise ShapeError("softmax needs a vector")
    z = v.data / temperature
    z = z - z.max()
    e = np.exp(z)
    y = e / e.sum()

    def bwd(g):
        return ((y * (g - float(g @ y))) / temperature,)

    return _op(y, (v,), bwd, "softmax")


def log_softmax(v: Tensor) -> Tensor:
    if v.data.ndim != 1:
        raise ShapeError("log_softmax needs a vector")
    z = v.data - v.data.max()
    ls = z - math.log(np.exp(z).sum())
    p = np.exp(ls)

    def bwd(g):
        return (g - p * g.sum(),)

    return _op(ls, (v,), bwd, "log_softmax")


def kl_divergence(q, p: Tensor, floor: float = 1e-8) -> Tensor:
    """KL(q || p) for probability vectors; p is floored at `floor` inside the log.

    `q` may be a plain array (the usual detached-target case) or a tensor,
    in which case gradient flows into it as well.
    """
    q_t = _promote(q)
    qd, pd = q_t.data, p.data
    if qd.shape != pd.shape or qd.ndim != 1:
        raise ShapeError(f"kl_divergence over mismatched supports {qd.shape} vs {pd.shape}")
    pf = np.maximum(pd, floor)
    qf = np.maximum(qd, floor)
    live_q = qd > 0.0
    terms = np.where(live_q, qd * (np.log(qf) - np.log(pf)), 0.0)
    val = np.asarray(terms.sum())

    def bwd(g):
        gq = float(g) * np.where(live_q, np.log(qf) - np.log(pf) + 1.0, 0.0)
        gp = float(g) * np.where((pd >= floor) & live_q, -qd / pf, 0.0)
        return (gq, gp)

    return _op(val, (q_t, p), bwd, "kl_divergence")


def mse(a: Tensor, target) -> Tensor:
    """Mean squared error against a constant target."""
    t = np.asarray(target, dtype=np.float64)
    if t.shape != a.data.shape:
        raise ShapeError(f"mse shapes {a.data.shape} vs {t.shape}")
    diff = a.data - t
    n = diff.size

    def bwd(g):
        return (float(g) * 2.0 * diff / n,)

    return _op(np.asarray((diff * diff).mean()), (a,), bwd, "mse")


def tril_from_vector(v: Tensor, n: int) -> Tensor:
    """Scatter a length n(n+1)/2 vector into the lower triangle of an n x n matrix."""
    rows, cols = np.tril_indices(n)
    if v.data.shape != (rows.size,):
        raise ShapeError(f"need {rows.size} entries for a {n}x{n} lower triangle")
    m = np.zeros((n, n))
    m[rows, cols] = v.data

    def bwd(g):
        return (g[rows, cols],)

    return _op(m, (v,), bwd, "tril_from_vector")


# ---------------------------------------------------------------------------
# Parameters, initialization, GRU cell
# ---------------------------------------------------------------------------

def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def init_affine(rng: np.random.Generator, out_dim: int, in_dim: int) -> Tuple[Tensor, Tensor]:
    """Weight uniform in +-1/sqrt(fan_in), bias zero."""
    bound = 1.0 / math.sqrt(in_dim)
    w = parameter(rng.uniform(-bound, bound, size=(out_dim, in_dim)))
    b = parameter(np.zeros(out_dim))
    return w, b


class GruCell:
    """Gated recurrent cell over float64 vectors.

    Gate convention: the update gate carries the previous hidden state, so an
    update gate saturated at 1 returns h unchanged. Candidate activation is
    tanh, keeping hidden entries in (-1, 1).
    """

    def __init__(self, input_dim: int, hidden_dim: int, rng: np.random.Generator):
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.w_update, self.b_update = init_affine(rng, hidden_dim, input_dim)
        self.u_update = parameter(rng.uniform(-1 / math.sqrt(hidden_dim), 1 / math.sqrt(hidden_dim), (hidden_dim, hidden_dim)))
        self.w_reset, self.b_reset = init_affine(rng, hidden_dim, input_dim)
        self.u_reset = parameter(rng.uniform(-1 / math.sqrt(hidden_dim), 1 / math.sqrt(hidden_dim), (hidden_dim, hidden_dim)))
        self.w_cand, self.b_cand = init_affine(rng, hidden_dim, input_dim)
        self.u_cand = parameter(rng.uniform(-1 / math.sqrt(hidden_dim), 1 / math.sqrt(hidden_dim), (hidden_dim, hidden_dim)))

    def parameters(self) -> List[Tensor]:
        return [
            self.w_update, self.u_update, self.b_update,
            self.w_reset, self.u_reset, self.b_reset,
            self.w_cand, self.u_cand, self.b_cand,
        ]

    def named_parameters(self, prefix: str = "gru") -> List[Tuple[str, Tensor]]:
        names = ["w_update", "u_update", "b_update", "w_reset", "u_reset", "b_reset", "w_cand", "u_cand", "b_cand"]
        return [(f"{prefix}.{n}", t) for n, t in zip(names, self.parameters())]


def gru_step(cell: GruCell, x: Tensor, h: Tensor) -> Tensor:
    if x.data.shape != (cell.input_dim,) or h.data.shape != (cell.hidden_dim,):
        raise ShapeError(
            f"gru_step got x {x.data.shape}, h {h.data.shape}; cell wants ({cell.input_dim},), ({cell.hidden_dim},)"
        )
    update = logistic(affine2(cell.w_update, x, cell.u_update, h, cell.b_update))
    reset = logistic(affine2(cell.w_reset, x, cell.u_reset, h, cell.b_reset))
    cand = tanh(affine2(cell.w_cand, x, cell.u_cand, mul(reset, h), cell.b_cand))
    return add(mul(update, h), mul(one_minus(update), cand))


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------

class Adam:
    """Standard Adam with bias correction; updates parameter data in place."""

    def __init__(self, params: Sequence[Tensor], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            g = p.grad
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * (g * g)
            m_hat = self.m[i] / b1c
            v_hat = self.v[i] / b2c
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
            _check_finite(p.data, "adam update")

    def zero_grad(self) -> None:
        zero_grads(self.params)

    def state_arrays(self) -> dict:
        return {"t": self.t, "m": self.m, "v": self.v}

    def load_state_arrays(self, state: dict) -> None:
        self.t = int(state["t"])
        self.m = [np.asarray(a, dtype=np.float64).reshape(p.data.shape) for a, p in zip(state["m"], self.params)]
        self.v = [np.asarray(a, dtype=np.float64).reshape(p.data.shape) for a, p in zip(state["v"], self.params)]


# ---------------------------------------------------------------------------
# Symmetric eigensolver and PCA (assay-side, not differentiable)
# ---------------------------------------------------------------------------

def jacobi_eigh(matrix: np.ndarray, tol: float = 1e-12, max_sweeps: int = 100) -> Tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi diagonalization of a symmetric matrix.

    Returns (eigenvalues ascending, eigenvectors as columns). Deterministic:
    fixed sweep order, no pivot randomization.
    """
    a = np.array(matrix, dtype=np.float64)
    n = a.shape[0]
    v = np.eye(n)
    scale_ref = max(1.0, float(np.abs(np.diag(a)).max()))
    for _ in range(max_sweeps):
        off = math.sqrt(max(0.0, float((a * a).sum() - (np.diag(a) ** 2).sum())))
        if off <= tol * scale_ref * n:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                # entries negligible against their diagonal cannot move the
                # spectrum; zero them instead of rotating
                if abs(apq) <= 1e-18 * (abs(a[p, p]) + abs(a[q, q]) + 1e-300):
                    a[p, q] = a[q, p] = 0.0
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e130:
                    t = 1.0 / (2.0 * theta)
                else:
                    t = 1.0 / (abs(theta) + math.sqrt(theta * theta + 1.0))
                    if theta < 0:
                        t = -t
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rot_p = a[p, :].copy()
                rot_q = a[q, :].copy()
                a[p, :] = c * rot_p - s * rot_q
                a[q, :] = s * rot_p + c * rot_q
                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                vcol_p = v[:, p].copy()
                vcol_q = v[:, q].copy()
                v[:, p] = c * vcol_p - s * vcol_q
                v[:, q] = s * vcol_p + c * vcol_q
    eigvals = np.diag(a).copy()
    order = np.argsort(eigvals, kind="stable")
    return eigvals[order], v[:, order]


def symmetric_eigenvalues(matrix: np.ndarray, sym_tol: float = 1e-9) -> np.ndarray:
    """Ascending eigenvalues of a symmetric matrix (asymmetry is a contract error)."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ShapeError(f"need a square matrix, got {m.shape}")
    if float(np.abs(m - m.T).max(initial=0.0)) > sym_tol:
        raise ContractError("matrix is not symmetric within tolerance")
    sym = 0.5 * (m + m.T)
    vals, _ = jacobi_eigh(sym)
    return vals


@dataclass
class PcaResult:
    components: np.ndarray          # (k, d), orthonormal rows
    projected: np.ndarray           # (n, k)
    explained_variance: np.ndarray  # (k,)
    mean: np.ndarray                # (d,)
    degenerate: bool = field(default=False)


def pca_fit_project(rows: np.ndarray, n_components: int) -> PcaResult:
    """PCA by Jacobi diagonalization of the column-centered covariance.

    Sign convention: each component's largest-magnitude entry is positive.
    All-equal rows are flagged degenerate with zero projections.
    """
    x = np.asarray(rows, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError("pca_fit_project needs a 2-D row matrix")
    n, d = x.shape
    if n_components < 1 or n_components > d:
        raise ContractError(f"n_components {n_components} out of range for dim {d}")
    if n < n_components:
        raise ContractError(f"need at least {n_components} rows, got {n}")
    mean = x.mean(axis=0)
    xc = x - mean
    denom = max(n - 1, 1)
    total_var = float((xc * xc).sum()) / denom
    if total_var <= 1e-15:
        comps = np.eye(d)[:n_components]
        return PcaResult(comps, np.zeros((n, n_components)), np.zeros(n_components), mean, degenerate=True)
    cov = (xc.T @ xc) / denom
    vals, vecs = jacobi_eigh(cov)
    order = np.argsort(vals, kind="stable")[::-1][:n_components]
    comps = vecs[:, order].T.copy()
    for i in range(comps.shape[0]):
        j = int(np.argmax(np.abs(comps[i])))
        if comps[i, j] < 0:
            comps[i] = -comps[i]
    projected = xc @ comps.T
    return PcaResult(comps, projected, np.maximum(vals[order], 0.0), mean, degenerate=False)
