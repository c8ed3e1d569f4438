"""Standard interpretation of diagrams as exact complex matrices.

Evaluation is pure tensor contraction over the multigraph: every wire is a
summed index of dimension 2, Z spiders are the all-zero tensor with 1 at
0...0 and e^(i*alpha) at 1...1, X spiders are the Hadamard conjugate of
that, H boxes the 2x2 Hadamard.  Self-loops and parallel wires need no
special casing.  Column index encodes input bits with input port 0 as the
most significant bit; rows likewise for outputs.
"""

from __future__ import annotations

import cmath
import math
from fractions import Fraction

import numpy as np

from .cyclo import CycloNumber, NonDyadicPhaseError
from .diagram import Diagram, Endpoint, compose
from .phase import Phase

DEFAULT_WIRE_LIMIT = 16


class EvaluationError(ValueError):
    """Size limit exceeded or malformed evaluation request."""


class Matrix:
    """Dense 2^m x 2^n matrix with CycloNumber (exact) or complex entries."""

    def __init__(self, array: np.ndarray, exact: bool) -> None:
        self.array = array
        self.exact = exact

    @property
    def rows(self) -> int:
        return self.array.shape[0]

    @property
    def cols(self) -> int:
        return self.array.shape[1]

    def to_complex(self) -> np.ndarray:
        if not self.exact:
            return self.array
        out = np.zeros(self.array.shape, dtype=complex)
        for idx, val in np.ndenumerate(self.array):
            out[idx] = val.to_complex()
        return out

    def entry_strings(self) -> list[list[str]]:
        if self.exact:
            return [[str(v) for v in row] for row in self.array]
        return [[f"{v.real:+.6g}{v.imag:+.6g}j" for v in row] for row in self.array]

    def __repr__(self) -> str:
        return f"Matrix({self.rows}x{self.cols}, exact={self.exact})"


def matrices_equal(a: Matrix, b: Matrix, exact: bool = True,
                   tol: float = 1e-9) -> bool:
    """Entrywise equality; exact mode uses CycloNumber zero tests."""
    if a.array.shape != b.array.shape:
        raise EvaluationError("matrix dimensions differ")
    if exact and a.exact and b.exact:
        for idx, val in np.ndenumerate(a.array):
            if not (val - b.array[idx]).is_zero():
                return False
        return True
    ca, cb = a.to_complex(), b.to_complex()
    return bool(np.max(np.abs(ca - cb)) < tol) if ca.size else True


# -- tensor backends ---------------------------------------------------------

class _Exact:
    dtype = object

    @staticmethod
    def phase(p: Phase):
        return CycloNumber.from_phase(p)

    zero = staticmethod(CycloNumber.zero)
    one = staticmethod(CycloNumber.one)

    @staticmethod
    def inv_sqrt2_pow(d: int):
        return CycloNumber.sqrt2_power(-d)


class _Float:
    dtype = complex

    @staticmethod
    def phase(p: Phase) -> complex:
        return cmath.exp(1j * p.to_float())

    @staticmethod
    def zero() -> complex:
        return 0j

    @staticmethod
    def one() -> complex:
        return 1 + 0j

    @staticmethod
    def inv_sqrt2_pow(d: int) -> complex:
        return 2.0 ** (-d / 2.0)


def _zeros(backend, shape):
    if backend.dtype is object:
        arr = np.empty(shape, dtype=object)
        z = backend.zero()
        for idx in np.ndindex(*shape) if shape else [()]:
            arr[idx] = z
        return arr
    return np.zeros(shape, dtype=complex)


def _spider_tensor(backend, kind: str, phase: Phase | None, degree: int):
    if kind == "H":
        arr = _zeros(backend, (2, 2))
        s = backend.inv_sqrt2_pow(1)
        arr[0, 0] = s
        arr[0, 1] = s
        arr[1, 0] = s
        arr[1, 1] = -s
        return arr
    e = backend.phase(phase)
    if degree == 0:
        arr = _zeros(backend, ())
        arr[()] = backend.one() + e
        return arr
    if kind == "Z":
        arr = _zeros(backend, (2,) * degree)
        arr[(0,) * degree] = backend.one()
        arr[(1,) * degree] = e
        return arr
    # X spider: Hadamard conjugate of the Z tensor on every leg
    arr = _zeros(backend, (2,) * degree)
    norm = backend.inv_sqrt2_pow(degree)
    for idx in np.ndindex(*(2,) * degree):
        parity = sum(idx) % 2
        val = backend.one() + e if parity == 0 else backend.one() - e
        arr[idx] = norm * val
    return arr


# -- contraction engine ------------------------------------------------------

class _Node:
    __slots__ = ("tensor", "legs")

    def __init__(self, tensor, legs: list[int]) -> None:
        self.tensor = _as_array(tensor)
        self.legs = legs  # wire ids, one per axis


def _as_array(tensor) -> np.ndarray:
    if isinstance(tensor, np.ndarray):
        return tensor
    arr = np.empty((), dtype=object if isinstance(tensor, CycloNumber) else complex)
    arr[()] = tensor
    return arr


def _trace_node(node: _Node) -> None:
    """Contract any wire appearing twice among this node's legs."""
    while True:
        seen: dict[int, int] = {}
        pair = None
        for ax, w in enumerate(node.legs):
            if w in seen:
                pair = (seen[w], ax)
                break
            seen[w] = ax
        if pair is None:
            return
        a1, a2 = pair
        node.tensor = _as_array(np.trace(node.tensor, axis1=a1, axis2=a2))
        node.legs = [w for ax, w in enumerate(node.legs) if ax not in (a1, a2)]


def _contract_pair(n1: _Node, n2: _Node) -> _Node:
    shared = [w for w in n1.legs if w in n2.legs]
    ax1 = [n1.legs.index(w) for w in shared]
    # legs are unique per node after tracing, so index() is safe
    ax2 = [n2.legs.index(w) for w in shared]
    tensor = np.tensordot(n1.tensor, n2.tensor, axes=(ax1, ax2))
    legs = [w for w in n1.legs if w not in shared] + \
           [w for w in n2.legs if w not in shared]
    node = _Node(tensor, legs)
    _trace_node(node)
    return node


def _contract_network(nodes: list[_Node], rank_limit: int) -> _Node:
    """Greedily contract until no wire is shared between two nodes."""
    for node in nodes:
        _trace_node(node)
    while True:
        best = None
        for i in range(len(nodes)):
            legs_i = set(nodes[i].legs)
            for j in range(i + 1, len(nodes)):
                shared = legs_i.intersection(nodes[j].legs)
                if not shared:
                    continue
                rank = len(nodes[i].legs) + len(nodes[j].legs) - 2 * len(shared)
                if best is None or rank < best[0]:
                    best = (rank, i, j)
        if best is None:
            break
        rank, i, j = best
        if rank > rank_limit:
            raise EvaluationError(
                f"contraction would create a rank-{rank} tensor "
                f"(limit {rank_limit})")
        merged = _contract_pair(nodes[i], nodes[j])
        nodes = [n for k, n in enumerate(nodes) if k not in (i, j)]
        nodes.append(merged)
    # combine disconnected pieces (open legs and scalar components)
    result = nodes[0]
    for other in nodes[1:]:
        tensor = np.multiply.outer(result.tensor, other.tensor)
        result = _Node(tensor, result.legs + other.legs)
    return result


def _network(d: Diagram, backend, rank_limit: int) -> tuple[_Node, dict[Endpoint, int]]:
    """Contract d's internal wires; return the open node and port->wire map."""
    incident: dict[int, list[int]] = {v: [] for v in d.vertices}
    port_wire: dict[Endpoint, int] = {}
    extra_nodes: list[_Node] = []
    next_wire = len(d.wires)
    for i, (a, b) in enumerate(d.wires):
        if a[0] != "v" and b[0] != "v":
            # port-to-port wire: identity tensor keeps both ends open
            ida, idb = i, next_wire
            next_wire += 1
            ident = _zeros(backend, (2, 2))
            ident[0, 0] = backend.one()
            ident[1, 1] = backend.one()
            extra_nodes.append(_Node(ident, [ida, idb]))
            port_wire[a] = ida
            port_wire[b] = idb
            continue
        for ep in (a, b):
            if ep[0] == "v":
                incident[ep[1]].append(i)
            else:
                port_wire[ep] = i
    nodes = []
    for v in sorted(d.vertices):
        data = d.vertices[v]
        legs = incident[v]
        nodes.append(_Node(_spider_tensor(backend, data.kind, data.phase,
                                          len(legs)), list(legs)))
    nodes.extend(extra_nodes)
    if not nodes:
        nodes = [_Node(_one_scalar(backend), [])]
    result = _contract_network(nodes, rank_limit)
    if d.loops:
        two = backend.one() + backend.one()
        factor = two
        for _ in range(d.loops - 1):
            factor = factor * two
        result.tensor = _as_array(result.tensor * factor)
    return result, port_wire


def _one_scalar(backend):
    arr = _zeros(backend, ())
    arr[()] = backend.one()
    return arr


def evaluate(d: Diagram, exact: bool = True,
             wire_limit: int = DEFAULT_WIRE_LIMIT) -> Matrix:
    """The standard interpretation of d as a 2^m x 2^n matrix.

    Raises NonDyadicPhaseError in exact mode when a phase denominator is
    not a power of two, and EvaluationError past the size limit.
    """
    if d.n_inputs + d.n_outputs > wire_limit:
        raise EvaluationError(
            f"boundary has {d.n_inputs + d.n_outputs} wires (limit {wire_limit})")
    backend = _Exact if exact else _Float
    if exact:
        for data in d.vertices.values():
            if data.phase is not None and not data.phase.is_dyadic():
                raise NonDyadicPhaseError(
                    f"phase {data.phase} is not dyadic; evaluate with exact=False")
    node, port_wire = _network(d, backend, rank_limit=wire_limit + 2)
    order: list[int] = []
    for j in range(d.n_outputs):
        order.append(port_wire[("out", j)])
    for i in range(d.n_inputs):
        order.append(port_wire[("in", i)])
    perm = [node.legs.index(w) for w in order]
    tensor = node.tensor.transpose(perm) if order else node.tensor
    matrix = tensor.reshape(2 ** d.n_outputs, 2 ** d.n_inputs)
    return Matrix(matrix, exact)


def scalar_of(d: Diagram, exact: bool = True) -> CycloNumber | complex:
    """The unique entry of a 0->0 diagram."""
    if not d.is_scalar():
        raise EvaluationError("scalar_of requires a diagram with empty boundary")
    return evaluate(d, exact=exact).array[0, 0]


# -- semantic equality without materializing big matrices --------------------

def _dagger(d: Diagram) -> Diagram:
    return d.phases_negated().flipped()


def _closed_trace(d: Diagram) -> Diagram:
    """Join output j to input j, yielding a 0->0 diagram (the trace)."""
    if d.n_inputs != d.n_outputs:
        raise EvaluationError("trace requires equal arities")
    n = d.n_inputs
    if n == 0:
        return d
    from .diagram import make_generator, tensor as dtensor
    caps = make_generator("cap", 0, 2)
    cups = make_generator("cup", 2, 0)
    top = caps
    bot = cups
    for _ in range(n - 1):
        top = dtensor(top, caps)
        bot = dtensor(bot, cups)
    # top: 0 -> 2n with connected pairs (2i, 2i+1); route the first partner
    # of each pair into d's input i and keep the second for the cup below.
    perm_wires = []
    for i in range(n):
        perm_wires.append((("in", 2 * i), ("out", i)))
        perm_wires.append((("in", 2 * i + 1), ("out", n + i)))
    perm = Diagram({}, 2 * n, 2 * n, perm_wires)
    perm2_wires = []
    for i in range(n):
        perm2_wires.append((("in", i), ("out", 2 * i)))
        perm2_wires.append((("in", n + i), ("out", 2 * i + 1)))
    perm2 = Diagram({}, 2 * n, 2 * n, perm2_wires)
    ident = Diagram({}, n, n, [(("in", i), ("out", i)) for i in range(n)])
    middle = dtensor(d, ident)
    return compose(compose(compose(compose(top, perm), middle), perm2), bot)


def _gram(d1: Diagram, d2: Diagram) -> CycloNumber:
    """Frobenius inner product <d2, d1> = Tr(d2^dagger . d1), exactly."""
    return scalar_of(_closed_trace(compose(d1, _dagger(d2))))


def diagrams_equal(d1: Diagram, d2: Diagram, exact: bool = True,
                   tol: float = 1e-9, direct_limit: int = 12) -> bool:
    """Exact equality of interpretations, via matrices or Gram identity.

    For wide diagrams ||A - B||^2 = <A,A> - <A,B> - <B,A> + <B,B> is
    contracted as four closed networks instead of building 2^n matrices.
    """
    if (d1.n_inputs, d1.n_outputs) != (d2.n_inputs, d2.n_outputs):
        return False
    width = d1.n_inputs + d1.n_outputs
    if width <= direct_limit:
        a = evaluate(d1, exact=exact, wire_limit=max(DEFAULT_WIRE_LIMIT, width))
        b = evaluate(d2, exact=exact, wire_limit=max(DEFAULT_WIRE_LIMIT, width))
        return matrices_equal(a, b, exact=exact, tol=tol)
    if not exact:
        raise EvaluationError("float mode supports only direct comparison")
    g11 = _gram(d1, d1)
    g12 = _gram(d1, d2)
    g21 = _gram(d2, d1)
    g22 = _gram(d2, d2)
    return (g11 - g12 - g21 + g22).is_zero()


def pretty_matrix(m: Matrix) -> str:
    cells = m.entry_strings()
    widths = [max(len(row[j]) for row in cells) for j in range(len(cells[0]))]
    lines = []
    for row in cells:
        lines.append("[ " + "  ".join(s.rjust(w) for s, w in zip(row, widths)) + " ]")
    return "\n".join(lines)
