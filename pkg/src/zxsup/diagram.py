"""Open multigraphs of Z/X spiders and H boxes.

Wire generators (identity, swap, cup, cap, empty) leave no vertices, so
diagrams that differ only by bending, sliding or leg permutation are the
same value; equality of diagrams is boundary-fixing graph isomorphism.
Vertex-free closed loops (which arise from composition) are tracked by a
counter.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable

from .phase import Phase

Endpoint = tuple[str, int]  # ("v", vertex id) | ("in", port index) | ("out", port index)
Wire = tuple[Endpoint, Endpoint]


class DiagramError(ValueError):
    """Structural violation: bad arity, dangling wire, or invalid boundary."""


@dataclass(frozen=True)
class VertexKind:
    kind: str  # "Z", "X" or "H"
    phase: Phase | None

    def __post_init__(self) -> None:
        if self.kind not in ("Z", "X", "H"):
            raise DiagramError(f"unknown vertex kind {self.kind!r}")
        if self.kind == "H" and self.phase is not None:
            raise DiagramError("H boxes carry no phase")
        if self.kind != "H" and self.phase is None:
            raise DiagramError("spiders carry a phase")

    @property
    def is_spider(self) -> bool:
        return self.kind in ("Z", "X")


def ZSpider(phase: Phase = Phase(0)) -> VertexKind:
    return VertexKind("Z", phase)


def XSpider(phase: Phase = Phase(0)) -> VertexKind:
    return VertexKind("X", phase)


HBox = VertexKind("H", None)

_EP_ORDER = {"in": 0, "out": 1, "v": 2}


def _sort_wire(a: Endpoint, b: Endpoint) -> Wire:
    ka = (_EP_ORDER[a[0]], a[1])
    kb = (_EP_ORDER[b[0]], b[1])
    return (a, b) if ka <= kb else (b, a)


class Diagram:
    """Immutable ZX-diagram with an ordered boundary.

    Ports are positional: input i is the endpoint ("in", i), output j is
    ("out", j).  All operations are pure and return fresh diagrams.
    """

    __slots__ = ("vertices", "n_inputs", "n_outputs", "wires", "loops")

    def __init__(self, vertices: dict[int, VertexKind], n_inputs: int,
                 n_outputs: int, wires: Iterable[tuple[Endpoint, Endpoint]],
                 loops: int = 0) -> None:
        self.vertices = dict(vertices)
        self.n_inputs = n_inputs
        self.n_outputs = n_outputs
        self.wires: tuple[Wire, ...] = tuple(_sort_wire(a, b) for a, b in wires)
        self.loops = loops
        self._audit()

    # -- validity ----------------------------------------------------------

    def _audit(self) -> None:
        if self.n_inputs < 0 or self.n_outputs < 0 or self.loops < 0:
            raise DiagramError("negative arity or loop count")
        degree: dict[Endpoint, int] = {}
        for a, b in self.wires:
            for ep in (a, b):
                side, idx = ep
                if side == "v":
                    if idx not in self.vertices:
                        raise DiagramError(f"wire references missing vertex {idx}")
                elif side == "in":
                    if not 0 <= idx < self.n_inputs:
                        raise DiagramError(f"input port {idx} out of range")
                elif side == "out":
                    if not 0 <= idx < self.n_outputs:
                        raise DiagramError(f"output port {idx} out of range")
                else:
                    raise DiagramError(f"bad endpoint {ep}")
                degree[ep] = degree.get(ep, 0) + 1
        for i in range(self.n_inputs):
            if degree.get(("in", i), 0) != 1:
                raise DiagramError(f"input port {i} must have degree 1")
        for j in range(self.n_outputs):
            if degree.get(("out", j), 0) != 1:
                raise DiagramError(f"output port {j} must have degree 1")
        for v, data in self.vertices.items():
            if data.kind == "H" and degree.get(("v", v), 0) != 2:
                raise DiagramError(f"H box {v} must have degree 2")

    # -- basic queries -----------------------------------------------------

    def degree(self, v: int) -> int:
        return sum((a == ("v", v)) + (b == ("v", v)) for a, b in self.wires)

    def mult(self, e1: Endpoint, e2: Endpoint) -> int:
        w = _sort_wire(e1, e2)
        return sum(1 for x in self.wires if x == w)

    def self_loops(self, v: int) -> int:
        return self.mult(("v", v), ("v", v))

    def neighbours(self, v: int) -> dict[Endpoint, int]:
        """Multiplicity map of endpoints adjacent to v (self excluded)."""
        out: dict[Endpoint, int] = {}
        me = ("v", v)
        for a, b in self.wires:
            if a == me and b != me:
                out[b] = out.get(b, 0) + 1
            elif b == me and a != me:
                out[a] = out.get(a, 0) + 1
        return out

    def vertex_wires(self, v: int) -> list[int]:
        """Indices into `wires` of all wires incident to v (loops once)."""
        me = ("v", v)
        return [i for i, (a, b) in enumerate(self.wires) if a == me or b == me]

    def fresh_id(self) -> int:
        return max(self.vertices, default=-1) + 1

    def is_scalar(self) -> bool:
        return self.n_inputs == 0 and self.n_outputs == 0

    # -- construction helpers ----------------------------------------------

    def with_edits(self, remove_vertices: Iterable[int] = (),
                   add_vertices: dict[int, VertexKind] | None = None,
                   remove_wire_indices: Iterable[int] = (),
                   add_wires: Iterable[tuple[Endpoint, Endpoint]] = (),
                   loops_delta: int = 0) -> Diagram:
        rem_v = set(remove_vertices)
        rem_w = set(remove_wire_indices)
        vertices = {v: d for v, d in self.vertices.items() if v not in rem_v}
        if add_vertices:
            for v, d in add_vertices.items():
                if v in vertices:
                    raise DiagramError(f"vertex id {v} already present")
                vertices[v] = d
        wires = [w for i, w in enumerate(self.wires) if i not in rem_w]
        wires.extend(_sort_wire(a, b) for a, b in add_wires)
        return Diagram(vertices, self.n_inputs, self.n_outputs, wires,
                       self.loops + loops_delta)

    def renumbered(self, offset: int) -> Diagram:
        mapping = {v: v + offset for v in self.vertices}
        return self.map_vertices(mapping)

    def map_vertices(self, mapping: dict[int, int]) -> Diagram:
        def mp(ep: Endpoint) -> Endpoint:
            return ("v", mapping[ep[1]]) if ep[0] == "v" else ep
        return Diagram({mapping[v]: d for v, d in self.vertices.items()},
                       self.n_inputs, self.n_outputs,
                       [(mp(a), mp(b)) for a, b in self.wires], self.loops)

    def colour_swapped(self) -> Diagram:
        swap = {"Z": "X", "X": "Z", "H": "H"}
        return Diagram({v: VertexKind(swap[d.kind], d.phase)
                        for v, d in self.vertices.items()},
                       self.n_inputs, self.n_outputs, self.wires, self.loops)

    def flipped(self) -> Diagram:
        """Upside-down diagram: inputs become outputs and vice versa."""
        def mp(ep: Endpoint) -> Endpoint:
            if ep[0] == "in":
                return ("out", ep[1])
            if ep[0] == "out":
                return ("in", ep[1])
            return ep
        return Diagram(self.vertices, self.n_outputs, self.n_inputs,
                       [(mp(a), mp(b)) for a, b in self.wires], self.loops)

    def phases_negated(self) -> Diagram:
        """Entrywise complex conjugate of the interpretation."""
        return Diagram({v: (VertexKind(d.kind, -d.phase) if d.is_spider else d)
                        for v, d in self.vertices.items()},
                       self.n_inputs, self.n_outputs, self.wires, self.loops)

    # -- equality ----------------------------------------------------------

    def __repr__(self) -> str:
        return (f"Diagram({self.n_inputs}->{self.n_outputs}, "
                f"{len(self.vertices)} vertices, {len(self.wires)} wires"
                + (f", {self.loops} loops)" if self.loops else ")"))


def make_generator(kind: VertexKind | str, n: int, m: int) -> Diagram:
    """Build a single-generator diagram.

    `kind` is a VertexKind for spiders/H, or one of the wire generators
    "identity", "swap", "cup" (2->0), "cap" (0->2), "empty".
    """
    if n < 0 or m < 0:
        raise DiagramError("arities must be non-negative")
    if isinstance(kind, str):
        expected = {"identity": (1, 1), "swap": (2, 2), "cup": (2, 0),
                    "cap": (0, 2), "empty": (0, 0)}
        if kind not in expected:
            raise DiagramError(f"unknown generator {kind!r}")
        if (n, m) != expected[kind]:
            raise DiagramError(f"{kind} must be {expected[kind][0]}->{expected[kind][1]}")
        if kind == "identity":
            return Diagram({}, 1, 1, [(("in", 0), ("out", 0))])
        if kind == "swap":
            return Diagram({}, 2, 2, [(("in", 0), ("out", 1)), (("in", 1), ("out", 0))])
        if kind == "cup":
            return Diagram({}, 2, 0, [(("in", 0), ("in", 1))])
        if kind == "cap":
            return Diagram({}, 0, 2, [(("out", 0), ("out", 1))])
        return Diagram({}, 0, 0, [])
    if kind.kind == "H" and (n, m) != (1, 1):
        raise DiagramError("H box is a 1->1 generator")
    wires: list[tuple[Endpoint, Endpoint]] = []
    wires += [(("in", i), ("v", 0)) for i in range(n)]
    wires += [(("v", 0), ("out", j)) for j in range(m)]
    return Diagram({0: kind}, n, m, wires)


def tensor(d1: Diagram, d2: Diagram) -> Diagram:
    """Place d1 and d2 side by side; boundary of d1 comes first."""
    off = d1.fresh_id()
    shifted = d2.renumbered(off)

    def mp(ep: Endpoint) -> Endpoint:
        if ep[0] == "in":
            return ("in", ep[1] + d1.n_inputs)
        if ep[0] == "out":
            return ("out", ep[1] + d1.n_outputs)
        return ep

    vertices = dict(d1.vertices)
    vertices.update(shifted.vertices)
    wires = list(d1.wires) + [(mp(a), mp(b)) for a, b in shifted.wires]
    return Diagram(vertices, d1.n_inputs + d2.n_inputs,
                   d1.n_outputs + d2.n_outputs, wires, d1.loops + d2.loops)


def compose(d1: Diagram, d2: Diagram) -> Diagram:
    """Plug the outputs of d1 into the inputs of d2 (d2 after d1).

    Fused wire chains are contracted eagerly; chains that close up become
    counted loops.
    """
    if d1.n_outputs != d2.n_inputs:
        raise DiagramError(
            f"cannot compose {d1.n_outputs} outputs into {d2.n_inputs} inputs")
    off = d1.fresh_id()
    shifted = d2.renumbered(off)
    k = d1.n_outputs

    def mp1(ep: Endpoint) -> Endpoint:
        return ("j", ep[1]) if ep[0] == "out" else ep

    def mp2(ep: Endpoint) -> Endpoint:
        if ep[0] == "in":
            return ("j", ep[1])
        if ep[0] == "out":
            return ep
        return ep

    wires = [(mp1(a), mp1(b)) for a, b in d1.wires]
    wires += [(mp2(a), mp2(b)) for a, b in shifted.wires]
    loops = d1.loops + d2.loops

    # Contract junction chains.  Each junction ("j", i) has exactly two wire
    # incidences; repeatedly splice the two wires at a junction into one.
    for i in range(k):
        j = ("j", i)
        hits = [(wi, pos) for wi, w in enumerate(wires)
                for pos in (0, 1) if w[pos] == j]
        if len(hits) != 2:
            raise DiagramError("internal error: junction degree != 2")
        (w1, p1), (w2, p2) = hits
        if w1 == w2:
            # both ends of one wire meet at this junction: a closed loop
            loops += 1
            wires.pop(w1)
            continue
        far1 = wires[w1][1 - p1]
        far2 = wires[w2][1 - p2]
        for wi in sorted((w1, w2), reverse=True):
            wires.pop(wi)
        wires.append((far1, far2))

    vertices = dict(d1.vertices)
    vertices.update(shifted.vertices)
    return Diagram(vertices, d1.n_inputs, d2.n_outputs, wires, loops)


def is_equal_up_to_deformation(d1: Diagram, d2: Diagram) -> bool:
    """Boundary-fixing isomorphism preserving kind, phase and multiplicities."""
    if (d1.n_inputs, d1.n_outputs, d1.loops) != (d2.n_inputs, d2.n_outputs, d2.loops):
        return False
    if len(d1.vertices) != len(d2.vertices) or len(d1.wires) != len(d2.wires):
        return False

    def profile(d: Diagram, v: int) -> tuple:
        ports = tuple(sorted((ep, n) for ep, n in d.neighbours(v).items()
                             if ep[0] != "v"))
        ph = d.vertices[v].phase
        return (d.vertices[v].kind, (ph.num, ph.den) if ph else (-1, 0),
                d.degree(v), d.self_loops(v), ports)

    # port wiring must agree literally on port-port wires
    pp1 = sorted(w for w in d1.wires if w[0][0] != "v" and w[1][0] != "v")
    pp2 = sorted(w for w in d2.wires if w[0][0] != "v" and w[1][0] != "v")
    if pp1 != pp2:
        return False

    if sorted(profile(d1, v) for v in d1.vertices) != \
       sorted(profile(d2, v) for v in d2.vertices):
        return False

    vs1 = sorted(d1.vertices, key=lambda v: (-d1.degree(v), v))
    cands = {v: [u for u in d2.vertices if profile(d2, u) == profile(d1, v)]
             for v in vs1}

    mapping: dict[int, int] = {}
    used: set[int] = set()

    def ok(v: int, u: int) -> bool:
        nb1 = d1.neighbours(v)
        nb2 = d2.neighbours(u)
        if {ep: n for ep, n in nb1.items() if ep[0] != "v"} != \
           {ep: n for ep, n in nb2.items() if ep[0] != "v"}:
            return False
        for w, x in mapping.items():
            if nb1.get(("v", w), 0) != nb2.get(("v", x), 0):
                return False
        return True

    def backtrack(i: int) -> bool:
        if i == len(vs1):
            return True
        v = vs1[i]
        for u in cands[v]:
            if u in used or not ok(v, u):
                continue
            mapping[v] = u
            used.add(u)
            if backtrack(i + 1):
                return True
            del mapping[v]
            used.discard(u)
        return False

    return backtrack(0)


# -- serialization ----------------------------------------------------------

def _ep_to_json(ep: Endpoint) -> dict:
    side, idx = ep
    if side == "v":
        return {"v": str(idx)}
    return {side: idx}


def _ep_from_json(obj: dict) -> Endpoint:
    if "v" in obj:
        return ("v", int(obj["v"]))
    if "in" in obj:
        return ("in", int(obj["in"]))
    if "out" in obj:
        return ("out", int(obj["out"]))
    raise DiagramError(f"bad endpoint {obj!r}")


def to_json_dict(d: Diagram) -> dict:
    verts = {}
    for v, data in sorted(d.vertices.items()):
        entry: dict = {"kind": data.kind}
        if data.phase is not None:
            entry["phase"] = {"num": data.phase.num, "den": data.phase.den}
        verts[str(v)] = entry
    out = {
        "inputs": list(range(d.n_inputs)),
        "outputs": list(range(d.n_outputs)),
        "vertices": verts,
        "wires": [[_ep_to_json(a), _ep_to_json(b)] for a, b in d.wires],
    }
    if d.loops:
        out["loops"] = d.loops
    return out


def from_json_dict(obj: dict) -> Diagram:
    try:
        vertices = {}
        for vid, entry in obj.get("vertices", {}).items():
            kind = entry["kind"]
            if kind == "H":
                vertices[int(vid)] = HBox
            else:
                ph = entry.get("phase", {"num": 0, "den": 1})
                vertices[int(vid)] = VertexKind(kind, Phase(ph["num"], ph["den"]))
        wires = [(_ep_from_json(a), _ep_from_json(b)) for a, b in obj.get("wires", [])]
        return Diagram(vertices, len(obj.get("inputs", [])),
                       len(obj.get("outputs", [])), wires, obj.get("loops", 0))
    except (KeyError, TypeError, AttributeError) as exc:
        raise DiagramError(f"malformed diagram: {exc}") from exc


def save_diagram(d: Diagram, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(to_json_dict(d), fh, indent=1)


def load_diagram(path: str) -> Diagram:
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DiagramError(f"malformed diagram file: {exc}") from exc
    return from_json_dict(obj)
