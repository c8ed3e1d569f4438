"""Rewrite rules, subdiagram matching, application and derivation replay.

Every rule is handled through concrete instances: a named family plus
bindings (phases, arities) yields a ground (lhs, rhs) diagram pair whose
boundary ports are the gluing legs.  Colour-swapped and upside-down
variants are generated for every family.  Spider fusion is the one rule
applied by direct surgery, since its leg count is unbounded.

Soundness is enforced by a gate: every generated instance must satisfy
evaluate(lhs) == evaluate(rhs) exactly on a dyadic phase grid.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .diagram import (Diagram, DiagramError, Endpoint, HBox, VertexKind,
                      XSpider, ZSpider, is_equal_up_to_deformation,
                      make_generator, tensor)
from .phase import Phase
from .semantics import diagrams_equal

BASE_RULES = ("S1", "S2", "S3", "B1", "B2", "K1", "K2", "EU", "H", "IV", "ZO")
DERIVED_RULES = ("HOPF", "GBIALG", "SUP")
ALL_RULES = BASE_RULES + DERIVED_RULES


class RuleError(ValueError):
    pass


class StaleMatchError(RuleError):
    """The match was computed against a different diagram."""


class FragmentViolation(RuleError):
    """A rewrite needs a rule that is not in the active rule set."""


# -- diagram builders ---------------------------------------------------------

def spider_chain(kinds: list[VertexKind]) -> Diagram:
    """1->1 wire threading through the given vertices in order."""
    if not kinds:
        return make_generator("identity", 1, 1)
    vertices = dict(enumerate(kinds))
    wires: list[tuple[Endpoint, Endpoint]] = [(("in", 0), ("v", 0))]
    for i in range(len(kinds) - 1):
        wires.append((("v", i), ("v", i + 1)))
    wires.append((("v", len(kinds) - 1), ("out", 0)))
    return Diagram(vertices, 1, 1, wires)


def scalar_pair(left: VertexKind, right: VertexKind, n_wires: int = 1) -> Diagram:
    """Two dots joined by n parallel wires; a 0->0 diagram."""
    return Diagram({0: left, 1: right}, 0, 0,
                   [(("v", 0), ("v", 1))] * n_wires)


def pair_sqrt2() -> Diagram:
    """Z(0)-X(0) joined by one wire: the scalar sqrt(2)."""
    return scalar_pair(ZSpider(Phase(0)), XSpider(Phase(0)), 1)


def pair_inv_sqrt2() -> Diagram:
    """Z(0)-X(0) joined by three wires: the scalar 1/sqrt(2)."""
    return scalar_pair(ZSpider(Phase(0)), XSpider(Phase(0)), 3)


def pair_phase(gamma: Phase) -> Diagram:
    """Z(gamma)-X(pi) pair: the scalar sqrt(2)*e^(i*gamma)."""
    return scalar_pair(ZSpider(gamma), XSpider(Phase(1)), 1)


def z_dot(theta: Phase) -> Diagram:
    """Isolated Z spider: the scalar 1 + e^(i*theta)."""
    return Diagram({0: ZSpider(theta)}, 0, 0, [])


def supp_lhs(alpha: Phase) -> Diagram:
    """Two antiphase degree-1 Z dots on a shared X neighbour (0->1)."""
    return Diagram({0: ZSpider(alpha), 1: ZSpider(alpha + Phase(1)),
                    2: XSpider(Phase(0))}, 0, 1,
                   [(("v", 0), ("v", 2)), (("v", 1), ("v", 2)),
                    (("v", 2), ("out", 0))])


def supp_rhs(alpha: Phase) -> Diagram:
    """The merged side: one Z(2a+pi) dot doubly wired to the X neighbour."""
    return Diagram({0: ZSpider(alpha * 2 + Phase(1)), 2: XSpider(Phase(0))},
                   0, 1,
                   [(("v", 0), ("v", 2)), (("v", 0), ("v", 2)),
                    (("v", 2), ("out", 0))])


def bipartite_complete(n: int, m: int) -> Diagram:
    """K_{n,m}: n phase-0 Z spiders (one input each) fully wired to
    m phase-0 X spiders (one output each)."""
    vertices: dict[int, VertexKind] = {}
    wires: list[tuple[Endpoint, Endpoint]] = []
    for i in range(n):
        vertices[i] = ZSpider(Phase(0))
        wires.append((("in", i), ("v", i)))
    for j in range(m):
        vertices[n + j] = XSpider(Phase(0))
        wires.append((("v", n + j), ("out", j)))
        for i in range(n):
            wires.append((("v", i), ("v", n + j)))
    return Diagram(vertices, n, m, wires)


def sum_copy_chain(n: int, m: int) -> Diagram:
    """X^{(n,1)}(0) followed by Z^{(1,m)}(0)."""
    vertices = {0: XSpider(Phase(0)), 1: ZSpider(Phase(0))}
    wires: list[tuple[Endpoint, Endpoint]] = [(("v", 0), ("v", 1))]
    wires += [(("in", i), ("v", 0)) for i in range(n)]
    wires += [(("v", 1), ("out", j)) for j in range(m)]
    return Diagram(vertices, n, m, wires)


def hopf_connected(gamma: Phase, delta: Phase, legs_z: int, legs_x: int) -> Diagram:
    vertices = {0: ZSpider(gamma), 1: XSpider(delta)}
    wires = [(("v", 0), ("v", 1))] * 2
    wires += [(("in", i), ("v", 0)) for i in range(legs_z)]
    wires += [(("v", 1), ("out", j)) for j in range(legs_x)]
    return Diagram(vertices, legs_z, legs_x, wires)


def hopf_disconnected(gamma: Phase, delta: Phase, legs_z: int, legs_x: int) -> Diagram:
    vertices = {0: ZSpider(gamma), 1: XSpider(delta)}
    wires = [(("in", i), ("v", 0)) for i in range(legs_z)]
    wires += [(("v", 1), ("out", j)) for j in range(legs_x)]
    return tensor(tensor(Diagram(vertices, legs_z, legs_x, wires),
                         pair_inv_sqrt2()), pair_inv_sqrt2())


def fused_pair(alpha: Phase, beta: Phase, t: int, legs_a: int, legs_b: int) -> Diagram:
    """Two Z spiders joined by t wires, legs_a inputs on one, legs_b outputs
    on the other."""
    vertices = {0: ZSpider(alpha), 1: ZSpider(beta)}
    wires = [(("v", 0), ("v", 1))] * t
    wires += [(("in", i), ("v", 0)) for i in range(legs_a)]
    wires += [(("v", 1), ("out", j)) for j in range(legs_b)]
    return Diagram(vertices, legs_a, legs_b, wires)


def merged_spider(alpha: Phase, legs_a: int, legs_b: int) -> Diagram:
    vertices = {0: ZSpider(alpha)}
    wires = [(("in", i), ("v", 0)) for i in range(legs_a)]
    wires += [(("v", 0), ("out", j)) for j in range(legs_b)]
    return Diagram(vertices, legs_a, legs_b, wires)


# -- rule families ------------------------------------------------------------

@dataclass(frozen=True)
class RuleInstance:
    rule: str
    variant: str            # "", "swap", "flip", "swapflip"
    bindings: dict
    lhs: Diagram
    rhs: Diagram

    def side(self, direction: str) -> tuple[Diagram, Diagram]:
        if direction == "LR":
            return self.lhs, self.rhs
        if direction == "RL":
            return self.rhs, self.lhs
        raise RuleError(f"bad direction {direction!r}")

    def describe(self) -> str:
        parts = [self.rule + (f"[{self.variant}]" if self.variant else "")]
        for k, v in sorted(self.bindings.items()):
            parts.append(f"{k}={v}")
        return " ".join(parts)


def _apply_variant(lhs: Diagram, rhs: Diagram, variant: str) -> tuple[Diagram, Diagram]:
    if "swap" in variant:
        lhs, rhs = lhs.colour_swapped(), rhs.colour_swapped()
    if "flip" in variant:
        lhs, rhs = lhs.flipped(), rhs.flipped()
    return lhs, rhs


class Rule:
    """A named rule family generating concrete instances."""

    def __init__(self, name: str, maker, gate_bindings, derived: bool = False,
                 phase_keys: tuple[str, ...] = ()) -> None:
        self.name = name
        self.maker = maker
        self.gate_bindings = gate_bindings
        self.derived = derived
        self.phase_keys = phase_keys

    def instance(self, bindings: dict | None = None, variant: str = "") -> RuleInstance:
        bindings = dict(bindings or {})
        lhs, rhs = self.maker(bindings)
        lhs, rhs = _apply_variant(lhs, rhs, variant)
        return RuleInstance(self.name, variant, bindings, lhs, rhs)

    def gate_instances(self, grid: list[Phase],
                       variants: bool = True) -> list[RuleInstance]:
        out = []
        seen: list[tuple[Diagram, Diagram]] = []
        for bindings in self.gate_bindings(grid):
            for variant in ("", "swap", "flip", "swapflip") if variants else ("",):
                inst = self.instance(bindings, variant)
                if any(is_equal_up_to_deformation(inst.lhs, l) and
                       is_equal_up_to_deformation(inst.rhs, r)
                       for l, r in seen):
                    continue
                seen.append((inst.lhs, inst.rhs))
                out.append(inst)
        return out


def _phase(bindings: dict, key: str, default: Phase | None = None) -> Phase:
    val = bindings.get(key, default)
    if val is None:
        raise RuleError(f"missing phase binding {key!r}")
    if isinstance(val, str):
        val = Phase.parse(val)
        bindings[key] = val
    return val


def _int(bindings: dict, key: str, default: int) -> int:
    val = bindings.setdefault(key, default)
    return int(val)


def _mk_s1(b: dict) -> tuple[Diagram, Diagram]:
    alpha = _phase(b, "alpha", Phase(0))
    beta = _phase(b, "beta", Phase(0))
    t = _int(b, "t", 1)
    la, lb = _int(b, "legs_a", 1), _int(b, "legs_b", 1)
    if t < 1:
        raise RuleError("fusion needs at least one connecting wire")
    return fused_pair(alpha, beta, t, la, lb), merged_spider(alpha + beta, la, lb)


def _mk_s2(b: dict) -> tuple[Diagram, Diagram]:
    return (merged_spider(Phase(0), 1, 1), make_generator("identity", 1, 1))


def _mk_s3(b: dict) -> tuple[Diagram, Diagram]:
    return (merged_spider(Phase(0), 0, 2), make_generator("cap", 0, 2))


def _mk_b1(b: dict) -> tuple[Diagram, Diagram]:
    return (tensor(bipartite_complete(2, 2), pair_sqrt2()), sum_copy_chain(2, 2))


def _mk_b2(b: dict) -> tuple[Diagram, Diagram]:
    copy = Diagram({0: XSpider(Phase(0)), 1: ZSpider(Phase(0))}, 0, 2,
                   [(("v", 0), ("v", 1)),
                    (("v", 1), ("out", 0)), (("v", 1), ("out", 1))])
    states = Diagram({0: XSpider(Phase(0)), 1: XSpider(Phase(0))}, 0, 2,
                     [(("v", 0), ("out", 0)), (("v", 1), ("out", 1))])
    return tensor(copy, pair_sqrt2()), states


def _mk_k2(b: dict) -> tuple[Diagram, Diagram]:
    alpha = _phase(b, "alpha", Phase(0))
    lhs = spider_chain([XSpider(Phase(1)), ZSpider(alpha)])
    rhs = tensor(tensor(spider_chain([ZSpider(-alpha), XSpider(Phase(1))]),
                        pair_phase(alpha)), pair_inv_sqrt2())
    return lhs, rhs


def _mk_k1(b: dict) -> tuple[Diagram, Diagram]:
    alpha = _phase(b, "alpha", Phase(0))
    lhs = spider_chain([ZSpider(Phase(1)), XSpider(alpha)])
    rhs = tensor(tensor(spider_chain([XSpider(-alpha), ZSpider(Phase(1))]),
                        pair_phase(alpha).colour_swapped()), pair_inv_sqrt2())
    return lhs, rhs


def _mk_eu(b: dict) -> tuple[Diagram, Diagram]:
    lhs = make_generator(HBox, 1, 1)
    chain = spider_chain([ZSpider(Phase(1, 2)), XSpider(Phase(1, 2)),
                          ZSpider(Phase(1, 2))])
    rhs = tensor(tensor(chain, z_dot(Phase(3, 2))), pair_inv_sqrt2())
    return lhs, rhs


def _mk_h(b: dict) -> tuple[Diagram, Diagram]:
    alpha = _phase(b, "alpha", Phase(0))
    d = _int(b, "legs", 2)
    lhs = merged_spider(alpha, 0, d).colour_swapped()  # X(alpha) with d legs
    vertices: dict[int, VertexKind] = {0: ZSpider(alpha)}
    wires: list[tuple[Endpoint, Endpoint]] = []
    for j in range(d):
        vertices[1 + j] = HBox
        wires.append((("v", 0), ("v", 1 + j)))
        wires.append((("v", 1 + j), ("out", j)))
    rhs = Diagram(vertices, 0, d, wires)
    return lhs, rhs


def _mk_iv(b: dict) -> tuple[Diagram, Diagram]:
    return (tensor(pair_sqrt2(), pair_inv_sqrt2()), make_generator("empty", 0, 0))


def _mk_zo(b: dict) -> tuple[Diagram, Diagram]:
    return (tensor(z_dot(Phase(1)), z_dot(Phase(0))), z_dot(Phase(1)))


def _mk_hopf(b: dict) -> tuple[Diagram, Diagram]:
    gamma = _phase(b, "gamma", Phase(0))
    delta = _phase(b, "delta", Phase(0))
    lz, lx = _int(b, "legs_z", 1), _int(b, "legs_x", 1)
    return (hopf_connected(gamma, delta, lz, lx),
            hopf_disconnected(gamma, delta, lz, lx))


def _mk_gbialg(b: dict) -> tuple[Diagram, Diagram]:
    n, m = _int(b, "n", 2), _int(b, "m", 2)
    if n < 1 or m < 1:
        raise RuleError("bipartite sides must be non-empty")
    lhs = bipartite_complete(n, m)
    for _ in range((n - 1) * (m - 1)):
        lhs = tensor(lhs, pair_sqrt2())
    return lhs, sum_copy_chain(n, m)


def _mk_sup(b: dict) -> tuple[Diagram, Diagram]:
    phi = _phase(b, "phi", Phase(0))
    return supp_lhs(phi), supp_rhs(phi)


def _grid_one(key: str):
    def gen(grid: list[Phase]) -> list[dict]:
        return [{key: p} for p in grid]
    return gen


def _grid_none(grid: list[Phase]) -> list[dict]:
    return [{}]


def _grid_s1(grid: list[Phase]) -> list[dict]:
    out = []
    for a in grid:
        for bta in grid:
            out.append({"alpha": a, "beta": bta, "t": 1})
    out.append({"alpha": grid[1] if len(grid) > 1 else Phase(0),
                "beta": grid[0], "t": 2, "legs_a": 1, "legs_b": 2})
    return out


def _grid_h(grid: list[Phase]) -> list[dict]:
    return [{"alpha": p, "legs": d} for p in grid for d in (1, 2, 3)]


def _grid_hopf(grid: list[Phase]) -> list[dict]:
    return [{"gamma": g, "delta": d} for g in grid for d in grid]


def _grid_gbialg(grid: list[Phase]) -> list[dict]:
    return [{"n": 2, "m": 2}, {"n": 2, "m": 3}, {"n": 3, "m": 2}, {"n": 1, "m": 3}]


_FAMILIES: dict[str, Rule] | None = None


def rule_catalog() -> dict[str, Rule]:
    """The 14 rule families; SUP, HOPF and GBIALG are flagged derived."""
    global _FAMILIES
    if _FAMILIES is None:
        _FAMILIES = {
            "S1": Rule("S1", _mk_s1, _grid_s1, phase_keys=("alpha", "beta")),
            "S2": Rule("S2", _mk_s2, _grid_none),
            "S3": Rule("S3", _mk_s3, _grid_none),
            "B1": Rule("B1", _mk_b1, _grid_none),
            "B2": Rule("B2", _mk_b2, _grid_none),
            "K1": Rule("K1", _mk_k1, _grid_one("alpha"), phase_keys=("alpha",)),
            "K2": Rule("K2", _mk_k2, _grid_one("alpha"), phase_keys=("alpha",)),
            "EU": Rule("EU", _mk_eu, _grid_none),
            "H": Rule("H", _mk_h, _grid_h, phase_keys=("alpha",)),
            "IV": Rule("IV", _mk_iv, _grid_none),
            "ZO": Rule("ZO", _mk_zo, _grid_none),
            "HOPF": Rule("HOPF", _mk_hopf, _grid_hopf, derived=True,
                         phase_keys=("gamma", "delta")),
            "GBIALG": Rule("GBIALG", _mk_gbialg, _grid_gbialg, derived=True),
            "SUP": Rule("SUP", _mk_sup, _grid_one("phi"), derived=True,
                        phase_keys=("phi",)),
        }
    return _FAMILIES


def phase_grid(denominator: int = 4) -> list[Phase]:
    return [Phase(k, denominator) for k in range(2 * denominator)]


def check_rule_soundness(names: tuple[str, ...] = ALL_RULES,
                         grid_denominator: int = 4,
                         variants: bool = True) -> list[tuple[str, str, bool]]:
    """Evaluate lhs == rhs exactly for every generated instance.

    Returns (rule, instance description, ok) rows.
    """
    grid = phase_grid(grid_denominator)
    catalog = rule_catalog()
    rows = []
    for name in names:
        rule = catalog[name]
        for inst in rule.gate_instances(grid, variants=variants):
            ok = diagrams_equal(inst.lhs, inst.rhs)
            rows.append((name, inst.describe(), ok))
    return rows


_GATED = False


def gated_catalog() -> dict[str, Rule]:
    """Catalog with the load-time soundness gate run once (small grid)."""
    global _GATED
    catalog = rule_catalog()
    if not _GATED:
        rows = check_rule_soundness(grid_denominator=2, variants=True)
        bad = [r for r in rows if not r[2]]
        if bad:
            raise RuleError(f"unsound rule transcription: {bad[:3]}")
        _GATED = True
    return catalog


# -- matching -----------------------------------------------------------------

@dataclass
class Match:
    """An embedding of one side of a rule instance into a diagram."""
    instance: RuleInstance
    direction: str
    diagram: Diagram
    vertex_map: dict[int, int]
    leg_far: dict[int, Endpoint]
    claimed: tuple[int, ...]  # wire indices removed on application

    @property
    def anchors(self) -> tuple[int, ...]:
        return tuple(sorted(self.vertex_map.values()))

    def sort_key(self):
        return (self.anchors, self.claimed)


def _schema_legs(schema: Diagram) -> list[Endpoint]:
    legs = [("in", i) for i in range(schema.n_inputs)]
    legs += [("out", j) for j in range(schema.n_outputs)]
    return legs


def ground_matches(d: Diagram, instance: RuleInstance,
                   direction: str = "LR") -> list[Match]:
    """All embeddings of the source side of `instance` into d.

    Legs attached to the same schema vertex are assigned to concrete wires
    in canonical (sorted) order, so symmetric leg permutations do not
    produce duplicates.
    """
    src, _ = instance.side(direction)
    if src.loops:
        raise RuleError("rule sides must not contain closed loops")
    legs = _schema_legs(src)
    svs = sorted(src.vertices, key=lambda v: (-src.degree(v), v))

    def vertex_candidates(v: int) -> list[int]:
        data = src.vertices[v]
        out = []
        for u in sorted(d.vertices):
            du = d.vertices[u]
            if du.kind != data.kind or du.phase != data.phase:
                continue
            if d.degree(u) != src.degree(v):
                continue
            if d.self_loops(u) != src.self_loops(v):
                continue
            out.append(u)
        return out

    matches: list[Match] = []
    vmap: dict[int, int] = {}
    used: set[int] = set()

    def consistent(v: int, u: int) -> bool:
        for w, x in vmap.items():
            if src.mult(("v", v), ("v", w)) != d.mult(("v", u), ("v", x)):
                return False
        return True

    def finish() -> None:
        image = set(vmap.values())
        # internal wires fully determined; image vertices may not touch
        # unmapped structure beyond their leg quota
        claimed: list[int] = []
        for i, (a, b) in enumerate(d.wires):
            av = a[0] == "v" and a[1] in image
            bv = b[0] == "v" and b[1] in image
            if av and bv:
                claimed.append(i)
        # per-vertex leftover wires feed the legs
        leg_far: dict[int, Endpoint] = {}
        leftovers: dict[int, list[int]] = {}
        for v in src.vertices:
            u = vmap[v]
            lo = []
            for i in d.vertex_wires(u):
                a, b = d.wires[i]
                far = b if a == ("v", u) else a
                if far[0] == "v" and far[1] in image:
                    continue
                lo.append(i)
            leftovers[v] = sorted(lo)
        for v in src.vertices:
            # a schema port has degree 1, so each leg meets v at most once
            vlegs = sorted(li for li, ep in enumerate(legs)
                           if src.mult(ep, ("v", v)) > 0)
            if len(vlegs) != len(leftovers[v]):
                return
            for li, wi in zip(vlegs, leftovers[v]):
                a, b = d.wires[wi]
                far = b if a == ("v", vmap[v]) else a
                leg_far[li] = far
                claimed.append(wi)
        # schema port-to-port wires claim free wires of d
        pp = [(a, b) for a, b in src.wires if a[0] != "v" and b[0] != "v"]
        if pp:
            free = [i for i in range(len(d.wires)) if i not in set(claimed)]
            if len(pp) > 1:
                raise RuleError("schemas with several bare wires unsupported")
            (pa, pb) = pp[0]
            la = legs.index(pa)
            lb = legs.index(pb)
            for wi in free:
                a, b = d.wires[wi]
                lf = dict(leg_far)
                lf[la], lf[lb] = a, b
                matches.append(Match(instance, direction, d, dict(vmap), lf,
                                     tuple(sorted(claimed + [wi]))))
            return
        matches.append(Match(instance, direction, d, dict(vmap), leg_far,
                             tuple(sorted(claimed))))

    def backtrack(i: int) -> None:
        if i == len(svs):
            finish()
            return
        v = svs[i]
        for u in vertex_candidates(v):
            if u in used or not consistent(v, u):
                continue
            vmap[v] = u
            used.add(u)
            backtrack(i + 1)
            del vmap[v]
            used.discard(u)

    backtrack(0)
    matches.sort(key=Match.sort_key)
    # identical embeddings can arise from schema automorphisms; drop them
    out, seen = [], set()
    for m in matches:
        key = (tuple(sorted(m.vertex_map.items())), m.claimed,
               tuple(sorted(m.leg_far.items())))
        if key not in seen:
            seen.add(key)
            out.append(m)
    return out


def apply_match(d: Diagram, match: Match) -> Diagram:
    """Replace the matched side by the other side, re-gluing the legs."""
    if match.diagram is not d:
        raise StaleMatchError("match was computed against a different diagram")
    src, dst = match.instance.side(match.direction)
    legs = _schema_legs(src)
    fresh = d.fresh_id()
    new_ids = {v: fresh + i for i, v in enumerate(sorted(dst.vertices))}
    add_vertices = {new_ids[v]: dst.vertices[v] for v in dst.vertices}
    add_wires: list[tuple[Endpoint, Endpoint]] = []
    for a, b in dst.wires:
        def conv(ep: Endpoint) -> Endpoint:
            if ep[0] == "v":
                return ("v", new_ids[ep[1]])
            return match.leg_far[legs.index(ep)]
        add_wires.append((conv(a), conv(b)))
    return d.with_edits(remove_vertices=match.vertex_map.values(),
                        add_vertices=add_vertices,
                        remove_wire_indices=match.claimed,
                        add_wires=add_wires)


# -- site detectors for phase-parametric families ----------------------------

def _detect_instances(d: Diagram, name: str, direction: str) -> list[RuleInstance]:
    """Instances of a parametric family whose source side could occur in d."""
    catalog = rule_catalog()
    rule = catalog[name]
    out: list[dict] = []
    if name in ("K1", "K2"):
        kind = "X" if name == "K1" else "Z"  # the phase-carrying dot
        for v, data in sorted(d.vertices.items()):
            if data.kind == kind and d.degree(v) == 2:
                ph = data.phase if direction == "LR" else -data.phase
                out.append({"alpha": ph})
    elif name == "H":
        kind = "X" if direction == "LR" else "Z"
        for v, data in sorted(d.vertices.items()):
            if data.kind == kind and data.is_spider:
                out.append({"alpha": data.phase, "legs": d.degree(v)})
    elif name == "HOPF":
        for v, data in sorted(d.vertices.items()):
            if data.kind != "Z":
                continue
            for ep, n in d.neighbours(v).items():
                if ep[0] == "v" and n >= 2 and d.vertices[ep[1]].kind == "X":
                    out.append({"gamma": data.phase,
                                "delta": d.vertices[ep[1]].phase,
                                "legs_z": d.degree(v) - 2,
                                "legs_x": d.degree(ep[1]) - 2})
    elif name == "SUP":
        if direction == "LR":
            for w, data in sorted(d.vertices.items()):
                if data.kind != "X" or data.phase != Phase(0) or d.degree(w) != 3:
                    continue
                nbrs = [ep[1] for ep, n in d.neighbours(w).items()
                        if ep[0] == "v" and n == 1 and d.vertices[ep[1]].kind == "Z"
                        and d.degree(ep[1]) == 1]
                for i in range(len(nbrs)):
                    for j in range(i + 1, len(nbrs)):
                        pu = d.vertices[nbrs[i]].phase
                        pv = d.vertices[nbrs[j]].phase
                        if pv - pu == Phase(1):
                            out.append({"phi": pu})
        else:
            for v, data in sorted(d.vertices.items()):
                if data.kind != "Z" or d.degree(v) != 2:
                    continue
                for ep, n in d.neighbours(v).items():
                    if ep[0] == "v" and n == 2 and d.vertices[ep[1]].kind == "X" \
                            and d.vertices[ep[1]].phase == Phase(0) \
                            and d.degree(ep[1]) == 3:
                        theta = data.phase
                        out.append({"phi": Phase((theta.frac - 1) / 2)})
    elif name == "S1":
        raise RuleError("use fusion_matches for spider fusion")
    else:  # fixed-shape families
        out.append({})
    uniq, insts = set(), []
    for b in out:
        inst = rule.instance(b)
        key = json.dumps(bindings_to_json(inst.bindings), sort_keys=True)
        if key not in uniq:
            uniq.add(key)
            insts.append(inst)
    return insts


def find_matches(d: Diagram, rule: str | RuleInstance,
                 direction: str = "LR") -> list[Match]:
    """Complete, duplicate-free, deterministically ordered match list."""
    if isinstance(rule, RuleInstance):
        return ground_matches(d, rule, direction)
    if rule == "S1":
        return fusion_matches(d)
    matches: list[Match] = []
    for variant in ("", "swap"):
        probe = d if variant == "" else d.colour_swapped()
        for inst in _detect_instances(probe, rule, direction):
            vinst = rule_catalog()[rule].instance(inst.bindings, variant)
            matches.extend(ground_matches(d, vinst, direction))
    matches.sort(key=Match.sort_key)
    # colour-reading symmetries can present one site twice; keep one match
    # per (anchor set, claimed wires)
    out, seen = [], set()
    for m in matches:
        key = (m.anchors, m.claimed)
        if key not in seen:
            seen.add(key)
            out.append(m)
    return out


# -- spider fusion (direct surgery) -------------------------------------------

@dataclass
class FusionMatch:
    """A pair of same-colour spiders joined by at least one wire."""
    diagram: Diagram
    u: int
    v: int

    @property
    def anchors(self) -> tuple[int, ...]:
        return tuple(sorted((self.u, self.v)))


def fusion_matches(d: Diagram) -> list[FusionMatch]:
    out = []
    for u in sorted(d.vertices):
        if not d.vertices[u].is_spider:
            continue
        for ep, n in sorted(d.neighbours(u).items()):
            if ep[0] != "v" or ep[1] <= u:
                continue
            v = ep[1]
            if d.vertices[v].kind == d.vertices[u].kind:
                out.append(FusionMatch(d, u, v))
    return out


def apply_fusion(d: Diagram, u: int, v: int) -> Diagram:
    """Merge spiders u and v: phases add, every u-v wire is deleted."""
    du, dv = d.vertices[u], d.vertices[v]
    if not (du.is_spider and du.kind == dv.kind):
        raise RuleError("fusion needs two same-colour spiders")
    if d.mult(("v", u), ("v", v)) < 1:
        raise RuleError("fusion needs at least one connecting wire")
    connecting = [i for i, w in enumerate(d.wires)
                  if set(w) == {("v", u), ("v", v)}]
    keep_moved = []
    for i, (a, b) in enumerate(d.wires):
        if i in connecting:
            continue
        if a == ("v", v) or b == ("v", v):
            a2 = ("v", u) if a == ("v", v) else a
            b2 = ("v", u) if b == ("v", v) else b
            keep_moved.append((i, (a2, b2)))
    removed = connecting + [i for i, _ in keep_moved]
    added = [w for _, w in keep_moved]
    merged = VertexKind(du.kind, du.phase + dv.phase)
    return d.with_edits(remove_vertices=[v], remove_wire_indices=removed,
                        add_wires=added).with_edits(
        remove_vertices=[u], add_vertices={u: merged})


def apply_fission(d: Diagram, anchor: int, phase_out: Phase,
                  carried_wires: list[int], t: int = 1,
                  carry_kind: str | None = None) -> tuple[Diagram, int]:
    """Reverse fusion: split `anchor` into itself (minus phase_out and the
    carried wires) plus a new spider of the same colour.

    The new spider takes phase_out, the listed wires of `anchor` (indices
    into d.wires) and t fresh connecting wires.  Returns (diagram, new id).
    """
    data = d.vertices[anchor]
    if not data.is_spider:
        raise RuleError("can only split spiders")
    if t < 1:
        raise RuleError("split needs at least one connecting wire")
    kind = carry_kind or data.kind
    if kind != data.kind:
        raise RuleError("split preserves colour")
    new_id = d.fresh_id()
    moved = []
    for i in carried_wires:
        a, b = d.wires[i]
        if ("v", anchor) not in (a, b):
            raise RuleError(f"wire {i} is not incident to vertex {anchor}")
        a2 = ("v", new_id) if a == ("v", anchor) else a
        b2 = ("v", new_id) if b == ("v", anchor) else b
        moved.append((a2, b2))
    added = moved + [(("v", anchor), ("v", new_id))] * t
    rest = VertexKind(data.kind, data.phase - phase_out)
    out = d.with_edits(remove_vertices=[anchor],
                       add_vertices={anchor: rest,
                                     new_id: VertexKind(kind, phase_out)},
                       remove_wire_indices=carried_wires,
                       add_wires=added)
    return out, new_id


# -- derivations --------------------------------------------------------------

@dataclass
class Step:
    rule: str
    direction: str = "LR"
    variant: str = ""
    bindings: dict = field(default_factory=dict)
    anchors: tuple[int, ...] = ()
    wires: tuple[int, ...] = ()  # optional wire-index pin (bare-wire sites)

    def to_json(self) -> dict:
        out = {"rule": self.rule, "dir": self.direction}
        if self.variant:
            out["variant"] = self.variant
        phases = {k: f"{v.num}/{v.den}" for k, v in self.bindings.items()
                  if isinstance(v, Phase)}
        if phases:
            out["phases"] = phases
        other = {k: v for k, v in self.bindings.items()
                 if not isinstance(v, Phase)}
        if other:
            out["bindings"] = other
        if self.anchors:
            out["anchors"] = list(self.anchors)
        if self.wires:
            out["wires"] = list(self.wires)
        return out

    @classmethod
    def from_json(cls, obj: dict) -> Step:
        bindings: dict = {}
        for k, v in obj.get("phases", {}).items():
            bindings[k] = Phase.parse(v)
        bindings.update(obj.get("bindings", {}))
        return cls(rule=obj["rule"], direction=obj.get("dir", "LR"),
                   variant=obj.get("variant", ""), bindings=bindings,
                   anchors=tuple(obj.get("anchors", ())),
                   wires=tuple(obj.get("wires", ())))


def bindings_to_json(bindings: dict) -> dict:
    out = {}
    for k, v in bindings.items():
        out[k] = f"{v.num}/{v.den}" if isinstance(v, Phase) else v
    return out


@dataclass
class Derivation:
    start: Diagram
    steps: list[Step] = field(default_factory=list)

    def to_json(self) -> dict:
        from .diagram import to_json_dict
        return {"start": to_json_dict(self.start),
                "steps": [s.to_json() for s in self.steps]}

    @classmethod
    def from_json(cls, obj: dict) -> Derivation:
        from .diagram import from_json_dict
        return cls(from_json_dict(obj["start"]),
                   [Step.from_json(s) for s in obj.get("steps", [])])


def _apply_step(d: Diagram, step: Step, ruleset: set[str]) -> Diagram:
    if step.rule not in ruleset:
        raise FragmentViolation(f"rule {step.rule} is not in the active set")
    if step.rule == "S1":
        if step.direction == "LR":
            u, v = step.anchors
            return apply_fusion(d, u, v)
        (anchor,) = step.anchors
        phase_out = step.bindings.get("phase_out", Phase(0))
        if isinstance(phase_out, str):
            phase_out = Phase.parse(phase_out)
        carried = list(step.bindings.get("carried_wires", []))
        t = int(step.bindings.get("t", 1))
        out, _ = apply_fission(d, anchor, phase_out, carried, t)
        return out
    inst = rule_catalog()[step.rule].instance(step.bindings, step.variant)
    cands = ground_matches(d, inst, step.direction)
    if step.anchors:
        cands = [m for m in cands if m.anchors == tuple(sorted(step.anchors))]
    if step.wires:
        cands = [m for m in cands if set(step.wires) <= set(m.claimed)]
    if not cands:
        raise RuleError(
            f"step {step.rule} ({step.direction}) has no match at "
            f"anchors {step.anchors}")
    return apply_match(d, cands[0])


@dataclass
class StepReport:
    index: int
    rule: str
    direction: str
    structural_ok: bool
    semantic_ok: bool
    message: str = ""


@dataclass
class DerivationReport:
    ok: bool
    steps: list[StepReport]
    final: Diagram | None


def replay(derivation: Derivation, ruleset: set[str] | None = None) -> Diagram:
    """Apply all steps, raising on the first failure."""
    ruleset = ruleset if ruleset is not None else set(ALL_RULES)
    d = derivation.start
    for step in derivation.steps:
        d = _apply_step(d, step, ruleset)
    return d


def verify_derivation(derivation: Derivation,
                      ruleset: set[str] | None = None) -> DerivationReport:
    """Replay a derivation, checking exact semantic invariance per step.

    A structural failure (no such match) marks the step and stops; a
    semantic drift would indicate an engine bug and also stops the replay.
    """
    ruleset = ruleset if ruleset is not None else set(ALL_RULES)
    d = derivation.start
    reports: list[StepReport] = []
    for i, step in enumerate(derivation.steps):
        try:
            nxt = _apply_step(d, step, ruleset)
        except (RuleError, DiagramError) as exc:
            reports.append(StepReport(i, step.rule, step.direction,
                                      False, False, str(exc)))
            return DerivationReport(False, reports, None)
        sem = diagrams_equal(d, nxt)
        reports.append(StepReport(i, step.rule, step.direction, True, sem,
                                  "" if sem else "interpretation changed"))
        if not sem:
            return DerivationReport(False, reports, None)
        d = nxt
    return DerivationReport(True, reports, d)
