"""The k-copy interpretation of diagrams and the supplementarity witness.

A diagram is mapped to k parallel copies of itself; the k copies of each
phase-alpha spider are tied together by a gadget (an opposite-colour hub
with a degree-1 tip of phase l*alpha) plus k-1 sqrt(2) scalar pairs per
spider.  For k = 1 this collapses to multiplying every angle by l+1
without changing the structure.

The witness pipeline transforms both sides of the supplementarity
equation under the (3, 2) interpretation, plugs the basis effects 0,1,1
onto the three outputs and compares the resulting exact scalars; they
agree exactly when (1+e^(2ia))(1-e^(4ia)) = 0, i.e. when the angle is a
multiple of pi/2.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .cyclo import CycloNumber
from .diagram import Diagram, Endpoint, VertexKind, XSpider, ZSpider
from .phase import Phase
from .rules import (ALL_RULES, BASE_RULES, Rule, phase_grid, rule_catalog,
                    supp_lhs, supp_rhs)
from .semantics import diagrams_equal, scalar_of


@dataclass(frozen=True)
class SharpParams:
    k: int = 3
    l: int = 2

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("copy count must be positive")


def sharp(d: Diagram, params: SharpParams = SharpParams()) -> Diagram:
    """k parallel copies of d with a phase gadget tying each spider's copies.

    Every boundary port expands to a block of k adjacent ports.  With
    k = 1 the diagram structure is untouched and every spider phase alpha
    becomes (l+1)*alpha.
    """
    k, l = params.k, params.l
    if k == 1:
        return Diagram({v: (VertexKind(data.kind, data.phase * (l + 1))
                            if data.is_spider else data)
                        for v, data in d.vertices.items()},
                       d.n_inputs, d.n_outputs, d.wires, d.loops)

    vertices: dict[int, VertexKind] = {}
    wires: list[tuple[Endpoint, Endpoint]] = []
    next_id = 0

    def fresh() -> int:
        nonlocal next_id
        next_id += 1
        return next_id - 1

    copies: dict[int, list[int]] = {}
    for v in sorted(d.vertices):
        copies[v] = [fresh() for _ in range(k)]
        for c in copies[v]:
            vertices[c] = d.vertices[v]

    def port(ep: Endpoint, i: int) -> Endpoint:
        if ep[0] == "v":
            return ("v", copies[ep[1]][i])
        return (ep[0], ep[1] * k + i)

    for a, b in d.wires:
        for i in range(k):
            wires.append((port(a, i), port(b, i)))

    for v in sorted(d.vertices):
        data = d.vertices[v]
        if not data.is_spider:
            continue
        hub = fresh()
        tip = fresh()
        hub_kind = "X" if data.kind == "Z" else "Z"
        vertices[hub] = VertexKind(hub_kind, Phase(0))
        vertices[tip] = VertexKind(data.kind, data.phase * l)
        for c in copies[v]:
            wires.append((("v", c), ("v", hub)))
        wires.append((("v", hub), ("v", tip)))
        for _ in range(k - 1):
            z, x = fresh(), fresh()
            vertices[z] = ZSpider(Phase(0))
            vertices[x] = XSpider(Phase(0))
            wires.append((("v", z), ("v", x)))

    return Diagram(vertices, d.n_inputs * k, d.n_outputs * k, wires,
                   d.loops * k)


def plug_basis_effects(d: Diagram, bits: list[int]) -> Diagram:
    """Cap output i with the effect sqrt(2)<bits_i|, an X(bits_i * pi) dot."""
    if len(bits) != d.n_outputs:
        raise ValueError(
            f"{d.n_outputs} outputs but {len(bits)} plug bits")
    vertices = dict(d.vertices)
    base = d.fresh_id()
    caps = {}
    for i, bit in enumerate(bits):
        if bit not in (0, 1):
            raise ValueError("plug bits must be 0 or 1")
        vid = base + i
        vertices[vid] = XSpider(Phase(bit))
        caps[("out", i)] = ("v", vid)
    wires = [(caps.get(a, a), caps.get(b, b)) for a, b in d.wires]
    return Diagram(vertices, d.n_inputs, 0, wires, d.loops)


def supp_gap(alpha: Phase, exact: bool = True) -> CycloNumber | complex:
    """The product (1 + e^(2i*alpha)) * (1 - e^(4i*alpha)).

    Its exact zero set over the dyadic phases is {0, pi/2, pi, 3pi/2}.
    """
    if exact:
        one = CycloNumber.one()
        return (one + CycloNumber.from_phase(alpha * 2)) * \
               (one - CycloNumber.from_phase(alpha * 4))
    import cmath
    a = alpha.to_float()
    return (1 + cmath.exp(2j * a)) * (1 - cmath.exp(4j * a))


@dataclass
class WitnessReport:
    alpha: Phase
    lhs_scalar: CycloNumber
    rhs_scalar: CycloNumber
    equal: bool
    gap: CycloNumber
    gap_is_zero: bool

    @property
    def consistent(self) -> bool:
        return self.equal == self.gap_is_zero

    def to_json(self) -> dict:
        return {"alpha": f"{self.alpha.num}/{self.alpha.den}",
                "lhs_scalar": str(self.lhs_scalar),
                "rhs_scalar": str(self.rhs_scalar),
                "equal": self.equal,
                "supp_gap": str(self.gap),
                "gap_is_zero": self.gap_is_zero,
                "consistent": self.consistent}


def incompleteness_witness(alpha: Phase,
                           params: SharpParams = SharpParams()) -> WitnessReport:
    """Compare the plugged k-copy images of the two supplementarity sides.

    The scalars agree exactly iff alpha is a multiple of pi/2; anywhere
    else the pair witnesses a semantic separation that no sound rule set
    containing the supplementarity equation could bridge.
    """
    bits = [0, 1, 1] + [1] * (params.k - 3) if params.k >= 3 else [0] * params.k
    lhs = plug_basis_effects(sharp(supp_lhs(alpha), params), bits)
    rhs = plug_basis_effects(sharp(supp_rhs(alpha), params), bits)
    s_l = scalar_of(lhs)
    s_r = scalar_of(rhs)
    gap = supp_gap(alpha)
    return WitnessReport(alpha, s_l, s_r, (s_l - s_r).is_zero(),
                         gap, gap.is_zero())


# -- soundness scan -----------------------------------------------------------

@dataclass
class ScanRow:
    rule: str
    instance: str
    ok: bool


@dataclass
class ScanReport:
    params: SharpParams
    rows: list[ScanRow] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.ok for r in self.rows)

    @property
    def failing_rules(self) -> list[str]:
        return sorted({r.rule for r in self.rows if not r.ok})

    def by_rule(self) -> dict[str, bool]:
        out: dict[str, bool] = {}
        for r in self.rows:
            out[r.rule] = out.get(r.rule, True) and r.ok
        return out


def _scan_bindings(rule: Rule, grid: list[Phase]) -> list[dict]:
    """Instance bindings for the scan; pair-phase families are thinned."""
    short = [p for p in grid if p in (Phase(0), Phase(1, 4))] or grid[:1]
    if rule.name == "S1":
        return [{"alpha": a, "beta": b} for a in grid for b in short]
    if rule.name == "HOPF":
        return [{"gamma": g, "delta": dlt} for g in grid for dlt in short]
    if rule.name == "H":
        return [{"alpha": a, "legs": legs} for a in grid for legs in (1, 2)]
    return rule.gate_bindings(grid)


def soundness_scan(params: SharpParams, grid_denominator: int = 4,
                   rules: tuple[str, ...] | None = None,
                   include_sup: bool = False) -> ScanReport:
    """Check every rule instance under the k-copy interpretation.

    The default rule set is the eleven base rules plus the derived HOPF
    and GBIALG (which follow from them); the supplementarity rule is
    not part of the calculus being interpreted and is only scanned on
    request.  Variants are skipped: the interpretation has the colour
    and upside-down symmetries built in.
    """
    if rules is None:
        rules = BASE_RULES + ("HOPF", "GBIALG")
        if include_sup:
            rules = rules + ("SUP",)
    catalog = rule_catalog()
    grid = phase_grid(grid_denominator)
    report = ScanReport(params)
    for name in rules:
        rule = catalog[name]
        for bindings in _scan_bindings(rule, grid):
            inst = rule.instance(bindings)
            ok = diagrams_equal(sharp(inst.lhs, params),
                                sharp(inst.rhs, params))
            report.rows.append(ScanRow(name, inst.describe(), ok))
    return report


def scan_sweep(k_values: range | list[int], l_values: range | list[int],
               grid_denominator: int = 4,
               rules: tuple[str, ...] | None = None) -> dict[tuple[int, int], ScanReport]:
    """soundness_scan over a grid of (k, l) parameters."""
    out = {}
    for k in k_values:
        for l in l_values:
            out[(k, l)] = soundness_scan(SharpParams(k, l),
                                         grid_denominator, rules)
    return out
