"""Finite-model construction for the two-variable case.

Given a finite pattern model of a normal-form sentence and a set of live
equivalences, the inductive build produces a finite structure in which the
remaining equivalences are total, together with a map back to the pattern.
Building blocks are layered pattern components, one per realized generalized
type: layer i grows a subcomponent from the recursive call that makes the
i-th live equivalence total, then provides witnesses that avoid it in the
next layer.  Copies of the components, in two colors, are joined leaf-to-root
and pruned to the part reachable from the component whose root maps to the
requested anchor.

Every stated condition of the construction is a runnable check here:
(b1)..(b7) for full outputs and (c1)..(c8) for single components.
"""

from __future__ import annotations

from dataclasses import dataclass

from .normalform import NormalFormFormula
from .semantics import _eval
from .structures import (AtomicType, FiniteStructure, GeneralizedType,
                         StructureBuilder, eq_class, generalized_type_of,
                         type_slots, validate_equivalences)


class ConstructionError(Exception):
    pass


class ConstructionBudget(ConstructionError):
    """Raised when an element budget is exhausted mid-construction."""


class _Guard:
    def __init__(self, max_elements):
        self.max_elements = max_elements
        self.total = 0

    def add(self, amount=1):
        self.total += amount
        if self.total > self.max_elements:
            raise ConstructionBudget(
                f"construction exceeded the element budget ({self.max_elements})")


def size_bound_T(l: int, K: int, m: int) -> int:
    """Size recurrence for the two-variable construction: T_0 = 1 and
    T_{j+1} = 2 K^2 m^(2j+2) T_j^(2j+3), exactly, in big integers."""
    if min(l, K, m) < 0:
        raise ValueError("arguments must be nonnegative")
    t = 1
    for j in range(l):
        t = 2 * K * K * m ** (2 * j + 2) * t ** (2 * j + 3)
    return t


# ---------------------------------------------------------------------------
# Data


@dataclass(frozen=True)
class LeafNeed:
    """A witness a leaf still requires: the pattern witness, the joining
    2-type, and the generalized type of the component that will provide it."""
    conjunct: int
    witness: int
    beta_bits: int
    target: GeneralizedType


@dataclass(frozen=True)
class PatternComponent:
    gtype: GeneralizedType
    root: int
    layers: tuple[tuple[int, ...], ...]        # L_1 .. L_{l+1}
    inits: tuple[tuple[int, ...], ...]
    leaves: tuple[int, ...]                    # = last layer, creation order
    structure: FiniteStructure                 # closed
    pmap: dict[int, int]                       # component elem -> ambient elem
    leaf_needs: tuple[tuple[LeafNeed, ...], ...]  # per leaf

    def layer_of(self):
        out = {}
        for i, layer in enumerate(self.layers, start=1):
            for e in layer:
                out[e] = i
        return out


@dataclass(frozen=True)
class ComponentIndex:
    gtype: GeneralizedType
    color: int
    i: int            # leaf number served (0 for the chosen start copy)
    j: int            # conjunct served (0 for the chosen start copy)
    source: GeneralizedType

    def sort_key(self):
        return (self.gtype.sort_key(), self.color, self.i, self.j,
                self.source.sort_key())


@dataclass
class Assembly:
    components: dict[ComponentIndex, dict[int, int]]   # index -> elem map
    blueprints: dict[ComponentIndex, PatternComponent]
    joins: list[tuple[int, int, int]]                   # (leaf, root, beta bits)
    graph: dict[ComponentIndex, tuple[ComponentIndex, ...]]
    result: FiniteStructure
    pmap: dict[int, int]
    origin: int


@dataclass
class ComponentRecord:
    """A component together with the context of the inductive call that built
    it, so the per-component condition suite can be replayed."""
    component: PatternComponent
    ambient: FiniteStructure
    class_elems: tuple[int, ...]
    eqs0: tuple[str, ...]


@dataclass
class Construct2VResult:
    structure: FiniteStructure
    pmap: dict[int, int]
    origin: int
    assembly: Assembly | None
    records: list[ComponentRecord]
    ambient: FiniteStructure
    class_elems: tuple[int, ...]
    eqs0: tuple[str, ...]


# ---------------------------------------------------------------------------
# Witness lookup in the pattern


def _witnesses_in_class(ambient, class_elems, nf, a, j):
    conj = nf.conjuncts[j - 1]
    if not conj.witnesses:
        return ()
    out = []
    asg = {conj.head: a}
    for w in class_elems:
        asg[conj.witnesses[0]] = w
        if _eval(ambient, conj.matrix, asg):
            out.append(w)
    return tuple(out)


def _least_witness(ambient, class_elems, nf, a, j):
    ws = _witnesses_in_class(ambient, class_elems, nf, a, j)
    return ws[0] if ws else None


def _check_two_variable(nf: NormalFormFormula, pattern: FiniteStructure):
    if nf.t > 2:
        raise ConstructionError(f"two-variable construction needs t <= 2, got t = {nf.t}")
    for c in nf.conjuncts:
        if len(c.witnesses) > 1:
            raise ConstructionError(
                "two-variable construction needs single-witness conjuncts")
    for name, arity in pattern.sig.base:
        if arity > 2:
            raise ConstructionError(f"symbol {name!r} has arity {arity} > 2")


# ---------------------------------------------------------------------------
# Construction


def build_b0(pattern: FiniteStructure, a0: int, eqs0, nf: NormalFormFormula,
             max_elements: int = 200_000) -> Construct2VResult:
    """Run the inductive construction on the class of a0 in which the
    non-live equivalences are total.  With eqs0 = all distinguished symbols
    the result is a finite model of nf mapping back onto the pattern."""
    _check_two_variable(nf, pattern)
    if not 0 <= a0 < pattern.n:
        raise ConstructionError(f"anchor {a0} outside pattern domain")
    eqs0 = tuple(eqs0)
    for name in eqs0:
        if not pattern.sig.is_eq(name):
            raise ConstructionError(f"{name!r} is not a distinguished symbol")
    if pattern.is_pre_closure:
        raise ConstructionError("pattern must be a validated structure")
    totals = [e for e in pattern.sig.eqs if e not in eqs0]
    class_elems = eq_class(pattern, a0, totals)
    guard = _Guard(max_elements)
    records: list[ComponentRecord] = []
    structure, pmap, origin, assembly = _build(
        pattern, class_elems, a0, eqs0, nf, records, guard)
    return Construct2VResult(structure, pmap, origin, assembly, records,
                             pattern, class_elems, eqs0)


def _fresh_eq_name(sig):
    i = 0
    while sig.has(f"_id{i}"):
        i += 1
    return f"_id{i}"


def _extend_with_identity(s: FiniteStructure, name):
    sig = s.sig.extend_eq(name)
    base = {n: s.base_rel(n) for n, _ in s.sig.base}
    classes = {n: s.eq_classes(n) for n in s.sig.eqs}
    classes[name] = tuple((e,) for e in range(s.n))
    return FiniteStructure(sig, s.n, base, eq_classes=classes)


def _build(ambient, class_elems, a0, eqs0, nf, records, guard):
    if not eqs0:
        if len(class_elems) == 1:
            builder = StructureBuilder(ambient.sig)
            e = builder.copy_element(ambient, a0)
            guard.add()
            return builder.freeze(), {e: a0}, e, None
        # non-singleton base class: make one auxiliary identity equivalence
        # live and recurse, so its classes are singletons
        fake = _fresh_eq_name(ambient.sig)
        extended = _extend_with_identity(ambient, fake)
        structure, pmap, origin, assembly = _build(
            extended, class_elems, a0, (fake,), nf, records, guard)
        return structure.drop_symbols([fake]), pmap, origin, assembly

    gtypes = {}
    for e in class_elems:
        g = generalized_type_of(ambient, e)
        key = g.sort_key()
        if key not in gtypes:
            gtypes[key] = [g, e]
    a0_gt = generalized_type_of(ambient, a0)
    gtypes[a0_gt.sort_key()][1] = a0  # anchor type is represented by a0 itself

    blueprints = {}
    for key in sorted(gtypes):
        g, rep = gtypes[key]
        pc = _build_component(ambient, class_elems, g, rep, eqs0, nf, records, guard)
        blueprints[key] = pc
        records.append(ComponentRecord(pc, ambient, class_elems, eqs0))
    assembly = _join(blueprints, a0_gt, eqs0, nf, ambient, guard)
    assert assembly.pmap[assembly.origin] == a0
    return assembly.result, assembly.pmap, assembly.origin, assembly


def _build_component(ambient, class_elems, gtype, rep, eqs0, nf, records, guard):
    builder = StructureBuilder(ambient.sig)
    root = builder.copy_element(ambient, rep)
    guard.add()
    pmap = {root: rep}
    layers = []
    inits = []
    cur_init = [root]
    for i in range(1, len(eqs0) + 1):
        killed = eqs0[i - 1]
        inits.append(tuple(cur_init))
        layer = list(cur_init)
        for c in list(cur_init):
            a1 = pmap[c]
            sub_class = tuple(x for x in class_elems if ambient.eq_related(killed, a1, x))
            sub_eqs = tuple(e for e in eqs0 if e != killed)
            sub, sub_pmap, sub_origin, _ = _build(
                ambient, sub_class, a1, sub_eqs, nf, records, guard)
            mapping = builder.graft(sub, alias={sub_origin: c})
            guard.add(sub.n - 1)
            for se in range(sub.n):
                if se == sub_origin:
                    continue
                pmap[mapping[se]] = sub_pmap[se]
                layer.append(mapping[se])
        layers.append(tuple(sorted(layer)))
        nxt = []
        for c in sorted(layer):
            for j in range(1, nf.m + 1):
                w = _least_witness(ambient, class_elems, nf, pmap[c], j)
                if w is None or w == pmap[c]:
                    continue
                if ambient.eq_related(killed, pmap[c], w):
                    continue  # served inside the subcomponent just grafted
                beta = ambient.pair_bits(pmap[c], w)
                wid = builder.copy_element(ambient, w)
                guard.add()
                builder.install_pair(c, wid, beta, ambient.sig)
                pmap[wid] = w
                nxt.append(wid)
        cur_init = nxt
    layers.append(tuple(cur_init))
    inits.append(tuple(cur_init))
    leaves = tuple(cur_init)
    structure = builder.freeze(close=True)

    needs = []
    for leaf in leaves:
        per_leaf = []
        for j in range(1, nf.m + 1):
            w = _least_witness(ambient, class_elems, nf, pmap[leaf], j)
            if w is None or w == pmap[leaf]:
                continue
            per_leaf.append(LeafNeed(j, w, ambient.pair_bits(pmap[leaf], w),
                                     generalized_type_of(ambient, w)))
        needs.append(tuple(per_leaf))
    return PatternComponent(gtype, root, tuple(layers), tuple(inits), leaves,
                            structure, pmap, tuple(needs))


def _join(blueprints, a0_gt, eqs0, nf, ambient, guard):
    by_key = blueprints
    start = ComponentIndex(a0_gt, 0, 0, 0, a0_gt)

    def targets(index):
        bp = by_key[index.gtype.sort_key()]
        out = []
        for s, needs in enumerate(bp.leaf_needs, start=1):
            for need in needs:
                out.append((s, need,
                            ComponentIndex(need.target, 1 - index.color, s,
                                           need.conjunct, index.gtype)))
        return out

    reachable = {start}
    frontier = [start]
    while frontier:
        index = frontier.pop()
        for _, _, tgt in targets(index):
            if tgt not in reachable:
                reachable.add(tgt)
                frontier.append(tgt)

    order = sorted(reachable, key=ComponentIndex.sort_key)
    builder = StructureBuilder(ambient.sig)
    elem_maps = {}
    pmap = {}
    for index in order:
        bp = by_key[index.gtype.sort_key()]
        mapping = builder.graft(bp.structure)
        guard.add(bp.structure.n)
        elem_maps[index] = {e: mapping[e] for e in range(bp.structure.n)}
        for e in range(bp.structure.n):
            pmap[mapping[e]] = bp.pmap[e]

    joins = []
    graph = {index: [] for index in order}
    for index in order:
        bp = by_key[index.gtype.sort_key()]
        for s, need, tgt in targets(index):
            leaf_global = elem_maps[index][bp.leaves[s - 1]]
            tgt_bp = by_key[tgt.gtype.sort_key()]
            root_global = elem_maps[tgt][tgt_bp.root]
            builder.install_pair(leaf_global, root_global, need.beta_bits, ambient.sig)
            joins.append((leaf_global, root_global, need.beta_bits))
            graph[index].append(tgt)
    result = builder.freeze(close=True)
    origin = elem_maps[start][by_key[a0_gt.sort_key()].root]
    return Assembly(elem_maps, {i: by_key[i.gtype.sort_key()] for i in order},
                    joins, {k: tuple(v) for k, v in graph.items()},
                    result, pmap, origin)


# ---------------------------------------------------------------------------
# Condition suite


@dataclass(frozen=True)
class ConditionEntry:
    name: str
    passed: bool
    detail: str = ""


@dataclass(frozen=True)
class ConditionReport:
    entries: tuple[ConditionEntry, ...]

    @property
    def ok(self):
        return all(e.passed for e in self.entries)

    def failed(self):
        return tuple(e.name for e in self.entries if not e.passed)

    def entry(self, name):
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def format_lines(self):
        lines = []
        for e in self.entries:
            suffix = f"  ({e.detail})" if e.detail and not e.passed else ""
            lines.append(f"{e.name}: {'pass' if e.passed else 'fail'}{suffix}")
        lines.append(f"conditions: {'pass' if self.ok else 'fail'}")
        return lines


def _pair_code_rows(s):
    """row[e] = set of 2-type codes realized from e (including the self code)."""
    return [{s.pair_bits(e, x) for x in range(s.n)} for e in range(s.n)]


def _realized_codes(s, elems=None):
    elems = list(range(s.n)) if elems is None else list(elems)
    codes = {}
    for a in elems:
        for b in elems:
            codes.setdefault(s.pair_bits(a, b), (a, b))
    return codes


def _split_slots(sig):
    """Indices of 2-type slots: constant-tuple (unary-ish), cross base,
    cross distinguished, and the equality slot."""
    const = cross_base = cross_eq = eqbit = 0
    for i, (sym, tup) in enumerate(type_slots(sig, 2)):
        if sym == "=":
            eqbit |= 1 << i
        elif len(set(tup)) == 1:
            const |= 1 << i
        elif sig.is_eq(sym):
            cross_eq |= 1 << i
        else:
            cross_base |= 1 << i
    return const, cross_base, cross_eq, eqbit


def _is_weakening(code, ambient_codes, sig):
    """code matches some ambient 2-type after dropping all cross base atoms
    and possibly some cross equivalence atoms and/or the equality."""
    const, cross_base, cross_eq, eqbit = _split_slots(sig)
    if code & cross_base:
        return False
    for beta in ambient_codes:
        if (beta & const) != (code & const):
            continue
        if (code & cross_eq) & ~(beta & cross_eq):
            continue
        if (code & eqbit) & ~(beta & eqbit):
            continue
        return True
    return False


def _joint_classes(s, names):
    """Partition of s under the intersection of the named equivalences."""
    keys = {}
    for e in range(s.n):
        key = tuple(s._class_of[name][e] for name in names) if names else ()
        keys.setdefault(key, []).append(e)
    return list(keys.values())


def _visibility_checks(s, pmap, ambient, prefix, entries):
    """(b3)/(c4): equal ambient eq-visibility within joint classes, for every
    subset of the distinguished symbols; (b4)/(c5): the realized generalized
    type is a safe reduction of the ambient one, elementwise."""
    sig = ambient.sig
    k = sig.k
    vis_ok, vis_detail = True, ""
    red_ok, red_detail = True, ""
    alpha_bits = [s.one_type_bits(e) for e in range(s.n)]
    own_visible = [[None] * (1 << k) for _ in range(s.n)]
    for mask in range(1 << k):
        names = [sig.eqs[i] for i in range(k) if mask >> i & 1]
        for group in _joint_classes(s, names):
            types = frozenset(alpha_bits[e] for e in group)
            values = {}
            for e in group:
                own_visible[e][mask] = types
                fval = generalized_type_of(ambient, pmap[e]).visible[mask]
                values.setdefault(fval, e)
            if vis_ok and len(values) > 1:
                e1, e2 = sorted(values.values())[:2]
                vis_ok = False
                vis_detail = (f"elements {e1},{e2} joint under mask {mask} but "
                              f"ambient visibility differs at {pmap[e1]} vs {pmap[e2]}")
    name3 = f"{prefix}3" if prefix == "b" else "c4"
    entries.append(ConditionEntry(name3, vis_ok, vis_detail))
    for e in range(s.n):
        amb = generalized_type_of(ambient, pmap[e])
        if alpha_bits[e] != amb.alpha.bits:
            red_ok, red_detail = False, f"1-type of {e} differs from pattern {pmap[e]}"
            break
        for mask in range(1 << k):
            own = {AtomicType(sig, 1, b) for b in own_visible[e][mask]}
            if not own <= amb.visible[mask]:
                red_ok = False
                red_detail = f"element {e}, mask {mask}: visibility not contained"
                break
        if not red_ok:
            break
    name4 = f"{prefix}4" if prefix == "b" else "c5"
    entries.append(ConditionEntry(name4, red_ok, red_detail))


def _witness_check(s, pmap, ambient, class_elems, nf, rows, elems, name, entries):
    """(b2)/(c3): any witness the pattern element has inside the class is
    reproduced with an identical 2-type."""
    ok, detail = True, ""
    for e in elems:
        for j in range(1, nf.m + 1):
            ws = _witnesses_in_class(ambient, class_elems, nf, pmap[e], j)
            if not ws:
                continue
            if not any(ambient.pair_bits(pmap[e], w) in rows[e] for w in ws):
                ok = False
                detail = f"element {e} (pattern {pmap[e]}) lacks a witness for conjunct {j}"
                break
        if not ok:
            break
    entries.append(ConditionEntry(name, ok, detail))


def _totality_check(s, totals, name, entries):
    ok, detail = True, ""
    for eq in totals:
        if s.n and len(s.eq_classes(eq)) > 1:
            c1, c2 = s.eq_classes(eq)[:2]
            ok, detail = False, f"{eq} not total: {c1[0]} vs {c2[0]}"
            break
    entries.append(ConditionEntry(name, ok, detail))


def _two_type_check(s, ambient, class_elems, name, entries):
    ok, detail = True, ""
    ambient_codes = _realized_codes(ambient, class_elems)
    for code, (a, b) in _realized_codes(s).items():
        if code in ambient_codes:
            continue
        if not _is_weakening(code, ambient_codes, ambient.sig):
            ok, detail = False, f"2-type of ({a},{b}) is not realized or weakened"
            break
    entries.append(ConditionEntry(name, ok, detail))


def verify_b_conditions(b0: FiniteStructure, pmap, ambient: FiniteStructure,
                        a0: int, eqs0, nf: NormalFormFormula) -> ConditionReport:
    """Condition suite for a full construction output."""
    eqs0 = tuple(eqs0)
    totals = [e for e in ambient.sig.eqs if e not in eqs0]
    class_elems = eq_class(ambient, a0, totals)
    entries = []
    rows = _pair_code_rows(b0)
    _totality_check(b0, totals, "b1", entries)
    _witness_check(b0, pmap, ambient, class_elems, nf, rows, range(b0.n), "b2", entries)
    _visibility_checks(b0, pmap, ambient, "b", entries)
    _two_type_check(b0, ambient, class_elems, "b5", entries)
    entries.append(ConditionEntry(
        "b6", not b0.is_pre_closure and validate_equivalences(b0),
        "distinguished relations are not all equivalences"))
    entries.append(ConditionEntry(
        "b7", a0 in set(pmap.values()), f"anchor {a0} not in the image of the map"))
    entries.sort(key=lambda e: e.name)
    return ConditionReport(tuple(entries))


def verify_c_conditions(pc: PatternComponent, ambient: FiniteStructure,
                        eqs0, nf: NormalFormFormula,
                        class_elems) -> ConditionReport:
    """Condition suite for a single pattern component."""
    eqs0 = tuple(eqs0)
    s = pc.structure
    totals = [e for e in ambient.sig.eqs if e not in eqs0]
    entries = []
    entries.append(ConditionEntry(
        "c1", not s.is_pre_closure and validate_equivalences(s),
        "distinguished relations are not all equivalences"))
    _totality_check(s, totals, "c2", entries)
    rows = _pair_code_rows(s)
    non_leaves = [e for e in range(s.n) if e not in set(pc.leaves)]
    _witness_check(s, pc.pmap, ambient, class_elems, nf, rows, non_leaves, "c3", entries)
    _visibility_checks(s, pc.pmap, ambient, "c", entries)
    _two_type_check(s, ambient, class_elems, "c6", entries)

    layer_of = pc.layer_of()
    ok, detail = True, ""
    for sym, arity in ambient.sig.base:
        if arity != 2:
            continue
        for a, b in s.base_rel(sym):
            if a != b and abs(layer_of[a] - layer_of[b]) > 1:
                ok, detail = False, f"{sym}({a},{b}) spans layers {layer_of[a]},{layer_of[b]}"
                break
        if not ok:
            break
    entries.append(ConditionEntry("c7", ok, detail))

    ok, detail = True, ""
    for i in range(1, len(eqs0) + 1):
        killed = eqs0[i - 1]
        if i > len(pc.layers) - 1:
            break
        for a in pc.layers[i - 1]:
            for b in pc.layers[i]:
                if s.eq_related(killed, a, b):
                    ok, detail = False, f"{killed} joins layer {i} and layer {i + 1}: ({a},{b})"
                    break
            if not ok:
                break
        if not ok:
            break
    if ok:
        for leaf in pc.leaves:
            for eq in eqs0:
                if s.eq_related(eq, pc.root, leaf):
                    ok, detail = False, f"root connected to leaf {leaf} by {eq}"
                    break
            if not ok:
                break
    entries.append(ConditionEntry("c8", ok, detail))
    order = {f"c{i}": i for i in range(1, 9)}
    entries.sort(key=lambda e: order[e.name])
    return ConditionReport(tuple(entries))


def join_components(pcs, eqs0, nf, a0_gtype, ambient,
                    max_elements: int = 200_000) -> Assembly:
    """Join pre-built pattern components (one per realized generalized type)
    into the pruned two-colored assembly."""
    blueprints = {}
    for pc in pcs:
        blueprints[pc.gtype.sort_key()] = pc
    return _join(blueprints, a0_gtype, tuple(eqs0), nf, ambient, _Guard(max_elements))


def build_pattern_component(pattern0: FiniteStructure, gt: GeneralizedType,
                            rep: int, eqs0, nf: NormalFormFormula,
                            class_elems=None, max_elements: int = 200_000
                            ) -> PatternComponent:
    """Build the layered component for one generalized type over the given
    class (defaults to the class of rep in which non-live equivalences are
    total)."""
    _check_two_variable(nf, pattern0)
    eqs0 = tuple(eqs0)
    if class_elems is None:
        totals = [e for e in pattern0.sig.eqs if e not in eqs0]
        class_elems = eq_class(pattern0, rep, totals)
    return _build_component(pattern0, tuple(class_elems), gt, rep, eqs0, nf,
                            [], _Guard(max_elements))
