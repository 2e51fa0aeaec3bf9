"""Finite relational structures over split signatures.

Domains are dense 0..n-1.  Distinguished relations are kept as partitions once
validated; structures produced mid-construction may instead carry raw
pre-closure pairs and are flagged as such.  Also here: atomic 1-/2-types
(bit-vector encoded), eq-visibility generalized types, equivalence closure,
induced substructures, and a mutable builder used by the model constructions.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass

from .syntax import Signature


class StructureError(Exception):
    pass


class EquivalenceViolation(StructureError):
    def __init__(self, symbol, pair, reason):
        super().__init__(f"{symbol} is not an equivalence: {reason} at {pair}")
        self.symbol = symbol
        self.pair = pair


# ---------------------------------------------------------------------------
# Atomic types

EQ_SLOT = ("=", (0, 1))


@functools.lru_cache(maxsize=None)
def type_slots(sig: Signature, k: int) -> tuple[tuple[str, tuple[int, ...]], ...]:
    """Literal slots of an atomic k-type, in canonical order."""
    slots = []
    for name in sig.symbols():
        for tup in itertools.product(range(k), repeat=sig.arity(name)):
            slots.append((name, tup))
    if k == 2:
        slots.append(EQ_SLOT)
    return tuple(slots)


@dataclass(frozen=True)
class AtomicType:
    """A maximal consistent literal set over k variables, as a bit vector of
    the positive literals (order given by type_slots)."""

    sig: Signature
    k: int
    bits: int

    def holds(self, symbol, tup):
        slots = type_slots(self.sig, self.k)
        return bool(self.bits >> slots.index((symbol, tup)) & 1)

    def positives(self):
        slots = type_slots(self.sig, self.k)
        return tuple(s for i, s in enumerate(slots) if self.bits >> i & 1)

    def project(self, var):
        """Embedded 1-type of variable `var` (0 or 1) of a 2-type."""
        if self.k != 2:
            raise ValueError("project applies to 2-types")
        bits = 0
        slots1 = type_slots(self.sig, 1)
        slots2 = type_slots(self.sig, 2)
        index1 = {s: i for i, s in enumerate(slots1)}
        for i, (sym, tup) in enumerate(slots2):
            if sym == "=":
                continue
            if all(v == var for v in tup) and self.bits >> i & 1:
                bits |= 1 << index1[(sym, tuple(0 for _ in tup))]
        return AtomicType(self.sig, 1, bits)

    def swapped(self):
        """The same 2-type with the two variables exchanged."""
        if self.k != 2:
            raise ValueError("swapped applies to 2-types")
        slots2 = type_slots(self.sig, 2)
        index2 = {s: i for i, s in enumerate(slots2)}
        bits = 0
        for i, (sym, tup) in enumerate(slots2):
            if not (self.bits >> i & 1):
                continue
            if sym == "=":
                bits |= 1 << i
            else:
                bits |= 1 << index2[(sym, tuple(1 - v for v in tup))]
        return AtomicType(self.sig, 2, bits)

    def has_equality(self):
        return self.k == 2 and self.holds(*EQ_SLOT)

    def pretty(self):
        names = ["x1", "x2"]
        parts = []
        for sym, tup in self.positives():
            if sym == "=":
                parts.append("x1 = x2")
            else:
                parts.append(f"{sym}({', '.join(names[v] for v in tup)})")
        return "{" + ", ".join(parts) + "}"


@dataclass(frozen=True)
class GeneralizedType:
    """A 1-type plus its eq-visibility function; visible[mask] is the set of
    1-types seen inside the joint class of the equivalences selected by the
    bits of mask (bit i = i-th distinguished symbol)."""

    alpha: AtomicType
    visible: tuple[frozenset[AtomicType], ...]

    def __post_init__(self):
        k = len(self.visible).bit_length() - 1
        assert len(self.visible) == 1 << k
        for mask, types in enumerate(self.visible):
            if self.alpha not in types:
                raise StructureError("generalized type lost its own 1-type")
            sub = mask
            while sub:
                sub = (sub - 1) & mask
                if not types <= self.visible[sub]:
                    raise StructureError("eq-visibility function is not antitone")
                if sub == 0:
                    break

    def f(self, eq_names, sig):
        mask = 0
        for name in eq_names:
            mask |= 1 << sig.eqs.index(name)
        return self.visible[mask]

    def sort_key(self):
        return (self.alpha.bits,
                tuple(tuple(sorted(t.bits for t in fs)) for fs in self.visible))


def is_safe_reduction(g1: GeneralizedType, g2: GeneralizedType) -> bool:
    """True when g1 has the same 1-type and pointwise smaller visibility."""
    return g1.alpha == g2.alpha and all(
        a <= b for a, b in zip(g1.visible, g2.visible))


# ---------------------------------------------------------------------------
# Structures


class FiniteStructure:
    """Immutable finite structure.  Distinguished relations are partitions
    once validated; pre-closure intermediates keep raw pairs instead."""

    def __init__(self, sig, n, base, eq_classes=None, eq_pairs=None):
        self.sig = sig
        self.n = n
        self._base = base          # name -> frozenset of tuples
        self._eq_classes = eq_classes  # name -> tuple of sorted tuples, or None
        self._eq_pairs = eq_pairs  # name -> frozenset of raw (a, b), or None
        self._class_of = {}
        if eq_classes is not None:
            for name, classes in eq_classes.items():
                ids = [0] * n
                for ci, cls in enumerate(classes):
                    for e in cls:
                        ids[e] = ci
                self._class_of[name] = ids
        self._one_bits: list[int] | None = None
        self._gtypes: list[GeneralizedType] | None = None

    # -- construction -------------------------------------------------------

    @staticmethod
    def make(sig, n, interp, close=True):
        """Build from symbol -> tuples.  Distinguished relations are closed to
        the least containing equivalence unless close=False, which instead
        validates them strictly."""
        base = {}
        eq_in = {}
        for name, tuples in interp.items():
            if not sig.has(name):
                raise StructureError(f"undeclared symbol {name!r}")
            tuples = frozenset(tuple(t) for t in tuples)
            for t in tuples:
                if len(t) != sig.arity(name):
                    raise StructureError(f"arity mismatch for {name}{t}")
                for e in t:
                    if not 0 <= e < n:
                        raise StructureError(f"element {e} outside domain 0..{n - 1}")
            if sig.is_eq(name):
                eq_in[name] = tuples
            else:
                base[name] = tuples
        for name, _ in sig.base:
            base.setdefault(name, frozenset())
        eq_classes = {}
        for name in sig.eqs:
            pairs = eq_in.get(name, frozenset())
            if close:
                eq_classes[name] = _close_partition(n, pairs)
            else:
                _check_equivalence(name, n, pairs)
                eq_classes[name] = _close_partition(n, pairs)
        return FiniteStructure(sig, n, base, eq_classes=eq_classes)

    @staticmethod
    def pre_closure(sig, n, base, eq_pairs):
        """A flagged intermediate whose distinguished relations are raw pairs."""
        full_base = {name: frozenset(base.get(name, ())) for name, _ in sig.base}
        return FiniteStructure(sig, n, full_base, eq_pairs={
            name: frozenset(eq_pairs.get(name, ())) for name in sig.eqs})

    @property
    def is_pre_closure(self):
        return self._eq_classes is None

    # -- basic access -------------------------------------------------------

    def base_rel(self, name):
        return self._base[name]

    def holds(self, name, tup):
        if self.sig.is_eq(name):
            a, b = tup
            return self.eq_related(name, a, b)
        return tuple(tup) in self._base[name]

    def eq_related(self, name, a, b):
        if self.is_pre_closure:
            return (a, b) in self._eq_pairs[name]
        return self._class_of[name][a] == self._class_of[name][b]

    def eq_classes(self, name):
        if self.is_pre_closure:
            raise StructureError("pre-closure structure has no classes")
        return self._eq_classes[name]

    def eq_class_of(self, name, a):
        classes = self.eq_classes(name)
        return classes[self._class_of[name][a]]

    def eq_raw_pairs(self, name):
        if self.is_pre_closure:
            return self._eq_pairs[name]
        pairs = set()
        for cls in self._eq_classes[name]:
            pairs.update(itertools.product(cls, repeat=2))
        return frozenset(pairs)

    def __eq__(self, other):
        if not isinstance(other, FiniteStructure):
            return NotImplemented
        return (self.sig == other.sig and self.n == other.n
                and self._base == other._base
                and self._eq_classes == other._eq_classes
                and self._eq_pairs == other._eq_pairs)

    def __hash__(self):
        return hash((self.sig, self.n,
                     tuple(sorted((k, tuple(sorted(v))) for k, v in self._base.items()))))

    def __repr__(self):
        state = "pre-closure " if self.is_pre_closure else ""
        return f"<{state}structure n={self.n} over {len(self.sig.symbols())} symbols>"

    # -- types --------------------------------------------------------------

    def one_type_bits(self, a):
        if self._one_bits is None:
            self._one_bits = [None] * self.n
        cached = self._one_bits[a]
        if cached is None:
            bits = 0
            for i, (sym, tup) in enumerate(type_slots(self.sig, 1)):
                if self.holds(sym, tuple(a for _ in tup)):
                    bits |= 1 << i
            self._one_bits[a] = cached = bits
        return cached

    def pair_bits(self, a, b):
        bits = 0
        for i, (sym, tup) in enumerate(type_slots(self.sig, 2)):
            if sym == "=":
                if a == b:
                    bits |= 1 << i
                continue
            if self.holds(sym, tuple(a if v == 0 else b for v in tup)):
                bits |= 1 << i
        return bits

    def drop_symbols(self, names):
        names = set(names)
        sig = self.sig.drop_symbols(names)
        base = {k: v for k, v in self._base.items() if k not in names}
        if self.is_pre_closure:
            pairs = {k: v for k, v in self._eq_pairs.items() if k not in names}
            return FiniteStructure(sig, self.n, base, eq_pairs=pairs)
        classes = {k: v for k, v in self._eq_classes.items() if k not in names}
        return FiniteStructure(sig, self.n, base, eq_classes=classes)


def _close_partition(n, pairs):
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in pairs:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    groups = {}
    for e in range(n):
        groups.setdefault(find(e), []).append(e)
    return tuple(tuple(sorted(g)) for g in sorted(groups.values()))


def _check_equivalence(name, n, pairs):
    rel = set(pairs)
    for e in range(n):
        if (e, e) not in rel:
            raise EquivalenceViolation(name, (e, e), "reflexivity fails")
    for a, b in rel:
        if (b, a) not in rel:
            raise EquivalenceViolation(name, (a, b), "symmetry fails")
    for a, b in rel:
        for c, d in rel:
            if b == c and (a, d) not in rel:
                raise EquivalenceViolation(name, (a, d), "transitivity fails")


def validate_equivalences(s: FiniteStructure) -> bool:
    """True when every distinguished relation of s is an equivalence."""
    if not s.is_pre_closure:
        return True
    try:
        for name in s.sig.eqs:
            pairs = set(s.eq_raw_pairs(name)) | {(e, e) for e in range(s.n)}
            _check_equivalence(name, s.n, pairs)
    except EquivalenceViolation:
        return False
    return True


def close_equivalences(s: FiniteStructure) -> FiniteStructure:
    """Replace each distinguished relation by the least containing equivalence."""
    if not s.is_pre_closure:
        return s
    classes = {name: _close_partition(s.n, s.eq_raw_pairs(name)) for name in s.sig.eqs}
    return FiniteStructure(s.sig, s.n, dict(s._base), eq_classes=classes)


def restrict(s: FiniteStructure, subset) -> FiniteStructure:
    return restrict_with_map(s, subset)[0]


def restrict_with_map(s: FiniteStructure, subset):
    """Induced substructure on `subset`, re-indexed along sorted order.
    Returns (structure, elements) with elements[i] the original id of i."""
    elems = sorted(set(subset))
    for e in elems:
        if not 0 <= e < s.n:
            raise StructureError(f"element {e} outside domain")
    index = {e: i for i, e in enumerate(elems)}
    keep = set(elems)
    base = {name: frozenset(tuple(index[x] for x in t)
                            for t in s.base_rel(name) if set(t) <= keep)
            for name, _ in s.sig.base}
    if s.is_pre_closure:
        pairs = {name: frozenset((index[a], index[b])
                                 for a, b in s.eq_raw_pairs(name)
                                 if a in keep and b in keep)
                 for name in s.sig.eqs}
        return FiniteStructure(s.sig, len(elems), base, eq_pairs=pairs), elems
    classes = {}
    for name in s.sig.eqs:
        out = [tuple(index[e] for e in cls if e in keep) for cls in s.eq_classes(name)]
        classes[name] = tuple(sorted(c for c in out if c))
    return FiniteStructure(s.sig, len(elems), base, eq_classes=classes), elems


def atomic_type(s: FiniteStructure, a) -> AtomicType:
    return AtomicType(s.sig, 1, s.one_type_bits(a))


def atomic_type2(s: FiniteStructure, a, b) -> AtomicType:
    if a == b:
        raise StructureError("atomic_type2 requires two distinct elements")
    return AtomicType(s.sig, 2, s.pair_bits(a, b))


def eq_class(s: FiniteStructure, a, eqs) -> tuple[int, ...]:
    """The class of `a` under the intersection of the named equivalences;
    the whole domain when `eqs` is empty."""
    eqs = list(eqs)
    if not eqs:
        return tuple(range(s.n))
    members = set(s.eq_class_of(eqs[0], a))
    for name in eqs[1:]:
        members &= set(s.eq_class_of(name, a))
    return tuple(sorted(members))


def generalized_type(s: FiniteStructure, a) -> GeneralizedType:
    k = s.sig.k
    visible = []
    for mask in range(1 << k):
        names = [s.sig.eqs[i] for i in range(k) if mask >> i & 1]
        members = eq_class(s, a, names)
        visible.append(frozenset(atomic_type(s, b) for b in members))
    return GeneralizedType(atomic_type(s, a), tuple(visible))


def realized_generalized_types(s: FiniteStructure):
    """Distinct generalized types realized in s, canonically ordered."""
    if s._gtypes is None:
        s._gtypes = [generalized_type(s, a) for a in range(s.n)]
    seen = {}
    for g in s._gtypes:
        seen.setdefault(g.sort_key(), g)
    return tuple(seen[k] for k in sorted(seen))


def generalized_type_of(s: FiniteStructure, a) -> GeneralizedType:
    if s._gtypes is None:
        s._gtypes = [generalized_type(s, e) for e in range(s.n)]
    return s._gtypes[a]


# ---------------------------------------------------------------------------
# Text format

def load_structure(text: str, sig: Signature, close=True) -> FiniteStructure:
    """Parse `domain N` plus `rel NAME: (i,j) ...` lines.  Distinguished
    relations may be given by generators and are closed unless close=False."""
    n = None
    interp = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("domain"):
            try:
                n = int(line.split()[1])
            except (IndexError, ValueError):
                raise StructureError(f"line {lineno}: bad domain line") from None
            if n < 1:
                raise StructureError(f"line {lineno}: domain must be >= 1")
            continue
        if not line.startswith("rel"):
            raise StructureError(f"line {lineno}: expected 'domain' or 'rel'")
        if n is None:
            raise StructureError(f"line {lineno}: 'rel' before 'domain'")
        head, _, rest = line[3:].partition(":")
        name = head.strip()
        if not sig.has(name):
            raise StructureError(f"line {lineno}: undeclared symbol {name!r}")
        tuples = interp.setdefault(name, [])
        for part in rest.replace("(", " (").split():
            part = part.strip()
            if not part:
                continue
            if not (part.startswith("(") and part.endswith(")")):
                raise StructureError(f"line {lineno}: bad tuple {part!r}")
            try:
                tup = tuple(int(x) for x in part[1:-1].split(",") if x.strip() != "")
            except ValueError:
                raise StructureError(f"line {lineno}: bad tuple {part!r}") from None
            if len(tup) != sig.arity(name):
                raise StructureError(
                    f"line {lineno}: arity mismatch for {name}{part}")
            for e in tup:
                if not 0 <= e < n:
                    raise StructureError(f"line {lineno}: element {e} outside domain")
            tuples.append(tup)
    if n is None:
        raise StructureError("missing 'domain' line")
    return FiniteStructure.make(sig, n, interp, close=close)


def dump_structure(s: FiniteStructure) -> str:
    lines = [f"domain {s.n}"]
    for name, _ in s.sig.base:
        tuples = " ".join(f"({','.join(map(str, t))})" for t in sorted(s.base_rel(name)))
        lines.append(f"rel {name}: {tuples}".rstrip())
    for name in s.sig.eqs:
        if s.is_pre_closure:
            pairs = sorted(s.eq_raw_pairs(name))
        else:
            pairs = []
            for cls in s.eq_classes(name):
                pairs.extend((cls[i], cls[i + 1]) for i in range(len(cls) - 1))
        body = " ".join(f"({a},{b})" for a, b in pairs)
        lines.append(f"rel {name}: {body}".rstrip())
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Builder


class StructureBuilder:
    """Accumulates elements (as 1-type bit vectors) and ground atoms; freezes
    into a FiniteStructure, closing equivalences or keeping raw pairs."""

    def __init__(self, sig: Signature):
        self.sig = sig
        self._one: list[int] = []
        self._atoms: set[tuple[str, tuple[int, ...]]] = set()
        self._slots1 = type_slots(sig, 1)
        self._index1 = {slot: i for i, slot in enumerate(self._slots1)}

    @property
    def n(self):
        return len(self._one)

    def new_element(self, one_bits: int) -> int:
        self._one.append(one_bits)
        return len(self._one) - 1

    def copy_element(self, src: FiniteStructure, e) -> int:
        assert src.sig == self.sig, "builder and source signatures differ"
        return self.new_element(src.one_type_bits(e))

    def one_bits(self, e):
        return self._one[e]

    def add_atom(self, sym, tup):
        tup = tuple(tup)
        if len(set(tup)) == 1:
            slot = (sym, tuple(0 for _ in tup))
            self._one[tup[0]] |= 1 << self._index1[slot]
        else:
            self._atoms.add((sym, tup))

    def install_pair(self, a, b, code_bits: int, code_sig: Signature):
        """Join distinct elements a, b by the cross atoms of a 2-type code;
        the code's reflexive part must agree with the existing 1-types."""
        assert a != b
        for i, (sym, tup) in enumerate(type_slots(code_sig, 2)):
            if not (code_bits >> i & 1):
                continue
            if sym == "=":
                raise StructureError("cannot join two elements by an equality type")
            if len(set(tup)) == 1:
                e = a if tup[0] == 0 else b
                slot = (sym, tuple(0 for _ in tup))
                if not self._one[e] >> self._index1[slot] & 1:
                    raise StructureError(
                        f"2-type reflexive atom {sym} disagrees with 1-type of {e}")
                continue
            self.add_atom(sym, tuple(a if v == 0 else b for v in tup))

    def graft(self, src: FiniteStructure, alias: dict[int, int] | None = None) -> list[int]:
        """Copy all of src into the builder; alias maps src elements onto
        existing builder elements.  Returns the full src -> builder map."""
        assert src.sig == self.sig, "builder and source signatures differ"
        alias = alias or {}
        mapping = []
        for e in range(src.n):
            if e in alias:
                mapping.append(alias[e])
            else:
                mapping.append(self.copy_element(src, e))
        for name, _ in self.sig.base:
            for t in src.base_rel(name):
                if len(set(t)) >= 2:
                    self.add_atom(name, tuple(mapping[x] for x in t))
        for name in self.sig.eqs:
            if src.is_pre_closure:
                for a, b in src.eq_raw_pairs(name):
                    if a != b:
                        self.add_atom(name, (mapping[a], mapping[b]))
            else:
                for cls in src.eq_classes(name):
                    for i in range(len(cls) - 1):
                        self.add_atom(name, (mapping[cls[i]], mapping[cls[i + 1]]))
        return mapping

    def eq_pairs(self, name):
        return {(a, b) for sym, (a, b) in ((s, t) for s, t in self._atoms if s == name)}

    def freeze(self, close=True) -> FiniteStructure:
        n = self.n
        base = {}
        for name, arity in self.sig.base:
            tuples = {t for sym, t in self._atoms if sym == name}
            for e in range(n):
                slot = (name, tuple(0 for _ in range(arity)))
                if self._one[e] >> self._index1[slot] & 1:
                    tuples.add(tuple(e for _ in range(arity)))
            base[name] = frozenset(tuples)
        eq_pairs = {}
        for name in self.sig.eqs:
            pairs = {t for sym, t in self._atoms if sym == name}
            for e in range(n):
                if self._one[e] >> self._index1[(name, (0, 0))] & 1:
                    pairs.add((e, e))
            eq_pairs[name] = pairs
        if close:
            classes = {name: _close_partition(n, pairs) for name, pairs in eq_pairs.items()}
            return FiniteStructure(self.sig, n, base, eq_classes=classes)
        return FiniteStructure(self.sig, n, base,
                               eq_pairs={k: frozenset(v) for k, v in eq_pairs.items()})
