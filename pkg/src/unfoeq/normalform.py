"""Normalization of accepted sentences to the shape

    forall x1..xt . ~phi0  &  /\\_i forall x . ~~(exists y.. . phi_i)

with quantifier-free matrices, over a signature extended by fresh unary
symbols; plus the rewriting of equivalence atoms for transitive-only
semantics, and the symmetrization that undoes it on models."""

from __future__ import annotations

from dataclasses import dataclass

from .fragments import validate_fragment
from .structures import (EquivalenceViolation, FiniteStructure, StructureError,
                         _close_partition)
from .syntax import (And, Atom, Equality, Exists, Formula, Neg, Or, Signature, UnivNeg,
                     conjoin, disjoin, free_vars, is_quantifier_free, split_and,
                     substitute)


class NormalFormError(Exception):
    pass


class FragmentRejected(NormalFormError):
    def __init__(self, report):
        lines = [f"  {v.path or '<root>'}: [{v.fragment}] {v.reason}"
                 for v in report.violations]
        super().__init__("formula is outside the accepted fragments:\n" + "\n".join(lines))
        self.report = report


@dataclass(frozen=True)
class NormalFormConjunct:
    """One forall/exists conjunct: for every value of `head` there are values
    of `witnesses` satisfying the quantifier-free matrix."""

    head: str
    witnesses: tuple[str, ...]
    matrix: Formula


@dataclass(frozen=True)
class NormalFormFormula:
    t: int
    phi0: Formula                       # over x1..xt, quantifier-free
    conjuncts: tuple[NormalFormConjunct, ...]
    sig: Signature

    def __post_init__(self):
        assert self.t >= 1
        assert is_quantifier_free(self.phi0)
        for c in self.conjuncts:
            assert is_quantifier_free(c.matrix)

    @property
    def m(self):
        return len(self.conjuncts)

    def forall_vars(self):
        return tuple(f"x{i}" for i in range(1, self.t + 1))

    def as_formula(self) -> Formula:
        parts = [UnivNeg(self.forall_vars(), self.phi0)]
        for c in self.conjuncts:
            if c.witnesses:
                parts.append(UnivNeg((c.head,), Neg(Exists(c.witnesses, c.matrix))))
            else:
                parts.append(UnivNeg((c.head,), Neg(c.matrix)))
        return conjoin(parts)

    def pretty(self):
        return self.as_formula().pretty()


_HOLE = "_hole"


class _Normalizer:
    def __init__(self, sig: Signature):
        self.sig = sig
        self.fresh_names: list[str] = []
        self.phi0_pool: list[tuple[tuple[str, ...], Formula]] = []
        self.conj_pool: list[tuple[str, tuple[str, ...], Formula]] = []
        self._fresh_i = 0
        self._dummy_i = 0

    def fresh_symbol(self):
        while True:
            name = f"_nf{self._fresh_i}"
            self._fresh_i += 1
            if not self.sig.has(name) and name not in self.fresh_names:
                self.fresh_names.append(name)
                return name

    def dummy_var(self):
        self._dummy_i += 1
        return f"_d{self._dummy_i}"

    def add_phi0(self, vars_, matrix):
        if not vars_:
            vars_ = (self.dummy_var(),)
        if _HOLE in free_vars(matrix):
            matrix = substitute(matrix, {_HOLE: vars_[0]})
        self.phi0_pool.append((tuple(vars_), matrix))

    def add_conjunct(self, head, witnesses, matrix):
        if _HOLE in free_vars(matrix):
            matrix = substitute(matrix, {_HOLE: head})
        self.conj_pool.append((head, tuple(witnesses), matrix))

    # -- block naming -------------------------------------------------------

    def name_blocks(self, f) -> Formula:
        """Replace every maximal quantified block inside f by a fresh unary
        atom (axiomatized both ways); the result is quantifier-free."""
        if isinstance(f, (Atom, Equality)):
            return f
        if isinstance(f, And):
            return And(self.name_blocks(f.left), self.name_blocks(f.right))
        if isinstance(f, Or):
            return Or(self.name_blocks(f.left), self.name_blocks(f.right))
        if isinstance(f, Neg):
            return Neg(self.name_blocks(f.body))
        if isinstance(f, UnivNeg):
            return Neg(self.name_block_formula(Exists(f.vars, f.body)))
        return self.name_block_formula(f)

    def name_block_formula(self, ex: Exists) -> Formula:
        vars_, core = self.flatten_extrude(ex)
        fv = sorted(free_vars(ex))
        if len(fv) > 1:
            raise NormalFormError(
                "quantified subformula with more than one free variable "
                f"({', '.join(fv)}) cannot be named")
        name = self.fresh_symbol()
        anchor = fv[0] if fv else self.dummy_var()
        # anchor holds the named block: N(anchor) <-> exists vars_ . core
        self.add_conjunct(anchor, vars_, Or(Neg(Atom(name, (anchor,))), core))
        self.add_phi0((anchor,) + vars_, And(core, Neg(Atom(name, (anchor,)))))
        if not fv:
            g1, g2 = self.dummy_var(), self.dummy_var()
            # closed block: force the flag to be all-or-nothing
            self.add_phi0((g1, g2), And(Atom(name, (g1,)), Neg(Atom(name, (g2,)))))
            return Atom(name, (_HOLE,))
        return Atom(name, (fv[0],))

    def flatten_extrude(self, f) -> tuple[tuple[str, ...], Formula]:
        """Pull existential quantifiers outward through and/or (sound after
        rectification over nonempty domains); negated subtrees are made
        quantifier-free by naming their blocks."""
        if isinstance(f, (Atom, Equality)):
            return (), f
        if isinstance(f, (And, Or)):
            va, ca = self.flatten_extrude(f.left)
            vb, cb = self.flatten_extrude(f.right)
            return va + vb, type(f)(ca, cb)
        if isinstance(f, Exists):
            vb, cb = self.flatten_extrude(f.body)
            return f.vars + vb, cb
        if isinstance(f, (Neg, UnivNeg)):
            return (), self.name_blocks(f)
        raise TypeError(f"not a formula: {f!r}")

    # -- top level ----------------------------------------------------------

    def process(self, f):
        for conj in split_and(f):
            if isinstance(conj, UnivNeg):
                if len(conj.vars) == 1 and isinstance(conj.body, Neg):
                    # forall x . ~~inner: a positive per-element requirement
                    vars_, core = self.flatten_extrude(conj.body.body)
                    if vars_:
                        self.add_conjunct(conj.vars[0], vars_, core)
                    else:
                        self.add_phi0(conj.vars, Neg(core))
                else:
                    vars_, core = self.flatten_extrude(conj.body)
                    self.add_phi0(conj.vars + vars_, core)
            elif isinstance(conj, Neg):
                vars_, core = self.flatten_extrude(conj.body)
                self.add_phi0(vars_, core)
            else:
                vars_, core = self.flatten_extrude(conj)
                if vars_:
                    self.add_conjunct(self.dummy_var(), vars_, core)
                else:
                    self.add_phi0((self.dummy_var(),), Neg(core))

    def assemble(self):
        if not self.phi0_pool:
            flag = self.fresh_symbol()
            self.phi0_pool.append((("x1",), And(Atom(flag, ("x1",)),
                                                Neg(Atom(flag, ("x1",))))))
        t = max(1, max(len(vs) for vs, _ in self.phi0_pool))
        disjuncts = []
        for vs, matrix in self.phi0_pool:
            ren = {v: f"x{i + 1}" for i, v in enumerate(vs)}
            disjuncts.append(substitute(matrix, ren))
        phi0 = disjoin(disjuncts)
        conjuncts = []
        for head, wits, matrix in self.conj_pool:
            ren = {head: "x"}
            ren.update({w: f"y{i + 1}" for i, w in enumerate(wits)})
            conjuncts.append(NormalFormConjunct(
                "x", tuple(f"y{i + 1}" for i in range(len(wits))),
                substitute(matrix, ren)))
        sig = self.sig.extend_unary(self.fresh_names)
        return NormalFormFormula(t, phi0, tuple(conjuncts), sig), sig


def rectify(f: Formula) -> Formula:
    """Rename bound variables apart from each other and from free variables."""
    used = set(free_vars(f))
    counters: dict[str, int] = {}

    def freshen(v):
        if v not in used:
            used.add(v)
            return v
        i = counters.get(v, 1)
        while True:
            i += 1
            cand = f"{v}_{i}"
            if cand not in used:
                counters[v] = i
                used.add(cand)
                return cand

    def go(f, ren):
        if isinstance(f, Atom):
            return Atom(f.symbol, tuple(ren.get(a, a) for a in f.args))
        if isinstance(f, Equality):
            return Equality(ren.get(f.left, f.left), ren.get(f.right, f.right))
        if isinstance(f, (And, Or)):
            return type(f)(go(f.left, ren), go(f.right, ren))
        if isinstance(f, Neg):
            return Neg(go(f.body, ren))
        if isinstance(f, (Exists, UnivNeg)):
            new = tuple(freshen(v) for v in f.vars)
            inner = dict(ren)
            inner.update(dict(zip(f.vars, new)))
            return type(f)(new, go(f.body, inner))
        raise TypeError(f"not a formula: {f!r}")

    return go(f, {})


def to_normal_form(f: Formula, sig: Signature) -> tuple[NormalFormFormula, Signature]:
    """Normalize an accepted sentence; the result is satisfied by exactly the
    expansions of models of f by suitable fresh unary relations."""
    report = validate_fragment(f, sig)
    if not (report.is_unfo or report.is_bgnfo1_eq):
        raise FragmentRejected(report)
    if free_vars(f):
        raise NormalFormError(
            f"normalization needs a sentence; free: {', '.join(sorted(free_vars(f)))}")
    norm = _Normalizer(sig)
    norm.process(rectify(f))
    return norm.assemble()


# ---------------------------------------------------------------------------
# Equivalence -> transitive reduction


def reduce_to_transitive(nf: NormalFormFormula) -> NormalFormFormula:
    """Rewrite every distinguished atom E(u,v) to E(u,v) & E(v,u) and append a
    reflexivity conjunct per distinguished symbol.  The result is evaluated
    under transitive-only semantics for the distinguished relations."""
    sig = nf.sig

    def rewrite(f):
        if isinstance(f, Atom):
            if sig.is_eq(f.symbol) and f.args[0] != f.args[1]:
                return And(f, Atom(f.symbol, (f.args[1], f.args[0])))
            return f
        if isinstance(f, Equality):
            return f
        if isinstance(f, (And, Or)):
            return type(f)(rewrite(f.left), rewrite(f.right))
        if isinstance(f, Neg):
            return Neg(rewrite(f.body))
        raise TypeError(f"matrix is not quantifier-free: {f!r}")

    conjuncts = [NormalFormConjunct(c.head, c.witnesses, rewrite(c.matrix))
                 for c in nf.conjuncts]
    for name in sig.eqs:
        conjuncts.append(NormalFormConjunct("x", (), Atom(name, ("x", "x"))))
    return NormalFormFormula(nf.t, rewrite(nf.phi0), tuple(conjuncts), sig)


def symmetrize_model(s: FiniteStructure) -> FiniteStructure:
    """Replace each distinguished relation (which must be transitive and
    reflexive) by its largest symmetric subrelation, yielding equivalences."""
    if not s.is_pre_closure:
        return s
    classes = {}
    for name in s.sig.eqs:
        rel = set(s.eq_raw_pairs(name))
        for e in range(s.n):
            if (e, e) not in rel:
                raise EquivalenceViolation(name, (e, e), "reflexivity fails")
        for a, b in rel:
            for c, d in rel:
                if b == c and (a, d) not in rel:
                    raise EquivalenceViolation(name, (a, d), "transitivity fails")
        core = {(a, b) for a, b in rel if (b, a) in rel}
        classes[name] = _close_partition(s.n, core)
    base = {name: s.base_rel(name) for name, _ in s.sig.base}
    return FiniteStructure(s.sig, s.n, base, eq_classes=classes)
