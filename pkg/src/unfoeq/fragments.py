"""Fragment classification: unary negation, one-dimensional guarded negation,
and its base-guarded variant with equivalence symbols off guard positions.

Membership rules, per negation node:

* unary-negation fragment: the negated body has at most one free variable,
  and negation is never applied directly to an equality atom;
* one-dimensional guarded negation: a negation is admissible when its body is
  a sentence, has a single free variable (the implicit `x = x` self guard), or
  is conjoined with a positive atomic guard covering its free variables; every
  maximal quantifier block must leave at most one variable free;
* base-guarded one-dimensional variant: as above, but explicit guards must be
  base atoms (equality atoms are also accepted as guards; distinguished
  symbols are not).
"""

from __future__ import annotations

from dataclasses import dataclass

from .syntax import And, Atom, Equality, Exists, Formula, Neg, Signature, UnivNeg, free_vars


@dataclass(frozen=True)
class Violation:
    path: str
    fragment: str
    reason: str


@dataclass(frozen=True)
class FragmentReport:
    is_unfo: bool
    is_gnfo1: bool
    is_bgnfo1_eq: bool
    violations: tuple[Violation, ...]

    def for_fragment(self, fragment):
        return tuple(v for v in self.violations if v.fragment == fragment)


def validate_fragment(f: Formula, sig: Signature) -> FragmentReport:
    checker = _Checker(sig)
    checker.walk(f, "", ())
    checker.check_blocks(f)
    unfo_ok = not checker.unfo
    gnfo1_ok = unfo_ok or not (checker.gnfo1 or checker.onedim)
    bg_ok = not (checker.bgnfo1 or checker.onedim)
    violations = tuple(checker.unfo) + tuple(checker.gnfo1) + tuple(checker.bgnfo1) \
        + tuple(checker.onedim)
    return FragmentReport(unfo_ok, gnfo1_ok, bg_ok, violations)


class _Checker:
    def __init__(self, sig):
        self.sig = sig
        self.unfo = []
        self.gnfo1 = []
        self.bgnfo1 = []
        self.onedim = []

    def walk(self, f, path, guards):
        """`guards` holds the positive atoms conjoined with `f` in the current
        conjunction group, for the guardedness checks."""
        if isinstance(f, (Atom, Equality)):
            return
        if isinstance(f, And):
            group = _conjunction_atoms(f)
            self.walk(f.left, path + ".0" if path else "0", group)
            self.walk(f.right, path + ".1" if path else "1", group)
            return
        child_path = path + ".0" if path else "0"
        if isinstance(f, Neg):
            self._check_negation(f, free_vars(f.body), f.body, path, guards)
            self.walk(f.body, child_path, ())
            return
        if isinstance(f, UnivNeg):
            self._check_negation(f, free_vars(f), Exists(f.vars, f.body), path, guards)
            self.walk(f.body, child_path, ())
            return
        if isinstance(f, Exists):
            self.walk(f.body, child_path, ())
            return
        # Or
        self.walk(f.left, child_path, ())
        self.walk(f.right, path + ".1" if path else "1", ())

    def _check_negation(self, node, fv, body, path, guards):
        if len(fv) > 1:
            self.unfo.append(Violation(
                path, "unfo",
                f"negated subformula has {len(fv)} free variables ({', '.join(sorted(fv))}); "
                "unary negation allows at most 1"))
        if isinstance(body, Equality):
            self.unfo.append(Violation(path, "unfo", "negated equality"))
        if len(fv) <= 1:
            return  # sentence or self-guarded: fine for both guarded variants
        if not any(_covers(g, fv) for g in guards):
            self.gnfo1.append(Violation(
                path, "gnfo1",
                "negation with free variables "
                f"{{{', '.join(sorted(fv))}}} lacks a conjoined atomic guard covering them"))
        if not any(_covers(g, fv) and _base_guard(g, self.sig) for g in guards):
            self.bgnfo1.append(Violation(
                path, "bgnfo1_eq",
                "negation with free variables "
                f"{{{', '.join(sorted(fv))}}} lacks a conjoined base-atom guard covering them"))

    def check_blocks(self, f, path="", under_exists=False):
        """One-dimensionality: each maximal quantifier block leaves <= 1 free var."""
        if isinstance(f, (Exists, UnivNeg)) and not under_exists:
            block_fv = free_vars(f)
            if len(block_fv) > 1:
                self.onedim.append(Violation(
                    path, "one_dimensional",
                    f"maximal quantifier block leaves {len(block_fv)} variables free "
                    f"({', '.join(sorted(block_fv))})"))
        inside = isinstance(f, (Exists, UnivNeg))
        for i, c in enumerate(f.children()):
            self.check_blocks(c, path + f".{i}" if path else str(i),
                              under_exists=inside and isinstance(c, Exists))


def _conjunction_atoms(f):
    """Positive atoms occurring as conjuncts of the And-group rooted at `f`."""
    out = []
    stack = [f]
    while stack:
        g = stack.pop()
        if isinstance(g, And):
            stack.extend((g.left, g.right))
        elif isinstance(g, (Atom, Equality)):
            out.append(g)
    return tuple(out)


def _covers(guard, fv):
    return fv <= free_vars(guard)


def _base_guard(guard, sig):
    return isinstance(guard, Atom) and sig.is_base(guard.symbol)
