"""Command-line front end.

Exit codes: 0/1 carry the semantic verdict of the command, 2 is a usage
error, 3 an input format error, 4 an exhausted search or element budget.
Reports are line oriented `key: value` text on stdout.
"""

from __future__ import annotations

import argparse
import random
import sys

from . import construct2v as c2v
from . import constructnd as cnd
from .fragments import validate_fragment
from .modelfinder import BudgetExhausted, SearchBudget, count_models, find_model
from .normalform import (FragmentRejected, NormalFormError, reduce_to_transitive,
                         to_normal_form)
from .semantics import check_model, check_model_lemma3
from .structures import (StructureError, dump_structure, load_structure,
                         realized_generalized_types)
from .syntax import FormulaError, Signature, parse_formula

EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_BUDGET = 4


class InputError(Exception):
    pass


def _read(path):
    if path == "-":
        return sys.stdin.read()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return fh.read()
    except OSError as e:
        raise InputError(f"cannot read {path}: {e}") from None


def _write(path, text):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _load_sig(args):
    return Signature.parse(_read(args.sig))


def _load_formula(args, sig):
    return parse_formula(_read(args.formula), sig)


def _load_nf(args, sig):
    return to_normal_form(_load_formula(args, sig), sig)


def _emit(key, value):
    print(f"{key}: {value}")


def _dump_pmap(pmap, path):
    lines = []
    for e in sorted(pmap):
        v = pmap[e]
        if isinstance(v, cnd.TreeNode):
            lines.append(f"{e} -> {v.pretty()}")
        else:
            lines.append(f"{e} -> {v}")
    _write(path, "\n".join(lines) + "\n")


def _dot_component_graph(graph):
    lines = ["digraph components {"]
    names = {}
    for i, index in enumerate(sorted(graph, key=lambda x: x.sort_key())):
        names[index] = f"c{i}"
        lines.append(f'  c{i} [label="{_index_label(index)}"];')
    for index, targets in graph.items():
        for tgt in targets:
            lines.append(f"  {names[index]} -> {names[tgt]};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def _index_label(index):
    if hasattr(index, "gtype"):
        return f"g{index.color} i{index.i} j{index.j}"
    return f"gamma{index.gamma} g{index.color} i{index.i}"


# ---------------------------------------------------------------------------
# Commands


def cmd_validate(args):
    sig = _load_sig(args)
    f = _load_formula(args, sig)
    report = validate_fragment(f, sig)
    _emit("is-unfo", str(report.is_unfo).lower())
    _emit("is-gnfo1", str(report.is_gnfo1).lower())
    _emit("is-bgnfo1-eq", str(report.is_bgnfo1_eq).lower())
    for v in report.violations:
        _emit("violation", f"{v.path or '<root>'} [{v.fragment}] {v.reason}")
    return 0 if (report.is_unfo or report.is_bgnfo1_eq) else 1


def cmd_normalize(args):
    sig = _load_sig(args)
    nf, ext = _load_nf(args, sig)
    _emit("t", nf.t)
    _emit("m", nf.m)
    fresh = [name for name, _ in ext.base if not sig.has(name)]
    _emit("fresh-symbols", " ".join(fresh) if fresh else "-")
    _emit("formula", nf.pretty())
    if args.out:
        _write(args.out, nf.pretty() + "\n")
    if args.out_sig:
        _write(args.out_sig, ext.dump())
    return 0


def cmd_reduce(args):
    sig = _load_sig(args)
    nf, ext = _load_nf(args, sig)
    red = reduce_to_transitive(nf)
    _emit("t", red.t)
    _emit("m", red.m)
    _emit("formula", red.pretty())
    if args.out:
        _write(args.out, red.pretty() + "\n")
    return 0


def cmd_check(args):
    sig = _load_sig(args)
    nf, ext = _load_nf(args, sig)
    s = load_structure(_read(args.structure), ext, close=not args.no_close)
    verdict = check_model(s, nf)
    _emit("verdict", "model" if verdict else "not-a-model")
    return 0 if verdict else 1


def cmd_solve(args):
    sig = _load_sig(args)
    nf, ext = _load_nf(args, sig)
    budget = SearchBudget(max_size=args.max_size, node_limit=args.node_limit,
                          canonical_only=args.canonical,
                          transitive_dist=args.transitive)
    if args.count is not None:
        n = count_models(nf, args.count, transitive_dist=args.transitive,
                         canonical_only=args.canonical,
                         node_limit=args.node_limit)
        _emit("count", n)
        return 0 if n else 1
    model = find_model(nf, budget)
    if model is None:
        _emit("verdict", "no-model-up-to-bound")
        return 1
    _emit("verdict", "model-found")
    _emit("size", model.n)
    text = dump_structure(model)
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_construct2v(args):
    sig = _load_sig(args)
    nf, ext = _load_nf(args, sig)
    pattern = load_structure(_read(args.structure), ext, close=not args.no_close)
    if not check_model(pattern, nf):
        _emit("verdict", "pattern-not-a-model")
        return 1
    res = c2v.build_b0(pattern, args.anchor, ext.eqs, nf,
                       max_elements=args.max_elements)
    _emit("size", res.structure.n)
    K = len(realized_generalized_types(pattern))
    _emit("size-bound", c2v.size_bound_T(ext.k + 1, K, nf.m))
    report = c2v.verify_b_conditions(res.structure, res.pmap, pattern,
                                     args.anchor, ext.eqs, nf)
    for line in report.format_lines():
        print(line)
    is_model = check_model(res.structure, nf)
    _emit("model", str(is_model).lower())
    if args.out:
        _write(args.out, dump_structure(res.structure))
    if args.pmap:
        _dump_pmap(res.pmap, args.pmap)
    if args.report:
        _write(args.report, "\n".join(report.format_lines()) + "\n")
    if args.dot and res.assembly:
        _write(args.dot, _dot_component_graph(res.assembly.graph))
    return 0 if (report.ok and is_model) else 1


def cmd_constructnd(args):
    sig = _load_sig(args)
    nf, ext = _load_nf(args, sig)
    base = load_structure(_read(args.structure), ext, close=not args.no_close)
    try:
        r = cnd.regularize(base, nf)
    except c2v.ConstructionError:
        _emit("verdict", "pattern-not-a-model")
        return 1
    a0 = cnd.TreeNode(args.anchor, ())
    res = cnd.build_a0prime(r, a0, ext.eqs, max_elements=args.max_elements)
    _emit("size", res.structure.n)
    _emit("size-within-bound", str(cnd.size_bound_M_covers(
        ext.k + 1, max(len(nf.pretty()), 1), base.n, res.structure.n)).lower())
    report = cnd.verify_d_conditions(res.structure, res.origin, res.pmap, r,
                                     a0, ext.eqs, nf)
    for line in report.format_lines():
        print(line)
    is_model = check_model(res.structure.drop_symbols(r.w_syms), nf)
    _emit("model", str(is_model).lower())
    if args.out:
        _write(args.out, dump_structure(res.structure))
    if args.pmap:
        _dump_pmap(res.pmap, args.pmap)
    if args.dot and res.assembly:
        _write(args.dot, _dot_component_graph(res.assembly.graph))
    return 0 if (report.ok and is_model) else 1


def cmd_unravel(args):
    sig = _load_sig(args)
    nf, ext = _load_nf(args, sig)
    base = load_structure(_read(args.structure), ext, close=not args.no_close)
    r = cnd.regularize(base, nf)
    u = cnd.unravel_truncated(r, args.depth, root=args.root)
    _emit("size", u.structure.n)
    _emit("levels", " ".join(str(len(l)) for l in u.levels))
    text = dump_structure(u.structure)
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)
    if args.map:
        _dump_pmap(u.to_base, args.map)
    return 0


def cmd_verify(args):
    sig = _load_sig(args)
    nf, ext = _load_nf(args, sig)
    cand = load_structure(_read(args.candidate), ext, close=not args.no_close)
    pattern = load_structure(_read(args.pattern), ext, close=not args.no_close)
    report = check_model_lemma3(cand, pattern, nf)
    for line in report.format_lines():
        print(line)
    return 0 if report.ok else 1


def cmd_bounds(args):
    if args.T is not None:
        if args.K is None or args.m is None:
            raise InputError("--T needs --K and --m")
        _emit(f"T_{args.T}", c2v.size_bound_T(args.T, args.K, args.m))
        return 0
    if args.M is not None:
        if args.n is None or args.gamma is None:
            raise InputError("--M needs --n and --gamma")
        _emit(f"M_{args.M}", cnd.size_bound_M(args.M, args.n, args.gamma))
        _emit("M-cap", cnd.size_bound_M_cap(args.n, args.gamma))
        return 0
    raise InputError("bounds needs --T or --M")


def cmd_fuzz(args):
    """Auxiliary: random normal-form sentences, solved and (when a model is
    found) rebuilt through the two-variable construction."""
    from .testgen import random_nf_corpus
    sig = _load_sig(args) if args.sig else Signature.parse(
        "base P 1\nbase R 2\neq E1\n")
    rng = random.Random(args.seed)
    built = 0
    for nf, pattern in random_nf_corpus(sig, rng, count=args.count,
                                        max_size=args.max_size):
        res = c2v.build_b0(pattern, 0, sig.eqs, nf)
        ok = check_model(res.structure, nf)
        rep = c2v.verify_b_conditions(res.structure, res.pmap, pattern, 0,
                                      sig.eqs, nf)
        built += 1
        _emit("case", f"{built} size={res.structure.n} model={str(ok).lower()} "
                      f"conditions={'pass' if rep.ok else 'fail'}")
        if not (ok and rep.ok):
            return 1
    _emit("cases", built)
    return 0


# ---------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="unfoeq", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, structure=False):
        sp.add_argument("--sig", required=True, help="signature header file")
        sp.add_argument("--formula", required=True, help="formula file ('-' for stdin)")
        if structure:
            sp.add_argument("--structure", required=True, help="structure file")
            sp.add_argument("--no-close", action="store_true",
                            help="do not close distinguished relations on load")

    sp = sub.add_parser("validate", help="fragment membership report")
    common(sp)
    sp.set_defaults(fn=cmd_validate)

    sp = sub.add_parser("normalize", help="normal form with fresh unary symbols")
    common(sp)
    sp.add_argument("--out")
    sp.add_argument("--out-sig")
    sp.set_defaults(fn=cmd_normalize)

    sp = sub.add_parser("reduce", help="equivalence-to-transitive rewriting")
    common(sp)
    sp.add_argument("--out")
    sp.set_defaults(fn=cmd_reduce)

    sp = sub.add_parser("check", help="is the structure a model?")
    common(sp, structure=True)
    sp.set_defaults(fn=cmd_check)

    sp = sub.add_parser("solve", help="bounded exhaustive model search")
    common(sp)
    sp.add_argument("--max-size", type=int, default=3)
    sp.add_argument("--node-limit", type=int)
    sp.add_argument("--canonical", action="store_true")
    sp.add_argument("--transitive", action="store_true",
                    help="distinguished symbols as transitive relations")
    sp.add_argument("--count", type=int, metavar="SIZE",
                    help="count models of exactly SIZE instead of searching")
    sp.add_argument("--out")
    sp.set_defaults(fn=cmd_solve)

    sp = sub.add_parser("construct2v", help="two-variable finite-model construction")
    common(sp, structure=True)
    sp.add_argument("--anchor", type=int, default=0)
    sp.add_argument("--max-elements", type=int, default=200_000)
    sp.add_argument("--out")
    sp.add_argument("--pmap")
    sp.add_argument("--report")
    sp.add_argument("--dot")
    sp.set_defaults(fn=cmd_construct2v)

    sp = sub.add_parser("constructnd", help="general finite-model construction")
    common(sp, structure=True)
    sp.add_argument("--anchor", type=int, default=0)
    sp.add_argument("--max-elements", type=int, default=200_000)
    sp.add_argument("--out")
    sp.add_argument("--pmap")
    sp.add_argument("--dot")
    sp.set_defaults(fn=cmd_constructnd)

    sp = sub.add_parser("unravel", help="truncated tree-like unraveling")
    common(sp, structure=True)
    sp.add_argument("--depth", type=int, required=True)
    sp.add_argument("--root", type=int, default=0)
    sp.add_argument("--out")
    sp.add_argument("--map")
    sp.set_defaults(fn=cmd_unravel)

    sp = sub.add_parser("verify", help="homomorphism modelhood criterion")
    sp.add_argument("--sig", required=True)
    sp.add_argument("--formula", required=True)
    sp.add_argument("--candidate", required=True)
    sp.add_argument("--pattern", required=True)
    sp.add_argument("--no-close", action="store_true")
    sp.set_defaults(fn=cmd_verify)

    sp = sub.add_parser("bounds", help="size-bound recurrences")
    sp.add_argument("--T", type=int, metavar="L")
    sp.add_argument("--K", type=int)
    sp.add_argument("--m", type=int)
    sp.add_argument("--M", type=int, metavar="L")
    sp.add_argument("--n", type=int)
    sp.add_argument("--gamma", type=int)
    sp.set_defaults(fn=cmd_bounds)

    sp = sub.add_parser("fuzz", help="random construction round trips (auxiliary)")
    sp.add_argument("--sig")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--count", type=int, default=5)
    sp.add_argument("--max-size", type=int, default=3)
    sp.set_defaults(fn=cmd_fuzz)

    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (InputError, FormulaError, StructureError, NormalFormError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except (BudgetExhausted, c2v.ConstructionBudget) as e:
        print(f"budget: {e}", file=sys.stderr)
        return EXIT_BUDGET


if __name__ == "__main__":
    sys.exit(main())
