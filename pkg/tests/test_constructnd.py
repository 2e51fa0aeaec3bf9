import itertools

import pytest

from unfoeq.construct2v import ConstructionError
from unfoeq.constructnd import (RegularTreeModel, TreeNode, build_a0prime,
                                materialize_pattern_region, regularize,
                                separation_check, size_bound_M,
                                size_bound_M_cap, size_bound_M_covers,
                                unravel_truncated, verify_d_conditions, _Ctx)
from unfoeq.modelfinder import SearchBudget, find_model
from unfoeq.normalform import to_normal_form
from unfoeq.semantics import HomConstraint, check_model, evaluate, is_homomorphism
from unfoeq.structures import FiniteStructure, load_structure
from unfoeq.syntax import Signature, parse_formula

SIG = Signature.parse("base P 1\nbase R 2\neq E1\n")
SIG2 = Signature.parse("base P 1\nbase R 2\neq E1\neq E2\n")


def nf_of(text, sig=SIG):
    nf, _ = to_normal_form(parse_formula(text, sig), sig)
    return nf


CROSS = nf_of("(forall x1 x2 . ~(R(x1,x2) & E1(x1,x2) & ~P(x1))) & "
              "(forall x . ~(~(exists y1 . R(x,y1) & ~P(y1))))")


@pytest.fixture(scope="module")
def cross_tree():
    base = find_model(CROSS, SearchBudget(max_size=3))
    return regularize(base, CROSS)


# -- regularization ---------------------------------------------------------------

def test_regularize_singleton():
    nf = nf_of("(forall x1 x2 . ~(R(x1,x2) & ~E1(x1,x2))) & "
               "(forall x . ~(~(exists y1 . E1(x,y1))))")
    base = find_model(nf, SearchBudget(max_size=2))
    assert base.n == 1
    r = regularize(base, nf)
    assert r.members == ((0,),)
    assert r.expanded.holds("_W1", (0, 0))


def test_regularize_rejects_nonmodels():
    base = load_structure("domain 1\nrel P:\nrel R:\nrel E1:\n", SIG)
    with pytest.raises(ConstructionError):
        regularize(base, CROSS)


def test_regularize_deterministic(cross_tree):
    r2 = regularize(cross_tree.base, CROSS)
    assert r2.members == cross_tree.members
    assert r2.expanded == cross_tree.expanded


def test_full_domain_witness_structures():
    nf = nf_of("(forall x1 x2 . ~(R(x1,x2) & R(x2,x1) & ~E1(x1,x2))) & "
               "(forall x . ~(~(exists y1 . R(x,y1) & ~E1(x,y1))))")
    base = find_model(nf, SearchBudget(max_size=3))
    r = regularize(base, nf)
    assert all(len(ms) >= 2 for ms in r.members)
    # the numbering is the sorted member order, consistently across elements
    for b, ms in enumerate(r.members):
        assert list(ms) == sorted(ms)
        for i, w in enumerate(ms, start=1):
            assert r.expanded.holds(f"_W{i}", (b, w))


# -- truncated unraveling -----------------------------------------------------------

def test_unravel_depth_zero(cross_tree):
    u = unravel_truncated(cross_tree, 0, root=0)
    assert u.structure.n == 1
    assert u.to_base == {0: 0}


def test_unravel_self_witness_singleton():
    nf = nf_of("(forall x1 x2 . ~(R(x1,x2) & ~E1(x1,x2))) & "
               "(forall x . ~(~(exists y1 . E1(x,y1))))")
    base = find_model(nf, SearchBudget(max_size=2))
    r = regularize(base, nf)
    u = unravel_truncated(r, 1)
    assert u.structure.n == 1  # the chosen witness is the element itself


def test_unravel_treelike_properties(cross_tree):
    r = cross_tree
    for depth in (1, 2, 3):
        u = unravel_truncated(r, depth)
        n = u.structure.n
        # (i) levels partition the domain
        assert sorted(e for lvl in u.levels for e in lvl) == list(range(n))
        level_of = {e: i for i, lvl in enumerate(u.levels) for e in lvl}
        # (ii) witness structures complete in the next level
        for i, lvl in enumerate(u.levels[:-1]):
            for e in lvl:
                scope = {e, *u.children[e]}
                for j in range(1, r.nf.m + 1):
                    conj = r.nf.conjuncts[j - 1]
                    assert any(
                        evaluate(u.structure, conj.matrix, {conj.head: e,
                                                            conj.witnesses[0]: w})
                        for w in scope)
        # (iii) same-level witness structures are disjoint
        for lvl in u.levels[:-1]:
            for e1, e2 in itertools.combinations(lvl, 2):
                assert not ({e1, *u.children[e1]} & {e2, *u.children[e2]})
        # (iv) base relations only inside witness structures
        parent = {c: e for e, kids in u.children.items() for c in kids}
        for name, arity in r.base.sig.base:
            if arity < 2:
                continue
            for tup in u.structure.base_rel(name):
                distinct = set(tup)
                if len(distinct) >= 2:
                    owners = {x for x in distinct
                              if distinct <= {x, *u.children.get(x, ())}}
                    assert owners, (name, tup)
        # (v) equivalences arise from closing the within-witness-structure atoms
        for name in r.base.sig.eqs:
            pairs = set()
            for e, kids in u.children.items():
                scope = [e, *kids]
                for a, b in itertools.combinations(scope, 2):
                    if r.base.eq_related(name, u.to_base[a], u.to_base[b]):
                        pairs.add((a, b))
            rebuilt = FiniteStructure.pre_closure(
                u.structure.sig, n, {}, {name: pairs})
            from unfoeq.structures import close_equivalences
            assert close_equivalences(rebuilt).eq_classes(name) == \
                u.structure.eq_classes(name)
        # the map back is a 1-type-preserving homomorphism
        h = dict(u.to_base)
        assert is_homomorphism(u.structure, r.base, h,
                               HomConstraint(preserve_1types=True))


# -- the pattern-side machinery -------------------------------------------------------

def test_node_eq_relations(cross_tree):
    r = cross_tree
    ctx = _Ctx(r, TreeNode(0, ()))
    root = TreeNode(0, ())
    for w in r.members[0]:
        node = ctx.member_node(root, w)
        rel = ctx.node_eq_related(root, node, "E1") if node != root else True
        same_class = r.conn_class(0, "E1")[w] == r.conn_class(0, "E1")[0]
        if node != root:
            assert rel == same_class


def test_region_is_exact(cross_tree):
    r = cross_tree
    ctx = _Ctx(r, TreeNode(0, ()))
    root = TreeNode(0, ())
    nodes = {root}
    for w in r.members[0]:
        nodes.add(ctx.member_node(root, w))
    region, node_list = materialize_pattern_region(ctx, nodes)
    # 1-types match the base anchors
    for i, v in enumerate(node_list):
        assert region.one_type_bits(i) == ctx.node_one_bits(v)


# -- the construction ------------------------------------------------------------------

def test_base_case_singleton(cross_tree):
    res = build_a0prime(cross_tree, TreeNode(0, ()), ())
    assert res.structure.n == 1
    assert res.pmap == {0: TreeNode(0, ())}
    rep = verify_d_conditions(res.structure, res.origin, res.pmap, cross_tree,
                              TreeNode(0, ()), (), CROSS)
    assert rep.ok, rep.failed()


def test_full_run_small(cross_tree):
    res = build_a0prime(cross_tree, TreeNode(0, ()), SIG.eqs)
    stripped = res.structure.drop_symbols(cross_tree.w_syms)
    assert check_model(stripped, CROSS)
    rep = verify_d_conditions(res.structure, res.origin, res.pmap, cross_tree,
                              TreeNode(0, ()), SIG.eqs, CROSS)
    assert rep.ok, rep.failed()
    assert size_bound_M_covers(SIG.k + 1, max(len(CROSS.pretty()), 1),
                               cross_tree.base.n, res.structure.n)


def test_determinism(cross_tree):
    r1 = build_a0prime(cross_tree, TreeNode(0, ()), SIG.eqs)
    r2 = build_a0prime(cross_tree, TreeNode(0, ()), SIG.eqs)
    assert r1.structure == r2.structure and r1.pmap == r2.pmap


def test_reclosing_is_fixed_point(cross_tree):
    from unfoeq.structures import close_equivalences
    res = build_a0prime(cross_tree, TreeNode(0, ()), SIG.eqs)
    assert close_equivalences(res.structure) == res.structure
    pre = res.assembly.pre_closure
    assert pre.is_pre_closure
    assert close_equivalences(pre).eq_classes("E1") == \
        res.structure.eq_classes("E1")


def test_identified_pairs_share_types(cross_tree):
    res = build_a0prime(cross_tree, TreeNode(0, ()), SIG.eqs)
    asm = res.assembly
    for index, iface_elem, root_global in asm.identifications:
        bp = asm.blueprints[index.gamma]
        assert bp.pmap[iface_elem].anchor == res.pmap[root_global].anchor
        assert bp.structure.one_type_bits(iface_elem) == \
            res.structure.one_type_bits(root_global)


def test_interface_layers_and_origin(cross_tree):
    res = build_a0prime(cross_tree, TreeNode(0, ()), SIG.eqs)
    assert res.pmap[res.origin] == TreeNode(0, ())
    for rec in res.records:
        pc = rec.component
        l = len(rec.eqs0)
        assert len(pc.layers) == l * (2 * CROSS.t + 1) + 1
    # the origin's component root is never identified into
    start_roots = {root for _, _, root in res.assembly.identifications}
    assert res.origin not in start_roots


def test_separation(cross_tree):
    res = build_a0prime(cross_tree, TreeNode(0, ()), SIG.eqs)
    for rec in res.records:
        pc = rec.component
        assert separation_check(pc, CROSS.t, len(rec.eqs0))


def test_separation_fails_on_truncated_component(cross_tree):
    res = build_a0prime(cross_tree, TreeNode(0, ()), SIG.eqs)
    big = max((rec.component for rec in res.records),
              key=lambda pc: pc.structure.n)
    if big.structure.n < 3:
        pytest.skip("all components degenerate for this pattern")
    l = len(big.live)
    # keep l inner layers plus a pseudo-interface: the first-l and last-l
    # regions then coincide, so any inhabited layer violates separation
    cut = l + 1
    kept_layers = big.layers[:cut]
    kept = sorted({e for layer in kept_layers for e in layer})
    from unfoeq.structures import restrict_with_map
    sub, elems = restrict_with_map(big.structure, kept)
    order = {e: i for i, e in enumerate(elems)}
    from unfoeq.constructnd import NDComponent
    trunc = NDComponent(big.gamma, order[big.root],
                        tuple(tuple(order[e] for e in layer)
                              for layer in kept_layers),
                        tuple(tuple(order[e] for e in layer)
                              for layer in big.inits[:cut]),
                        (), sub, {order[e]: big.pmap[e] for e in kept},
                        big.live, big.t)
    assert not separation_check(trunc, CROSS.t, l)


def test_d3_fault_injection(cross_tree):
    res = build_a0prime(cross_tree, TreeNode(0, ()), SIG.eqs)
    s = res.structure
    wsym = next(w for w in cross_tree.w_syms
                if any(a != b for a, b in s.base_rel(w)))
    victim = next((a, b) for a, b in sorted(s.base_rel(wsym)) if a != b)
    base = {name: set(s.base_rel(name)) for name, _ in s.sig.base}
    base[wsym] = base[wsym] - {victim}
    classes = {name: s.eq_classes(name) for name in s.sig.eqs}
    mutated = FiniteStructure(s.sig, s.n, {k: frozenset(v) for k, v in base.items()},
                              eq_classes=classes)
    rep = verify_d_conditions(mutated, res.origin, res.pmap, cross_tree,
                              TreeNode(0, ()), SIG.eqs, CROSS)
    assert not rep.entry("d3").passed
    assert str(victim[0]) in rep.entry("d3").detail


def test_two_equivalences(cross_tree):
    nf = nf_of("(forall x1 x2 . ~(R(x1,x2) & E1(x1,x2))) & "
               "(forall x . ~(~(exists y1 . R(x,y1))))", SIG2)
    base = find_model(nf, SearchBudget(max_size=3))
    r = regularize(base, nf)
    res = build_a0prime(r, TreeNode(0, ()), SIG2.eqs)
    assert check_model(res.structure.drop_symbols(r.w_syms), nf)
    rep = verify_d_conditions(res.structure, res.origin, res.pmap, r,
                              TreeNode(0, ()), SIG2.eqs, nf)
    assert rep.ok, rep.failed()


# -- bounds ------------------------------------------------------------------------

def test_m_base_case():
    assert size_bound_M(0, 1, 1) == 1
    assert size_bound_M(0, 5, 9) == 1


def test_m_first_step_by_hand():
    assert size_bound_M(1, 1, 1) == 3
    # M_1 = M_0^(8n^2) n^(8n^2) (g*2*M_0^(8n^2)*g + 1) at n=1: 1 * 1 * (2g^2+1)
    assert size_bound_M(1, 1, 2) == 9
    # n = 2: 2^32 * (2g^2 + 1)
    assert size_bound_M(1, 2, 1) == 2 ** 32 * 3


def test_m_second_step_by_hand():
    m1 = 3
    expected = m1 ** 8 * 1 * (2 * m1 ** 8 + 1)
    assert size_bound_M(2, 1, 1) == expected


def test_m_within_cap():
    for k in (0, 1, 2):
        for n in (1, 2):
            for g in (1, 2):
                assert size_bound_M(k + 1, n, g) <= size_bound_M_cap(n, g)


def test_m_covers_saturates():
    assert size_bound_M_covers(3, 120, 4, 10 ** 6)
    assert not size_bound_M_covers(0, 120, 4, 2)
