"""Workbench for the unary negation fragment with equivalence relations:
parsing and fragment validation, normalization, bounded model search, and
the finite-model constructions with their runnable condition suites."""

from .fragments import FragmentReport, validate_fragment
from .modelfinder import (BudgetExhausted, SearchBudget, count_models,
                          enumerate_models, find_model, is_satisfiable_upto)
from .normalform import (FragmentRejected, NormalFormConjunct, NormalFormFormula,
                         reduce_to_transitive, symmetrize_model, to_normal_form)
from .semantics import (HomConstraint, WitnessStructure, check_model,
                        check_model_lemma3, evaluate, find_homomorphism,
                        find_witnesses, phi_witness_structure)
from .structures import (AtomicType, EquivalenceViolation, FiniteStructure,
                         GeneralizedType, StructureBuilder, atomic_type,
                         atomic_type2, close_equivalences, dump_structure,
                         eq_class, generalized_type, is_safe_reduction,
                         load_structure, restrict, validate_equivalences)
from .syntax import Formula, ParseError, Signature, parse_formula, pretty

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
