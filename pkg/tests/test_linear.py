"""Exact-rational constraint reasoning.

Entailment and inductivity answers are cross-checked against exhaustive
enumeration of small integer configurations (a box of counts), which is an
independent oracle for the Fourier-Motzkin path.  Fixed expected sets such
as the majority root abstractions were derived by hand from the transition
displacements and verified against that enumeration.
"""

from __future__ import annotations

import random
from fractions import Fraction
from itertools import product

import pytest

from stagecraft.errors import FormatError
from stagecraft.linear import (
    ConstraintSet,
    LinearConstraint,
    Semiflow,
    dead_in,
    enabled_constraints,
    find_member,
    in_span,
    inductive_under,
    initial_branches,
    iter_members,
    root_abstraction,
    semiflow_basis,
)
from stagecraft.model import Configuration, Predicate, Protocol, Transition

STATES = ("Y", "N", "y", "n")

TOTAL = LinearConstraint({q: 1 for q in STATES}, ">=", 1)
MARGIN_NEG = LinearConstraint({"Y": 1, "N": -1}, "<=", -1)
MARGIN_NONNEG = LinearConstraint({"Y": 1, "N": -1}, ">=", 0)
ACTIVE_YES = LinearConstraint({"Y": 1, "y": 1}, ">=", 1)
TRAP_YN = LinearConstraint({"Y": 1, "n": 1}, ">=", 1)


def config(**counts: int) -> Configuration:
    return Configuration(counts)


def cs(*constraints: LinearConstraint) -> ConstraintSet:
    return ConstraintSet(STATES, constraints)


def box(limit: int = 4):
    for vector in product(range(limit + 1), repeat=len(STATES)):
        yield Configuration(dict(zip(STATES, vector)))


def frac_value(c: LinearConstraint, point: dict[str, Fraction]) -> Fraction:
    return sum(Fraction(v) * point.get(q, Fraction(0)) for q, v in c.coeffs.items())


def frac_holds(c: LinearConstraint, point: dict[str, Fraction]) -> bool:
    v = frac_value(c, point)
    if c.op == "<=":
        return v <= c.const
    if c.op == ">=":
        return v >= c.const
    return v == c.const


def equivalent(a: ConstraintSet, b: ConstraintSet) -> bool:
    return a.entails(b).proved and b.entails(a).proved


# -- LinearConstraint --------------------------------------------------------


def test_constraint_evaluation_and_ops():
    c = LinearConstraint({"Y": 2, "N": -1}, "<=", 3)
    assert c.value_at(config(Y=2, N=1)) == 3
    assert c.holds_at(config(Y=2, N=1))
    assert not c.holds_at(config(Y=2))
    eq = LinearConstraint({"Y": 1}, "=", 2)
    assert eq.holds_at(config(Y=2, N=5))
    assert not eq.holds_at(config(Y=3))


def test_constraint_drops_zero_coefficients():
    c = LinearConstraint({"Y": 1, "N": 0}, ">=", 1)
    assert c.coeffs == {"Y": 1}
    assert repr(c) == "C(Y) >= 1"


def test_constraint_rejects_unknown_op():
    with pytest.raises(FormatError) as err:
        LinearConstraint({"Y": 1}, "<", 1)
    assert err.value.code == "bad_constraint_op"


def test_shifted_matches_evaluation_after_displacement():
    rng = random.Random(4)
    for _ in range(200):
        coeffs = {q: rng.randrange(-3, 4) for q in STATES}
        c = LinearConstraint(coeffs, rng.choice(("<=", ">=", "=")), rng.randrange(-4, 5))
        base = {q: rng.randrange(0, 5) for q in STATES}
        delta = {q: rng.randrange(-2, 3) for q in STATES}
        shifted_counts = {q: base[q] + delta[q] for q in STATES}
        if any(v < 0 for v in shifted_counts.values()):
            continue
        assert c.shifted(delta).holds_at(Configuration(base)) == c.holds_at(Configuration(shifted_counts))


def test_constraint_json_round_trip():
    c = LinearConstraint({"n": 1, "Y": -2}, ">=", -1)
    assert LinearConstraint.from_json(c.to_json()) == c
    assert c.to_json() == {"coeffs": {"Y": -2, "n": 1}, "op": ">=", "const": -1}


def test_constraint_repr():
    assert repr(MARGIN_NEG) == "C(Y) - C(N) <= -1"
    assert repr(LinearConstraint({}, "<=", -1)) == "0 <= -1"
    assert repr(LinearConstraint({"Y": -3}, "=", 0)) == "-3·C(Y) = 0"


# -- Feasibility -------------------------------------------------------------


def test_feasible_returns_checkable_witness():
    s = cs(LinearConstraint({"Y": 1}, ">=", 2), LinearConstraint({"N": 1}, "<=", 0))
    out = s.feasible()
    assert out.proved
    assert out.witness is not None
    for c in s.constraints:
        assert frac_holds(c, out.witness)
    assert all(out.witness.get(q, Fraction(0)) >= 0 for q in STATES)


def test_infeasible_set_has_no_small_members():
    s = cs(LinearConstraint({"Y": 1}, ">=", 1), LinearConstraint({"Y": 1}, "<=", 0))
    assert not s.feasible().proved
    assert not any(s.satisfies(c) for c in box())


def test_contradictory_constant_constraint():
    assert not cs(LinearConstraint({}, "<=", -1)).feasible().proved
    assert cs(LinearConstraint({}, "<=", 0)).feasible().proved


# -- Entailment --------------------------------------------------------------


def test_entails_relaxation():
    tight = cs(MARGIN_NEG)
    loose = cs(LinearConstraint({"Y": 1, "N": -1}, "<=", 0))
    assert tight.entails(loose).proved
    out = loose.entails(tight)
    assert not out.proved
    assert out.witness is not None
    # The witness satisfies the premise but breaks the obligation.
    assert frac_holds(loose.constraints[0], out.witness)
    assert not frac_holds(MARGIN_NEG, out.witness)


def test_entails_uses_integer_tightening():
    # Rationally Y may be 1/2, but every integer point with 2Y <= 1 has Y = 0.
    s = cs(LinearConstraint({"Y": 2}, "<=", 1))
    assert s.entails([LinearConstraint({"Y": 1}, "<=", 0)]).proved


def test_entails_equality_obligation_splits():
    ranged = cs(LinearConstraint({"Y": 1}, ">=", 1), LinearConstraint({"Y": 1}, "<=", 3))
    assert not ranged.entails([LinearConstraint({"Y": 1}, "=", 2)]).proved
    pinned = cs(LinearConstraint({"Y": 1}, "=", 2))
    assert pinned.entails([LinearConstraint({"Y": 1}, "=", 2)]).proved


def test_entails_implicit_nonnegativity():
    assert cs().entails([LinearConstraint({"Y": 1}, ">=", 0)]).proved
    assert cs(MARGIN_NEG).entails([LinearConstraint({"N": 1}, ">=", 1)]).proved


def test_entailment_soundness_fuzz():
    rng = random.Random(20240401)
    ops = ("<=", ">=", "=")
    checked = 0
    for _ in range(300):
        def draw():
            n = rng.randrange(1, 4)
            out = []
            for _ in range(n):
                coeffs = {q: rng.randrange(-2, 3) for q in rng.sample(STATES, rng.randrange(1, 4))}
                out.append(LinearConstraint(coeffs, rng.choice(ops), rng.randrange(-3, 6)))
            return cs(*out)

        premise, obligation = draw(), draw()
        if premise.entails(obligation).proved:
            checked += 1
            for c in box():
                if premise.satisfies(c):
                    assert obligation.satisfies(c), (premise, obligation, c)
    assert checked >= 20  # the fuzz must actually exercise proved entailments


# -- Transition-level reasoning ----------------------------------------------


def test_enabled_constraints():
    distinct = Transition("a", ("Y", "N"), ("y", "n"))
    assert enabled_constraints(distinct) == [
        LinearConstraint({"N": 1}, ">=", 1),
        LinearConstraint({"Y": 1}, ">=", 1),
    ]
    same = Transition("t", ("y", "y"), ("n", "n"))
    assert enabled_constraints(same) == [LinearConstraint({"y": 1}, ">=", 2)]


def test_dead_in(majority):
    frozen_yes = cs(TOTAL, MARGIN_NEG, LinearConstraint({"Y": 1}, "=", 0))
    assert dead_in(frozen_yes, majority.transition("a"))
    assert dead_in(frozen_yes, majority.transition("b"))
    assert not dead_in(frozen_yes, majority.transition("c"))
    assert not dead_in(frozen_yes, majority.transition("d"))
    assert not dead_in(cs(TOTAL, MARGIN_NEG), majority.transition("a"))


def test_dead_in_same_state_pair():
    t = Transition("t", ("y", "y"), ("n", "n"))
    assert dead_in(cs(LinearConstraint({"y": 1}, "<=", 1)), t)
    assert not dead_in(cs(LinearConstraint({"y": 1}, "<=", 2)), t)


def test_inductive_under_majority_root(majority):
    root = cs(TOTAL, MARGIN_NEG)
    for t in majority.transitions:
        assert inductive_under(root, t).proved, t.name


def test_inductive_under_failure_carries_witness(majority):
    s = cs(LinearConstraint({"Y": 1}, ">=", 1))
    out = inductive_under(s, majority.transition("a"))
    assert not out.proved
    assert out.witness is not None
    assert out.witness.get("Y", Fraction(0)) >= 1
    assert out.witness.get("N", Fraction(0)) >= 1


def test_inductive_under_uses_context(majority):
    # C(Y)+C(y) >= 1 alone is not preserved by c, but it is once the set
    # also pins the majority margin: c needs an N agent, hence a Y agent.
    alone = cs(ACTIVE_YES)
    assert not inductive_under(alone, majority.transition("c")).proved
    with_margin = cs(MARGIN_NONNEG, ACTIVE_YES)
    assert inductive_under(with_margin, majority.transition("c")).proved


def test_inductivity_soundness_fuzz(majority):
    rng = random.Random(77)
    proved_count = 0
    for _ in range(300):
        constraints = []
        for _ in range(rng.randrange(1, 3)):
            coeffs = {q: rng.randrange(-1, 2) for q in rng.sample(STATES, rng.randrange(1, 4))}
            constraints.append(LinearConstraint(coeffs, rng.choice(("<=", ">=")), rng.randrange(-2, 4)))
        s = cs(*constraints)
        t = majority.transitions[rng.randrange(4)]
        if inductive_under(s, t).proved:
            proved_count += 1
            for c in box():
                if s.satisfies(c) and majority.enabled(c, t):
                    assert s.satisfies(c.shift(t.displacement)), (s, t.name, c)
    assert proved_count >= 20


# -- Member enumeration ------------------------------------------------------


def test_iter_members_order():
    s = cs(TOTAL, MARGIN_NONNEG)
    got = list(iter_members(s, [1, 2]))
    assert got[:3] == [config(Y=1), config(y=1), config(n=1)]
    assert config(N=1) not in got
    assert got[3] == config(Y=2)
    assert got.index(config(Y=1, N=1)) < got.index(config(y=2))


def test_find_member():
    s = cs(TOTAL, MARGIN_NEG)
    assert find_member(s, 8) == config(N=1)
    child = cs(LinearConstraint({"Y": 1}, "=", 0))
    # Everything in s with no Y agents is in the child; the smallest member
    # outside needs a Y agent and two N agents.
    assert find_member(s, 8, exclude=[child]) == config(Y=1, N=2)
    assert find_member(s, 8, exact_size=4) == config(Y=1, N=3)
    assert find_member(s, 8, min_size=3) == config(Y=1, N=2)
    assert find_member(cs(LinearConstraint({}, "<=", -1)), 8) is None


def test_find_member_respects_exact_size_misses():
    s = cs(LinearConstraint({"Y": 1}, "=", 2), LinearConstraint({"N": 1, "y": 1, "n": 1}, "=", 0))
    assert find_member(s, 8, exact_size=3) is None
    assert find_member(s, 8, exact_size=2) == config(Y=2)


# -- Semiflows ----------------------------------------------------------------


def test_semiflow_basis_majority(majority):
    flows = semiflow_basis(majority)
    assert [f.weights for f in flows] == [
        {"Y": 1, "N": -1, "y": 0, "n": 0},
        {"Y": 2, "N": 0, "y": 1, "n": 1},
    ]


def test_semiflow_basis_annihilates_displacements(majority):
    for f in semiflow_basis(majority):
        for t in majority.transitions:
            moved = sum(f.weights.get(q, 0) * d for q, d in t.displacement.items())
            assert moved == 0, (f, t.name)


def test_semiflow_invariance_along_random_runs(majority):
    flows = semiflow_basis(majority)
    rng = random.Random(5150)
    for _ in range(100):
        counts = {q: rng.randrange(0, 4) for q in majority.initial_states}
        current = Configuration(counts)
        baseline = [f.value_at(current) for f in flows]
        for _ in range(50):
            succs = majority.successors(current)
            if not succs:
                break
            _, current = succs[rng.randrange(len(succs))]
            assert [f.value_at(current) for f in flows] == baseline


def test_in_span(majority):
    flows = semiflow_basis(majority)
    assert in_span({q: 1 for q in STATES}, flows, STATES)
    assert in_span({"Y": 1, "N": -1}, flows, STATES)
    assert in_span({"Y": 3, "N": -1, "y": 1, "n": 1}, flows, STATES)
    assert not in_span({"y": 1}, flows, STATES)
    assert not in_span({"Y": 1}, flows, STATES)
    assert in_span({}, flows, STATES)


def test_semiflow_basis_no_transitions():
    p = Protocol(
        states=("p",),
        initial_states=("p",),
        transitions=(),
        output={"p": 1},
        predicate=Predicate({"p": 1}, ">=", 1),
    )
    flows = semiflow_basis(p)
    assert [f.weights for f in flows] == [{"p": 1}]


# -- Initial branches and root abstraction ------------------------------------


def test_initial_branches_majority(majority):
    yes = initial_branches(majority, 1)
    assert len(yes) == 1
    assert cs(*yes[0]).entails(cs(MARGIN_NONNEG, TOTAL)).proved
    no = initial_branches(majority, 0)
    assert len(no) == 1
    assert MARGIN_NEG in no[0]
    for q in ("y", "n"):
        assert LinearConstraint({q: 1}, "=", 0) in no[0]
    assert LinearConstraint({q: 1 for q in STATES}, ">=", 1) in no[0]


def test_initial_branches_equality_predicate_splits():
    p = Protocol(
        states=("p", "q"),
        initial_states=("p", "q"),
        transitions=(),
        output={"p": 1, "q": 0},
        predicate=Predicate({"p": 1, "q": -1}, "=", 0),
    )
    assert len(initial_branches(p, 1)) == 1
    branches = initial_branches(p, 0)
    assert len(branches) == 2
    tightened = [c for b in branches for c in b if c.coeffs == {"p": 1, "q": -1}]
    assert sorted(tightened, key=lambda c: c.op) == [
        LinearConstraint({"p": 1, "q": -1}, "<=", -1),
        LinearConstraint({"p": 1, "q": -1}, ">=", 1),
    ]


def test_root_abstraction_majority_output0(majority):
    root = root_abstraction(majority, 0)
    assert equivalent(root, cs(TOTAL, MARGIN_NEG))


def test_root_abstraction_majority_output1(majority):
    root = root_abstraction(majority, 1)
    assert equivalent(root, cs(TOTAL, MARGIN_NONNEG, ACTIVE_YES))


def test_root_abstraction_broken_gains_extra_trap(broken, majority):
    root = root_abstraction(broken, 1)
    assert equivalent(root, cs(TOTAL, MARGIN_NONNEG, ACTIVE_YES, TRAP_YN))
    # The full protocol must not carry that trap: its extra transition can
    # consume the last n agent without producing a Y.
    full = root_abstraction(majority, 1)
    assert not full.entails([TRAP_YN]).proved


def test_root_abstraction_is_inductive(majority, broken):
    for protocol in (majority, broken):
        for value in (0, 1):
            root = root_abstraction(protocol, value)
            for t in protocol.transitions:
                assert inductive_under(root, t).proved, (value, t.name)


def test_root_abstraction_covers_exactly_matching_initials(majority):
    for value in (0, 1):
        root = root_abstraction(majority, value)
        for size in range(1, 7):
            for c in majority.initial_configurations(size):
                assert root.satisfies(c) == (majority.eval_predicate(c) == value), (value, c)


def test_root_abstraction_empty_output():
    p = Protocol(
        states=("p",),
        initial_states=("p",),
        transitions=(),
        output={"p": 1},
        predicate=Predicate({}, ">=", 0),
    )
    assert not root_abstraction(p, 0).feasible().proved
    assert root_abstraction(p, 1).feasible().proved


def test_semiflow_bound_constraints_close_reachable_set(majority):
    # Weighted counts fixed by the root abstraction stay fixed along runs:
    # every reachable configuration from a covered initial one stays inside.
    rng = random.Random(31)
    for value in (0, 1):
        root = root_abstraction(majority, value)
        for _ in range(50):
            counts = {q: rng.randrange(0, 4) for q in majority.initial_states}
            start = Configuration(counts)
            if start.size == 0 or majority.eval_predicate(start) != value:
                continue
            current = start
            for _ in range(40):
                assert root.satisfies(current)
                succs = majority.successors(current)
                if not succs:
                    break
                _, current = succs[rng.randrange(len(succs))]


def test_semiflow_value_helper():
    f = Semiflow({"Y": 2, "y": 1, "n": 1})
    assert f.value_at(config(Y=1, N=5, n=3)) == 5
