"""Exact-rational linear-constraint reasoning.

Everything in this module works over exact rationals (``fractions.Fraction``)
so that entailment results can be trusted as proof steps: a ``proved`` answer
is established by rational infeasibility of the negation and is therefore
sound for the integer configurations it quantifies over.  Incompleteness only
ever surfaces as ``not_proved``.

The negation of an integer-coefficient constraint is tightened to integers
before the infeasibility check (e.g. ¬(a·x ≤ b) becomes a·x ≥ b+1), which
makes the rational check decide the integer entailment in many more cases
while remaining sound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from typing import Iterable, Mapping, Sequence

from .errors import FormatError
from .model import Configuration, Protocol, Transition, _compositions

CONSTRAINT_OPS = ("<=", "=", ">=")

# Reserved variable name used when projecting a linear value out of a region.
_VALUE_VAR = "\x00value"


@dataclass(frozen=True)
class LinearConstraint:
    """Integer linear constraint over state counts: Σ coeffs[q]·C(q) ⋈ const."""

    coeffs: Mapping[str, int]
    op: str
    const: int

    def __post_init__(self):
        if self.op not in CONSTRAINT_OPS:
            raise FormatError("bad_constraint_op", f"unsupported constraint op {self.op!r}")
        cleaned = {q: int(c) for q, c in self.coeffs.items() if c != 0}
        object.__setattr__(self, "coeffs", cleaned)
        object.__setattr__(self, "const", int(self.const))

    def value_at(self, config: Configuration) -> int:
        return sum(c * config.count(q) for q, c in self.coeffs.items())

    def holds_at(self, config: Configuration) -> bool:
        v = self.value_at(config)
        if self.op == "<=":
            return v <= self.const
        if self.op == ">=":
            return v >= self.const
        return v == self.const

    def shifted(self, displacement: Mapping[str, int]) -> "LinearConstraint":
        """The constraint re-evaluated at C + displacement."""
        moved = sum(c * displacement.get(q, 0) for q, c in self.coeffs.items())
        return LinearConstraint(self.coeffs, self.op, self.const - moved)

    def to_json(self) -> dict:
        return {"coeffs": dict(sorted(self.coeffs.items())), "op": self.op, "const": self.const}

    @classmethod
    def from_json(cls, data: dict) -> "LinearConstraint":
        return cls(data["coeffs"], data["op"], data["const"])

    def __repr__(self) -> str:
        if not self.coeffs:
            return f"0 {self.op} {self.const}"
        parts = []
        for q, c in self.coeffs.items():
            if c == 1:
                parts.append(f"C({q})")
            elif c == -1:
                parts.append(f"-C({q})")
            else:
                parts.append(f"{c}·C({q})")
        return " + ".join(parts).replace("+ -", "- ") + f" {self.op} {self.const}"


@dataclass(frozen=True)
class Entailment:
    """Outcome of an entailment query; a failed proof may carry a rational
    witness point (never claimed to be a counterexample, only evidence the
    rational relaxation is satisfiable)."""

    proved: bool
    witness: dict[str, Fraction] | None = None


class ConstraintSet:
    """Conjunction of linear constraints plus implicit C(q) ≥ 0 for all q.

    The state universe is carried explicitly; it fixes variable order for
    elimination and enumeration, making every answer deterministic.
    """

    __slots__ = ("states", "constraints")

    def __init__(self, states: Sequence[str], constraints: Iterable[LinearConstraint] = ()):
        self.states = tuple(states)
        self.constraints = tuple(constraints)

    def with_constraints(self, extra: Iterable[LinearConstraint]) -> "ConstraintSet":
        return ConstraintSet(self.states, (*self.constraints, *extra))

    def satisfies(self, config: Configuration) -> bool:
        return all(c.holds_at(config) for c in self.constraints)

    # -- rational reasoning --------------------------------------------------

    def _ineqs(self) -> list[tuple[dict[str, Fraction], Fraction]]:
        ineqs = [({q: Fraction(-1)}, Fraction(0)) for q in self.states]
        for c in self.constraints:
            ineqs.extend(_constraint_ineqs(c))
        return ineqs

    def feasible(self) -> Entailment:
        """Rational feasibility; Entailment(proved=True) means nonempty with a
        witness point, proved=False means empty over the rationals."""
        witness = _fm_witness(self._ineqs(), list(self.states))
        if witness is None:
            return Entailment(False)
        return Entailment(True, witness)

    def entails(self, other: "ConstraintSet | Iterable[LinearConstraint]") -> Entailment:
        """Proved only if every integer point of self satisfies the obligations.

        Each obligation is checked by rational infeasibility of self together
        with its integer-tightened negation; a feasible negation yields
        not_proved with the feasible point as witness.
        """
        obligations = other.constraints if isinstance(other, ConstraintSet) else tuple(other)
        base = self._ineqs()
        for c in obligations:
            for branch in _integer_negations(c):
                witness = _fm_witness(base + [branch], list(self.states))
                if witness is not None:
                    return Entailment(False, witness)
        return Entailment(True)

    def __repr__(self) -> str:
        return "ConstraintSet[" + " ∧ ".join(repr(c) for c in self.constraints) + "]"


def _constraint_ineqs(c: LinearConstraint) -> list[tuple[dict[str, Fraction], Fraction]]:
    co = {q: Fraction(v) for q, v in c.coeffs.items()}
    neg = {q: -v for q, v in co.items()}
    b = Fraction(c.const)
    if c.op == "<=":
        return [(co, b)]
    if c.op == ">=":
        return [(neg, -b)]
    return [(co, b), (neg, -b)]


def _integer_negations(c: LinearConstraint) -> list[tuple[dict[str, Fraction], Fraction]]:
    co = {q: Fraction(v) for q, v in c.coeffs.items()}
    neg = {q: -v for q, v in co.items()}
    b = Fraction(c.const)
    if c.op == "<=":          # ¬(a ≤ b) ⇒ a ≥ b+1
        return [(neg, -(b + 1))]
    if c.op == ">=":          # ¬(a ≥ b) ⇒ a ≤ b−1
        return [(co, b - 1)]
    return [(co, b - 1), (neg, -(b + 1))]


# -- Fourier–Motzkin core ------------------------------------------------------


def _normalize(ineqs):
    """Drop zero coefficients, canonicalize directions, keep tightest bounds.

    Returns None when a contradictory constant constraint (0 ≤ negative) is
    present.
    """
    best: dict[tuple, Fraction] = {}
    for coeffs, bound in ineqs:
        coeffs = {q: v for q, v in coeffs.items() if v != 0}
        if not coeffs:
            if bound < 0:
                return None
            continue
        denom_lcm = math.lcm(*(v.denominator for v in coeffs.values()))
        nums = [v.numerator * (denom_lcm // v.denominator) for v in coeffs.values()]
        g = math.gcd(*(abs(n) for n in nums))
        scale = Fraction(denom_lcm, g)
        key = tuple(sorted((q, v * scale) for q, v in coeffs.items()))
        scaled_bound = bound * scale
        if key not in best or scaled_bound < best[key]:
            best[key] = scaled_bound
    return [(dict(key), bound) for key, bound in best.items()]


def _eliminate(ineqs, var):
    lowers, uppers, rest = [], [], []
    for coeffs, bound in ineqs:
        c = coeffs.get(var, Fraction(0))
        if c > 0:
            uppers.append((coeffs, bound, c))
        elif c < 0:
            lowers.append((coeffs, bound, c))
        else:
            rest.append((coeffs, bound))
    for lco, lb, lc in lowers:
        for uco, ub, uc in uppers:
            merged: dict = {}
            for q, v in lco.items():
                merged[q] = merged.get(q, Fraction(0)) + uc * v
            for q, v in uco.items():
                merged[q] = merged.get(q, Fraction(0)) + (-lc) * v
            merged.pop(var, None)
            rest.append((merged, uc * lb + (-lc) * ub))
    return rest


def _fm_witness(ineqs, variables) -> dict[str, Fraction] | None:
    """Feasibility of a conjunction of nonstrict rational inequalities.

    Eliminates variables in order, then back-substitutes a witness point,
    preferring small nonnegative integers coordinate-wise.
    """
    levels = []
    current = _normalize(ineqs)
    if current is None:
        return None
    for var in variables:
        levels.append((var, current))
        current = _normalize(_eliminate(current, var))
        if current is None:
            return None
    assignment: dict[str, Fraction] = {}
    for var, system in reversed(levels):
        lo = hi = None
        for coeffs, bound in system:
            c = coeffs.get(var, Fraction(0))
            if c == 0:
                continue
            rest = sum((v * assignment[q] for q, v in coeffs.items() if q != var), Fraction(0))
            limit = (bound - rest) / c
            if c > 0:
                hi = limit if hi is None else min(hi, limit)
            else:
                lo = limit if lo is None else max(lo, limit)
        assignment[var] = _pick_value(lo, hi)
    return assignment


def _pick_value(lo: Fraction | None, hi: Fraction | None) -> Fraction:
    if lo is None and hi is None:
        return Fraction(0)
    if lo is None:
        return Fraction(min(0, math.floor(hi)))
    candidate = Fraction(max(0, math.ceil(lo)))
    if hi is None or candidate <= hi:
        return candidate
    return (lo + hi) / 2


def _project_interval(ineqs, weights, variables):
    """Range of Σ weights·x over the region, as (lo, hi); None = unbounded.

    Returns the string "empty" when the region itself is rationally empty.
    """
    val = {q: Fraction(w) for q, w in weights.items() if w != 0}
    tie_lo = dict(val)
    tie_lo[_VALUE_VAR] = Fraction(-1)
    tie_hi = {q: -v for q, v in val.items()}
    tie_hi[_VALUE_VAR] = Fraction(1)
    system = _normalize(list(ineqs) + [(tie_lo, Fraction(0)), (tie_hi, Fraction(0))])
    if system is None:
        return "empty"
    for var in variables:
        system = _normalize(_eliminate(system, var))
        if system is None:
            return "empty"
    lo = hi = None
    for coeffs, bound in system:
        c = coeffs.get(_VALUE_VAR, Fraction(0))
        if c == 0:
            continue
        limit = bound / c
        if c > 0:
            hi = limit if hi is None else min(hi, limit)
        else:
            lo = limit if lo is None else max(lo, limit)
    return (lo, hi)


# -- protocol-facing operations ------------------------------------------------


def enabled_constraints(t: Transition) -> list[LinearConstraint]:
    q1, q2 = t.pre
    if q1 == q2:
        return [LinearConstraint({q1: 1}, ">=", 2)]
    return [LinearConstraint({q1: 1}, ">=", 1), LinearConstraint({q2: 1}, ">=", 1)]


def dead_in(constraint_set: ConstraintSet, t: Transition) -> bool:
    """True if no configuration of the set can fire ``t`` (rational check,
    sound for the integer configurations)."""
    return not constraint_set.with_constraints(enabled_constraints(t)).feasible().proved


def inductive_under(constraint_set: ConstraintSet, t: Transition) -> Entailment:
    """Proved if firing ``t`` from any member lands back in the set.

    Successor nonnegativity is automatic from enabledness, so the obligations
    are exactly the explicit constraints re-evaluated after the displacement.
    """
    premise = constraint_set.with_constraints(enabled_constraints(t))
    shifted = [c.shifted(t.displacement) for c in constraint_set.constraints]
    return premise.entails(shifted)


def iter_members(constraint_set: ConstraintSet, sizes: Iterable[int]):
    """Integer members of the set, by size then lexicographically as multiset
    words over the state universe (agents in earlier states first)."""
    for size in sizes:
        for vector in _compositions(size, len(constraint_set.states)):
            config = Configuration(dict(zip(constraint_set.states, vector)))
            if constraint_set.satisfies(config):
                yield config


def find_member(
    constraint_set: ConstraintSet,
    max_size: int,
    exclude: Sequence[ConstraintSet] = (),
    min_size: int = 1,
    exact_size: int | None = None,
) -> Configuration | None:
    """Smallest-size, then lexicographically least integer member.

    ``exclude`` members are skipped (used to find members outside children).
    """
    sizes = [exact_size] if exact_size is not None else range(min_size, max_size + 1)
    for config in iter_members(constraint_set, sizes):
        if any(other.satisfies(config) for other in exclude):
            continue
        return config
    return None


# -- semiflows and the root abstraction ----------------------------------------


@dataclass(frozen=True)
class Semiflow:
    """Integer state weighting with weights·δ_t = 0 for every transition; the
    weighted agent count is conserved along every run."""

    weights: Mapping[str, int]

    def __post_init__(self):
        object.__setattr__(self, "weights", dict(self.weights))

    def value_at(self, config: Configuration) -> int:
        return sum(w * config.count(q) for q, w in self.weights.items())


def semiflow_basis(protocol: Protocol) -> list[Semiflow]:
    """Canonical basis of the conservation laws of the protocol.

    Computes the null space of the (transitions × states) displacement matrix
    with exact rationals, then normalizes each vector to coprime integers with
    the first nonzero weight positive.
    """
    states = protocol.states
    rows = []
    for t in protocol.transitions:
        delta = t.displacement
        rows.append([Fraction(delta.get(q, 0)) for q in states])
    basis = _null_space(rows, len(states))
    flows = []
    for vec in basis:
        flows.append(Semiflow(dict(zip(states, _normalize_integer_vector(vec)))))
    return flows


def _null_space(rows: list[list[Fraction]], width: int) -> list[list[Fraction]]:
    matrix = [row[:] for row in rows]
    pivots: list[int] = []
    r = 0
    for col in range(width):
        pivot_row = next((i for i in range(r, len(matrix)) if matrix[i][col] != 0), None)
        if pivot_row is None:
            continue
        matrix[r], matrix[pivot_row] = matrix[pivot_row], matrix[r]
        scale = matrix[r][col]
        matrix[r] = [v / scale for v in matrix[r]]
        for i in range(len(matrix)):
            if i != r and matrix[i][col] != 0:
                factor = matrix[i][col]
                matrix[i] = [a - factor * b for a, b in zip(matrix[i], matrix[r])]
        pivots.append(col)
        r += 1
    free = [c for c in range(width) if c not in pivots]
    basis = []
    for f in free:
        vec = [Fraction(0)] * width
        vec[f] = Fraction(1)
        for row_idx, p in enumerate(pivots):
            vec[p] = -matrix[row_idx][f]
        basis.append(vec)
    return basis


def _normalize_integer_vector(vec: list[Fraction]) -> list[int]:
    denom_lcm = math.lcm(*(v.denominator for v in vec)) if any(vec) else 1
    ints = [int(v * denom_lcm) for v in vec]
    g = math.gcd(*(abs(n) for n in ints)) or 1
    ints = [n // g for n in ints]
    first = next((n for n in ints if n != 0), 0)
    if first < 0:
        ints = [-n for n in ints]
    return ints


def in_span(weights: Mapping[str, int], flows: Sequence[Semiflow], states: Sequence[str]) -> bool:
    """Whether the weighting lies in the rational span of the given semiflows."""
    rows = [[Fraction(f.weights.get(q, 0)) for q in states] for f in flows]
    target = [Fraction(weights.get(q, 0)) for q in states]
    return _rank(rows) == _rank(rows + [target])


def _rank(rows: list[list[Fraction]]) -> int:
    matrix = [row[:] for row in rows if any(row)]
    rank = 0
    width = len(matrix[0]) if matrix else 0
    for col in range(width):
        pivot = next((i for i in range(rank, len(matrix)) if matrix[i][col] != 0), None)
        if pivot is None:
            continue
        matrix[rank], matrix[pivot] = matrix[pivot], matrix[rank]
        scale = matrix[rank][col]
        matrix[rank] = [v / scale for v in matrix[rank]]
        for i in range(len(matrix)):
            if i != rank and matrix[i][col] != 0:
                factor = matrix[i][col]
                matrix[i] = [a - factor * b for a, b in zip(matrix[i], matrix[rank])]
        rank += 1
    return rank


def initial_branches(protocol: Protocol, output_value: int) -> list[list[LinearConstraint]]:
    """Constraint descriptions of the initial configurations with the given
    predicate value, as one or two conjunctive branches.

    Negation of an equality predicate splits into two branches; all other
    cases are single branches.  Negations are integer-tightened.
    """
    pred = protocol.predicate
    zeros = [
        LinearConstraint({q: 1}, "=", 0)
        for q in protocol.states
        if q not in set(protocol.initial_states)
    ]
    total = LinearConstraint({q: 1 for q in protocol.states}, ">=", 1)
    coeffs = dict(pred.coefficients)
    c = pred.constant
    if output_value == 1:
        if pred.comparison == ">=":
            heads = [[LinearConstraint(coeffs, ">=", c)]]
        elif pred.comparison == ">":
            heads = [[LinearConstraint(coeffs, ">=", c + 1)]]
        else:
            heads = [[LinearConstraint(coeffs, "=", c)]]
    else:
        if pred.comparison == ">=":
            heads = [[LinearConstraint(coeffs, "<=", c - 1)]]
        elif pred.comparison == ">":
            heads = [[LinearConstraint(coeffs, "<=", c)]]
        else:
            heads = [[LinearConstraint(coeffs, "<=", c - 1)], [LinearConstraint(coeffs, ">=", c + 1)]]
    return [zeros + [total] + head for head in heads]


def root_abstraction(protocol: Protocol, output_value: int, member_probe: int = 8) -> ConstraintSet:
    """Inductive overapproximation of the configurations reachable from the
    initial configurations with the given predicate value.

    Construction: total count ≥ 1; the tightest bound on every conserved
    quantity (each basis semiflow, plus the predicate weighting and the
    all-ones weighting when they are conserved) valid over those initial
    configurations; then a fixpoint of conditional trap constraints
    Σ_{q∈Z} C(q) ≥ 1 that hold initially and are inductive relative to the
    constraints collected so far.
    """
    states = protocol.states
    branches = [
        ConstraintSet(states, branch) for branch in initial_branches(protocol, output_value)
    ]
    live_branches = [b for b in branches if _branch_inhabited(protocol, b, member_probe)]
    total = LinearConstraint({q: 1 for q in states}, ">=", 1)
    if not live_branches:
        # No initial configuration has this predicate value: the empty stage.
        return ConstraintSet(states, [total, LinearConstraint({}, "<=", -1)])

    current = ConstraintSet(states, [total])
    variables = list(states)

    flows = semiflow_basis(protocol)
    directions: list[dict[str, int]] = []
    ones = {q: 1 for q in states}
    if in_span(ones, flows, states):
        directions.append(ones)
    pred_vec = {q: v for q, v in protocol.predicate.coefficients.items() if v != 0}
    if pred_vec and in_span(pred_vec, flows, states):
        directions.append(pred_vec)
    directions.extend(dict(f.weights) for f in flows)

    seen_directions = set()
    for weights in directions:
        key = tuple(sorted((q, w) for q, w in weights.items() if w != 0))
        if not key or key in seen_directions:
            continue
        seen_directions.add(key)
        lo, hi = _combined_interval(live_branches, weights)
        for candidate in _interval_constraints(weights, lo, hi):
            if not current.entails([candidate]).proved:
                current = current.with_constraints([candidate])

    current = _add_trap_constraints(protocol, current, live_branches)
    return current


def _branch_inhabited(protocol: Protocol, branch: ConstraintSet, probe: int) -> bool:
    if find_member(branch, probe) is not None:
        return True
    return branch.feasible().proved


def _combined_interval(branches: Sequence[ConstraintSet], weights: Mapping[str, int]):
    lo = hi = None
    first = True
    for branch in branches:
        interval = _project_interval(branch._ineqs(), weights, list(branch.states))
        if interval == "empty":
            continue
        blo, bhi = interval
        if first:
            lo, hi, first = blo, bhi, False
            continue
        lo = None if lo is None or blo is None else min(lo, blo)
        hi = None if hi is None or bhi is None else max(hi, bhi)
    if first:
        return None, None
    return lo, hi


def _interval_constraints(weights: Mapping[str, int], lo, hi) -> list[LinearConstraint]:
    lo_int = None if lo is None else math.ceil(lo)
    hi_int = None if hi is None else math.floor(hi)
    if lo_int is not None and hi_int is not None and lo_int == hi_int:
        return [LinearConstraint(weights, "=", lo_int)]
    out = []
    if lo_int is not None:
        out.append(LinearConstraint(weights, ">=", lo_int))
    if hi_int is not None:
        out.append(LinearConstraint(weights, "<=", hi_int))
    return out


def _add_trap_constraints(
    protocol: Protocol, current: ConstraintSet, branches: Sequence[ConstraintSet]
) -> ConstraintSet:
    states = protocol.states
    changed = True
    while changed:
        changed = False
        for size in range(1, len(states) + 1):
            for zone in combinations(states, size):
                candidate = LinearConstraint({q: 1 for q in zone}, ">=", 1)
                if current.entails([candidate]).proved:
                    continue
                if not all(branch.entails([candidate]).proved for branch in branches):
                    continue
                if _trap_inductive(protocol, current, candidate):
                    current = current.with_constraints([candidate])
                    changed = True
    return current


def _trap_inductive(protocol: Protocol, current: ConstraintSet, candidate: LinearConstraint) -> bool:
    augmented = current.with_constraints([candidate])
    for t in protocol.transitions:
        premise = augmented.with_constraints(enabled_constraints(t))
        if not premise.entails([candidate.shifted(t.displacement)]).proved:
            return False
    return True
