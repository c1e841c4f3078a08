"""Stage-graph data model and the independent certificate checker.

A stage is a reachability-closed set of configurations described by linear
constraints.  A stage graph per output value b is a DAG of stages, each
non-terminal stage carrying a counting certificate whose value almost surely
decreases until a child stage is entered; terminal stages contain only
configurations in consensus b.  The checker here re-establishes every claim a
graph makes from scratch, so a proved report does not depend on trusting the
synthesizer.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .errors import BudgetExceededError, DomainError, StructuralError
from .linear import (
    ConstraintSet,
    LinearConstraint,
    dead_in,
    enabled_constraints,
    find_member,
    inductive_under,
    iter_members,
)
from .model import Configuration, Protocol, Transition
from .oracle import ReachGraph, bottom_sccs, node_budget
from .speed import SpeedClass

DEFAULT_N_CERT = 7


@dataclass(frozen=True)
class Certificate:
    """Counting function f(C) = Σ weights·C with nonnegative integer weights,
    used to bound the distance from a stage to its children."""

    weights: Mapping[str, int]

    def __post_init__(self):
        cleaned = {q: int(w) for q, w in self.weights.items() if w != 0}
        if any(w < 0 for w in cleaned.values()):
            raise StructuralError("bad_certificate", "certificate weights must be nonnegative")
        if not cleaned:
            raise StructuralError("bad_certificate", "certificate must have a nonzero weight")
        object.__setattr__(self, "weights", cleaned)

    def value(self, config: Configuration) -> int:
        return sum(w * config.count(q) for q, w in self.weights.items())

    def delta(self, t: Transition) -> int:
        """Change of the certificate value caused by firing ``t``."""
        return sum(w * t.displacement.get(q, 0) for q, w in self.weights.items())

    def zero_constraint(self) -> LinearConstraint:
        return LinearConstraint(dict(self.weights), "=", 0)

    def to_json(self) -> dict:
        return {"weights": dict(sorted(self.weights.items()))}


@dataclass(frozen=True)
class Stage:
    """One node of a stage graph.

    ``certificate`` is absent exactly for terminal stages, except that a stage
    marked ``incomplete`` records a synthesis dead end: no certificate was
    found and the stage is not claimed terminal.
    """

    id: str
    constraint: ConstraintSet
    certificate: Certificate | None = None
    dead: tuple[str, ...] = ()
    eventually_dead: tuple[str, ...] = ()
    speed: SpeedClass | None = None
    witness: Configuration | None = None
    incomplete: bool = False

    def __post_init__(self):
        if self.witness is not None and not self.constraint.satisfies(self.witness):
            raise StructuralError(
                "bad_witness", f"witness of stage {self.id} does not satisfy its constraint"
            )
        if self.certificate is not None and self.incomplete:
            raise StructuralError(
                "bad_stage", f"stage {self.id} cannot be both certified and incomplete"
            )

    @property
    def terminal(self) -> bool:
        return self.certificate is None and not self.incomplete


@dataclass(frozen=True)
class StageGraph:
    """DAG of stages for one output value, with a single root."""

    output_value: int
    stages: tuple[Stage, ...]
    edges: tuple[tuple[str, str], ...]
    _by_id: dict[str, Stage] = field(init=False, repr=False, compare=False)
    root_id: str = field(init=False, compare=False)

    def __post_init__(self):
        if self.output_value not in (0, 1):
            raise StructuralError("bad_output_value", "output value must be 0 or 1")
        by_id: dict[str, Stage] = {}
        for s in self.stages:
            if s.id in by_id:
                raise StructuralError("duplicate_stage_id", f"duplicate stage id {s.id!r}")
            by_id[s.id] = s
        incoming = {sid: 0 for sid in by_id}
        for parent, child in self.edges:
            for sid in (parent, child):
                if sid not in by_id:
                    raise StructuralError("unknown_stage", f"edge references unknown stage {sid!r}")
            incoming[child] += 1
        roots = [sid for sid, k in incoming.items() if k == 0]
        if len(roots) != 1:
            raise StructuralError(
                "root_count", f"stage graph must have exactly one root, found {len(roots)}"
            )
        self._assert_acyclic(by_id, incoming)
        object.__setattr__(self, "_by_id", by_id)
        object.__setattr__(self, "root_id", roots[0])

    def _assert_acyclic(self, by_id, incoming):
        remaining = dict(incoming)
        queue = [sid for sid, k in remaining.items() if k == 0]
        seen = 0
        while queue:
            sid = queue.pop()
            seen += 1
            for parent, child in self.edges:
                if parent == sid:
                    remaining[child] -= 1
                    if remaining[child] == 0:
                        queue.append(child)
        if seen != len(by_id):
            raise StructuralError("cyclic", "stage graph edges form a cycle")

    def stage(self, stage_id: str) -> Stage:
        if stage_id not in self._by_id:
            raise DomainError("unknown_stage", f"no stage with id {stage_id!r}")
        return self._by_id[stage_id]

    @property
    def root(self) -> Stage:
        return self._by_id[self.root_id]

    def children_of(self, stage_id: str) -> list[Stage]:
        return [self._by_id[c] for p, c in self.edges if p == stage_id]

    def descendants_of(self, stage_id: str) -> set[str]:
        out: set[str] = set()
        frontier = [stage_id]
        while frontier:
            sid = frontier.pop()
            for p, c in self.edges:
                if p == sid and c not in out:
                    out.add(c)
                    frontier.append(c)
        return out


def locate(config: Configuration, graph: StageGraph) -> str | None:
    """Id of the deepest stage containing the configuration, or None.

    Deepest means no child-descendant also contains it.  Two incomparable
    deepest stages are a defect of the graph (our synthesizer emits chains, so
    this only fires on foreign inputs) and raise a structural error.
    """
    containing = {s.id for s in graph.stages if s.constraint.satisfies(config)}
    if not containing:
        return None
    deepest = [
        sid for sid in containing if not (graph.descendants_of(sid) & containing)
    ]
    if len(deepest) > 1:
        raise StructuralError(
            "ambiguous_placement",
            f"configuration {config!r} lies in incomparable stages {sorted(deepest)}",
        )
    return deepest[0]


def dead_transitions(protocol: Protocol, stage: Stage) -> tuple[str, ...]:
    """Names of the transitions that can never fire from the stage, in
    declaration order."""
    return tuple(t.name for t in protocol.transitions if dead_in(stage.constraint, t))


def eventually_dead_transitions(
    protocol: Protocol, stage: Stage, children: Sequence[Stage]
) -> tuple[str, ...]:
    """Transitions alive in the stage but dead in every child: they are
    guaranteed to die once any child is reached."""
    if stage.terminal:
        raise DomainError("terminal_stage", f"stage {stage.id} is terminal")
    dead_now = set(dead_transitions(protocol, stage))
    out = []
    for t in protocol.transitions:
        if t.name in dead_now:
            continue
        if children and all(dead_in(c.constraint, t) for c in children):
            out.append(t.name)
    return tuple(out)


@dataclass(frozen=True)
class CertificateOutcome:
    """Result of checking one stage's certificate.

    status "proved" holds for every population size (symbolic fast path);
    "proved_up_to" holds exhaustively for sizes ≤ bound; "refuted" carries a
    stuck configuration from which the target set is not almost-surely
    reached.
    """

    status: str
    bound: int | None = None
    stuck: Configuration | None = None


def check_certificate(
    protocol: Protocol,
    stage: Stage,
    children: Sequence[Stage],
    n_cert: int = DEFAULT_N_CERT,
    budget: int | None = None,
) -> CertificateOutcome:
    """Almost-sure decrease check for a stage certificate.

    Requires: stage inductive, children contained in the stage, certificate
    present.  For every C in the stage outside all children, runs must reach
    {C' : f(C') < f(C)} ∪ children with probability 1.

    Symbolic fast path (valid for all population sizes): if (a) the stage
    restricted to f = 0 is empty or entailed by some child, (b) no live
    transition increases f, and (c) from every stage configuration with
    f ≥ 1 some f-decreasing transition is enabled (shown by refuting every
    way of disabling them all), then any bottom SCC of the restricted chain
    either meets the target or would have f constant and positive with a
    decreasing transition available inside it, which is contradictory.

    Otherwise the property is model-checked exhaustively for sizes ≤ n_cert:
    targets are made absorbing and every bottom SCC reachable from C must
    intersect the target set.
    """
    f = stage.certificate
    if f is None:
        raise DomainError("no_certificate", f"stage {stage.id} has no certificate")
    if _fast_path(protocol, stage, children, f):
        return CertificateOutcome("proved")

    child_sets = [c.constraint for c in children]
    for start in iter_members(stage.constraint, range(1, n_cert + 1)):
        if any(cs.satisfies(start) for cs in child_sets):
            continue
        stuck = _stuck_configuration(protocol, start, f.value(start), f, child_sets, budget)
        if stuck is not None:
            return CertificateOutcome("refuted", stuck=stuck)
    return CertificateOutcome("proved_up_to", bound=n_cert)


def _fast_path(
    protocol: Protocol, stage: Stage, children: Sequence[Stage], f: Certificate
) -> bool:
    at_zero = stage.constraint.with_constraints([f.zero_constraint()])
    if at_zero.feasible().proved:
        if not any(at_zero.entails(c.constraint).proved for c in children):
            return False

    live = [t for t in protocol.transitions if not dead_in(stage.constraint, t)]
    deltas = {t.name: f.delta(t) for t in live}
    if any(d > 0 for d in deltas.values()):
        return False
    decreasing = [t for t in live if deltas[t.name] < 0]

    positive = stage.constraint.with_constraints(
        [LinearConstraint(dict(f.weights), ">=", 1)]
    )
    if not positive.feasible().proved:
        return True
    if not decreasing:
        return False
    # Refute every way of simultaneously disabling all decreasing transitions.
    disablers: list[list[LinearConstraint]] = []
    for t in decreasing:
        q1, q2 = t.pre
        if q1 == q2:
            disablers.append([LinearConstraint({q1: 1}, "<=", 1)])
        else:
            disablers.append(
                [LinearConstraint({q1: 1}, "<=", 0), LinearConstraint({q2: 1}, "<=", 0)]
            )
    for branch in _product(disablers):
        if positive.with_constraints(branch).feasible().proved:
            return False
    return True


def _product(groups: list[list[LinearConstraint]]):
    if not groups:
        yield []
        return
    for head in groups[0]:
        for tail in _product(groups[1:]):
            yield [head] + tail


def _stuck_configuration(
    protocol: Protocol,
    start: Configuration,
    threshold: int,
    f: Certificate,
    child_sets: Sequence[ConstraintSet],
    budget: int | None,
) -> Configuration | None:
    """First configuration (discovery order) of a bottom SCC that avoids the
    target set {f < threshold} ∪ children, with targets made absorbing."""

    def is_target(c: Configuration) -> bool:
        return f.value(c) < threshold or any(cs.satisfies(c) for cs in child_sets)

    limit = node_budget(budget)
    order: list[Configuration] = [start]
    seen = {start}
    successors: dict[Configuration, tuple[tuple[Transition, Configuration], ...]] = {}
    index = 0
    while index < len(order):
        node = order[index]
        index += 1
        if is_target(node):
            successors[node] = ()
            continue
        outs = tuple(protocol.successors(node))
        successors[node] = outs
        for _, nxt in outs:
            if nxt not in seen:
                if len(seen) >= limit:
                    raise BudgetExceededError(
                        "node_budget_exceeded",
                        f"certificate check exceeded {limit} nodes",
                        size_reached=len(seen),
                    )
                seen.add(nxt)
                order.append(nxt)
    graph = ReachGraph((start,), tuple(order), successors)
    for comp in bottom_sccs(graph):
        if not any(is_target(c) for c in comp):
            rank = {c: i for i, c in enumerate(order)}
            return min(comp, key=lambda c: rank[c])
    return None


@dataclass(frozen=True)
class Obligation:
    """One independently checkable claim of a stage graph."""

    kind: str
    subject: str
    status: str
    bound: int | None = None
    witness: Configuration | None = None
    detail: str | None = None

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "subject": self.subject,
            "status": self.status,
            "bound": self.bound,
            "witness": None if self.witness is None else self.witness.to_dict(),
            "detail": self.detail,
        }


PROVED_STATUSES = ("proved", "proved_up_to")


@dataclass(frozen=True)
class CheckReport:
    """All obligations of one stage graph with their statuses."""

    output_value: int
    n_cert: int
    obligations: tuple[Obligation, ...]

    @property
    def verdict(self) -> str:
        if any(o.status == "refuted" for o in self.obligations):
            return "refuted"
        if any(o.status not in PROVED_STATUSES for o in self.obligations):
            return "not_proved"
        return "proved"

    @property
    def proved(self) -> bool:
        return self.verdict == "proved"

    def failures(self) -> list[Obligation]:
        return [o for o in self.obligations if o.status not in PROVED_STATUSES]

    def to_json(self) -> dict:
        return {
            "output_value": self.output_value,
            "n_cert": self.n_cert,
            "verdict": self.verdict,
            "obligations": [o.to_json() for o in self.obligations],
        }


def check_stage_graph(
    protocol: Protocol,
    graph: StageGraph,
    n_cert: int = DEFAULT_N_CERT,
    budget: int | None = None,
) -> CheckReport:
    """Re-establish every claim of the graph from scratch.

    Obligation families, in order: root coverage, per-stage inductivity,
    per-edge strict containment, terminal consensus, certificate validity,
    declared-dead soundness.  Failed symbolic proofs are downgraded to
    concrete refutations when a small integer counterexample exists, and to
    not_proved otherwise.
    """
    _validate_references(protocol, graph)
    obligations: list[Obligation] = []
    b = graph.output_value

    obligations.append(_root_coverage(protocol, graph, n_cert))

    for stage in graph.stages:
        for t in protocol.transitions:
            obligations.append(_inductivity(protocol, stage, t, n_cert))

    for parent_id, child_id in graph.edges:
        obligations.append(
            _strict_containment(graph.stage(parent_id), graph.stage(child_id), n_cert)
        )

    wrong_states = [q for q in protocol.states if protocol.output[q] != b]
    for stage in graph.stages:
        if stage.terminal:
            obligations.append(_terminal_consensus(stage, wrong_states, n_cert))

    for stage in graph.stages:
        if stage.terminal:
            continue
        if stage.certificate is None:
            obligations.append(
                Obligation(
                    "certificate", stage.id, "not_proved",
                    detail="stage is incomplete: no certificate was found",
                )
            )
            continue
        outcome = check_certificate(
            protocol, stage, graph.children_of(stage.id), n_cert, budget
        )
        obligations.append(
            Obligation(
                "certificate", stage.id, outcome.status,
                bound=outcome.bound, witness=outcome.stuck,
            )
        )

    for stage in graph.stages:
        for name in stage.dead:
            obligations.append(_dead_soundness(protocol, stage, name, n_cert))

    return CheckReport(b, n_cert, tuple(obligations))


def _validate_references(protocol: Protocol, graph: StageGraph) -> None:
    known_t = {t.name for t in protocol.transitions}
    known_q = set(protocol.states)
    for stage in graph.stages:
        for name in (*stage.dead, *stage.eventually_dead):
            if name not in known_t:
                raise StructuralError(
                    "unknown_transition",
                    f"stage {stage.id} references unknown transition {name!r}",
                )
        if stage.certificate is not None:
            for q in stage.certificate.weights:
                if q not in known_q:
                    raise StructuralError(
                        "unknown_state",
                        f"certificate of stage {stage.id} references unknown state {q!r}",
                    )
        for c in stage.constraint.constraints:
            for q in c.coeffs:
                if q not in known_q:
                    raise StructuralError(
                        "unknown_state",
                        f"constraint of stage {stage.id} references unknown state {q!r}",
                    )


def _root_coverage(protocol: Protocol, graph: StageGraph, n_cert: int) -> Obligation:
    root = graph.root
    b = graph.output_value
    for size in range(1, n_cert + 1):
        for c0 in protocol.initial_configurations(size):
            if protocol.eval_predicate(c0) == b and not root.constraint.satisfies(c0):
                return Obligation("root_coverage", root.id, "refuted", witness=c0)
    return Obligation("root_coverage", root.id, "proved_up_to", bound=n_cert)


def _inductivity(protocol: Protocol, stage: Stage, t: Transition, n_cert: int) -> Obligation:
    subject = f"{stage.id}×{t.name}"
    if inductive_under(stage.constraint, t).proved:
        return Obligation("inductive", subject, "proved")
    enabled_region = stage.constraint.with_constraints(enabled_constraints(t))
    for c in iter_members(enabled_region, range(2, n_cert + 1)):
        if not stage.constraint.satisfies(protocol.apply(c, t)):
            return Obligation("inductive", subject, "refuted", witness=c)
    return Obligation("inductive", subject, "not_proved")


def _strict_containment(parent: Stage, child: Stage, n_cert: int) -> Obligation:
    subject = f"{parent.id}→{child.id}"
    if not child.constraint.entails(parent.constraint).proved:
        counter = find_member(child.constraint, n_cert, exclude=[parent.constraint])
        if counter is not None:
            return Obligation("strict_containment", subject, "refuted", witness=counter)
        return Obligation(
            "strict_containment", subject, "not_proved",
            detail="containment not proved symbolically",
        )
    witness = find_member(parent.constraint, n_cert, exclude=[child.constraint])
    if witness is None:
        return Obligation(
            "strict_containment", subject, "not_proved",
            detail=f"no member of the parent outside the child with size <= {n_cert}",
        )
    return Obligation("strict_containment", subject, "proved", witness=witness)


def _terminal_consensus(stage: Stage, wrong_states: Sequence[str], n_cert: int) -> Obligation:
    zeros = [LinearConstraint({q: 1}, "=", 0) for q in wrong_states]
    if stage.constraint.entails(zeros).proved:
        return Obligation("terminal_consensus", stage.id, "proved")
    bad = stage.constraint.with_constraints(
        [LinearConstraint({q: 1 for q in wrong_states}, ">=", 1)]
    )
    counter = find_member(bad, n_cert)
    if counter is not None:
        return Obligation("terminal_consensus", stage.id, "refuted", witness=counter)
    return Obligation("terminal_consensus", stage.id, "not_proved")


def _dead_soundness(protocol: Protocol, stage: Stage, name: str, n_cert: int) -> Obligation:
    t = protocol.transition(name)
    subject = f"{stage.id}×{name}"
    if dead_in(stage.constraint, t):
        return Obligation("dead", subject, "proved")
    counter = find_member(
        stage.constraint.with_constraints(enabled_constraints(t)), n_cert
    )
    if counter is not None:
        return Obligation("dead", subject, "refuted", witness=counter)
    return Obligation("dead", subject, "not_proved")
