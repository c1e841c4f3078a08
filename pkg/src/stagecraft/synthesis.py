"""Automatic construction of the two stage graphs of a protocol.

For each output value b the synthesizer starts from the root abstraction and
repeatedly either recognizes the current stage as terminal (it entails
consensus b) or searches for a counting certificate f_Z = Σ_{q∈Z} C(q) whose
zero set cuts out an inductive, strictly smaller child stage that the
certificate provably drains into.  Candidates Z are enumerated by increasing
size then lexicographically, so results are deterministic.  A graph that gets
stuck carries an incomplete final stage; a bounded oracle search then tries to
upgrade the failure to a concrete counterexample run.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from itertools import combinations
from typing import Sequence

from .errors import StagecraftError
from .linear import (
    ConstraintSet,
    LinearConstraint,
    find_member,
    inductive_under,
    root_abstraction,
)
from .model import Configuration, Protocol, Transition
from .oracle import Verdict, verify_bounded
from .speed import classify
from .stages import (
    DEFAULT_N_CERT,
    Certificate,
    CheckReport,
    Stage,
    StageGraph,
    check_certificate,
    check_stage_graph,
    dead_transitions,
)

WITNESS_BOUND = 8
REFUTE_BOUND = 8


def stage_witness(constraint_set: ConstraintSet, n_max: int = WITNESS_BOUND) -> Configuration | None:
    """Smallest-size, then lexicographically least member of the stage."""
    return find_member(constraint_set, n_max)


@dataclass(frozen=True)
class SynthesisResult:
    """Outcome of synthesize: verified (both graphs check), refuted (concrete
    counterexample run), or inconclusive (partial graphs plus the first
    unprovable obligation)."""

    outcome: str
    graphs: tuple[StageGraph, ...]
    reports: tuple[CheckReport, ...]
    run: tuple[tuple[Configuration, Transition | None], ...] | None = None
    reason: str | None = None

    def graph_for(self, output_value: int) -> StageGraph:
        for g in self.graphs:
            if g.output_value == output_value:
                return g
        raise StagecraftError("missing_graph", f"no graph for output {output_value}")

    def report_for(self, output_value: int) -> CheckReport:
        for r in self.reports:
            if r.output_value == output_value:
                return r
        raise StagecraftError("missing_report", f"no report for output {output_value}")


def synthesize(
    protocol: Protocol,
    n_cert: int = DEFAULT_N_CERT,
    budget: int | None = None,
    deadline: float | None = None,
) -> SynthesisResult:
    """Build and independently check both stage graphs.

    ``deadline`` is an absolute time.monotonic() instant; when it passes, the
    graph under construction is cut off with an incomplete stage and the
    result is at best inconclusive.  Graph verdicts always come from a full
    re-check of the finished graphs, never from trust in construction.
    """
    counter = _IdCounter()
    graphs = tuple(
        _build_graph(protocol, b, n_cert, counter, budget, deadline) for b in (0, 1)
    )
    reports = tuple(
        check_stage_graph(protocol, g, n_cert, budget) for g in graphs
    )
    if all(r.proved for r in reports):
        return SynthesisResult("verified", graphs, reports)

    verdict: Verdict = verify_bounded(protocol, REFUTE_BOUND, budget)
    if not verdict.ok:
        return SynthesisResult("refuted", graphs, reports, run=verdict.run)

    first_failure = next(
        o for r in reports for o in r.failures()
    )
    reason = f"{first_failure.kind} not proved for {first_failure.subject}"
    if deadline is not None and time.monotonic() > deadline:
        reason = "time budget exhausted; " + reason
    return SynthesisResult("inconclusive", graphs, reports, reason=reason)


class _IdCounter:
    def __init__(self):
        self.next_index = 0

    def take(self) -> str:
        sid = f"S{self.next_index}"
        self.next_index += 1
        return sid


def _build_graph(
    protocol: Protocol,
    output_value: int,
    n_cert: int,
    counter: _IdCounter,
    budget: int | None,
    deadline: float | None,
) -> StageGraph:
    wrong_zeros = [
        LinearConstraint({q: 1}, "=", 0)
        for q in protocol.states
        if protocol.output[q] != output_value
    ]
    max_depth = len(protocol.states) + 1

    chain: list[tuple[ConstraintSet, Certificate | None, bool]] = []
    current = root_abstraction(protocol, output_value)
    while True:
        out_of_time = deadline is not None and time.monotonic() > deadline
        if current.entails(wrong_zeros).proved:
            chain.append((current, None, False))
            break
        if out_of_time or len(chain) + 1 >= max_depth:
            chain.append((current, None, True))
            break
        found = _find_certificate(protocol, current, n_cert, budget, deadline)
        if found is None:
            chain.append((current, None, True))
            break
        certificate, child = found
        chain.append((current, certificate, False))
        current = child

    stages: list[Stage] = []
    edges: list[tuple[str, str]] = []
    for position, (constraint, certificate, incomplete) in enumerate(chain):
        sid = counter.take()
        dead = dead_transitions(protocol, Stage(sid, constraint))
        eventually_dead: tuple[str, ...] = ()
        if position + 1 < len(chain):
            child_constraint = chain[position + 1][0]
            child_dead = set(dead_transitions(protocol, Stage("tmp", child_constraint)))
            eventually_dead = tuple(
                t.name for t in protocol.transitions
                if t.name not in dead and t.name in child_dead
            )
        stage = Stage(
            id=sid,
            constraint=constraint,
            certificate=certificate,
            dead=dead,
            eventually_dead=eventually_dead,
            witness=stage_witness(constraint, max(n_cert, WITNESS_BOUND)),
            incomplete=incomplete,
        )
        if certificate is not None:
            stage = replace(stage, speed=classify(protocol, stage, certificate, dead))
        if stages:
            edges.append((stages[-1].id, sid))
        stages.append(stage)
    return StageGraph(output_value, tuple(stages), tuple(edges))


def _find_certificate(
    protocol: Protocol,
    parent: ConstraintSet,
    n_cert: int,
    budget: int | None,
    deadline: float | None,
) -> tuple[Certificate, ConstraintSet] | None:
    """First subset Z (by size, then lexicographically in state declaration
    order) whose counting certificate is accepted: the child parent ∧ (f_Z=0)
    must be inductive, strictly smaller, and almost-surely reached."""
    for size in range(1, len(protocol.states) + 1):
        for zone in combinations(protocol.states, size):
            if deadline is not None and time.monotonic() > deadline:
                return None
            certificate = Certificate({q: 1 for q in zone})
            child = parent.with_constraints([certificate.zero_constraint()])
            if not all(inductive_under(child, t).proved for t in protocol.transitions):
                continue
            if find_member(parent, n_cert, exclude=[child]) is None:
                continue
            parent_stage = Stage("candidate", parent, certificate)
            child_stage = Stage("candidate-child", child)
            outcome = check_certificate(protocol, parent_stage, [child_stage], n_cert, budget)
            if outcome.status in ("proved", "proved_up_to"):
                return certificate, child
    return None
