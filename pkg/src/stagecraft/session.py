"""Stateful simulation sessions.

A session accumulates a partial Markov chain of visited configurations while
the user steps through it manually, randomly, or steered by the certificate of
the configuration's current stage.  The run list with its cursor gives linear
PREV/NEXT navigation; stepping from the middle of the run truncates its
forward part but keeps every chain node and edge ever visited.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Sequence

from .errors import DomainError, PreconditionError
from .model import Configuration, Protocol, Transition
from .stages import Stage, StageGraph, locate


@dataclass(frozen=True)
class StepCommand:
    """One stepping instruction: manual (an explicit agent pair), random
    (scheduler draw), or progress (certificate-guided)."""

    mode: str
    pair: tuple[str, str] | None = None
    repeat: int = 1

    def __post_init__(self):
        if self.mode not in ("manual", "random", "progress"):
            raise DomainError("bad_mode", f"unknown step mode {self.mode!r}")
        if self.mode == "manual" and (self.pair is None or len(self.pair) != 2):
            raise DomainError("bad_pair", "manual mode requires a pair of states")
        if self.repeat < 1:
            raise DomainError("bad_repeat", "repeat must be >= 1")


@dataclass
class Session:
    """Single-writer session state; all mutation goes through the functions
    below, reads may snapshot via to_json."""

    protocol: Protocol
    graphs: tuple[StageGraph, ...]
    seed: int
    rng: random.Random
    node_ids: dict[Configuration, str] = field(default_factory=dict)
    nodes: dict[str, Configuration] = field(default_factory=dict)
    edges: list[tuple[str, str, str]] = field(default_factory=list)
    placements: dict[str, tuple[str | None, ...]] = field(default_factory=dict)
    run: list[str] = field(default_factory=list)
    cursor: int = 0
    warnings: list[str] = field(default_factory=list)

    @property
    def current(self) -> Configuration:
        return self.nodes[self.run[self.cursor]]

    def current_placements(self) -> tuple[str | None, ...]:
        return self.placements[self.run[self.cursor]]

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "nodes": [
                {
                    "id": nid,
                    "counts": self.nodes[nid].to_dict(),
                    "placements": list(self.placements[nid]),
                }
                for nid in sorted(self.nodes, key=lambda s: int(s[1:]))
            ],
            "edges": [
                {"from": a, "transition": t, "to": b} for a, t, b in self.edges
            ],
            "run": list(self.run),
            "cursor": self.cursor,
            "warnings": list(self.warnings),
        }


def new_session(
    protocol: Protocol,
    graphs: Sequence[StageGraph],
    start: Configuration,
    seed: int | None = None,
) -> Session:
    if start.size < 1:
        raise PreconditionError("empty_configuration", "a session needs at least one agent")
    if seed is None:
        seed = random.SystemRandom().randrange(2**32)
    session = Session(protocol, tuple(graphs), seed, random.Random(seed))
    _intern(session, start)
    session.run.append(session.node_ids[start])
    session.cursor = 0
    if all(p is None for p in session.placements[session.run[0]]):
        session.warnings.append(
            "start configuration lies outside the root of every stage graph"
        )
    return session


def _intern(session: Session, config: Configuration) -> str:
    if config in session.node_ids:
        return session.node_ids[config]
    nid = f"c{len(session.nodes)}"
    session.node_ids[config] = nid
    session.nodes[nid] = config
    session.placements[nid] = tuple(locate(config, g) for g in session.graphs)
    return nid


def _append(session: Session, config: Configuration, transition: Transition | None) -> None:
    """Record one step from the cursor; stepping mid-run truncates the forward
    run (the chain keeps everything)."""
    del session.run[session.cursor + 1 :]
    source = session.run[session.cursor]
    nid = _intern(session, config)
    if transition is not None:
        edge = (source, transition.name, nid)
        if edge not in session.edges:
            session.edges.append(edge)
    session.run.append(nid)
    session.cursor += 1


def _active_stage(session: Session) -> tuple[int, Stage] | None:
    """The stage whose certificate steers progress: the first graph (output 0
    then 1) placing the current configuration in a certified stage."""
    for gi, sid in enumerate(session.current_placements()):
        if sid is None:
            continue
        stage = session.graphs[gi].stage(sid)
        if stage.certificate is not None:
            return gi, stage
    return None


def step(session: Session, command: StepCommand) -> Session:
    for _ in range(command.repeat):
        if command.mode == "manual":
            _step_manual(session, command.pair)
        elif command.mode == "random":
            _step_random(session)
        else:
            _step_progress(session)
    return session


def _step_manual(session: Session, pair: tuple[str, str]) -> None:
    config = session.current
    q1, q2 = pair
    for q in (q1, q2):
        if q not in set(session.protocol.states):
            raise PreconditionError("unknown_state", f"unknown state {q!r}")
    needed = 2 if q1 == q2 else 1
    if config.count(q1) < needed or config.count(q2) < 1:
        raise PreconditionError(
            "pair_not_present", f"configuration has no agent pair ({q1}, {q2})"
        )
    t = session.protocol.transition_for_pair((q1, q2))
    if t is None:
        _append(session, config, None)
    else:
        _append(session, session.protocol.apply(config, t), t)


def _step_random(session: Session) -> None:
    config = session.current
    interaction = session.protocol.sample_interaction(config, session.rng)
    if interaction.transition is None:
        _append(session, config, None)
    else:
        _append(session, session.protocol.apply(config, interaction.transition), interaction.transition)


def _step_progress(session: Session) -> None:
    """Apply the enabled transition minimizing the certificate value of the
    successor (one-step lookahead), ties broken by declaration order."""
    active = _active_stage(session)
    if active is None:
        raise DomainError(
            "no_certificate",
            "progress needs a current stage with a certificate; the configuration "
            "is in a terminal stage or outside all graphs",
        )
    _, stage = active
    f = stage.certificate
    config = session.current
    options = session.protocol.successors(config)
    if not options:
        raise DomainError(
            "certificate_anomaly",
            f"no transition enabled at {config!r} although stage {stage.id} is not terminal",
        )
    best_t, best_c = min(options, key=lambda tc: f.value(tc[1]))
    if f.value(best_c) > f.value(config):
        raise DomainError(
            "certificate_anomaly",
            f"every enabled transition increases certificate {sorted(f.weights)} at {config!r}",
        )
    _append(session, best_c, best_t)


def seek(session: Session, index: int) -> Session:
    if not 0 <= index < len(session.run):
        raise DomainError(
            "index_out_of_range",
            f"run index {index} outside [0, {len(session.run) - 1}]",
        )
    session.cursor = index
    return session


@dataclass(frozen=True)
class ProgressOutcome:
    """Result of progress_to_child: steps actually taken and the stage the
    configuration ended up in (for the steering graph)."""

    steps: int
    reached_stage: str | None
    reached_child: bool


def progress_to_child(session: Session, max_steps: int) -> ProgressOutcome:
    """Progress repeatedly until placement moves to a descendant of the
    current stage, or max_steps runs out.

    A start already placed in a certificate-less stage of every graph cannot
    make progress and reports zero steps.
    """
    active = _active_stage(session)
    if active is None:
        if all(p is None for p in session.current_placements()):
            raise DomainError(
                "no_placement", "configuration lies outside every stage graph"
            )
        current = next(p for p in session.current_placements() if p is not None)
        return ProgressOutcome(0, current, True)
    graph_index, stage = active
    graph = session.graphs[graph_index]
    targets = graph.descendants_of(stage.id)
    steps = 0
    while steps < max_steps:
        placement = session.current_placements()[graph_index]
        if placement in targets:
            return ProgressOutcome(steps, placement, True)
        _step_progress(session)
        steps += 1
    placement = session.current_placements()[graph_index]
    return ProgressOutcome(steps, placement, placement in targets)
