"""Protocol and configuration semantics.

A population protocol is a finite set of states, a subset of initial states,
pairwise transitions, a boolean output per state, and a threshold predicate
over initial configurations.  Configurations are multisets of agents over
states.  All values here are immutable after construction; the only stateful
operation is ``sample_interaction``, which threads an explicit random
generator.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Iterator, Mapping

from .errors import DomainError, FormatError, PreconditionError

PREDICATE_OPS = (">=", ">", "=")


class Configuration:
    """Multiset of agents over states, stored sparsely (zero counts dropped)."""

    __slots__ = ("_counts", "_size", "_hash")

    def __init__(self, counts: Mapping[str, int] | None = None):
        cleaned: dict[str, int] = {}
        for state, count in (counts or {}).items():
            if not isinstance(count, int) or isinstance(count, bool):
                raise FormatError("bad_count", f"count for state {state!r} must be an integer")
            if count < 0:
                raise FormatError("negative_count", f"count for state {state!r} is negative")
            if count > 0:
                cleaned[state] = count
        self._counts = cleaned
        self._size = sum(cleaned.values())
        self._hash = hash(frozenset(cleaned.items()))

    @property
    def size(self) -> int:
        return self._size

    def count(self, state: str) -> int:
        return self._counts.get(state, 0)

    __getitem__ = count

    def items(self):
        return self._counts.items()

    def states(self):
        return self._counts.keys()

    def to_dict(self) -> dict[str, int]:
        return dict(self._counts)

    def shift(self, displacement: Mapping[str, int]) -> "Configuration":
        merged = dict(self._counts)
        for state, delta in displacement.items():
            merged[state] = merged.get(state, 0) + delta
        return Configuration(merged)

    def __eq__(self, other) -> bool:
        return isinstance(other, Configuration) and self._counts == other._counts

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        if not self._counts:
            return "{}"
        parts = []
        for state in sorted(self._counts):
            n = self._counts[state]
            parts.append(state if n == 1 else f"{n}·{state}")
        return "{" + ", ".join(parts) + "}"


@dataclass(frozen=True)
class Transition:
    """A pairwise transition: two agents in ``pre`` jointly move to ``post``.

    Pre and post are unordered pairs; they are normalized to sorted tuples so
    that structurally equal transitions compare equal.
    """

    name: str
    pre: tuple[str, str]
    post: tuple[str, str]

    def __post_init__(self):
        object.__setattr__(self, "pre", tuple(sorted(self.pre)))
        object.__setattr__(self, "post", tuple(sorted(self.post)))
        if len(self.pre) != 2 or len(self.post) != 2:
            raise FormatError("bad_arity", f"transition {self.name!r} must have exactly two pre and two post states")

    @property
    def displacement(self) -> dict[str, int]:
        delta: dict[str, int] = {}
        for q in self.post:
            delta[q] = delta.get(q, 0) + 1
        for q in self.pre:
            delta[q] = delta.get(q, 0) - 1
        return {q: d for q, d in delta.items() if d != 0}


@dataclass(frozen=True)
class Predicate:
    """Threshold predicate over initial configurations: coeffs·C ⋈ constant."""

    coefficients: Mapping[str, int]
    comparison: str
    constant: int

    def __post_init__(self):
        if self.comparison not in PREDICATE_OPS:
            raise FormatError("bad_predicate_op", f"unsupported comparison {self.comparison!r}", "predicate.op")
        object.__setattr__(self, "coefficients", dict(self.coefficients))

    def holds(self, value: int) -> bool:
        if self.comparison == ">=":
            return value >= self.constant
        if self.comparison == ">":
            return value > self.constant
        return value == self.constant


@dataclass(frozen=True)
class Interaction:
    """One scheduler draw: the ordered agent pair and the matching transition.

    ``transition`` is None exactly when no transition's pre-pair matches the
    drawn pair; such a draw is a counted step that leaves the configuration
    unchanged.
    """

    transition: Transition | None
    agents: tuple[str, str]


@dataclass(frozen=True)
class Protocol:
    """A validated population protocol.

    Rejects nondeterministic protocols (two transitions sharing an unordered
    pre-pair) up front, which keeps the random scheduler well-defined.
    """

    states: tuple[str, ...]
    initial_states: tuple[str, ...]
    transitions: tuple[Transition, ...]
    output: Mapping[str, int]
    predicate: Predicate
    _by_name: dict = field(init=False, repr=False, compare=False, hash=False)
    _by_pre: dict = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "initial_states", tuple(self.initial_states))
        object.__setattr__(self, "transitions", tuple(self.transitions))
        object.__setattr__(self, "output", dict(self.output))
        known = set(self.states)
        if len(known) != len(self.states):
            raise FormatError("duplicate_state", "state identifiers must be unique", "states")
        for i, q in enumerate(self.initial_states):
            if q not in known:
                raise FormatError("unknown_state", f"initial state {q!r} is not declared", f"initial[{i}]")
        if len(set(self.initial_states)) != len(self.initial_states):
            raise FormatError("duplicate_state", "initial states must be unique", "initial")
        for q in self.states:
            if q not in self.output:
                raise FormatError("missing_output", f"state {q!r} has no output value", "output")
            if self.output[q] not in (0, 1):
                raise FormatError("bad_output", f"output of {q!r} must be 0 or 1", f"output.{q}")
        for q in self.output:
            if q not in known:
                raise FormatError("unknown_state", f"output given for undeclared state {q!r}", f"output.{q}")
        by_name: dict[str, Transition] = {}
        by_pre: dict[tuple[str, str], Transition] = {}
        for i, t in enumerate(self.transitions):
            if t.name in by_name:
                raise FormatError("duplicate_transition", f"transition name {t.name!r} reused", f"transitions[{i}].name")
            for q in (*t.pre, *t.post):
                if q not in known:
                    raise FormatError(
                        "unknown_state", f"transition {t.name!r} references undeclared state {q!r}", f"transitions[{i}]"
                    )
            if t.pre in by_pre:
                raise FormatError(
                    "nondeterministic",
                    f"transitions {by_pre[t.pre].name!r} and {t.name!r} share the pre-pair {t.pre}; "
                    "at most one transition per unordered pre-pair is supported",
                    f"transitions[{i}].pre",
                )
            by_name[t.name] = t
            by_pre[t.pre] = t
        initial = set(self.initial_states)
        for q in self.predicate.coefficients:
            if q not in initial:
                raise FormatError(
                    "predicate_not_initial", f"predicate coefficient on non-initial state {q!r}", "predicate.coeffs"
                )
        object.__setattr__(self, "_by_name", by_name)
        object.__setattr__(self, "_by_pre", by_pre)

    # -- lookups -----------------------------------------------------------

    def transition(self, name: str) -> Transition:
        try:
            return self._by_name[name]
        except KeyError:
            raise DomainError("unknown_transition", f"no transition named {name!r}") from None

    def transition_for_pair(self, pair: tuple[str, str]) -> Transition | None:
        return self._by_pre.get(tuple(sorted(pair)))

    def state_index(self, state: str) -> int:
        return self.states.index(state)

    def _check_owned(self, t: Transition) -> None:
        if self._by_name.get(t.name) != t:
            raise DomainError("unknown_transition", f"transition {t.name!r} does not belong to this protocol")

    # -- semantics ---------------------------------------------------------

    def enabled(self, config: Configuration, t: Transition) -> bool:
        """True iff ``config`` holds an agent pair matching the pre of ``t``."""
        self._check_owned(t)
        q1, q2 = t.pre
        if q1 == q2:
            return config.count(q1) >= 2
        return config.count(q1) >= 1 and config.count(q2) >= 1

    def apply(self, config: Configuration, t: Transition) -> Configuration:
        if not self.enabled(config, t):
            raise PreconditionError("transition_disabled", f"transition {t.name!r} is not enabled at {config!r}")
        return config.shift(t.displacement)

    def successors(self, config: Configuration) -> list[tuple[Transition, Configuration]]:
        """Enabled transitions with their results, in declaration order."""
        out = []
        for t in self.transitions:
            if self.enabled(config, t):
                out.append((t, config.shift(t.displacement)))
        return out

    def consensus(self, config: Configuration) -> int | None:
        """The common output of all occupied states, or None if outputs mix."""
        if config.size == 0:
            raise DomainError("empty_configuration", "consensus is undefined for the empty configuration")
        values = {self.output[q] for q in config.states()}
        if len(values) == 1:
            return values.pop()
        return None

    def eval_predicate(self, config: Configuration) -> int:
        initial = set(self.initial_states)
        for q in config.states():
            if q not in initial:
                raise DomainError("not_initial", f"state {q!r} is occupied but not an initial state")
        value = sum(coeff * config.count(q) for q, coeff in self.predicate.coefficients.items())
        return 1 if self.predicate.holds(value) else 0

    def sample_interaction(self, config: Configuration, rng: random.Random) -> Interaction:
        """Draw an ordered agent pair uniformly among the n·(n−1) pairs.

        A pair with no matching transition yields a Null interaction; the
        caller counts it as a step that leaves the configuration unchanged.
        """
        n = config.size
        if n < 2:
            raise DomainError("too_few_agents", "sampling needs at least two agents")
        first = self._pick_agent(config, rng.randrange(n), skip=None)
        second = self._pick_agent(config, rng.randrange(n - 1), skip=first)
        return Interaction(self.transition_for_pair((first, second)), (first, second))

    def _pick_agent(self, config: Configuration, index: int, skip: str | None) -> str:
        for state in self.states:
            c = config.count(state)
            if state == skip:
                c -= 1
            if index < c:
                return state
            index -= c
        raise AssertionError("agent index out of range")

    # -- enumeration helpers -----------------------------------------------

    def initial_configurations(self, size: int) -> Iterator[Configuration]:
        """All initial configurations of exactly ``size`` agents, ordered as
        multiset words over initial-state declaration order (all agents in the
        first state come first)."""
        for vector in _compositions(size, len(self.initial_states)):
            yield Configuration(dict(zip(self.initial_states, vector)))

    def configurations(self, size: int) -> Iterator[Configuration]:
        """All configurations of exactly ``size`` agents over all states,
        ordered like initial_configurations."""
        for vector in _compositions(size, len(self.states)):
            yield Configuration(dict(zip(self.states, vector)))


def _compositions(total: int, slots: int) -> Iterator[tuple[int, ...]]:
    """Count vectors summing to ``total`` such that the corresponding sorted
    multiset words are in ascending lexicographic order: earlier slots carry
    as many agents as possible first."""
    if slots == 0:
        if total == 0:
            yield ()
        return
    if slots == 1:
        yield (total,)
        return
    for head in range(total, -1, -1):
        for rest in _compositions(total - head, slots - 1):
            yield (head, *rest)
