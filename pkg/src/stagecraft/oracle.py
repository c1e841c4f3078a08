"""Brute-force ground truth at fixed population sizes.

Reachability graphs, bottom strongly connected components, and probability-1
stabilization verdicts.  Under the uniform pair scheduler every edge of the
finite reachability graph has strictly positive probability, so a run from C
reaches a set with probability 1 exactly when every bottom SCC reachable from
C intersects it; stabilization to consensus b holds with probability 1 exactly
when every reachable bottom SCC consists solely of consensus-b configurations.
That reduction from probability to graph structure is the correctness basis of
this whole module.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import BudgetExceededError
from .model import Configuration, Protocol, Transition

DEFAULT_NODE_BUDGET = 10**6


def node_budget(explicit: int | None = None) -> int:
    if explicit is not None:
        return explicit
    return int(os.environ.get("STAGECRAFT_BUDGET_NODES", DEFAULT_NODE_BUDGET))


@dataclass(frozen=True)
class ReachGraph:
    """Full reachable fragment from the root configurations.

    Nodes are in BFS discovery order (roots first); per-node successor lists
    follow transition declaration order, so the structure is deterministic.
    """

    roots: tuple[Configuration, ...]
    nodes: tuple[Configuration, ...]
    successors: dict[Configuration, tuple[tuple[Transition, Configuration], ...]]

    def edges(self) -> list[tuple[Configuration, Transition, Configuration]]:
        return [(c, t, d) for c in self.nodes for t, d in self.successors[c]]


def explore(
    protocol: Protocol,
    roots: Configuration | Iterable[Configuration],
    budget: int | None = None,
) -> ReachGraph:
    """BFS closure of the root set under the successor relation."""
    if isinstance(roots, Configuration):
        roots = (roots,)
    root_tuple = tuple(roots)
    limit = node_budget(budget)
    seen: dict[Configuration, None] = {}
    frontier: list[Configuration] = []
    for c in root_tuple:
        if c not in seen:
            seen[c] = None
            frontier.append(c)
    successors: dict[Configuration, tuple[tuple[Transition, Configuration], ...]] = {}
    index = 0
    while index < len(frontier):
        current = frontier[index]
        index += 1
        outs = tuple(protocol.successors(current))
        successors[current] = outs
        for _, nxt in outs:
            if nxt not in seen:
                if len(seen) >= limit:
                    raise BudgetExceededError(
                        "node_budget_exceeded",
                        f"reachability exploration exceeded {limit} nodes",
                        size_reached=len(seen),
                    )
                seen[nxt] = None
                frontier.append(nxt)
    return ReachGraph(root_tuple, tuple(frontier), successors)


def bottom_sccs(graph: ReachGraph) -> list[frozenset[Configuration]]:
    """Strongly connected components with no edge leaving them.

    Iterative Tarjan; output ordered by smallest member discovery index so
    repeated calls agree exactly.
    """
    order = {c: i for i, c in enumerate(graph.nodes)}
    index_of: dict[Configuration, int] = {}
    low: dict[Configuration, int] = {}
    on_stack: set[Configuration] = set()
    stack: list[Configuration] = []
    comp_of: dict[Configuration, int] = {}
    comps: list[list[Configuration]] = []
    counter = 0

    for start in graph.nodes:
        if start in index_of:
            continue
        work: list[tuple[Configuration, int]] = [(start, 0)]
        while work:
            node, child_idx = work.pop()
            if child_idx == 0:
                index_of[node] = low[node] = counter
                counter += 1
                stack.append(node)
                on_stack.add(node)
            outs = graph.successors[node]
            advanced = False
            for i in range(child_idx, len(outs)):
                nxt = outs[i][1]
                if nxt not in index_of:
                    work.append((node, i + 1))
                    work.append((nxt, 0))
                    advanced = True
                    break
                if nxt in on_stack:
                    low[node] = min(low[node], index_of[nxt])
            if advanced:
                continue
            if low[node] == index_of[node]:
                comp: list[Configuration] = []
                while True:
                    member = stack.pop()
                    on_stack.discard(member)
                    comp_of[member] = len(comps)
                    comp.append(member)
                    if member is node or member == node:
                        break
                comps.append(comp)
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])

    bottoms = []
    for ci, comp in enumerate(comps):
        if all(comp_of[d] == ci for c in comp for _, d in graph.successors[c]):
            bottoms.append(frozenset(comp))
    bottoms.sort(key=lambda comp: min(order[c] for c in comp))
    return bottoms


def stabilizes(
    protocol: Protocol, start: Configuration, budget: int | None = None
) -> int | None:
    """The consensus the protocol stabilizes to with probability 1 from
    ``start``, or None when no single consensus is almost-surely reached."""
    graph = explore(protocol, start, budget)
    verdict: int | None = None
    for comp in bottom_sccs(graph):
        values = {protocol.consensus(c) for c in comp}
        if len(values) != 1 or None in values:
            return None
        (b,) = values
        if verdict is None:
            verdict = b
        elif verdict != b:
            return None
    return verdict


@dataclass(frozen=True)
class Verdict:
    """Outcome of a bounded correctness check.

    ``run`` is present exactly on failure: pairs (configuration, transition
    fired next), the final pair carrying None, ending inside a bottom SCC that
    violates the expected consensus.
    """

    ok: bool
    checked_up_to: int
    run: tuple[tuple[Configuration, Transition | None], ...] | None = None

    @property
    def counterexample(self) -> Configuration | None:
        return self.run[0][0] if self.run else None


def verify_bounded(protocol: Protocol, n_max: int, budget: int | None = None) -> Verdict:
    """Check stabilizes(C0) = φ(C0) for every initial C0 with size ≤ n_max.

    The first violating initial configuration in size-then-lexicographic order
    is reported with a shortest run into a bad bottom SCC.
    """
    for size in range(1, n_max + 1):
        for c0 in protocol.initial_configurations(size):
            expected = protocol.eval_predicate(c0)
            try:
                graph = explore(protocol, c0, budget)
            except BudgetExceededError as exc:
                raise BudgetExceededError(
                    exc.code, exc.message, size_reached=size - 1
                ) from exc
            bad_nodes: set[Configuration] = set()
            for comp in bottom_sccs(graph):
                if any(protocol.consensus(c) != expected for c in comp):
                    bad_nodes.update(comp)
            if bad_nodes:
                return Verdict(False, size, _shortest_run(graph, c0, bad_nodes))
    return Verdict(True, n_max)


def _shortest_run(
    graph: ReachGraph, start: Configuration, targets: set[Configuration]
) -> tuple[tuple[Configuration, Transition | None], ...]:
    parent: dict[Configuration, tuple[Configuration, Transition] | None] = {start: None}
    queue = [start]
    goal = None
    index = 0
    while index < len(queue):
        node = queue[index]
        index += 1
        if node in targets:
            goal = node
            break
        for t, nxt in graph.successors[node]:
            if nxt not in parent:
                parent[nxt] = (node, t)
                queue.append(nxt)
    assert goal is not None, "targets are reachable by construction"
    path: list[tuple[Configuration, Transition | None]] = [(goal, None)]
    cursor = goal
    while parent[cursor] is not None:
        prev, t = parent[cursor]
        path.append((prev, t))
        cursor = prev
    path.reverse()
    return tuple(path)


def self_check_count(protocol: Protocol, start: Configuration, budget: int | None = None) -> int:
    """Independent DFS recount of the reachable set, used to cross-check
    explore's BFS in tests."""
    limit = node_budget(budget)
    seen = {start}
    stack = [start]
    while stack:
        node = stack.pop()
        for _, nxt in protocol.successors(node):
            if nxt not in seen:
                if len(seen) >= limit:
                    raise BudgetExceededError(
                        "node_budget_exceeded",
                        f"reachability exploration exceeded {limit} nodes",
                        size_reached=len(seen),
                    )
                seen.add(nxt)
                stack.append(nxt)
    return len(seen)
