"""Steered simulation sessions over verified stage graphs."""

from __future__ import annotations

import pytest

from conftest import chain_of
from stagecraft.errors import DomainError, PreconditionError
from stagecraft.linear import LinearConstraint
from stagecraft.model import Configuration
from stagecraft.session import (
    ProgressOutcome,
    StepCommand,
    new_session,
    progress_to_child,
    seek,
    step,
)
from stagecraft.stages import Certificate, Stage, StageGraph, locate


def config(**counts: int) -> Configuration:
    return Configuration(counts)


@pytest.fixture()
def graphs(verified):
    return verified.graphs


# -- StepCommand ---------------------------------------------------------------


def test_step_command_validation():
    with pytest.raises(DomainError) as err:
        StepCommand("fly")
    assert err.value.code == "bad_mode"
    with pytest.raises(DomainError) as err:
        StepCommand("manual")
    assert err.value.code == "bad_pair"
    with pytest.raises(DomainError) as err:
        StepCommand("random", repeat=0)
    assert err.value.code == "bad_repeat"
    StepCommand("manual", pair=("Y", "N"), repeat=3)


# -- Session construction --------------------------------------------------------


def test_new_session_places_start(majority, graphs, verified):
    middle0 = chain_of(verified.graph_for(0))[1]
    s = new_session(majority, graphs, config(N=1, n=4, y=2), seed=1)
    assert s.current == config(N=1, n=4, y=2)
    assert s.current_placements() == (middle0.id, None)
    assert s.run == ["c0"]
    assert s.cursor == 0
    assert s.warnings == []


def test_new_session_tie_goes_to_output1_root(majority, graphs, verified):
    root1 = chain_of(verified.graph_for(1))[0]
    s = new_session(majority, graphs, config(Y=1, N=1), seed=1)
    assert s.current_placements() == (None, root1.id)


def test_new_session_warns_outside_all_graphs(majority, graphs):
    s = new_session(majority, graphs, config(n=2), seed=1)
    assert s.current_placements() == (None, None)
    assert len(s.warnings) == 1


def test_new_session_rejects_empty_start(majority, graphs):
    with pytest.raises(PreconditionError) as err:
        new_session(majority, graphs, Configuration(), seed=1)
    assert err.value.code == "empty_configuration"


def test_new_session_generates_seed_when_missing(majority, graphs):
    s = new_session(majority, graphs, config(Y=1, N=1))
    assert 0 <= s.seed < 2**32


# -- Manual stepping --------------------------------------------------------------


def test_manual_step_applies_matching_transition(majority, graphs, verified):
    middle1 = chain_of(verified.graph_for(1))[1]
    s = new_session(majority, graphs, config(Y=1, N=1), seed=1)
    step(s, StepCommand("manual", pair=("Y", "N")))
    assert s.current == config(y=1, n=1)
    assert s.current_placements() == (None, middle1.id)
    assert s.run == ["c0", "c1"]
    assert s.edges == [("c0", "a", "c1")]


def test_manual_null_step_keeps_configuration(majority, graphs):
    s = new_session(majority, graphs, config(y=2), seed=1)
    step(s, StepCommand("manual", pair=("y", "y")))
    assert s.current == config(y=2)
    assert s.run == ["c0", "c0"]
    assert s.edges == []
    assert s.cursor == 1


def test_manual_step_validates_pair(majority, graphs):
    s = new_session(majority, graphs, config(y=2), seed=1)
    with pytest.raises(PreconditionError) as err:
        step(s, StepCommand("manual", pair=("Z", "y")))
    assert err.value.code == "unknown_state"
    with pytest.raises(PreconditionError) as err:
        step(s, StepCommand("manual", pair=("y", "n")))
    assert err.value.code == "pair_not_present"
    with pytest.raises(PreconditionError) as err:
        step(s, StepCommand("manual", pair=("n", "n")))
    assert err.value.code == "pair_not_present"


def test_manual_same_state_pair_needs_two_agents(majority, graphs):
    s = new_session(majority, graphs, config(Y=1, n=1), seed=1)
    with pytest.raises(PreconditionError) as err:
        step(s, StepCommand("manual", pair=("Y", "Y")))
    assert err.value.code == "pair_not_present"
    step(s, StepCommand("manual", pair=("Y", "n")))
    assert s.current == config(Y=1, y=1)


# -- Random stepping ---------------------------------------------------------------


def test_random_step_in_absorbing_configuration(majority, graphs):
    s = new_session(majority, graphs, config(y=2), seed=7)
    step(s, StepCommand("random", repeat=4))
    assert s.current == config(y=2)
    assert s.run == ["c0"] * 5
    assert s.edges == []


def test_random_runs_are_seed_deterministic(majority, graphs):
    a = new_session(majority, graphs, config(Y=3, N=4), seed=42)
    b = new_session(majority, graphs, config(Y=3, N=4), seed=42)
    step(a, StepCommand("random", repeat=30))
    step(b, StepCommand("random", repeat=30))
    assert a.to_json() == b.to_json()


def test_placements_always_match_locate(majority, graphs):
    s = new_session(majority, graphs, config(Y=3, N=4), seed=3)
    step(s, StepCommand("random", repeat=40))
    for nid, c in s.nodes.items():
        assert s.placements[nid] == tuple(locate(c, g) for g in graphs)


def test_random_step_preserves_population(majority, graphs):
    s = new_session(majority, graphs, config(Y=2, N=3), seed=8)
    step(s, StepCommand("random", repeat=25))
    assert all(c.size == 5 for c in s.nodes.values())


# -- Progress stepping ---------------------------------------------------------------


def test_progress_applies_certificate_minimizing_transition(majority, graphs, verified):
    middle0 = chain_of(verified.graph_for(0))[1]
    s = new_session(majority, graphs, config(N=1, n=4, y=2), seed=1)
    f = middle0.certificate
    assert f.value(s.current) == 2
    step(s, StepCommand("progress"))
    assert s.current == config(N=1, n=5, y=1)
    assert f.value(s.current) == 1
    assert s.edges == [("c0", "c", "c1")]


def test_progress_without_certified_stage(majority, graphs):
    s = new_session(majority, graphs, config(y=2), seed=1)
    with pytest.raises(DomainError) as err:
        step(s, StepCommand("progress"))
    assert err.value.code == "no_certificate"


def test_progress_outside_all_graphs(majority, graphs):
    s = new_session(majority, graphs, config(n=2), seed=1)
    with pytest.raises(DomainError) as err:
        step(s, StepCommand("progress"))
    assert err.value.code == "no_certificate"


def test_progress_anomaly_when_certificate_grows(majority):
    # A deliberately wrong certificate: counting n in the output-0 root makes
    # the only enabled move from {Y, 2N} an increase.
    bogus = StageGraph(
        0,
        (
            Stage(
                "R",
                chainless_root(majority),
                certificate=Certificate({"n": 1}),
            ),
        ),
        (),
    )
    s = new_session(majority, (bogus,), config(Y=1, N=2), seed=1)
    with pytest.raises(DomainError) as err:
        step(s, StepCommand("progress"))
    assert err.value.code == "certificate_anomaly"


def test_progress_anomaly_when_stuck(majority):
    from stagecraft.linear import ConstraintSet

    everything = StageGraph(
        0,
        (
            Stage(
                "R",
                ConstraintSet(majority.states,
                              [LinearConstraint({q: 1 for q in majority.states}, ">=", 1)]),
                certificate=Certificate({"n": 1}),
            ),
        ),
        (),
    )
    s = new_session(majority, (everything,), config(n=2), seed=1)
    with pytest.raises(DomainError) as err:
        step(s, StepCommand("progress"))
    assert err.value.code == "certificate_anomaly"


def chainless_root(majority):
    from stagecraft.linear import ConstraintSet

    return ConstraintSet(
        majority.states,
        [
            LinearConstraint({q: 1 for q in majority.states}, ">=", 1),
            LinearConstraint({"Y": 1, "N": -1}, "<=", -1),
        ],
    )


# -- Navigation ------------------------------------------------------------------------


def test_seek_bounds(majority, graphs):
    s = new_session(majority, graphs, config(Y=1, N=1), seed=1)
    with pytest.raises(DomainError) as err:
        seek(s, 1)
    assert err.value.code == "index_out_of_range"
    with pytest.raises(DomainError):
        seek(s, -1)
    seek(s, 0)
    assert s.cursor == 0


def test_seek_then_step_truncates_run_keeps_chain(majority, graphs):
    s = new_session(majority, graphs, config(Y=2, N=2), seed=1)
    step(s, StepCommand("manual", pair=("Y", "N")))
    step(s, StepCommand("manual", pair=("Y", "n")))
    assert s.run == ["c0", "c1", "c2"]
    assert s.nodes["c2"] == config(Y=1, N=1, y=2)

    seek(s, 1)
    step(s, StepCommand("manual", pair=("N", "y")))
    assert s.run == ["c0", "c1", "c3"]
    assert s.cursor == 2
    assert s.current == config(Y=1, N=1, n=2)
    # The chain keeps the abandoned branch.
    assert s.nodes["c2"] == config(Y=1, N=1, y=2)
    assert s.edges == [
        ("c0", "a", "c1"),
        ("c1", "b", "c2"),
        ("c1", "c", "c3"),
    ]


def test_revisiting_a_configuration_reuses_its_node(majority, graphs):
    s = new_session(majority, graphs, config(Y=1, N=1, y=1, n=1), seed=1)
    step(s, StepCommand("manual", pair=("Y", "n")))    # b: -> {Y, N, 2y}
    step(s, StepCommand("manual", pair=("N", "y")))    # c: back to start
    assert s.run == ["c0", "c1", "c0"]
    assert len(s.nodes) == 2
    step(s, StepCommand("manual", pair=("Y", "n")))
    assert s.run == ["c0", "c1", "c0", "c1"]
    assert s.edges == [("c0", "b", "c1"), ("c1", "c", "c0")]


# -- progress_to_child --------------------------------------------------------------------


def test_progress_to_child_reaches_terminal(majority, graphs, verified):
    _, middle, terminal = chain_of(verified.graph_for(0))
    s = new_session(majority, graphs, config(N=1, n=4, y=2), seed=1)
    out = progress_to_child(s, max_steps=10)
    assert out == ProgressOutcome(2, terminal.id, True)
    assert s.current == config(N=1, n=6)


def test_progress_to_child_zero_steps_when_terminal(majority, graphs, verified):
    terminal1 = chain_of(verified.graph_for(1))[-1]
    s = new_session(majority, graphs, config(y=2), seed=1)
    out = progress_to_child(s, max_steps=5)
    assert out == ProgressOutcome(0, terminal1.id, True)
    assert s.run == ["c0"]


def test_progress_to_child_without_placement(majority, graphs):
    s = new_session(majority, graphs, config(n=2), seed=1)
    with pytest.raises(DomainError) as err:
        progress_to_child(s, max_steps=5)
    assert err.value.code == "no_placement"


def test_progress_to_child_respects_step_budget(majority, graphs):
    s = new_session(majority, graphs, config(N=1, n=3, y=5), seed=1)
    out = progress_to_child(s, max_steps=2)
    assert out.steps == 2
    assert not out.reached_child


def test_progress_to_child_bounded_by_population(majority, graphs, verified):
    # Certificate-guided runs from the output-0 middle stage reach the
    # terminal stage within one step per agent.
    root, middle, terminal = chain_of(verified.graph_for(0))
    for size in range(2, 8):
        for c in majority.configurations(size):
            if not middle.constraint.satisfies(c):
                continue
            if terminal.constraint.satisfies(c):
                continue
            s = new_session(majority, graphs, c, seed=5)
            out = progress_to_child(s, max_steps=c.size)
            assert out.reached_child, c
            assert out.steps <= c.size


def test_to_json_shape(majority, graphs):
    s = new_session(majority, graphs, config(Y=1, N=1), seed=9)
    step(s, StepCommand("manual", pair=("Y", "N")))
    snap = s.to_json()
    assert snap["seed"] == 9
    assert [n["id"] for n in snap["nodes"]] == ["c0", "c1"]
    assert snap["nodes"][0]["counts"] == {"Y": 1, "N": 1}
    assert snap["edges"] == [{"from": "c0", "transition": "a", "to": "c1"}]
    assert snap["run"] == ["c0", "c1"]
    assert snap["cursor"] == 1
    assert snap["warnings"] == []
