from __future__ import annotations

import pytest

from stagecraft.protocol_io import ProtocolDocument, load_examples
from stagecraft.stages import Stage, StageGraph
from stagecraft.synthesis import SynthesisResult, synthesize


@pytest.fixture(scope="session")
def majority_doc() -> ProtocolDocument:
    docs = {d.name: d for d in load_examples()}
    return docs["Majority Voting"]


@pytest.fixture(scope="session")
def broken_doc() -> ProtocolDocument:
    docs = {d.name: d for d in load_examples()}
    return docs["Majority Voting (broken)"]


@pytest.fixture(scope="session")
def majority(majority_doc):
    return majority_doc.protocol


@pytest.fixture(scope="session")
def broken(broken_doc):
    return broken_doc.protocol


@pytest.fixture(scope="session")
def verified(majority) -> SynthesisResult:
    result = synthesize(majority)
    assert result.outcome == "verified"
    return result


@pytest.fixture(scope="session")
def broken_result(broken) -> SynthesisResult:
    result = synthesize(broken)
    assert result.outcome == "refuted"
    return result


def chain_of(graph: StageGraph) -> list[Stage]:
    """Root-to-leaf stages of a chain-shaped graph."""
    stages = [graph.root]
    while True:
        children = graph.children_of(stages[-1].id)
        if not children:
            return stages
        assert len(children) == 1
        stages.append(children[0])
