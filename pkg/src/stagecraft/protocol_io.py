"""Bit-exact JSON formats for protocols and stage graphs.

Serialization is canonical: sorted object keys, compact separators, UTF-8,
newline-terminated.  Two semantically equal documents therefore serialize to
identical bytes, which the API layer exploits as a cache key for verification
results.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from typing import Any

from .errors import FormatError, StagecraftError
from .linear import ConstraintSet, LinearConstraint
from .model import Configuration, Predicate, Protocol, Transition
from .speed import SpeedClass
from .stages import Certificate, Stage, StageGraph

FORMAT_VERSION = 1

PREDICATE_OPS = (">=", ">", "=")


@dataclass(frozen=True)
class ProtocolDocument:
    """A named protocol as stored on disk and exchanged over the API."""

    name: str
    protocol: Protocol
    description: str | None = None


def parse_protocol(data: bytes | str | dict) -> ProtocolDocument:
    """Parse and fully validate a protocol document.

    Accepts raw JSON bytes/text or an already-decoded object.  All failures
    raise FormatError with a machine code and a JSON-path-like location.
    """
    raw = _decode(data)
    if not isinstance(raw, dict):
        raise FormatError("bad_type", "protocol document must be a JSON object", "$")
    version = raw.get("format_version", FORMAT_VERSION)
    if version != FORMAT_VERSION:
        raise FormatError(
            "unsupported_version", f"unsupported format_version {version!r}", "format_version"
        )
    name = _expect(raw, "name", str)
    description = raw.get("description")
    if description is not None and not isinstance(description, str):
        raise FormatError("bad_type", "description must be a string", "description")
    states = _string_list(raw, "states")
    initial = _string_list(raw, "initial")
    output_raw = _expect(raw, "output", dict)
    output: dict[str, int] = {}
    for q, b in output_raw.items():
        if not isinstance(b, int) or isinstance(b, bool) or b not in (0, 1):
            raise FormatError("bad_output", f"output of {q!r} must be 0 or 1", f"output.{q}")
        output[q] = b
    transitions = []
    raw_transitions = _expect(raw, "transitions", list)
    for i, item in enumerate(raw_transitions):
        where = f"transitions[{i}]"
        if not isinstance(item, dict):
            raise FormatError("bad_type", "transition must be an object", where)
        t_name = item.get("name")
        if not isinstance(t_name, str) or not t_name:
            raise FormatError("bad_type", "transition name must be a string", f"{where}.name")
        pre = _state_pair(item, "pre", where)
        post = _state_pair(item, "post", where)
        try:
            transitions.append(Transition(t_name, pre, post))
        except StagecraftError as exc:
            raise FormatError(exc.code, exc.message, where) from exc
    predicate = _parse_predicate(_expect(raw, "predicate", dict))
    try:
        protocol = Protocol(
            states=tuple(states),
            initial_states=tuple(initial),
            transitions=tuple(transitions),
            output=output,
            predicate=predicate,
        )
    except StagecraftError as exc:
        raise FormatError(exc.code, exc.message, exc.location or "$") from exc
    return ProtocolDocument(name, protocol, description)


def _decode(data: bytes | str | dict | list) -> Any:
    if isinstance(data, (dict, list)):
        return data
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        return json.loads(data)
    except json.JSONDecodeError as exc:
        raise FormatError(
            "syntax", f"invalid JSON: {exc.msg}", f"line {exc.lineno} column {exc.colno}"
        ) from exc


def _expect(raw: dict, key: str, kind: type) -> Any:
    if key not in raw:
        raise FormatError("missing_field", f"missing required field {key!r}", key)
    value = raw[key]
    if not isinstance(value, kind):
        raise FormatError("bad_type", f"field {key!r} must be {kind.__name__}", key)
    return value


def _string_list(raw: dict, key: str) -> list[str]:
    value = _expect(raw, key, list)
    for i, item in enumerate(value):
        if not isinstance(item, str):
            raise FormatError("bad_type", f"{key} entries must be strings", f"{key}[{i}]")
    return value


def _state_pair(item: dict, key: str, where: str) -> tuple[str, str]:
    value = item.get(key)
    if (
        not isinstance(value, list)
        or len(value) != 2
        or not all(isinstance(q, str) for q in value)
    ):
        raise FormatError("bad_pair", f"{key} must be a pair of states", f"{where}.{key}")
    return (value[0], value[1])


def _parse_predicate(raw: dict) -> Predicate:
    coeffs = raw.get("coeffs")
    if not isinstance(coeffs, dict) or not all(
        isinstance(v, int) and not isinstance(v, bool) for v in coeffs.values()
    ):
        raise FormatError("bad_predicate", "predicate coeffs must map states to integers",
                          "predicate.coeffs")
    op = raw.get("op")
    if op not in PREDICATE_OPS:
        raise FormatError(
            "unsupported_predicate",
            f"predicate op must be one of {PREDICATE_OPS}, got {op!r}",
            "predicate.op",
        )
    const = raw.get("const")
    if not isinstance(const, int) or isinstance(const, bool):
        raise FormatError("bad_predicate", "predicate const must be an integer", "predicate.const")
    return Predicate(dict(coeffs), op, const)


def protocol_to_object(doc: ProtocolDocument) -> dict:
    obj: dict[str, Any] = {
        "format_version": FORMAT_VERSION,
        "name": doc.name,
        "states": list(doc.protocol.states),
        "initial": list(doc.protocol.initial_states),
        "output": {q: doc.protocol.output[q] for q in doc.protocol.states},
        "transitions": [
            {"name": t.name, "pre": list(t.pre), "post": list(t.post)}
            for t in doc.protocol.transitions
        ],
        "predicate": {
            "coeffs": dict(sorted(doc.protocol.predicate.coefficients.items())),
            "op": doc.protocol.predicate.comparison,
            "const": doc.protocol.predicate.constant,
        },
    }
    if doc.description is not None:
        obj["description"] = doc.description
    return obj


def serialize_protocol(doc: ProtocolDocument) -> bytes:
    """Canonical bytes of the document; parse ∘ serialize is the identity on
    canonical form and serialize ∘ parse ∘ serialize = serialize."""
    return _canonical_bytes(protocol_to_object(doc))


def _canonical_bytes(obj: dict) -> bytes:
    return (json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n").encode("utf-8")


def constraint_to_object(c: LinearConstraint) -> dict:
    return c.to_json()


def parse_constraint(raw: dict, where: str) -> LinearConstraint:
    coeffs = raw.get("coeffs")
    if not isinstance(coeffs, dict) or not all(
        isinstance(v, int) and not isinstance(v, bool) for v in coeffs.values()
    ):
        raise FormatError("bad_constraint", "constraint coeffs must map states to integers",
                          f"{where}.coeffs")
    op = raw.get("op")
    const = raw.get("const")
    if not isinstance(const, int) or isinstance(const, bool):
        raise FormatError("bad_constraint", "constraint const must be an integer", f"{where}.const")
    try:
        return LinearConstraint(coeffs, op, const)
    except StagecraftError as exc:
        raise FormatError(exc.code, exc.message, where) from exc


def stage_graph_to_object(graph: StageGraph) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "output_value": graph.output_value,
        "stages": [
            {
                "id": s.id,
                "constraints": [constraint_to_object(c) for c in s.constraint.constraints],
                "certificate": None if s.certificate is None else s.certificate.to_json(),
                "dead": list(s.dead),
                "eventually_dead": list(s.eventually_dead),
                "speed": None if s.speed is None else s.speed.value,
                "witness": None if s.witness is None else s.witness.to_dict(),
                "incomplete": s.incomplete,
            }
            for s in graph.stages
        ],
        "edges": [[a, b] for a, b in graph.edges],
    }


def serialize_stage_graph(graph: StageGraph) -> bytes:
    return _canonical_bytes(stage_graph_to_object(graph))


def parse_stage_graph(data: bytes | str | dict, protocol: Protocol) -> StageGraph:
    """Parse a stage-graph document against its protocol (constraints and
    certificates are interpreted over the protocol's states)."""
    raw = _decode(data)
    if not isinstance(raw, dict):
        raise FormatError("bad_type", "stage graph document must be a JSON object", "$")
    version = raw.get("format_version", FORMAT_VERSION)
    if version != FORMAT_VERSION:
        raise FormatError(
            "unsupported_version", f"unsupported format_version {version!r}", "format_version"
        )
    output_value = raw.get("output_value")
    if output_value not in (0, 1) or isinstance(output_value, bool):
        raise FormatError("bad_output_value", "output_value must be 0 or 1", "output_value")
    stages = []
    for i, item in enumerate(_expect(raw, "stages", list)):
        where = f"stages[{i}]"
        if not isinstance(item, dict):
            raise FormatError("bad_type", "stage must be an object", where)
        sid = item.get("id")
        if not isinstance(sid, str) or not sid:
            raise FormatError("bad_type", "stage id must be a string", f"{where}.id")
        constraints = [
            parse_constraint(c, f"{where}.constraints[{j}]")
            for j, c in enumerate(item.get("constraints", []))
        ]
        certificate = None
        if item.get("certificate") is not None:
            cert_raw = item["certificate"]
            weights = cert_raw.get("weights") if isinstance(cert_raw, dict) else None
            if not isinstance(weights, dict):
                raise FormatError(
                    "bad_certificate", "certificate must carry a weights object",
                    f"{where}.certificate",
                )
            try:
                certificate = Certificate(weights)
            except StagecraftError as exc:
                raise FormatError(exc.code, exc.message, f"{where}.certificate") from exc
        speed = None
        if item.get("speed") is not None:
            try:
                speed = SpeedClass(item["speed"])
            except ValueError as exc:
                raise FormatError(
                    "bad_speed", f"unknown speed class {item['speed']!r}", f"{where}.speed"
                ) from exc
        witness = None
        if item.get("witness") is not None:
            try:
                witness = Configuration(item["witness"])
            except StagecraftError as exc:
                raise FormatError(exc.code, exc.message, f"{where}.witness") from exc
        try:
            stages.append(
                Stage(
                    id=sid,
                    constraint=ConstraintSet(protocol.states, constraints),
                    certificate=certificate,
                    dead=tuple(item.get("dead", [])),
                    eventually_dead=tuple(item.get("eventually_dead", [])),
                    speed=speed,
                    witness=witness,
                    incomplete=bool(item.get("incomplete", False)),
                )
            )
        except StagecraftError as exc:
            raise FormatError(exc.code, exc.message, where) from exc
    edges = []
    for i, pair in enumerate(raw.get("edges", [])):
        if not isinstance(pair, list) or len(pair) != 2:
            raise FormatError("bad_edge", "edge must be a [parent, child] pair", f"edges[{i}]")
        edges.append((pair[0], pair[1]))
    try:
        return StageGraph(output_value, tuple(stages), tuple(edges))
    except StagecraftError as exc:
        raise FormatError(exc.code, exc.message, "$") from exc


def load_examples() -> list[ProtocolDocument]:
    """The bundled protocol corpus, in filename order."""
    out = []
    root = resources.files("stagecraft").joinpath("examples")
    for entry in sorted(root.iterdir(), key=lambda p: p.name):
        if entry.name.endswith(".json"):
            out.append(parse_protocol(entry.read_bytes()))
    return out
