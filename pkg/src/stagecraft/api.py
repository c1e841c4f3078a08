"""HTTP service exposing protocols, verification, stage details, and live
simulation sessions.

Handlers are thin adapters over the engine modules: a handler parses the
request into engine inputs, calls one engine operation, and shapes the result
into a response model.  Verification responses are cached by the canonical
bytes of the protocol document, so equal protocols get byte-identical
stage-graph documents back.
"""

from __future__ import annotations

import json
import re
import threading
import time
from pathlib import Path
from typing import Any

from fastapi import Body, FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import AliasChoices, BaseModel, Field
from starlette.exceptions import HTTPException as StarletteHTTPException

from .errors import (
    BudgetExceededError,
    DomainError,
    FormatError,
    PreconditionError,
    StagecraftError,
    StructuralError,
)
from .model import Configuration, Protocol
from .protocol_io import (
    ProtocolDocument,
    load_examples,
    parse_protocol,
    protocol_to_object,
    serialize_protocol,
    stage_graph_to_object,
)
from .session import Session, StepCommand, new_session, progress_to_child, seek, step
from .stages import StageGraph
from .synthesis import SynthesisResult, synthesize

DEFAULT_VERIFY_SECONDS = 30.0
DEFAULT_PROGRESS_STEPS = 100


# -- response and request models -------------------------------------------------


class ApiErrorModel(BaseModel):
    code: str
    message: str
    location: str | None = None


class TransitionModel(BaseModel):
    name: str
    pre: list[str]
    post: list[str]


class PredicateModel(BaseModel):
    coeffs: dict[str, int]
    op: str
    const: int


class ProtocolInfo(BaseModel):
    id: str
    name: str
    description: str | None = None
    states: list[str]
    initial: list[str]
    output: dict[str, int]
    transitions: list[TransitionModel]
    predicate: PredicateModel


class ProtocolList(BaseModel):
    protocols: list[ProtocolInfo]


class ConstraintModel(BaseModel):
    coeffs: dict[str, int]
    op: str
    const: int


class CertificateModel(BaseModel):
    weights: dict[str, int]


class StageModel(BaseModel):
    id: str
    constraints: list[ConstraintModel]
    certificate: CertificateModel | None = None
    dead: list[str]
    eventually_dead: list[str]
    speed: str | None = None
    witness: dict[str, int] | None = None
    incomplete: bool = False


class StageGraphModel(BaseModel):
    format_version: int
    output_value: int
    stages: list[StageModel]
    edges: list[list[str]]


class ObligationModel(BaseModel):
    kind: str
    subject: str
    status: str
    bound: int | None = None
    witness: dict[str, int] | None = None
    detail: str | None = None


class CheckReportModel(BaseModel):
    output_value: int
    n_cert: int
    verdict: str
    obligations: list[ObligationModel]


class RunStepModel(BaseModel):
    config: dict[str, int]
    transition: str | None = None


class VerifyResponse(BaseModel):
    protocol_id: str
    outcome: str
    graphs: list[StageGraphModel]
    reports: list[CheckReportModel]
    run: list[RunStepModel] | None = None
    reason: str | None = None


class StageGraphsResponse(BaseModel):
    protocol_id: str
    outcome: str
    graphs: list[StageGraphModel]


class StageDetail(BaseModel):
    protocol_id: str
    graph_output_value: int
    id: str
    constraints: list[ConstraintModel]
    certificate: CertificateModel | None = None
    certificate_value: int | None = None
    config: dict[str, int] | None = None
    config_in_stage: bool | None = None
    dead: list[str]
    eventually_dead: list[str]
    speed: str | None = None
    witness: dict[str, int] | None = None
    terminal: bool
    incomplete: bool


class SessionNode(BaseModel):
    id: str
    counts: dict[str, int]
    placements: list[str | None]


class SessionEdge(BaseModel):
    source: str = Field(validation_alias=AliasChoices("source", "from"),
                        serialization_alias="from")
    transition: str
    to: str


class SessionSnapshot(BaseModel):
    id: str
    protocol_id: str
    seed: int
    nodes: list[SessionNode]
    edges: list[SessionEdge]
    run: list[str]
    cursor: int
    run_length: int
    current: SessionNode
    warnings: list[str]


class ProgressResponse(BaseModel):
    steps: int
    reached_stage: str | None = None
    reached_child: bool
    session: SessionSnapshot


class CreateSessionRequest(BaseModel):
    protocol_id: str = Field(validation_alias=AliasChoices("protocol_id", "protocol"))
    config: dict[str, int]
    seed: int | None = None


class StepRequest(BaseModel):
    mode: str
    pair: list[str] | None = None
    repeat: int = 1
    expected_run_length: int


class SeekRequest(BaseModel):
    index: int
    expected_run_length: int


class ProgressRequest(BaseModel):
    max_steps: int = DEFAULT_PROGRESS_STEPS
    expected_run_length: int


class VerifyRequest(BaseModel):
    n_cert: int = Field(default=7, ge=1, le=12)


class ApiException(Exception):
    def __init__(self, status: int, code: str, message: str, location: str | None = None):
        super().__init__(message)
        self.status = status
        self.error = ApiErrorModel(code=code, message=message, location=location)


# -- stores ----------------------------------------------------------------------


def slugify(name: str) -> str:
    slug = re.sub(r"[^a-z0-9]+", "-", name.lower()).strip("-")
    return slug or "protocol"


class ProtocolStore:
    def __init__(self):
        self._lock = threading.Lock()
        self._docs: dict[str, ProtocolDocument] = {}

    def add(self, doc: ProtocolDocument) -> str:
        pid = slugify(doc.name)
        with self._lock:
            existing = self._docs.get(pid)
            if existing is not None and serialize_protocol(existing) != serialize_protocol(doc):
                raise ApiException(
                    409, "protocol_exists",
                    f"a different protocol is already stored under id {pid!r}",
                )
            self._docs = {**self._docs, pid: doc}
        return pid

    def get(self, pid: str) -> ProtocolDocument:
        doc = self._docs.get(pid)
        if doc is None:
            raise ApiException(404, "unknown_protocol", f"no protocol with id {pid!r}")
        return doc

    def items(self) -> list[tuple[str, ProtocolDocument]]:
        return sorted(self._docs.items())


class VerificationService:
    """Runs synthesis with a wall-clock budget and caches results keyed by the
    protocol's canonical bytes plus the certificate bound."""

    def __init__(self, verify_seconds: float, node_budget: int | None):
        self._lock = threading.Lock()
        self._cache: dict[tuple[bytes, int], dict] = {}
        self.verify_seconds = verify_seconds
        self.node_budget = node_budget

    def verify(self, pid: str, doc: ProtocolDocument, n_cert: int) -> dict:
        key = (serialize_protocol(doc), n_cert)
        with self._lock:
            cached = self._cache.get(key)
        if cached is not None:
            return cached
        deadline = time.monotonic() + self.verify_seconds
        result = synthesize(
            doc.protocol, n_cert=n_cert, budget=self.node_budget, deadline=deadline
        )
        payload = _verify_payload(pid, result)
        with self._lock:
            self._cache[key] = payload
        return payload

    def graphs(self, pid: str, doc: ProtocolDocument, n_cert: int = 7) -> list[StageGraph]:
        payload = self.verify(pid, doc, n_cert)
        from .protocol_io import parse_stage_graph

        return [parse_stage_graph(g, doc.protocol) for g in payload["graphs"]]


def _verify_payload(pid: str, result: SynthesisResult) -> dict:
    run = None
    if result.run is not None:
        run = [
            {"config": c.to_dict(), "transition": t.name if t else None}
            for c, t in result.run
        ]
    return VerifyResponse(
        protocol_id=pid,
        outcome=result.outcome,
        graphs=[StageGraphModel(**stage_graph_to_object(g)) for g in result.graphs],
        reports=[CheckReportModel(**r.to_json()) for r in result.reports],
        run=run,
        reason=result.reason,
    ).model_dump(by_alias=True)


class SessionStore:
    def __init__(self):
        self._lock = threading.Lock()
        self._sessions: dict[str, tuple[Session, threading.Lock, str]] = {}
        self._next = 0

    def create(self, session: Session, pid: str) -> str:
        with self._lock:
            sid = f"s{self._next}"
            self._next += 1
            self._sessions[sid] = (session, threading.Lock(), pid)
        return sid

    def get(self, sid: str) -> tuple[Session, threading.Lock, str]:
        entry = self._sessions.get(sid)
        if entry is None:
            raise ApiException(404, "unknown_session", f"no session with id {sid!r}")
        return entry


# -- app factory -------------------------------------------------------------


def create_app(
    protocol_dir: str | Path | None = None,
    verify_seconds: float = DEFAULT_VERIFY_SECONDS,
    node_budget: int | None = None,
) -> FastAPI:
    app = FastAPI(title="stagecraft", version="0.1.0")
    protocols = ProtocolStore()
    verifier = VerificationService(verify_seconds, node_budget)
    sessions = SessionStore()

    for doc in load_examples():
        protocols.add(doc)
    if protocol_dir is not None:
        _load_protocol_dir(protocols, Path(protocol_dir))

    app.state.protocols = protocols
    app.state.verifier = verifier
    app.state.sessions = sessions

    @app.exception_handler(ApiException)
    async def handle_api_exception(_req: Request, exc: ApiException):
        return JSONResponse(status_code=exc.status, content=exc.error.model_dump())

    @app.exception_handler(StagecraftError)
    async def handle_engine_error(_req: Request, exc: StagecraftError):
        return JSONResponse(
            status_code=_status_for(exc),
            content=ApiErrorModel(
                code=exc.code, message=exc.message, location=exc.location
            ).model_dump(),
        )

    @app.exception_handler(RequestValidationError)
    async def handle_validation_error(_req: Request, exc: RequestValidationError):
        first = exc.errors()[0] if exc.errors() else {}
        location = ".".join(str(p) for p in first.get("loc", ())) or None
        return JSONResponse(
            status_code=400,
            content=ApiErrorModel(
                code="validation", message=str(first.get("msg", "invalid request")),
                location=location,
            ).model_dump(),
        )

    @app.exception_handler(StarletteHTTPException)
    async def handle_http_exception(_req: Request, exc: StarletteHTTPException):
        return JSONResponse(
            status_code=exc.status_code,
            content=ApiErrorModel(code="http_error", message=str(exc.detail)).model_dump(),
        )

    @app.get("/api/protocols", response_model=ProtocolList)
    def list_protocols():
        return ProtocolList(
            protocols=[_protocol_info(pid, doc) for pid, doc in protocols.items()]
        )

    @app.post("/api/protocols", response_model=ProtocolInfo, status_code=201)
    def create_protocol(document: dict = Body(...)):
        doc = parse_protocol(document)
        pid = protocols.add(doc)
        return _protocol_info(pid, doc)

    @app.get("/api/protocols/{pid}", response_model=ProtocolInfo)
    def get_protocol(pid: str):
        return _protocol_info(pid, protocols.get(pid))

    @app.post("/api/protocols/{pid}/verify", response_model=VerifyResponse)
    def verify_protocol(pid: str, request: VerifyRequest | None = Body(default=None)):
        doc = protocols.get(pid)
        n_cert = request.n_cert if request is not None else 7
        return verifier.verify(pid, doc, n_cert)

    @app.get("/api/protocols/{pid}/stage-graphs", response_model=StageGraphsResponse)
    def get_stage_graphs(pid: str):
        doc = protocols.get(pid)
        payload = verifier.verify(pid, doc, 7)
        return StageGraphsResponse(
            protocol_id=pid, outcome=payload["outcome"], graphs=payload["graphs"]
        )

    @app.get("/api/protocols/{pid}/stages/{sid}", response_model=StageDetail)
    def get_stage(pid: str, sid: str, config: str | None = None):
        doc = protocols.get(pid)
        parsed_config = _parse_config_param(config, doc.protocol)
        for graph in verifier.graphs(pid, doc):
            for stage in graph.stages:
                if stage.id != sid:
                    continue
                value = None
                in_stage = None
                if parsed_config is not None:
                    in_stage = stage.constraint.satisfies(parsed_config)
                    if stage.certificate is not None:
                        value = stage.certificate.value(parsed_config)
                return StageDetail(
                    protocol_id=pid,
                    graph_output_value=graph.output_value,
                    id=stage.id,
                    constraints=[ConstraintModel(**c.to_json()) for c in stage.constraint.constraints],
                    certificate=None if stage.certificate is None
                    else CertificateModel(**stage.certificate.to_json()),
                    certificate_value=value,
                    config=None if parsed_config is None else parsed_config.to_dict(),
                    config_in_stage=in_stage,
                    dead=list(stage.dead),
                    eventually_dead=list(stage.eventually_dead),
                    speed=None if stage.speed is None else stage.speed.value,
                    witness=None if stage.witness is None else stage.witness.to_dict(),
                    terminal=stage.terminal,
                    incomplete=stage.incomplete,
                )
        raise ApiException(404, "unknown_stage", f"no stage with id {sid!r}", "sid")

    @app.post("/api/sessions", response_model=SessionSnapshot, status_code=201)
    def create_session(request: CreateSessionRequest):
        doc = protocols.get(request.protocol_id)
        graphs = verifier.graphs(request.protocol_id, doc)
        config = Configuration(request.config)
        session = new_session(doc.protocol, graphs, config, request.seed)
        sid = sessions.create(session, request.protocol_id)
        return _snapshot(sid, request.protocol_id, session)

    @app.get("/api/sessions/{sid}", response_model=SessionSnapshot)
    def get_session(sid: str):
        session, lock, pid = sessions.get(sid)
        with lock:
            return _snapshot(sid, pid, session)

    @app.post("/api/sessions/{sid}/step", response_model=SessionSnapshot)
    def step_session(sid: str, request: StepRequest):
        session, lock, pid = sessions.get(sid)
        with lock:
            _check_version(session, request.expected_run_length)
            pair = None if request.pair is None else (request.pair[0], request.pair[1])
            step(session, StepCommand(request.mode, pair, request.repeat))
            return _snapshot(sid, pid, session)

    @app.post("/api/sessions/{sid}/seek", response_model=SessionSnapshot)
    def seek_session(sid: str, request: SeekRequest):
        session, lock, pid = sessions.get(sid)
        with lock:
            _check_version(session, request.expected_run_length)
            seek(session, request.index)
            return _snapshot(sid, pid, session)

    @app.post("/api/sessions/{sid}/progress", response_model=ProgressResponse)
    def progress_session(sid: str, request: ProgressRequest):
        session, lock, pid = sessions.get(sid)
        with lock:
            _check_version(session, request.expected_run_length)
            outcome = progress_to_child(session, request.max_steps)
            return ProgressResponse(
                steps=outcome.steps,
                reached_stage=outcome.reached_stage,
                reached_child=outcome.reached_child,
                session=_snapshot(sid, pid, session),
            )

    return app


def _load_protocol_dir(protocols: ProtocolStore, directory: Path) -> None:
    failures = []
    for path in sorted(directory.glob("*.json")):
        try:
            protocols.add(parse_protocol(path.read_bytes()))
        except StagecraftError as exc:
            failures.append(f"{path.name}: {exc.message}")
    if failures:
        raise FormatError(
            "bad_protocol_dir",
            "malformed protocol files: " + "; ".join(failures),
            str(directory),
        )


def _status_for(exc: StagecraftError) -> int:
    if isinstance(exc, BudgetExceededError):
        return 500
    if isinstance(exc, FormatError):
        return 400
    if isinstance(exc, DomainError) and exc.code.startswith("unknown_"):
        return 404
    if isinstance(exc, (DomainError, PreconditionError, StructuralError)):
        return 422
    return 500


def _protocol_info(pid: str, doc: ProtocolDocument) -> ProtocolInfo:
    obj = protocol_to_object(doc)
    return ProtocolInfo(
        id=pid,
        name=obj["name"],
        description=obj.get("description"),
        states=obj["states"],
        initial=obj["initial"],
        output=obj["output"],
        transitions=[TransitionModel(**t) for t in obj["transitions"]],
        predicate=PredicateModel(**obj["predicate"]),
    )


def _parse_config_param(raw: str | None, protocol: Protocol) -> Configuration | None:
    if raw is None:
        return None
    try:
        counts = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ApiException(400, "syntax", f"config must be JSON: {exc.msg}", "config") from exc
    if not isinstance(counts, dict):
        raise ApiException(400, "bad_type", "config must be an object of counts", "config")
    unknown = [q for q in counts if q not in set(protocol.states)]
    if unknown:
        raise ApiException(400, "unknown_state", f"unknown states {unknown}", "config")
    try:
        return Configuration(counts)
    except StagecraftError as exc:
        raise ApiException(400, exc.code, exc.message, "config") from exc


def _check_version(session: Session, expected_run_length: int) -> None:
    if expected_run_length != len(session.run):
        raise ApiException(
            409, "stale_session",
            f"expected run length {expected_run_length}, session has {len(session.run)}",
            "expected_run_length",
        )


def _snapshot(sid: str, pid: str, session: Session) -> SessionSnapshot:
    data = session.to_json()
    nodes = [SessionNode(**n) for n in data["nodes"]]
    current_id = data["run"][data["cursor"]]
    current = next(n for n in nodes if n.id == current_id)
    return SessionSnapshot(
        id=sid,
        protocol_id=pid,
        seed=data["seed"],
        nodes=nodes,
        edges=[
            SessionEdge(source=e["from"], transition=e["transition"], to=e["to"])
            for e in data["edges"]
        ],
        run=data["run"],
        cursor=data["cursor"],
        run_length=len(data["run"]),
        current=current,
        warnings=data["warnings"],
    )


def export_schemas(directory: str | Path) -> list[str]:
    """Write the JSON schema of every public payload model; returns the file
    names written.  The committed copies under schemas/ are what API tests
    validate responses against."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    models: list[type[BaseModel]] = [
        ApiErrorModel,
        ProtocolInfo,
        ProtocolList,
        VerifyResponse,
        StageGraphsResponse,
        StageDetail,
        SessionSnapshot,
        ProgressResponse,
    ]
    written = []
    for model in models:
        schema = model.model_json_schema(by_alias=True, mode="serialization")
        name = f"{_snake(model.__name__)}.schema.json"
        path = directory / name
        path.write_text(json.dumps(schema, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        written.append(name)
    return written


def _snake(name: str) -> str:
    return re.sub(r"(?<!^)(?=[A-Z])", "_", name).lower()
