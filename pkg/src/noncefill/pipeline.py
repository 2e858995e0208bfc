"""The browser side of a request: webRequest lifecycle stages, extension
visibility, and the nonce replacement engine.

Stages run in a fixed order::

    onBeforeRequest -> onBeforeSendHeaders -> onSendHeaders
        -> onRequestCredentials (design 5) -> replacement (design 5) -> wire

Design 4 substitutes inside onBeforeRequest, before any extension sees a
body; design 5 substitutes after the last body-visible stage.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Sequence

from .codec import (
    FORM_URLENCODED,
    FormBody,
    RawPart,
    decode_component,
    encode_form_pair,
    origin_matches,
    parse_form_body,
    same_url_ignoring_fragment,
)
from .vault import PasswordManager, ReplacementDirective
from .webmodel import WebRequest, check_design

log = logging.getLogger(__name__)

__all__ = [
    "Stage", "Extension", "ExtensionAction", "RequestDetails", "StrippedRequest",
    "TraceRecord", "StageTrace", "PipelineResult", "WebRequest",
    "run_pipeline", "design4_substitute", "replace_credentials_in_stream",
    "substitute_parts", "stripped_view",
]


class Stage(str, Enum):
    BEFORE_REQUEST = "onBeforeRequest"
    BEFORE_SEND_HEADERS = "onBeforeSendHeaders"
    SEND_HEADERS = "onSendHeaders"
    REQUEST_CREDENTIALS = "onRequestCredentials"
    REPLACEMENT = "replacement"
    WIRE = "wire"


BODY_VISIBLE = frozenset({Stage.BEFORE_REQUEST, Stage.SEND_HEADERS})
# stages at which an extension may cancel or redirect
BLOCKING = frozenset({Stage.BEFORE_REQUEST, Stage.BEFORE_SEND_HEADERS})
# response-phase stages exist in the real API; nothing here runs them
RESPONSE_STAGES = ("onHeadersReceived", "onResponseStarted", "onCompleted", "onErrorOccurred")

PERMISSIONS = frozenset({"webRequest", "scripting", "activeTab", "contentScripts", "declarativeNetRequest"})


@dataclass(frozen=True)
class RequestDetails:
    """Read-only request copy handed to callbacks at body-visible stages."""

    request_id: str
    url: str
    method: str
    content_type: str
    source_page: str
    body: bytes | None


@dataclass(frozen=True, slots=True)
class StrippedRequest:
    """Request metadata with no body attribute at all."""

    request_id: str
    url: str
    method: str
    content_type: str

    def metadata(self) -> tuple[str, ...]:
        return (self.request_id, self.url, self.method, self.content_type)


def stripped_view(request: WebRequest) -> StrippedRequest:
    return StrippedRequest(request.request_id, request.url, request.method, request.content_type)


def _details(request: WebRequest) -> RequestDetails:
    return RequestDetails(
        request.request_id, request.url, request.method,
        request.content_type, request.source_page, request.body,
    )


@dataclass(frozen=True)
class ExtensionAction:
    cancel: bool = False
    redirect_url: str | None = None


CANCEL = ExtensionAction(cancel=True)


@dataclass(eq=False)
class Extension:
    name: str
    permissions: frozenset[str] = frozenset({"webRequest"})
    callbacks: dict[Stage, Callable] = field(default_factory=dict)

    def __post_init__(self):
        self.permissions = frozenset(self.permissions)
        unknown = self.permissions - PERMISSIONS
        if unknown:
            raise ValueError(f"unknown permissions {sorted(unknown)}")
        self.callbacks = {Stage(s): cb for s, cb in self.callbacks.items()}

    def on(self, stage: Stage | str, callback: Callable | None = None):
        """Register ``callback`` at ``stage``; usable as a decorator."""
        stage = Stage(stage)
        if stage in (Stage.REPLACEMENT, Stage.WIRE):
            raise ValueError(f"extensions cannot observe the {stage.value} stage")

        def register(cb):
            self.callbacks[stage] = cb
            return cb

        return register(callback) if callback is not None else register

    def may_observe(self, stage: Stage) -> bool:
        return stage in self.callbacks and "webRequest" in self.permissions

    @classmethod
    def body_logger(
        cls,
        name: str = "body-logger",
        stages: Iterable[Stage | str] = (Stage.BEFORE_REQUEST, Stage.SEND_HEADERS),
        permissions: Iterable[str] = ("webRequest",),
    ) -> Extension:
        """An extension that records whatever it is shown and never interferes."""
        ext = cls(name, frozenset(permissions))
        for stage in stages:
            ext.on(stage, lambda view: None)
        return ext


@dataclass(frozen=True)
class TraceRecord:
    stage: Stage
    observer: str
    kind: str  # extension | manager | browser | network
    snapshot: bytes | None = None
    view: RequestDetails | StrippedRequest | None = None
    note: str = ""


@dataclass
class StageTrace:
    records: list[TraceRecord] = field(default_factory=list)

    def add(self, stage: Stage, observer: str, kind: str, snapshot: bytes | None = None,
            view=None, note: str = "") -> TraceRecord:
        # bytes are immutable, so keeping the reference is already a snapshot
        rec = TraceRecord(stage, observer, kind, None if snapshot is None else bytes(snapshot), view, note)
        self.records.append(rec)
        return rec

    def by(self, observer: str) -> list[TraceRecord]:
        return [r for r in self.records if r.observer == observer]

    def extension_snapshots(self) -> list[bytes]:
        return [r.snapshot for r in self.records if r.kind == "extension" and r.snapshot is not None]

    def notes(self) -> list[str]:
        return [r.note for r in self.records if r.note]

    def __iter__(self):
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)


@dataclass
class PipelineResult:
    request: WebRequest
    trace: StageTrace
    wire: bytes | None
    cancelled: bool = False
    changed: bool = False
    replacement_ns: int = 0
    total_ns: int = 0

    @property
    def url(self) -> str:
        return self.request.url

    @property
    def wire_bytes(self) -> bytes:
        return self.wire or b""


# -- replacement engine -------------------------------------------------------

@dataclass
class Substitution:
    body: FormBody
    changed: bool
    notes: list[str] = field(default_factory=list)


class _Matcher:
    """Applies the browser-side checks for a fixed set of directives and destination URL.

    A part is accepted by a directive only when its decoded name equals the
    directive's field, its decoded value equals the nonce exactly, and the URL
    is at the directive's origin (and its exact URL, when one is set). Each
    directive is spent on the first part it accepts, or on the first part of
    its field that already holds the secret, which makes a second pass a no-op.
    """

    def __init__(self, directives: Sequence[ReplacementDirective], url: str):
        self.directives = list(directives)
        self.at_destination = [
            origin_matches(url, d.origin)
            and (d.exact_url is None or same_url_ignoring_fragment(url, d.exact_url))
            for d in self.directives
        ]
        self.by_field: dict[str, list[int]] = {}
        for i, d in enumerate(self.directives):
            self.by_field.setdefault(d.field_name, []).append(i)
        self.used: set[int] = set()
        self.notes: list[str] = []

    def claims(self, name: str) -> bool:
        return name in self.by_field

    def match(self, name: str, value: str) -> ReplacementDirective | None:
        for i in self.by_field.get(name, ()):
            d = self.directives[i]
            if i in self.used:
                continue
            if value == d.secret:
                # already substituted (a second pass over the same body)
                self.used.add(i)
                return None
            if self.at_destination[i] and value == d.nonce:
                self.used.add(i)
                return d
        note = f"preserved unmatched credential field {name!r}"
        self.notes.append(note)
        log.info(note)
        return None


def substitute_parts(body: FormBody, directives: Sequence[ReplacementDirective], url: str) -> Substitution:
    """Swap nonces for secrets in the parts that pass every browser-side check.

    Parts that are not rewritten keep their raw bytes, including parts named
    like a credential field whose value or destination did not check out.
    """
    matcher = _Matcher(directives, url)
    out: list[RawPart] = []
    changed = False
    for part in body.parts:
        d = matcher.match(part.name, part.value) if matcher.claims(part.name) else None
        if d is None:
            out.append(part)
            continue
        changed = True
        out.append(RawPart(encode_form_pair(d.field_name, d.secret), d.field_name, d.secret))
    return Substitution(FormBody(tuple(out)), changed, matcher.notes)


def _rewrite_stream(body: bytes, directives: Sequence[ReplacementDirective], url: str):
    # same rules as substitute_parts, but a value is only decoded when its name is claimed
    matcher = _Matcher(directives, url)
    out: list[bytes] = []
    changed = False
    for seg in body.split(b"&"):
        raw_name, _, raw_value = seg.partition(b"=")
        name = decode_component(raw_name)
        d = matcher.match(name, decode_component(raw_value)) if matcher.claims(name) else None
        if d is None:
            out.append(seg)
        else:
            out.append(encode_form_pair(d.field_name, d.secret))
            changed = True
    return b"&".join(out), changed, matcher.notes


def replace_credentials_in_stream(
    body: bytes,
    directives: Sequence[ReplacementDirective],
    url: str,
    content_type: str = FORM_URLENCODED,
) -> tuple[bytes, bool]:
    """Rewrite an urlencoded request body; any other content type passes through untouched."""
    if content_type != FORM_URLENCODED or not directives or not body:
        return body, False
    out, changed, _ = _rewrite_stream(body, directives, url)
    return (out, True) if changed else (body, False)


def design4_substitute(form_submission: FormBody, directive: ReplacementDirective, url: str) -> FormBody:
    return substitute_parts(form_submission, [directive], url).body


# -- lifecycle ----------------------------------------------------------------

def _merge_directives(per_manager, trace: StageTrace) -> list[ReplacementDirective]:
    merged: dict[str, ReplacementDirective] = {}
    for manager_name, directives in per_manager:
        for d in directives:
            if d.field_name in merged:
                note = f"conflicting directive for field {d.field_name!r} from {manager_name} ignored"
                log.warning(note)
                trace.add(Stage.REQUEST_CREDENTIALS, "browser", "browser", note=note)
                continue
            merged[d.field_name] = d
    return list(merged.values())


def _dispatch(stage: Stage, request: WebRequest, extensions, trace: StageTrace):
    """Run extension callbacks for ``stage``; return the first honoured action."""
    body_visible = stage in BODY_VISIBLE
    for ext in extensions:
        if not ext.may_observe(stage):
            continue
        view = _details(request) if body_visible else stripped_view(request)
        trace.add(stage, ext.name, "extension", view.body if body_visible else None, view)
        action = ext.callbacks[stage](view)
        if stage not in BLOCKING or not isinstance(action, ExtensionAction):
            continue
        if action.cancel:
            trace.add(stage, ext.name, "browser", note="cancelled")
            return action
        if action.redirect_url is not None:
            trace.add(stage, ext.name, "browser", note=f"redirected {request.url} -> {action.redirect_url}")
            request.url = action.redirect_url
    return None


def run_pipeline(
    request: WebRequest,
    extensions: Sequence[Extension] = (),
    managers: Sequence[PasswordManager] = (),
    design: int = 5,
) -> PipelineResult:
    """Carry ``request`` through the lifecycle and return what reaches the wire."""
    check_design(design)
    trace = StageTrace()
    result = PipelineResult(request, trace, None)
    start = time.perf_counter_ns()

    def finish(cancelled: bool = False) -> PipelineResult:
        result.cancelled = cancelled
        if not cancelled:
            result.wire = request.body
            trace.add(Stage.WIRE, "network", "network", request.body, _details(request))
        result.total_ns = time.perf_counter_ns() - start
        return result

    # onBeforeRequest: managers look first so design 4 can substitute before the body exists
    details = _details(request)
    for m in managers if design in (4, 5) else ():
        trace.add(Stage.BEFORE_REQUEST, m.name, "manager", details.body, details)
        m.on_before_request(details)
    if design == 4 and request.body is not None and request.content_type == FORM_URLENCODED:
        meta = stripped_view(request)
        directives = _merge_directives([(m.name, m.on_request_credentials(meta)) for m in managers], trace)
        form = parse_form_body(request.body)
        for d in directives:
            sub = substitute_parts(form, [d], request.url)
            form = sub.body
            result.changed |= sub.changed
            for note in sub.notes:
                trace.add(Stage.BEFORE_REQUEST, "browser", "browser", note=note)
        if result.changed:
            request.body = form.to_bytes()
    if _dispatch(Stage.BEFORE_REQUEST, request, extensions, trace) is not None:
        return finish(cancelled=True)

    if _dispatch(Stage.BEFORE_SEND_HEADERS, request, extensions, trace) is not None:
        return finish(cancelled=True)

    _dispatch(Stage.SEND_HEADERS, request, extensions, trace)

    if design == 5:
        meta = stripped_view(request)
        _dispatch(Stage.REQUEST_CREDENTIALS, request, extensions, trace)
        per_manager = []
        for m in managers:
            trace.add(Stage.REQUEST_CREDENTIALS, m.name, "manager", None, meta)
            per_manager.append((m.name, m.on_request_credentials(meta)))
        directives = _merge_directives(per_manager, trace)
        # the replacement stage only runs when some manager asked for it
        if directives:
            t0 = time.perf_counter_ns()
            if request.body is not None and request.content_type == FORM_URLENCODED:
                body, changed, notes = _rewrite_stream(request.body, directives, request.url)
                if changed:
                    request.body = body
                    result.changed = True
            else:
                notes = [f"replacement skipped for content type {request.content_type!r}"]
            result.replacement_ns = time.perf_counter_ns() - t0
            trace.add(Stage.REPLACEMENT, "browser", "browser",
                      note="; ".join(notes + [f"changed={result.changed}"]))

    return finish()
