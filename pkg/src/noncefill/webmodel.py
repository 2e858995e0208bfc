"""A DOM-lite model of login pages.

Pages hold forms and ordered script hooks. Scripts are not executed from
source: a :class:`ScriptHook` declares which field values it reads and an
optional mutation of the form, which is all the attacks need.
"""

from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass, field
from typing import Callable

from .codec import FORM_URLENCODED, Origin, encode_form
from .vault import ActiveFill, AutofillError, CredentialEntry, PasswordManager

DESIGNS = (3, 4, 5)
OWNERS = ("page", "attacker", "manager")
FIELD_KINDS = ("password", "text", "hidden")

# ``reads`` selector matching every password-kind field
PASSWORD_FIELDS = "type:password"
ALL_FIELDS = "*"

_ids = itertools.count(1)
_ids_lock = threading.Lock()


def _next_id(prefix: str) -> str:
    with _ids_lock:
        return f"{prefix}-{next(_ids)}"


class AutofillRefused(PermissionError):
    """The manager declined to autofill (page origin is not the entry's origin)."""


def check_design(design: int) -> int:
    if design not in DESIGNS:
        raise ValueError(f"design must be one of {DESIGNS}, got {design!r}")
    return design


@dataclass(frozen=True)
class Channel:
    is_https: bool = True
    tls_valid: bool = True

    @property
    def secure(self) -> bool:
        return self.is_https and self.tls_valid


@dataclass
class Field:
    name: str
    value: str = ""
    kind: str = "text"

    def __post_init__(self):
        if self.kind not in FIELD_KINDS:
            raise ValueError(f"unknown field kind {self.kind!r}")


@dataclass(frozen=True)
class Observation:
    owner: str
    hook: str
    field_name: str
    value: str


@dataclass(eq=False)
class ScriptHook:
    owner: str
    name: str = "script"
    reads: frozenset[str] = frozenset()
    mutation: Callable[[Form], None] | None = None
    aware: bool = False

    def __post_init__(self):
        if self.owner not in OWNERS:
            raise ValueError(f"unknown hook owner {self.owner!r}")
        self.reads = frozenset(self.reads)

    def _selects(self, f: Field) -> bool:
        return (
            ALL_FIELDS in self.reads
            or f.name in self.reads
            or (PASSWORD_FIELDS in self.reads and f.kind == "password")
        )

    def run(self, page: Page, form: Form) -> None:
        for f in form.fields:
            if self._selects(f):
                page.observations.append(Observation(self.owner, self.name, f.name, f.value))
        if self.mutation is not None:
            self.mutation(form)


@dataclass(eq=False)
class DesignThreeGuard:
    """The manager-injected onsubmit that runs stored handlers, then swaps the nonce in-page."""

    replace: Callable[[Form], bool]
    stored_onsubmit: ScriptHook | None = None
    stored_listeners: list[ScriptHook] = field(default_factory=list)
    replaced: bool = False

    def run(self, page: Page, form: Form) -> None:
        for hook in list(self.stored_listeners):
            hook.run(page, form)
        if self.stored_onsubmit is not None:
            self.stored_onsubmit.run(page, form)
        self.replaced = self.replace(form) or self.replaced


@dataclass(eq=False)
class Form:
    action_url: str
    method: str = "POST"
    fields: list[Field] = field(default_factory=list)
    onsubmit: ScriptHook | None = None
    submit_listeners: list[ScriptHook] = field(default_factory=list)
    # hooks that escape the guard's interception; they run after everything else
    late_hooks: list[ScriptHook] = field(default_factory=list)
    guard: DesignThreeGuard | None = None

    def __post_init__(self):
        self.method = self.method.upper()
        if self.method not in ("GET", "POST"):
            raise ValueError(f"unsupported form method {self.method!r}")

    def find_field(self, name: str) -> Field | None:
        for f in self.fields:
            if f.name == name:
                return f
        return None

    def pairs(self) -> list[tuple[str, str]]:
        return [(f.name, f.value) for f in self.fields]


@dataclass(eq=False)
class Page:
    url: str
    forms: list[Form] = field(default_factory=list)
    frame_depth: int = 0
    channel: Channel = field(default_factory=Channel)
    scripts: list[ScriptHook] = field(default_factory=list)
    observations: list[Observation] = field(default_factory=list)
    page_id: str = field(default_factory=lambda: _next_id("page"))

    def __post_init__(self):
        if self.frame_depth < 0:
            raise ValueError("frame_depth must be >= 0")

    @property
    def origin(self) -> Origin:
        return Origin.from_url(self.url)

    def find_field(self, name: str) -> Field | None:
        for form in self.forms:
            f = form.find_field(name)
            if f is not None:
                return f
        return None

    def form_of(self, name: str) -> Form | None:
        for form in self.forms:
            if form.find_field(name) is not None:
                return form
        return None

    def field_holding(self, value: str) -> Field | None:
        for form in self.forms:
            for f in form.fields:
                if f.value == value:
                    return f
        return None

    def observed_by(self, owner: str, hook: str | None = None) -> list[Observation]:
        return [
            o for o in self.observations
            if o.owner == owner and (hook is None or o.hook == hook)
        ]


@dataclass(eq=False)
class WebRequest:
    url: str
    method: str
    body: bytes | None
    content_type: str
    source_page: str
    request_id: str = field(default_factory=lambda: _next_id("req"))


def autofill(
    page: Page,
    manager: PasswordManager,
    entry: CredentialEntry,
    field_name: str,
    design: int,
) -> ActiveFill:
    """Autofill a nonce into ``field_name``. Every design writes the nonce, never the secret.

    Under design 3 the form's submit handling is additionally taken over by a
    :class:`DesignThreeGuard`.
    """
    check_design(design)
    try:
        page_origin = page.origin
    except ValueError:
        raise AutofillRefused(f"page URL {page.url!r} has no origin") from None
    if page_origin != entry.origin:
        raise AutofillRefused(f"page origin {page_origin} does not match entry origin {entry.origin}")
    target = page.find_field(field_name)
    if target is None:
        raise AutofillError(f"page {page.page_id} has no field named {field_name!r}")
    fill = manager.register_fill(page, entry, field_name)
    target.value = fill.nonce
    if design == 3:
        _install_guard(page.form_of(field_name), manager.guard_replacement(fill))
    return fill


def _install_guard(form: Form, replace: Callable[[Form], bool]) -> DesignThreeGuard:
    if form.guard is not None:
        # a second fill on the same form chains its replacement onto the existing guard
        previous = form.guard.replace
        form.guard.replace = lambda f: previous(f) | replace(f)
        return form.guard
    guard = DesignThreeGuard(
        replace=replace,
        stored_onsubmit=form.onsubmit,
        stored_listeners=list(form.submit_listeners),
    )
    form.submit_listeners.clear()
    form.onsubmit = None
    form.guard = guard
    return guard


def install_script(page: Page, hook: ScriptHook, form: Form | None = None, slot: str = "listener") -> None:
    """Attach ``hook`` to a form's submit handling.

    ``slot`` is ``"listener"`` (addEventListener) or ``"onsubmit"`` (assigning
    the handler). When a design 3 guard owns the form, both are redirected into
    the guard's stored handlers, unless the hook is ``aware`` of the defense.
    """
    if slot not in ("listener", "onsubmit"):
        raise ValueError(f"unknown slot {slot!r}")
    page.scripts.append(hook)
    if form is None:
        if not page.forms:
            return
        form = page.forms[0]
    if hook.aware:
        form.late_hooks.append(hook)
    elif form.guard is not None:
        if slot == "onsubmit":
            form.guard.stored_onsubmit = hook
        else:
            form.guard.stored_listeners.append(hook)
    elif slot == "onsubmit":
        form.onsubmit = hook
    else:
        form.submit_listeners.append(hook)


def remove_listener(form: Form, hook: ScriptHook) -> None:
    target = form.guard.stored_listeners if form.guard is not None else form.submit_listeners
    if hook in target:
        target.remove(hook)


def submit(page: Page, form: Form) -> WebRequest:
    """Fire the submit event and serialize the form into a request."""
    if form not in page.forms:
        raise ValueError("form does not belong to page")
    for hook in list(form.submit_listeners):
        hook.run(page, form)
    if form.onsubmit is not None:
        form.onsubmit.run(page, form)
    if form.guard is not None:
        form.guard.run(page, form)
    for hook in list(form.late_hooks):
        hook.run(page, form)

    payload = encode_form(form.pairs())
    if form.method == "GET":
        sep = "&" if "?" in form.action_url else "?"
        return WebRequest(form.action_url + sep + payload.decode("ascii"), "GET", None, "", page.page_id)
    return WebRequest(form.action_url, "POST", payload, FORM_URLENCODED, page.page_id)
