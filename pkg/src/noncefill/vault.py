"""Password-manager side: credential storage, nonce generation, autofill
bookkeeping and the two request callbacks.

The manager only ever hands a secret out through
:meth:`PasswordManager.on_request_credentials` (to the browser's replacement
engine) or through the in-page guard it installs for the script-based design.
"""

from __future__ import annotations

import logging
import secrets
import string
import threading
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

from .codec import (
    FORM_URLENCODED,
    Origin,
    origin_matches,
    parse_form_body,
    same_url_ignoring_fragment,
    url_query_contains,
)

if TYPE_CHECKING:
    from .pipeline import RequestDetails, StrippedRequest
    from .webmodel import Form, Page

log = logging.getLogger(__name__)

DEFAULT_ALPHABET = string.ascii_letters + string.digits


class ConfigurationError(ValueError):
    pass


class AutofillError(LookupError):
    """Autofill was aimed at a field that cannot take a password."""


@dataclass(frozen=True)
class CredentialEntry:
    id: str
    secret: str = field(repr=False)
    origin: Origin
    exact_url: str | None = None
    expected_field: str | None = None

    def __post_init__(self):
        if not self.secret:
            raise ConfigurationError(f"credential {self.id!r} has an empty secret")
        if self.exact_url is not None and not origin_matches(self.exact_url, self.origin):
            raise ConfigurationError(
                f"exact_url {self.exact_url!r} is outside origin {self.origin}"
            )


@dataclass(frozen=True)
class NoncePolicy:
    length: int = 24
    alphabet: str = DEFAULT_ALPHABET

    def validate(self) -> None:
        if self.length < 8:
            raise ConfigurationError(f"nonce length {self.length} < 8")
        if len(set(self.alphabet)) < 16:
            raise ConfigurationError("nonce alphabet needs at least 16 distinct characters")

    def conforms(self, nonce: str) -> bool:
        return len(nonce) == self.length and set(nonce) <= set(self.alphabet)


def generate_nonce(policy: NoncePolicy | None = None) -> str:
    policy = policy or NoncePolicy()
    policy.validate()
    alphabet = "".join(sorted(set(policy.alphabet)))
    return "".join(secrets.choice(alphabet) for _ in range(policy.length))


@dataclass(frozen=True)
class ActiveFill:
    page_id: str
    nonce: str
    field_name: str
    entry_id: str
    frame_depth: int
    channel_secure: bool


@dataclass(frozen=True)
class ReplacementDirective:
    nonce: str
    secret: str = field(repr=False)
    origin: Origin
    field_name: str
    exact_url: str | None = None

    def __post_init__(self):
        if self.nonce == self.secret:
            raise ValueError("nonce must differ from the secret it stands in for")


@dataclass(frozen=True)
class PendingAssociation:
    request_id: str
    fill: ActiveFill


# Names of the manager-side checks, in evaluation order.
CHECKS = ("top-level-frame", "secure-channel", "destination", "nonce-not-in-query", "field-unchanged")


class PasswordManager:
    """A password manager extension holding a vault of credentials.

    Fill registration and callback dispatch serialize on one lock; callbacks
    never call back into the manager.
    """

    def __init__(self, name: str = "password-manager", policy: NoncePolicy | None = None):
        self.name = name
        self.policy = policy or NoncePolicy()
        self.policy.validate()
        self._entries: dict[str, CredentialEntry] = {}
        self._fills: dict[tuple[str, str], ActiveFill] = {}
        self._pages: dict[str, Page] = {}
        self._pending: dict[str, list[ActiveFill]] = {}
        self._lock = threading.RLock()
        # (request_id, check name) for every association refused
        self.refusals: list[tuple[str, str]] = []

    # -- storage -----------------------------------------------------------

    def add(self, entry: CredentialEntry) -> CredentialEntry:
        with self._lock:
            self._entries[entry.id] = entry
        return entry

    def entry(self, entry_id: str) -> CredentialEntry:
        return self._entries[entry_id]

    def entries_for(self, origin: Origin) -> list[CredentialEntry]:
        return [e for e in self._entries.values() if e.origin == origin]

    def __contains__(self, entry_id: str) -> bool:
        return entry_id in self._entries

    # -- autofill ----------------------------------------------------------

    def _fresh_nonce(self, secret: str) -> str:
        while True:
            nonce = generate_nonce(self.policy)
            if nonce not in secret:
                return nonce

    def register_fill(self, page: Page, entry: CredentialEntry, field_name: str) -> ActiveFill:
        """Record a nonce for ``field_name`` on ``page``; the caller writes it into the DOM."""
        target = page.find_field(field_name)
        if target is None:
            raise AutofillError(f"page {page.page_id} has no field named {field_name!r}")
        if target.kind != "password":
            raise AutofillError(f"field {field_name!r} is a {target.kind} field, not a password field")
        if entry.id not in self._entries:
            self.add(entry)
        fill = ActiveFill(
            page_id=page.page_id,
            nonce=self._fresh_nonce(entry.secret),
            field_name=field_name,
            entry_id=entry.id,
            frame_depth=page.frame_depth,
            channel_secure=page.channel.secure,
        )
        with self._lock:
            self._fills[(page.page_id, field_name)] = fill
            self._pages[page.page_id] = page
        return fill

    def fills(self) -> list[ActiveFill]:
        with self._lock:
            return list(self._fills.values())

    def guard_replacement(self, fill: ActiveFill):
        """Return the in-page replacement step used by the script-based guard.

        The returned callable swaps the nonce for the secret in ``form`` only
        when the form posts to the credential's origin.
        """
        entry = self._entries[fill.entry_id]

        def replace(form: Form) -> bool:
            if not origin_matches(form.action_url, entry.origin):
                return False
            hit = False
            for f in form.fields:
                if f.value == fill.nonce:
                    f.value = entry.secret
                    hit = True
            return hit

        return replace

    # -- request callbacks -------------------------------------------------

    def failed_check(self, fill: ActiveFill, details: RequestDetails) -> str | None:
        """Name of the first manager-side check ``details`` fails for ``fill``, or None."""
        entry = self._entries[fill.entry_id]
        if fill.frame_depth != 0:
            return "top-level-frame"
        if not fill.channel_secure or not details.url.lower().startswith("https:"):
            return "secure-channel"
        if not origin_matches(details.url, entry.origin):
            return "destination"
        if entry.exact_url is not None and not same_url_ignoring_fragment(details.url, entry.exact_url):
            return "destination"
        if url_query_contains(details.url, fill.nonce):
            return "nonce-not-in-query"
        page = self._pages.get(fill.page_id)
        holder = page.field_holding(fill.nonce) if page is not None else None
        if holder is None or holder.name != fill.field_name:
            return "field-unchanged"
        if entry.expected_field is not None and fill.field_name != entry.expected_field:
            return "field-unchanged"
        return None

    @staticmethod
    def _body_carries(details: RequestDetails, nonce: str) -> bool:
        if not details.body:
            return False
        if details.content_type == FORM_URLENCODED:
            return nonce in parse_form_body(details.body).values()
        return nonce.encode() in details.body

    def on_before_request(self, details: RequestDetails) -> list[PendingAssociation]:
        """Associate the request with every fill of its page that is safe to replace.

        Anything unsafe is left alone, so the nonce goes out as-is.
        """
        made = []
        with self._lock:
            for fill in self._fills.values():
                if fill.page_id != details.source_page:
                    continue
                if not self._body_carries(details, fill.nonce):
                    continue
                failed = self.failed_check(fill, details)
                if failed is not None:
                    self.refusals.append((details.request_id, failed))
                    log.debug("no association for %s: %s check failed", details.request_id, failed)
                    continue
                self._pending.setdefault(details.request_id, []).append(fill)
                made.append(PendingAssociation(details.request_id, fill))
        return made

    def on_request_credentials(self, meta: StrippedRequest) -> list[ReplacementDirective]:
        with self._lock:
            pending = self._pending.pop(meta.request_id, [])
        directives = []
        for fill in pending:
            entry = self._entries[fill.entry_id]
            directives.append(
                ReplacementDirective(
                    nonce=fill.nonce,
                    secret=entry.secret,
                    origin=entry.origin,
                    field_name=fill.field_name,
                    exact_url=entry.exact_url,
                )
            )
        return directives
