"""Byte-exact handling of ``application/x-www-form-urlencoded`` bodies and URL origins.

Decoding is lenient: malformed percent escapes survive into the decoded text
unchanged, and every part keeps its original raw bytes so that parts which are
not rewritten go back on the wire exactly as they arrived.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from urllib.parse import quote, unquote_to_bytes, urldefrag, urlsplit

FORM_URLENCODED = "application/x-www-form-urlencoded"

DEFAULT_PORTS = {"http": 80, "https": 443}

# Characters encodeURIComponent leaves alone, beyond ASCII letters and digits.
_COMPONENT_SAFE = "-_.!~*'()"


def decode_component(raw: bytes) -> str:
    """Lenient percent-decoding with ``+`` read as a space."""
    if b"%" not in raw and b"+" not in raw:
        return raw.decode("utf-8", "surrogateescape")
    # plus-as-space first so that an encoded "%2B" still decodes to "+"
    return unquote_to_bytes(raw.replace(b"+", b" ")).decode("utf-8", "surrogateescape")


@dataclass(frozen=True)
class RawPart:
    raw: bytes
    name: str
    value: str

    @classmethod
    def from_raw(cls, raw: bytes) -> RawPart:
        name, sep, value = raw.partition(b"=")
        return cls(raw, decode_component(name), decode_component(value))


@dataclass(frozen=True)
class FormBody:
    parts: tuple[RawPart, ...] = field(default_factory=tuple)

    def to_bytes(self) -> bytes:
        return b"&".join(part.raw for part in self.parts)

    def pairs(self) -> list[tuple[str, str]]:
        return [(part.name, part.value) for part in self.parts]

    def values(self) -> list[str]:
        return [part.value for part in self.parts]

    def first(self, name: str) -> RawPart | None:
        for part in self.parts:
            if part.name == name:
                return part
        return None

    def __len__(self) -> int:
        return len(self.parts)


def parse_form_body(data: bytes) -> FormBody:
    """Split an urlencoded body into parts without ever rejecting input.

    An empty body has no parts. Every other input yields one part per
    ``&``-separated segment, including empty segments, so that joining the
    raw parts reproduces ``data``.
    """
    if not data:
        return FormBody()
    return FormBody(tuple(RawPart.from_raw(seg) for seg in data.split(b"&")))


def encode_component(text: str) -> str:
    return quote(text.encode("utf-8", "surrogateescape"), safe=_COMPONENT_SAFE)


def encode_form_pair(name: str, value: str) -> bytes:
    """Encode one ``name=value`` pair the way encodeURIComponent would (space is ``%20``)."""
    return f"{encode_component(name)}={encode_component(value)}".encode("ascii")


def encode_form(pairs) -> bytes:
    return b"&".join(encode_form_pair(name, value) for name, value in pairs)


@dataclass(frozen=True)
class Origin:
    """A (scheme, host, port) triple. Host is case-folded and the port defaulted on construction."""

    scheme: str
    host: str
    port: int | None = None

    def __post_init__(self):
        scheme = self.scheme.lower()
        port = self.port
        if port is None:
            if scheme not in DEFAULT_PORTS:
                raise ValueError(f"no default port for scheme {self.scheme!r}")
            port = DEFAULT_PORTS[scheme]
        if not self.host:
            raise ValueError("origin host is empty")
        object.__setattr__(self, "scheme", scheme)
        object.__setattr__(self, "host", self.host.lower())
        object.__setattr__(self, "port", int(port))

    @classmethod
    def from_url(cls, url: str) -> Origin:
        parts = urlsplit(url)
        if not parts.scheme or not parts.hostname:
            raise ValueError(f"not an absolute URL: {url!r}")
        # .port raises ValueError for out-of-range or non-numeric ports
        return cls(parts.scheme, parts.hostname, parts.port)

    def serialize(self) -> str:
        if DEFAULT_PORTS.get(self.scheme) == self.port:
            return f"{self.scheme}://{self.host}"
        return f"{self.scheme}://{self.host}:{self.port}"

    def __str__(self) -> str:
        return self.serialize()


def origin_matches(url: str, origin: Origin) -> bool:
    try:
        return Origin.from_url(url) == origin
    except ValueError:
        return False


def same_url_ignoring_fragment(a: str, b: str) -> bool:
    return urldefrag(a).url == urldefrag(b).url


def url_query_contains(url: str, needle: str) -> bool:
    """True when the decoded query string of ``url`` contains ``needle``.

    If the URL cannot be split, the whole decoded URL is searched instead, so
    a malformed URL never hides a needle.
    """
    try:
        query = urlsplit(url).query
    except ValueError:
        query = url
    return needle in decode_component(query.encode("utf-8", "surrogateescape"))
