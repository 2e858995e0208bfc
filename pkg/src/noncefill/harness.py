"""Synthetic login sites and the security, functional and overhead evaluations."""

from __future__ import annotations

import base64
import hashlib
import json
import random
import statistics
import string
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from . import attacks
from .codec import Origin, encode_form, encode_form_pair, parse_form_body
from .pipeline import Extension, PipelineResult, run_pipeline
from .vault import ActiveFill, CredentialEntry, PasswordManager
from .webmodel import Channel, Field, Form, Page, ScriptHook, autofill, check_design, install_script, submit

BEHAVIORS = ("plain", "integrity-check", "transform")
TRANSFORMS = ("hash", "base64")
CATEGORIES = ("success", "integrity-fail", "transform-fail", "blocked")
INTEGRITY_FIELD = "_integrity"

# -- sites --------------------------------------------------------------------


@dataclass(frozen=True)
class FieldSpec:
    name: str
    kind: str = "text"
    value: str = ""


@dataclass(frozen=True)
class SiteDescriptor:
    name: str
    origin: Origin
    login_url: str
    action: str
    fields: tuple[FieldSpec, ...]
    password_field: str
    method: str = "POST"
    behavior: str = "plain"
    transform: str | None = None
    frame_depth: int = 0
    is_https: bool = True
    tls_valid: bool = True

    def __post_init__(self):
        if self.behavior not in BEHAVIORS:
            raise ValueError(f"unknown site behavior {self.behavior!r}")
        if (self.behavior == "transform") != (self.transform is not None):
            raise ValueError("transform kind is required for, and only for, transform sites")
        if self.transform is not None and self.transform not in TRANSFORMS:
            raise ValueError(f"unknown transform {self.transform!r}")

    def to_record(self) -> dict:
        return {
            "name": self.name,
            "origin": self.origin.serialize(),
            "login_url": self.login_url,
            "action": self.action,
            "method": self.method,
            "fields": [[f.name, f.kind, f.value] for f in self.fields],
            "password_field": self.password_field,
            "behavior": self.behavior,
            "transform": self.transform,
            "frame_depth": self.frame_depth,
            "is_https": self.is_https,
            "tls_valid": self.tls_valid,
        }

    @classmethod
    def from_record(cls, rec: dict) -> SiteDescriptor:
        return cls(
            name=rec["name"],
            origin=Origin.from_url(rec["origin"]),
            login_url=rec["login_url"],
            action=rec["action"],
            method=rec.get("method", "POST"),
            fields=tuple(FieldSpec(*f) for f in rec["fields"]),
            password_field=rec["password_field"],
            behavior=rec.get("behavior", "plain"),
            transform=rec.get("transform"),
            frame_depth=rec.get("frame_depth", 0),
            is_https=rec.get("is_https", True),
            tls_valid=rec.get("tls_valid", True),
        )


def make_site(name: str, host: str, *, password_field: str = "psw", username_field: str = "uname",
              behavior: str = "plain", transform: str | None = None, method: str = "POST",
              extra_fields: Sequence[FieldSpec] = (), scheme: str = "https") -> SiteDescriptor:
    fields = [FieldSpec(username_field, "text", "alice"), FieldSpec(password_field, "password")]
    fields.extend(extra_fields)
    if behavior == "integrity-check":
        fields.append(FieldSpec(INTEGRITY_FIELD, "hidden"))
    base = f"{scheme}://{host}"
    return SiteDescriptor(
        name=name,
        origin=Origin.from_url(base),
        login_url=f"{base}/login",
        action=f"{base}/session",
        method=method,
        fields=tuple(fields),
        password_field=password_field,
        behavior=behavior,
        transform=transform,
    )


REFERENCE_SITE = make_site("reference", "login.example.com")


def dump_corpus(sites: Iterable[SiteDescriptor]) -> str:
    """One JSON object per line, keys sorted, so equal corpora serialize identically."""
    return "".join(json.dumps(s.to_record(), sort_keys=True, separators=(",", ":")) + "\n" for s in sites)


def load_corpus(text: str) -> list[SiteDescriptor]:
    return [SiteDescriptor.from_record(json.loads(line)) for line in text.splitlines() if line.strip()]


@dataclass(frozen=True)
class CorpusSpec:
    plain: int = 97
    integrity: int = 2
    transform: int = 1

    @classmethod
    def scaled(cls, n: int) -> CorpusSpec:
        """Split ``n`` sites 97/2/1, rounding the minority categories."""
        integrity = round(n * 0.02)
        transform = round(n * 0.01)
        return cls(n - integrity - transform, integrity, transform)

    @property
    def total(self) -> int:
        return self.plain + self.integrity + self.transform


_PASSWORD_NAMES = ("psw", "password", "pass", "pwd", "passwd", "login[password]", "user_pass", "secret")
_USER_NAMES = ("uname", "username", "email", "login", "user", "login[email]")
_WORDS = ("acme", "nova", "orbit", "pixel", "quill", "river", "solar", "terra", "umbra", "vivid", "willow", "zenith")
_TLDS = ("com", "org", "net", "io", "example")


def build_corpus(spec: CorpusSpec | None = None, seed: int = 1) -> list[SiteDescriptor]:
    spec = spec or CorpusSpec()
    if min(spec.plain, spec.integrity, spec.transform) < 0:
        raise ValueError("corpus counts must be >= 0")
    rng = random.Random(seed)
    behaviors = ["plain"] * spec.plain + ["integrity-check"] * spec.integrity + ["transform"] * spec.transform
    rng.shuffle(behaviors)
    sites = []
    for i, behavior in enumerate(behaviors):
        host = f"{rng.choice(_WORDS)}{i:04d}.{rng.choice(_TLDS)}"
        extras = [FieldSpec(f"opt{j}", "hidden", rng.choice(_WORDS)) for j in range(rng.randrange(3))]
        sites.append(make_site(
            f"site-{i:04d}",
            host,
            password_field=rng.choice(_PASSWORD_NAMES),
            username_field=rng.choice(_USER_NAMES),
            behavior=behavior,
            transform=rng.choice(TRANSFORMS) if behavior == "transform" else None,
            extra_fields=extras,
        ))
    return sites


_SECRET_ALPHABET = string.ascii_letters + string.digits + " !@#$%^&*()-_=+[]{};:'\",.<>/?~é"


def secret_for(site: SiteDescriptor, length: int = 16) -> str:
    """Deterministic test password for ``site``; includes characters that need encoding."""
    rng = random.Random(f"secret:{site.name}")
    return "".join(rng.choice(_SECRET_ALPHABET) for _ in range(length))


def apply_transform(kind: str, value: str) -> str:
    if kind == "hash":
        return hashlib.sha256(value.encode()).hexdigest()
    return base64.b64encode(value.encode()).decode("ascii")


def integrity_digest(pairs) -> str:
    payload = encode_form((n, v) for n, v in pairs if n != INTEGRITY_FIELD)
    return hashlib.sha256(payload).hexdigest()


def _behavior_hook(site: SiteDescriptor) -> ScriptHook | None:
    if site.behavior == "integrity-check":
        def sign(form: Form) -> None:
            form.find_field(INTEGRITY_FIELD).value = integrity_digest(form.pairs())
        return ScriptHook("page", "integrity", mutation=sign)
    if site.behavior == "transform":
        def encode(form: Form) -> None:
            f = form.find_field(site.password_field)
            f.value = apply_transform(site.transform, f.value)
        return ScriptHook("page", f"transform-{site.transform}", frozenset({site.password_field}), encode)
    return None


def build_page(site: SiteDescriptor) -> Page:
    form = Form(site.action, site.method, [Field(f.name, f.value, f.kind) for f in site.fields])
    page = Page(
        url=site.login_url,
        forms=[form],
        frame_depth=site.frame_depth,
        channel=Channel(site.is_https, site.tls_valid),
    )
    hook = _behavior_hook(site)
    if hook is not None:
        install_script(page, hook, form)
    return page


# -- running one scenario -----------------------------------------------------


@dataclass(frozen=True)
class ScenarioResult:
    site: str
    design: int
    category: str
    wire_contains_secret: bool
    wire_contains_nonce: bool

    def to_record(self) -> dict:
        return {
            "site": self.site,
            "design": self.design,
            "category": self.category,
            "wire_contains_secret": self.wire_contains_secret,
            "wire_contains_nonce": self.wire_contains_nonce,
        }

    @classmethod
    def from_record(cls, rec: dict) -> ScenarioResult:
        return cls(rec["site"], int(rec["design"]), rec["category"],
                   bool(rec["wire_contains_secret"]), bool(rec["wire_contains_nonce"]))


@dataclass
class ScenarioRun:
    site: SiteDescriptor
    design: int
    page: Page
    manager: PasswordManager
    fill: ActiveFill
    result: PipelineResult
    secret: str = field(repr=False)

    @property
    def substituted(self) -> bool:
        guard = self.page.forms[0].guard
        return self.result.changed or bool(guard is not None and guard.replaced)

    def classify(self) -> ScenarioResult:
        return classify(self)


def run_scenario(
    site: SiteDescriptor,
    design: int,
    *,
    secret: str | None = None,
    entry: CredentialEntry | None = None,
    manager: PasswordManager | None = None,
    extensions: Sequence[Extension] = (),
    prepare=None,
) -> ScenarioRun:
    """Autofill ``site`` under ``design``, submit it and push the request through the pipeline.

    ``prepare(page)`` runs after autofill and before submit; attacks install
    their hooks there.
    """
    check_design(design)
    secret = secret if secret is not None else secret_for(site)
    entry = entry or CredentialEntry(f"cred:{site.name}", secret, site.origin)
    secret = entry.secret
    manager = manager or PasswordManager()
    page = build_page(site)
    fill = autofill(page, manager, entry, site.password_field, design)
    if prepare is not None:
        prepare(page)
    request = submit(page, page.forms[0])
    result = run_pipeline(request, extensions, [manager], design)
    return ScenarioRun(site, design, page, manager, fill, result, secret)


def classify(run: ScenarioRun) -> ScenarioResult:
    site, result = run.site, run.result
    has_secret = attacks.wire_contains(result, run.secret)
    has_nonce = attacks.wire_contains(result, run.fill.nonce)
    if result.cancelled:
        category = "blocked"
    else:
        if run.site.method == "GET":
            _, _, query = result.url.partition("?")
            wire_form = parse_form_body(query.encode())
        else:
            wire_form = parse_form_body(result.wire_bytes)
        pw = wire_form.first(site.password_field)
        tag = wire_form.first(INTEGRITY_FIELD)
        if run.substituted and tag is not None and tag.value != integrity_digest(wire_form.pairs()):
            category = "integrity-fail"
        elif pw is not None and pw.raw == encode_form_pair(site.password_field, run.secret):
            category = "success"
        elif site.behavior == "transform" and not run.substituted:
            category = "transform-fail"
        else:
            category = "blocked"
    return ScenarioResult(site.name, run.design, category, has_secret, has_nonce)


# -- functional evaluation ----------------------------------------------------


@dataclass
class FunctionalReport:
    design: int
    counts: dict[str, int]
    results: list[ScenarioResult]


def run_functional_eval(corpus: Sequence[SiteDescriptor], design: int = 5) -> FunctionalReport:
    check_design(design)
    results = [classify(run_scenario(site, design)) for site in corpus]
    results.sort(key=lambda r: r.site)
    counts = Counter({c: 0 for c in CATEGORIES})
    counts.update(r.category for r in results)
    return FunctionalReport(design, dict(counts), results)


def classification_sound(result: ScenarioResult) -> bool:
    if result.category == "success":
        return result.wire_contains_secret and not result.wire_contains_nonce
    if result.category == "transform-fail":
        return not result.wire_contains_secret
    return True


# -- security evaluation ------------------------------------------------------

ATTACKERS = ("honest-but-curious", "dom", "extension")
RATINGS = ("full", "part", "none")
COLUMNS = ("honest-but-curious", "dom", "extension", "mitm", "phisher", "no-website-changes", "no-browser-changes")

# Full comparison matrix. Ratings read "protection achieved".
COMPARISON_ROWS = {
    "1. Zero-knowledge proof": ("full", "full", "full", "full", "full", "none", "full"),
    "2. Modified form handling": ("full", "none", "none", "none", "part", "full", "part"),
    "3. JS-based nonce injection": ("part", "part", "none", "part", "part", "full", "full"),
    "4. API-based nonce injection": ("full", "full", "none", "part", "full", "full", "part"),
    "5. Browser-based nonce injection": ("full", "full", "full", "part", "full", "full", "none"),
    "Current password manager autofill": ("none", "none", "none", "none", "part", "full", "full"),
    "Two-factor authentication (2FA)": ("none", "none", "none", "none", "none", "none", "none"),
    "Phishing-resistant 2FA": ("part", "part", "part", "part", "part", "none", "none"),
}
DESIGN_ROWS = {3: "3. JS-based nonce injection", 4: "4. API-based nonce injection", 5: "5. Browser-based nonce injection"}

EXPECTED_DYNAMIC = {
    (design, attacker): COMPARISON_ROWS[DESIGN_ROWS[design]][COLUMNS.index(attacker)]
    for design in DESIGN_ROWS
    for attacker in ATTACKERS
}


@dataclass
class SecurityMatrix:
    dynamic: dict[tuple[int, str], str] = field(default_factory=dict)
    evidence: dict[tuple[int, str], list[tuple[str, str]]] = field(default_factory=dict)

    @property
    def static(self) -> dict[str, tuple[str, ...]]:
        return COMPARISON_ROWS

    def mismatches(self) -> list[tuple[int, str, str, str]]:
        return [
            (d, a, got, EXPECTED_DYNAMIC[(d, a)])
            for (d, a), got in sorted(self.dynamic.items())
            if (d, a) in EXPECTED_DYNAMIC and got != EXPECTED_DYNAMIC[(d, a)]
        ]

    def matches_expected(self) -> bool:
        return bool(self.dynamic) and not self.mismatches()

    def __eq__(self, other) -> bool:
        return isinstance(other, SecurityMatrix) and self.dynamic == other.dynamic


def _rate(unaware: Iterable[attacks.AttackOutcome], aware: Iterable[attacks.AttackOutcome]) -> str:
    if any(o.stolen for o in unaware):
        return "none"
    if any(o.stolen for o in aware):
        return "part"
    return "full"


def _scrape(site, design, aware):
    holder = {}

    def prepare(page):
        holder["scrape"] = attacks.dom_scrape_attack(page, aware)

    run = run_scenario(site, design, prepare=prepare)
    return holder["scrape"].outcome(run.secret)


def _reflect(site, design, mode):
    run = run_scenario(site, design, prepare=lambda page: attacks.reflection_attack(page, mode))
    return attacks.reflection_outcome(run.result, mode, run.secret)


def _extension(site, design, credentials_stage):
    ext = attacks.malicious_extension(credentials_stage=credentials_stage)
    run = run_scenario(site, design, extensions=[ext])
    return attacks.extension_log_attack(run.result.trace, ext, run.secret)


def attack_cell(design: int, attacker: str, site: SiteDescriptor = REFERENCE_SITE):
    """Run every variant of ``attacker`` against ``site``; return (rating, evidence)."""
    if attacker == "honest-but-curious":
        unaware = [_scrape(site, design, aware=False)]
        aware = [_scrape(site, design, aware=True)]
    elif attacker == "dom":
        unaware = [_scrape(site, design, aware=False)]
        aware = [_scrape(site, design, aware=True)] + [_reflect(site, design, m) for m in attacks.REFLECTION_MODES]
    elif attacker == "extension":
        unaware = [_extension(site, design, False), _extension(site, design, True)]
        aware = []
    else:
        raise ValueError(f"unknown attacker {attacker!r}")
    evidence = [(o.attacker, o.verdict.value) for o in unaware + aware]
    return _rate(unaware, aware), evidence


def run_security_eval(designs: Sequence[int] = (3, 4, 5), attackers: Sequence[str] = ATTACKERS) -> SecurityMatrix:
    matrix = SecurityMatrix()
    for design in designs:
        check_design(design)
        for attacker in attackers:
            rating, evidence = attack_cell(design, attacker)
            matrix.dynamic[(design, attacker)] = rating
            matrix.evidence[(design, attacker)] = evidence
    return matrix


# -- overhead -----------------------------------------------------------------


@dataclass(frozen=True)
class Summary:
    mean: float
    median: float
    p95: float
    stdev: float | None

    @classmethod
    def of(cls, samples: Sequence[float]) -> Summary:
        if len(samples) == 1:
            return cls(samples[0], samples[0], samples[0], None)
        return cls(
            statistics.fmean(samples),
            statistics.median(samples),
            statistics.quantiles(samples, n=20, method="inclusive")[18],
            statistics.stdev(samples),
        )


@dataclass
class OverheadStats:
    runs: int
    body_size: int
    with_replacement: bool
    replacement_ns: list[int] = field(repr=False)
    total_ns: list[int] = field(repr=False)
    replaced_count: int = 0
    timer_resolution_ns: float = field(
        default_factory=lambda: time.get_clock_info("perf_counter").resolution * 1e9
    )

    @property
    def replacement(self) -> Summary:
        return Summary.of(self.replacement_ns)

    @property
    def total(self) -> Summary:
        return Summary.of(self.total_ns)

    @property
    def replacement_fraction(self) -> float:
        total = sum(self.total_ns)
        return sum(self.replacement_ns) / total if total else 0.0

    def to_record(self) -> dict:
        rep, tot = self.replacement, self.total
        return {
            "runs": self.runs,
            "body_size": self.body_size,
            "with_replacement": self.with_replacement,
            "replaced_count": self.replaced_count,
            "unreplaced_count": self.runs - self.replaced_count,
            "timer_resolution_ns": self.timer_resolution_ns,
            "replacement_ns": {"mean": rep.mean, "median": rep.median, "p95": rep.p95, "stdev": rep.stdev},
            "total_ns": {"mean": tot.mean, "median": tot.median, "p95": tot.p95, "stdev": tot.stdev},
            "replacement_fraction": self.replacement_fraction,
        }


def _bench_site(body_size: int) -> SiteDescriptor:
    # filler fields sized so the serialized body is body_size bytes with a 24-char nonce
    base = len(b"uname=alice&psw=") + 24
    extras, used, i = [], base, 0
    while used + 1 + len(f"f{i:03d}=") < body_size:
        key = f"f{i:03d}"
        room = body_size - used - 1 - len(key) - 1
        value = "v" * min(60, room)
        extras.append(FieldSpec(key, "hidden", value))
        used += 1 + len(key) + 1 + len(value)
        i += 1
    if extras and used < body_size:
        last = extras[-1]
        extras[-1] = FieldSpec(last.name, last.kind, last.value + "v" * (body_size - used))
    return make_site("bench", "bench.example.com", extra_fields=extras)


def benchmark_overhead(n_runs: int, with_replacement: bool = True, body_size: int = 4096) -> OverheadStats:
    """Time ``n_runs`` design 5 requests; without replacement no nonce is registered."""
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    site = _bench_site(body_size)
    logger = Extension.body_logger("observer")
    repl, total, replaced = [], [], 0
    for _ in range(n_runs):
        manager = PasswordManager()
        page = build_page(site)
        if with_replacement:
            entry = CredentialEntry("bench", secret_for(site), site.origin)
            autofill(page, manager, entry, site.password_field, 5)
        else:
            page.find_field(site.password_field).value = "m" * 24
        result = run_pipeline(submit(page, page.forms[0]), [logger], [manager], 5)
        repl.append(result.replacement_ns)
        total.append(result.total_ns)
        replaced += result.changed
    return OverheadStats(n_runs, body_size, with_replacement, repl, total, replaced)


# -- scenario files -----------------------------------------------------------

SCENARIO_ATTACKS = ("scraper", "aware-scraper") + attacks.REFLECTION_MODES


@dataclass
class Scenario:
    """One replayable run, as stored in a scenario file (a single JSON object).

    Keys: ``site`` (a corpus record), ``design`` (3, 4 or 5), ``vault`` (list of
    credential records ``{id, secret, origin, exact_url?, expected_field?}``),
    ``extensions`` (list of ``{name, permissions, stages}`` body loggers) and
    ``attacks`` (any of ``scraper``, ``aware-scraper``, ``rename-field``,
    ``redirect-url``). Only ``site`` is required.
    """

    site: SiteDescriptor
    design: int = 5
    vault: list[CredentialEntry] = field(default_factory=list)
    extensions: list[dict] = field(default_factory=list)
    attacks: list[str] = field(default_factory=list)

    @classmethod
    def from_json(cls, text: str) -> Scenario:
        rec = json.loads(text)
        if "site" not in rec:
            rec = {"site": rec}
        vault = [
            CredentialEntry(
                c["id"], c["secret"], Origin.from_url(c["origin"]),
                c.get("exact_url"), c.get("expected_field"),
            )
            for c in rec.get("vault", [])
        ]
        unknown = set(rec.get("attacks", [])) - set(SCENARIO_ATTACKS)
        if unknown:
            raise ValueError(f"unknown attacks {sorted(unknown)}")
        return cls(
            SiteDescriptor.from_record(rec["site"]),
            check_design(int(rec.get("design", 5))),
            vault,
            list(rec.get("extensions", [])),
            list(rec.get("attacks", [])),
        )

    def to_json(self) -> str:
        return json.dumps({
            "site": self.site.to_record(),
            "design": self.design,
            "vault": [
                {"id": e.id, "secret": e.secret, "origin": e.origin.serialize(),
                 "exact_url": e.exact_url, "expected_field": e.expected_field}
                for e in self.vault
            ],
            "extensions": self.extensions,
            "attacks": self.attacks,
        }, indent=2, sort_keys=True)


@dataclass
class Replay:
    run: ScenarioRun
    result: ScenarioResult
    outcomes: list[attacks.AttackOutcome]


def replay(scenario: Scenario) -> Replay:
    site = scenario.site
    manager = PasswordManager()
    for e in scenario.vault:
        manager.add(e)
    candidates = manager.entries_for(site.origin)
    entry = candidates[0] if candidates else None
    extensions = [
        Extension.body_logger(x["name"], x.get("stages", ("onBeforeRequest", "onSendHeaders")),
                              x.get("permissions", ("webRequest",)))
        for x in scenario.extensions
    ]
    scrapes = []

    def prepare(page: Page) -> None:
        for name in scenario.attacks:
            if name in attacks.REFLECTION_MODES:
                attacks.reflection_attack(page, name)
            else:
                scrapes.append(attacks.dom_scrape_attack(page, aware=name == "aware-scraper"))

    run = run_scenario(site, scenario.design, entry=entry, manager=manager,
                       extensions=extensions, prepare=prepare)
    outcomes = [s.outcome(run.secret) for s in scrapes]
    outcomes += [attacks.extension_log_attack(run.result.trace, x, run.secret) for x in extensions]
    outcomes += [attacks.reflection_outcome(run.result, m, run.secret)
                 for m in scenario.attacks if m in attacks.REFLECTION_MODES]
    return Replay(run, classify(run), outcomes)
