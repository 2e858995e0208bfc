import pytest

from noncefill.codec import Origin
from noncefill.pipeline import RequestDetails, StrippedRequest, run_pipeline
from noncefill.vault import (
    AutofillError,
    ConfigurationError,
    CredentialEntry,
    NoncePolicy,
    PasswordManager,
    ReplacementDirective,
    generate_nonce,
)
from noncefill.webmodel import Channel, Field, autofill, submit

from conftest import ACTION_URL, ORIGIN, SECRET, make_page


def test_default_nonce_shape():
    nonce = generate_nonce()
    assert len(nonce) == 24
    assert nonce.isalnum() and nonce.isascii()


def test_nonces_are_distinct():
    nonces = {generate_nonce() for _ in range(10_000)}
    assert len(nonces) == 10_000


@pytest.mark.parametrize("policy", [NoncePolicy(0), NoncePolicy(7), NoncePolicy(24, "abcdef"), NoncePolicy(24, "a" * 40)])
def test_invalid_policy_rejected(policy):
    with pytest.raises(ConfigurationError):
        generate_nonce(policy)
    with pytest.raises(ConfigurationError):
        PasswordManager(policy=policy)


def test_custom_policy():
    policy = NoncePolicy(32, "0123456789abcdef")
    nonce = generate_nonce(policy)
    assert policy.conforms(nonce)


def test_credential_entry_invariants():
    with pytest.raises(ConfigurationError):
        CredentialEntry("x", "", ORIGIN)
    with pytest.raises(ConfigurationError):
        CredentialEntry("x", "pw", ORIGIN, exact_url="https://other.example.com/login")
    assert "pw" not in repr(CredentialEntry("x", "pw-hidden", ORIGIN))


def test_directive_rejects_nonce_equal_secret():
    with pytest.raises(ValueError):
        ReplacementDirective("same", "same", ORIGIN, "psw")


def test_register_fill(manager, entry, page):
    fill = manager.register_fill(page, entry, "psw")
    assert manager.policy.conforms(fill.nonce)
    assert fill.nonce not in entry.secret
    assert fill.frame_depth == 0 and fill.channel_secure
    # the manager does not write into the page itself
    assert page.find_field("psw").value == ""


def test_register_fill_unknown_or_wrong_field(manager, entry, page):
    with pytest.raises(AutofillError):
        manager.register_fill(page, entry, "missing")
    with pytest.raises(AutofillError):
        manager.register_fill(page, entry, "uname")


def test_refill_replaces_previous_nonce(manager, entry, page):
    first = autofill(page, manager, entry, "psw", 5)
    second = autofill(page, manager, entry, "psw", 5)
    assert first.nonce != second.nonce
    assert manager.fills() == [second]
    # put the stale nonce back: it must travel unreplaced
    page.find_field("psw").value = first.nonce
    result = run_pipeline(submit(page, page.forms[0]), [], [manager], 5)
    assert first.nonce.encode() in result.wire
    assert b"P%40ss" not in result.wire


def _details(page, body, url=ACTION_URL, request_id="r1"):
    return RequestDetails(request_id, url, "POST", "application/x-www-form-urlencoded", page.page_id, body)


def _body(nonce, name="psw"):
    return f"uname=alice&{name}={nonce}".encode()


def test_all_checks_pass_associates(manager, entry, page):
    fill = autofill(page, manager, entry, "psw", 5)
    assoc = manager.on_before_request(_details(page, _body(fill.nonce)))
    assert [a.fill for a in assoc] == [fill]
    directives = manager.on_request_credentials(StrippedRequest("r1", ACTION_URL, "POST", ""))
    assert len(directives) == 1
    d = directives[0]
    assert (d.nonce, d.secret, d.origin, d.field_name) == (fill.nonce, SECRET, ORIGIN, "psw")
    # association is consumed
    assert manager.on_request_credentials(StrippedRequest("r1", ACTION_URL, "POST", "")) == []


def test_no_association_without_pending(manager):
    assert manager.on_request_credentials(StrippedRequest("nope", ACTION_URL, "POST", "")) == []


@pytest.mark.parametrize("setup, check", [
    (dict(frame_depth=1), "top-level-frame"),
    (dict(channel=Channel(is_https=False)), "secure-channel"),
    (dict(channel=Channel(tls_valid=False)), "secure-channel"),
])
def test_page_state_checks(entry, setup, check):
    manager = PasswordManager()
    page = make_page(**setup)
    fill = autofill(page, manager, entry, "psw", 5)
    assert manager.on_before_request(_details(page, _body(fill.nonce))) == []
    assert manager.refusals == [("r1", check)]


def test_plain_http_destination_fails_channel_check(manager, entry, page):
    fill = autofill(page, manager, entry, "psw", 5)
    url = "http://login.example.com/session"
    assert manager.on_before_request(_details(page, _body(fill.nonce), url=url)) == []
    assert manager.refusals == [("r1", "secure-channel")]


def test_destination_check_cross_origin(manager, entry, page):
    fill = autofill(page, manager, entry, "psw", 5)
    manager.on_before_request(_details(page, _body(fill.nonce), url="https://evil.com/x"))
    assert manager.refusals == [("r1", "destination")]


def test_exact_url_check():
    entry = CredentialEntry("c", SECRET, ORIGIN, exact_url=ACTION_URL)
    manager = PasswordManager()
    page = make_page()
    fill = autofill(page, manager, entry, "psw", 5)
    body = _body(fill.nonce)
    assert manager.on_before_request(_details(page, body, url="https://login.example.com/echo")) == []
    assert manager.on_before_request(_details(page, body, url=ACTION_URL + "#frag", request_id="r2"))


def test_nonce_in_query_check(manager, entry, page):
    fill = autofill(page, manager, entry, "psw", 5)
    url = f"{ACTION_URL}?psw={fill.nonce}"
    assert manager.on_before_request(_details(page, _body(fill.nonce), url=url)) == []
    assert manager.refusals == [("r1", "nonce-not-in-query")]


def test_renamed_field_check(manager, entry, page):
    fill = autofill(page, manager, entry, "psw", 5)
    page.find_field("psw").name = "username"
    assert manager.on_before_request(_details(page, _body(fill.nonce, "username"))) == []
    assert manager.refusals == [("r1", "field-unchanged")]


def test_body_without_nonce_is_ignored(manager, entry, page):
    autofill(page, manager, entry, "psw", 5)
    assert manager.on_before_request(_details(page, b"uname=alice&psw=other")) == []
    assert manager.refusals == []


def test_other_page_is_ignored(manager, entry, page):
    fill = autofill(page, manager, entry, "psw", 5)
    other = make_page()
    assert manager.on_before_request(_details(other, _body(fill.nonce))) == []


def test_two_fills_one_form(entry):
    manager = PasswordManager()
    totp = CredentialEntry("totp", "492-113", ORIGIN)
    page = make_page(extra=[Field("otp", "", "password")])
    f1 = autofill(page, manager, entry, "psw", 5)
    f2 = autofill(page, manager, totp, "otp", 5)
    result = run_pipeline(submit(page, page.forms[0]), [], [manager], 5)
    assert result.wire == b"uname=alice&psw=P%40ss%20w0rd%26%3D%2B&otp=492-113"
    assert f1.nonce.encode() not in result.wire and f2.nonce.encode() not in result.wire


def test_nonce_redrawn_when_inside_secret(monkeypatch):
    secret = "xxABCDEFGHyy"
    draws = iter(["ABCDEFGH", "QRSTUVWX"])
    monkeypatch.setattr("noncefill.vault.generate_nonce", lambda policy: next(draws))
    manager = PasswordManager(policy=NoncePolicy(8))
    fill = manager.register_fill(make_page(), CredentialEntry("c", secret, ORIGIN), "psw")
    assert fill.nonce == "QRSTUVWX"
