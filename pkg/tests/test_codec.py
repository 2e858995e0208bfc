import pytest
from hypothesis import given
from hypothesis import strategies as st

from noncefill.codec import (
    FormBody,
    Origin,
    encode_form_pair,
    origin_matches,
    parse_form_body,
    same_url_ignoring_fragment,
    url_query_contains,
)

from oracles import encode_uri_component, origin_triple, percent_decode, split_pair

HTTPS_EXAMPLE = Origin("https", "example.com", 443)


def test_empty_body_has_no_parts():
    assert parse_form_body(b"") == FormBody()
    assert len(parse_form_body(b"")) == 0


def test_parse_example_body():
    body = b"uname=alice&psw=abc%21&x=a+b"
    parsed = parse_form_body(body)
    assert parsed.pairs() == [("uname", "alice"), ("psw", "abc!"), ("x", "a b")]
    # oracle agrees part by part
    for part, seg in zip(parsed.parts, body.split(b"&")):
        name, value = split_pair(seg)
        assert (part.name, part.value) == (percent_decode(name), percent_decode(value))


def test_segment_without_equals_gets_empty_value():
    assert parse_form_body(b"token").pairs() == [("token", "")]
    assert split_pair(b"token") == (b"token", b"")


def test_split_on_first_equals_only():
    assert parse_form_body(b"a=b=c").pairs() == [("a", "b=c")]


@pytest.mark.parametrize("raw, expected", [
    (b"%zz", "%zz"),
    (b"%2", "%2"),
    (b"100%", "100%"),
    (b"%2B", "+"),
    (b"a+%2B+b", "a + b"),
    (b"%E2%82%AC", "€"),
])
def test_lenient_decoding(raw, expected):
    assert parse_form_body(b"k=" + raw).parts[0].value == expected
    assert percent_decode(raw) == expected


def test_empty_segments_survive():
    body = b"&a=1&&b=2&"
    assert parse_form_body(body).to_bytes() == body
    assert len(parse_form_body(body)) == 5


@pytest.mark.parametrize("name, value, expected", [
    ("psw", "P@ss w", b"psw=P%40ss%20w"),
    ("a", "", b"a="),
    ("f!eld", "x~y", b"f!eld=x~y"),
    ("k", "a+b&c=d", b"k=a%2Bb%26c%3Dd"),
    ("k", "*'()-_.", b"k=*'()-_."),
])
def test_encode_form_pair(name, value, expected):
    assert encode_form_pair(name, value) == expected
    assert expected.decode() == encode_uri_component(name) + "=" + encode_uri_component(value)


@given(st.text(), st.text())
def test_encode_matches_oracle(name, value):
    assert encode_form_pair(name, value).decode() == f"{encode_uri_component(name)}={encode_uri_component(value)}"


@given(st.binary())
def test_raw_parts_rejoin_to_input(data):
    assert parse_form_body(data).to_bytes() == data


@given(st.lists(st.sampled_from([b"a", b"=", b"&", b"+", b"%", b"2", b"B", b"%41", b"\xff"]), max_size=30))
def test_decoding_matches_oracle(chunks):
    data = b"".join(chunks)
    segments = data.split(b"&") if data else []
    parsed = parse_form_body(data)
    assert len(parsed) == len(segments)
    for part, seg in zip(parsed.parts, segments):
        name, value = split_pair(seg)
        assert part.name == percent_decode(name)
        assert part.value == percent_decode(value)


@given(st.text(), st.text())
def test_encode_then_parse_is_identity(name, value):
    parsed = parse_form_body(encode_form_pair(name, value))
    assert parsed.pairs() == [(name, value)]


def test_origin_equality_normalizes():
    assert Origin("HTTPS", "Example.COM") == HTTPS_EXAMPLE
    assert Origin("http", "example.com") == Origin("http", "example.com", 80)
    assert Origin("https", "example.com", 8443) != HTTPS_EXAMPLE
    with pytest.raises(ValueError):
        Origin("ftp", "example.com")


@pytest.mark.parametrize("url, expected", [
    ("https://example.com/login", True),
    ("https://example.com:443/login?x=1#frag", True),
    ("https://EXAMPLE.com/", True),
    ("http://example.com/login", False),
    ("https://evil.com/login", False),
    ("https://example.com:8443/login", False),
    ("https://example.com.evil.com/", False),
    ("https://user@example.com/", True),
    ("not a url", False),
    ("https://example.com:99999/", False),
    ("", False),
])
def test_origin_matches(url, expected):
    assert origin_matches(url, HTTPS_EXAMPLE) is expected
    assert (origin_triple(url) == ("https", "example.com", 443)) is expected


hosts = st.from_regex(r"[a-z][a-z0-9]{0,8}(\.[a-z]{2,5}){1,2}", fullmatch=True)
paths = st.from_regex(r"(/[a-z0-9]{0,6}){0,3}", fullmatch=True)


@given(st.sampled_from(["http", "https"]), hosts, st.one_of(st.none(), st.integers(1, 65535)),
       paths, paths, paths)
def test_origin_matches_reflexive_and_path_invariant(scheme, host, port, p1, p2, frag):
    netloc = host if port is None else f"{host}:{port}"
    url = f"{scheme}://{netloc}{p1 or '/'}"
    origin = Origin.from_url(url)
    assert origin_matches(url, origin)
    assert origin_matches(f"{scheme}://{netloc}{p2 or '/'}?q={p1}#{frag}", origin)
    assert (origin.scheme, origin.host, origin.port) == origin_triple(url)


@pytest.mark.parametrize("url, expected", [
    ("https://a.com/login?psw=N123", True),
    ("https://a.com/login?psw=N%31%32%33", True),
    ("https://a.com/login", False),
    ("https://a.com/N123/login", False),
    ("https://a.com/login#N123", False),
    ("https://a.com/login?x=N1+23", False),
])
def test_url_query_contains(url, expected):
    assert url_query_contains(url, "N123") is expected


def test_url_query_contains_falls_back_on_unsplittable_url():
    assert url_query_contains("https://[bad/login?psw=N123", "N123")


def test_same_url_ignoring_fragment():
    assert same_url_ignoring_fragment("https://a.com/x#top", "https://a.com/x")
    assert not same_url_ignoring_fragment("https://a.com/x?y", "https://a.com/x")
