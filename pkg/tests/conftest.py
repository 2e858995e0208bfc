import pytest

from noncefill.codec import Origin
from noncefill.vault import CredentialEntry, PasswordManager
from noncefill.webmodel import Field, Form, Page

SECRET = "P@ss w0rd&=+"
ORIGIN = Origin("https", "login.example.com")
LOGIN_URL = "https://login.example.com/login"
ACTION_URL = "https://login.example.com/session"

_acceptance = []


def make_page(action=ACTION_URL, method="POST", frame_depth=0, channel=None, extra=()):
    form = Form(action, method, [Field("uname", "alice", "text"), Field("psw", "", "password"), *extra])
    kwargs = {"channel": channel} if channel is not None else {}
    return Page(LOGIN_URL, [form], frame_depth=frame_depth, **kwargs)


@pytest.fixture
def entry():
    return CredentialEntry("cred-1", SECRET, ORIGIN)


@pytest.fixture
def manager(entry):
    m = PasswordManager()
    m.add(entry)
    return m


@pytest.fixture
def page():
    return make_page()


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    mark = report.user_properties and dict(report.user_properties).get("acceptance")
    if mark:
        _acceptance.append((mark, "PASS" if report.passed else "FAIL"))


def pytest_runtest_setup(item):
    m = item.get_closest_marker("acceptance")
    if m is not None:
        item.user_properties.append(("acceptance", f"{m.args[0]} {m.args[1]}"))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for label, outcome in sorted(_acceptance):
        terminalreporter.write_line(f"[{outcome}] {label}")
