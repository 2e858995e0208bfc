"""Nonce-based password autofill: managers fill random nonces and the browser
swaps in the real credential only after scripts and extensions have had their
last look at the request."""

from .codec import (
    FORM_URLENCODED,
    FormBody,
    Origin,
    RawPart,
    encode_form_pair,
    origin_matches,
    parse_form_body,
    url_query_contains,
)
from .pipeline import (
    Extension,
    ExtensionAction,
    PipelineResult,
    Stage,
    StageTrace,
    StrippedRequest,
    design4_substitute,
    replace_credentials_in_stream,
    run_pipeline,
    stripped_view,
)
from .vault import (
    ActiveFill,
    ConfigurationError,
    CredentialEntry,
    NoncePolicy,
    PasswordManager,
    ReplacementDirective,
    generate_nonce,
)
from .webmodel import Channel, Field, Form, Page, ScriptHook, WebRequest, autofill, install_script, submit

__version__ = "0.1.0"
