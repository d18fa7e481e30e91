"""Requestor-supplied task templates: fetching, sanitizing, rendering.

Requestors bring their own HTML; executing their scripts in workers'
browsers is an XSS hazard, so templates are served through a strict
sanitizer that strips script blocks, inline event handlers, and
javascript: URLs.  Placeholders of the form {{field_name}} are
substituted with unit payload values.
"""

from __future__ import annotations

import html
import re
from typing import Mapping

import httpx

from .model import CrowdCafeError

__all__ = ["TemplateFetchError", "load_template", "render_template", "sanitize_html"]


class TemplateFetchError(CrowdCafeError):
    code = "template_fetch_error"


_SCRIPT_RE = re.compile(r"<script\b.*?</script\s*>|<script\b[^>]*/?>", re.I | re.S)
_EVENT_ATTR_RE = re.compile(r"\s+on\w+\s*=\s*(\"[^\"]*\"|'[^']*'|[^\s>]+)", re.I)
_JS_URL_RE = re.compile(r"(\b(?:href|src)\s*=\s*)([\"']?)\s*javascript:[^\"'>\s]*", re.I)
_PLACEHOLDER_RE = re.compile(r"\{\{\s*([a-zA-Z0-9_]+)\s*\}\}")


def sanitize_html(markup: str) -> str:
    """Strip active content from requestor markup."""
    markup = _SCRIPT_RE.sub("", markup)
    markup = _EVENT_ATTR_RE.sub("", markup)
    markup = _JS_URL_RE.sub(r"\1\2", markup)
    return markup


def load_template(ref: str, timeout: float = 5.0) -> str:
    """Resolve a template reference: an http(s) URL or inline markup."""
    if ref.startswith("http://") or ref.startswith("https://"):
        try:
            response = httpx.get(ref, timeout=timeout, follow_redirects=True)
            response.raise_for_status()
        except httpx.HTTPError as exc:
            raise TemplateFetchError(f"cannot fetch template {ref}: {exc}") from None
        return sanitize_html(response.text)
    return sanitize_html(ref)


def render_template(markup: str, payload: Mapping[str, str]) -> str:
    """Substitute {{field}} placeholders with escaped unit payload values."""

    def replace(match: re.Match) -> str:
        name = match.group(1)
        return html.escape(str(payload.get(name, "")))

    return _PLACEHOLDER_RE.sub(replace, markup)
