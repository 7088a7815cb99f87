"""Prompt templates shipped with the package.

Each ``prompts/<name>.txt`` file holds a system part and a user part split by
a ``=== user ===`` line. Placeholders are ``{name}``; unknown braces are left
untouched so JSON examples need no escaping.
"""

from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources

from .gateway import ChatRequest, Message

TEMPLATE_NAMES = (
    "plan_extract",
    "functional_extract",
    "atomic_extract",
    "merge",
    "general_filter",
    "tool_schema_filter",
    "tool_summary",
    "rewrite",
    "self_filter",
    "task_synthesis",
)

_SPLIT = "=== user ==="
_PLACEHOLDER = re.compile(r"\{(\w+)\}")


@lru_cache(maxsize=None)
def load_template(name: str) -> tuple[str, str]:
    if name not in TEMPLATE_NAMES:
        raise KeyError(f"unknown prompt template {name!r}")
    text = resources.files("skillkb").joinpath("prompts").joinpath(f"{name}.txt").read_text(encoding="utf-8")
    system, _, user = text.partition(_SPLIT)
    return system.strip() + "\n", user.strip() + "\n"


def fill(template: str, **values: object) -> str:
    def sub(m: re.Match) -> str:
        key = m.group(1)
        return str(values[key]) if key in values else m.group(0)

    return _PLACEHOLDER.sub(sub, template)


def build_request(name: str, temperature: float = 0.9, max_output_tokens: int = 2048, **values: object) -> ChatRequest:
    system, user = load_template(name)
    system_values = {k: v for k, v in values.items()}
    # unfilled example slots in the system part collapse to nothing
    for key in _PLACEHOLDER.findall(system):
        system_values.setdefault(key, "")
    return ChatRequest(
        (Message("system", fill(system, **system_values)), Message("user", fill(user, **values))),
        temperature=temperature,
        max_output_tokens=max_output_tokens,
    )


def system_marker(name: str) -> str:
    """First line of a template's system part; identifies its requests."""
    return load_template(name)[0].splitlines()[0]
