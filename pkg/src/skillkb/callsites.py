"""Locate tool call sites inside skill content.

Skill content is loosely Python-shaped: ``send_email(to=recipient, body=text)``.
A call site is an identifier followed by ``(`` that is not an attribute
access, a Python builtin or a keyword. Arguments are parsed with ``ast``.
"""

from __future__ import annotations

import ast
import builtins
import keyword
import re
from dataclasses import dataclass, field

_CALL = re.compile(r"(?<![\w.])([A-Za-z_]\w*)\s*\(")
_IGNORED = set(dir(builtins)) | set(keyword.kwlist) | {"range", "enumerate", "len", "print"}


@dataclass
class CallSite:
    tool: str
    arg_text: str
    keywords: dict[str, ast.expr] = field(default_factory=dict)
    positional: list[ast.expr] = field(default_factory=list)
    splat: bool = False  # ``**kwargs`` present: remaining params are caller-supplied
    error: str | None = None


def _balanced(text: str, open_at: int) -> int | None:
    """Index of the parenthesis closing the one at ``open_at``."""
    depth = 0
    quote = None
    i = open_at
    while i < len(text):
        ch = text[i]
        if quote:
            if ch == "\\":
                i += 1
            elif ch == quote:
                quote = None
        elif ch in "\"'":
            quote = ch
        elif ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth == 0:
                return i
        i += 1
    return None


def _strip_comments(text: str) -> str:
    out = []
    for line in text.splitlines():
        quote = None
        cut = len(line)
        for i, ch in enumerate(line):
            if quote:
                if ch == quote:
                    quote = None
            elif ch in "\"'":
                quote = ch
            elif ch == "#":
                cut = i
                break
        out.append(line[:cut])
    return "\n".join(out)


def find_calls(content: str) -> list[CallSite]:
    text = _strip_comments(content)
    sites = []
    for m in _CALL.finditer(text):
        name = m.group(1)
        if name in _IGNORED:
            continue
        # skip definitions such as ``def helper(``
        if text[max(0, m.start() - 4) : m.start()].endswith("def "):
            continue
        open_at = m.end() - 1
        close = _balanced(text, open_at)
        if close is None:
            sites.append(CallSite(name, text[open_at + 1 :], error="unbalanced parentheses"))
            continue
        arg_text = text[open_at + 1 : close]
        site = CallSite(name, arg_text)
        try:
            call = ast.parse(f"_f({arg_text})", mode="eval").body
        except SyntaxError:
            site.error = "unparseable arguments"
        else:
            assert isinstance(call, ast.Call)
            site.positional = list(call.args)
            for kw in call.keywords:
                if kw.arg is None:
                    site.splat = True
                else:
                    site.keywords[kw.arg] = kw.value
        sites.append(site)
    return sites


def call_sequence(content: str) -> list[str]:
    """Tool names in textual call order."""
    return [c.tool for c in find_calls(content)]


def literal_type(node: ast.expr) -> str | None:
    """Schema type of a literal argument, or None for non-literals."""
    if isinstance(node, ast.Constant):
        v = node.value
        if isinstance(v, bool):
            return "boolean"
        if isinstance(v, int):
            return "integer"
        if isinstance(v, float):
            return "number"
        if isinstance(v, str):
            return "string"
        if v is None:
            return "null"
        return None
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
        return literal_type(node.operand)
    if isinstance(node, (ast.List, ast.Tuple)):
        return "array"
    if isinstance(node, ast.Dict):
        return "object"
    if isinstance(node, ast.JoinedStr):
        return "string"
    return None


def type_compatible(literal: str, declared: str) -> bool:
    if literal == declared:
        return True
    if declared == "number" and literal == "integer":
        return True
    return False


def is_subsequence(needle: list[str], haystack: list[str]) -> bool:
    it = iter(haystack)
    return all(any(x == y for y in it) for x in needle)
