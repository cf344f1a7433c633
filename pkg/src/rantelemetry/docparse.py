"""Reader for the JSON-like RRC dump format.

Decoder tools print RRC messages in a JSON dialect that ``json.loads`` rejects:

* ``...`` stands in for elided members or elements,
* an object may wrap an anonymous object (``{ { "a": 1 } }``) or a bare
  array (``{ [ 1, 2 ] }``),
* the top level may be a bare ``"Key": { ... }`` member list, optionally
  followed by a full stop that also closes objects a truncated dump left
  open.

``loads`` accepts plain JSON as well, so serialized configs round-trip.
"""

from __future__ import annotations

import json
import re
from typing import Any

from .errors import MalformedDocument

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<ellipsis>\.\.\.)
  | (?P<string>"(?:[^"\\]|\\.)*")
  | (?P<number>-?(?:0|[1-9]\d*)(?:\.\d+)?(?:[eE][+-]?\d+)?)
  | (?P<word>true|false|null)
  | (?P<punct>[{}\[\]:,])
  | (?P<dot>\.)
    """,
    re.VERBOSE,
)

_ELIDED = object()


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            line = text.count("\n", 0, pos) + 1
            raise MalformedDocument(f"unexpected character {text[pos]!r} on line {line}")
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), pos))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def _fail(self, msg: str):
        if self.i < len(self.tokens):
            pos = self.tokens[self.i][2]
            line = self.text.count("\n", 0, pos) + 1
            raise MalformedDocument(f"{msg} on line {line}")
        raise MalformedDocument(f"{msg} at end of document")

    def peek(self) -> tuple[str, str] | None:
        if self.i < len(self.tokens):
            kind, val, _ = self.tokens[self.i]
            return kind, val
        return None

    def take(self, expected: str | None = None) -> tuple[str, str]:
        tok = self.peek()
        if tok is None:
            self._fail("unexpected end of document")
        if expected is not None and tok[1] != expected:
            self._fail(f"expected {expected!r}, got {tok[1]!r}")
        self.i += 1
        return tok

    def document(self) -> Any:
        tok = self.peek()
        if tok is None:
            raise MalformedDocument("empty document")
        if tok[1] in "{[":
            value = self.value()
        else:
            value = self.members(closing=None)
        if self.peek() == ("dot", "."):
            self.i += 1
        if self.peek() is not None:
            self._fail("trailing content")
        return value

    def value(self) -> Any:
        kind, val = self.take()
        if kind == "string":
            return _unquote(val)
        if kind == "number":
            return float(val) if any(c in val for c in ".eE") else int(val)
        if kind == "word":
            return {"true": True, "false": False, "null": None}[val]
        if kind == "ellipsis":
            return _ELIDED
        if val == "{":
            return self.members(closing="}")
        if val == "[":
            return self.elements()
        self.i -= 1
        self._fail(f"unexpected token {val!r}")

    def members(self, closing: str | None) -> Any:
        obj: dict[str, Any] = {}
        wrapped: list | None = None
        while True:
            tok = self.peek()
            if tok is None:
                if closing is None:
                    break
                self._fail("unterminated object")
            kind, val = tok
            if closing is not None and val == closing:
                self.i += 1
                break
            if kind == "dot":
                # a terminating full stop closes whatever the dump left open
                break
            if val == ",":
                self.i += 1
                continue
            if kind == "ellipsis":
                self.i += 1
                continue
            if val == "{":
                self.i += 1
                inner = self.members(closing="}")
                if not isinstance(inner, dict):
                    self._fail("anonymous object must hold members")
                obj.update(inner)
                continue
            if val == "[":
                self.i += 1
                wrapped = self.elements()
                continue
            if kind != "string":
                self._fail(f"expected a key, got {val!r}")
            self.i += 1
            key = _unquote(val)
            self.take(":")
            item = self.value()
            if item is not _ELIDED:
                obj[key] = item
        if wrapped is not None:
            if obj:
                self._fail("object mixes members with an anonymous array")
            return wrapped
        return obj

    def elements(self) -> list:
        out = []
        while True:
            tok = self.peek()
            if tok is None:
                self._fail("unterminated array")
            if tok[1] == "]":
                self.i += 1
                return out
            if tok[1] == ",":
                self.i += 1
                continue
            item = self.value()
            if item is not _ELIDED:
                out.append(item)


def _unquote(tok: str) -> str:
    try:
        return json.loads(tok)
    except ValueError as exc:
        raise MalformedDocument(f"bad string literal {tok}") from exc


def loads(text: str) -> Any:
    """Parse an RRC dump (or plain JSON) into nested dicts and lists."""
    return _Parser(text).document()


def find_key(tree: Any, key: str) -> Any:
    """Depth-first search for the first value stored under ``key``."""
    if isinstance(tree, dict):
        if key in tree:
            return tree[key]
        for v in tree.values():
            found = find_key(v, key)
            if found is not None:
                return found
    elif isinstance(tree, list):
        for v in tree:
            found = find_key(v, key)
            if found is not None:
                return found
    return None


def parse_listing(text: str) -> dict[str, Any]:
    """Parse an indented ``Section:`` / ``key=value`` decoder printout.

    Nesting follows indentation. Values stay strings; trailing commas and
    ``---`` separator lines are ignored.
    """
    root: dict[str, Any] = {}
    stack: list[tuple[int, dict]] = [(-1, root)]
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.rstrip().rstrip(",").rstrip()
        if not line.strip() or set(line.strip()) == {"-"}:
            continue
        indent = len(line) - len(line.lstrip())
        body = line.strip()
        while stack[-1][0] >= indent:
            stack.pop()
        parent = stack[-1][1]
        if body.endswith(":") and "=" not in body:
            child: dict[str, Any] = {}
            parent[body[:-1].strip()] = child
            stack.append((indent, child))
        elif "=" in body:
            key, _, value = body.partition("=")
            parent[key.strip()] = value.strip()
        else:
            raise MalformedDocument(f"cannot read listing line {lineno}: {body!r}")
    return root
