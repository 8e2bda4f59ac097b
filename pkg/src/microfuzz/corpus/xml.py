"""A lenient XML-ish scanner that summarizes elements and their text.

Markup that carries no element data is skipped by loops driven by
:meth:`Tokener.next_meta`:

* ``<!-- ... -->`` comments, ``<? ... ?>`` processing instructions and
  ``<% ... %>`` template directives run to their closing delimiter,
* other ``<! ... >`` declarations run to the matching ``>`` (nesting counted),
* ``</`` followed by something other than a name is a bogus comment that
  runs to the next ``>``.

At the end of input ``next_meta`` keeps handing back the final character
instead of signalling exhaustion, so a section left open at the end of the
text never terminates unless repeating that character happens to close it.
"""
from __future__ import annotations

from ..measure import probe
from ..values import STRING
from .base import REGISTRY


class Tokener:
    @probe
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def more(self) -> bool:
        return self.pos < len(self.text)

    def peek(self, k: int = 0) -> str:
        i = self.pos + k
        return self.text[i] if i < len(self.text) else ""

    def next(self) -> str:
        c = self.peek()
        if c:
            self.pos += 1
        return c

    @probe
    def next_meta(self) -> str:
        if self.pos < len(self.text):
            c = self.text[self.pos]
            self.pos += 1
            return c
        return self.text[-1]  # should signal end of input

    def until(self, stops: str) -> str:
        start = self.pos
        while self.pos < len(self.text) and self.text[self.pos] not in stops:
            self.pos += 1
        return self.text[start:self.pos]


@probe
def skip_until(tok: Tokener, closer: str) -> None:
    window = ""
    while not window.endswith(closer):
        window = (window + tok.next_meta())[-len(closer):]


@probe
def skip_declaration(tok: Tokener) -> None:
    depth = 1
    while depth > 0:
        c = tok.next_meta()
        if c == "<":
            depth += 1
        elif c == ">":
            depth -= 1


def _tag_name(raw: str) -> str:
    raw = raw.strip()
    return raw.split(None, 1)[0] if raw else ""


def scan(text: str) -> list[tuple[str, str]]:
    """(tag, direct text) for every element, in start-tag order."""
    tok = Tokener(text)
    elements: list[list[str]] = []
    stack: list[int] = []
    while tok.more():
        if tok.peek() != "<":
            chunk = tok.until("<")
            if stack:
                elements[stack[-1]][1] += chunk
            continue
        tok.next()
        c = tok.peek()
        if c == "!":
            tok.next()
            if tok.peek() == "-" and tok.peek(1) == "-":
                tok.pos += 2
                skip_until(tok, "-->")
            else:
                skip_declaration(tok)
        elif c in ("?", "%"):
            tok.next()
            skip_until(tok, c + ">")
        elif c == "/" and not (tok.peek(1).isalpha() or tok.peek(1) in (">", "_")):
            tok.next()
            skip_until(tok, ">")
        elif c == "/":
            tok.next()
            name = _tag_name(tok.until(">"))
            tok.next()
            for depth in range(len(stack) - 1, -1, -1):
                if elements[stack[depth]][0] == name:
                    del stack[depth:]
                    break
        else:
            raw = tok.until(">")
            tok.next()
            empty = raw.endswith("/")
            name = _tag_name(raw[:-1] if empty else raw)
            elements.append([name, ""])
            if not empty:
                stack.append(len(elements) - 1)
    return [(name, body) for name, body in elements]


@REGISTRY.target("ac/comment_scan", [STRING], notes="element summary of markup text")
def comment_scan(text: str) -> list[tuple[str, str]]:
    return scan(text)
