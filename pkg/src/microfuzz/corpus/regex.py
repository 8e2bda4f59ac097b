"""A small backtracking regex engine and a ``split`` built on it.

The engine compiles a regex subset (literals, ``.``, ``[...]`` classes with
negation and ranges, ``(?:...)`` and ``(...)`` groups, ``|`` and greedy
``*``) to a split/jump program and runs it depth-first with an explicit
backtrack stack and no memoization. Ambiguous loops such as ``(?:x|x)*``
therefore explore every way of assigning characters to branches before
giving up, which costs 2**k steps on a k-character run that fails to match.

Bodies of ``*`` must not match the empty string (the VM does not guard
against empty iterations).
"""
from __future__ import annotations

from dataclasses import dataclass

from ..measure import probe
from ..values import STRING
from .base import REGISTRY

CHAR, CLASS, ANY, SPLIT, JMP, MATCH = range(6)

# The split delimiter: a run of non-';' characters closed by ';'. The
# alternation is redundant on purpose.
SPLIT_PATTERN = "(?:[^;]|[^;])*;"


class RegexSyntaxError(ValueError):
    pass


class _Parser:
    def __init__(self, pattern: str):
        self.p = pattern
        self.i = 0

    def peek(self):
        return self.p[self.i] if self.i < len(self.p) else None

    def take(self):
        c = self.peek()
        if c is None:
            raise RegexSyntaxError("unexpected end of pattern")
        self.i += 1
        return c

    # Each parse_* method emits code into a fresh list and returns it; lists
    # are relocated when concatenated, so jumps are stored relative.
    def parse_alt(self) -> list[tuple]:
        branches = [self.parse_seq()]
        while self.peek() == "|":
            self.i += 1
            branches.append(self.parse_seq())
        code = branches[-1]
        for b in reversed(branches[:-1]):
            # split +1, +len(b)+2 ; b ; jmp +len(code)+1 ; code
            code = [(SPLIT, 1, len(b) + 2)] + b + [(JMP, len(code) + 1)] + code
        return code

    def parse_seq(self) -> list[tuple]:
        code: list[tuple] = []
        while self.peek() not in (None, "|", ")"):
            code += self.parse_repeat()
        return code

    def parse_repeat(self) -> list[tuple]:
        body = self.parse_atom()
        if self.peek() == "*":
            self.i += 1
            # L: split +1, +len(body)+2 ; body ; jmp L
            return [(SPLIT, 1, len(body) + 2)] + body + [(JMP, -(len(body) + 1))]
        return body

    def parse_atom(self) -> list[tuple]:
        c = self.take()
        if c == "(":
            if self.p.startswith("?:", self.i):
                self.i += 2
            code = self.parse_alt()
            if self.take() != ")":
                raise RegexSyntaxError("unbalanced parenthesis")
            return code
        if c == "[":
            return [self.parse_class()]
        if c == ".":
            return [(ANY,)]
        if c == "\\":
            return [(CHAR, self.take())]
        if c in "*)|":
            raise RegexSyntaxError(f"unexpected {c!r} at {self.i - 1}")
        return [(CHAR, c)]

    def parse_class(self) -> tuple:
        negated = self.peek() == "^"
        if negated:
            self.i += 1
        chars: set[str] = set()
        first = True
        while True:
            c = self.take()
            if c == "]" and not first:
                break
            first = False
            if c == "\\":
                c = self.take()
            if self.peek() == "-" and self.i + 1 < len(self.p) and self.p[self.i + 1] != "]":
                self.i += 1
                hi = self.take()
                chars.update(chr(x) for x in range(ord(c), ord(hi) + 1))
            else:
                chars.add(c)
        return (CLASS, frozenset(chars), negated)


def _absolute(code: list[tuple]) -> tuple[tuple, ...]:
    out = []
    for pc, op in enumerate(code):
        if op[0] == SPLIT:
            out.append((SPLIT, pc + op[1], pc + op[2]))
        elif op[0] == JMP:
            out.append((JMP, pc + op[1]))
        else:
            out.append(op)
    out.append((MATCH,))
    return tuple(out)


@dataclass(frozen=True)
class Program:
    pattern: str
    code: tuple[tuple, ...]


def compile_pattern(pattern: str) -> Program:
    parser = _Parser(pattern)
    code = parser.parse_alt()
    if parser.i != len(pattern):
        raise RegexSyntaxError(f"unexpected {pattern[parser.i]!r} at {parser.i}")
    return Program(pattern, _absolute(code))


@probe
def _match_at(prog: Program, text: str, start: int, counter: list) -> int | None:
    """End index of the first (leftmost-priority) match at ``start``, or None.

    ``counter[0]`` is incremented by the number of instructions executed.
    """
    code = prog.code
    n = len(text)
    stack = [(0, start)]
    steps = 0
    while stack:
        pc, pos = stack.pop()
        while True:
            steps += 1
            op = code[pc]
            kind = op[0]
            if kind == CHAR:
                if pos < n and text[pos] == op[1]:
                    pc += 1
                    pos += 1
                    continue
                break
            if kind == CLASS:
                if pos < n and (text[pos] in op[1]) != op[2]:
                    pc += 1
                    pos += 1
                    continue
                break
            if kind == ANY:
                if pos < n and text[pos] != "\n":
                    pc += 1
                    pos += 1
                    continue
                break
            if kind == SPLIT:
                stack.append((op[2], pos))
                pc = op[1]
            elif kind == JMP:
                pc = op[1]
            else:
                counter[0] += steps
                return pos
    counter[0] += steps
    return None


def search_split(prog: Program, text: str) -> tuple[list[str], int]:
    """``re.split`` semantics for ``prog``; also returns the step count."""
    counter = [0]
    parts = []
    last = pos = 0
    while pos <= len(text):
        end = _match_at(prog, text, pos, counter)
        if end is not None and end > pos:
            parts.append(text[last:pos])
            last = pos = end
        else:
            pos += 1
    parts.append(text[last:])
    return parts, counter[0]


_SPLIT = compile_pattern(SPLIT_PATTERN)


@REGISTRY.target("ac/regex_split", [STRING], notes="split on a fixed pattern with an ambiguous loop")
def regex_split(text: str) -> list[str]:
    return search_split(_SPLIT, text)[0]


def split_steps(text: str) -> int:
    return search_split(_SPLIT, text)[1]
