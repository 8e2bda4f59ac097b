"""Linear-time reference targets that should never be flagged."""
from __future__ import annotations

from ..measure import probe
from ..values import I32, I64, STRING, Array, Ref
from .base import REGISTRY


class Node:
    __slots__ = ("hd", "tl")

    @probe
    def __init__(self, hd: int, tl: "Node | None"):
        self.hd = hd
        self.tl = tl

    def to_list(self) -> list[int]:
        out, node = [], self
        while node is not None:
            out.append(node.hd)
            node = node.tl
        return out


REGISTRY.composite("List", [([I32, Ref("List", nullable=True)], Node)])


@REGISTRY.target("control/string_reverse", [STRING])
def string_reverse(s: str) -> str:
    return s[::-1]


@REGISTRY.target("control/vector_sum", [Array(I64)])
def vector_sum(xs: list[int]) -> int:
    total = 0
    for x in xs:
        total += x
    return total


@REGISTRY.target("control/list_build", [Ref("List")])
def list_build(head: Node) -> Node:
    items = head.to_list()
    out = None
    for x in reversed(items):
        out = Node(x, out)
    return out
