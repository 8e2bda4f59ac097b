"""A separately chained hash table with a weak string hash.

The hash only looks at the leading run of lowercase ASCII letters, so every
key that starts with anything else lands in one chain. Chain lookups use a
constant-time string comparison that always walks the longer key.
"""
from __future__ import annotations

from typing import Callable

from ..measure import probe
from ..values import STRING, Array
from .base import REGISTRY

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
MASK64 = (1 << 64) - 1


def weak_hash(key: str) -> int:
    h = FNV_OFFSET
    for ch in key:
        if not "a" <= ch <= "z":
            break
        h = ((h ^ ord(ch)) * FNV_PRIME) & MASK64
    return h


def ct_equals(a: str, b: str) -> bool:
    la, lb = len(a), len(b)
    diff = la ^ lb
    for i in range(max(la, lb)):
        x = ord(a[i]) if i < la else 0
        y = ord(b[i]) if i < lb else 0
        diff |= x ^ y
    return diff == 0


class ChainedTable:
    def __init__(self, hasher: Callable[[str], int] = weak_hash,
                 equals: Callable[[str, str], bool] = ct_equals, capacity: int = 16):
        self.hasher = hasher
        self.equals = equals
        self.buckets: list[list[str]] = [[] for _ in range(capacity)]
        self.size = 0
        self.comparisons = 0

    @probe
    def insert(self, key: str) -> bool:
        chain = self.buckets[self.hasher(key) % len(self.buckets)]
        eq = self.equals
        for k in chain:
            self.comparisons += 1
            if eq(k, key):
                return False
        chain.append(key)
        self.size += 1
        if self.size > 0.75 * len(self.buckets):
            self._resize()
        return True

    def _resize(self):
        old = self.buckets
        self.buckets = [[] for _ in range(2 * len(old))]
        for chain in old:
            for k in chain:
                self.buckets[self.hasher(k) % len(self.buckets)].append(k)

    def stats(self) -> dict:
        return {
            "size": self.size,
            "buckets": len(self.buckets),
            "comparisons": self.comparisons,
            "longest_chain": max((len(c) for c in self.buckets), default=0),
        }


def insert_all(keys, equals=ct_equals) -> dict:
    table = ChainedTable(equals=equals)
    for k in keys:
        table.insert(k)
    return table.stats()


@REGISTRY.target("ac/colliding_table_insert", [Array(STRING)],
                 notes="insert every key into a fresh chained table")
def colliding_table_insert(keys: list[str]) -> dict:
    if not keys:
        return {}
    return insert_all(keys)
