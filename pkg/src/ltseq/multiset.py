"""Immutable multiset with counted occurrences and deterministic iteration."""

from __future__ import annotations

from typing import Any, Dict, Iterable, Iterator, List


def term_key(obj: Any) -> str:
    """Stable, total ordering key for heterogeneous multiset elements."""
    if isinstance(obj, tuple):
        return "(" + ",".join(term_key(x) for x in obj) + ")"
    if isinstance(obj, int):
        return "i%012d" % obj
    if isinstance(obj, str):
        return "s" + obj
    key = getattr(obj, "sort_key", None)
    if key is not None:
        return key() if callable(key) else key
    return obj.__class__.__name__ + ":" + repr(obj)


class Multiset:
    """Multiset as a count map. Instances are treated as immutable."""

    __slots__ = ("_counts", "_hash")

    def __init__(self, items: Iterable = ()):
        counts: Dict[Any, int] = {}
        for it in items:
            counts[it] = counts.get(it, 0) + 1
        self._counts = counts
        self._hash = None

    @classmethod
    def from_counts(cls, counts: Dict[Any, int]) -> "Multiset":
        m = cls()
        for k, n in counts.items():
            if n < 0:
                raise ValueError("negative multiplicity for %r" % (k,))
            if n:
                m._counts[k] = n
        return m

    def counts(self) -> Dict[Any, int]:
        return dict(self._counts)

    def count(self, item) -> int:
        return self._counts.get(item, 0)

    def support(self) -> List[Any]:
        return sorted(self._counts, key=term_key)

    def __contains__(self, item) -> bool:
        return item in self._counts

    def __iter__(self) -> Iterator:
        for item in self.support():
            for _ in range(self._counts[item]):
                yield item

    def __len__(self) -> int:
        return sum(self._counts.values())

    def __bool__(self) -> bool:
        return bool(self._counts)

    def __eq__(self, other) -> bool:
        return isinstance(other, Multiset) and self._counts == other._counts

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(frozenset(self._counts.items()))
        return self._hash

    def __add__(self, other: "Multiset | Iterable") -> "Multiset":
        if not isinstance(other, Multiset):
            other = Multiset(other)
        merged = dict(self._counts)
        for k, n in other._counts.items():
            merged[k] = merged.get(k, 0) + n
        return Multiset.from_counts(merged)

    def __sub__(self, other: "Multiset | Iterable") -> "Multiset":
        """Strict difference: raises if other is not contained in self."""
        if not isinstance(other, Multiset):
            other = Multiset(other)
        out = dict(self._counts)
        for k, n in other._counts.items():
            have = out.get(k, 0)
            if have < n:
                raise KeyError("cannot remove %d x %r (have %d)" % (n, k, have))
            if have == n:
                del out[k]
            else:
                out[k] = have - n
        return Multiset.from_counts(out)

    def remove(self, item, n: int = 1) -> "Multiset":
        return self - Multiset([item] * n)

    def add(self, item, n: int = 1) -> "Multiset":
        return self + Multiset([item] * n)

    def contains(self, other: "Multiset") -> bool:
        return all(self.count(k) >= n for k, n in other._counts.items())

    def map(self, fn) -> "Multiset":
        return Multiset(fn(x) for x in self)

    def dedup(self) -> "Multiset":
        return Multiset(self.support())

    def __repr__(self) -> str:
        return "Multiset([%s])" % ", ".join(repr(x) for x in self)


EMPTY = Multiset()
