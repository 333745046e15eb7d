"""Finite-support probability (sub-)distributions with exact rational weights.

A `FiniteDist` has total mass exactly 1; a `SubDist` has mass in [0,1] and
the empty sub-distribution (mass 0) is a legal value so that weak-step
composition stays closed. Support iteration follows a canonical key order,
so downstream serialization and solver pivoting are deterministic.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Callable, Dict, Generic, Iterable, Iterator, Tuple, TypeVar

T = TypeVar("T")

ZERO = Fraction(0)
ONE = Fraction(1)


def _canon_key(obj) -> tuple:
    """Canonical in-run sort key: interned carriers order by their
    interning number, everything else by structural key inside a type
    bucket. Both orders are deterministic for a deterministic run."""
    uid = getattr(obj, "uid", None)
    if uid is not None:
        return (0, uid)
    sk = getattr(obj, "sort_key", None)
    if sk is not None:
        return (0, (), sk() if callable(sk) else sk)
    from decimal import Decimal

    if isinstance(obj, (int, Fraction, Decimal)):
        return (1, Fraction(obj))
    if isinstance(obj, str):
        return (2, obj)
    if isinstance(obj, tuple):
        return (3, tuple(_canon_key(x) for x in obj))
    return (4, repr(obj))


class SubDist(Generic[T]):
    """Immutable finite map from carriers to positive rational weights,
    total mass <= 1."""

    __slots__ = ("_items", "_mass", "_hash")

    def __init__(self, weights: Dict[T, Fraction], _checked: bool = False):
        if not _checked:
            clean = {}
            for o, w in weights.items():
                w = Fraction(w)
                if w < 0:
                    raise ValueError(f"negative weight {w} at {o!r}")
                if w > 0:
                    clean[o] = clean.get(o, ZERO) + w
            weights = clean
        items = tuple(sorted(weights.items(), key=lambda kv: _canon_key(kv[0])))
        mass = sum((w for _, w in items), ZERO)
        if mass > 1:
            raise ValueError(f"total mass {mass} exceeds 1")
        object.__setattr__(self, "_items", items)
        object.__setattr__(self, "_mass", mass)
        object.__setattr__(self, "_hash", None)

    def __setattr__(self, *a):
        raise AttributeError("distributions are immutable")

    # -- queries

    @property
    def mass(self) -> Fraction:
        return self._mass

    def support(self) -> Tuple[T, ...]:
        return tuple(o for o, _ in self._items)

    def items(self) -> Tuple[Tuple[T, Fraction], ...]:
        return self._items

    def __getitem__(self, o: T) -> Fraction:
        for k, w in self._items:
            if k == o:
                return w
        return ZERO

    def __contains__(self, o: T) -> bool:
        return any(k == o for k, _ in self._items)

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self) -> Iterator[T]:
        return iter(self.support())

    def __eq__(self, other):
        return isinstance(other, SubDist) and self._items == other._items

    def __hash__(self):
        if self._hash is None:
            object.__setattr__(self, "_hash", hash(self._items))
        return self._hash

    def __repr__(self):
        if not self._items:
            return "{<empty>}"
        body = ", ".join(f"{o!r}: {w}" for o, w in self._items)
        return "{" + body + "}"

    # -- transforms

    def scale(self, p: Fraction) -> "SubDist[T]":
        p = Fraction(p)
        if p < 0:
            raise ValueError("negative scale")
        return SubDist({o: w * p for o, w in self._items})

    def map(self, f: Callable[[T], T]) -> "SubDist[T]":
        out: Dict[T, Fraction] = {}
        for o, w in self._items:
            k = f(o)
            out[k] = out.get(k, ZERO) + w
        return SubDist(out)

    def as_full(self) -> "FiniteDist[T]":
        if self._mass != 1:
            raise ValueError(f"mass is {self._mass}, not 1")
        return FiniteDist(dict(self._items))


class FiniteDist(SubDist[T]):
    """Sub-distribution whose mass is exactly 1."""

    def __init__(self, weights: Dict[T, Fraction], _checked: bool = False):
        super().__init__(weights, _checked)
        if self._mass != 1:
            raise ValueError(f"weights sum to {self._mass}, expected exactly 1")

    def map(self, f: Callable[[T], T]) -> "FiniteDist[T]":
        out: Dict[T, Fraction] = {}
        for o, w in self._items:
            k = f(o)
            out[k] = out.get(k, ZERO) + w
        return FiniteDist(out)


EMPTY: SubDist = SubDist({})


def dirac(o: T) -> FiniteDist[T]:
    return FiniteDist({o: ONE})


def uniform(objects: Iterable[T]) -> FiniteDist[T]:
    objs = list(objects)
    if not objs:
        raise ValueError("uniform over empty set")
    w = Fraction(1, len(objs))
    out: Dict[T, Fraction] = {}
    for o in objs:
        out[o] = out.get(o, ZERO) + w
    return FiniteDist(out)


def combine(parts: Iterable[Tuple[Fraction, SubDist[T]]]) -> SubDist[T]:
    """Convex combination sum p_i * gamma_i; equal carriers merge. Raises if
    the exact total mass exceeds 1."""
    out: Dict[T, Fraction] = {}
    for p, gamma in parts:
        p = Fraction(p)
        if p < 0:
            raise ValueError("negative coefficient")
        if p == 0:
            continue
        for o, w in gamma.items():
            out[o] = out.get(o, ZERO) + p * w
    return SubDist(out)


def product(d1: SubDist, d2: SubDist, pair=lambda a, b: (a, b)) -> SubDist:
    """Independent product, with carriers merged through `pair`."""
    out: Dict = {}
    for a, wa in d1.items():
        for b, wb in d2.items():
            k = pair(a, b)
            out[k] = out.get(k, ZERO) + wa * wb
    return SubDist(out)


def expect(d: SubDist[T], f: Callable[[T], Fraction]) -> Fraction:
    return sum((w * f(o) for o, w in d.items()), ZERO)


def product_par(pi1: SubDist, pi2: SubDist) -> SubDist:
    """Distribute parallel composition over two process distributions:
    the weight of canonicalize(P1 || P2) accumulates pi1(P1) * pi2(P2)."""
    from .syntax import par

    return product(pi1, pi2, pair=lambda a, b: par([a, b]))


def pad_dead(gamma: SubDist, dead=None) -> FiniteDist:
    """Top up a sub-distribution to mass 1 by routing the missing mass to
    the absorbing dead system."""
    if dead is None:
        from .semantics import DEAD as dead
    missing = ONE - gamma.mass
    out = dict(gamma.items())
    if missing > 0:
        out[dead] = out.get(dead, ZERO) + missing
    return FiniteDist(out)
