"""Exact value domain shared by the physical and logical layers.

Physical quantities are fixed-point decimals on a 10^-g grid, represented
with `decimal.Decimal` (exact for the +,-,* we ever perform on them).
Symbolic device/channel values (on, off, L, R, ...) are interned atoms
carrying an optional numeric code used only when a real-valued reading of
an actuator is needed.
"""

from __future__ import annotations

from decimal import Decimal
from fractions import Fraction
from typing import Iterator, Mapping, Optional, Tuple, Union


def dec(x) -> Decimal:
    """Coerce int/str/Decimal to an exact Decimal. Floats are rejected:
    they carry binary rounding error and would fall off the grid."""
    if isinstance(x, Decimal):
        return x
    if isinstance(x, float):
        raise TypeError("float is not an exact decimal; pass a string or Decimal")
    return Decimal(x)


def dec_to_fraction(d: Decimal) -> Fraction:
    return Fraction(d)


def on_grid(d: Decimal, g: int) -> bool:
    """True iff d is an integer multiple of 10^-g."""
    scaled = d.scaleb(g)
    return scaled == scaled.to_integral_value()


def fmt_dec(d: Decimal, g: int) -> str:
    """Render with exactly g fractional digits (g=0 renders an integer)."""
    q = Decimal(1).scaleb(-g) if g > 0 else Decimal(1)
    return str(d.quantize(q))


class Atom:
    """Interned symbolic value; identity is the name alone. Real-valued
    codes for actuator atoms (the sign conventions of plant models) are
    model metadata and live in the model declarations, not here."""

    __slots__ = ("name",)
    _registry: dict = {}

    def __new__(cls, name: str):
        existing = cls._registry.get(name)
        if existing is not None:
            return existing
        obj = object.__new__(cls)
        object.__setattr__(obj, "name", name)
        cls._registry[name] = obj
        return obj

    def __setattr__(self, *a):
        raise AttributeError("Atom is immutable")

    def __repr__(self):
        return self.name

    def __reduce__(self):
        return (Atom, (self.name,))


Value = Union[Decimal, Atom]


def value_key(v: Value) -> tuple:
    """Total order over mixed decimal/atom values (decimals first)."""
    if isinstance(v, Decimal):
        return (0, Fraction(v))
    return (1, v.name)


def fmt_value(v: Value, g: int) -> str:
    if isinstance(v, Decimal):
        return fmt_dec(v, g)
    return v.name


class GridInterval:
    """The finite set {lo + h*10^-g | h in N} intersected with [lo,hi]
    (or [lo,hi) when include_hi is False). Bounds must sit on the grid."""

    __slots__ = ("lo", "hi", "g", "include_hi")

    def __init__(self, lo, hi, g: int, include_hi: bool = True):
        lo, hi = dec(lo), dec(hi)
        if g < 0:
            raise ValueError("granularity must be >= 0")
        if not on_grid(lo, g) or not on_grid(hi, g):
            raise ValueError(f"interval bounds [{lo},{hi}] not on the 10^-{g} grid")
        if lo > hi:
            raise ValueError(f"empty interval [{lo},{hi}]")
        self.lo, self.hi, self.g, self.include_hi = lo, hi, g, include_hi

    def __eq__(self, other):
        return (
            isinstance(other, GridInterval)
            and (self.lo, self.hi, self.g, self.include_hi)
            == (other.lo, other.hi, other.g, other.include_hi)
        )

    def __hash__(self):
        return hash((self.lo, self.hi, self.g, self.include_hi))

    def __len__(self) -> int:
        n = int((self.hi - self.lo).scaleb(self.g)) + 1
        if not self.include_hi:
            n -= 1
        return n

    def points(self) -> Iterator[Decimal]:
        step = Decimal(1).scaleb(-self.g)
        v = self.lo
        for _ in range(len(self)):
            yield v
            v += step

    def __contains__(self, d: Decimal) -> bool:
        if not on_grid(d, self.g) or d < self.lo:
            return False
        return d <= self.hi if self.include_hi else d < self.hi

    def sort_key(self) -> tuple:
        return (Fraction(self.lo), Fraction(self.hi), self.g, self.include_hi)

    def __repr__(self):
        close = "]" if self.include_hi else ")"
        return f"[{self.lo},{self.hi}{close}_{self.g}"


# ---------------------------------------------------------------------------
# Guards: comparisons and boolean connectives over values and bound variables.
# Variables are de Bruijn indices into the enclosing value binders.


class VarRef:
    """Reference to a value binder, as a de Bruijn index."""

    __slots__ = ("index",)
    _cache: dict = {}

    def __new__(cls, index: int):
        obj = cls._cache.get(index)
        if obj is None:
            obj = object.__new__(cls)
            object.__setattr__(obj, "index", index)
            cls._cache[index] = obj
        return obj

    def __setattr__(self, *a):
        raise AttributeError("VarRef is immutable")

    def __repr__(self):
        return f"@{self.index}"


class NameRef:
    """Reference to a named device (used in physical-rule guards, where the
    environment supplies a valuation for device names)."""

    __slots__ = ("name",)
    _cache: dict = {}

    def __new__(cls, name: str):
        obj = cls._cache.get(name)
        if obj is None:
            obj = object.__new__(cls)
            object.__setattr__(obj, "name", name)
            cls._cache[name] = obj
        return obj

    def __setattr__(self, *a):
        raise AttributeError("NameRef is immutable")

    def __repr__(self):
        return self.name


Operand = Union[Decimal, Atom, VarRef, NameRef]

_CMP_OPS = ("<", "<=", "=", "!=", ">", ">=")


def _operand_key(o: Operand) -> tuple:
    if isinstance(o, VarRef):
        return (2, o.index)
    if isinstance(o, NameRef):
        return (3, o.name)
    return value_key(o)


class Guard:
    """Immutable boolean expression tree. Nodes: ('lit', bool),
    ('cmp', op, lhs, rhs), ('not', g), ('and', g1, g2), ('or', g1, g2)."""

    __slots__ = ("node", "_key")
    _intern: dict = {}

    def __new__(cls, node: tuple):
        obj = cls._intern.get(node)
        if obj is None:
            obj = object.__new__(cls)
            object.__setattr__(obj, "node", node)
            object.__setattr__(obj, "_key", None)
            cls._intern[node] = obj
        return obj

    def __setattr__(self, name, value):
        if name == "_key":
            object.__setattr__(self, name, value)
        else:
            raise AttributeError("Guard is immutable")

    # -- constructors

    @staticmethod
    def lit(b: bool) -> "Guard":
        return Guard(("lit", bool(b)))

    @staticmethod
    def cmp(op: str, lhs: Operand, rhs: Operand) -> "Guard":
        if op not in _CMP_OPS:
            raise ValueError(f"unknown comparison {op!r}")
        return Guard(("cmp", op, lhs, rhs))

    def negate(self) -> "Guard":
        return Guard(("not", self))

    def and_(self, other: "Guard") -> "Guard":
        return Guard(("and", self, other))

    def or_(self, other: "Guard") -> "Guard":
        return Guard(("or", self, other))

    # -- structure

    def max_index(self) -> int:
        """Largest de Bruijn index referenced, or -1 if closed."""
        tag = self.node[0]
        if tag == "lit":
            return -1
        if tag == "cmp":
            m = -1
            for o in self.node[2:]:
                if isinstance(o, VarRef):
                    m = max(m, o.index)
            return m
        if tag == "not":
            return self.node[1].max_index()
        return max(self.node[1].max_index(), self.node[2].max_index())

    def is_closed(self) -> bool:
        return self.max_index() < 0

    def device_names(self) -> frozenset:
        tag = self.node[0]
        if tag == "lit":
            return frozenset()
        if tag == "cmp":
            return frozenset(o.name for o in self.node[2:] if isinstance(o, NameRef))
        if tag == "not":
            return self.node[1].device_names()
        return self.node[1].device_names() | self.node[2].device_names()

    def subst(self, index: int, v: Value) -> "Guard":
        """Replace references to `index` by v; deeper references shift down."""
        tag = self.node[0]
        if tag == "lit":
            return self
        if tag == "cmp":
            def sub(o):
                if isinstance(o, VarRef):
                    if o.index == index:
                        return v
                    if o.index > index:
                        return VarRef(o.index - 1)
                return o
            return Guard(("cmp", self.node[1], sub(self.node[2]), sub(self.node[3])))
        if tag == "not":
            return self.node[1].subst(index, v).negate()
        return Guard((tag, self.node[1].subst(index, v), self.node[2].subst(index, v)))

    def shift(self, amount: int, cutoff: int = 0) -> "Guard":
        """Add `amount` to every free index >= cutoff."""
        tag = self.node[0]
        if tag == "lit":
            return self
        if tag == "cmp":
            def sh(o):
                if isinstance(o, VarRef) and o.index >= cutoff:
                    return VarRef(o.index + amount)
                return o
            return Guard(("cmp", self.node[1], sh(self.node[2]), sh(self.node[3])))
        if tag == "not":
            return self.node[1].shift(amount, cutoff).negate()
        return Guard((tag, self.node[1].shift(amount, cutoff),
                      self.node[2].shift(amount, cutoff)))

    def eval(self, names: Optional[Mapping[str, Value]] = None) -> bool:
        """Evaluate a guard with no free indices; named device references
        are looked up in `names`."""
        tag = self.node[0]
        if tag == "lit":
            return self.node[1]
        if tag == "cmp":
            _, op, lhs, rhs = self.node
            def res(o):
                if isinstance(o, VarRef):
                    raise ValueError("guard is not closed")
                if isinstance(o, NameRef):
                    if names is None or o.name not in names:
                        raise ValueError(f"no value for device {o.name!r}")
                    return names[o.name]
                return o
            return _eval_cmp(op, res(lhs), res(rhs))
        if tag == "not":
            return not self.node[1].eval(names)
        if tag == "and":
            return self.node[1].eval(names) and self.node[2].eval(names)
        return self.node[1].eval(names) or self.node[2].eval(names)

    def sort_key(self) -> tuple:
        if self._key is None:
            tag = self.node[0]
            if tag == "lit":
                k = (0, self.node[1])
            elif tag == "cmp":
                k = (1, self.node[1], _operand_key(self.node[2]),
                     _operand_key(self.node[3]))
            elif tag == "not":
                k = (2, self.node[1].sort_key())
            elif tag == "and":
                k = (3, self.node[1].sort_key(), self.node[2].sort_key())
            else:
                k = (4, self.node[1].sort_key(), self.node[2].sort_key())
            object.__setattr__(self, "_key", k)
        return self._key

    def __repr__(self):
        tag = self.node[0]
        if tag == "lit":
            return "true" if self.node[1] else "false"
        if tag == "cmp":
            return f"{self.node[2]!r} {self.node[1]} {self.node[3]!r}"
        if tag == "not":
            return f"!({self.node[1]!r})"
        op = "&&" if tag == "and" else "||"
        return f"({self.node[1]!r} {op} {self.node[2]!r})"


def _eval_cmp(op: str, lhs: Value, rhs: Value) -> bool:
    same_kind = isinstance(lhs, Decimal) == isinstance(rhs, Decimal)
    if op == "=":
        return same_kind and lhs == rhs
    if op == "!=":
        return not (same_kind and lhs == rhs)
    if not same_kind or isinstance(lhs, Atom):
        raise ValueError(f"ordered comparison {op} needs two decimals, "
                         f"got {lhs!r} and {rhs!r}")
    if op == "<":
        return lhs < rhs
    if op == "<=":
        return lhs <= rhs
    if op == ">":
        return lhs > rhs
    return lhs >= rhs


TRUE = Guard.lit(True)
FALSE = Guard.lit(False)
