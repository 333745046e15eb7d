"""Process terms in canonical form.

Terms are immutable, hash-consed, and nameless: value binders (channel
input, sensor read) and recursion binders are de Bruijn indices, so
alpha-equivalent terms are literally the same object. Parallel
compositions are flattened, sorted by a structural order, and stripped of
nil units; conditionals with closed guards are resolved on construction.
Two terms are structurally congruent exactly when they are identical.
"""

from __future__ import annotations

from decimal import Decimal
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

from .values import Atom, Guard, Value, VarRef, value_key

Operand = Union[Decimal, Atom, VarRef]


def _operand_key(v: Operand) -> tuple:
    if isinstance(v, VarRef):
        return (2, v.index)
    return value_key(v)


def _operand_max_index(v: Operand) -> int:
    return v.index if isinstance(v, VarRef) else -1


def _operand_subst(v: Operand, index: int, value: Value) -> Operand:
    if isinstance(v, VarRef):
        if v.index == index:
            return value
        if v.index > index:
            return VarRef(v.index - 1)
    return v


class Term:
    """Base for interned process terms. Identity is structural equality;
    `uid` is the interning sequence number (cheap in-run total order)."""

    __slots__ = ("_key", "_vmax", "_pmax", "uid")
    _intern: Dict[tuple, "Term"] = {}

    _rank = -1

    def __repr__(self):
        return render(self)

    def sort_key(self) -> tuple:
        return self._key

    @property
    def max_value_index(self) -> int:
        return self._vmax

    @property
    def max_proc_index(self) -> int:
        return self._pmax

    @property
    def closed(self) -> bool:
        return self._vmax < 0 and self._pmax < 0


def _mk(cls, intern_key: tuple, key: tuple, vmax: int, pmax: int, fields: dict):
    obj = Term._intern.get(intern_key)
    if obj is not None:
        return obj
    obj = object.__new__(cls)
    object.__setattr__(obj, "_key", key)
    object.__setattr__(obj, "_vmax", vmax)
    object.__setattr__(obj, "_pmax", pmax)
    object.__setattr__(obj, "uid", len(Term._intern))
    for name, val in fields.items():
        object.__setattr__(obj, name, val)
    Term._intern[intern_key] = obj
    return obj


# ---------------------------------------------------------------------------
# Probabilistic choice: nonempty weighted branches, weights sum to 1.
# Canonical form merges equal branches and sorts by term order, so the
# choice coincides with the distribution it denotes.

Choice = Tuple[Tuple[Fraction, "Term"], ...]


def choice(branches: Iterable[Tuple[Fraction, "Term"]]) -> Choice:
    merged: Dict[Term, Fraction] = {}
    for w, p in branches:
        w = Fraction(w)
        if w <= 0:
            raise ValueError(f"branch weight {w} not in (0,1]")
        merged[p] = merged.get(p, Fraction(0)) + w
    if not merged:
        raise ValueError("empty probabilistic choice")
    total = sum(merged.values())
    if total != 1:
        raise ValueError(f"branch weights sum to {total}, expected exactly 1")
    ordered = sorted(merged.items(), key=lambda kv: kv[0].sort_key())
    return tuple((w, p) for p, w in ordered)


def just(p: "Term") -> Choice:
    """Embed a plain continuation as the one-branch choice."""
    return ((Fraction(1), p),)


def _choice_key(c: Choice) -> tuple:
    return tuple((w, p.sort_key()) for w, p in c)


def _choice_vmax(c: Choice) -> int:
    return max(p._vmax for _, p in c)


def _choice_pmax(c: Choice) -> int:
    return max(p._pmax for _, p in c)


# ---------------------------------------------------------------------------
# Node constructors. Every constructor returns the canonical interned term.


class Nil(Term):
    __slots__ = ()
    _rank = 0


NIL: Nil = _mk(Nil, ("nil",), (0,), -1, -1, {})


class Tick(Term):
    __slots__ = ("cont",)
    _rank = 1


def tick(cont: Choice) -> Term:
    return _mk(
        Tick,
        ("tick", cont),
        (1, _choice_key(cont)),
        _choice_vmax(cont),
        _choice_pmax(cont),
        {"cont": cont},
    )


class TimeoutOut(Term):
    __slots__ = ("chan", "value", "cont", "alt")
    _rank = 2


def timeout_out(chan: str, value: Operand, cont: Choice, alt: Choice) -> Term:
    return _mk(
        TimeoutOut,
        ("tout", chan, value, cont, alt),
        (2, chan, _operand_key(value), _choice_key(cont), _choice_key(alt)),
        max(_operand_max_index(value), _choice_vmax(cont), _choice_vmax(alt)),
        max(_choice_pmax(cont), _choice_pmax(alt)),
        {"chan": chan, "value": value, "cont": cont, "alt": alt},
    )


class TimeoutIn(Term):
    """Channel input with timeout; the received value is index 0 in cont."""

    __slots__ = ("chan", "cont", "alt")
    _rank = 3


def timeout_in(chan: str, cont: Choice, alt: Choice) -> Term:
    return _mk(
        TimeoutIn,
        ("tin", chan, cont, alt),
        (3, chan, _choice_key(cont), _choice_key(alt)),
        max(_choice_vmax(cont) - 1, _choice_vmax(alt)),
        max(_choice_pmax(cont), _choice_pmax(alt)),
        {"chan": chan, "cont": cont, "alt": alt},
    )


class Read(Term):
    """Sensor read; the sampled value is index 0 in cont."""

    __slots__ = ("sensor", "cont")
    _rank = 4


def read(sensor: str, cont: Choice) -> Term:
    return _mk(
        Read,
        ("read", sensor, cont),
        (4, sensor, _choice_key(cont)),
        _choice_vmax(cont) - 1,
        _choice_pmax(cont),
        {"sensor": sensor, "cont": cont},
    )


class Write(Term):
    __slots__ = ("actuator", "value", "cont")
    _rank = 5


def write(actuator: str, value: Operand, cont: Choice) -> Term:
    return _mk(
        Write,
        ("write", actuator, value, cont),
        (5, actuator, _operand_key(value), _choice_key(cont)),
        max(_operand_max_index(value), _choice_vmax(cont)),
        _choice_pmax(cont),
        {"actuator": actuator, "value": value, "cont": cont},
    )


class Par(Term):
    """Canonical parallel: >= 2 components, none nil, none Par, sorted."""

    __slots__ = ("parts",)
    _rank = 6


def par(components: Iterable[Term]) -> Term:
    flat: List[Term] = []
    for p in components:
        if isinstance(p, Par):
            flat.extend(p.parts)
        elif p is not NIL:
            flat.append(p)
    if not flat:
        return NIL
    if len(flat) == 1:
        return flat[0]
    parts = tuple(sorted(flat, key=lambda t: t.sort_key()))
    return _mk(
        Par,
        ("par", parts),
        (6, tuple(p.sort_key() for p in parts)),
        max(p._vmax for p in parts),
        max(p._pmax for p in parts),
        {"parts": parts},
    )


class If(Term):
    """Conditional whose guard still references a value binder; closed
    guards are resolved by the constructor and never reach this node."""

    __slots__ = ("guard", "then", "els")
    _rank = 7


def iff(guard: Guard, then: Term, els: Term) -> Term:
    if guard.is_closed():
        return then if guard.eval() else els
    return _mk(
        If,
        ("if", guard, then, els),
        (7, guard.sort_key(), then.sort_key(), els.sort_key()),
        max(guard.max_index(), then._vmax, els._vmax),
        max(then._pmax, els._pmax),
        {"guard": guard, "then": then, "els": els},
    )


class Restrict(Term):
    __slots__ = ("body", "chan")
    _rank = 8


def restrict(body: Term, chan: str) -> Term:
    return _mk(
        Restrict,
        ("res", body, chan),
        (8, body.sort_key(), chan),
        body._vmax,
        body._pmax,
        {"body": body, "chan": chan},
    )


class Var(Term):
    __slots__ = ("index",)
    _rank = 9


def var(index: int) -> Term:
    return _mk(Var, ("var", index), (9, index), -1, index, {"index": index})


class Fix(Term):
    """Time-guarded recursion; the recursion variable is process index 0
    in the body."""

    __slots__ = ("body",)
    _rank = 10


def fix(body: Term) -> Term:
    return _mk(
        Fix,
        ("fix", body),
        (10, body.sort_key()),
        body._vmax,
        body._pmax - 1,
        {"body": body},
    )


Process = Term


# ---------------------------------------------------------------------------
# Substitution and unfolding (memoized; terms are immutable).

_subst_value_memo: Dict[tuple, Term] = {}
_subst_proc_memo: Dict[tuple, Term] = {}
_unfold_memo: Dict[Term, Term] = {}


def _choice_subst_value(c: Choice, index: int, v: Value) -> Choice:
    return choice((w, substitute(p, index, v)) for w, p in c)


def substitute(p: Term, index: int, v: Value) -> Term:
    """Capture-avoiding substitution of a closed value for the value binder
    at de Bruijn `index`; deeper free indices shift down by one."""
    if p._vmax < index:
        return p
    key = (p, index, v if not isinstance(v, Atom) else v.name)
    hit = _subst_value_memo.get(key)
    if hit is not None:
        return hit
    if isinstance(p, Tick):
        out = tick(_choice_subst_value(p.cont, index, v))
    elif isinstance(p, TimeoutOut):
        out = timeout_out(
            p.chan,
            _operand_subst(p.value, index, v),
            _choice_subst_value(p.cont, index, v),
            _choice_subst_value(p.alt, index, v),
        )
    elif isinstance(p, TimeoutIn):
        out = timeout_in(
            p.chan,
            _choice_subst_value(p.cont, index + 1, v),
            _choice_subst_value(p.alt, index, v),
        )
    elif isinstance(p, Read):
        out = read(p.sensor, _choice_subst_value(p.cont, index + 1, v))
    elif isinstance(p, Write):
        out = write(
            p.actuator,
            _operand_subst(p.value, index, v),
            _choice_subst_value(p.cont, index, v),
        )
    elif isinstance(p, Par):
        out = par(substitute(q, index, v) for q in p.parts)
    elif isinstance(p, If):
        out = iff(
            p.guard.subst(index, v),
            substitute(p.then, index, v),
            substitute(p.els, index, v),
        )
    elif isinstance(p, Restrict):
        out = restrict(substitute(p.body, index, v), p.chan)
    elif isinstance(p, Fix):
        out = fix(substitute(p.body, index, v))
    else:  # Nil, Var carry no value references
        out = p
    _subst_value_memo[key] = out
    return out


def _choice_subst_proc(c: Choice, index: int, q: Term) -> Choice:
    return choice((w, subst_proc(p, index, q)) for w, p in c)


def subst_proc(p: Term, index: int, q: Term) -> Term:
    """Substitute the closed process q for process index `index`."""
    if p._pmax < index:
        return p
    key = (p, index, q)
    hit = _subst_proc_memo.get(key)
    if hit is not None:
        return hit
    if isinstance(p, Var):
        out = q if p.index == index else (
            var(p.index - 1) if p.index > index else p
        )
    elif isinstance(p, Tick):
        out = tick(_choice_subst_proc(p.cont, index, q))
    elif isinstance(p, TimeoutOut):
        out = timeout_out(
            p.chan,
            p.value,
            _choice_subst_proc(p.cont, index, q),
            _choice_subst_proc(p.alt, index, q),
        )
    elif isinstance(p, TimeoutIn):
        out = timeout_in(
            p.chan,
            _choice_subst_proc(p.cont, index, q),
            _choice_subst_proc(p.alt, index, q),
        )
    elif isinstance(p, Read):
        out = read(p.sensor, _choice_subst_proc(p.cont, index, q))
    elif isinstance(p, Write):
        out = write(p.actuator, p.value, _choice_subst_proc(p.cont, index, q))
    elif isinstance(p, Par):
        out = par(subst_proc(r, index, q) for r in p.parts)
    elif isinstance(p, If):
        out = iff(
            p.guard,
            subst_proc(p.then, index, q),
            subst_proc(p.els, index, q),
        )
    elif isinstance(p, Restrict):
        out = restrict(subst_proc(p.body, index, q), p.chan)
    elif isinstance(p, Fix):
        out = fix(subst_proc(p.body, index + 1, q))
    else:
        out = p
    _subst_proc_memo[key] = out
    return out


def unfold_fix(p: Term) -> Term:
    """One unfolding of a recursive term: the body with the whole fix
    substituted for its recursion variable."""
    if not isinstance(p, Fix):
        raise TypeError(f"unfold_fix expects a fix term, got {type(p).__name__}")
    hit = _unfold_memo.get(p)
    if hit is None:
        hit = subst_proc(p.body, 0, p)
        _unfold_memo[p] = hit
    return hit


def canonicalize(p: Term) -> Term:
    """Terms built through this module's constructors are canonical by
    construction; rebuilding through them is therefore the identity. The
    function is kept as the explicit entry point for foreign builders."""
    if isinstance(p, (Nil, Var)):
        return p
    if isinstance(p, Tick):
        return tick(choice((w, canonicalize(q)) for w, q in p.cont))
    if isinstance(p, TimeoutOut):
        return timeout_out(
            p.chan,
            p.value,
            choice((w, canonicalize(q)) for w, q in p.cont),
            choice((w, canonicalize(q)) for w, q in p.alt),
        )
    if isinstance(p, TimeoutIn):
        return timeout_in(
            p.chan,
            choice((w, canonicalize(q)) for w, q in p.cont),
            choice((w, canonicalize(q)) for w, q in p.alt),
        )
    if isinstance(p, Read):
        return read(p.sensor, choice((w, canonicalize(q)) for w, q in p.cont))
    if isinstance(p, Write):
        return write(
            p.actuator, p.value, choice((w, canonicalize(q)) for w, q in p.cont)
        )
    if isinstance(p, Par):
        return par(canonicalize(q) for q in p.parts)
    if isinstance(p, If):
        return iff(p.guard, canonicalize(p.then), canonicalize(p.els))
    if isinstance(p, Restrict):
        return restrict(canonicalize(p.body), p.chan)
    if isinstance(p, Fix):
        return fix(canonicalize(p.body))
    raise TypeError(f"not a process term: {p!r}")


# ---------------------------------------------------------------------------
# Static analyses.


def mentioned_devices(p: Term) -> Tuple[frozenset, frozenset]:
    """(sensors, actuators) syntactically occurring in p."""
    sensors, actuators = set(), set()
    seen = set()

    def walk(t: Term):
        if t in seen:
            return
        seen.add(t)
        if isinstance(t, Read):
            sensors.add(t.sensor)
            for _, q in t.cont:
                walk(q)
        elif isinstance(t, Write):
            actuators.add(t.actuator)
            for _, q in t.cont:
                walk(q)
        elif isinstance(t, Tick):
            for _, q in t.cont:
                walk(q)
        elif isinstance(t, (TimeoutOut, TimeoutIn)):
            for _, q in t.cont:
                walk(q)
            for _, q in t.alt:
                walk(q)
        elif isinstance(t, Par):
            for q in t.parts:
                walk(q)
        elif isinstance(t, If):
            walk(t.then)
            walk(t.els)
        elif isinstance(t, Restrict):
            walk(t.body)
        elif isinstance(t, Fix):
            walk(t.body)

    walk(p)
    return frozenset(sensors), frozenset(actuators)


def mentioned_channels(p: Term) -> frozenset:
    chans = set()
    seen = set()

    def walk(t: Term):
        if t in seen:
            return
        seen.add(t)
        if isinstance(t, (TimeoutOut, TimeoutIn)):
            chans.add(t.chan)
            for _, q in t.cont:
                walk(q)
            for _, q in t.alt:
                walk(q)
        elif isinstance(t, (Tick, Read, Write)):
            for _, q in t.cont:
                walk(q)
        elif isinstance(t, Par):
            for q in t.parts:
                walk(q)
        elif isinstance(t, If):
            walk(t.then)
            walk(t.els)
        elif isinstance(t, Restrict):
            chans.add(t.chan)
            walk(t.body)
        elif isinstance(t, Fix):
            walk(t.body)

    walk(p)
    return frozenset(chans)


def is_pure_logical(p: Term) -> Optional[Term]:
    """None when p never touches a sensor or actuator; otherwise the
    offending prefix."""
    seen = set()

    def walk(t: Term) -> Optional[Term]:
        if t in seen:
            return None
        seen.add(t)
        if isinstance(t, (Read, Write)):
            return t
        kids: Sequence[Term] = ()
        if isinstance(t, Tick):
            kids = [q for _, q in t.cont]
        elif isinstance(t, (TimeoutOut, TimeoutIn)):
            kids = [q for _, q in t.cont] + [q for _, q in t.alt]
        elif isinstance(t, Par):
            kids = t.parts
        elif isinstance(t, If):
            kids = (t.then, t.els)
        elif isinstance(t, Restrict):
            kids = (t.body,)
        elif isinstance(t, Fix):
            kids = (t.body,)
        for k in kids:
            bad = walk(k)
            if bad is not None:
                return bad
        return None

    return walk(p)


def check_time_guarded(p: Term) -> None:
    """Reject recursion whose variable can be reached without crossing a
    tick or a timeout alternative (statically, per binder)."""

    def walk(t: Term, unguarded: List[bool]):
        # unguarded[i] is True when process index i would be reached
        # without an intervening time guard.
        if isinstance(t, Var):
            if t.index < len(unguarded) and unguarded[t.index]:
                raise ValueError("recursion variable is not time-guarded")
            return
        if isinstance(t, Fix):
            walk(t.body, [True] + unguarded)
            return
        if isinstance(t, Tick):
            for _, q in t.cont:
                walk(q, [False] * len(unguarded))
            return
        if isinstance(t, (TimeoutOut, TimeoutIn)):
            for _, q in t.cont:
                walk(q, unguarded)
            for _, q in t.alt:
                walk(q, [False] * len(unguarded))
            return
        if isinstance(t, (Read, Write)):
            for _, q in t.cont:
                walk(q, unguarded)
            return
        if isinstance(t, Par):
            for q in t.parts:
                walk(q, unguarded)
            return
        if isinstance(t, If):
            walk(t.then, unguarded)
            walk(t.els, unguarded)
            return
        if isinstance(t, Restrict):
            walk(t.body, unguarded)

    walk(p, [])


def check_finite_control(p: Term) -> None:
    """Reject parallel composition under recursion: exhaustive exploration
    needs a finite canonical-term universe."""

    def walk(t: Term, under_fix: bool):
        if isinstance(t, Par):
            if under_fix:
                raise ValueError("parallel composition under fix is not finite-control")
            for q in t.parts:
                walk(q, under_fix)
        elif isinstance(t, Fix):
            walk(t.body, True)
        elif isinstance(t, Tick):
            for _, q in t.cont:
                walk(q, under_fix)
        elif isinstance(t, (TimeoutOut, TimeoutIn)):
            for _, q in t.cont:
                walk(q, under_fix)
            for _, q in t.alt:
                walk(q, under_fix)
        elif isinstance(t, (Read, Write)):
            for _, q in t.cont:
                walk(q, under_fix)
        elif isinstance(t, If):
            walk(t.then, under_fix)
            walk(t.els, under_fix)
        elif isinstance(t, Restrict):
            walk(t.body, under_fix)

    walk(p, False)


# ---------------------------------------------------------------------------
# Rendering (debug / DOT labels). Binders get positional display names.


def render(p: Term, vdepth: int = 0, pdepth: int = 0) -> str:
    def rch(c: Choice, vd: int, pd: int) -> str:
        if len(c) == 1:
            return render(c[0][1], vd, pd)
        body = " | ".join(f"{w}: {render(q, vd, pd)}" for w, q in c)
        return "{" + body + "}"

    def rop(v: Operand, vd: int) -> str:
        if isinstance(v, VarRef):
            return f"x{vd - 1 - v.index}"
        return repr(v)

    if isinstance(p, Nil):
        return "nil"
    if isinstance(p, Tick):
        return f"tick.{rch(p.cont, vdepth, pdepth)}"
    if isinstance(p, TimeoutOut):
        return (
            f"[out {p.chan}({rop(p.value, vdepth)}).{rch(p.cont, vdepth, pdepth)}"
            f" timeout {rch(p.alt, vdepth, pdepth)}]"
        )
    if isinstance(p, TimeoutIn):
        return (
            f"[in {p.chan}(x{vdepth}).{rch(p.cont, vdepth + 1, pdepth)}"
            f" timeout {rch(p.alt, vdepth, pdepth)}]"
        )
    if isinstance(p, Read):
        return f"read {p.sensor}(x{vdepth}).{rch(p.cont, vdepth + 1, pdepth)}"
    if isinstance(p, Write):
        return f"write {p.actuator}({rop(p.value, vdepth)}).{rch(p.cont, vdepth, pdepth)}"
    if isinstance(p, Par):
        return " || ".join(
            f"({render(q, vdepth, pdepth)})" if isinstance(q, Par) else render(q, vdepth, pdepth)
            for q in p.parts
        )
    if isinstance(p, If):
        return (
            f"if {_render_guard(p.guard, vdepth)} then {render(p.then, vdepth, pdepth)}"
            f" else {render(p.els, vdepth, pdepth)}"
        )
    if isinstance(p, Restrict):
        return f"({render(p.body, vdepth, pdepth)}) \\ {p.chan}"
    if isinstance(p, Var):
        return f"X{pdepth - 1 - p.index}"
    if isinstance(p, Fix):
        return f"fix X{pdepth}. {render(p.body, vdepth, pdepth + 1)}"
    return object.__repr__(p)


def _render_guard(g: Guard, vdepth: int) -> str:
    tag = g.node[0]
    if tag == "lit":
        return "true" if g.node[1] else "false"
    if tag == "cmp":
        def rop(o):
            if isinstance(o, VarRef):
                return f"x{vdepth - 1 - o.index}"
            return repr(o)
        return f"{rop(g.node[2])} {g.node[1]} {rop(g.node[3])}"
    if tag == "not":
        return f"!({_render_guard(g.node[1], vdepth)})"
    op = "&&" if tag == "and" else "||"
    return f"({_render_guard(g.node[1], vdepth)} {op} {_render_guard(g.node[2], vdepth)})"
