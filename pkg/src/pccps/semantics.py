"""Transition semantics: process steps, system steps, and the three
composition operators (physically-disjoint union, pure-logical parallel,
channel restriction).

Process labels are: tau, out/in on a channel, tick, an actuator write, or
a sensor read (whose continuation distribution stays open in the read
binder until the system level instantiates it). System actions are tau,
out/in, and tick; reads and writes surface as tau.
"""

from __future__ import annotations

from decimal import Decimal
from fractions import Fraction
from typing import Dict, FrozenSet, Iterable, Mapping, Optional, Tuple

from . import dist, physics, syntax
from .dist import FiniteDist
from .physics import ModelError, PhysEnv, PhysState
from .syntax import (
    Fix,
    If,
    Nil,
    NIL,
    Par,
    Process,
    Read,
    Restrict,
    Term,
    Tick,
    TimeoutIn,
    TimeoutOut,
    Var,
    Write,
    par,
    substitute,
    unfold_fix,
)
from .values import Atom, Value, value_key

# ---------------------------------------------------------------------------
# Labels and actions.


class Label:
    """Process-level transition label (interned)."""

    __slots__ = ("kind", "chan", "value")
    _intern: Dict[tuple, "Label"] = {}

    TAU = "tau"
    TICK = "tick"
    OUT = "out"
    IN = "in"
    WRITE = "write"
    READ = "read"

    def __new__(cls, kind: str, chan: Optional[str] = None, value=None):
        key = (kind, chan, None if value is None else
               (value.name if isinstance(value, Atom) else value))
        obj = cls._intern.get(key)
        if obj is None:
            obj = object.__new__(cls)
            object.__setattr__(obj, "kind", kind)
            object.__setattr__(obj, "chan", chan)
            object.__setattr__(obj, "value", value)
            cls._intern[key] = obj
        return obj

    def __setattr__(self, *a):
        raise AttributeError("Label is immutable")

    def sort_key(self):
        return (
            self.kind,
            self.chan or "",
            value_key(self.value) if self.value is not None else (),
        )

    def __repr__(self):
        if self.kind == Label.TAU:
            return "tau"
        if self.kind == Label.TICK:
            return "tick"
        if self.kind == Label.OUT:
            return f"{self.chan}!{self.value!r}"
        if self.kind == Label.IN:
            return f"{self.chan}?{self.value!r}"
        if self.kind == Label.WRITE:
            return f"{self.chan}:={self.value!r}"
        return f"{self.chan}?"


TAU = Label(Label.TAU)
TICK = Label(Label.TICK)


def out_label(chan: str, value: Value) -> Label:
    return Label(Label.OUT, chan, value)


def in_label(chan: str, value: Value) -> Label:
    return Label(Label.IN, chan, value)


Action = Label  # system actions reuse the label type, restricted to
# tau / tick / out / in


# ---------------------------------------------------------------------------
# Process transitions (finite alphabets instantiate channel inputs).

Alphabets = Mapping[str, Tuple[Value, ...]]

_proc_step_memo: Dict[tuple, tuple] = {}


def _choice_dist(c: syntax.Choice) -> FiniteDist[Process]:
    return FiniteDist({p: w for w, p in c})


_instantiate_memo: Dict[tuple, FiniteDist] = {}


def instantiate(pi: FiniteDist[Process], v: Value) -> FiniteDist[Process]:
    """Substitute v for the read/input binder (index 0) across a
    continuation distribution."""
    key = (pi, v if not isinstance(v, Atom) else v.name)
    hit = _instantiate_memo.get(key)
    if hit is None:
        hit = pi.map(lambda p: substitute(p, 0, v))
        _instantiate_memo[key] = hit
    return hit


def _restrict_dist(pi: FiniteDist[Process], chan: str) -> FiniteDist[Process]:
    return pi.map(lambda p: syntax.restrict(p, chan))


def proc_step(p: Process, alphabets: Alphabets) -> Tuple[Tuple[Label, FiniteDist[Process]], ...]:
    """All derivations of the process transition rules, deduplicated and
    deterministically ordered. Sensor-read derivatives stay open in the
    binder; every other continuation is closed."""
    alpha_key = tuple(sorted((c, vs) for c, vs in alphabets.items()))
    memo_key = (p, alpha_key)
    hit = _proc_step_memo.get(memo_key)
    if hit is not None:
        return hit

    moves: Dict[Tuple[Label, FiniteDist[Process]], None] = {}

    def add(label: Label, pi: FiniteDist[Process]):
        moves[(label, pi)] = None

    if isinstance(p, Nil):
        add(TICK, dist.dirac(NIL))
    elif isinstance(p, Tick):
        add(TICK, _choice_dist(p.cont))
    elif isinstance(p, TimeoutOut):
        add(out_label(p.chan, p.value), _choice_dist(p.cont))
        add(TICK, _choice_dist(p.alt))
    elif isinstance(p, TimeoutIn):
        cont = _choice_dist(p.cont)
        for v in alphabets.get(p.chan, ()):
            add(in_label(p.chan, v), instantiate(cont, v))
        add(TICK, _choice_dist(p.alt))
    elif isinstance(p, Read):
        add(Label(Label.READ, p.sensor), _choice_dist(p.cont))
    elif isinstance(p, Write):
        add(Label(Label.WRITE, p.actuator, p.value), _choice_dist(p.cont))
    elif isinstance(p, Par):
        parts = p.parts
        per_part = [proc_step(q, alphabets) for q in parts]
        for i, q in enumerate(parts):
            rest = parts[:i] + parts[i + 1 :]
            for label, pi in per_part[i]:
                if label.kind == Label.TICK:
                    continue
                add(label, pi.map(lambda d, rest=rest: par((d,) + rest)))
        # communication between any ordered pair of components
        for i in range(len(parts)):
            for j in range(len(parts)):
                if i == j:
                    continue
                rest = tuple(parts[k] for k in range(len(parts)) if k not in (i, j))
                for lab_o, pi_o in per_part[i]:
                    if lab_o.kind != Label.OUT:
                        continue
                    for lab_i, pi_i in per_part[j]:
                        if (
                            lab_i.kind == Label.IN
                            and lab_i.chan == lab_o.chan
                            and lab_i.value == lab_o.value
                        ):
                            pair = dist.product(
                                pi_o, pi_i, pair=lambda a, b, rest=rest: par((a, b) + rest)
                            ).as_full()
                            add(TAU, pair)
        if not any(lab.kind == Label.TAU for lab, _ in moves):
            ticks = []
            for deriv in per_part:
                tk = [pi for lab, pi in deriv if lab.kind == Label.TICK]
                if not tk:
                    ticks = None
                    break
                ticks.append(tk[0])
            if ticks is not None:
                combined = ticks[0]
                for t in ticks[1:]:
                    combined = dist.product_par(combined, t).as_full()
                add(TICK, combined)
    elif isinstance(p, Restrict):
        for label, pi in proc_step(p.body, alphabets):
            if label.kind in (Label.OUT, Label.IN) and label.chan == p.chan:
                continue
            add(label, _restrict_dist(pi, p.chan))
    elif isinstance(p, Fix):
        for move in proc_step(unfold_fix(p), alphabets):
            moves[move] = None
    elif isinstance(p, (Var, If)):
        raise ModelError(f"cannot step an open term: {p!r}")
    else:
        raise TypeError(f"not a process: {p!r}")

    out = tuple(
        sorted(
            moves,
            key=lambda mv: (
                mv[0].sort_key(),
                tuple((q.sort_key(), w) for q, w in mv[1].items()),
            ),
        )
    )
    _proc_step_memo[memo_key] = out
    return out


# ---------------------------------------------------------------------------
# Cyber-physical systems.


class Cps:
    """Either the absorbing dead system or (environment, state, process,
    channel alphabets). Interned by canonical components; `uid` is the
    interning sequence number (cheap total order within a run)."""

    __slots__ = ("env", "state", "proc", "alphabets", "uid", "_key", "_step")
    _intern: Dict[tuple, "Cps"] = {}

    def __new__(
        cls,
        env: PhysEnv,
        state: PhysState,
        proc: Process,
        alphabets: Mapping[str, Tuple[Value, ...]],
    ):
        alpha = tuple(
            sorted((c, tuple(sorted(vs, key=value_key))) for c, vs in alphabets.items())
        )
        key = (env.sort_key(), state, proc, alpha)
        obj = cls._intern.get(key)
        if obj is None:
            obj = object.__new__(cls)
            object.__setattr__(obj, "env", env)
            object.__setattr__(obj, "state", state)
            object.__setattr__(obj, "proc", proc)
            object.__setattr__(obj, "alphabets", dict(alpha))
            object.__setattr__(
                obj, "_key", (0, state.sort_key(), proc.sort_key(), env.sort_key(), alpha)
            )
            object.__setattr__(obj, "uid", len(cls._intern))
            object.__setattr__(obj, "_step", None)
            cls._intern[key] = obj
        return obj

    def __setattr__(self, name, value):
        if name == "_step":
            object.__setattr__(self, name, value)
        else:
            raise AttributeError("Cps is immutable")

    def sort_key(self):
        return self._key

    @property
    def is_dead(self) -> bool:
        return False

    def with_proc(self, proc: Process) -> "Cps":
        return Cps(self.env, self.state, proc, self.alphabets)

    def with_state(self, state: PhysState) -> "Cps":
        return Cps(self.env, state, self.proc, self.alphabets)

    def __repr__(self):
        return f"<{self.state!r}> |> {self.proc!r}"


class _Dead:
    __slots__ = ()
    uid = -1

    @property
    def is_dead(self) -> bool:
        return True

    def sort_key(self):
        return (1,)

    def __repr__(self):
        return "Dead"


DEAD = _Dead()


def well_formed(m) -> Tuple[bool, Optional[str]]:
    """A system is well-formed when every sensor/actuator its process
    mentions is declared in the physical state (the dead system is
    well-formed). Returns (verdict, offending name)."""
    if m is DEAD:
        return True, None
    sensors, actuators = syntax.mentioned_devices(m.proc)
    for s in sorted(sensors):
        if s not in m.state.sensors:
            return False, s
    for a in sorted(actuators):
        if a not in m.state.actuators:
            return False, a
    return True, None


def make_cps(env, state, proc, alphabets) -> Cps:
    m = Cps(env, state, proc, alphabets)
    ok, offender = well_formed(m)
    if not ok:
        raise ModelError(f"process mentions undeclared device {offender!r}")
    return m


# ---------------------------------------------------------------------------
# System transitions.


def _lift(m: Cps, pi: FiniteDist[Process]) -> FiniteDist:
    """<delta_S> |> pi over an unchanged physical state."""
    return pi.map(lambda p: m.with_proc(p))


def cps_step(m) -> Tuple[Tuple[Action, FiniteDist], ...]:
    """All system transitions of m, deterministically ordered. A state
    violating the invariant has exactly the deadlock step; tick is enabled
    only when no tau-level activity is derivable."""
    if m is DEAD:
        return ()
    if m._step is not None:
        return m._step

    if not physics.check_inv(m.env, m.state):
        out = ((TAU, dist.dirac(DEAD)),)
        m._step = out
        return out

    untimed: Dict[Tuple[Action, FiniteDist], None] = {}
    tick_pi: Optional[FiniteDist[Process]] = None

    for label, pi in proc_step(m.proc, m.alphabets):
        if label.kind == Label.TAU:
            untimed[(TAU, _lift(m, pi))] = None
        elif label.kind in (Label.OUT, Label.IN):
            untimed[(label, _lift(m, pi))] = None
        elif label.kind == Label.READ:
            reading = physics.read_sensor(m.env, m.state, label.chan)
            parts = [
                (w, _lift(m, instantiate(pi, v))) for v, w in reading.items()
            ]
            untimed[(TAU, dist.combine(parts).as_full())] = None
        elif label.kind == Label.WRITE:
            ns = physics.update_act(m.state, label.chan, label.value)
            untimed[(TAU, pi.map(lambda p: Cps(m.env, ns, p, m.alphabets)))] = None
        else:  # tick
            tick_pi = pi

    has_tau = any(a.kind == Label.TAU for a, _ in untimed)
    moves = list(untimed)
    if tick_pi is not None and not has_tau:
        nxt = physics.next_state(m.env, m.state)
        succ: Dict = {}
        for st, ws in nxt.items():
            for p, wp in tick_pi.items():
                cps = Cps(m.env, st, p, m.alphabets)
                succ[cps] = succ.get(cps, Fraction(0)) + ws * wp
        moves.append((TICK, FiniteDist(succ)))

    out = tuple(
        sorted(
            moves,
            key=lambda mv: (
                mv[0].sort_key(),
                tuple((c.sort_key(), w) for c, w in mv[1].items()),
            ),
        )
    )
    m._step = out
    return out


# ---------------------------------------------------------------------------
# Composition operators.


def disjoint_union(m1, m2):
    """Parallel composition of physically-disjoint systems: merged plant,
    merged invariant, processes in parallel; absorbing on Dead."""
    if m1 is DEAD or m2 is DEAD:
        return DEAD
    env = physics.disjoint_env(m1.env, m2.env)
    state = physics.disjoint_state(m1.state, m2.state)
    alphabets = dict(m1.alphabets)
    for c, vs in m2.alphabets.items():
        if c in alphabets:
            merged = set(alphabets[c]) | set(vs)
            alphabets[c] = tuple(sorted(merged, key=value_key))
        else:
            alphabets[c] = vs
    return make_cps(env, state, par([m1.proc, m2.proc]), alphabets)


def restrict_chan(m, chan: str):
    """M \\ c : remove c-labelled derivatives."""
    if m is DEAD:
        return DEAD
    return Cps(m.env, m.state, syntax.restrict(m.proc, chan), m.alphabets)


def compose_logic(m, p: Process, extra_alphabets: Optional[Alphabets] = None):
    """M || P for a pure-logical P (no sensor reads or actuator writes)."""
    if m is DEAD:
        return DEAD
    bad = syntax.is_pure_logical(p)
    if bad is not None:
        raise ModelError(f"process is not pure-logical, offending prefix: {bad!r}")
    alphabets = dict(m.alphabets)
    if extra_alphabets:
        for c, vs in extra_alphabets.items():
            if c in alphabets:
                merged = set(alphabets[c]) | set(vs)
                alphabets[c] = tuple(sorted(merged, key=value_key))
            else:
                alphabets[c] = tuple(sorted(vs, key=value_key))
    for c in sorted(syntax.mentioned_channels(p)):
        if c not in alphabets:
            raise ModelError(f"channel {c!r} is not declared in the system")
    return Cps(m.env, m.state, par([m.proc, p]), alphabets)
