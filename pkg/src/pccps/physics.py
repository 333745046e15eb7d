"""Physical states and finitely-representable physical environments.

An environment is a declarative rule set: guarded grid-uniform (or
constant) updates per state variable, additive uniform noise per sensor,
and per-variable interval constraints as the invariant. Rule sets must be
total: for every actuator valuation exactly one evolution rule fires per
variable. Keeping environments declarative is what makes disjoint union,
serialization, and exhaustive enumeration possible.
"""

from __future__ import annotations

from decimal import Decimal
from fractions import Fraction
from typing import Dict, Iterable, Mapping, Optional, Sequence, Tuple

from . import dist
from .dist import FiniteDist
from .values import Atom, GridInterval, Guard, Value, dec, value_key


class ModelError(Exception):
    """A model violates a totality or well-formedness requirement."""


class PhysState:
    """Total valuations for the declared variables, sensors and actuators.
    Interned: equal states are identical objects."""

    __slots__ = ("vars", "sensors", "actuators", "_key")
    _intern: Dict[tuple, "PhysState"] = {}

    def __new__(
        cls,
        vars: Mapping[str, Decimal],
        sensors: Mapping[str, Decimal],
        actuators: Mapping[str, Atom],
    ):
        v = tuple(sorted(vars.items()))
        s = tuple(sorted(sensors.items()))
        a = tuple(sorted(actuators.items()))
        key = (v, s, a)
        obj = cls._intern.get(key)
        if obj is None:
            obj = object.__new__(cls)
            object.__setattr__(obj, "vars", dict(v))
            object.__setattr__(obj, "sensors", dict(s))
            object.__setattr__(obj, "actuators", dict(a))
            object.__setattr__(
                obj,
                "_key",
                (
                    tuple((n, Fraction(x)) for n, x in v),
                    tuple((n, Fraction(x)) for n, x in s),
                    tuple((n, x.name) for n, x in a),
                ),
            )
            cls._intern[key] = obj
        return obj

    def __setattr__(self, *a):
        raise AttributeError("PhysState is immutable")

    def sort_key(self):
        return self._key

    def with_var(self, name: str, value: Decimal) -> "PhysState":
        if name not in self.vars:
            raise ModelError(f"unknown state variable {name!r}")
        nv = dict(self.vars)
        nv[name] = value
        return PhysState(nv, self.sensors, self.actuators)

    def with_sensors(self, sensors: Mapping[str, Decimal]) -> "PhysState":
        return PhysState(self.vars, sensors, self.actuators)

    def with_actuator(self, name: str, value: Atom) -> "PhysState":
        if name not in self.actuators:
            raise ModelError(f"unknown actuator {name!r}")
        na = dict(self.actuators)
        na[name] = value
        return PhysState(self.vars, self.sensors, na)

    def __repr__(self):
        bits = [f"{n}={v}" for n, v in self.vars.items()]
        bits += [f"{n}~{v}" for n, v in self.sensors.items()]
        bits += [f"{n}:{v!r}" for n, v in self.actuators.items()]
        return "<" + " ".join(bits) + ">"


_outcome_memo: dict = {}


class EvolRule:
    """When `guard` holds over the actuator valuation, apply `op` to the
    variable: '+=' / '-=' with a grid-uniform or constant operand, ':='
    with a constant."""

    __slots__ = ("guard", "op", "interval", "constant")

    def __init__(
        self,
        guard: Guard,
        op: str,
        interval: Optional[GridInterval] = None,
        constant: Optional[Decimal] = None,
    ):
        if op not in ("+=", "-=", ":="):
            raise ModelError(f"unknown update operator {op!r}")
        if (interval is None) == (constant is None):
            raise ModelError("update needs exactly one of interval/constant")
        if op == ":=" and interval is not None:
            # ':=' with an interval is still meaningful (uniform reset);
            # allowed for generality.
            pass
        self.guard = guard
        self.op = op
        self.interval = interval
        self.constant = dec(constant) if constant is not None else None

    def outcomes(self, current: Decimal) -> FiniteDist[Decimal]:
        hit = _outcome_memo.get((id(self), current))
        if hit is not None:
            return hit
        if self.interval is not None:
            points = list(self.interval.points())
        else:
            points = [self.constant]
        if self.op == "+=":
            out = dist.uniform([current + p for p in points])
        elif self.op == "-=":
            out = dist.uniform([current - p for p in points])
        else:
            out = dist.uniform(points)
        _outcome_memo[(id(self), current)] = out
        return out


class MeasRule:
    """sensor = source variable + uniform noise over `noise`; `at_tick`
    sensors are sampled by the clock, `at-read` sensors on every read."""

    __slots__ = ("source", "noise", "at_tick")

    def __init__(self, source: str, noise: GridInterval, at_tick: bool = True):
        self.source = source
        self.noise = noise
        self.at_tick = at_tick

    def outcomes(self, source_value: Decimal) -> FiniteDist[Decimal]:
        hit = _outcome_memo.get((id(self), source_value))
        if hit is None:
            hit = dist.uniform([source_value + p for p in self.noise.points()])
            _outcome_memo[(id(self), source_value)] = hit
        return hit


class Constraint:
    """Closed interval constraint on a state variable (either bound may be
    absent)."""

    __slots__ = ("var", "lo", "hi")

    def __init__(self, var: str, lo: Optional[Decimal], hi: Optional[Decimal]):
        self.var = var
        self.lo = dec(lo) if lo is not None else None
        self.hi = dec(hi) if hi is not None else None

    def holds(self, value: Decimal) -> bool:
        if self.lo is not None and value < self.lo:
            return False
        if self.hi is not None and value > self.hi:
            return False
        return True


class PhysEnv:
    """Evolution, measurement and invariant rule sets over declared names."""

    __slots__ = ("granularity", "evol_rules", "meas_rules", "constraints", "_key")

    def __init__(
        self,
        granularity: int,
        evol_rules: Mapping[str, Sequence[EvolRule]],
        meas_rules: Mapping[str, MeasRule],
        constraints: Sequence[Constraint],
    ):
        if granularity < 0:
            raise ModelError("granularity must be >= 0")
        self.granularity = granularity
        self.evol_rules = {n: tuple(rs) for n, rs in sorted(evol_rules.items())}
        self.meas_rules = dict(sorted(meas_rules.items()))
        self.constraints = tuple(constraints)
        self._key = None

    def var_names(self) -> Tuple[str, ...]:
        return tuple(self.evol_rules)

    def sensor_names(self) -> Tuple[str, ...]:
        return tuple(self.meas_rules)

    def sort_key(self):
        if self._key is None:
            ev = tuple(
                (
                    n,
                    tuple(
                        (
                            r.guard.sort_key(),
                            r.op,
                            (r.interval.sort_key() if r.interval is not None else None),
                            (Fraction(r.constant) if r.constant is not None else None),
                        )
                        for r in rs
                    ),
                )
                for n, rs in self.evol_rules.items()
            )
            ms = tuple(
                (n, r.source, r.noise.sort_key(), r.at_tick)
                for n, r in self.meas_rules.items()
            )
            cs = tuple(
                (
                    c.var,
                    Fraction(c.lo) if c.lo is not None else None,
                    Fraction(c.hi) if c.hi is not None else None,
                )
                for c in self.constraints
            )
            self._key = (self.granularity, ev, ms, cs)
        return self._key

    def __eq__(self, other):
        return isinstance(other, PhysEnv) and self.sort_key() == other.sort_key()

    def __hash__(self):
        return hash(self.sort_key())


# ---------------------------------------------------------------------------
# Semantics of an environment at a state.


def _fire(env: PhysEnv, name: str, actuators: Mapping[str, Atom]) -> EvolRule:
    fired = [r for r in env.evol_rules[name] if r.guard.eval(actuators)]
    if not fired:
        raise ModelError(f"no evolution rule fires for variable {name!r}")
    if len(fired) > 1:
        raise ModelError(f"multiple evolution rules fire for variable {name!r}")
    return fired[0]


def evol(
    env: PhysEnv, xs: Mapping[str, Decimal], acts: Mapping[str, Atom]
) -> FiniteDist[Tuple[Tuple[str, Decimal], ...]]:
    """Product over variables of the per-variable update distributions.
    Carriers are name-sorted tuples of (var, value)."""
    out = dist.dirac(())
    for name in env.evol_rules:
        rule = _fire(env, name, acts)
        per_var = rule.outcomes(xs[name])
        out = dist.product(out, per_var, pair=lambda acc, v, n=name: acc + ((n, v),))
    return out.as_full()


def meas(
    env: PhysEnv, xs: Mapping[str, Decimal], stored: Mapping[str, Decimal]
) -> FiniteDist[Tuple[Tuple[str, Decimal], ...]]:
    """Product over sensors: at-tick sensors sample source + noise, at-read
    sensors keep their stored value here (they sample on each read)."""
    out = dist.dirac(())
    for name, rule in env.meas_rules.items():
        if rule.at_tick:
            per = rule.outcomes(xs[rule.source])
        else:
            per = dist.dirac(stored[name])
        out = dist.product(out, per, pair=lambda acc, v, n=name: acc + ((n, v),))
    return out.as_full()


def next_state(env: PhysEnv, s: PhysState) -> FiniteDist[PhysState]:
    """Distribution over next-slot states: evolve the variables, then
    measure the sensors at the evolved values; actuators are untouched."""
    ev = evol(env, s.vars, s.actuators)
    acc: Dict[PhysState, Fraction] = {}
    for xs_items, wx in ev.items():
        new_vars = dict(xs_items)
        ms = meas(env, new_vars, s.sensors)
        for ss_items, wm in ms.items():
            st = PhysState(new_vars, dict(ss_items), s.actuators)
            w = wx * wm
            acc[st] = acc.get(st, Fraction(0)) + w
    return FiniteDist(acc)


def check_inv(env: PhysEnv, s: PhysState) -> bool:
    for c in env.constraints:
        if c.var not in s.vars:
            raise ModelError(f"invariant mentions unknown variable {c.var!r}")
        if not c.holds(s.vars[c.var]):
            return False
    return True


def update_act(s: PhysState, actuator: str, v: Atom) -> PhysState:
    return s.with_actuator(actuator, v)


def read_sensor(env: PhysEnv, s: PhysState, sensor: str) -> FiniteDist[Decimal]:
    """At-tick sensors return the stored value (a point distribution);
    at-read sensors sample source + fresh noise."""
    rule = env.meas_rules.get(sensor)
    if rule is None:
        raise ModelError(f"unknown sensor {sensor!r}")
    if rule.at_tick:
        return dist.dirac(s.sensors[sensor])
    return rule.outcomes(s.vars[rule.source])


# ---------------------------------------------------------------------------
# Disjoint union of environments and states.


def disjoint_env(e1: PhysEnv, e2: PhysEnv) -> PhysEnv:
    overlap_v = set(e1.evol_rules) & set(e2.evol_rules)
    overlap_s = set(e1.meas_rules) & set(e2.meas_rules)
    if overlap_v or overlap_s:
        raise ModelError(
            f"environments share device names: {sorted(overlap_v | overlap_s)}"
        )
    # Every 10^-g grid embeds in any finer one, so the union adopts the
    # finer granularity; each rule keeps its own interval grid regardless.
    return PhysEnv(
        max(e1.granularity, e2.granularity),
        {**e1.evol_rules, **e2.evol_rules},
        {**e1.meas_rules, **e2.meas_rules},
        tuple(e1.constraints) + tuple(e2.constraints),
    )


def disjoint_state(s1: PhysState, s2: PhysState) -> PhysState:
    collisions = (
        (set(s1.vars) & set(s2.vars))
        | (set(s1.sensors) & set(s2.sensors))
        | (set(s1.actuators) & set(s2.actuators))
    )
    if collisions:
        raise ModelError(f"states share device names: {sorted(collisions)}")
    return PhysState(
        {**s1.vars, **s2.vars},
        {**s1.sensors, **s2.sensors},
        {**s1.actuators, **s2.actuators},
    )


EMPTY_ENV = PhysEnv(0, {}, {}, ())
EMPTY_STATE = PhysState({}, {}, {})
