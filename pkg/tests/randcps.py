"""Seeded random small systems for the metric property suites.

Models are kept tiny (a one-variable plant over a few grid points, short
processes over shared channels) so that exact pair tables stay cheap, but
they exercise the interesting phenomena: probabilistic ticks, channel
nondeterminism, silent communication, dying plants, and one-sided barbs.
"""

import random
from fractions import Fraction

from pccps.physics import Constraint, EvolRule, MeasRule, PhysEnv, PhysState
from pccps.semantics import make_cps
from pccps.syntax import (
    NIL,
    choice,
    fix,
    iff,
    just,
    par,
    read,
    restrict,
    tick,
    timeout_in,
    timeout_out,
    var,
    write,
)
from pccps.values import Atom, Guard, GridInterval, NameRef, VarRef, dec

LO = Atom("g_lo")
HI = Atom("g_hi")

# channels shared between generated systems (channels are logical)
CHANNELS = {"ga": (dec("0.1"),), "gb": (LO, HI)}


def _plant(rng: random.Random, tag: str):
    """One variable walking on a small grid; may or may not be able to
    die, depending on the drawn bounds."""
    v = f"gv_{tag}"
    s = f"gs_{tag}"
    a = f"gact_{tag}"
    has_act = rng.random() < 0.5
    width = rng.choice(["0", "0.1"])
    rules = []
    if has_act:
        rules.append(
            EvolRule(
                Guard.cmp("=", NameRef(a), LO),
                "+=",
                GridInterval("0", width, 1),
            )
        )
        rules.append(
            EvolRule(
                Guard.cmp("=", NameRef(a), HI),
                "-=",
                GridInterval("0.1", "0.1", 1),
            )
        )
    else:
        op = rng.choice(["+=", "-="])
        rules.append(EvolRule(Guard.lit(True), op, GridInterval("0", width, 1)))
    lo = dec("-0.2") if rng.random() < 0.5 else dec("0")
    hi = dec("0.3")
    env = PhysEnv(
        1,
        {v: rules},
        {s: MeasRule(v, GridInterval("0", "0", 1))},
        [Constraint(v, lo, hi)],
    )
    init = dec("0.1")
    state = PhysState(
        {v: init}, {s: init}, {a: LO} if has_act else {}
    )
    return env, state, s, (a if has_act else None)


def _process(rng: random.Random, sensor, actuator, depth=0):
    roll = rng.random()
    clock = fix(tick(just(var(0))))
    if depth >= 3 or roll < 0.15:
        return rng.choice([NIL, clock])
    if roll < 0.3:
        sub = _process(rng, sensor, actuator, depth + 1)
        other = _process(rng, sensor, actuator, depth + 1)
        if rng.random() < 0.5:
            return tick(choice([(Fraction(1, 2), sub), (Fraction(1, 2), other)]))
        return tick(just(sub))
    if roll < 0.45:
        chan = rng.choice(list(CHANNELS))
        value = rng.choice(CHANNELS[chan])
        cont = _process(rng, sensor, actuator, depth + 1)
        alt = _process(rng, sensor, actuator, depth + 1)
        return timeout_out(chan, value, just(cont), just(alt))
    if roll < 0.6:
        chan = rng.choice(list(CHANNELS))
        cont = _process(rng, sensor, actuator, depth + 1)
        alt = _process(rng, sensor, actuator, depth + 1)
        return timeout_in(chan, just(cont), just(alt))
    if roll < 0.75 and sensor is not None:
        body = _process(rng, sensor, actuator, depth + 1)
        guard = Guard.cmp(rng.choice([">", "<=", "="]), VarRef(0), dec("0.1"))
        els = _process(rng, sensor, actuator, depth + 1)
        return read(sensor, just(iff(guard, body, els)))
    if roll < 0.85 and actuator is not None:
        cont = _process(rng, sensor, actuator, depth + 1)
        return write(actuator, rng.choice([LO, HI]), just(cont))
    if roll < 0.95:
        a = _process(rng, sensor, actuator, depth + 1)
        b = _process(rng, sensor, actuator, depth + 1)
        return par([a, b])
    return restrict(_process(rng, sensor, actuator, depth + 1), rng.choice(list(CHANNELS)))


def random_cps(seed: int, tag: str):
    """A well-formed random system; `tag` keeps plants physically disjoint
    across systems built with different tags."""
    rng = random.Random((seed, tag).__repr__())
    env, state, sensor, actuator = _plant(rng, tag)
    proc = _process(rng, sensor, actuator)
    return make_cps(env, state, proc, CHANNELS)


def random_pure_logical(seed: int):
    rng = random.Random(("logic", seed).__repr__())
    return _process(rng, None, None)
