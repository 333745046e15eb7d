"""Builders for the heating/cooling engine family and the two-engine
airplane, plus the closed-form distance-bound evaluator.

The engine senses its temperature once per slot; above the warning
threshold it switches the coolant on for a fixed number of slots, then
re-checks: still hot means an identified warning on a channel and another
cooling round, otherwise coolant off and back to watching. Variants differ
only in the cooling interval: `standard` mirrors the heating drift,
`tilde` is 20% weaker (still equivalent), `hat` is 30% weaker (observably
different). Reduced twins shrink every magnitude so that exact metric
tables stay desk-sized while preserving the shape of the argument.
"""

from __future__ import annotations

from decimal import Decimal
from fractions import Fraction
from typing import Optional, Tuple

from .physics import Constraint, EvolRule, MeasRule, PhysEnv, PhysState
from .semantics import Cps, compose_logic, disjoint_union, make_cps, restrict_chan
from .syntax import (
    Process,
    fix,
    iff,
    just,
    read,
    tick,
    timeout_in,
    timeout_out,
    var,
    write,
)
from .values import Atom, GridInterval, Guard, NameRef, VarRef, dec

OFF = Atom("off")
ON = Atom("on")

VARIANT_COOLING = {
    "standard": (dec("0.6"), dec("1.4")),  # drop mirrors the heating drift
    "tilde": (dec("0.4"), dec("1.2")),  # 20% weaker coolant
    "hat": (dec("0.3"), dec("1.1")),  # 30% weaker coolant
}


def _ticks(k: int, cont: Process) -> Process:
    for _ in range(k):
        cont = tick(just(cont))
    return cont


def _controller(
    sensor: str,
    actuator: str,
    warn_chan: str,
    ident: Atom,
    threshold: Decimal,
    cooling_slots: int,
) -> Process:
    # inside the warning loop: 0 = the loop itself, 1 = the cooling loop,
    # 2 = the watch loop
    warn_loop = fix(timeout_out(warn_chan, ident, just(var(1)), just(var(0))))
    hot = Guard.cmp(">", VarRef(0), threshold)
    after_cooling = iff(
        hot,
        warn_loop,
        write(actuator, OFF, just(tick(just(var(1))))),
    )
    cooling_loop = fix(_ticks(cooling_slots, read(sensor, just(after_cooling))))
    return fix(
        read(
            sensor,
            just(
                iff(
                    hot,
                    write(actuator, ON, just(cooling_loop)),
                    tick(just(var(0))),
                )
            ),
        )
    )


def build_engine(
    g: int,
    variant: str = "standard",
    ident: str = "ID",
    suffix: str = "",
) -> Cps:
    """The engine at granularity g. Device names take `suffix` so that two
    engines can share a plant; `ident` is the value signalled on the
    warning channel."""
    if g < 1:
        raise ValueError("granularity must be >= 1")
    if variant not in VARIANT_COOLING:
        raise ValueError(f"unknown variant {variant!r}")
    temp, st, cool = "temp" + suffix, "st" + suffix, "cool" + suffix
    lo, hi = VARIANT_COOLING[variant]
    env = PhysEnv(
        g,
        {
            temp: [
                EvolRule(
                    Guard.cmp("=", NameRef(cool), OFF),
                    "+=",
                    GridInterval(dec("0.6"), dec("1.4"), g),
                ),
                EvolRule(
                    Guard.cmp("=", NameRef(cool), ON), "-=", GridInterval(lo, hi, g)
                ),
            ]
        },
        {st: MeasRule(temp, GridInterval(dec("-0.1"), dec("0.1"), g))},
        [Constraint(temp, dec("0"), dec("30"))],
    )
    state = PhysState({temp: dec("0")}, {st: dec("0")}, {cool: OFF})
    ctrl = _controller(st, cool, "warning", Atom(ident), dec("10"), 5)
    return make_cps(env, state, ctrl, {"warning": (Atom(ident),)})


SIG = Atom("sig")


def build_check() -> Process:
    """The airplane monitor: on a first warning, watch the other engine
    for the five-slot cooling window; a second warning from the other side
    raises the alarm, silence (or repeated warnings from the same side)
    ends in an identified failure signal."""
    left, right = Atom("L"), Atom("R")

    def alarm_then_restart():
        # inside this send loop the watch loop is one binder further out
        return fix(timeout_out("alarm", SIG, just(tick(just(var(1)))), just(var(0))))

    def failure(ident: Atom, then_tick: bool):
        cont = tick(just(var(1))) if then_tick else var(1)
        return fix(timeout_out("failure", ident, just(cont), just(var(0))))

    def stage(ident: Atom, i: int) -> Process:
        other = Guard.cmp("!=", VarRef(0), ident)
        if i == 5:
            return timeout_in(
                "warning",
                just(iff(other, alarm_then_restart(), failure(ident, True))),
                just(failure(ident, False)),
            )
        nxt = stage(ident, i + 1)
        return timeout_in(
            "warning",
            just(iff(other, alarm_then_restart(), tick(just(nxt)))),
            just(nxt),
        )

    first = Guard.cmp("=", VarRef(0), left)
    return fix(
        timeout_in(
            "warning",
            just(iff(first, stage(left, 1), stage(right, 1))),
            just(var(0)),
        )
    )


def build_airplane(variant: str = "standard", g: int = 1) -> Cps:
    """Two physically-disjoint engines watched by the monitor, with the
    warning channel internal."""
    left = build_engine(g, variant, ident="L", suffix="_l")
    right = build_engine(g, variant, ident="R", suffix="_r")
    plant = disjoint_union(left, right)
    watched = compose_logic(
        plant,
        build_check(),
        extra_alphabets={
            "alarm": (SIG,),
            "failure": (Atom("L"), Atom("R")),
        },
    )
    return restrict_chan(watched, "warning")


# ---------------------------------------------------------------------------
# Closed-form bound.


def grid_ratio(g: int) -> Fraction:
    """Probability weight of a one-tenth sub-band of an interval of width
    0.8 on the 10^-g grid: 10^(g-1) points out of 8*10^(g-1) + 1."""
    return Fraction(10 ** (g - 1), 8 * 10 ** (g - 1) + 1)


def engine_bound(g: int, n: int) -> Fraction:
    """Exact value of 1 - (1 - q * p^5)^n for the bad-increase/bad-decrease
    band weights p = q at granularity g."""
    if g < 1 or n < 0:
        raise ValueError("need g >= 1 and n >= 0")
    p = grid_ratio(g)
    return 1 - (1 - p * p**5) ** n


def engine_bound_limit(n: int) -> Fraction:
    """The g -> infinity form: 1 - (1 - 8^-6)^n."""
    p = Fraction(1, 8)
    return 1 - (1 - p**6) ** n


# ---------------------------------------------------------------------------
# Reduced twins (exact metrics at desk scale).

REDUCED_COOLING = {
    "standard": (dec("0.1"), dec("0.2")),
    "tilde": (dec("0.2"), dec("0.3")),
    "hat": (dec("0.0"), dec("0.1")),
}


def build_reduced_engine(
    variant: str = "standard",
    ident: str = "ID",
    suffix: str = "",
    cooling_slots: int = 2,
    heat: Tuple[str, str] = ("0.1", "0.2"),
    threshold: str = "0.2",
) -> Cps:
    """An engine on a handful of grid points: heating drifts up by the
    given interval per slot, the sensor is exact, and the invariant never
    binds. The `hat` twin's coolant may fail to cool at all, which is what
    makes it observably different."""
    if variant not in REDUCED_COOLING:
        raise ValueError(f"unknown variant {variant!r}")
    temp, st, cool = "rtemp" + suffix, "rst" + suffix, "rcool" + suffix
    lo, hi = REDUCED_COOLING[variant]
    env = PhysEnv(
        1,
        {
            temp: [
                EvolRule(
                    Guard.cmp("=", NameRef(cool), OFF),
                    "+=",
                    GridInterval(dec(heat[0]), dec(heat[1]), 1),
                ),
                EvolRule(
                    Guard.cmp("=", NameRef(cool), ON), "-=", GridInterval(lo, hi, 1)
                ),
            ]
        },
        {st: MeasRule(temp, GridInterval(dec("0"), dec("0"), 1))},
        [Constraint(temp, dec("-0.6"), dec("0.6"))],
    )
    state = PhysState({temp: dec("0")}, {st: dec("0")}, {cool: OFF})
    ctrl = _controller(
        st, cool, "warning", Atom(ident), dec(threshold), cooling_slots
    )
    return make_cps(env, state, ctrl, {"warning": (Atom(ident),)})


def build_micro_engine(variant: str = "standard", ident: str = "ID", suffix: str = "") -> Cps:
    """The smallest faithful twin: deterministic heating, one cooling
    slot. Exact product-level metrics (two engines, the monitor) fit in
    memory with this one."""
    return build_reduced_engine(
        variant, ident, suffix, cooling_slots=1, heat=("0.1", "0.1"), threshold="0.1"
    )


def micro_bound(n: int) -> Fraction:
    """Bound analogue for the micro twin: the risky band is entered every
    cycle (deterministic heating), and a single bad one-of-two drop keeps
    the warning reachable."""
    p = Fraction(1, 2)
    return 1 - (1 - p) ** n


def reduced_bound(n: int, cooling_slots: int = 2) -> Fraction:
    """The reduced analogue of the engine bound: both the bad-increase and
    the bad-decrease band carry one of two uniform grid points."""
    p = Fraction(1, 2)
    return 1 - (1 - p * p**cooling_slots) ** n


def build_reduced_airplane(variant: str = "standard") -> Cps:
    left = build_reduced_engine(variant, ident="L", suffix="_l")
    right = build_reduced_engine(variant, ident="R", suffix="_r")
    plant = disjoint_union(left, right)
    watched = compose_logic(
        plant,
        build_check(),
        extra_alphabets={"alarm": (SIG,), "failure": (Atom("L"), Atom("R"))},
    )
    return restrict_chan(watched, "warning")


# ---------------------------------------------------------------------------
# Textual model files. The shipped .pccps sources under models/ are exactly
# render_model(model_file(kind, 1)); `build` on them yields the same
# interned systems as the programmatic builders above.


def model_file(kind: str, g: int = 1):
    from decimal import Decimal as D

    from . import modeldsl as dsl

    def g_cmp(op, lhs, rhs):
        return dsl.RawGuard(("cmp", dsl.RawCmp(op, lhs, rhs)))

    def name(n):
        return ("name", n)

    def one(p):
        return ((D(1), p),)

    def ctrl_proc(st, cool, ident, xname="x", loop="X", threshold="10.0", slots=5):
        warn_loop = dsl._p(
            "fix", "W",
            dsl._p("out", "warning", name(ident), one(dsl._p("ref", "Y")),
                   one(dsl._p("ref", "W"))),
        )
        after = dsl._p(
            "if", g_cmp(">", name(xname + "2"), ("dec", D(threshold))),
            warn_loop,
            dsl._p("write", cool, name("off"),
                   one(dsl._p("tick", one(dsl._p("ref", loop))))),
        )
        inner = dsl._p("read", st, xname + "2", one(after))
        for _ in range(slots):
            inner = dsl._p("tick", one(inner))
        cooling = dsl._p("write", cool, name("on"), one(dsl._p("fix", "Y", inner)))
        body = dsl._p(
            "read", st, xname,
            one(dsl._p("if", g_cmp(">", name(xname), ("dec", D(threshold))),
                       cooling, dsl._p("tick", one(dsl._p("ref", loop))))),
        )
        return dsl._p("fix", loop, body)

    def engine_decls(suffix, interval):
        temp, st, cool = "temp" + suffix, "st" + suffix, "cool" + suffix
        return (
            dsl.VarDecl(temp, D("0.0"), D("0.0"), D("30.0")),
            dsl.SensorDecl(st, temp, D("-0.1"), D("0.1"), True),
            dsl.ActuatorDecl(cool, (("off", D("0.0")), ("on", D("-1.0"))), "off"),
            (
                dsl.EvolDecl(g_cmp("=", name(cool), name("off")), temp, "+=",
                             (D("0.6"), D("1.4")), None),
                dsl.EvolDecl(g_cmp("=", name(cool), name("on")), temp, "-=",
                             interval, None),
            ),
        )

    variants = {
        "engine": ("standard", (D("0.6"), D("1.4"))),
        "engine-tilde": ("tilde", (D("0.4"), D("1.2"))),
        "engine_tilde": ("tilde", (D("0.4"), D("1.2"))),
        "engine-hat": ("hat", (D("0.3"), D("1.1"))),
        "engine_hat": ("hat", (D("0.3"), D("1.1"))),
    }
    if kind in variants:
        _, interval = variants[kind]
        v, s, a, e = engine_decls("", interval)
        return dsl.ModelFile(
            kind.replace("-", "_"), g, (v,), (s,), (a,),
            (dsl.ChannelDecl("warning", (("atom", "ID"),)),),
            e, (), ctrl_proc("st", "cool", "ID"),
        )
    if kind == "airplane":
        lv, ls, la, le = engine_decls("_l", (D("0.6"), D("1.4")))
        rv, rs, ra, re = engine_decls("_r", (D("0.6"), D("1.4")))

        def check_proc():
            def alarm():
                return dsl._p(
                    "fix", "W",
                    dsl._p("out", "alarm", name("sig"),
                           one(dsl._p("tick", one(dsl._p("ref", "C")))),
                           one(dsl._p("ref", "W"))),
                )

            def failure(ident, then_tick):
                cont = (
                    dsl._p("tick", one(dsl._p("ref", "C")))
                    if then_tick
                    else dsl._p("ref", "C")
                )
                return dsl._p(
                    "fix", "W",
                    dsl._p("out", "failure", name(ident), one(cont),
                           one(dsl._p("ref", "W"))),
                )

            def stage(ident, i, binder):
                other = g_cmp("!=", name(binder), name(ident))
                if i == 5:
                    return dsl._p(
                        "inp", "warning", binder,
                        one(dsl._p("if", other, alarm(), failure(ident, True))),
                        one(failure(ident, False)),
                    )
                nxt = stage(ident, i + 1, binder + "n")
                return dsl._p(
                    "inp", "warning", binder,
                    one(dsl._p("if", other, alarm(),
                               dsl._p("tick", one(nxt)))),
                    one(nxt),
                )

            return dsl._p(
                "fix", "C",
                dsl._p("inp", "warning", "w",
                       one(dsl._p("if", g_cmp("=", name("w"), name("L")),
                                  stage("L", 1, "y"), stage("R", 1, "y"))),
                       one(dsl._p("ref", "C"))),
            )

        main = dsl._p(
            "restrict",
            dsl._p("par", (
                ctrl_proc("st_l", "cool_l", "L"),
                ctrl_proc("st_r", "cool_r", "R"),
                check_proc(),
            )),
            "warning",
        )
        return dsl.ModelFile(
            "airplane", g, (lv, rv), (ls, rs), (la, ra),
            (dsl.ChannelDecl("warning", (("atom", "L"), ("atom", "R"))),
             dsl.ChannelDecl("alarm", (("atom", "sig"),)),
             dsl.ChannelDecl("failure", (("atom", "L"), ("atom", "R")))),
            le + re, (), main,
        )
    raise ValueError(f"unknown model kind {kind!r}")


def model_source(kind: str, g: int = 1) -> str:
    from . import modeldsl as dsl

    return dsl.render_model(model_file(kind, g))
