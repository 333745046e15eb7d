import itertools
from decimal import Decimal
from fractions import Fraction

import pytest

from pccps import physics
from pccps.dist import FiniteDist, dirac
from pccps.physics import (
    Constraint,
    EvolRule,
    MeasRule,
    ModelError,
    PhysEnv,
    PhysState,
    check_inv,
    disjoint_env,
    disjoint_state,
    evol,
    meas,
    next_state,
    read_sensor,
    update_act,
)
from pccps.values import Atom, GridInterval, Guard, NameRef, dec

OFF = Atom("off")
ON = Atom("on")


def engine_env(g=1, cool_lo="0.6", cool_hi="1.4"):
    """Heating drifts temp up by U[0.6,1.4]; cooling drives it down by the
    given interval; the sensor reads temp with +-0.1 noise."""
    heat = EvolRule(
        Guard.cmp("=", NameRef("cool"), OFF), "+=", GridInterval("0.6", "1.4", g)
    )
    chill = EvolRule(
        Guard.cmp("=", NameRef("cool"), ON), "-=", GridInterval(cool_lo, cool_hi, g)
    )
    return PhysEnv(
        g,
        {"temp": [heat, chill]},
        {"st": MeasRule("temp", GridInterval("-0.1", "0.1", g))},
        [Constraint("temp", dec("0"), dec("30"))],
    )


def engine_state(temp="0", sensed="0", cool=OFF):
    return PhysState({"temp": dec(temp)}, {"st": dec(sensed)}, {"cool": cool})


def test_engine_heating_step_is_uniform_over_nine_points():
    d = evol(engine_env(), {"temp": dec("0")}, {"cool": OFF})
    assert len(d) == 9
    vals = sorted(dict(items)["temp"] for items in d.support())
    assert vals[0] == dec("0.6") and vals[-1] == dec("1.4")
    assert all(w == Fraction(1, 9) for _, w in d.items())


def test_deterministic_rules_give_dirac():
    env = PhysEnv(
        1,
        {"x": [EvolRule(Guard.lit(True), ":=", constant=dec("2.0"))]},
        {},
        [],
    )
    d = evol(env, {"x": dec("0")}, {})
    assert d == dirac((("x", dec("2.0")),))


def test_two_variable_product_enumeration_oracle():
    # independent 2-point and 3-point updates: compare against a brute
    # product enumeration
    env = PhysEnv(
        1,
        {
            "x": [EvolRule(Guard.lit(True), "+=", GridInterval("0.1", "0.2", 1))],
            "y": [EvolRule(Guard.lit(True), "+=", GridInterval("0.1", "0.3", 1))],
        },
        {},
        [],
    )
    d = evol(env, {"x": dec("0"), "y": dec("0")}, {})
    expected = {}
    for dx, dy in itertools.product(["0.1", "0.2"], ["0.1", "0.2", "0.3"]):
        key = (("x", dec(dx)), ("y", dec(dy)))
        expected[key] = Fraction(1, 6)
    assert dict(d.items()) == expected


def test_rule_totality_errors_name_the_variable():
    env = PhysEnv(
        1,
        {"x": [EvolRule(Guard.cmp("=", NameRef("a"), ON), "+=", GridInterval("0", "0", 1))]},
        {},
        [],
    )
    with pytest.raises(ModelError, match="x"):
        evol(env, {"x": dec("0")}, {"a": OFF})
    env2 = PhysEnv(
        1,
        {
            "x": [
                EvolRule(Guard.lit(True), "+=", GridInterval("0", "0", 1)),
                EvolRule(Guard.lit(True), "-=", GridInterval("0", "0", 1)),
            ]
        },
        {},
        [],
    )
    with pytest.raises(ModelError, match="x"):
        evol(env2, {"x": dec("0")}, {})


def test_engine_measurement_three_points():
    d = meas(engine_env(), {"temp": dec("5.0")}, {"st": dec("0")})
    sensed = sorted(dict(items)["st"] for items in d.support())
    assert sensed == [dec("4.9"), dec("5.0"), dec("5.1")]
    assert all(w == Fraction(1, 3) for _, w in d.items())


def test_zero_width_noise_is_dirac():
    env = PhysEnv(
        1,
        {"x": [EvolRule(Guard.lit(True), "+=", GridInterval("0", "0", 1))]},
        {"s": MeasRule("x", GridInterval("0", "0", 1))},
        [],
    )
    d = meas(env, {"x": dec("3.0")}, {"s": dec("0")})
    assert d == dirac((("s", dec("3.0")),))


def test_two_sensor_product_oracle():
    env = PhysEnv(
        1,
        {"x": [EvolRule(Guard.lit(True), "+=", GridInterval("0", "0", 1))]},
        {
            "s1": MeasRule("x", GridInterval("-0.1", "0.1", 1)),
            "s2": MeasRule("x", GridInterval("-0.1", "0.1", 1)),
        },
        [],
    )
    d = meas(env, {"x": dec("1.0")}, {})
    assert len(d) == 9
    assert all(w == Fraction(1, 9) for _, w in d.items())


def test_next_state_27_outcomes_match_formula_oracle():
    env, s = engine_env(), engine_state()
    d = next_state(env, s)
    # oracle: enumerate evol x meas literally
    expected = {}
    ev = evol(env, s.vars, s.actuators)
    for xs_items, wx in ev.items():
        ms = meas(env, dict(xs_items), s.sensors)
        for ss_items, wm in ms.items():
            st = PhysState(dict(xs_items), dict(ss_items), s.actuators)
            expected[st] = expected.get(st, Fraction(0)) + wx * wm
    assert dict(d.items()) == expected
    assert len(d) == 27
    assert all(w == Fraction(1, 27) for _, w in d.items())
    assert d.mass == 1


def test_next_state_leaves_actuators_untouched():
    d = next_state(engine_env(), engine_state(cool=ON, temp="10"))
    assert all(st.actuators["cool"] is ON for st in d.support())


def test_invariant_checks():
    env = engine_env()
    assert check_inv(env, engine_state(temp="11.5"))
    assert not check_inv(env, engine_state(temp="30.1"))
    assert check_inv(PhysEnv(1, {}, {}, []), PhysState({}, {}, {}))


def test_update_act_roundtrip():
    s = engine_state()
    s2 = update_act(s, "cool", ON)
    assert s2.actuators["cool"] is ON
    assert s2.vars == s.vars and s2.sensors == s.sensors
    assert update_act(s2, "cool", OFF) is s
    with pytest.raises(ModelError):
        update_act(s, "fan", ON)


def test_read_sensor_modes():
    env = engine_env()
    s = engine_state(temp="10.0", sensed="10.0")
    assert read_sensor(env, s, "st") == dirac(dec("10.0"))
    # at-read mode samples source + fresh noise
    env2 = PhysEnv(
        1,
        dict(env.evol_rules),
        {"st": MeasRule("temp", GridInterval("-0.1", "0.1", 1), at_tick=False)},
        list(env.constraints),
    )
    d = read_sensor(env2, s, "st")
    assert sorted(d.support()) == [dec("9.9"), dec("10.0"), dec("10.1")]
    with pytest.raises(ModelError):
        read_sensor(env, s, "nope")


def test_disjoint_union_factorization_law():
    # evol/meas/inv of the union factor as products / conjunction
    e1, s1 = engine_env(), engine_state(temp="3.0", sensed="3.0")
    e2 = PhysEnv(
        1,
        {"alt": [EvolRule(Guard.lit(True), "-=", GridInterval("0.1", "0.2", 1))]},
        {"s2": MeasRule("alt", GridInterval("0", "0", 1))},
        [Constraint("alt", dec("0"), None)],
    )
    s2 = PhysState({"alt": dec("5.0")}, {"s2": dec("5.0")}, {})
    eu = disjoint_env(e1, e2)
    su = disjoint_state(s1, s2)

    left = evol(e1, s1.vars, s1.actuators)
    right = evol(e2, s2.vars, s2.actuators)
    joint = evol(eu, su.vars, su.actuators)
    for xi, wi in left.items():
        for xj, wj in right.items():
            key = tuple(sorted(xi + xj))
            assert joint[key] == wi * wj

    jm = meas(eu, su.vars, su.sensors)
    lm = meas(e1, s1.vars, s1.sensors)
    rm = meas(e2, s2.vars, s2.sensors)
    for si, wi in lm.items():
        for sj, wj in rm.items():
            key = tuple(sorted(si + sj))
            assert jm[key] == wi * wj

    assert check_inv(eu, su) == (check_inv(e1, s1) and check_inv(e2, s2))
    bad = su.with_var("alt", dec("-0.1"))
    assert not check_inv(eu, bad)


def test_disjoint_union_name_collision_rejected():
    e1 = engine_env()
    with pytest.raises(ModelError, match="temp"):
        disjoint_env(e1, engine_env())
    with pytest.raises(ModelError):
        disjoint_state(engine_state(), engine_state())
