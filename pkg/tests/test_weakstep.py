from fractions import Fraction

import pytest

from modelzoo import CLOCK, chan, logic_cps, once_sender, coin
from pccps import dist
from pccps.dist import SubDist, dirac
from pccps.explore import WellTimednessError
from pccps.semantics import (
    DEAD,
    TAU,
    TICK,
    cps_step,
    in_label,
    out_label,
)
from pccps.syntax import NIL, fix, just, par, restrict, tick, timeout_in, timeout_out, var
from pccps.values import dec
from pccps.weakstep import (
    DerivativeCapExceeded,
    WeakNetwork,
    sub_steps,
    weak_derivatives,
)


def F(a, b=1):
    return Fraction(a, b)


def tau_pair(cont_left=CLOCK):
    """A system whose only move is one internal step to `cont_left`."""
    p = par([once_sender(), timeout_in("c", just(CLOCK), just(CLOCK))])
    return logic_cps(p, chan())


def test_identity_is_always_a_silent_option():
    m = logic_cps(CLOCK)
    assert dirac(m) in sub_steps(dirac(m), TAU)


def test_forced_firing_drops_unable_mass():
    able = tau_pair()  # has a tau (communication)
    silent = logic_cps(CLOCK)  # no tau, only tick
    gamma = SubDist({able: F(1, 2), silent: F(1, 2)})
    # for tick: both fire (both can tick? the tau-pair cannot tick: comm
    # pre-empts); only `silent` can tick, so half the mass survives
    stepped = sub_steps(gamma, TICK)
    assert len(stepped) == 1
    (out,) = stepped
    assert out.mass == F(1, 2)


def test_no_able_state_yields_no_step():
    m = logic_cps(CLOCK)
    assert sub_steps(dirac(m), out_label("c", dec("1"))) == frozenset()


def test_weak_silent_closure_of_a_two_step_chain():
    m = tau_pair()
    # m -tau-> clock||clock, which is silent
    derivs = weak_derivatives(m, TAU)
    succ = dict(cps_step(m))[TAU]
    assert dirac(m) in derivs
    assert succ in derivs
    assert len(derivs) == 2


def test_weak_derivatives_silent_state_is_identity_only():
    m = logic_cps(CLOCK)
    assert weak_derivatives(m, TAU) == frozenset({dirac(m)})


def test_weak_visible_after_silent_prefix():
    m = tau_pair()
    # after the communication both components tick in lockstep
    derivs = weak_derivatives(m, TICK)
    assert derivs  # nonempty: tau then tick
    assert all(g.mass == 1 for g in derivs)


def test_missing_weak_action_is_empty():
    m = logic_cps(CLOCK)
    assert weak_derivatives(m, out_label("c", dec("1"))) == frozenset()


def test_silent_cycle_detected():
    snd = fix(timeout_out("c", dec("1"), just(var(0)), just(var(0))))
    rcv = fix(timeout_in("c", just(var(0)), just(var(0))))
    m = logic_cps(restrict(par([snd, rcv]), "c"), chan())
    with pytest.raises(WellTimednessError):
        weak_derivatives(m, TAU)


def test_enumeration_cap_is_enforced():
    m = tau_pair()
    with pytest.raises(DerivativeCapExceeded):
        weak_derivatives(m, TICK, cap=1)


def test_network_shapes():
    m = tau_pair()
    net_tau = WeakNetwork(m, TAU)
    assert net_tau.silent and net_tau.exists
    assert m in net_tau.pre_states
    net_tick = WeakNetwork(m, TICK)
    assert not net_tick.silent
    assert net_tick.exists
    assert net_tick.targets  # the post-silent closure
    dead_net = WeakNetwork(logic_cps(CLOCK), out_label("c", dec("1")))
    assert not dead_net.exists
