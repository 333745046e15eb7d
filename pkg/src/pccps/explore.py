"""Reachable transition-system construction, clock-property checking,
barb search, and seeded trace sampling.
"""

from __future__ import annotations

import math
import random
from collections import deque
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from . import dist as distmod, physics, semantics
from .dist import FiniteDist
from .physics import ModelError
from .semantics import DEAD, Action, Cps, Label, TAU, TICK, cps_step, instantiate
from .values import fmt_value


class WellTimednessError(ModelError):
    """An unbounded (or over-budget) run of untimed actions was detected."""


class TruncationError(ModelError):
    """Exploration hit a configured resource limit."""


@dataclass
class Plts:
    """Reachable probabilistic transition system. States are indexed in
    BFS discovery order; edges[i] lists (action, distribution over state
    indices) with exact weights."""

    states: List[object]
    edges: List[Tuple[Tuple[Action, Tuple[Tuple[int, Fraction], ...]], ...]]
    root: int
    truncated: bool = False

    def index_of(self, m) -> int:
        return self._index[m]

    def __post_init__(self):
        self._index = {m: i for i, m in enumerate(self.states)}

    @property
    def complete(self) -> bool:
        return not self.truncated

    def dead_index(self) -> Optional[int]:
        for i, m in enumerate(self.states):
            if m is DEAD:
                return i
        return None

    def tau_successors(self, i: int) -> List[int]:
        out = []
        for action, dist in self.edges[i]:
            if action.kind == Label.TAU:
                out.extend(j for j, _ in dist)
        return out

    def has_tick(self, i: int) -> bool:
        return any(a.kind == Label.TICK for a, _ in self.edges[i])

    def has_tau(self, i: int) -> bool:
        return any(a.kind == Label.TAU for a, _ in self.edges[i])


def reachable(
    m,
    max_states: int = 2_000_000,
    max_tau_depth: int = 64,
) -> Plts:
    """BFS closure of the step relation. Raises WellTimednessError when a
    run of untimed actions exceeds max_tau_depth (a cycle counts as
    unbounded); raises TruncationError past max_states."""
    states: List[object] = [m]
    index = {m: 0}
    edges: List[tuple] = []
    queue = deque([0])
    while queue:
        i = queue.popleft()
        here = states[i]
        out = []
        for action, gamma in cps_step(here):
            enc = []
            for succ, w in gamma.items():
                j = index.get(succ)
                if j is None:
                    if len(states) >= max_states:
                        raise TruncationError(
                            f"state limit {max_states} exceeded during exploration"
                        )
                    j = len(states)
                    index[succ] = j
                    states.append(succ)
                    queue.append(j)
                enc.append((j, w))
            out.append((action, tuple(enc)))
        edges.append(tuple(out))
        # edges are appended in BFS order, so edges[i] lines up with states[i]
    plts = Plts(states, edges, 0)
    _check_untimed_depth(plts, max_tau_depth)
    return plts


def _longest_run(plts: Plts, skip_kinds: tuple) -> int:
    """Longest run of consecutive actions outside `skip_kinds`; raises
    WellTimednessError on a cycle of such actions."""
    n = len(plts.states)
    memo: List[Optional[int]] = [None] * n
    on_stack = [False] * n

    def visit(i: int) -> int:
        if memo[i] is not None:
            return memo[i]
        if on_stack[i]:
            raise WellTimednessError(
                f"cycle of untimed actions through state {i}"
            )
        on_stack[i] = True
        best = 0
        for action, dist in plts.edges[i]:
            if action.kind in skip_kinds:
                continue
            for j, _ in dist:
                best = max(best, 1 + visit(j))
        on_stack[i] = False
        memo[i] = best
        return best

    return max((visit(i) for i in range(n)), default=0)


def _check_untimed_depth(plts: Plts, max_tau_depth: int) -> int:
    """Only tau runs gate exploration: they are what weak-derivative
    enumeration must terminate on."""
    k = _longest_run(plts, (Label.TICK, Label.OUT, Label.IN))
    if k > max_tau_depth:
        raise WellTimednessError(
            f"tau run of length {k} exceeds the budget {max_tau_depth}"
        )
    return k


@dataclass
class ClockReport:
    determinism: bool
    maximal_progress: bool
    patience: bool
    well_timedness: bool
    max_untimed_run: Optional[int]
    witness: Dict[str, int] = field(default_factory=dict)

    @property
    def all_pass(self) -> bool:
        return (
            self.determinism
            and self.maximal_progress
            and self.patience
            and self.well_timedness
        )


def check_time_properties(plts: Plts) -> ClockReport:
    """Evaluate the four clock disciplines over every explored state:
    at most one tick derivative, tau pre-empts tick, a tickless state is
    either dead-by-invariant or has a tau, and untimed runs are bounded."""
    determinism = maximal = patience = True
    witness: Dict[str, int] = {}
    for i, m in enumerate(plts.states):
        ticks = [dist for a, dist in plts.edges[i] if a.kind == Label.TICK]
        taus = plts.has_tau(i)
        if len(set(ticks)) > 1 and determinism:
            determinism = False
            witness["determinism"] = i
        if taus and ticks and maximal:
            maximal = False
            witness["maximal_progress"] = i
        if m is DEAD:
            continue  # vacuous: the dead system has no obligations
        if not ticks and patience:
            alive = physics.check_inv(m.env, m.state)
            if alive and not taus:
                patience = False
                witness["patience"] = i
    try:
        k = _longest_run(plts, (Label.TICK,))
        well_timed = True
    except WellTimednessError:
        k = None
        well_timed = False
    return ClockReport(determinism, maximal, patience, well_timed, k, witness)


@dataclass
class TraceStep:
    action: Action
    successor: object
    slot: int


@dataclass
class Trace:
    steps: List[TraceStep]
    seed: Optional[int] = None

    @property
    def slots(self) -> int:
        return self.steps[-1].slot if self.steps else 1


@dataclass
class BarbResult:
    trace: Optional[Trace]
    conclusive: bool

    @property
    def found(self) -> bool:
        return self.trace is not None


def find_barb(system, chan: str, max_slots: Optional[int] = None,
              max_states: int = 2_000_000) -> BarbResult:
    """Shortest trace (by tick count) ending in an output on `chan`.
    Accepts a system or a prebuilt Plts. Absence is conclusive only when
    the whole reachable space was explored within the slot bound."""
    if isinstance(system, Plts):
        plts = system
    else:
        plts = reachable(system, max_states=max_states)
    horizon = math.inf if max_slots is None else max_slots

    n = len(plts.states)
    dist_ticks = [math.inf] * n
    parent: List[Optional[Tuple[int, Action, int]]] = [None] * n
    dq = deque([plts.root])
    dist_ticks[plts.root] = 0
    order = []
    while dq:
        i = dq.popleft()
        order.append(i)
        for action, dist in plts.edges[i]:
            cost = 1 if action.kind == Label.TICK else 0
            nd = dist_ticks[i] + cost
            if nd + 1 > horizon:
                continue  # the barb would land past the slot budget
            for j, _ in dist:
                if nd < dist_ticks[j]:
                    dist_ticks[j] = nd
                    parent[j] = (i, action, j)
                    if cost == 0:
                        dq.appendleft(j)
                    else:
                        dq.append(j)

    best = None
    for i in range(n):
        if dist_ticks[i] is math.inf:
            continue
        for action, dist in plts.edges[i]:
            if action.kind == Label.OUT and action.chan == chan:
                if dist_ticks[i] + 1 <= horizon:
                    if best is None or dist_ticks[i] < dist_ticks[best[0]]:
                        best = (i, action, dist)

    if best is None:
        conclusive = plts.complete and horizon is math.inf
        if plts.complete and horizon is not math.inf:
            # absence is still conclusive if every state was within budget
            conclusive = all(d + 1 <= horizon for d in dist_ticks if d is not math.inf) and all(
                d is not math.inf for d in dist_ticks
            )
        return BarbResult(None, conclusive)

    i, action, dist = best
    chain: List[Tuple[int, Action, int]] = []
    cur = i
    while parent[cur] is not None:
        prev, act, node = parent[cur]
        chain.append((prev, act, node))
        cur = prev
    chain.reverse()
    # a step's slot is the number of completed ticks + 1; the tick ending
    # slot k is itself reported in slot k
    steps = []
    ticks = 0
    for prev, act, node in chain:
        steps.append(TraceStep(act, plts.states[node], ticks + 1))
        if act.kind == Label.TICK:
            ticks += 1
    target = dist[0][0]
    steps.append(TraceStep(action, plts.states[target], ticks + 1))
    return BarbResult(Trace(steps), True)


# ---------------------------------------------------------------------------
# Seeded simulation.


def _sample_index(rng: random.Random, weights: Sequence[Fraction]) -> int:
    denom = 1
    for w in weights:
        denom = denom * w.denominator // math.gcd(denom, w.denominator)
    total = sum(int(w * denom) for w in weights)
    draw = rng.randrange(total)
    acc = 0
    for k, w in enumerate(weights):
        acc += int(w * denom)
        if draw < acc:
            return k
    raise AssertionError("unreachable")


_cumulative_cache: Dict[int, tuple] = {}


def _sample_dist(rng: random.Random, items: Sequence[Tuple[object, Fraction]]):
    """Draw a support element exactly: integer cumulative weights over the
    common denominator (cached per distribution identity)."""
    key = id(items)
    hit = _cumulative_cache.get(key)
    if hit is None:
        denom = 1
        for _, w in items:
            denom = denom * w.denominator // math.gcd(denom, w.denominator)
        cum = []
        acc = 0
        for _, w in items:
            acc += int(w * denom)
            cum.append(acc)
        hit = (acc, tuple(cum), items)
        if len(_cumulative_cache) < 500_000:
            _cumulative_cache[key] = hit
    total, cum, kept = hit
    draw = rng.randrange(total)
    from bisect import bisect_right

    return kept[bisect_right(cum, draw)][0]


def _sample_next_state(rng: random.Random, m) -> physics.PhysState:
    """Sample physics.next_state(m.env, m.state) without materializing the
    product: draw each variable update and each sensor noise independently."""
    env, s = m.env, m.state
    new_vars = {}
    for name in env.evol_rules:
        rule = physics._fire(env, name, s.actuators)
        d = rule.outcomes(s.vars[name])
        new_vars[name] = _sample_dist(rng, d.items())
    new_sensors = {}
    for name, rule in env.meas_rules.items():
        if rule.at_tick:
            d = rule.outcomes(new_vars[rule.source])
            new_sensors[name] = _sample_dist(rng, d.items())
        else:
            new_sensors[name] = s.sensors[name]
    return physics.PhysState(new_vars, new_sensors, s.actuators)


_menu_cache: Dict[object, tuple] = {}


def _sampled_transitions(m) -> Tuple[Tuple[Action, tuple], ...]:
    """The transition menu of cps_step as light descriptors, without
    materializing system-level distributions. Descriptors are
    ('dead',), ('tick', process-dist), or ('proc', state, process-dist);
    two menu entries coincide exactly when the corresponding cps_step
    moves do (the state part and the process distribution determine the
    lifted distribution)."""
    if m is DEAD:
        return ()
    hit = _menu_cache.get(m)
    if hit is not None:
        return hit
    if not physics.check_inv(m.env, m.state):
        out = ((TAU, ("dead",)),)
        _menu_cache[m] = out
        return out
    moves: Dict[tuple, None] = {}
    tick_pi = None
    has_tau = False
    for label, pi in semantics.proc_step(m.proc, m.alphabets):
        if label.kind == Label.TICK:
            tick_pi = pi
            continue
        if label.kind == Label.READ:
            reading = physics.read_sensor(m.env, m.state, label.chan)
            if len(reading) == 1:
                combined = instantiate(pi, reading.support()[0])
            else:
                combined = distmod.combine(
                    [(w, instantiate(pi, v)) for v, w in reading.items()]
                ).as_full()
            moves[(TAU, ("proc", m.state, combined))] = None
            has_tau = True
        elif label.kind == Label.WRITE:
            ns = physics.update_act(m.state, label.chan, label.value)
            moves[(TAU, ("proc", ns, pi))] = None
            has_tau = True
        elif label.kind == Label.TAU:
            moves[(TAU, ("proc", m.state, pi))] = None
            has_tau = True
        else:
            moves[(label, ("proc", m.state, pi))] = None
    menu = list(moves)
    if tick_pi is not None and not has_tau:
        menu.append((TICK, ("tick", tick_pi)))
    menu.sort(
        key=lambda mv: (
            mv[0].sort_key(),
            mv[1][0],
            tuple(
                (p.uid, w) for p, w in (mv[1][-1].items() if len(mv[1]) > 1 else ())
            ),
            mv[1][1].sort_key() if mv[1][0] == "proc" else (),
        )
    )
    out = tuple(menu)
    if len(_menu_cache) < 500_000:
        _menu_cache[m] = out
    return out


def sample_trace(m, slots: int, seed: int, collect=None) -> Trace:
    """One seeded run of `slots` time slots. Nondeterminism between
    transitions is resolved uniformly; probabilistic branches are drawn
    exactly from their rational weights. Identical seeds give identical
    traces."""
    rng = random.Random(seed)
    steps: List[TraceStep] = []
    current = m
    ticks = 0
    while ticks < slots:
        menu = _sampled_transitions(current)
        if not menu:
            break
        action, payload = menu[rng.randrange(len(menu))]
        if payload[0] == "dead":
            succ = DEAD
            slot = ticks + 1
        elif payload[0] == "tick":
            st = _sample_next_state(rng, current)
            proc = _sample_dist(rng, payload[1].items())
            succ = Cps(current.env, st, proc, current.alphabets)
            ticks += 1
            slot = ticks
        else:
            _, st, pd = payload
            proc = _sample_dist(rng, pd.items())
            succ = Cps(current.env, st, proc, current.alphabets)
            slot = ticks + 1
        steps.append(TraceStep(action, succ, slot))
        if collect is not None:
            collect(action, succ, slot)
        if succ is DEAD:
            break
        current = succ
    return Trace(steps, seed=seed)


# ---------------------------------------------------------------------------
# CSV emission (fixed schema for reproducible plotting).


def _csv_bindings(m) -> Tuple[Optional[str], Optional[str], Optional[str]]:
    if m is DEAD:
        return None, None, None
    s = m.state
    var = "temp" if "temp" in s.vars else (sorted(s.vars)[0] if s.vars else None)
    act = "cool" if "cool" in s.actuators else (
        sorted(s.actuators)[0] if s.actuators else None
    )
    sen = "st" if "st" in s.sensors else (sorted(s.sensors)[0] if s.sensors else None)
    return var, act, sen


def trace_csv_rows(m, trace: Trace, g: int) -> List[str]:
    """Rows for the fixed schema `slot,action,temp,cool,sensed`, bound to
    the model's devices; decimals carry exactly g fractional digits."""
    var, act, sen = _csv_bindings(m)
    rows = [f"# seed={trace.seed}", "slot,action,temp,cool,sensed"]
    for step in trace.steps:
        succ = step.successor
        if succ is DEAD:
            vals = ("", "", "")
        else:
            s = succ.state
            vals = (
                fmt_value(s.vars[var], g) if var else "",
                s.actuators[act].name if act else "",
                fmt_value(s.sensors[sen], g) if sen else "",
            )
        rows.append(f"{step.slot},{step.action!r},{vals[0]},{vals[1]},{vals[2]}")
    return rows


# ---------------------------------------------------------------------------
# Actuator-change scan (exhaustive counterpart of trace-level checks).


def actuator_flips(plts: Plts, actuator: str):
    """Yield (state, old, new) for every edge whose support flips the
    actuator value."""
    for i, m in enumerate(plts.states):
        if m is DEAD:
            continue
        old = m.state.actuators.get(actuator)
        if old is None:
            continue
        for action, dist in plts.edges[i]:
            for j, _ in dist:
                succ = plts.states[j]
                if succ is DEAD:
                    continue
                new = succ.state.actuators.get(actuator)
                if new is not None and new != old:
                    yield m, old, new
