"""Weak transitions over sub-distributions.

Two views of the same relation live here. `sub_steps`/`weak_derivatives`
enumerate the finitely many outcomes of deterministic per-state scheduling
(each support element independently keeps its mass or commits it to one
derivative). `WeakNetwork` describes the full convex set of outcomes that
randomized, split-capable scheduling can reach, as a linear flow system
over the silent-step DAG; the metric engine minimizes transport cost over
that set in a single exact LP. The enumeration stays as the reference
oracle: its outcomes are vertices inside the network's polytope.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Dict, FrozenSet, List, Optional, Sequence, Set, Tuple

from . import dist
from .dist import EMPTY, FiniteDist, SubDist
from .explore import WellTimednessError
from .semantics import DEAD, Action, Label, TAU, cps_step

ZERO = Fraction(0)
ONE = Fraction(1)


class DerivativeCapExceeded(Exception):
    """Enumerating weak derivatives would exceed the configured budget."""


def _options(state, action: Action) -> List[FiniteDist]:
    return [g for a, g in cps_step(state) if a == action]


def _tau_options(state) -> List[FiniteDist]:
    return _options(state, TAU)


def sub_steps(gamma: SubDist, action: Action) -> FrozenSet[SubDist]:
    """One lifted step from a sub-distribution. For the silent action every
    support element fires (keeping its mass is itself a silent move); for
    any other action exactly the able elements fire and the rest of the
    mass is dropped. Returns the empty set when no step exists."""
    items = gamma.items()
    if action.kind == Label.TAU:
        per_elem = [
            [dist.dirac(m)] + _tau_options(m)
            for m, _ in items
        ]
    else:
        per_elem = []
        able_items = []
        for m, w in items:
            opts = _options(m, action)
            if opts:
                per_elem.append(opts)
                able_items.append((m, w))
        if not per_elem:
            return frozenset()
        items = tuple(able_items)

    results: Set[SubDist] = set()

    def rec(k: int, acc: List[Tuple[Fraction, SubDist]]):
        if k == len(items):
            results.add(dist.combine(acc))
            return
        _, w = items[k]
        for choice in per_elem[k]:
            rec(k + 1, acc + [(w, choice)])

    rec(0, [])
    return frozenset(results)


def weak_derivatives(
    state, action: Action, cap: int = 10_000
) -> FrozenSet[SubDist]:
    """The finite set of sub-distributions reachable from the state by a
    weak `action` transition under deterministic per-state scheduling:
    silent closure around at most one visible step. Detects silent cycles
    (a well-timedness violation) and enforces an enumeration budget."""
    tau_graph(state)  # raises on a silent cycle
    start = dist.dirac(state)
    tau_set = _tau_closure({start}, cap)
    if action.kind == Label.TAU:
        return frozenset(tau_set)
    results: Set[SubDist] = set()
    for gamma in tau_set:
        for fired in sub_steps(gamma, action):
            for final in _tau_closure({fired}, cap):
                results.add(final)
                if len(results) > cap:
                    raise DerivativeCapExceeded(
                        f"more than {cap} weak derivatives"
                    )
    return frozenset(results)


def _tau_closure(seed: Set[SubDist], cap: int) -> Set[SubDist]:
    seen: Set[SubDist] = set(seed)
    frontier = list(seed)
    while frontier:
        nxt = []
        for gamma in frontier:
            if gamma.mass == 0:
                continue
            for succ in sub_steps(gamma, TAU):
                if succ not in seen:
                    seen.add(succ)
                    nxt.append(succ)
                    if len(seen) > cap:
                        raise DerivativeCapExceeded(
                            f"more than {cap} silent derivatives"
                        )
        frontier = nxt
    return seen


# ---------------------------------------------------------------------------
# Silent-step DAG per state.


_tau_graph_memo: Dict[object, Tuple[Tuple[object, ...], Dict[object, list]]] = {}


def tau_graph(state) -> Tuple[Tuple[object, ...], Dict[object, list]]:
    """(states in a topological order from the root, silent options per
    state). Raises WellTimednessError on a silent cycle."""
    hit = _tau_graph_memo.get(state)
    if hit is not None:
        return hit
    order: List[object] = []
    options: Dict[object, list] = {}
    color: Dict[object, int] = {}

    def visit(m):
        c = color.get(m, 0)
        if c == 1:
            raise WellTimednessError("silent cycle under weak transition")
        if c == 2:
            return
        color[m] = 1
        opts = [] if m is DEAD else _tau_options(m)
        options[m] = opts
        for g in opts:
            for succ in g.support():
                visit(succ)
        color[m] = 2
        order.append(m)

    visit(state)
    order.reverse()  # root first
    out = (tuple(order), options)
    _tau_graph_memo[state] = out
    return out


class WeakNetwork:
    """Linear description of every sub-distribution reachable from `root`
    by a weak `action` transition when schedulers may split mass.

    Variables (all >= 0):
      pre-phase: per state, one flow per silent option plus a hold;
      visible phase: per able state, one flow per `action` option
                     (the hold of an able state must fire; the hold of an
                     unable state is dropped mass);
      post-phase: per state, silent options plus a stop.
    The reachable marginal at a target state is its stop variable (its
    hold for the silent action); dropped mass joins the dead coordinate.
    """

    def __init__(self, root, action: Action):
        self.root = root
        self.action = action
        self.silent = action.kind == Label.TAU
        pre_states, pre_opts = tau_graph(root)
        self.pre_states = pre_states
        self.pre_opts = pre_opts
        if self.silent:
            self.fire_opts = None
            self.post_states = ()
            self.post_opts = {}
            self.targets = pre_states
            self.exists = True
        else:
            self.fire_opts = {
                m: _options(m, action) for m in pre_states if m is not DEAD
            }
            fired_supports: Set[object] = set()
            for opts in self.fire_opts.values():
                for g in opts:
                    fired_supports.update(g.support())
            post: List[object] = []
            post_opts: Dict[object, list] = {}
            seen: Set[object] = set()
            for s in sorted(fired_supports, key=lambda x: x.uid):
                states, opts = tau_graph(s)
                for t in states:
                    if t not in seen:
                        seen.add(t)
                        post.append(t)
                        post_opts[t] = opts[t]
            self.post_states = tuple(post)
            self.post_opts = post_opts
            self.targets = self.post_states
            self.exists = any(self.fire_opts[m] for m in self.fire_opts)

    def droppable(self) -> bool:
        """Can any positive mass be lost (ending in the dead coordinate)?
        True when a silently reachable state has no visible option."""
        if self.silent:
            return False
        return any(not self.fire_opts.get(m) for m in self.pre_states)
