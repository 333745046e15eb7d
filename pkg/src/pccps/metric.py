"""Behavioural pseudometrics between systems.

`metric_step` applies one refinement of the distance table: for each pair,
each action enabled on either side, and each strong derivative of one
side, it charges the cheapest transport cost to a weak derivative of the
other side, topping short sub-distributions up with the dead state. The
minimization runs over the full convex family of weak derivatives
(schedulers may split mass), expressed as one exact LP over the silent
flow network plus the coupling; an empty maximization contributes 0 and an
empty minimization 1.

`distance_n` iterates from the all-zero table. Large never-dying systems
take a certificate fast path: a bounded search of the co-reachable pair
graph showing that every demanded matching can be answered at full mass
with live weak derivatives, which pins the root distance to exactly zero
without materializing tables.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, FrozenSet, List, Optional, Sequence, Set, Tuple

from . import lp
from .dist import FiniteDist
from .explore import Plts, reachable
from .physics import ModelError
from .semantics import DEAD, Action, Label, TAU, cps_step
from .transport import kantorovich
from .weakstep import WeakNetwork, tau_graph

ZERO = Fraction(0)
ONE = Fraction(1)


class ScaleError(ModelError):
    """The joint state space is too large for exact table iteration."""


# ---------------------------------------------------------------------------
# Joint context: reachable sets, strong moves, weak-move availability.


class PairContext:
    def __init__(self, m1, m2, max_states: int = 2_000_000, table_pair_limit: int = 400_000):
        self.m1, self.m2 = m1, m2
        self.plts1 = reachable(m1, max_states=max_states)
        self.plts2 = reachable(m2, max_states=max_states)
        self.table_pair_limit = table_pair_limit
        states: List[object] = []
        seen: Set[object] = set()
        for s in self.plts1.states + self.plts2.states:
            if s is not DEAD and s not in seen:
                seen.add(s)
                states.append(s)
        self.states = states  # live union, deterministic order
        self._strong: Dict[object, Dict[Action, List[FiniteDist]]] = {}
        self._nets: Dict[Tuple[object, Action], WeakNetwork] = {}
        self._full_live: Dict[Tuple[object, Action], bool] = {}
        self._weak_targets: Dict[Tuple[object, Action], tuple] = {}

    # -- strong moves

    def strong(self, s) -> Dict[Action, List[FiniteDist]]:
        hit = self._strong.get(s)
        if hit is None:
            hit = {}
            if s is not DEAD:
                for action, gamma in cps_step(s):
                    hit.setdefault(action, []).append(gamma)
            self._strong[s] = hit
        return hit

    def enabled(self, s) -> Tuple[Action, ...]:
        return tuple(self.strong(s))

    # -- weak machinery

    def net(self, s, action: Action) -> WeakNetwork:
        key = (s, action)
        hit = self._nets.get(key)
        if hit is None:
            hit = WeakNetwork(s, action)
            self._nets[key] = hit
        return hit

    def weak_exists(self, s, action: Action) -> bool:
        if s is DEAD:
            return action.kind == Label.TAU
        return self.net(s, action).exists

    def weak_targets(self, s, action: Action) -> tuple:
        """All states a weak derivative may put mass on (overapproximation
        used by the certificate search)."""
        key = (s, action)
        hit = self._weak_targets.get(key)
        if hit is None:
            if s is DEAD:
                hit = (DEAD,) if action.kind == Label.TAU else ()
            else:
                hit = tuple(self.net(s, action).targets)
            self._weak_targets[key] = hit
        return hit

    def full_live_weak(self, s, action: Action) -> bool:
        """Is there a weak `action` derivative of full mass whose support
        avoids the dead state? For the silent action the identity works
        whenever s is alive; for a visible action every unit of mass must
        be routable to a state that can fire it."""
        key = (s, action)
        hit = self._full_live.get(key)
        if hit is not None:
            return hit
        if s is DEAD:
            out = action.kind == Label.TAU and False  # dead pairs never certify
        elif action.kind == Label.TAU:
            out = True
        else:
            net = self.net(s, action)
            can: Dict[object, bool] = {}
            for x in reversed(net.pre_states):  # children before parents
                able = bool(net.fire_opts.get(x))
                routed = False
                if not able:
                    for g in net.pre_opts.get(x, ()):
                        if all(can.get(y, False) for y in g.support()):
                            routed = True
                            break
                can[x] = able or routed
            out = can.get(s, False)
        self._full_live[key] = out
        return out


# ---------------------------------------------------------------------------
# Distance tables (sparse over live pairs; the dead row is implicit).


class MetricTable:
    """Symmetric pair table with zero diagonal. Entries absent from the
    map are zero. Pairs with the dead state are stored under (state, DEAD)."""

    __slots__ = ("entries",)

    def __init__(self, entries: Optional[Dict[tuple, Fraction]] = None):
        self.entries = entries or {}

    @staticmethod
    def _norm(a, b) -> tuple:
        # uid gives a cheap total order (Dead sorts last via uid -1 flip)
        if a is b:
            return (a, a)
        if b is DEAD:
            return (a, b)
        if a is DEAD:
            return (b, a)
        return (a, b) if a.uid <= b.uid else (b, a)

    def get(self, a, b) -> Fraction:
        if a is b:
            return ZERO
        return self.entries.get(self._norm(a, b), ZERO)

    def set(self, a, b, v: Fraction):
        if a is b:
            if v != 0:
                raise ValueError("diagonal must stay zero")
            return
        key = self._norm(a, b)
        if v == 0:
            self.entries.pop(key, None)
        else:
            self.entries[key] = v

    def __eq__(self, other):
        return isinstance(other, MetricTable) and self.entries == other.entries

    def __len__(self):
        return len(self.entries)

    def copy(self) -> "MetricTable":
        return MetricTable(dict(self.entries))


# ---------------------------------------------------------------------------
# The directed term: cheapest transport against the convex weak family.


def _rows_append(rows, cols, coeffs):
    rows.append(list(zip(cols, coeffs)))


def best_weak_match(
    ctx: PairContext,
    defender,
    action: Action,
    gamma1: FiniteDist,
    table: MetricTable,
    want_witness: bool = False,
):
    """min over weak `action` derivatives gamma2 of the defender of the
    coupling cost K(d)(gamma1, gamma2 + missing-mass-at-Dead). Returns the
    exact value (1 when no weak derivative exists), optionally with an
    optimal coupling."""
    if defender is DEAD:
        if action.kind != Label.TAU:
            return (ONE, None) if want_witness else ONE
        value = sum(
            (w * table.get(u, DEAD) for u, w in gamma1.items()), ZERO
        )
        witness = {(u, DEAD): w for u, w in gamma1.items()} if want_witness else None
        return (value, witness) if want_witness else value

    net = ctx.net(defender, action)
    if not net.silent and not net.exists:
        return (ONE, None) if want_witness else ONE

    support = gamma1.items()
    live_targets = tuple(t for t in net.targets if t is not DEAD)
    has_dead_col = net.droppable() or any(t is DEAD for t in net.targets)

    # lower bound: let every unit of attacking mass pick its dream target
    lb = ZERO
    for u, w in support:
        best = min(
            (table.get(u, v) for v in live_targets),
            default=ONE,
        )
        if has_dead_col:
            best = min(best, table.get(u, DEAD))
        lb += w * best
    if not want_witness:
        # cheap feasible upper bound: the identity for silent moves
        if net.silent:
            ub = sum((w * table.get(u, defender) for u, w in support), ZERO)
            if ub == lb:
                return lb
        if lb == ONE:
            return ONE
        if lb == 0 and action.kind != Label.TAU:
            # the common case (every relevant distance already zero) needs
            # no LP: zero is reachable iff full mass can fire live
            if ctx.full_live_weak(defender, action) and all(
                table.get(u, v) == 0 for u, _ in support for v in live_targets
            ):
                return ZERO

    # --- full LP over (pre flows, fires, post flows, coupling)

    var_names: List[tuple] = []

    def new_var(tag) -> int:
        var_names.append(tag)
        return len(var_names) - 1

    pre_states = net.pre_states
    pre_idx = {s: i for i, s in enumerate(pre_states)}

    hold = {s: new_var(("hold", s)) for s in pre_states}
    pre_flow = {}
    for s in pre_states:
        for k, g in enumerate(net.pre_opts.get(s, ())):
            pre_flow[(s, k)] = new_var(("pre", s, k))

    if net.silent:
        fire = {}
        post_states: tuple = ()
        post_flow = {}
        stop = hold  # holding is stopping for the silent action
        target_states = pre_states
    else:
        fire = {}
        for s in pre_states:
            for k, g in enumerate(net.fire_opts.get(s, ())):
                fire[(s, k)] = new_var(("fire", s, k))
        post_states = net.post_states
        post_flow = {}
        stop = {s: new_var(("stop", s)) for s in post_states}
        for s in post_states:
            for k, g in enumerate(net.post_opts.get(s, ())):
                post_flow[(s, k)] = new_var(("post", s, k))
        target_states = post_states

    # The pad receives mass only when the derivative is short or stops at
    # Dead; omit the column otherwise so the LP stays tight. Targets whose
    # cost vectors against the attacking support agree are interchangeable
    # for the coupling, so they share one column.
    live_cols = tuple(t for t in target_states if t is not DEAD)
    dead_col = has_dead_col
    classes: Dict[tuple, list] = {}
    for v in live_cols:
        sig = tuple(table.get(u, v) for u, _ in support)
        classes.setdefault(sig, []).append(v)
    class_list = list(classes.items())

    omega = {}
    for u, _ in support:
        for ci in range(len(class_list)):
            omega[(u, ci)] = new_var(("w", u, ci))
        if dead_col:
            omega[(u, DEAD)] = new_var(("w", u, DEAD))

    rows: List[list] = []
    rhs: List[Fraction] = []

    # pre-phase conservation
    for s in pre_states:
        cols = [hold[s]]
        coeffs = [ONE]
        for k, g in enumerate(net.pre_opts.get(s, ())):
            cols.append(pre_flow[(s, k)])
            coeffs.append(ONE)
        for (y, k), var in pre_flow.items():
            w = net.pre_opts[y][k][s]
            if w:
                cols.append(var)
                coeffs.append(-w)
        rows.append(list(zip(cols, coeffs)))
        rhs.append(ONE if s is defender else ZERO)

    if not net.silent:
        # able holds must fire; unable holds are the dropped mass
        for s in pre_states:
            opts = net.fire_opts.get(s, ())
            if opts:
                cols = [hold[s]] + [fire[(s, k)] for k in range(len(opts))]
                coeffs = [-ONE] + [ONE] * len(opts)
                rows.append(list(zip(cols, coeffs)))
                rhs.append(ZERO)
        # post-phase conservation
        for s in post_states:
            cols = [stop[s]]
            coeffs = [ONE]
            for k, g in enumerate(net.post_opts.get(s, ())):
                cols.append(post_flow[(s, k)])
                coeffs.append(ONE)
            for (y, k), var in post_flow.items():
                w = net.post_opts[y][k][s]
                if w:
                    cols.append(var)
                    coeffs.append(-w)
            for (y, k), var in fire.items():
                w = net.fire_opts[y][k][s]
                if w:
                    cols.append(var)
                    coeffs.append(-w)
            rows.append(list(zip(cols, coeffs)))
            rhs.append(ZERO)

    # coupling marginals: rows fixed by the attacker
    for u, w in support:
        cols = [omega[(u, ci)] for ci in range(len(class_list))]
        if dead_col:
            cols.append(omega[(u, DEAD)])
        rows.append([(c, ONE) for c in cols])
        rhs.append(w)
    # columns fixed by the defender's stopping pattern, per cost class
    for ci, (_, members) in enumerate(class_list):
        cols = [omega[(u, ci)] for u, _ in support] + [stop[v] for v in members]
        coeffs = [ONE] * len(support) + [-ONE] * len(members)
        rows.append(list(zip(cols, coeffs)))
        rhs.append(ZERO)
    if dead_col:
        cols = [omega[(u, DEAD)] for u, _ in support]
        coeffs = [ONE] * len(support)
        if net.silent:
            if DEAD in (set(target_states)):
                cols.append(stop[DEAD])
                coeffs.append(-ONE)
        else:
            for s in pre_states:
                if not net.fire_opts.get(s):
                    cols.append(hold[s])
                    coeffs.append(-ONE)
            if DEAD in set(post_states):
                cols.append(stop[DEAD])
                coeffs.append(-ONE)
        rows.append(list(zip(cols, coeffs)))
        rhs.append(ZERO)

    # a class column costs its shared signature entry for the row's state
    costs = [ZERO] * len(var_names)
    row_of = {u: k for k, (u, _) in enumerate(support)}
    for (u, tag), var in omega.items():
        if tag is DEAD:
            costs[var] = table.get(u, DEAD)
        else:
            costs[var] = class_list[tag][0][row_of[u]]

    value, x = lp.solve_eq(costs, rows, rhs)
    if not want_witness:
        return value
    witness = {}
    for (u, tag), var in omega.items():
        if x[var] > 0:
            rep = DEAD if tag is DEAD else class_list[tag][1][0]
            witness[(u, rep)] = witness.get((u, rep), ZERO) + x[var]
    return value, witness


# ---------------------------------------------------------------------------
# One refinement step over the whole live pair table.


def _pair_value(ctx: PairContext, a, b, table: MetricTable) -> Fraction:
    actions = set(ctx.enabled(a)) | set(ctx.enabled(b))
    best = ZERO
    for action in sorted(actions, key=lambda x: x.sort_key()):
        for attacker, defender in ((a, b), (b, a)):
            for gamma1 in ctx.strong(attacker).get(action, ()):
                v = best_weak_match(ctx, defender, action, gamma1, table)
                if v > best:
                    best = v
                    if best == ONE:
                        return ONE
    return best


def metric_step(
    ctx: PairContext, table: MetricTable, pairs: Optional[list] = None
) -> MetricTable:
    """One application of the refinement functional. By default the table
    ranges over every pair of the joint live space plus the dead rows;
    passing `pairs` restricts it to a dependency-closed pair set (the
    values on such a set are identical to the full table's). Entries
    already at 1 are frozen: iterates grow monotonically from the zero
    start, so they can never come back down."""
    out = MetricTable()
    if pairs is None:
        states = ctx.states
        npairs = len(states) * (len(states) + 1) // 2
        if npairs > ctx.table_pair_limit:
            raise ScaleError(
                f"{npairs} pairs exceed the table budget {ctx.table_pair_limit}"
            )
        pairs = []
        for i, a in enumerate(states):
            for b in states[i + 1 :]:
                pairs.append((a, b))
            pairs.append((a, DEAD))
    for (a, b) in pairs:
        if a is b:
            continue
        if table.get(a, b) == ONE:
            out.set(a, b, ONE)
            continue
        out.set(a, b, _pair_value(ctx, a, b, table))
    return out


def pair_closure(ctx: PairContext, cap: int = 300_000) -> list:
    """All pairs the refinement can touch starting from the root pair:
    the dependency closure under (strong move on one side, weak move on
    the other), normalized orderless, dead rows included."""
    root = MetricTable._norm(ctx.m1, ctx.m2)
    seen = {root}
    order = [root]
    frontier = [root]
    while frontier:
        nxt = []
        for (a, b) in frontier:
            for attacker, defender in ((a, b), (b, a)):
                if attacker is DEAD:
                    continue
                for action in ctx.enabled(attacker):
                    targets = ctx.weak_targets(defender, action)
                    if defender is not DEAD and not targets and action.kind != Label.TAU:
                        targets = ()
                    extended = tuple(targets) + (DEAD,)
                    for gamma1 in ctx.strong(attacker)[action]:
                        for u in gamma1.support():
                            for v in extended:
                                key = MetricTable._norm(u, v)
                                if key not in seen:
                                    seen.add(key)
                                    order.append(key)
                                    nxt.append(key)
                                    if len(seen) > cap:
                                        raise ScaleError(
                                            f"pair closure exceeds {cap} pairs"
                                        )
        frontier = nxt
    return order


# ---------------------------------------------------------------------------
# Zero certificate: bounded co-reachable pair search.


def _visible_layers(plts: Plts, depth: Optional[int]) -> Optional[list]:
    """States reachable with at most `depth` visible actions (silent steps
    are free); all states when depth is None. None when the dead state is
    inside the bound."""
    from collections import deque

    n = len(plts.states)
    if depth is None:
        if any(s is DEAD for s in plts.states):
            return None
        return list(plts.states)
    INF = float("inf")
    dist = [INF] * n
    dist[plts.root] = 0
    dq = deque([plts.root])
    while dq:
        i = dq.popleft()
        for action, d in plts.edges[i]:
            cost = 0 if action.kind == Label.TAU else 1
            nd = dist[i] + cost
            if nd > depth:
                continue
            for j, _ in d:
                if nd < dist[j]:
                    dist[j] = nd
                    (dq.appendleft if cost == 0 else dq.append)(j)
    out = []
    for i in range(n):
        if dist[i] <= depth:
            if plts.states[i] is DEAD:
                return None
            out.append(plts.states[i])
    return out


def _mask_certificate(ctx: PairContext, depth: Optional[int]) -> bool:
    """Pair-free sufficient condition for the zero certificate: within the
    visible-depth bound, every action strongly enabled anywhere on one
    side has a full-mass dead-free weak answer everywhere on the other.
    A pair at refinement level l has sides at visible depth <= l, so this
    covers every pair the bounded certificate would visit."""
    sideA = _visible_layers(ctx.plts1, depth)
    sideB = _visible_layers(ctx.plts2, depth)
    if sideA is None or sideB is None:
        return False

    def needs(side) -> set:
        out = set()
        for s in side:
            out.update(ctx.enabled(s))
        return out

    def answers(side, actions) -> bool:
        return all(
            ctx.full_live_weak(s, a) for a in actions for s in side
        )

    return answers(sideB, needs(sideA)) and answers(sideA, needs(sideB))


def _zero_certificate(ctx: PairContext, depth: Optional[int]) -> bool:
    """True when every pair co-reachable from the roots within `depth`
    steps (every co-reachable pair, when depth is None) can answer each
    opposing strong action with a full-mass, dead-free weak derivative.
    By induction over the refinement this pins the root's n-distance to
    exactly zero for all n <= depth + 1 (for all n, when unbounded).

    The pair-free mask form is tried first (linear in the state count);
    the precise pair search only runs on small joint spaces."""
    root = (ctx.m1, ctx.m2)
    if ctx.m1 is DEAD or ctx.m2 is DEAD:
        return False
    if _mask_certificate(ctx, depth):
        return True
    if len(ctx.plts1.states) * len(ctx.plts2.states) > 250_000:
        return False

    def pack(a, b) -> int:
        # orderless uid pair; uids are interning-table indices
        x, y = a.uid, b.uid
        if x > y:
            x, y = y, x
        return (x << 32) | y

    seen: Set[int] = {pack(*root)}
    frontier = [root]
    level = 0
    while frontier:
        if depth is not None and level > depth:
            break
        level += 1
        nxt = []
        for (a, b) in frontier:
            for attacker, defender in ((a, b), (b, a)):
                for action in ctx.enabled(attacker):
                    if not ctx.full_live_weak(defender, action):
                        return False
                    targets = ctx.weak_targets(defender, action)
                    if any(t is DEAD for t in targets):
                        targets = tuple(t for t in targets if t is not DEAD)
                    for gamma1 in ctx.strong(attacker)[action]:
                        for u in gamma1.support():
                            if u is DEAD:
                                return False
                            for v in targets:
                                key = pack(u, v)
                                if key not in seen:
                                    seen.add(key)
                                    nxt.append((u, v))
        frontier = nxt
    return True


def certified_zero_limit(ctx: PairContext) -> bool:
    """Exhaustive-closure certificate: the root pair stays at distance
    zero at every refinement depth."""
    return _zero_certificate(ctx, None)


# ---------------------------------------------------------------------------
# Public distance operations.


@dataclass
class DistanceRun:
    value: Fraction
    n: int
    converged: bool
    pairs_computed: int
    used_certificate: bool
    tables: Optional[List[MetricTable]] = None
    witness: Optional[dict] = None

    def to_json(self) -> str:
        payload = {
            "n": self.n,
            "value": f"{self.value.numerator}/{self.value.denominator}",
            "converged": self.converged,
            "pairs_computed": self.pairs_computed,
        }
        if self.witness is not None:
            payload["witness"] = {
                "action": self.witness.get("action"),
                "direction": self.witness.get("direction"),
                "coupling": self.witness.get("coupling"),
            }
        return json.dumps(payload, indent=2, sort_keys=True)


def distance_n(
    m1,
    m2,
    n: int,
    ctx: Optional[PairContext] = None,
    keep_tables: bool = False,
    try_certificate: bool = True,
    scope: str = "full",
) -> DistanceRun:
    """The n-step distance between the roots: n refinements of the
    all-zero table, read at the root pair. Monotone in n. scope="closure"
    iterates only the dependency closure of the root pair (same root
    value, much smaller tables on composed systems)."""
    ctx = ctx or PairContext(m1, m2)
    if n == 0:
        return DistanceRun(ZERO, 0, False, 0, False)
    if try_certificate and not keep_tables and _zero_certificate(ctx, n - 1):
        return DistanceRun(ZERO, n, False, 0, True)
    pairs = pair_closure(ctx) if scope == "closure" else None
    table = MetricTable()
    tables = [table.copy()] if keep_tables else None
    converged = False
    for k in range(n):
        new = metric_step(ctx, table, pairs)
        if keep_tables:
            tables.append(new.copy())
        if new == table:
            converged = True
            table = new
            break
        table = new
    value = table.get(ctx.m1, ctx.m2)
    npairs = len(pairs) if pairs is not None else (
        len(ctx.states) * (len(ctx.states) + 1) // 2
    )
    return DistanceRun(value, n, converged, npairs, False, tables)


def distance_limit(
    m1, m2, n_max: int = 64, ctx: Optional[PairContext] = None
) -> DistanceRun:
    """Iterate until the table stalls exactly (the least fixed point) or
    n_max is hit; when not converged the value is a certified lower bound
    on the limit distance."""
    ctx = ctx or PairContext(m1, m2)
    if certified_zero_limit(ctx):
        # an exhaustive-closure certificate: no refinement depth can ever
        # raise the root entry
        return DistanceRun(ZERO, n_max, True, 0, True)
    table = MetricTable()
    converged = False
    used = 0
    for k in range(n_max):
        new = metric_step(ctx, table)
        used = k + 1
        if new == table:
            converged = True
            break
        table = new
    value = table.get(ctx.m1, ctx.m2)
    pairs = len(ctx.states) * (len(ctx.states) + 1) // 2
    return DistanceRun(value, used, converged, pairs, False)


@dataclass
class BisimVerdict:
    bisimilar_up_to: Optional[int]
    distinct_at: Optional[int] = None
    value: Fraction = ZERO
    witness: Optional[dict] = None

    @property
    def distinct(self) -> bool:
        return self.distinct_at is not None


def check_bisimilar(m1, m2, n_max: int = 64) -> BisimVerdict:
    """Semi-decision: a positive n-distance separates the systems (sound,
    by monotone convergence); an all-zero run up to n_max is only evidence
    up to that depth."""
    ctx = PairContext(m1, m2)
    if _zero_certificate(ctx, n_max):
        return BisimVerdict(bisimilar_up_to=n_max)
    table = MetricTable()
    for k in range(1, n_max + 1):
        new = metric_step(ctx, table)
        root = new.get(m1, m2)
        if root > 0:
            witness = _root_witness(ctx, table, new)
            return BisimVerdict(None, distinct_at=k, value=root, witness=witness)
        if new == table:
            return BisimVerdict(bisimilar_up_to=n_max)
        table = new
    return BisimVerdict(bisimilar_up_to=n_max)


def _root_witness(ctx: PairContext, prev: MetricTable, cur: MetricTable) -> dict:
    a, b = ctx.m1, ctx.m2
    best = (ZERO, None)
    for action in sorted(set(ctx.enabled(a)) | set(ctx.enabled(b)), key=lambda x: x.sort_key()):
        for direction, (attacker, defender) in (("left", (a, b)), ("right", (b, a))):
            for gamma1 in ctx.strong(attacker).get(action, ()):
                v, coupling = best_weak_match(
                    ctx, defender, action, gamma1, prev, want_witness=True
                )
                if v > best[0]:
                    best = (
                        v,
                        {
                            "action": repr(action),
                            "direction": direction,
                            "coupling": [
                                [repr(u), repr(x), f"{w.numerator}/{w.denominator}"]
                                for (u, x), w in (coupling or {}).items()
                            ],
                        },
                    )
    return best[1] or {}
