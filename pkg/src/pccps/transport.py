"""Couplings and the optimal-transport lifting of a state distance.

`kantorovich` solves the transportation problem exactly with a tree-based
network simplex over rationals (Bland's rule, deterministic pivoting).
`matching_vertices` enumerates every basic feasible coupling of a small
instance by spanning-tree enumeration; it exists as an independent oracle
for the solver and stays deliberately brute force.
"""

from __future__ import annotations

from collections import deque
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Sequence, Set, Tuple

from .dist import FiniteDist

ZERO = Fraction(0)


class Matching:
    """A coupling omega of (gamma, gamma'): nonnegative weights on pairs
    whose marginals are exactly the two distributions."""

    __slots__ = ("weights", "left", "right")

    def __init__(self, weights: Dict[tuple, Fraction], left: FiniteDist, right: FiniteDist):
        lm: Dict[object, Fraction] = {}
        rm: Dict[object, Fraction] = {}
        for (a, b), w in weights.items():
            if w < 0:
                raise ValueError("negative coupling weight")
            lm[a] = lm.get(a, ZERO) + w
            rm[b] = rm.get(b, ZERO) + w
        for o, w in left.items():
            if lm.pop(o, ZERO) != w:
                raise ValueError(f"left marginal mismatch at {o!r}")
        if any(w != 0 for w in lm.values()):
            raise ValueError("coupling has left mass outside the support")
        for o, w in right.items():
            if rm.pop(o, ZERO) != w:
                raise ValueError(f"right marginal mismatch at {o!r}")
        if any(w != 0 for w in rm.values()):
            raise ValueError("coupling has right mass outside the support")
        self.weights = {k: w for k, w in weights.items() if w > 0}
        self.left = left
        self.right = right

    def cost(self, cost_fn: Callable[[object, object], Fraction]) -> Fraction:
        return sum((w * cost_fn(a, b) for (a, b), w in self.weights.items()), ZERO)

    def items(self):
        return self.weights.items()

    def __repr__(self):
        body = ", ".join(f"({a!r},{b!r}): {w}" for (a, b), w in sorted(
            self.weights.items(), key=lambda kv: repr(kv[0])
        ))
        return "{" + body + "}"


def _duals(
    m: int, n: int, basis: Set[Tuple[int, int]], cost: List[List[Fraction]]
) -> Tuple[List[Fraction], List[Fraction]]:
    u: List[Optional[Fraction]] = [None] * m
    v: List[Optional[Fraction]] = [None] * n
    adj: Dict[int, List[Tuple[int, int]]] = {}
    for (i, j) in basis:
        adj.setdefault(i, []).append((i, j))
        adj.setdefault(m + j, []).append((i, j))
    u[0] = ZERO
    queue = deque([0])
    while queue:
        node = queue.popleft()
        for (i, j) in adj.get(node, ()):
            if node < m and v[j] is None:
                v[j] = cost[i][j] - u[i]
                queue.append(m + j)
            elif node >= m and u[i] is None:
                u[i] = cost[i][j] - v[j]
                queue.append(i)
    # a degenerate forest can disconnect; anchor stray components at zero
    for i in range(m):
        if u[i] is None:
            u[i] = ZERO
    for j in range(n):
        if v[j] is None:
            v[j] = ZERO
    return u, v  # type: ignore[return-value]


def _tree_cycle(
    basis: Set[Tuple[int, int]], m: int, enter: Tuple[int, int]
) -> List[Tuple[int, int]]:
    """Arcs of the unique cycle created by `enter`, alternating starting
    with enter itself (as node path row->col->row->...)."""
    adj: Dict[int, List[Tuple[Tuple[int, int], int]]] = {}
    for (i, j) in basis:
        adj.setdefault(i, []).append(((i, j), m + j))
        adj.setdefault(m + j, []).append(((i, j), i))
    start, goal = enter[0], m + enter[1]
    parent: Dict[int, Tuple[Tuple[int, int], int]] = {start: (None, -1)}  # type: ignore
    queue = deque([start])
    while queue:
        node = queue.popleft()
        if node == goal:
            break
        for arc, nxt in adj.get(node, ()):
            if nxt not in parent:
                parent[nxt] = (arc, node)
                queue.append(nxt)
    path_arcs: List[Tuple[int, int]] = []
    node = goal
    while node != start:
        arc, prev = parent[node]
        path_arcs.append(arc)
        node = prev
    path_arcs.reverse()
    return [enter] + path_arcs


def _northwest(m: int, n: int, a: List[Fraction], b: List[Fraction]):
    flow: Dict[Tuple[int, int], Fraction] = {}
    basis: Set[Tuple[int, int]] = set()
    supply = a[:]
    demand = b[:]
    i = j = 0
    while i < m and j < n:
        q = min(supply[i], demand[j])
        flow[(i, j)] = q
        basis.add((i, j))
        supply[i] -= q
        demand[j] -= q
        if i == m - 1 and j == n - 1:
            break
        if supply[i] == 0 and i < m - 1:
            i += 1
        else:
            j += 1
    return flow, basis


def kantorovich(
    cost: Callable[[object, object], Fraction],
    gamma1: FiniteDist,
    gamma2: FiniteDist,
) -> Tuple[Fraction, Matching]:
    """Minimum coupling cost between two total distributions, with an
    optimal coupling as witness. Costs must lie in [0, 1]."""
    rows = gamma1.support()
    cols = gamma2.support()
    m, n = len(rows), len(cols)
    a = [gamma1[o] for o in rows]
    b = [gamma2[o] for o in cols]
    c = [[Fraction(cost(rows[i], cols[j])) for j in range(n)] for i in range(m)]
    for line in c:
        for x in line:
            if x < 0 or x > 1:
                raise ValueError(f"cost {x} outside [0,1]")

    flow, basis = _northwest(m, n, a, b)
    while len(basis) < m + n - 1:  # degenerate start: pad the tree
        for i in range(m):
            done = False
            for j in range(n):
                if (i, j) not in basis:
                    trial = basis | {(i, j)}
                    if _is_forest(trial, m, n):
                        basis.add((i, j))
                        flow.setdefault((i, j), ZERO)
                        done = True
                        break
            if done:
                break

    while True:
        u, v = _duals(m, n, basis, c)
        enter = None
        for i in range(m):
            for j in range(n):
                if (i, j) not in basis and c[i][j] - u[i] - v[j] < 0:
                    enter = (i, j)
                    break
            if enter:
                break
        if enter is None:
            break
        cycle = _tree_cycle(basis, m, enter)
        minus = cycle[1::2]
        theta = min(flow.get(arc, ZERO) for arc in minus)
        leave = min(
            (arc for arc in minus if flow.get(arc, ZERO) == theta),
        )
        for k, arc in enumerate(cycle):
            if k % 2 == 0:
                flow[arc] = flow.get(arc, ZERO) + theta
            else:
                flow[arc] = flow.get(arc, ZERO) - theta
        basis.remove(leave)
        basis.add(enter)
        flow.pop(leave, None)

    weights = {
        (rows[i], cols[j]): w for (i, j), w in flow.items() if w > 0
    }
    matching = Matching(weights, gamma1, gamma2)
    value = sum((w * c[i][j] for (i, j), w in flow.items()), ZERO)
    return value, matching


def _is_forest(arcs: Set[Tuple[int, int]], m: int, n: int) -> bool:
    parent = list(range(m + n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for (i, j) in arcs:
        ri, rj = find(i), find(m + j)
        if ri == rj:
            return False
        parent[ri] = rj
    return True


# ---------------------------------------------------------------------------
# Brute-force vertex oracle.


def matching_vertices(gamma1: FiniteDist, gamma2: FiniteDist) -> List[Matching]:
    """All vertices of the transportation polytope, by enumerating the
    spanning trees of the complete bipartite support graph and keeping
    trees whose implied flows are nonnegative. Instances are capped at 20
    cells; this is a test oracle, not a solver."""
    rows = gamma1.support()
    cols = gamma2.support()
    m, n = len(rows), len(cols)
    if m * n > 20:
        raise ValueError(f"oracle limited to 20 cells, got {m * n}")
    a = [gamma1[o] for o in rows]
    b = [gamma2[o] for o in cols]
    arcs = [(i, j) for i in range(m) for j in range(n)]
    need = m + n - 1
    seen: Dict[tuple, Matching] = {}

    def solve_tree(tree):
        """Leaf elimination: each leaf's arc must carry its whole balance;
        a mismatch at the end means the tree cannot satisfy the marginals."""
        incident: Dict[int, List[Tuple[int, int]]] = {}
        for (i, j) in tree:
            incident.setdefault(i, []).append((i, j))
            incident.setdefault(m + j, []).append((i, j))
        bal: Dict[int, Fraction] = {}
        for node in incident:
            bal[node] = a[node] if node < m else b[node - m]
        deg = {node: len(v) for node, v in incident.items()}
        used: Set[Tuple[int, int]] = set()
        flows: Dict[Tuple[int, int], Fraction] = {}
        leaves = deque(node for node, d in deg.items() if d == 1)
        while leaves:
            node = leaves.popleft()
            arc = next((x for x in incident[node] if x not in used), None)
            if arc is None:
                continue
            used.add(arc)
            i, j = arc
            other = m + j if node == i else i
            f = bal[node]
            flows[arc] = f
            bal[node] = ZERO
            bal[other] -= f
            deg[node] -= 1
            deg[other] -= 1
            if deg[other] == 1:
                leaves.append(other)
        if any(bal[node] != 0 for node in bal):
            return None
        return flows

    def backtrack(start: int, chosen: List[Tuple[int, int]], parent: List[int]):
        if len(chosen) == need:
            flows = solve_tree(chosen)
            if flows is None or any(f < 0 for f in flows.values()):
                return
            key = tuple(sorted(((i, j), f) for (i, j), f in flows.items() if f > 0))
            if key not in seen:
                weights = {
                    (rows[i], cols[j]): f for (i, j), f in flows.items() if f > 0
                }
                seen[key] = Matching(weights, gamma1, gamma2)
            return
        if start >= len(arcs):
            return
        remaining = len(arcs) - start
        if remaining < need - len(chosen):
            return
        # take arcs[start] if it keeps a forest
        i, j = arcs[start]
        pcopy = parent[:]

        def find(x, par):
            while par[x] != x:
                par[x] = par[par[x]]
                x = par[x]
            return x

        ri, rj = find(i, pcopy), find(m + j, pcopy)
        if ri != rj:
            pcopy[ri] = rj
            backtrack(start + 1, chosen + [(i, j)], pcopy)
        backtrack(start + 1, chosen, parent)

    backtrack(0, [], list(range(m + n)))
    return list(seen.values())
