"""Small dense exact linear-programming core.

Solves min c.x subject to A x = b, x >= 0 over exact rationals with a
two-phase tableau simplex under Bland's rule (deterministic, cycle-free).
Problem sizes here are tiny (tens of rows, a few hundred columns), so a
dense tableau is the simplest thing that is obviously correct.
"""

from __future__ import annotations

from fractions import Fraction
from typing import List, Optional, Sequence, Tuple


class Infeasible(Exception):
    pass


class Unbounded(Exception):
    pass


def _pivot(tab: List[List[Fraction]], basis: List[int], row: int, col: int):
    piv = tab[row][col]
    inv = 1 / piv
    tab[row] = [x * inv for x in tab[row]]
    prow = tab[row]
    for r, line in enumerate(tab):
        if r == row:
            continue
        factor = line[col]
        if factor:
            tab[r] = [a - factor * p for a, p in zip(line, prow)]
    basis[row] = col


def _simplex(tab: List[List[Fraction]], basis: List[int], ncols: int, eps=0):
    """Optimize the tableau in place; the objective row is last. Bland's
    rule: entering = smallest-index negative reduced cost, leaving =
    smallest-index among the minimum-ratio rows. `eps` loosens the zero
    tests for the float mode; exact arithmetic keeps it at 0."""
    m = len(tab) - 1
    while True:
        obj = tab[-1]
        col = -1
        for j in range(ncols):
            if obj[j] < -eps:
                col = j
                break
        if col < 0:
            return
        row, best = -1, None
        for r in range(m):
            a = tab[r][col]
            if a > eps:
                ratio = tab[r][-1] / a
                if best is None or ratio < best or (
                    ratio == best and basis[r] < basis[row]
                ):
                    best, row = ratio, r
        if row < 0:
            raise Unbounded("objective is unbounded below")
        _pivot(tab, basis, row, col)


def solve_eq(
    costs: Sequence[Fraction],
    rows: Sequence[Sequence[Tuple[int, Fraction]]],
    rhs: Sequence[Fraction],
    eps=0,
) -> Tuple[Fraction, List[Fraction]]:
    """min costs.x  s.t. for each row i: sum_j rows[i][j]*x = rhs[i], x >= 0.
    Rows are sparse lists of (column, coefficient). Returns (value, x).
    With eps > 0 the arithmetic may be float and comparisons are softened."""
    n = len(costs)
    m = len(rows)
    exact = eps == 0
    conv = Fraction if exact else float
    zero = conv(0)

    dense = [[zero] * n for _ in range(m)]
    b = [conv(v) for v in rhs]
    for i, row in enumerate(rows):
        for j, a in row:
            dense[i][j] += conv(a)
        if b[i] < 0:
            dense[i] = [-x for x in dense[i]]
            b[i] = -b[i]

    # phase 1: artificials
    width = n + m + 1
    tab: List[List[Fraction]] = []
    basis: List[int] = []
    for i in range(m):
        line = dense[i] + [zero] * m + [b[i]]
        line[n + i] = conv(1)
        tab.append(line)
        basis.append(n + i)
    phase1 = [zero] * width
    for i in range(m):
        for j in range(width):
            phase1[j] -= tab[i][j]
        phase1[n + i] += conv(1)
    tab.append(phase1)
    _simplex(tab, basis, n + m, eps)
    if abs(-tab[-1][-1]) > (eps if not exact else 0):
        raise Infeasible("equality system has no nonnegative solution")

    # drive any lingering artificials out of the basis
    for r in range(m):
        if basis[r] >= n:
            col = next((j for j in range(n) if abs(tab[r][j]) > eps), None)
            if col is not None:
                _pivot(tab, basis, r, col)

    # phase 2: real objective, artificial columns frozen out of entering
    obj = [conv(c) for c in costs] + [zero] * m + [zero]
    for r in range(m):
        if basis[r] < n and obj[basis[r]]:
            factor = obj[basis[r]]
            obj = [o - factor * a for o, a in zip(obj, tab[r])]
    tab[-1] = obj
    _simplex(tab, basis, n, eps)

    x = [zero] * n
    for r in range(m):
        if basis[r] < n:
            x[basis[r]] = tab[r][-1]
    return -tab[-1][-1], x
