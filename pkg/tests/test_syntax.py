from decimal import Decimal
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from pccps import syntax
from pccps.values import Atom, Guard, VarRef, dec
from pccps.syntax import (
    NIL,
    canonicalize,
    check_finite_control,
    check_time_guarded,
    choice,
    fix,
    iff,
    just,
    par,
    read,
    render,
    restrict,
    substitute,
    subst_proc,
    tick,
    timeout_in,
    timeout_out,
    unfold_fix,
    var,
    write,
)

A = Atom("syn_a")
B = Atom("syn_b")


def loop_tick():
    # fix X. tick.X
    return fix(tick(just(var(0))))


def test_nil_is_unit_of_parallel():
    p = tick(just(NIL))
    assert par([NIL, p]) is p
    assert par([p, NIL]) is p
    assert par([]) is NIL


def test_parallel_is_commutative_after_canonicalization():
    p = tick(just(NIL))
    q = timeout_out("c", dec("5"), just(NIL), just(NIL))
    assert par([p, q]) is par([q, p])


def test_parallel_flattens_and_keeps_duplicates():
    p = tick(just(NIL))
    q = timeout_out("c", dec("5"), just(NIL), just(NIL))
    nested = par([p, par([q, p])])
    assert isinstance(nested, syntax.Par)
    assert len(nested.parts) == 3
    assert nested is par([p, p, q])


def test_alpha_equivalent_fixes_are_identical():
    # fix X. tick.X vs fix Y. tick.Y: the nameless form makes this literal
    assert loop_tick() is loop_tick()


def test_canonicalize_is_idempotent_and_identity_on_canonical():
    p = par([loop_tick(), timeout_out("c", A, just(NIL), just(loop_tick()))])
    assert canonicalize(p) is p
    assert canonicalize(canonicalize(p)) is p


def test_if_with_closed_guard_resolves():
    # (if x>10 then P else Q){12/x} -> P
    p = tick(just(NIL))
    q = timeout_out("c", dec("1"), just(NIL), just(NIL))
    cond = iff(Guard.cmp(">", VarRef(0), dec("10")), p, q)
    body = read("s", just(cond))
    stepped = substitute(cond, 0, dec("12"))
    assert stepped is p
    assert substitute(cond, 0, dec("9")) is q
    assert isinstance(body, syntax.Read)


def test_substitute_no_free_occurrence_is_identity():
    # a different binder index is untouched
    p = timeout_in("c", just(var_free_guard()), just(NIL))
    assert substitute(p, 5, dec("5")) is p


def var_free_guard():
    return iff(Guard.cmp(">", VarRef(0), dec("0")), NIL, tick(just(NIL)))


def test_substitute_respects_binder_shadowing():
    # read s(x). if x > 0 ... : substituting for an OUTER binder leaves the
    # inner-bound occurrences alone
    inner = iff(Guard.cmp(">", VarRef(0), dec("0")), NIL, tick(just(NIL)))
    p = read("s", just(inner))
    # index 0 at the level of p refers to an enclosing binder, not the read's
    q = substitute(p, 0, dec("5"))
    assert q is p  # no index-1 refs inside, so nothing changes


def test_unfold_tick_loop():
    p = loop_tick()
    u = unfold_fix(p)
    assert u is tick(just(p))


def test_unfold_output_loop():
    # fix X. [c!v.X timeout X]  ->  [c!v.(fix ...) timeout (fix ...)]
    p = fix(timeout_out("c", dec("5"), just(var(0)), just(var(0))))
    u = unfold_fix(p)
    assert u is timeout_out("c", dec("5"), just(p), just(p))


def test_unfold_reuses_interned_subterms():
    p = loop_tick()
    u1 = unfold_fix(p)
    u2 = unfold_fix(p)
    assert u1 is u2


def test_choice_merges_equal_branches():
    c = choice([(Fraction(1, 2), NIL), (Fraction(1, 2), NIL)])
    assert c == ((Fraction(1), NIL),)


def test_choice_weight_sum_enforced():
    with pytest.raises(ValueError):
        choice([(Fraction(1, 2), NIL)])
    with pytest.raises(ValueError):
        choice([])


def test_time_guarded_recursion_check():
    check_time_guarded(loop_tick())  # guarded under tick
    check_time_guarded(fix(timeout_out("c", A, just(NIL), just(var(0)))))
    with pytest.raises(ValueError):
        check_time_guarded(fix(var(0)))  # fix X. X
    with pytest.raises(ValueError):
        # fix X. [c!v.X timeout nil]: X in the untimed continuation
        check_time_guarded(fix(timeout_out("c", A, just(var(0)), just(NIL))))
    with pytest.raises(ValueError):
        check_time_guarded(fix(par([tick(just(var(0))), var(0)])))


def test_finite_control_check():
    check_finite_control(par([loop_tick(), loop_tick()]))
    with pytest.raises(ValueError):
        check_finite_control(fix(tick(just(par([var(0), loop_tick()])))))


def test_substitution_commutes_with_canonicalization():
    inner = iff(Guard.cmp(">", VarRef(0), dec("1")), tick(just(NIL)), NIL)
    p = par([read("s", just(inner)), loop_tick()])
    q = substitute(p, 0, dec("0"))
    assert canonicalize(q) is q


# --- randomized structural properties ---------------------------------------

_values = st.one_of(
    st.sampled_from([dec("0"), dec("1"), dec("2.5"), A, B]),
)


def _proc_strategy():
    base = st.sampled_from([NIL, loop_tick()])

    def extend(children):
        singles = st.tuples(children, _values).map(
            lambda t: timeout_out("c", t[1], just(t[0]), just(NIL))
        )
        ticks = children.map(lambda p: tick(just(p)))
        pairs = st.tuples(children, children).map(lambda t: par([t[0], t[1]]))
        probs = st.tuples(children, children).map(
            lambda t: tick(
                choice([(Fraction(1, 2), t[0]), (Fraction(1, 2), t[1])])
            )
        )
        reads = children.map(lambda p: read("s", just(p)))
        rest = children.map(lambda p: restrict(p, "c"))
        return st.one_of(singles, ticks, pairs, probs, reads, rest)

    return st.recursive(base, extend, max_leaves=12)


@settings(max_examples=60, deadline=None)
@given(_proc_strategy())
def test_canonicalize_idempotent_on_generated_terms(p):
    assert canonicalize(p) is p


@settings(max_examples=60, deadline=None)
@given(_proc_strategy(), _proc_strategy())
def test_par_congruence_on_generated_terms(p, q):
    assert par([p, q]) is par([q, p])
    assert par([par([p, q]), NIL]) is par([p, q])
