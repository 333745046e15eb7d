from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from pccps import dist
from pccps.dist import FiniteDist, SubDist, combine, dirac, product, uniform


def F(a, b=1):
    return Fraction(a, b)


def test_dirac_basics():
    d = dirac("o")
    assert d.mass == 1
    assert d.support() == ("o",)
    assert d["o"] == 1


def test_weights_must_sum_to_one():
    with pytest.raises(ValueError):
        FiniteDist({"a": F(1, 2)})
    FiniteDist({"a": F(1, 2), "b": F(1, 2)})


def test_zero_weights_are_dropped():
    d = SubDist({"a": F(1, 2), "b": F(0)})
    assert d.support() == ("a",)


def test_combine_merges_equal_elements():
    d = combine([(F(1, 2), dirac("A")), (F(1, 2), dirac("A"))])
    assert d == dirac("A")


def test_combine_plain():
    d = combine([(F(1, 2), dirac("A")), (F(1, 2), dirac("B"))])
    assert d["A"] == F(1, 2) and d["B"] == F(1, 2)


def test_combine_scaling_submass():
    g = uniform(["x", "y"])
    d = combine([(F(1, 3), g)])
    assert d.mass == F(1, 3)


def test_combine_mass_overflow_rejected():
    with pytest.raises(ValueError):
        combine([(F(2, 3), dirac("A")), (F(2, 3), dirac("B"))])


def test_product_mass_is_bilinear():
    g1 = SubDist({"a": F(1, 3)})
    g2 = SubDist({"b": F(1, 2), "c": F(1, 4)})
    p = product(g1, g2)
    assert p.mass == g1.mass * g2.mass


def test_pad_dead_with_custom_filler():
    g = SubDist({"M": F(1, 2)})
    full = dist.pad_dead(g, dead="DEAD")
    assert full["DEAD"] == F(1, 2)
    assert full.mass == 1
    assert dist.pad_dead(dirac("M"), dead="DEAD") == dirac("M")
    assert dist.pad_dead(SubDist({}), dead="DEAD") == dirac("DEAD")


@given(
    st.lists(
        st.tuples(
            st.integers(min_value=0, max_value=8),
            st.sampled_from("abcd"),
        ),
        min_size=1,
        max_size=6,
    )
)
def test_combine_is_commutative_and_merges(parts):
    # interpret each (k, x) as weight k/24 on dirac(x); total <= 48/24 may
    # overflow, so rescale to keep mass <= 1
    total = sum(k for k, _ in parts)
    if total == 0:
        return
    terms = [(Fraction(k, 2 * total), dirac(x)) for k, x in parts]
    d1 = combine(terms)
    d2 = combine(list(reversed(terms)))
    assert d1 == d2
    assert d1.mass == Fraction(1, 2)


@given(st.integers(min_value=1, max_value=5), st.integers(min_value=1, max_value=5))
def test_uniform_product_weights_multiply(n, m):
    g1 = uniform(range(n))
    g2 = uniform(range(100, 100 + m))
    p = product(g1, g2)
    assert len(p) == n * m
    assert all(w == Fraction(1, n * m) for _, w in p.items())
    assert p.mass == 1
