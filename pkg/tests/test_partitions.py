from itertools import combinations

import pytest
from hypothesis import given, settings, strategies as st

from gnl.partitions import (
    PairPartition, SetPartition, catalan, connected_span, crossing_depth, crossing_partitions,
    double_factorial, enum_pair_partitions, is_noncrossing, leq, pair_partitions_of,
    pair_refinements, phi, phi_fibers, restrict, splits, verify_phi,
)

P = PairPartition.of
S = SetPartition.of


# -- independent reference implementation of the classification map ---------------------


def ref_noncrossing(blocks):
    where = {i: t for t, b in enumerate(blocks) for i in b}
    pts = sorted(where)
    for a, b, c, e in combinations(pts, 4):
        if where[a] == where[c] and where[b] == where[e] and where[a] != where[b]:
            return False
    return True


def ref_phi(pairs, p):
    mate = {}
    for a, b in pairs:
        mate[a], mate[b] = b, a

    def span(k):
        return {j for j in range(1, p + 1) if j in range(1, k + 1) or mate[j] in range(1, k + 1)}

    def restricted(s):
        return [tuple(x for x in pr if x in s) for pr in pairs if set(pr) & s]

    ks = [k for k in range(1, p + 1) if ref_noncrossing(restricted(span(k)))]
    k = max(ks)
    s = span(k + 1)
    blocks = [frozenset(b) for b in restricted(s)]
    rest = frozenset(range(1, p + 1)) - s
    if rest:
        blocks.append(rest)
    return k, frozenset(blocks)


def as_frozen(sp):
    return frozenset(frozenset(b) for b in sp.blocks)


# -- enumeration and counts ------------------------------------------------------------


@pytest.mark.parametrize("p", [2, 4, 6, 8, 10, 12])
def test_counts(p):
    parts = list(enum_pair_partitions(p))
    assert len(parts) == double_factorial(p - 1)
    assert len(set(parts)) == len(parts)
    assert sum(is_noncrossing(nu) for nu in parts) == catalan(p // 2)


def test_small_enumerations():
    assert list(enum_pair_partitions(2)) == [P((1, 2))]
    assert list(enum_pair_partitions(4)) == [P((1, 2), (3, 4)), P((1, 3), (2, 4)), P((1, 4), (2, 3))]


@pytest.mark.parametrize("p", [0, 3, 16])
def test_enumeration_errors(p):
    with pytest.raises(ValueError):
        list(enum_pair_partitions(p))


def test_pair_partitions_of_subset():
    got = list(pair_partitions_of({2, 5, 7, 9}))
    assert len(got) == 3 and all(nu.ground == {2, 5, 7, 9} for nu in got)
    assert list(pair_partitions_of({1, 2, 3})) == []


def test_validation():
    with pytest.raises(ValueError):
        P((1, 2), (2, 3))
    with pytest.raises(ValueError):
        S((1, 2), ())
    with pytest.raises(ValueError):
        S((1, 2), (2,))


# -- order, crossings, restriction -----------------------------------------------------


def test_noncrossing_examples():
    assert is_noncrossing(P((1, 2), (3, 4)))
    assert not is_noncrossing(P((1, 3), (2, 4)))
    assert is_noncrossing(S((1, 4), (2, 3)))


def test_leq_examples():
    assert leq(S((1,), (2,), (3, 4)), S((1, 2), (3, 4)))
    assert not leq(S((1, 2)), S((1,), (2,)))
    nu = P((1, 3), (2, 4))
    assert leq(nu, nu)
    with pytest.raises(ValueError):
        leq(S((1, 2)), S((1, 2, 3)))


def test_restrict_examples():
    nu = P((1, 3), (2, 4))
    assert restrict(nu, {1, 3}) == P((1, 3))
    assert restrict(nu, nu.ground) == nu
    assert restrict(nu, set()).blocks == ()
    assert restrict(nu, {1, 2}) == S((1,), (2,))
    with pytest.raises(ValueError):
        restrict(nu, {5})


def test_connected_span_examples():
    nu = P((1, 3), (2, 4))
    assert connected_span(nu, 1) == {1, 3}
    assert connected_span(nu, 2) == {1, 2, 3, 4}
    with pytest.raises(ValueError):
        connected_span(nu, 0)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5).flatmap(lambda h: st.permutations(range(1, 2 * h + 1))), st.data())
def test_span_splits_and_ref_noncrossing(perm, data):
    nu = PairPartition(tuple(zip(perm[0::2], perm[1::2])))
    k = data.draw(st.integers(1, nu.p))
    assert splits(connected_span(nu, k), nu)
    assert connected_span(nu, nu.p) == nu.ground
    assert is_noncrossing(nu) == ref_noncrossing(nu.pairs)


# -- the classification map ------------------------------------------------------------


def test_depth_examples():
    assert crossing_depth(P((1, 3), (2, 4))) == 1
    assert crossing_depth(P((1, 4), (2, 6), (3, 5))) == 1
    # S(nu,3) = {1,2,3,5} is still noncrossing, so the largest admissible k is 3
    assert crossing_depth(P((1, 2), (3, 5), (4, 6))) == 3
    with pytest.raises(ValueError):
        crossing_depth(P((1, 2), (3, 4)))


def test_phi_examples():
    assert phi(P((1, 3), (2, 4))) == S((1, 3), (2, 4))
    assert phi(P((1, 4), (2, 6), (3, 5))) == S((1, 4), (2, 6), (3, 5))
    nu = P((1, 2), (3, 8), (4, 6), (5, 7))
    assert crossing_depth(nu) == 4
    assert phi(nu) == S((1, 2), (3, 8), (4, 6), (5, 7))
    # a case with a nonempty complement block
    assert phi(P((1, 3), (2, 4), (5, 6))) == S((1, 3), (2, 4), (5, 6))
    assert phi(P((1, 3), (2, 5), (4, 6))) == S((1, 3), (2, 5), (4, 6))
    assert phi(P((1, 3), (2, 6), (4, 5))) == S((1, 3), (2, 6), (4, 5))
    assert phi(P((1, 5), (2, 4), (3, 7), (6, 8))) == S((1, 5), (2, 4), (3, 7), (6, 8))


def test_phi_with_complement():
    nu = P((1, 3), (2, 4), (5, 7), (6, 8))
    assert phi(nu) == S((1, 3), (2, 4), (5, 6, 7, 8))


@pytest.mark.parametrize("p", [4, 6, 8])
def test_phi_matches_reference(p):
    for nu in crossing_partitions(p):
        k, ref = ref_phi(nu.pairs, p)
        assert crossing_depth(nu) == k
        assert as_frozen(phi(nu)) == ref


def test_phi_noncrossing_error():
    with pytest.raises(ValueError):
        phi(P((1, 4), (2, 3)))


@pytest.mark.parametrize("p,fibers", [(4, 1), (6, 10), (8, 61)])
def test_fiber_counts(p, fibers):
    # fiber counts from the reference implementation
    ref = {ref_phi(nu.pairs, p)[1] for nu in crossing_partitions(p)}
    assert len(ref) == fibers
    assert {as_frozen(s) for s in phi_fibers(p)} == ref


def test_fiber_p4():
    assert phi_fibers(4) == [S((1, 3), (2, 4))]
    with pytest.raises(ValueError):
        phi_fibers(2)
    with pytest.raises(ValueError):
        phi_fibers(14)


def test_fibers_partition_cr8():
    rep = verify_phi(8)
    assert sum(rep.fiber_members.values()) == 105 - 14 == rep.n_crossing


def test_pair_refinements():
    sigma = S((1, 3), (2, 4, 5, 6))
    got = list(pair_refinements(sigma))
    assert len(got) == 3 and all(leq(nu, sigma) for nu in got)
    assert list(pair_refinements(S((1, 2, 3)))) == []


@pytest.mark.parametrize("p", [4, 6, 8, 10])
def test_verify_phi(p):
    rep = verify_phi(p)
    assert rep.passed
    assert rep.n_fibers <= 4**p * p * p
    if p == 6:
        assert rep.summary() == "P2=15 NC2=5 Cr2=10 phi-props: PASS"


def test_fiber_uniqueness_reference_p6():
    fibers = phi_fibers(6)
    for nu in crossing_partitions(6):
        assert sum(leq(nu, s) for s in fibers) == 1


def test_str():
    assert str(S((3, 1), (2, 4))) == "{1,3}{2,4}"
    assert str(P((2, 4), (1, 3))) == "{1,3}{2,4}"
