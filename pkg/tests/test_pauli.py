import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bbgky_qem.pauli import (
    Kind,
    PauliString,
    all_strings,
    anticommutator,
    bracket,
    commutator,
    difference_count,
    f_factor,
    length_bounds,
    multiply,
)

P = PauliString.parse
I2 = np.eye(2, dtype=complex)
SIGMA = {
    1: np.array([[0, 1], [1, 0]], dtype=complex),
    2: np.array([[0, -1j], [1j, 0]]),
    3: np.array([[1, 0], [0, -1]], dtype=complex),
}


def dense(p: PauliString, n: int) -> np.ndarray:
    ops = [I2] * n
    for s, a in zip(p.sites, p.axes):
        ops[s - 1] = SIGMA[a]
    out = np.ones((1, 1), dtype=complex)
    for op in ops:
        out = np.kron(out, op)
    return out


def dense_scaled(sp, n: int) -> np.ndarray:
    return sp.coefficient * dense(sp.string, n)


def strings_on(n: int) -> list[PauliString]:
    return [PauliString.identity()] + list(all_strings(n))


def test_parse_and_print_are_canonical():
    p = P("Z5 X1 y2")
    assert p.sites == (1, 2, 5) and p.axes == (1, 2, 3)
    assert str(p) == "X1 Y2 Z5"
    assert P(str(p)) == p
    with pytest.raises(ValueError):
        P("X1 X1")
    with pytest.raises(ValueError):
        P("Q3")
    with pytest.raises(ValueError):
        P("")


def test_multiply_examples():
    r = multiply(P("X1"), P("Y1"))
    assert r.coefficient == 1j and r.string == P("Z1")
    r = multiply(P("X1"), P("X1"))
    assert r.coefficient == 1 and r.string.is_identity
    r = multiply(P("X1"), P("Z2"))
    assert r.coefficient == 1 and r.string == P("X1 Z2")


def test_difference_count_examples():
    assert difference_count(P("X1"), P("Y1")) == 1
    assert difference_count(P("X1 X2"), P("X1 X2")) == 0
    assert difference_count(P("X1 Y2 Z3"), P("Y1 Y2 X3")) == 2


@pytest.mark.parametrize(
    "d, kind, expected",
    [(1, Kind.COMMUTATOR, 2), (2, Kind.COMMUTATOR, 0), (3, Kind.COMMUTATOR, -2),
     (2, Kind.ANTICOMMUTATOR, -2), (0, Kind.ANTICOMMUTATOR, 2), (0, Kind.COMMUTATOR, 0),
     (5, Kind.COMMUTATOR, 2), (4, Kind.ANTICOMMUTATOR, 2)],
)
def test_f_factor(d, kind, expected):
    assert f_factor(d, kind) == expected


def test_bracket_examples():
    r = commutator(P("X1"), P("Y1"))
    assert r.coefficient == 2j and r.string == P("Z1")
    assert commutator(P("X1 X2"), P("Y1 Y2")).is_zero
    assert commutator(P("X1"), P("Z2")).is_zero
    assert anticommutator(P("X1"), P("Y1")).is_zero


@pytest.mark.parametrize(
    "a, b, kind, expected",
    [(2, 8, Kind.COMMUTATOR, (7, 9)), (1, 1, Kind.COMMUTATOR, (1, 1)), (3, 3, Kind.ANTICOMMUTATOR, (0, 6))],
)
def test_length_bounds(a, b, kind, expected):
    assert length_bounds(a, b, kind) == expected


@pytest.mark.parametrize("n", [1, 2, 3])
def test_dense_oracle_all_pairs(n):
    strings = strings_on(n)
    mats = {p: dense(p, n) for p in strings}
    for p, q in itertools.product(strings, repeat=2):
        pq, qp = mats[p] @ mats[q], mats[q] @ mats[p]
        assert np.array_equal(dense_scaled(multiply(p, q), n), pq)
        assert np.array_equal(dense_scaled(commutator(p, q), n), pq - qp)
        assert np.array_equal(dense_scaled(anticommutator(p, q), n), pq + qp)


def test_bracket_nonzero_iff_parity():
    for p, q in itertools.product(list(all_strings(3)), repeat=2):
        d = difference_count(p, q)
        assert (not commutator(p, q).is_zero) == (d % 2 == 1)
        assert (not anticommutator(p, q).is_zero) == (d % 2 == 0)


sites = st.integers(1, 9)
axis = st.integers(1, 3)
strings = st.dictionaries(sites, axis, min_size=1, max_size=9).map(PauliString.from_map)


@settings(max_examples=400, deadline=None)
@given(strings, strings)
def test_bracket_symmetry_and_bounds(p, q):
    c_pq, c_qp = commutator(p, q), commutator(q, p)
    assert c_pq == -c_qp or (c_pq.is_zero and c_qp.is_zero)
    assert anticommutator(p, q) == anticommutator(q, p)
    for kind in Kind:
        r = bracket(p, q, kind)
        if not r.is_zero:
            lo, hi = length_bounds(len(p), len(q), kind)
            assert lo <= len(r.string) <= hi


@settings(max_examples=200, deadline=None)
@given(strings)
def test_square_is_identity(p):
    r = multiply(p, p)
    assert r.coefficient == 1 and r.string.is_identity
