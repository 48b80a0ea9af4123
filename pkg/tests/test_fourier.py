"""Walsh transform, merged-staircase tests and symmetry search."""

import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from msplab.fourier import (
    FourierFunction, SetStructure, apply_perm, detect_symmetries, dumps, evaluate, from_string, fwht,
    indices_from_mask, is_msp, loads, mask_from_indices, msp_bruteforce, popcount, random_msp_function,
    reachable_closure, walsh_transform,
)
from msplab.numerics import UnsupportedSizeError, hypercube


@st.composite
def functions(draw, max_p=6):
    P = draw(st.integers(1, max_p))
    masks = draw(st.lists(st.integers(0, (1 << P) - 1), unique=True, max_size=8))
    vals = draw(st.lists(st.floats(-3, 3, allow_nan=False).filter(lambda v: abs(v) > 1e-6),
                         min_size=len(masks), max_size=len(masks)))
    return FourierFunction(P, dict(zip(masks, vals)))


@st.composite
def structures(draw, max_p=5, max_m=7):
    P = draw(st.integers(1, max_p))
    sets = draw(st.lists(st.integers(1, (1 << P) - 1), unique=True, min_size=1, max_size=max_m))
    return SetStructure(P, tuple(sets))


def test_mask_conventions():
    assert mask_from_indices([1, 3]) == 0b101
    assert indices_from_mask(0b110) == (2, 3)
    assert popcount(0b1011) == 3


def test_fwht_is_self_inverse_up_to_scale():
    v = np.arange(8.0)
    np.testing.assert_allclose(fwht(fwht(v)) / 8, v)


def test_table_matches_pointwise_evaluation():
    h = from_string("z1 - 2 z2z3 + 0.5")
    Z = hypercube(3)
    np.testing.assert_allclose(h.table(), evaluate(h, Z))
    np.testing.assert_allclose(evaluate(h, Z), Z[:, 0] - 2 * Z[:, 1] * Z[:, 2] + 0.5)


@given(functions())
def test_walsh_roundtrip(h):
    back = walsh_transform(evaluate(h, hypercube(h.P)))
    for m in set(h.coeffs) | set(back.coeffs):
        assert abs(h.coefficient(m) - back.coefficient(m)) <= 1e-12


@given(functions(max_p=10))
def test_parseval(h):
    vals = h.table()
    assert abs(h.norm2() - float(np.mean(vals ** 2))) <= 1e-10


def test_zero_coefficients_are_dropped():
    h = FourierFunction(2, {1: 0.0, 3: 1.0})
    assert h.support == (3,)


def test_invalid_mask_rejected():
    with pytest.raises(ValueError):
        FourierFunction(2, {4: 1.0})


@pytest.mark.parametrize("spec,expected", [
    ("z1 + z1z2 + z1z2z3", True),
    ("z1 + z1z2 + z2z3 + z3z4", True),
    ("z1 + z2 + z3 + z4 + z1z2z3z4", True),
    ("z1 + z1z2 + z2z3 + z1z2z3", True),
    ("z1z2z3", False),
    ("z1 + z1z2z3 + z1z2z3z4", False),
    ("z1 + z1z2 + z3z4", False),
])
def test_reference_classification(spec, expected):
    assert is_msp(from_string(spec).structure()).is_msp is expected


def test_non_msp_details():
    h = from_string("z1z2z3")
    res = is_msp(h.structure(), h)
    assert res.leap == 3
    assert indices_from_mask(res.blocked_coords) == (1, 2, 3)
    assert res.stuck_risk_lower_bound == 1.0
    assert res.ordering is None


def test_blocked_pair():
    res = is_msp(from_string("z1 + z1z2 + z3z4").structure())
    assert indices_from_mask(res.blocked_coords) == (3, 4)
    assert res.leap == 2


def test_describe_lists_ordering():
    res = is_msp(from_string("z1 + z1z2 + z1z2z3").structure())
    assert res.describe() == "MSP: yes, leap 1, ordering {1}<{1,2}<{1,2,3}"


def test_empty_function_is_msp_with_leap_zero():
    res = is_msp(SetStructure(3, ()))
    assert res.is_msp and res.leap == 0


@given(structures())
def test_greedy_agrees_with_bruteforce(S):
    assert is_msp(S).is_msp == msp_bruteforce(S)


@given(structures())
def test_msp_has_nothing_blocked(S):
    res = is_msp(S)
    if res.is_msp:
        assert res.blocked_coords == 0
        assert sorted(res.ordering) == sorted(S.sets)
        union = 0
        for s in res.ordering:
            assert popcount(s & ~union) <= 1
            union |= s


@given(structures())
def test_reachable_closure_is_closed(S):
    reach, blocked = reachable_closure(S)
    union = 0
    for s in reach:
        union |= s
    for s in S.sets:
        if s not in reach:
            assert popcount(s & ~union) >= 2
    assert blocked & union == 0


def test_symmetries_of_appendix_targets():
    h4 = from_string("z1 + z2 + z3 + z1z2z3")
    assert len(detect_symmetries(h4)) == 5
    h3 = from_string("z1 + z1z2 + z3 + z3z4")
    assert (2, 3, 0, 1) in detect_symmetries(h3)
    assert detect_symmetries(from_string("z1 + 0.99z2 + 1.01z3 + z1z2z3")) == []


@given(functions(max_p=4))
def test_detected_symmetries_fix_the_function(h):
    Z = hypercube(h.P)
    for perm in detect_symmetries(h):
        # h(z o perm) = h(z) pointwise
        Zp = np.empty_like(Z)
        Zp[:, list(perm)] = Z
        np.testing.assert_allclose(evaluate(h, Zp), evaluate(h, Z), atol=1e-12)
        assert h.permuted(perm).coeffs == pytest.approx(h.coeffs)


def test_symmetry_search_size_cap():
    with pytest.raises(UnsupportedSizeError):
        detect_symmetries(FourierFunction(9, {1: 1.0}))


def test_apply_perm():
    assert apply_perm(0b011, (2, 0, 1)) == 0b101


def test_random_msp_function_is_seeded():
    S = SetStructure.from_indices(3, [[1], [1, 2], [2, 3]])
    a = random_msp_function(S, (0.5, 2.0), 11)
    b = random_msp_function(S, (0.5, 2.0), 11)
    assert a.coeffs == b.coeffs
    assert len(a.coeffs) == 3
    assert all(0.5 <= abs(v) <= 2.0 for v in a.coeffs.values())


def test_text_format_roundtrip():
    h = from_string("z1 + 0.25 z1z2 - 3 z2z3")
    text = dumps(h)
    assert text.splitlines()[0] == "P=3"
    assert "S=1,2 alpha=0.25" in text
    assert loads(text).coeffs == h.coeffs


def test_parse_errors():
    with pytest.raises(ValueError):
        from_string("z1 + zz")
    with pytest.raises(ValueError):
        loads("S=1 alpha=1")


def test_all_small_structures_exhaustively():
    for sets in itertools.combinations(range(1, 8), 3):
        S = SetStructure(3, sets)
        assert is_msp(S).is_msp == msp_bruteforce(S)
