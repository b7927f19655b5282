import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bisparc import dictionary as D
from bisparc.errors import DegenerateError, DimensionError, LengthError
from bisparc.sparc import (
    SupportVector,
    decode_sections,
    encode_sections,
    hard_decision,
    modulate,
    section_bits,
    support_matrix,
)

from conftest import orthonormal_dictionary


def test_encode_small_example():
    v = encode_sections([0, 0, 0, 1], 2)
    assert v.sections.tolist() == [0, 1]
    assert v.dense().tolist() == [1, 0, 0, 0, 0, 1, 0, 0]


def test_all_zero_bits():
    assert encode_sections(np.zeros(12), 3).sections.tolist() == [0] * 4


def test_fourteen_sections_of_256(rng):
    v = encode_sections(rng.bits(14 * 8), 8)
    c = v.dense()
    assert c.size == 3584 and c.sum() == 14


@pytest.mark.parametrize("Q", [2, 4, 16])
def test_decode_extremes(Q):
    m = Q.bit_length() - 1
    assert not decode_sections(SupportVector([0] * 5, Q)).any()
    assert decode_sections(SupportVector([Q - 1] * 5, Q)).all()
    assert decode_sections(SupportVector([0], Q)).size == m


def test_random_round_trip(rng):
    for i in range(1000):
        bits = rng.bits(24)
        assert np.array_equal(decode_sections(encode_sections(bits, 4)), bits)


@pytest.mark.parametrize("L, m", [(1, 1), (4, 1), (3, 2), (4, 3), (3, 4), (2, 6), (1, 12)])
def test_exhaustive_bijection(L, m):
    seen = set()
    for bits in itertools.product((0, 1), repeat=L * m):
        v = encode_sections(bits, m)
        assert tuple(decode_sections(v)) == bits
        seen.add(v)
    assert len(seen) == 2 ** (L * m)


def test_section_bits_big_endian():
    assert section_bits(3)[6].tolist() == [1, 1, 0]


@pytest.mark.parametrize("bits, m", [([0, 1, 1], 2), ([], 1), ([0, 1], 0)])
def test_encode_length_errors(bits, m):
    with pytest.raises(LengthError):
        encode_sections(bits, m)


def test_out_of_range_section():
    with pytest.raises(DimensionError):
        SupportVector([0, 4], 4)


@settings(max_examples=50)
@given(st.lists(st.integers(0, 7), min_size=1, max_size=10))
def test_dense_sections_involution(sections):
    v = SupportVector(sections, 8)
    assert SupportVector.from_dense(v.dense(), 8) == v
    assert np.array_equal(SupportVector.from_dense(v.dense(), 8).dense(), v.dense())


def test_from_dense_rejects_two_hot():
    with pytest.raises(DimensionError):
        SupportVector.from_dense([1, 1, 0, 0], 4)


def test_modulate_single_orthonormal_column(rng):
    A = orthonormal_dictionary(8, 4, rng)
    for q in range(4):
        s = modulate(A, SupportVector([q], 4), 3.0)
        assert np.allclose(s, np.sqrt(3.0) * A.matrix[:, q])
        assert np.vdot(s, s).real == pytest.approx(3.0, rel=1e-12)


def test_modulate_zero_power(rng):
    A = D.build("gaussian", 8, 8, rng)
    assert not modulate(A, SupportVector([1, 2], 4), 0.0).any()


@pytest.mark.parametrize("kind", ["gaussian", "subsampled_dft"])
def test_power_invariant(kind, rng):
    A = D.build(kind, 32, 64, rng.child(0))
    for _ in range(1000):
        v = SupportVector(rng.integers(0, 16, 4), 16)
        s, alpha = modulate(A, v, 2.0, return_alpha=True)
        assert np.vdot(s, s).real / 2.0 == pytest.approx(1.0, abs=1e-10)
        base = A.matrix @ v.dense()
        assert alpha == pytest.approx(2.0 / np.vdot(base, base).real, rel=1e-12)


def test_modulate_degenerate():
    M = np.zeros((2, 4))
    M[0, 0], M[0, 2] = 1.0, -1.0
    M[1, 1], M[1, 3] = 1.0, 1.0
    A = D.Dictionary.from_matrix(M)
    with pytest.raises(DegenerateError):
        modulate(A, SupportVector([0, 0], 2), 1.0)


def test_modulate_size_mismatch(rng):
    A = D.build("gaussian", 8, 8, rng)
    with pytest.raises(DimensionError):
        modulate(A, SupportVector([0, 1, 2], 2), 1.0)


@pytest.mark.parametrize(
    "row, expected",
    [([0.1, 0.7, 0.1, 0.1], 1), ([0.25] * 4, 0), ([0, 0, 1.0, 0], 2), ([0, 0, 0, 1.0], 3)],
)
def test_hard_decision(row, expected):
    assert hard_decision([row]).sections.tolist() == [expected]


def test_support_matrix_shape():
    C = support_matrix([SupportVector([0, 1], 2), SupportVector([1, 1], 2)])
    assert C.T.tolist() == [[1, 0, 0, 1], [0, 1, 0, 1]]
    assert support_matrix([]).shape == (0, 0)
