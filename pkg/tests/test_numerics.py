import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from irsgame.numerics import as_cvector, diag_from_phases, hermitian, matvec, norm_sq


def test_hermitian_scalar_conjugate():
    out = hermitian([[1 + 2j]])
    assert out.shape == (1, 1)
    assert out[0, 0] == 1 - 2j


def test_hermitian_real_symmetric_fixed_point():
    m = np.array([[1.0, 2.0], [2.0, 5.0]])
    assert np.array_equal(hermitian(m), m)


def test_hermitian_hand_case():
    m = np.array([[0, 1j], [2, 0]])
    expected = np.array([[0, 2], [-1j, 0]])
    assert np.array_equal(hermitian(m), expected)


def test_hermitian_involution_exact():
    rng = np.random.default_rng(7)
    for _ in range(50):
        m = rng.standard_normal((3, 5)) + 1j * rng.standard_normal((3, 5))
        assert np.array_equal(hermitian(hermitian(m)), m)


def test_matvec_identity_and_zero():
    v = np.array([1 + 1j, 2.0, -3j])
    assert np.array_equal(matvec(np.eye(3), v), v)
    assert np.array_equal(matvec(np.zeros((3, 3)), v), np.zeros(3))


def test_matvec_hand_case():
    out = matvec([[1j, 0], [0, 1j]], [1, 2])
    assert np.array_equal(out, np.array([1j, 2j]))


def test_matvec_dimension_mismatch():
    with pytest.raises(ValueError):
        matvec(np.eye(2), [1, 2, 3])


def test_matvec_distributes_over_addition():
    rng = np.random.default_rng(11)
    for _ in range(30):
        m = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        u = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        v = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        lhs = matvec(m, u + v)
        rhs = matvec(m, u) + matvec(m, v)
        assert np.allclose(lhs, rhs, rtol=1e-10, atol=0.0)


def test_diag_from_phases_hand_cases():
    assert np.allclose(diag_from_phases([0.0]), [[1.0]])
    assert np.allclose(diag_from_phases([np.pi]), [[-1.0]])
    out = diag_from_phases([np.pi / 2, np.pi])
    assert np.allclose(out, np.diag([1j, -1.0]))
    assert out[0, 1] == 0.0 and out[1, 0] == 0.0


def test_diag_from_phases_rejects_out_of_range():
    with pytest.raises(ValueError):
        diag_from_phases([-0.1])
    with pytest.raises(ValueError):
        diag_from_phases([2 * np.pi + 0.1])


@given(st.lists(st.floats(min_value=0.0, max_value=2 * np.pi), min_size=1, max_size=32))
@settings(max_examples=100, deadline=None)
def test_diag_from_phases_unit_modulus(phases):
    out = diag_from_phases(phases)
    mods = np.abs(np.diag(out))
    assert np.all(np.abs(mods - 1.0) < 1e-12)
    assert np.count_nonzero(out - np.diag(np.diag(out))) == 0


def test_norm_sq_hand_cases():
    assert norm_sq(np.zeros(4) + 0j) == 0.0
    assert norm_sq([3 + 4j]) == 25.0
    assert np.isclose(norm_sq([1.0, 1j, 1 + 1j]), 4.0, rtol=0.0, atol=1e-15)


def test_norm_sq_scaling_property():
    rng = np.random.default_rng(3)
    for _ in range(40):
        v = rng.standard_normal(5) + 1j * rng.standard_normal(5)
        alpha = rng.standard_normal() + 1j * rng.standard_normal()
        lhs = norm_sq(alpha * v)
        rhs = abs(alpha) ** 2 * norm_sq(v)
        assert np.isclose(lhs, rhs, rtol=1e-10, atol=0.0)


def test_norm_sq_matches_inner_product():
    rng = np.random.default_rng(5)
    v = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    inner = np.vdot(v, v)
    assert abs(inner.imag) < 1e-12
    assert np.isclose(norm_sq(v), inner.real, rtol=1e-14)


def test_validation_rejects_bad_inputs():
    with pytest.raises(ValueError):
        as_cvector([])
    with pytest.raises(ValueError):
        as_cvector([np.nan + 0j])
    with pytest.raises(ValueError):
        hermitian([1.0, 2.0])
