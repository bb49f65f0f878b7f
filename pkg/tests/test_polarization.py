import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hetero_teleport.errors import InvalidInputError
from hetero_teleport.polarization import (
    CARDINAL, D, H, L, R, V, BlochVector, DensityMatrix, PolState,
    expected_teleported_state, fidelity, principal_eigen, tomography_reconstruct,
)

angles = st.floats(0, 2 * math.pi, allow_nan=False)
unit = st.floats(0, 1, allow_nan=False)


@st.composite
def states(draw):
    theta = draw(st.floats(0, math.pi, allow_nan=False))
    phi = draw(angles)
    return PolState.from_amplitudes(math.cos(theta / 2), math.sin(theta / 2) * complex(math.cos(phi), math.sin(phi)))


@st.composite
def bloch_vectors(draw):
    theta = draw(st.floats(0, math.pi, allow_nan=False))
    phi = draw(angles)
    r = draw(unit)
    return (r * math.sin(theta) * math.cos(phi), r * math.sin(theta) * math.sin(phi), r * math.cos(theta))


def test_fidelity_examples():
    assert fidelity(H, DensityMatrix.pure(H)) == pytest.approx(1.0, abs=1e-12)
    assert fidelity(D, DensityMatrix.mixed()) == pytest.approx(0.5, abs=1e-12)
    rho = tomography_reconstruct(0.550, 0.646, 0.713)
    assert fidelity(L, rho) == pytest.approx(0.713, abs=1e-12)


def test_cardinal_bloch_axes():
    assert DensityMatrix.pure(H).bloch().as_array() == pytest.approx([0, 0, 1])
    assert DensityMatrix.pure(D).bloch().as_array() == pytest.approx([1, 0, 0])
    assert DensityMatrix.pure(R).bloch().as_array() == pytest.approx([0, 1, 0])
    assert DensityMatrix.pure(L).bloch().as_array() == pytest.approx([0, -1, 0])


def test_tomography_examples():
    assert np.allclose(tomography_reconstruct(1.0, 0.5, 0.5).matrix, DensityMatrix.pure(H).matrix)
    assert np.allclose(tomography_reconstruct(0.5, 0.5, 0.5).matrix, np.eye(2) / 2)
    b = tomography_reconstruct(0.550, 0.646, 0.713).bloch()
    assert (b.x, b.y, b.z) == pytest.approx((0.292, -0.426, 0.100), abs=1e-12)
    assert b.norm == pytest.approx(0.526, abs=5e-4)


def test_principal_eigen_examples():
    lam, nu = principal_eigen(DensityMatrix.mixed())
    assert lam == 0.5 and nu == H
    lam, nu = principal_eigen(DensityMatrix.pure(D))
    assert lam == pytest.approx(1.0) and nu.isclose(D)
    lam, _ = principal_eigen(tomography_reconstruct(0.550, 0.646, 0.713))
    assert lam == pytest.approx(0.763, abs=1e-3)


def test_teleported_state_table():
    table = {"H": "V", "V": "H", "D": "D", "A": "A", "R": "L", "L": "R"}
    for src, dst in table.items():
        assert expected_teleported_state(CARDINAL[src]).isclose(CARDINAL[dst])


def test_invalid_inputs():
    with pytest.raises(InvalidInputError):
        PolState(1.0, 0.1)
    with pytest.raises(InvalidInputError):
        DensityMatrix(np.diag([1.5, -0.5]))
    with pytest.raises(InvalidInputError):
        DensityMatrix(np.array([[0.5, 1], [0, 0.5]]))
    with pytest.raises(InvalidInputError):
        tomography_reconstruct(1.2, 0.5, 0.5)
    with pytest.raises(InvalidInputError):
        tomography_reconstruct(0.5, float("nan"), 0.5)
    with pytest.raises(InvalidInputError):
        BlochVector(1, 1, 0)


def test_projection_flag():
    rho = tomography_reconstruct(1.0, 1.0, 0.5)
    assert rho.projected
    assert rho.bloch().norm == pytest.approx(1.0)
    assert not tomography_reconstruct(0.6, 0.6, 0.6).projected


def test_real8_round_trip():
    rho = tomography_reconstruct(0.550, 0.646, 0.713)
    vals = rho.to_real8()
    assert len(vals) == 8
    assert np.allclose(DensityMatrix.from_real8(vals).matrix, rho.matrix)


def test_density_matrix_is_immutable():
    rho = DensityMatrix.mixed()
    with pytest.raises(ValueError):
        rho.matrix[0, 0] = 1


@given(states())
def test_self_and_orthogonal_fidelity(s):
    assert fidelity(s, DensityMatrix.pure(s)) == pytest.approx(1.0, abs=1e-10)
    assert fidelity(s, DensityMatrix.pure(s.orthogonal())) == pytest.approx(0.0, abs=1e-10)


@given(bloch_vectors())
def test_tomography_left_inverse(b):
    rho = DensityMatrix.from_bloch(b)
    f = [fidelity(s, rho) for s in (H, D, L)]
    back = tomography_reconstruct(*f)
    assert np.max(np.abs(back.matrix - rho.matrix)) < 1e-10


@given(states())
def test_teleport_map_is_involution(s):
    assert expected_teleported_state(expected_teleported_state(s)).isclose(s.phase_fixed())


@given(bloch_vectors(), st.floats(0.01, 1.0))
def test_principal_eigen_properties(b, scale):
    rho = DensityMatrix.from_bloch(b)
    lam, nu = principal_eigen(rho)
    evals = np.linalg.eigvalsh(rho.matrix)
    assert lam == pytest.approx(evals.max(), abs=1e-10)
    assert evals.sum() == pytest.approx(1.0, abs=1e-10)
    if np.linalg.norm(b) * scale > 1e-6:
        _, nu2 = principal_eigen(DensityMatrix.from_bloch(tuple(scale * x for x in b)))
        assert nu2.isclose(nu, atol=1e-8)


@given(states())
def test_phase_fixing_is_canonical(s):
    rotated = PolState(s.amp_h * 1j, s.amp_v * 1j)
    assert rotated.phase_fixed().isclose(s.phase_fixed())
    f = s.phase_fixed()
    ref = f.amp_h if abs(f.amp_h) > 1e-12 else f.amp_v
    assert ref.imag == 0 and ref.real >= 0
