"""Single-photon polarization algebra.

States are written in the (H, V) basis. Bloch axes: x points to D, y to R,
z to H, so that

    rho = (I + x*sx + y*sy + z*sz) / 2

with the usual Pauli matrices.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError

SQRT_HALF = 1.0 / math.sqrt(2.0)

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY = np.eye(2, dtype=complex)

NORM_TOL = 1e-12
HERMITIAN_TOL = 1e-10
CLAMP_TOL = 1e-9
DEGENERATE_TOL = 1e-12


def _fix_phase(h: complex, v: complex) -> tuple[complex, complex]:
    """Remove the global phase: amp_h real >= 0, or amp_v real >= 0 if amp_h vanishes."""
    ref = h if abs(h) > NORM_TOL else v
    if abs(ref) == 0:
        return h, v
    rot = abs(ref) / ref
    h, v = h * rot, v * rot
    if abs(h) > NORM_TOL:
        h = complex(h.real, 0.0)
    else:
        h = 0j
        v = complex(v.real, 0.0)
    return h, v


@dataclass(frozen=True)
class PolState:
    """Pure polarization state amp_h|H> + amp_v|V>."""

    amp_h: complex
    amp_v: complex

    def __post_init__(self):
        norm = abs(self.amp_h) ** 2 + abs(self.amp_v) ** 2
        if not abs(norm - 1.0) <= NORM_TOL:
            raise InvalidInputError(f"polarization state not normalized (|a|^2+|b|^2 = {norm!r})")
        object.__setattr__(self, "amp_h", complex(self.amp_h))
        object.__setattr__(self, "amp_v", complex(self.amp_v))

    @classmethod
    def from_amplitudes(cls, h: complex, v: complex, fix_phase: bool = True) -> "PolState":
        """Normalize arbitrary amplitudes (and by default fix the global phase)."""
        n = math.sqrt(abs(h) ** 2 + abs(v) ** 2)
        if n == 0:
            raise InvalidInputError("zero vector is not a polarization state")
        h, v = complex(h) / n, complex(v) / n
        if fix_phase:
            h, v = _fix_phase(h, v)
        # renormalize away rounding from the phase rotation
        n = math.sqrt(abs(h) ** 2 + abs(v) ** 2)
        return cls(h / n, v / n)

    @classmethod
    def equatorial(cls, angle: float) -> "PolState":
        """(H + e^{i angle} V)/sqrt2; angle 0, pi/2, pi, 3pi/2 give D, R, A, L."""
        return cls.from_amplitudes(SQRT_HALF, SQRT_HALF * cmath.exp(1j * angle))

    @classmethod
    def from_bloch(cls, x: float, y: float, z: float) -> "PolState":
        r = math.sqrt(x * x + y * y + z * z)
        if r < DEGENERATE_TOL:
            raise InvalidInputError("Bloch direction undefined for zero vector")
        theta = math.acos(max(-1.0, min(1.0, z / r)))
        phi = math.atan2(y, x)
        return cls.from_amplitudes(math.cos(theta / 2), cmath.exp(1j * phi) * math.sin(theta / 2))

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.amp_h, self.amp_v], dtype=complex)

    def orthogonal(self) -> "PolState":
        return PolState.from_amplitudes(-self.amp_v.conjugate(), self.amp_h.conjugate())

    def phase_fixed(self) -> "PolState":
        return PolState.from_amplitudes(self.amp_h, self.amp_v)

    def overlap(self, other: "PolState") -> float:
        """|<self|other>|^2."""
        return abs(np.vdot(self.vector, other.vector)) ** 2

    def bloch(self) -> "BlochVector":
        return DensityMatrix.pure(self).bloch()

    def isclose(self, other: "PolState", atol: float = 1e-10) -> bool:
        """Equality up to global phase."""
        return abs(1.0 - self.overlap(other)) <= atol


H = PolState(1.0, 0.0)
V = PolState(0.0, 1.0)
D = PolState(SQRT_HALF, SQRT_HALF)
A = PolState(SQRT_HALF, -SQRT_HALF)
R = PolState(SQRT_HALF, 1j * SQRT_HALF)
L = PolState(SQRT_HALF, -1j * SQRT_HALF)

CARDINAL = {"H": H, "V": V, "D": D, "A": A, "R": R, "L": L}


@dataclass(frozen=True)
class BlochVector:
    x: float
    y: float
    z: float

    def __post_init__(self):
        if self.norm > 1.0 + HERMITIAN_TOL:
            raise InvalidInputError(f"Bloch vector outside the unit ball (|r| = {self.norm:.12g})")

    @property
    def norm(self) -> float:
        return math.sqrt(self.x ** 2 + self.y ** 2 + self.z ** 2)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


@dataclass(frozen=True)
class DensityMatrix:
    """2x2 polarization density operator.

    ``projected`` is set when the matrix came from a tomography triple that
    pointed outside the Bloch ball and was pulled back onto its surface.
    """

    matrix: np.ndarray = field(repr=False)
    projected: bool = False

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.shape != (2, 2):
            raise InvalidInputError(f"density matrix must be 2x2, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise InvalidInputError("density matrix has non-finite entries")
        if np.max(np.abs(m - m.conj().T)) > HERMITIAN_TOL:
            raise InvalidInputError("density matrix is not Hermitian")
        if abs(np.trace(m) - 1.0) > HERMITIAN_TOL:
            raise InvalidInputError(f"density matrix trace {np.trace(m).real:.12g} != 1")
        if np.linalg.eigvalsh(m).min() < -HERMITIAN_TOL:
            raise InvalidInputError("density matrix is not positive semidefinite")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def pure(cls, state: PolState) -> "DensityMatrix":
        v = state.vector
        return cls(np.outer(v, v.conj()))

    @classmethod
    def mixed(cls) -> "DensityMatrix":
        return cls(IDENTITY / 2)

    @classmethod
    def from_bloch(cls, b: BlochVector | tuple[float, float, float], projected: bool = False) -> "DensityMatrix":
        x, y, z = (b.x, b.y, b.z) if isinstance(b, BlochVector) else b
        return cls((IDENTITY + x * PAULI_X + y * PAULI_Y + z * PAULI_Z) / 2, projected=projected)

    def bloch(self) -> BlochVector:
        m = self.matrix
        x = 2 * m[0, 1].real
        y = -2 * m[0, 1].imag
        z = (m[0, 0] - m[1, 1]).real
        r = math.sqrt(x * x + y * y + z * z)
        if 1.0 < r <= 1.0 + HERMITIAN_TOL:
            x, y, z = x / r, y / r, z / r
        return BlochVector(x, y, z)

    def to_real8(self) -> list[float]:
        """Row-major entries with real and imaginary parts interleaved."""
        out = []
        for z in self.matrix.ravel():
            out.extend((float(z.real), float(z.imag)))
        return out

    @classmethod
    def from_real8(cls, values) -> "DensityMatrix":
        vals = [float(v) for v in values]
        if len(vals) != 8:
            raise InvalidInputError("expected 8 real numbers")
        m = np.array([complex(vals[i], vals[i + 1]) for i in range(0, 8, 2)]).reshape(2, 2)
        return cls(m)


def fidelity(state: PolState, rho: DensityMatrix) -> float:
    """<state|rho|state>, the probability of passing an analyzer set to ``state``."""
    if not isinstance(state, PolState):
        raise InvalidInputError("state must be a PolState")
    if not isinstance(rho, DensityMatrix):
        rho = DensityMatrix(rho)
    v = state.vector
    value = np.vdot(v, rho.matrix @ v)
    f = float(value.real)
    if f < 0.0:
        if f < -CLAMP_TOL:
            raise InvalidInputError(f"fidelity {f} below 0")
        f = 0.0
    elif f > 1.0:
        if f > 1.0 + CLAMP_TOL:
            raise InvalidInputError(f"fidelity {f} above 1")
        f = 1.0
    return f


def tomography_reconstruct(f_h: float, f_d: float, f_l: float) -> DensityMatrix:
    """Linear-inversion tomography from the H, D and L projection probabilities.

    Noisy triples whose Bloch vector lies outside the unit ball are scaled
    back to the surface; the returned matrix then has ``projected=True``.
    """
    for name, f in (("f_h", f_h), ("f_d", f_d), ("f_l", f_l)):
        if not (0.0 <= f <= 1.0) or math.isnan(f):
            raise InvalidInputError(f"{name}={f} is not a probability")
    x = 2 * f_d - 1
    y = -(2 * f_l - 1)
    z = 2 * f_h - 1
    r = math.sqrt(x * x + y * y + z * z)
    if r > 1.0:
        return DensityMatrix.from_bloch((x / r, y / r, z / r), projected=True)
    return DensityMatrix.from_bloch((x, y, z))


def principal_eigen(rho: DensityMatrix) -> tuple[float, PolState]:
    """Largest eigenvalue and its phase-fixed eigenvector.

    A maximally mixed input has no preferred direction; H is returned.
    """
    b = rho.bloch()
    r = b.norm
    lam = min(1.0, (1.0 + r) / 2)
    if r < DEGENERATE_TOL:
        return lam, H
    return lam, PolState.from_bloch(b.x, b.y, b.z)


def expected_teleported_state(state: PolState) -> PolState:
    """Output of the |psi+> Bell-measurement teleporter: a|H>+b|V> -> a|V>+b|H>."""
    return PolState.from_amplitudes(state.amp_v, state.amp_h)
