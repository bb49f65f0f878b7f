"""Teleportation of laser polarization onto the exciton photon.

Alice (D1 = H at time 0, D2 = V at time tau1) heralds a |psi+> projection of
laser and XX photons; Bob detects the X photon at tau2. Two detection orders
contribute:

* laser on D1, XX on D2: X follows XX at tau1, weight e1 = exp(-2 gx (tau2 - tau1)),
  carries the laser's H amplitude onto Bob's V;
* XX on D1, laser on D2: X follows XX at 0, weight e2 = exp(-2 gx tau2),
  carries the laser's V amplitude onto Bob's H.

They interfere with visibility exp(-|tau1|/tau_c) and relative phase
s (tau2 - tau1)/hbar + dE tau1/hbar. Bob's conditional operator below
(``correlated_operator``) is normalised so that for input D and analyzer D
its expectation is exactly the three-fold probability P_HVD, i.e.
e1 + e2 + 2 sqrt(e1 e2) e^{-|tau1|/tau_c} cos(phase).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import model
from .errors import InvalidInputError, OutOfDomainError
from .interference import smooth_axis
from .model import (
    FWHM_PER_SIGMA,
    DetectorModel,
    EmpiricalFits,
    ExperimentParams,
    LaserParams,
    QdParams,
)
from .polarization import (
    CARDINAL,
    DensityMatrix,
    L,
    PolState,
    R,
    expected_teleported_state,
    principal_eigen,
    tomography_reconstruct,
)

INPUT_NAMES = ("H", "V", "D", "A", "R", "L")
_EQUATORIAL_ANGLE = {"D": 0.0, "R": math.pi / 2, "A": math.pi, "L": 3 * math.pi / 2}

# sample spacing of the local quadrature used for single convolved points,
# as a fraction of the kernel FWHM
_POINT_STEP_FRACTION = 1.0 / 40.0


@dataclass(frozen=True)
class InputSpec:
    """One of the six cardinal laser input states."""

    name: str

    def __post_init__(self):
        if self.name not in INPUT_NAMES:
            raise InvalidInputError(f"input must be one of {INPUT_NAMES}, got {self.name!r}")

    @property
    def pol(self) -> PolState:
        return CARDINAL[self.name]

    @property
    def family(self) -> str:
        return "polar" if self.name in ("H", "V") else "equatorial"

    @property
    def equatorial_angle(self) -> float | None:
        return _EQUATORIAL_ANGLE.get(self.name)

    @property
    def target(self) -> PolState:
        return expected_teleported_state(self.pol)


SIX_INPUTS = tuple(InputSpec(n) for n in INPUT_NAMES)


def _as_state(x) -> PolState:
    if isinstance(x, PolState):
        return x
    if isinstance(x, InputSpec):
        return x.pol
    if isinstance(x, str):
        return CARDINAL[x.upper()]
    return PolState.equatorial(float(x))


def _check_domain(tau1, tau2, extrapolate: bool):
    tau1 = np.asarray(tau1, dtype=float)
    tau2 = np.asarray(tau2, dtype=float)
    if not extrapolate:
        bad = (tau2 <= 0) | (tau2 <= tau1)
        if np.any(bad):
            raise OutOfDomainError("model holds only for Bob detections after both of Alice's "
                                   "(tau2 > 0 and tau2 > tau1); pass extrapolate=True to override")
    return tau1, tau2


def correlated_operator(inp, tau1, tau2, qd: QdParams, laser: LaserParams, extrapolate: bool = False):
    """Bob's unnormalised conditional polarization operator for cascade-correlated triples.

    Returns (rho_hh, rho_vv, rho_hv) arrays broadcast over tau1, tau2; the
    operator is 4 x (|beta|^2 e2 |H><H| + |alpha|^2 e1 |V><V| + coherence).
    Outside the cascade-ordered domain the decay arguments are taken by
    absolute value.
    """
    state = _as_state(inp)
    tau1, tau2 = _check_domain(tau1, tau2, extrapolate)
    gx = qd.gamma_x_ps
    e1 = np.exp(-2.0 * gx * np.abs(tau2 - tau1))
    e2 = np.exp(-2.0 * gx * np.abs(tau2))
    if laser.interference:
        vis = np.exp(-np.abs(tau1) / qd.tau_c - gx * np.abs(tau2 - tau1) - gx * np.abs(tau2))
    else:
        vis = np.zeros(np.broadcast(tau1, tau2).shape)
    chi = model.phase(qd.fss_s, tau2 - tau1) + model.phase(laser.detuning_de, tau1)
    a, b = state.amp_h, state.amp_v
    rho_hh = 4.0 * abs(b) ** 2 * e2
    rho_vv = 4.0 * abs(a) ** 2 * e1
    # <H|rho|V> = conj(<V|rho|H>) with <V|rho|H> = 4 a conj(b) vis e^{i chi}
    rho_hv = 4.0 * np.conj(a * np.conj(b)) * vis * np.exp(-1j * chi)
    return np.broadcast_arrays(rho_hh, rho_vv, rho_hv)


def _expect(bob: PolState, rho_hh, rho_vv, rho_hv):
    bh, bv = bob.amp_h, bob.amp_v
    return abs(bh) ** 2 * rho_hh + abs(bv) ** 2 * rho_vv + 2.0 * np.real(np.conj(bh) * rho_hv * bv)


def p_triple(inp, bob, tau1, tau2, qd: QdParams, laser: LaserParams, extrapolate: bool = False):
    """Three-fold probability (Alice H and V, Bob analyzer ``bob``), up to a common constant.

    ``bob`` may be a PolState, a cardinal name or an equatorial analyzer
    angle in radians (0 = D, pi/2 = R, pi = A, 3pi/2 = L).
    """
    ops = correlated_operator(inp, tau1, tau2, qd, laser, extrapolate)
    out = np.maximum(_expect(_as_state(bob), *ops), 0.0)
    return out if out.ndim else float(out)


def _rate_scale(qd: QdParams) -> float:
    # correlated X arrival density per herald (ps^-1) is (gamma_x/2) x (P_target + P_orth)
    return 0.5 * qd.gamma_x_ps


def f_pol(inp, tau1, tau2, qd: QdParams, laser: LaserParams, bob=None, extrapolate: bool = False):
    """Probability that Bob's photon passes ``bob`` (default: the expected output),
    mixing cascade-correlated photons with uncorrelated background at rate Gamma."""
    state = _as_state(inp)
    bob = expected_teleported_state(state) if bob is None else _as_state(bob)
    ops = correlated_operator(state, tau1, tau2, qd, laser, extrapolate)
    k = _rate_scale(qd)
    g = qd.bg_rate_ps
    pt = np.maximum(_expect(bob, *ops), 0.0)
    total = ops[0] + ops[1]
    num = k * pt + g / 4.0
    den = k * total + g / 2.0
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.5)
    out = np.clip(out, 0.0, 1.0)
    return out if out.ndim else float(out)


def _wanted_weight(tau1, tau2, qd: QdParams, laser: LaserParams, fits: EmpiricalFits):
    return qd.eta * laser.alpha2 * (model.g2_cross(tau2 - tau1, qd, fits) + model.g2_cross(tau2, qd, fits))


def _nuisance(tau1, tau2, qd: QdParams, laser: LaserParams, fits: EmpiricalFits):
    g3_qd = (fits.qd_triple_scale * model.g2_hbt(tau1, fits)
             * model.g2_cross(tau2, qd, fits) * model.g2_cross(tau2 - tau1, qd, fits))
    return qd.eta ** 2 * g3_qd / 2.0 + fits.laser_triple_scale * laser.alpha2 ** 2 / 4.0


def g3(inp, bob, tau1, tau2, qd: QdParams, laser: LaserParams, fits: EmpiricalFits,
       extrapolate: bool = False):
    """Third-order correlation for Alice H,V and Bob analyzer ``bob``.

    Sum of the wanted laser+QD triples (weighted by the polarization
    probability), QD-only triples and laser-only triples. The last two do
    not depend on the analyzer.
    """
    tau1, tau2 = _check_domain(tau1, tau2, extrapolate)
    f = f_pol(inp, tau1, tau2, qd, laser, bob=bob, extrapolate=True)
    out = _wanted_weight(tau1, tau2, qd, laser, fits) * f + _nuisance(tau1, tau2, qd, laser, fits)
    return out if np.ndim(out) else float(out)


def _g3_pair(state: PolState, bob: PolState, tau1, tau2, p: ExperimentParams):
    """g3 for ``bob`` and its orthogonal outcome, sharing all analyzer-blind terms."""
    qd, laser, fits = p.qd, p.laser, p.fits
    f = f_pol(state, tau1, tau2, qd, laser, bob=bob, extrapolate=True)
    w = _wanted_weight(tau1, tau2, qd, laser, fits)
    n = _nuisance(tau1, tau2, qd, laser, fits)
    return w * f + n, w * (1.0 - f) + n


def _ratio(num, den):
    den = np.asarray(den, dtype=float)
    if np.any(den <= 0):
        raise OutOfDomainError("no three-fold coincidences: fidelity undefined (eta = alpha2 = 0 "
                                "or all triple terms zeroed)")
    return np.clip(num / den, 0.0, 1.0)


def _point_grids(tau1: float, tau2: float, det: DetectorModel):
    """Local grids and separable weights for a Gaussian-blurred value at one point."""
    axes = []
    for centre, fwhm in ((tau1, det.fwhm_alice), (tau2, det.fwhm_bob)):
        step = fwhm * _POINT_STEP_FRACTION
        sigma = fwhm / FWHM_PER_SIGMA
        half = int(math.floor(det.kernel_truncation * sigma / step))
        offs = step * np.arange(-half, half + 1)
        w = np.exp(-0.5 * (offs / sigma) ** 2)
        axes.append((centre + offs, w / w.sum()))
    (t1, w1), (t2, w2) = axes
    return t1[:, None], t2[None, :], np.outer(w1, w2)


def g3_outcomes(inp, bob, tau1: float, tau2: float, p: ExperimentParams, extrapolate: bool = False):
    """(g3 for ``bob``, g3 for the orthogonal outcome) at one point.

    With detectors present the surfaces are blurred before the point is read
    out; the blur reaches into the extrapolated region.
    """
    state = _as_state(inp)
    bob = expected_teleported_state(state) if bob is None else _as_state(bob)
    if p.det is None:
        t1, t2 = _check_domain(tau1, tau2, extrapolate)
        a, b = _g3_pair(state, bob, t1, t2, p)
        return float(a), float(b)
    t1, t2, w = _point_grids(float(tau1), float(tau2), p.det)
    a, b = _g3_pair(state, bob, t1, t2, p)
    return float(np.sum(w * a)), float(np.sum(w * b))


def fidelity_from_g3(inp, tau1: float, tau2: float, p: ExperimentParams, bob=None,
                     extrapolate: bool = False) -> float:
    """g3_target / (g3_target + g3_orthogonal), the measured teleportation fidelity.

    ``bob`` defaults to the expected teleported state. Jitter from ``p.det``
    is applied to the counts, not to the ratio.
    """
    a, b = g3_outcomes(inp, bob, tau1, tau2, p, extrapolate)
    return float(_ratio(a, a + b))


@dataclass(frozen=True)
class CorrelationSurface:
    tau1: np.ndarray
    tau2: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (len(self.tau1), len(self.tau2)):
            raise InvalidInputError("surface shape does not match its grids")
        if not np.all(np.isfinite(self.values)):
            raise InvalidInputError("surface has non-finite values")


@dataclass(frozen=True)
class FidelityMap:
    tau1: np.ndarray
    tau2: np.ndarray
    layers: dict[str, np.ndarray]
    average: np.ndarray = field(repr=False)

    def at(self, name: str, tau1: float, tau2: float) -> float:
        i = int(np.argmin(np.abs(self.tau1 - tau1)))
        j = int(np.argmin(np.abs(self.tau2 - tau2)))
        layer = self.average if name == "average" else self.layers[name]
        return float(layer[i, j])

    def summary(self) -> dict:
        per = {name: self.at(name, 0.0, 0.0) for name in self.layers}
        return {"fidelity_at_origin": per, "average_at_origin": self.at("average", 0.0, 0.0)}


def grid(start: float, step: float, count: int) -> np.ndarray:
    if step <= 0 or count < 1:
        raise InvalidInputError("grid needs step > 0 and count >= 1")
    return start + step * np.arange(count)


def _grid_step(g: np.ndarray) -> float:
    if len(g) < 2:
        return 1.0
    d = np.diff(g)
    if np.max(np.abs(d - d[0])) > 1e-9 * max(1.0, abs(d[0])):
        raise InvalidInputError("grid must be uniform")
    return float(d[0])


def g3_surface(inp, bob, tau1_grid, tau2_grid, p: ExperimentParams) -> CorrelationSurface:
    """Unblurred g3 on a grid (domain extended to the whole plane)."""
    t1 = np.asarray(tau1_grid, dtype=float)
    t2 = np.asarray(tau2_grid, dtype=float)
    vals = g3(inp, bob, t1[:, None], t2[None, :], p.qd, p.laser, p.fits, extrapolate=True)
    return CorrelationSurface(t1, t2, np.asarray(vals))


def blur_surface(s: CorrelationSurface, det: DetectorModel | None) -> CorrelationSurface:
    """Separable instrument response: D1-D2 along tau1, mean Bob FWHM along tau2."""
    if det is None:
        return s
    v = smooth_axis(s.values, _grid_step(s.tau1), det.fwhm_alice, axis=0, truncation=det.kernel_truncation)
    v = smooth_axis(v, _grid_step(s.tau2), det.fwhm_bob, axis=1, truncation=det.kernel_truncation)
    return CorrelationSurface(s.tau1, s.tau2, v)


def fidelity_map(p: ExperimentParams, tau1_grid, tau2_grid, inputs=SIX_INPUTS) -> FidelityMap:
    """Fidelity of every input over the (tau1, tau2) plane plus the pointwise average."""
    t1 = np.asarray(tau1_grid, dtype=float)
    t2 = np.asarray(tau2_grid, dtype=float)
    if p.det is not None:
        # validates sampling before any work
        _grid_step(t1), _grid_step(t2)
    layers = {}
    for spec in inputs:
        spec = spec if isinstance(spec, InputSpec) else InputSpec(spec)
        a, b = _g3_pair(spec.pol, spec.target, t1[:, None], t2[None, :], p)
        sa = blur_surface(CorrelationSurface(t1, t2, np.asarray(a)), p.det)
        sb = blur_surface(CorrelationSurface(t1, t2, np.asarray(b)), p.det)
        layers[spec.name] = _ratio(sa.values, sa.values + sb.values)
    average = np.mean(np.stack(list(layers.values())), axis=0)
    return FidelityMap(t1, t2, layers, average)


def ratio_detuning_scan(ratios, detunings, p: ExperimentParams, inp: str = "D",
                        workers: int = 1) -> list[tuple[float, float, float]]:
    """Fidelity of a superposition input at (0, 0) versus eta/alpha2 and detuning."""
    ratios = [float(r) for r in ratios]
    detunings = [float(d) for d in detunings]
    if not ratios or not detunings:
        raise InvalidInputError("ratio and detuning lists must be nonempty")
    jobs = [(r, d) for r in ratios for d in detunings]

    def one(job):
        r, d = job
        q = p.with_ratio(r).with_detuning(d)
        return fidelity_from_g3(inp, 0.0, 0.0, q, extrapolate=True)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            fs = list(pool.map(one, jobs))
    else:
        fs = [one(j) for j in jobs]
    return [(r, d, f) for (r, d), f in zip(jobs, fs)]


@dataclass(frozen=True)
class Trajectory:
    tau2: np.ndarray
    lambda1: np.ndarray
    nu1: list[PolState]
    overlap_l: np.ndarray
    overlap_r: np.ndarray
    fidelities: np.ndarray  # columns f_h, f_d, f_l


def output_density(inp, tau1: float, tau2: float, p: ExperimentParams, extrapolate: bool = True) -> DensityMatrix:
    """Bob's normalised output state from three analyzer settings and linear tomography."""
    state = _as_state(inp)
    fs = [fidelity_from_g3(state, tau1, tau2, p, bob=b, extrapolate=extrapolate) for b in ("H", "D", "L")]
    return tomography_reconstruct(*fs)


def output_trajectory(p: ExperimentParams, tau2_grid, inp="R", tau1: float = 0.0) -> Trajectory:
    """Evolution of the teleported state along Bob's time axis at fixed tau1."""
    tau2 = np.asarray(tau2_grid, dtype=float)
    lam, nus, ol, orr, fids = [], [], [], [], []
    for t in tau2:
        rho = output_density(inp, tau1, float(t), p)
        b = rho.bloch()
        fids.append(((1 + b.z) / 2, (1 + b.x) / 2, (1 - b.y) / 2))
        l1, nu = principal_eigen(rho)
        lam.append(l1)
        nus.append(nu)
        ol.append(nu.overlap(L))
        orr.append(nu.overlap(R))
    return Trajectory(tau2, np.array(lam), nus, np.array(ol), np.array(orr), np.array(fids))
