import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hetero_teleport import model, teleport
from hetero_teleport.errors import InvalidInputError, OutOfDomainError
from hetero_teleport.model import EmpiricalFits, ExperimentParams, LaserParams, QdParams
from hetero_teleport.polarization import L, PolState

EPS = 1e-9
HALF_FSS = math.pi * model.HBAR / 2.0  # 1033.9 ps at s = 2 ueV
PRESET = ExperimentParams.paper()


def _bare(**qd):
    """Gamma = 0, fits zeroed, no jitter; remaining QD fields from keywords."""
    p = ExperimentParams.ideal()
    return dataclasses.replace(p, qd=dataclasses.replace(p.qd, **qd))


def test_p_triple_examples():
    qd, las = QdParams(fss_s=3.7), LaserParams(detuning_de=11.0)
    assert teleport.p_triple("D", 0.0, 0.0, EPS, qd, las) == pytest.approx(4.0, abs=1e-6)
    assert teleport.p_triple("D", math.pi, 0.0, EPS, qd, las) == pytest.approx(0.0, abs=1e-6)
    qd2 = QdParams(fss_s=2.0)
    p = teleport.p_triple("D", 0.0, 0.0, HALF_FSS, qd2, LaserParams())
    assert p == pytest.approx(0.0, abs=1e-12)


def test_p_triple_matches_three_fold_formula():
    qd, las = QdParams(fss_s=2.0), LaserParams(detuning_de=7.0)
    rng = np.random.default_rng(3)
    t1 = rng.uniform(-300, 300, 50)
    t2 = t1 + rng.uniform(1, 2000, 50)
    t2 = np.where(t2 > 0, t2, -t2 + 1)
    gx = qd.gamma_x_ps
    e1, e2 = np.exp(-2 * gx * (t2 - t1)), np.exp(-2 * gx * t2)
    ref = e1 + e2 + 2 * np.exp(-np.abs(t1) / qd.tau_c - gx * (t2 - t1) - gx * t2) * np.cos(
        model.phase(qd.fss_s, t2 - t1) + model.phase(las.detuning_de, t1))
    got = teleport.p_triple("D", "D", t1, t2, qd, las)
    assert np.allclose(got, np.maximum(ref, 0), atol=1e-12)


def test_circular_input_goes_to_opposite_circular():
    qd, las = QdParams(fss_s=0.0), LaserParams()
    assert teleport.p_triple("R", "L", 0.0, EPS, qd, las) == pytest.approx(4.0, abs=1e-6)
    assert teleport.p_triple("R", "R", 0.0, EPS, qd, las) == pytest.approx(0.0, abs=1e-6)


def test_domain_is_enforced():
    qd, las = QdParams(), LaserParams()
    for t1, t2 in ((0.0, 0.0), (100.0, 50.0), (0.0, -5.0)):
        with pytest.raises(OutOfDomainError):
            teleport.p_triple("D", "D", t1, t2, qd, las)
        teleport.p_triple("D", "D", t1, t2, qd, las, extrapolate=True)


def test_f_pol_examples():
    qd, las = QdParams(bg_rate_gamma=0.0), LaserParams()
    assert teleport.f_pol("D", 0.0, EPS, qd, las) == pytest.approx(1.0, abs=1e-9)
    assert teleport.f_pol("D", 0.0, HALF_FSS, qd, las) == pytest.approx(0.0, abs=1e-12)
    for name in ("D", "A", "R", "L"):
        assert teleport.f_pol(name, 0.0, 2e5, QdParams(), las) == pytest.approx(0.5, abs=1e-9)


def test_background_weighting():
    # at tau = 0+ and input D, Bob sees 2 gx correlated photons per herald against Gamma background
    qd, las = QdParams(bg_rate_gamma=0.45), LaserParams()
    k = qd.gamma_x_ps / 2
    g = qd.bg_rate_ps
    expect = (k * 4 + g / 4) / (k * 4 + g / 2)
    assert teleport.f_pol("D", 0.0, EPS, qd, las) == pytest.approx(expect, abs=1e-6)


def test_g3_limits():
    fits = EmpiricalFits()
    t1, t2 = np.array([0.0, -200.0, 300.0]), np.array([10.0, 400.0, 900.0])
    qd0, las = QdParams(eta=0.0), LaserParams(alpha2=1.7)
    got = teleport.g3("D", "D", t1, t2, qd0, las, fits)
    assert np.allclose(got, 1.7 ** 2 / 4)
    qd, las0 = QdParams(eta=2.0), LaserParams(alpha2=0.0)
    got = teleport.g3("D", "D", t1, t2, qd, las0, fits)
    g3_qd = fits.qd_triple_scale * model.g2_hbt(t1, fits) * model.g2_cross(t2, qd, fits) * model.g2_cross(t2 - t1, qd, fits)
    assert np.allclose(got, 4.0 * g3_qd / 2)


def test_g3_ratio_is_fidelity():
    p = dataclasses.replace(PRESET, det=None)
    a = teleport.g3("D", "D", 0.0, EPS, p.qd, p.laser, p.fits)
    b = teleport.g3("D", "A", 0.0, EPS, p.qd, p.laser, p.fits)
    assert a / (a + b) == pytest.approx(teleport.fidelity_from_g3("D", 0.0, EPS, p), abs=1e-12)


def test_fidelity_from_g3_examples():
    ideal = ExperimentParams.ideal()
    assert teleport.fidelity_from_g3("D", 0.0, EPS, ideal) == pytest.approx(1.0, abs=1e-6)
    nolight = ExperimentParams.paper().with_ratio(0.0)
    for name in teleport.INPUT_NAMES:
        assert teleport.fidelity_from_g3(name, 0.0, 0.0, nolight, extrapolate=True) == pytest.approx(0.5, abs=1e-12)
    f = teleport.fidelity_from_g3("D", 0.0, 0.0, PRESET)
    assert 0.69 <= f <= 0.76


def test_fidelity_undefined_without_triples():
    p = ExperimentParams.ideal().with_ratio(0.0)
    with pytest.raises(OutOfDomainError):
        teleport.fidelity_from_g3("D", 0.0, 10.0, p)


def test_fidelity_map_limits():
    t1 = teleport.grid(-100, 20, 11)
    t2 = teleport.grid(-100, 20, 21)
    fm = teleport.fidelity_map(ExperimentParams.ideal(), t1, [EPS])
    assert fm.at("average", 0, 0) == pytest.approx(1.0, abs=1e-9)
    p = ExperimentParams.ideal()
    classical = dataclasses.replace(p, laser=dataclasses.replace(p.laser, interference=False))
    fm = teleport.fidelity_map(classical, [0.0], [EPS])
    for name in ("H", "V"):
        assert fm.at(name, 0, 0) == pytest.approx(1.0, abs=1e-9)
    for name in ("D", "A", "R", "L"):
        assert fm.at(name, 0, 0) == pytest.approx(0.5, abs=1e-9)
    assert fm.at("average", 0, 0) == pytest.approx(2 / 3, abs=1e-9)
    fm = teleport.fidelity_map(PRESET, t1, t2)
    assert 0.70 <= fm.at("average", 0, 0) <= 0.85
    assert fm.average.shape == (11, 21)
    assert set(fm.summary()["fidelity_at_origin"]) == set(teleport.INPUT_NAMES)


def test_map_point_matches_pointwise_value():
    # grid blur and the local quadrature of fidelity_from_g3 agree closely
    t1 = teleport.grid(-600, 4, 301)
    t2 = teleport.grid(-2000, 8, 601)
    fm = teleport.fidelity_map(PRESET, t1, t2, inputs=("D", "H"))
    for name in ("D", "H"):
        assert fm.at(name, 0, 0) == pytest.approx(teleport.fidelity_from_g3(name, 0, 0, PRESET), abs=5e-3)


def test_map_rejects_coarse_or_uneven_grids():
    with pytest.raises(InvalidInputError):
        teleport.fidelity_map(PRESET, [-50.0, 0.0, 50.0], [0.0, 10.0])
    with pytest.raises(InvalidInputError):
        teleport.fidelity_map(PRESET, [0.0, 1.0, 3.0], [0.0, 10.0])


def test_ratio_scan_examples():
    rows = teleport.ratio_detuning_scan([0.0], [0.0, 10.0, 30.0], PRESET)
    assert all(f == pytest.approx(0.5, abs=1e-12) for _, _, f in rows)
    (_, _, f0), (_, _, f10) = teleport.ratio_detuning_scan([2.0], [0.0, 10.0], PRESET)
    assert 0.002 <= 1 - f10 / f0 <= 0.03


def test_ratio_scan_detuning_symmetry_without_fss():
    p = PRESET.overlay({"qd.fss_s": 0.0})
    rows = teleport.ratio_detuning_scan([1.0, 2.0], [-12.0, 12.0], p)
    assert rows[0][2] == pytest.approx(rows[1][2], abs=1e-12)
    assert rows[2][2] == pytest.approx(rows[3][2], abs=1e-12)


def test_ratio_scan_parallel_matches_sequential():
    a = teleport.ratio_detuning_scan([1.0, 2.0, 3.0], [0.0, 5.0], PRESET, workers=1)
    b = teleport.ratio_detuning_scan([1.0, 2.0, 3.0], [0.0, 5.0], PRESET, workers=3)
    assert a == b


def test_trajectory_examples():
    ideal = ExperimentParams.ideal()
    tr = teleport.output_trajectory(ideal, [EPS])
    assert tr.nu1[0].isclose(L, atol=1e-6)
    assert tr.overlap_l[0] == pytest.approx(1.0, abs=1e-9)
    far = teleport.output_trajectory(PRESET, [8000.0])
    assert far.lambda1[0] == pytest.approx(0.5, abs=2e-3)
    rho = teleport.output_density("R", 0.0, 0.0, PRESET)
    lam = (1 + rho.bloch().norm) / 2
    assert 0.70 <= lam <= 0.85


def test_trajectory_minimum_near_half_fss_period():
    tau2 = teleport.grid(600, 10, 101)
    tr = teleport.output_trajectory(PRESET, tau2)
    t_min = tau2[np.argmin(tr.overlap_l)]
    assert abs(t_min - HALF_FSS) < 150
    bare = teleport.output_trajectory(_bare(fss_s=2.0), tau2)
    assert abs(tau2[np.argmin(bare.overlap_l)] - HALF_FSS) <= 10


def test_fss_zero_spacing():
    p = _bare(fss_s=2.0)
    tau2 = np.arange(1.0, 5000.0, 1.0)
    f = np.array([teleport.fidelity_from_g3("D", 0.0, t, p) for t in tau2]) - 0.5
    s = np.sign(f)
    idx = np.flatnonzero(s[:-1] * s[1:] < 0)
    assert len(idx) >= 3
    assert np.allclose(np.diff(tau2[idx]), HALF_FSS, atol=1.0)


# ---------------------------------------------------------------- properties

domain_points = st.tuples(st.floats(-800, 800), st.floats(1, 4000)).map(
    lambda t: (t[0], max(t[1], t[0] + t[1] if t[0] > 0 else t[1])))
inputs = st.sampled_from(teleport.INPUT_NAMES)


@given(inputs, domain_points, st.floats(0, 5), st.floats(-40, 40), st.floats(0, 3))
def test_outcome_completeness(name, pt, s, de, gamma):
    t1, t2 = pt
    qd, las = QdParams(fss_s=s, bg_rate_gamma=gamma), LaserParams(detuning_de=de)
    spec = teleport.InputSpec(name)
    a = teleport.f_pol(spec, t1, t2, qd, las, bob=spec.target)
    b = teleport.f_pol(spec, t1, t2, qd, las, bob=spec.target.orthogonal())
    assert a + b == pytest.approx(1.0, abs=1e-10)
    p = ExperimentParams(qd, las)
    x, y = teleport.g3_outcomes(spec, spec.target, t1, t2, p)
    x2, y2 = teleport.g3_outcomes(spec, spec.target.orthogonal(), t1, t2, p)
    assert x / (x + y) + x2 / (x2 + y2) == pytest.approx(1.0, abs=1e-10)


@given(st.sampled_from(["H", "V"]), domain_points, st.floats(-40, 40), st.floats(20, 500))
def test_polar_inputs_ignore_interference_parameters(name, pt, de, tau_c):
    t1, t2 = pt
    base = teleport.f_pol(name, t1, t2, QdParams(), LaserParams())
    other = teleport.f_pol(name, t1, t2, QdParams(tau_c=tau_c), LaserParams(detuning_de=de))
    assert other == base


@given(st.floats(0, 2 * math.pi), st.floats(0, 2 * math.pi), st.floats(0, 2 * math.pi), domain_points)
def test_equatorial_phase_covariance(phi, theta, delta, pt):
    # the analyzer angle enters as -theta, so a common rotation moves them in opposite senses
    t1, t2 = pt
    qd, las = QdParams(), LaserParams(detuning_de=6.0)
    a = teleport.f_pol(PolState.equatorial(phi), t1, t2, qd, las, bob=theta)
    b = teleport.f_pol(PolState.equatorial(phi + delta), t1, t2, qd, las, bob=theta - delta)
    assert a == pytest.approx(b, abs=1e-10)


def test_equatorial_covariance_at_fixed_shifts():
    rng = np.random.default_rng(8)
    qd, las = QdParams(), LaserParams(detuning_de=6.0)
    for name in ("D", "R"):
        spec = teleport.InputSpec(name)
        ref = teleport.f_pol(spec, 40.0, 300.0, qd, las)
        for delta in rng.uniform(0, 2 * math.pi, 8):
            phi = spec.equatorial_angle + delta
            theta = teleport.InputSpec(name).target
            got = teleport.f_pol(PolState.equatorial(phi), 40.0, 300.0, qd, las,
                                 bob=PolState.equatorial(-phi))
            assert got == pytest.approx(ref, abs=1e-10)
            assert theta.isclose(PolState.equatorial(-spec.equatorial_angle))


@given(inputs, domain_points, st.floats(0, 2), st.floats(0.01, 2))
def test_background_pulls_toward_half(name, pt, g_lo, dg):
    t1, t2 = pt
    las = LaserParams(detuning_de=3.0)
    lo = teleport.f_pol(name, t1, t2, QdParams(bg_rate_gamma=g_lo), las)
    hi = teleport.f_pol(name, t1, t2, QdParams(bg_rate_gamma=g_lo + dg), las)
    assert abs(hi - 0.5) <= abs(lo - 0.5) + 1e-12


def test_background_monotone_on_grid():
    t1 = np.linspace(-400, 400, 9)[:, None]
    t2 = np.linspace(50, 3000, 12)[None, :]
    prev = None
    for gamma in (0.0, 0.2, 0.45, 1.0, 3.0):
        p = PRESET.overlay({"qd.bg_rate_gamma": gamma})
        for name in teleport.INPUT_NAMES:
            f = teleport.f_pol(name, t1, t2, p.qd, p.laser, extrapolate=True)
            if prev is not None:
                assert np.all(np.abs(f - 0.5) <= np.abs(prev[name] - 0.5) + 1e-12)
        prev = {name: teleport.f_pol(name, t1, t2, p.qd, p.laser, extrapolate=True) for name in teleport.INPUT_NAMES}


def test_input_spec():
    spec = teleport.InputSpec("R")
    assert spec.family == "equatorial" and spec.target.isclose(L)
    assert teleport.InputSpec("H").family == "polar"
    with pytest.raises(InvalidInputError):
        teleport.InputSpec("X")
