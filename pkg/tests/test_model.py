import math

import numpy as np
import pytest
import yaml
from hypothesis import given
from hypothesis import strategies as st

from hetero_teleport import model
from hetero_teleport.errors import ConfigError, InvalidInputError
from hetero_teleport.model import DetectorModel, EmpiricalFits, ExperimentParams, LaserParams, QdParams
from hetero_teleport.polarization import R


def test_unit_audit_beat_phase():
    assert model.phase(40.0, 103.4) == pytest.approx(2 * math.pi, abs=1e-3)


def test_rate_conversion():
    qd = QdParams()
    assert qd.gamma_x_ps == pytest.approx(2.5e-3)
    assert qd.bg_rate_ps == pytest.approx(0.45e-3)


def test_preset_constants():
    p = ExperimentParams.paper()
    assert (p.qd.tau_c, p.qd.fss_s, p.qd.gamma_x, p.qd.bg_rate_gamma) == (161, 2.0, 2.5, 0.45)
    assert p.qd.eta / p.laser.alpha2 == 2
    assert (p.det.fwhm_alice, p.det.fwhm_bob_d3, p.det.fwhm_bob_d4) == (80, 340, 360)
    assert p.det.kernel_truncation == 5
    assert p.det.fwhm_bob == 350


def test_g2_hbt_examples():
    fits = EmpiricalFits(g0_xx=0.2, tau_dip=1000)
    assert model.g2_hbt(0.0, fits) == pytest.approx(0.2)
    assert model.g2_hbt(1000.0, fits) == pytest.approx(1 - 0.8 * math.exp(-1), abs=1e-12)
    assert model.g2_hbt(1000.0, fits) == pytest.approx(0.7057, abs=1e-4)
    assert model.g2_hbt(1e9, fits) == pytest.approx(1.0)


def test_g2_cross_examples():
    fits = EmpiricalFits(bunch_amp=3.0)
    qd = QdParams(gamma_x=2.5)
    assert model.g2_cross(1e-9, qd, fits) == pytest.approx(4.0, abs=1e-9)
    assert model.g2_cross(1e7, qd, fits) == pytest.approx(1.0)
    assert model.g2_cross(-1e7, qd, fits) == pytest.approx(1.0)


@given(st.floats(0, 1), st.floats(1, 5000), st.floats(0, 10), st.floats(0, 1), st.floats(1, 5000))
def test_fits_reach_one_far_out(g0, tau_dip, bunch, dip, rise):
    fits = EmpiricalFits(g0_xx=g0, tau_dip=tau_dip, bunch_amp=bunch, dip_amp=dip, tau_rise=max(rise, 1))
    qd = QdParams()
    far = 50 * max(tau_dip, fits.tau_rise, 1 / (2 * qd.gamma_x_ps))
    for t in (far, -far):
        assert abs(model.g2_hbt(t, fits) - 1) < 1e-9
        assert abs(model.g2_cross(t, qd, fits) - 1) < 1e-9
    assert model.g2_hbt(0.0, fits) == pytest.approx(g0)


@pytest.mark.parametrize("kwargs", [dict(tau_c=0), dict(gamma_x=-1), dict(fss_s=-0.1),
                                    dict(bg_rate_gamma=-1), dict(eta=-1), dict(tau_c=float("nan"))])
def test_qd_validation(kwargs):
    with pytest.raises(InvalidInputError):
        QdParams(**kwargs)


def test_other_validation():
    with pytest.raises(InvalidInputError):
        LaserParams(alpha2=-1)
    with pytest.raises(InvalidInputError):
        EmpiricalFits(g0_xx=1.5)
    with pytest.raises(InvalidInputError):
        DetectorModel(fwhm_alice=0)


def test_single_detector_sigmas():
    det = DetectorModel()
    s = det.single_detector_sigmas()
    sig = lambda f: f / model.FWHM_PER_SIGMA
    assert math.hypot(s["D1"], s["D2"]) == pytest.approx(sig(80))
    assert math.hypot(s["D1"], s["D3"]) == pytest.approx(sig(340))
    assert math.hypot(s["D1"], s["D4"]) == pytest.approx(sig(360))


def test_overlay_and_errors():
    p = ExperimentParams.paper().overlay({"qd.tau_c": "150", "laser.input_pol": "r",
                                          "laser.interference": "off", "det": "none"})
    assert p.qd.tau_c == 150 and p.laser.input_pol == R and not p.laser.interference and p.det is None
    with pytest.raises(ConfigError):
        ExperimentParams.paper().overlay({"qd.nope": 1})
    with pytest.raises(ConfigError):
        ExperimentParams.paper().overlay({"bogus": 1})
    with pytest.raises(ConfigError):
        ExperimentParams.paper().overlay({"qd.tau_c": "fast"})
    with pytest.raises(InvalidInputError):
        ExperimentParams.paper().overlay({"qd.tau_c": -3})


def test_as_dict_round_trips_through_yaml():
    p = ExperimentParams.paper().overlay({"laser.input_pol": "L", "fits.g0_xx": 0.1})
    doc = yaml.safe_load(yaml.safe_dump(p.as_dict()))
    flat = {f"{s}.{k}": v for s, rec in doc.items() for k, v in rec.items()}
    assert ExperimentParams.paper().overlay(flat) == p


def test_ideal_and_zeroed():
    p = ExperimentParams.ideal()
    assert p.det is None and p.qd.fss_s == 0 and p.qd.bg_rate_gamma == 0 and p.laser.detuning_de == 0
    z = EmpiricalFits.zeroed()
    assert z.g0_xx == 0 and z.bunch_amp == 0 and z.dip_amp == 0
    assert z.qd_triple_scale == 0 and z.laser_triple_scale == 0


def test_with_ratio_keeps_alpha2():
    p = ExperimentParams.paper().with_ratio(3.0)
    assert p.qd.eta == pytest.approx(3.0 * p.laser.alpha2)
    assert np.isclose(p.with_detuning(7).laser.detuning_de, 7)
