"""Physical parameters, units and the empirical correlation fits.

Units throughout: time in ps, energy in ueV, rates supplied in ns^-1 and
read back in ps^-1 through the ``*_ps`` properties. Phases are always
energy * time / HBAR.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from .errors import ConfigError, InvalidInputError
from .polarization import D, CARDINAL, PolState

HBAR = 658.2119569  # ueV ps
NS_PER_PS = 1e-3
FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))


def phase(energy_uev, time_ps):
    """Dimensionless phase energy*time/hbar."""
    return np.multiply(energy_uev, time_ps) / HBAR


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise InvalidInputError(msg)


def _finite(*values: float) -> bool:
    return all(math.isfinite(v) for v in values)


@dataclass(frozen=True)
class QdParams:
    """Quantum-dot (ELED) parameters; defaults are the measured device values."""

    tau_c: float = 161.0  # ps, XX coherence time
    gamma_x: float = 2.5  # ns^-1
    fss_s: float = 2.0  # ueV
    bg_rate_gamma: float = 0.45  # ns^-1
    eta: float = 2.0  # XX intensity at Alice's detectors

    def __post_init__(self):
        _require(_finite(self.tau_c, self.gamma_x, self.fss_s, self.bg_rate_gamma, self.eta),
                 "QD parameters must be finite")
        _require(self.tau_c > 0, f"tau_c must be > 0 (got {self.tau_c})")
        _require(self.gamma_x > 0, f"gamma_x must be > 0 (got {self.gamma_x})")
        _require(self.fss_s >= 0, f"fss_s must be >= 0 (got {self.fss_s})")
        _require(self.bg_rate_gamma >= 0, f"bg_rate_gamma must be >= 0 (got {self.bg_rate_gamma})")
        _require(self.eta >= 0, f"eta must be >= 0 (got {self.eta})")

    @property
    def gamma_x_ps(self) -> float:
        return self.gamma_x * NS_PER_PS

    @property
    def bg_rate_ps(self) -> float:
        return self.bg_rate_gamma * NS_PER_PS


@dataclass(frozen=True)
class LaserParams:
    """CW laser input. ``interference=False`` makes laser and XX photons distinguishable."""

    alpha2: float = 1.0
    detuning_de: float = 0.0  # ueV
    input_pol: PolState = D
    interference: bool = True

    def __post_init__(self):
        _require(_finite(self.alpha2, self.detuning_de), "laser parameters must be finite")
        _require(self.alpha2 >= 0, f"alpha2 must be >= 0 (got {self.alpha2})")
        _require(isinstance(self.input_pol, PolState), "input_pol must be a PolState")


@dataclass(frozen=True)
class EmpiricalFits:
    """Fit functions standing in for separately measured correlations.

    hbt:    g2_HBT(t) = 1 - (1 - g0_xx) exp(-|t|/tau_dip)
    cross:  XX-X correlation, 1 + bunch_amp exp(-2 gamma_x t) for t > 0 and
            1 - dip_amp exp(t/tau_rise) for t <= 0
    qd_triple_scale scales the factorized QD-only triple correlation and
    laser_triple_scale the coherent-light triple term (1 for a laser).
    """

    g0_xx: float = 0.2
    tau_dip: float = 1000.0  # ps
    bunch_amp: float = 3.0
    dip_amp: float = 0.6
    tau_rise: float = 600.0  # ps
    qd_triple_scale: float = 0.85
    laser_triple_scale: float = 1.0

    def __post_init__(self):
        _require(_finite(*dataclasses.astuple(self)), "fit parameters must be finite")
        _require(0.0 <= self.g0_xx <= 1.0, f"g0_xx must lie in [0, 1] (got {self.g0_xx})")
        _require(self.tau_dip > 0, "tau_dip must be > 0")
        _require(self.bunch_amp >= 0, "bunch_amp must be >= 0")
        _require(0.0 <= self.dip_amp <= 1.0, f"dip_amp must lie in [0, 1] (got {self.dip_amp})")
        _require(self.tau_rise > 0, "tau_rise must be > 0")
        _require(self.qd_triple_scale >= 0, "qd_triple_scale must be >= 0")
        _require(self.laser_triple_scale >= 0, "laser_triple_scale must be >= 0")

    @classmethod
    def zeroed(cls) -> "EmpiricalFits":
        """No bunching, no dip, no nuisance triples: only the wanted laser+QD term survives."""
        return cls(g0_xx=0.0, bunch_amp=0.0, dip_amp=0.0, qd_triple_scale=0.0, laser_triple_scale=0.0)


@dataclass(frozen=True)
class DetectorModel:
    """Gaussian instrument responses, FWHM per detector pair (ps)."""

    fwhm_alice: float = 80.0
    fwhm_bob_d3: float = 340.0
    fwhm_bob_d4: float = 360.0
    kernel_truncation: float = 5.0

    def __post_init__(self):
        _require(_finite(self.fwhm_alice, self.fwhm_bob_d3, self.fwhm_bob_d4, self.kernel_truncation),
                 "detector parameters must be finite")
        _require(min(self.fwhm_alice, self.fwhm_bob_d3, self.fwhm_bob_d4) > 0, "all FWHM must be > 0")
        _require(self.kernel_truncation > 0, "kernel_truncation must be > 0")

    @property
    def fwhm_bob(self) -> float:
        return 0.5 * (self.fwhm_bob_d3 + self.fwhm_bob_d4)

    def single_detector_sigmas(self) -> dict[str, float]:
        """Per-detector jitter, splitting the D1-D2 pair equally (sigma_pair^2 = sigma_a^2 + sigma_b^2)."""
        s12 = self.fwhm_alice / FWHM_PER_SIGMA
        s1 = s12 / math.sqrt(2.0)
        out = {"D1": s1, "D2": s1}
        for name, fwhm in (("D3", self.fwhm_bob_d3), ("D4", self.fwhm_bob_d4)):
            s = fwhm / FWHM_PER_SIGMA
            _require(s > s1, f"pair resolution of {name} smaller than D1 alone")
            out[name] = math.sqrt(s * s - s1 * s1)
        return out


@dataclass(frozen=True)
class ExperimentParams:
    """Everything a scenario needs. ``det=None`` means ideal (jitter-free) detectors."""

    qd: QdParams = field(default_factory=QdParams)
    laser: LaserParams = field(default_factory=LaserParams)
    fits: EmpiricalFits = field(default_factory=EmpiricalFits)
    det: DetectorModel | None = field(default_factory=DetectorModel)

    @classmethod
    def paper(cls) -> "ExperimentParams":
        return cls()

    @classmethod
    def ideal(cls) -> "ExperimentParams":
        """No background, no nuisance triples, no FSS, no detuning, no jitter."""
        return cls(
            qd=QdParams(fss_s=0.0, bg_rate_gamma=0.0),
            laser=LaserParams(detuning_de=0.0),
            fits=EmpiricalFits.zeroed(),
            det=None,
        )

    def with_ratio(self, ratio: float) -> "ExperimentParams":
        """Set eta/alpha2 keeping alpha2 fixed."""
        return dataclasses.replace(self, qd=dataclasses.replace(self.qd, eta=ratio * self.laser.alpha2))

    def with_detuning(self, de: float) -> "ExperimentParams":
        return dataclasses.replace(self, laser=dataclasses.replace(self.laser, detuning_de=de))

    def overlay(self, overrides: Mapping[str, Any]) -> "ExperimentParams":
        """Apply dotted overrides such as ``{"qd.tau_c": 150, "det": None}``.

        Unknown sections or fields raise ConfigError; values are validated by
        the record constructors.
        """
        sections = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}
        pending: dict[str, dict[str, Any]] = {name: {} for name in sections}
        for key, value in overrides.items():
            if key == "det" and value in (None, "none", "off"):
                sections["det"] = None
                continue
            section, _, name = key.partition(".")
            if section not in sections or not name:
                raise ConfigError(f"unknown parameter {key!r}")
            record_type = {"qd": QdParams, "laser": LaserParams, "fits": EmpiricalFits, "det": DetectorModel}[section]
            known = {f.name: f for f in dataclasses.fields(record_type)}
            if name not in known:
                raise ConfigError(f"unknown parameter {key!r}")
            pending[section][name] = _coerce(key, known[name], value)
        for section, updates in pending.items():
            if not updates:
                continue
            base = sections[section]
            if base is None:
                base = DetectorModel()
            sections[section] = dataclasses.replace(base, **updates)
        return ExperimentParams(**sections)

    def as_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for section in ("qd", "laser", "fits", "det"):
            rec = getattr(self, section)
            if rec is None:
                out[section] = None
                continue
            d = {}
            for f in dataclasses.fields(rec):
                v = getattr(rec, f.name)
                if isinstance(v, PolState):
                    v = _state_name(v)
                d[f.name] = v
            out[section] = d
        return out


def _state_name(s: PolState) -> str:
    for name, c in CARDINAL.items():
        if s.isclose(c):
            return name
    return f"{s.amp_h.real:.12g}{s.amp_v.real:+.12g}{s.amp_v.imag:+.12g}j"


def _coerce(key: str, f: dataclasses.Field, value: Any) -> Any:
    if f.name == "input_pol":
        if isinstance(value, PolState):
            return value
        try:
            return CARDINAL[str(value).upper()]
        except KeyError:
            raise ConfigError(f"{key}: expected one of {sorted(CARDINAL)}, got {value!r}") from None
    if f.name == "interference":
        if isinstance(value, bool):
            return value
        text = str(value).strip().lower()
        if text in ("1", "true", "yes", "on"):
            return True
        if text in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {value!r}")
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected a number, got {value!r}") from None


def g2_hbt(tau, fits: EmpiricalFits):
    """XX auto-correlation fit, even in tau, between g0_xx and 1."""
    tau = np.abs(np.asarray(tau, dtype=float))
    out = 1.0 - (1.0 - fits.g0_xx) * np.exp(-tau / fits.tau_dip)
    return out if out.ndim else float(out)


def g2_cross(tau, params: QdParams, fits: EmpiricalFits):
    """XX-X cross-correlation fit; positive tau means X detected after XX.

    Bunched on the cascade side, dipped on the other; deliberately
    discontinuous at tau = 0.
    """
    tau = np.asarray(tau, dtype=float)
    pos = tau > 0
    after = 1.0 + fits.bunch_amp * np.exp(-2.0 * params.gamma_x_ps * np.where(pos, tau, 0.0))
    before = 1.0 - fits.dip_amp * np.exp(np.where(pos, 0.0, tau) / fits.tau_rise)
    out = np.where(pos, after, before)
    return out if out.ndim else float(out)
