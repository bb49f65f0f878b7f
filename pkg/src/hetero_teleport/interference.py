"""Two-photon interference of laser and XX photons on the unbalanced splitter.

The co-polarised coincidence rate is the three-way sum of laser+QD pairs
(with the beat term), QD+QD pairs (through the XX HBT function) and
laser+laser pairs, normalised by the total detected intensity squared.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import convolve1d

from . import model
from .errors import InvalidInputError
from .model import FWHM_PER_SIGMA, DetectorModel, EmpiricalFits, LaserParams, QdParams

DEFAULT_STEP = 1.0  # ps
DEFAULT_SPAN = 2000.0  # ps


@dataclass(frozen=True)
class CorrelationCurve:
    """g2 samples on the uniform grid start + step*k, k < count."""

    start: float
    step: float
    values: np.ndarray
    label: str = "co"

    def __post_init__(self):
        if not self.step > 0:
            raise InvalidInputError("grid step must be > 0")
        vals = np.array(self.values, dtype=float)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if self.label not in ("co", "cross", "difference", "mc", "oracle"):
            raise InvalidInputError(f"unknown curve label {self.label!r}")

    @property
    def count(self) -> int:
        return len(self.values)

    @property
    def tau(self) -> np.ndarray:
        return self.start + self.step * np.arange(self.count)

    def at(self, tau: float) -> float:
        """Value at the grid point closest to ``tau``."""
        k = int(round((tau - self.start) / self.step))
        if not 0 <= k < self.count:
            raise InvalidInputError(f"tau={tau} outside the grid")
        return float(self.values[k])

    def with_values(self, values: np.ndarray, label: str | None = None) -> "CorrelationCurve":
        return CorrelationCurve(self.start, self.step, values, label or self.label)


def symmetric_grid(span: float = DEFAULT_SPAN, step: float = DEFAULT_STEP) -> np.ndarray:
    n = int(round(span / step))
    return step * np.arange(-n, n + 1)


def _normalizer(qd: QdParams, laser: LaserParams) -> float:
    total = qd.eta + laser.alpha2
    if total <= 0:
        raise InvalidInputError("eta + alpha2 must be > 0")
    return total * total


def interference_term(tau, qd: QdParams, laser: LaserParams):
    """2 eta alpha^2 e^{-|tau|/tau_c} cos(dE tau / hbar), unnormalised."""
    tau = np.asarray(tau, dtype=float)
    if not laser.interference:
        return np.zeros_like(tau)
    return 2.0 * qd.eta * laser.alpha2 * np.exp(-np.abs(tau) / qd.tau_c) * np.cos(
        model.phase(laser.detuning_de, tau))


def g2_cross(tau, qd: QdParams, laser: LaserParams, fits: EmpiricalFits):
    """Coincidences for orthogonally polarised (non-interfering) inputs."""
    norm = _normalizer(qd, laser)
    tau = np.asarray(tau, dtype=float)
    eta, a2 = qd.eta, laser.alpha2
    out = (2 * eta * a2 + eta ** 2 * model.g2_hbt(tau, fits) + a2 ** 2) / norm
    return out if np.ndim(out) else float(out)


def g2_parallel(tau, qd: QdParams, laser: LaserParams, fits: EmpiricalFits):
    """Coincidences for co-polarised inputs, including the laser-XX beat."""
    norm = _normalizer(qd, laser)
    out = g2_cross(tau, qd, laser, fits) + interference_term(tau, qd, laser) / norm
    return out if np.ndim(out) else float(out)


def gaussian_taps(step: float, fwhm: float, truncation: float = 5.0) -> np.ndarray:
    """Unit-sum Gaussian weights on a grid of spacing ``step``, cut at ``truncation`` sigma."""
    if not step <= fwhm / 4.0:
        raise InvalidInputError(f"grid step {step} ps too coarse for a {fwhm} ps kernel (need <= fwhm/4)")
    sigma = fwhm / FWHM_PER_SIGMA
    half = int(math.floor(truncation * sigma / step))
    x = step * np.arange(-half, half + 1)
    w = np.exp(-0.5 * (x / sigma) ** 2)
    return w / w.sum()


def smooth_axis(values: np.ndarray, step: float, fwhm: float | None, axis: int = -1,
                truncation: float = 5.0) -> np.ndarray:
    """Gaussian blur along one axis, renormalising the kernel mass near the edges."""
    values = np.asarray(values, dtype=float)
    if fwhm is None:
        return values.copy()
    w = gaussian_taps(step, fwhm, truncation)
    num = convolve1d(values, w, axis=axis, mode="constant", cval=0.0)
    ones_shape = [1] * values.ndim
    ones_shape[axis] = values.shape[axis]
    den = convolve1d(np.ones(values.shape[axis]), w, mode="constant", cval=0.0).reshape(ones_shape)
    return num / den


def convolve_detector(curve: CorrelationCurve, fwhm: float, truncation: float = 5.0) -> CorrelationCurve:
    """Blur a curve with a unit-area Gaussian instrument response of the given FWHM."""
    return curve.with_values(smooth_axis(curve.values, curve.step, fwhm, truncation=truncation))


def correlation_curves(qd: QdParams, laser: LaserParams, fits: EmpiricalFits,
                       det: DetectorModel | None = None, span: float | None = None,
                       step: float = DEFAULT_STEP) -> tuple[CorrelationCurve, CorrelationCurve]:
    """Co- and cross-polarised curves on a symmetric grid, optionally convolved with D1-D2."""
    if span is None:
        span = max(DEFAULT_SPAN, 10.0 * qd.tau_c)
    tau = symmetric_grid(span, step)
    co = CorrelationCurve(tau[0], step, g2_parallel(tau, qd, laser, fits), "co")
    cr = CorrelationCurve(tau[0], step, g2_cross(tau, qd, laser, fits), "cross")
    if det is not None:
        co = convolve_detector(co, det.fwhm_alice, det.kernel_truncation)
        cr = convolve_detector(cr, det.fwhm_alice, det.kernel_truncation)
    return co, cr


def visibility(qd: QdParams, laser: LaserParams, fits: EmpiricalFits,
               det: DetectorModel | None = None, step: float = DEFAULT_STEP) -> float:
    """(g2_co(0) - g2_cross(0)) / g2_cross(0) after the D1-D2 response."""
    co, cr = correlation_curves(qd, laser, fits, det, step=step)
    return (co.at(0.0) - cr.at(0.0)) / cr.at(0.0)


def detuning_scan(de_values, qd: QdParams, laser: LaserParams, fits: EmpiricalFits,
                  det: DetectorModel | None = None, workers: int = 1) -> list[tuple[float, float]]:
    """Visibility for each detuning (ueV); rows come back in input order."""
    des = [float(x) for x in de_values]
    if not des:
        raise InvalidInputError("detuning list is empty")

    def one(de: float) -> float:
        return visibility(qd, LaserParams(laser.alpha2, de, laser.input_pol, laser.interference), fits, det)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            vs = list(pool.map(one, des))
    else:
        vs = [one(de) for de in des]
    return list(zip(des, vs))
