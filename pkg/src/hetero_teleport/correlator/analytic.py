"""Exact expected histogram counts for the classical tag generator.

These follow from the generator's own sampling law (Poisson or blocked
renewal cascades, independent Poisson laser and background) and serve as an
oracle for the streaming histogrammers. Jitter-free streams only.
"""

from __future__ import annotations

import numpy as np

from .. import model
from ..errors import InvalidInputError
from .generate import McConfig, joint_probabilities
from .tags import Detector

_GL_X, _GL_W = np.polynomial.legendre.leggauss(48)

ALICE = (Detector.D1, Detector.D2)
BOB = (Detector.D3, Detector.D4)


def _integrate(f, lo: float, hi: float, breaks=()) -> float:
    """Piecewise Gauss-Legendre over [lo, hi], split at the given break points."""
    if hi <= lo:
        return 0.0
    pts = sorted({lo, hi, *[b for b in breaks if lo < b < hi]})
    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        x = 0.5 * (b - a) * _GL_X + 0.5 * (a + b)
        total += 0.5 * (b - a) * float(np.dot(_GL_W, f(x)))
    return total


def singles_rates(cfg: McConfig) -> dict[int, float]:
    """Mean count rate (ps^-1) of each detector."""
    r = cfg.effective_cascade_rate_ps
    lr = cfg.laser_rate * model.NS_PER_PS
    br = cfg.bg_rate * model.NS_PER_PS
    p1 = 0.5 if cfg.alice == "bs50" else cfg.alice_basis.overlap(cfg.laser.input_pol)
    return {
        Detector.D1: r / 2 + lr * p1,
        Detector.D2: r / 2 + lr * (1 - p1),
        Detector.D3: r / 2 + br / 2,
        Detector.D4: r / 2 + br / 2,
    }


def _route_probability(cfg: McConfig, a: int, b: int, tau: np.ndarray) -> np.ndarray:
    """P(XX on Alice detector a, X on Bob detector b | XX->X delay tau)."""
    if cfg.alice == "bs50" or cfg.bob_basis is None:
        return np.full(np.shape(tau), 0.25)
    probs = joint_probabilities(cfg.alice_basis, cfg.bob_basis, model.phase(cfg.qd.fss_s, tau))
    return probs[..., 2 * ALICE.index(a) + BOB.index(b)]


def cascade_pair_density(cfg: McConfig, a: int, b: int, tau) -> np.ndarray:
    """Density (ps^-2) of same-cascade pairs: XX on ``a`` at 0 and X on ``b`` at tau."""
    if cfg.emitter != "poisson":
        raise InvalidInputError("cascade pair density is tabulated for the Poisson emitter only")
    tau = np.asarray(tau, dtype=float)
    mu = cfg.x_decay_rate_ps
    safe = np.where(tau > 0, tau, 0.0)
    dens = cfg.cascade_rate_ps * _route_probability(cfg, a, b, safe) * mu * np.exp(-mu * safe)
    return np.where(tau > 0, dens, 0.0)


def _same_stream_excess(cfg: McConfig, tau) -> np.ndarray:
    """(g2 - 1) x rate^2 for two photons of the same kind (both XX or both X) from one emitter."""
    tau = np.asarray(tau, dtype=float)
    if cfg.emitter == "poisson":
        return np.zeros_like(tau)
    r = cfg.effective_cascade_rate_ps
    k = cfg.cascade_rate_ps + cfg.x_decay_rate_ps
    return -r * r * np.exp(-k * np.abs(tau))


def expected_g2_counts(cfg: McConfig, det_a: int, det_b: int, bin: float, half: int,
                       duration: float | None = None) -> np.ndarray:
    """Expected counts of t_b - t_a in bins centred on k*bin, |k| <= half."""
    if cfg.jitter is not None:
        raise InvalidInputError("analytic counts assume jitter-free streams")
    T = cfg.duration if duration is None else duration
    rates = singles_rates(cfg)
    a, b = int(det_a), int(det_b)
    base = rates[a] * rates[b]
    if a in ALICE and b in ALICE:
        def dens(t):
            return base + 0.25 * _same_stream_excess(cfg, t)
    elif a in BOB and b in BOB:
        def dens(t):
            return base + 0.25 * _same_stream_excess(cfg, t)
    elif a in ALICE and b in BOB:
        def dens(t):
            return base + cascade_pair_density(cfg, a, b, t)
    else:
        def dens(t):
            return base + cascade_pair_density(cfg, b, a, -np.asarray(t))
    out = np.empty(2 * half + 1)
    for i, k in enumerate(range(-half, half + 1)):
        lo, hi = (k - 0.5) * bin, (k + 0.5) * bin
        out[i] = T * _integrate(dens, lo, hi, breaks=(0.0,))
    return out


def expected_g3_counts(cfg: McConfig, bob_det: int, tau1_edges, tau2_edges,
                       duration: float | None = None) -> np.ndarray:
    """Expected triple counts (D1 at 0, D2 at tau1, Bob detector at tau2) per bin.

    Poisson cascades are a cluster process with at most one XX and one X per
    cluster, so the triple density is
    l1 l2 lx + l1 c_2x(tau2 - tau1) + l2 c_1x(tau2).
    """
    if cfg.jitter is not None:
        raise InvalidInputError("analytic counts assume jitter-free streams")
    if cfg.alice != "pbs":
        raise InvalidInputError("triple counts are tabulated for the PBS Bell measurement")
    T = cfg.duration if duration is None else duration
    rates = singles_rates(cfg)
    l1, l2, lx = rates[Detector.D1], rates[Detector.D2], rates[int(bob_det)]
    e1 = np.asarray(tau1_edges, dtype=float)
    e2 = np.asarray(tau2_edges, dtype=float)
    out = np.empty((len(e1) - 1, len(e2) - 1))

    def c1(t):
        return cascade_pair_density(cfg, Detector.D1, bob_det, t)

    def c2(t):
        return cascade_pair_density(cfg, Detector.D2, bob_det, t)

    for i in range(len(e1) - 1):
        a1, b1 = e1[i], e1[i + 1]
        for j in range(len(e2) - 1):
            a2, b2 = e2[j], e2[j + 1]
            area = (b1 - a1) * (b2 - a2)
            term_b = l2 * (b1 - a1) * _integrate(c1, a2, b2, breaks=(0.0,))

            def overlap_weighted(u, a1=a1, b1=b1, a2=a2, b2=b2):
                length = np.minimum(b1, b2 - u) - np.maximum(a1, a2 - u)
                return np.maximum(length, 0.0) * c2(u)

            kinks = (a2 - b1, a2 - a1, b2 - b1, b2 - a1, 0.0)
            term_a = l1 * _integrate(overlap_weighted, a2 - b1, b2 - a1, breaks=kinks)
            out[i, j] = T * (l1 * l2 * lx * area + term_a + term_b)
    return out
