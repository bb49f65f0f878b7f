"""Monte-Carlo time tags for the teleportation and interference setups.

Event-level and classical: photons carry polarization and arrival time but
no optical phase, so laser-XX interference is absent by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import model
from ..errors import InvalidInputError
from ..model import DetectorModel, LaserParams, QdParams
from ..polarization import H, PolState, expected_teleported_state
from .tags import Detector, TagStream


@dataclass(frozen=True)
class McConfig:
    """Sources, routing and acquisition for one simulated run.

    Rates are in ns^-1, ``duration`` in ps.

    alice: "pbs" routes Alice's photons by polarization (D1 passes
        ``alice_basis``, D2 its orthogonal state); "bs50" splits them 50:50
        regardless of polarization, as in the HBT-style interference setup.
    bob_basis: polarization passed to D3 (D4 gets the orthogonal state);
        ``None`` splits Bob's photons 50:50. Defaults to the expected
        teleported state of the laser input.
    emitter: "poisson" starts cascades as a Poisson process; "single" blocks
        re-excitation until the X photon has left (one dot, sub-Poissonian).
    """

    duration: float = 1e9
    cascade_rate: float = 1.0
    laser_rate: float = 0.5
    bg_rate: float = 0.0
    seed: int = 0
    qd: QdParams = field(default_factory=QdParams)
    laser: LaserParams = field(default_factory=LaserParams)
    alice: str = "pbs"
    alice_basis: PolState = H
    bob_basis: PolState | None | str = "target"
    emitter: str = "poisson"
    jitter: DetectorModel | None = None

    def __post_init__(self):
        for name in ("cascade_rate", "laser_rate", "bg_rate"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise InvalidInputError(f"{name} must be a finite rate >= 0 (got {v})")
        if not (math.isfinite(self.duration) and self.duration > 0):
            raise InvalidInputError("duration must be > 0")
        if self.alice not in ("pbs", "bs50"):
            raise InvalidInputError(f"alice must be 'pbs' or 'bs50', got {self.alice!r}")
        if self.emitter not in ("poisson", "single"):
            raise InvalidInputError(f"emitter must be 'poisson' or 'single', got {self.emitter!r}")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise InvalidInputError("seed must fit in 64 bits")
        if self.bob_basis == "target":
            object.__setattr__(self, "bob_basis", expected_teleported_state(self.laser.input_pol))
        elif self.bob_basis is not None and not isinstance(self.bob_basis, PolState):
            raise InvalidInputError("bob_basis must be a PolState, None or 'target'")

    @property
    def x_decay_rate_ps(self) -> float:
        # delay density is the squared-amplitude decay exp(-2 gamma_x t)
        return 2.0 * self.qd.gamma_x_ps

    @property
    def cascade_rate_ps(self) -> float:
        return self.cascade_rate * model.NS_PER_PS

    @property
    def effective_cascade_rate_ps(self) -> float:
        """Mean rate of emitted cascades (blocking lowers it for a single emitter)."""
        r = self.cascade_rate_ps
        if self.emitter == "single" and r > 0:
            return r / (1.0 + r / self.x_decay_rate_ps)
        return r


def joint_probabilities(alice: PolState, bob: PolState, fss_phase: np.ndarray) -> np.ndarray:
    """P(XX passes alice_i, X passes bob_j) for (|HH> + e^{i phase}|VV>)/sqrt2.

    Returns shape (..., 4) ordered (a0 b0, a0 b1, a1 b0, a1 b1) where index 0
    is the given state and 1 its orthogonal partner.
    """
    a_states = (alice, alice.orthogonal())
    b_states = (bob, bob.orthogonal())
    ph = np.exp(1j * np.asarray(fss_phase, dtype=float))
    out = []
    for a in a_states:
        for b in b_states:
            amp = (np.conj(a.amp_h) * np.conj(b.amp_h) + ph * np.conj(a.amp_v) * np.conj(b.amp_v)) / math.sqrt(2)
            out.append(np.abs(amp) ** 2)
    return np.stack(out, axis=-1)


def _poisson_times(rng: np.random.Generator, rate_ps: float, duration: float) -> np.ndarray:
    n = rng.poisson(rate_ps * duration) if rate_ps > 0 else 0
    return np.sort(rng.uniform(0.0, duration, size=n))


def _cascade_times(cfg: McConfig, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Cascade start times and XX->X delays."""
    r = cfg.cascade_rate_ps
    mu = cfg.x_decay_rate_ps
    if r <= 0:
        return np.empty(0), np.empty(0)
    if cfg.emitter == "poisson":
        t = _poisson_times(rng, r, cfg.duration)
        return t, rng.exponential(1.0 / mu, size=len(t))
    # single emitter: start_{k+1} = start_k + delay_k + Exp(r); memorylessness makes this
    # identical to a Poisson excitation stream blocked while the dot is busy
    mean_gap = 1.0 / r + 1.0 / mu
    n = int(cfg.duration / mean_gap * 1.1 + 10 * math.sqrt(cfg.duration / mean_gap) + 10)
    starts, delays = [], []
    t0 = rng.exponential(1.0 / r)
    while True:
        d = rng.exponential(1.0 / mu, size=n)
        w = rng.exponential(1.0 / r, size=n)
        s = t0 + np.concatenate(([0.0], np.cumsum(d + w)[:-1]))
        keep = s < cfg.duration
        starts.append(s[keep])
        delays.append(d[keep])
        if not keep[-1]:
            break
        t0 = s[-1] + d[-1] + w[-1]
    return np.concatenate(starts), np.concatenate(delays)


def generate_tags(cfg: McConfig) -> TagStream:
    """Simulate one acquisition. Identical configs (including seed) give identical streams."""
    rng = np.random.Generator(np.random.PCG64(int(cfg.seed)))
    qd = cfg.qd
    times, dets = [], []

    starts, delays = _cascade_times(cfg, rng)
    n = len(starts)
    bob = cfg.bob_basis if cfg.bob_basis is not None else H
    probs = joint_probabilities(cfg.alice_basis, bob, model.phase(qd.fss_s, delays))
    u = rng.uniform(size=n)
    cat = np.minimum((u[:, None] > np.cumsum(probs, axis=1)).sum(axis=1), 3)
    xx_pass = cat < 2
    x_pass = (cat % 2) == 0
    if cfg.alice == "bs50":
        xx_pass = rng.uniform(size=n) < 0.5
    if cfg.bob_basis is None:
        x_pass = rng.uniform(size=n) < 0.5
    times += [starts, starts + delays]
    dets += [np.where(xx_pass, Detector.D1, Detector.D2), np.where(x_pass, Detector.D3, Detector.D4)]

    lt = _poisson_times(rng, cfg.laser_rate * model.NS_PER_PS, cfg.duration)
    p_d1 = 0.5 if cfg.alice == "bs50" else cfg.alice_basis.overlap(cfg.laser.input_pol)
    times.append(lt)
    dets.append(np.where(rng.uniform(size=len(lt)) < p_d1, Detector.D1, Detector.D2))

    bt = _poisson_times(rng, cfg.bg_rate * model.NS_PER_PS, cfg.duration)
    times.append(bt)
    dets.append(np.where(rng.uniform(size=len(bt)) < 0.5, Detector.D3, Detector.D4))

    t = np.concatenate(times)
    d = np.concatenate(dets).astype(np.uint8)
    if cfg.jitter is not None:
        sig = cfg.jitter.single_detector_sigmas()
        sigma = np.array([0.0, sig["D1"], sig["D2"], sig["D3"], sig["D4"]])[d]
        t = t + sigma * rng.standard_normal(len(t))
    keep = (t >= 0) & (t < cfg.duration)
    t = np.rint(t[keep]).astype(np.int64)
    d = d[keep]
    order = np.lexsort((d, t))
    return TagStream(t[order], d[order], int(cfg.duration))
