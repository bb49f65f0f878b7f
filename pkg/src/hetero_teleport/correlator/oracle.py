"""Phase-diffusion Monte Carlo for the laser-XX beat term.

A Lorentzian line of coherence time tau_c is a Wiener phase with
Var[dphi(tau)] = 2|tau|/tau_c. Averaging 1 + cos(dphi(tau) + dE tau/hbar)
over many paths gives the envelope-times-beat factor independently of the
closed-form expression it is checked against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import model
from ..errors import InvalidInputError
from ..interference import CorrelationCurve

MIN_TRIALS = 10_000


@dataclass(frozen=True)
class OracleCurve:
    curve: CorrelationCurve
    stderr: np.ndarray
    n_trials: int


def _side(rng: np.random.Generator, steps: np.ndarray, tau_c: float, n: int) -> np.ndarray:
    """Wiener phase sampled at cumulative positions given by ``steps`` (ps), shape (n, len)."""
    incr = rng.standard_normal((n, len(steps))) * np.sqrt(2.0 * steps / tau_c)
    return np.cumsum(incr, axis=1)


def phase_diffusion_oracle(tau_grid, tau_c: float, de: float, n_trials: int = 100_000,
                           seed: int = 0, batch: int = 4096) -> OracleCurve:
    """Monte-Carlo estimate of 1 + <cos(dphi(tau) + dE tau/hbar)> on a uniform grid.

    Positive and negative delays use independent paths; tau = 0 is exact.
    """
    tau = np.asarray(tau_grid, dtype=float)
    if n_trials < MIN_TRIALS:
        raise InvalidInputError(f"n_trials must be >= {MIN_TRIALS}")
    if tau.ndim != 1 or len(tau) < 2:
        raise InvalidInputError("tau grid must be 1-D with at least two points")
    step = tau[1] - tau[0]
    if step <= 0 or np.max(np.abs(np.diff(tau) - step)) > 1e-9 * step:
        raise InvalidInputError("tau grid must be uniform and increasing")
    rng = np.random.Generator(np.random.PCG64(int(seed)))
    beat = model.phase(de, tau)

    pos = np.flatnonzero(tau > 0)
    neg = np.flatnonzero(tau < 0)[::-1]  # ordered by increasing |tau|
    zero = np.flatnonzero(tau == 0)

    total = np.zeros(len(tau))
    total_sq = np.zeros(len(tau))
    done = 0
    while done < n_trials:
        n = min(batch, n_trials - done)
        for idx in (pos, neg):
            if len(idx) == 0:
                continue
            mag = np.abs(tau[idx])
            steps = np.diff(np.concatenate(([0.0], mag)))
            phi = _side(rng, steps, tau_c, n)
            v = 1.0 + np.cos(phi + beat[idx])
            total[idx] += v.sum(axis=0)
            total_sq[idx] += (v * v).sum(axis=0)
        done += n
    mean = total / n_trials
    var = np.maximum(total_sq / n_trials - mean ** 2, 0.0) * n_trials / (n_trials - 1)
    stderr = np.sqrt(var / n_trials)
    mean[zero] = 1.0 + np.cos(beat[zero])
    stderr[zero] = 0.0
    return OracleCurve(CorrelationCurve(tau[0], step, mean, "oracle"), stderr, n_trials)
