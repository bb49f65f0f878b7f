"""Streaming coincidence histograms (multi-start, multi-stop).

Both accumulators take the stream in time-ordered chunks and keep only a
window's worth of history, so memory is bounded by window x rate. Counts
are integers and add across shards; pairs that straddle a shard boundary
are the only ones a split loses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from ..errors import InvalidInputError
from ..interference import CorrelationCurve
from .tags import Detector, TagStream

DEFAULT_CHUNK = 1 << 16


def _expand(lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Flatten the index ranges [lo_i, hi_i) into (owner i, index) pairs."""
    counts = np.maximum(hi - lo, 0)
    total = int(counts.sum())
    owner = np.repeat(np.arange(len(lo)), counts)
    starts = np.cumsum(counts) - counts
    idx = lo[owner] + (np.arange(total) - starts[owner])
    return owner, idx


def _check_sorted(times: np.ndarray, last: int | None) -> None:
    if len(times) == 0:
        return
    if np.any(np.diff(times) < 0) or (last is not None and times[0] < last):
        raise InvalidInputError("tag stream is not sorted by time")


@dataclass(frozen=True)
class Histogram1D:
    """Coincidence counts in bins of width ``bin`` centred on k*bin, |k| <= half."""

    bin: float
    counts: np.ndarray
    n_a: int
    n_b: int
    duration: float

    @property
    def half(self) -> int:
        return (len(self.counts) - 1) // 2

    @property
    def tau(self) -> np.ndarray:
        return self.bin * np.arange(-self.half, self.half + 1)

    @property
    def expected(self) -> float:
        """Uncorrelated-stream count per bin."""
        if self.duration <= 0:
            return 0.0
        return self.n_a * self.n_b * self.bin / self.duration

    @property
    def defined(self) -> bool:
        return self.expected > 0

    @property
    def g2(self) -> np.ndarray:
        if not self.defined:
            return np.full(len(self.counts), np.nan)
        return self.counts / self.expected

    @property
    def sigma(self) -> np.ndarray:
        if not self.defined:
            return np.full(len(self.counts), np.nan)
        return np.sqrt(np.maximum(self.counts, 1)) / self.expected

    def curve(self) -> CorrelationCurve:
        return CorrelationCurve(-self.half * self.bin, self.bin, self.g2, "mc")


class G2Accumulator:
    """Histogram of t_b - t_a over all (a, b) pairs within +-window."""

    def __init__(self, det_a: int, det_b: int, bin: float, window: float):
        if int(det_a) == int(det_b):
            raise InvalidInputError("g2 needs two distinct detectors")
        if not bin > 0 or not window >= bin / 2:
            raise InvalidInputError("need bin > 0 and window >= bin/2")
        self.det_a, self.det_b = int(det_a), int(det_b)
        self.bin = float(bin)
        self.half = int(math.floor(window / bin + 0.5))
        self.reach = (self.half + 0.5) * self.bin
        self.counts = np.zeros(2 * self.half + 1, dtype=np.int64)
        self.n_a = self.n_b = 0
        self._seen = 0
        self._last: int | None = None
        # history: (times, global indices) per detector
        self._hist = {k: (np.empty(0, np.int64), np.empty(0, np.int64)) for k in ("a", "b")}

    def _bin(self, dt: np.ndarray) -> None:
        k = np.floor(dt / self.bin + 0.5).astype(np.int64)
        ok = np.abs(k) <= self.half
        self.counts += np.bincount(k[ok] + self.half, minlength=len(self.counts))

    def feed(self, times: np.ndarray, detectors: np.ndarray) -> None:
        times = np.asarray(times, dtype=np.int64)
        detectors = np.asarray(detectors)
        _check_sorted(times, self._last)
        if len(times) == 0:
            return
        gidx = self._seen + np.arange(len(times))
        self._seen += len(times)
        self._last = int(times[-1])
        new = {}
        for key, det in (("a", self.det_a), ("b", self.det_b)):
            m = detectors == det
            new[key] = (times[m], gidx[m])
        self.n_a += len(new["a"][0])
        self.n_b += len(new["b"][0])
        allt = {k: np.concatenate((self._hist[k][0], new[k][0])) for k in new}
        alli = {k: np.concatenate((self._hist[k][1], new[k][1])) for k in new}
        # each pair is counted once, when its later member arrives
        for late, early, sign in (("b", "a", 1), ("a", "b", -1)):
            t_new, i_new = new[late]
            if len(t_new) == 0 or len(allt[early]) == 0:
                continue
            lo = np.searchsorted(allt[early], t_new - self.reach, side="left")
            hi = np.searchsorted(alli[early], i_new, side="left")
            owner, idx = _expand(lo, hi)
            dt = t_new[owner] - allt[early][idx]
            self._bin(sign * dt)
        cut = self._last - self.reach
        for k in new:
            keep = allt[k] >= cut
            self._hist[k] = (allt[k][keep], alli[k][keep])

    def result(self, duration: float) -> Histogram1D:
        return Histogram1D(self.bin, self.counts.copy(), self.n_a, self.n_b, float(duration))


def g2_histogram(tags: TagStream, det_a: int, det_b: int, bin: float, window: float,
                 chunk: int = DEFAULT_CHUNK) -> Histogram1D:
    """Rate-normalised cross-correlation of two detectors, computed in one streaming pass."""
    acc = G2Accumulator(det_a, det_b, bin, window)
    for t, d in tags.chunks(chunk):
        acc.feed(t, d)
    return acc.result(tags.duration)


@dataclass(frozen=True)
class Histogram2D:
    """Triple counts: trigger D1 at t, D2 at t + tau1, Bob detector at t + tau2.

    Bins are [edge_k, edge_{k+1}) on each axis.
    """

    tau1_edges: np.ndarray
    tau2_edges: np.ndarray
    counts: np.ndarray
    n1: int
    n2: int
    nb: int
    duration: float
    mode: str = "rate-normalized"

    @property
    def tau1(self) -> np.ndarray:
        return 0.5 * (self.tau1_edges[1:] + self.tau1_edges[:-1])

    @property
    def tau2(self) -> np.ndarray:
        return 0.5 * (self.tau2_edges[1:] + self.tau2_edges[:-1])

    @property
    def expected(self) -> np.ndarray:
        """Uncorrelated-triple counts per bin."""
        if self.duration <= 0:
            return np.zeros(self.counts.shape)
        w1 = np.diff(self.tau1_edges)[:, None]
        w2 = np.diff(self.tau2_edges)[None, :]
        return self.n1 * (self.n2 / self.duration) * (self.nb / self.duration) * w1 * w2

    @property
    def values(self) -> np.ndarray:
        if self.mode == "raw":
            return self.counts.astype(float)
        e = self.expected
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(e > 0, self.counts / np.where(e > 0, e, 1), np.nan)

    @property
    def sigma(self) -> np.ndarray:
        e = self.expected
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(e > 0, np.sqrt(np.maximum(self.counts, 1)) / np.where(e > 0, e, 1), np.nan)

    def bin_index(self, tau1: float, tau2: float) -> tuple[int, int]:
        i = int(np.searchsorted(self.tau1_edges, tau1, side="right")) - 1
        j = int(np.searchsorted(self.tau2_edges, tau2, side="right")) - 1
        if not (0 <= i < self.counts.shape[0] and 0 <= j < self.counts.shape[1]):
            raise InvalidInputError("point outside the histogram")
        return i, j


def _edges(lo: float, hi: float, width: float) -> np.ndarray:
    n = int(round((hi - lo) / width))
    if n < 1 or abs(lo + n * width - hi) > 1e-6 * width:
        raise InvalidInputError(f"window [{lo}, {hi}] is not a whole number of {width} ps bins")
    return lo + width * np.arange(n + 1)


class G3Accumulator:
    """Triple histograms for several Bob detectors at once.

    A trigger is processed once the stream has moved past its last possible
    partner, so chunk boundaries do not affect the result.
    """

    def __init__(self, tau1_edges: np.ndarray, tau2_edges: np.ndarray,
                 bob: tuple[int, ...] = (Detector.D3, Detector.D4),
                 trigger: int = Detector.D1, partner: int = Detector.D2):
        self.e1 = np.asarray(tau1_edges, dtype=float)
        self.e2 = np.asarray(tau2_edges, dtype=float)
        self.bob = tuple(int(b) for b in bob)
        self.trigger, self.partner = int(trigger), int(partner)
        self.reach_hi = max(self.e1[-1], self.e2[-1])
        self.reach_lo = min(self.e1[0], self.e2[0])
        self.counts = {b: np.zeros((len(self.e1) - 1, len(self.e2) - 1), dtype=np.int64) for b in self.bob}
        self.n = {d: 0 for d in (self.trigger, self.partner, *self.bob)}
        self._last: int | None = None
        self._buf = {d: np.empty(0, np.int64) for d in self.n}

    def feed(self, times: np.ndarray, detectors: np.ndarray) -> None:
        times = np.asarray(times, dtype=np.int64)
        detectors = np.asarray(detectors)
        _check_sorted(times, self._last)
        if len(times) == 0:
            return
        self._last = int(times[-1])
        for d in self._buf:
            t = times[detectors == d]
            self.n[d] += len(t)
            self._buf[d] = np.concatenate((self._buf[d], t))
        # later tags are >= _last, so triggers with t + reach_hi < _last are complete
        self._process(self._last - self.reach_hi)

    def _hits(self, trig: np.ndarray, other: np.ndarray, edges: np.ndarray):
        lo = np.searchsorted(other, trig + edges[0], side="left")
        hi = np.searchsorted(other, trig + edges[-1], side="left")
        owner, idx = _expand(lo, hi)
        dt = other[idx] - trig[owner]
        col = np.searchsorted(edges, dt, side="right") - 1
        ok = (col >= 0) & (col < len(edges) - 1)
        m = sparse.csr_matrix((np.ones(int(ok.sum()), dtype=np.int64), (owner[ok], col[ok])),
                              shape=(len(trig), len(edges) - 1))
        return m

    def _process(self, limit: float | None) -> None:
        trig_all = self._buf[self.trigger]
        k = len(trig_all) if limit is None else int(np.searchsorted(trig_all, limit, side="left"))
        if k == 0:
            return
        trig = trig_all[:k]
        a = self._hits(trig, self._buf[self.partner], self.e1)
        for b in self.bob:
            bm = self._hits(trig, self._buf[b], self.e2)
            self.counts[b] += (a.T @ bm).toarray()
        self._buf[self.trigger] = trig_all[k:]
        oldest = self._buf[self.trigger][0] if len(self._buf[self.trigger]) else (self._last or 0) - self.reach_hi
        cut = oldest + self.reach_lo
        for d in (self.partner, *self.bob):
            buf = self._buf[d]
            self._buf[d] = buf[np.searchsorted(buf, cut, side="left"):]

    def result(self, duration: float) -> dict[int, Histogram2D]:
        self._process(None)
        return {b: Histogram2D(self.e1, self.e2, self.counts[b].copy(), self.n[self.trigger],
                               self.n[self.partner], self.n[b], float(duration)) for b in self.bob}


def g3_histogram(tags: TagStream, bin1: float, bin2: float, window1: tuple[float, float],
                 window2: tuple[float, float], bob: tuple[int, ...] = (Detector.D3, Detector.D4),
                 chunk: int = DEFAULT_CHUNK) -> dict[int, Histogram2D]:
    """Third-order correlation around each D1 trigger, one histogram per Bob detector."""
    acc = G3Accumulator(_edges(*window1, bin1), _edges(*window2, bin2), bob)
    for t, d in tags.chunks(chunk):
        acc.feed(t, d)
    return acc.result(tags.duration)


def fidelity_ratio(target: Histogram2D, orth: Histogram2D, tau1: float = 0.0,
                   tau2: float = 0.0) -> tuple[float, float]:
    """g3_target / (g3_target + g3_orth) in one bin, with its counting error."""
    i, j = target.bin_index(tau1, tau2)
    ct, co = float(target.counts[i, j]), float(orth.counts[i, j])
    et, eo = float(target.expected[i, j]), float(orth.expected[i, j])
    if ct + co == 0 or et == 0 or eo == 0:
        return math.nan, math.nan
    x, y = ct / et, co / eo
    f = x / (x + y)
    # d f/d ct = y / ((x+y)^2 et), d f/d co = -x / ((x+y)^2 eo); Poisson variances
    var = (y / ((x + y) ** 2 * et)) ** 2 * ct + (x / ((x + y) ** 2 * eo)) ** 2 * co
    return f, math.sqrt(var)


def time_shards(tags: TagStream, n: int) -> list[TagStream]:
    """Cut a stream into ``n`` equal-duration shards, each re-based to start at 0."""
    if n < 1:
        raise InvalidInputError("need at least one shard")
    edges = np.linspace(0, tags.duration, n + 1).round().astype(np.int64)
    cuts = np.searchsorted(tags.times, edges, side="left")
    return [TagStream(tags.times[a:b] - edges[k], tags.detectors[a:b], int(edges[k + 1] - edges[k]))
            for k, (a, b) in enumerate(zip(cuts[:-1], cuts[1:]))]


def fidelity_ratio_batched(tags: TagStream, bin1: float, bin2: float, window1: tuple[float, float],
                           window2: tuple[float, float], tau1: float = 0.0, tau2: float = 0.0,
                           n_batches: int = 20, target: int = Detector.D3,
                           orth: int = Detector.D4) -> tuple[float, float]:
    """Fidelity ratio in one bin with a delete-one-shard jackknife error.

    Triples that share a photon are correlated, so Poisson errors on the
    counts understate the spread; the jackknife over time shards does not.
    Triples straddling a shard edge are dropped (a window per edge).
    """
    if n_batches < 2:
        raise InvalidInputError("jackknife needs at least two shards")
    per = []
    for shard in time_shards(tags, n_batches):
        hs = g3_histogram(shard, bin1, bin2, window1, window2, bob=(target, orth))
        i, j = hs[target].bin_index(tau1, tau2)
        per.append((hs[target].counts[i, j], hs[orth].counts[i, j], hs[target].nb, hs[orth].nb))
    arr = np.array(per, dtype=float)

    def ratio(ct, co, nt, no):
        x, y = ct * no, co * nt
        return x / (x + y) if x + y > 0 else math.nan

    tot = arr.sum(axis=0)
    f = ratio(*tot)
    loo = np.array([ratio(*(tot - row)) for row in arr])
    n = len(arr)
    sigma = math.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2))
    return f, sigma
