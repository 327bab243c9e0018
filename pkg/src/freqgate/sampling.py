"""Coordinate-wise slice sampling with stepping out and shrinkage, plus chain diagnostics."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

log = logging.getLogger(__name__)


class NonFiniteInitError(ValueError):
    """The log density is not finite at the starting point."""


@dataclass(frozen=True)
class SliceConfig:
    widths: np.ndarray | float = 1.0
    max_step_outs: int = 32
    burn_in: int = 1024
    # None picks the smallest stride whose lag-1 autocorrelation of the
    # monitored statistic falls below ``target_lag1``
    thinning: int | None = None
    target_lag1: float = 0.5
    pilot: int = 512
    max_thinning: int = 64


@dataclass
class PosteriorChain:
    samples: np.ndarray
    log_density: np.ndarray
    burn_in: int
    thinning: int
    statistic: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)
    evaluations: int = 0

    def __len__(self) -> int:
        return len(self.samples)


def slice_sweep(x, logp, log_px, widths, max_step_outs, rng, counter):
    """One random-scan pass over all coordinates; returns (x, log p(x))."""
    x = x.copy()
    for d in rng.permutation(x.size):
        w = widths[d]
        log_y = log_px - rng.exponential()
        x0 = x[d]
        u = rng.uniform()
        lo, hi = x0 - w * u, x0 + w * (1.0 - u)
        j = int(np.floor(max_step_outs * rng.uniform()))
        k = max_step_outs - 1 - j

        def f(val):
            counter[0] += 1
            x[d] = val
            return logp(x)

        while j > 0 and f(lo) > log_y:
            lo -= w
            j -= 1
        while k > 0 and f(hi) > log_y:
            hi += w
            k -= 1
        while True:
            cand = rng.uniform(lo, hi)
            lp = f(cand)
            if lp > log_y:
                log_px = lp
                break
            if cand < x0:
                lo = cand
            elif cand > x0:
                hi = cand
            else:
                raise RuntimeError("slice shrank onto the current point")
    return x, log_px


def slice_sample(
    target: Callable[[np.ndarray], float],
    init,
    n: int,
    config: SliceConfig | None = None,
    seed: int = 0,
    statistic: Callable[[np.ndarray], float] | None = None,
    progress: Callable[[int, int], None] | None = None,
) -> PosteriorChain:
    """Draw ``n`` post-burn-in, post-thinning samples from ``exp(target)``.

    ``statistic`` (default: the log density) is the scalar series used to
    choose the thinning stride and reported in the diagnostics.
    """
    cfg = config or SliceConfig()
    rng = np.random.default_rng(seed)
    x = np.array(init, dtype=float)
    lp = target(x)
    if not np.isfinite(lp):
        raise NonFiniteInitError(f"log density at the initial point is {lp}")
    widths = np.broadcast_to(np.asarray(cfg.widths, dtype=float), x.shape).copy()
    counter = [0]

    def stat(z, lpz):
        return lpz if statistic is None else statistic(z)

    for i in range(cfg.burn_in):
        x, lp = slice_sweep(x, target, lp, widths, cfg.max_step_outs, rng, counter)
        if progress:
            progress(i, cfg.burn_in)

    thin = cfg.thinning
    burned = cfg.burn_in
    if thin is None:
        pilot = []
        for _ in range(cfg.pilot):
            x, lp = slice_sweep(x, target, lp, widths, cfg.max_step_outs, rng, counter)
            pilot.append(stat(x, lp))
        burned += cfg.pilot
        thin = choose_thinning(np.array(pilot), cfg.target_lag1, cfg.max_thinning)
        log.info("thinning stride %d chosen from %d pilot sweeps", thin, cfg.pilot)

    samples = np.empty((n, x.size))
    dens = np.empty(n)
    stats = np.empty(n)
    for i in range(n):
        for _ in range(thin):
            x, lp = slice_sweep(x, target, lp, widths, cfg.max_step_outs, rng, counter)
        samples[i], dens[i], stats[i] = x, lp, stat(x, lp)
        if progress:
            progress(i, n)

    chain = PosteriorChain(samples, dens, burned, thin, stats, evaluations=counter[0])
    chain.diagnostics = chain_diagnostics(samples, stats)
    return chain


def autocorrelation(x: np.ndarray) -> np.ndarray:
    """Normalised autocorrelation function via FFT."""
    x = np.asarray(x, dtype=float)
    n = x.size
    x = x - x.mean()
    if not np.any(x):
        return np.concatenate([[1.0], np.zeros(n - 1)])
    f = np.fft.rfft(x, 2 * n)
    acf = np.fft.irfft(f * np.conj(f))[:n]
    return acf / acf[0]


def choose_thinning(series: np.ndarray, target_lag1: float = 0.5, max_thinning: int = 64) -> int:
    acf = autocorrelation(series)
    for s in range(1, min(max_thinning, len(acf) - 1) + 1):
        if acf[s] < target_lag1:
            return s
    return max_thinning


def effective_sample_size(x: np.ndarray) -> float:
    """ESS with Geyer's initial positive sequence truncation."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 4 or np.ptp(x) == 0:
        return float(n)
    rho = autocorrelation(x)
    tau = -1.0
    for t in range(0, n - 1, 2):
        pair = rho[t] + rho[t + 1]
        if pair < 0:
            break
        tau += 2.0 * pair
    return float(n / max(tau, 1e-12))


def chain_diagnostics(samples: np.ndarray, stats: np.ndarray | None = None) -> dict:
    samples = np.atleast_2d(samples)
    out = {
        "ess": [effective_sample_size(samples[:, j]) for j in range(samples.shape[1])],
        "lag1": [float(autocorrelation(samples[:, j])[1]) if len(samples) > 1 else 0.0
                 for j in range(samples.shape[1])],
    }
    if stats is not None and len(stats) > 3:
        half = len(stats) // 2
        a, b = stats[:half], stats[half:]
        se = np.sqrt(np.var(a) / max(effective_sample_size(a), 1) + np.var(b) / max(effective_sample_size(b), 1))
        out["statistic_lag1"] = float(autocorrelation(stats)[1])
        out["statistic_ess"] = effective_sample_size(stats)
        out["split_half_means"] = [float(a.mean()), float(b.mean())]
        out["split_half_z"] = float(abs(a.mean() - b.mean()) / se) if se > 0 else 0.0
    return out
