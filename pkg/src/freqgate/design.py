"""Constrained search for EOM / pulse-shaper circuits realising a target gate.

The success probability P is maximised subject to ``F >= fidelity_floor``
with an exterior quadratic penalty whose weight grows tenfold per round.
Each restart is a quasi-Newton (BFGS) run on central finite-difference
gradients; all the perturbed parameter vectors of one gradient are pushed
through the circuit as a single numpy batch.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import jv

from .optics import (
    CNOT,
    DEFAULT_GUARD,
    CircuitSpec,
    EomElement,
    FrequencyGrid,
    QubitModeMap,
    ShaperElement,
    circuit_metrics,
    fidelity,
    project_computational,
    compose,
    success_probability,
    two_photon_map,
)

log = logging.getLogger(__name__)

TOPOLOGIES = {
    "1PS": ("ps",),
    "2EOM/1PS": ("eom", "ps", "eom"),
    "3EOM/2PS": ("eom", "ps", "eom", "ps", "eom"),
}


@dataclass(frozen=True)
class DesignProblem:
    topology: tuple[str, ...] = TOPOLOGIES["2EOM/1PS"]
    target: np.ndarray = field(default_factory=lambda: CNOT.copy())
    fidelity_floor: float = 0.9999
    modes: QubitModeMap = field(default_factory=QubitModeMap)
    grid: FrequencyGrid | None = None
    shaped_bins: tuple[int, ...] | None = None

    def __post_init__(self):
        topo = TOPOLOGIES.get(self.topology, self.topology) if isinstance(self.topology, str) else self.topology
        topo = tuple(str(t).lower() for t in topo)
        if not topo or any(t not in ("eom", "ps") for t in topo):
            raise ValueError(f"bad topology {self.topology!r}")
        object.__setattr__(self, "topology", topo)
        if not 0 < self.fidelity_floor <= 1:
            raise ValueError("fidelity_floor must lie in (0, 1]")
        target = np.asarray(self.target, dtype=complex)
        if target.shape != (4, 4):
            raise ValueError("target must be 4x4")
        object.__setattr__(self, "target", target)
        grid = self.grid or FrequencyGrid.around(self.modes.bins, DEFAULT_GUARD)
        self.modes.check(grid)
        object.__setattr__(self, "grid", grid)
        bins = grid.bins if self.shaped_bins is None else self.shaped_bins
        bins = tuple(int(b) for b in bins)
        for b in bins:
            grid.index(b)
        object.__setattr__(self, "shaped_bins", bins)

    @property
    def n_params(self) -> int:
        return sum(2 if t == "eom" else len(self.shaped_bins) for t in self.topology)

    def with_modes(self, modes: QubitModeMap) -> "DesignProblem":
        return replace(self, modes=modes, grid=None, shaped_bins=None)


@dataclass(frozen=True)
class OptimizerConfig:
    restarts: int = 64
    m_range: tuple[float, float] = (0.0, 3.0)
    fd_step: float = 1e-6
    penalty_start: float = 1.0
    penalty_growth: float = 10.0
    max_rounds: int = 12
    violation_tol: float = 1e-6
    # the penalty aims at floor + margin so the returned point clears the floor itself
    floor_margin: float = 1e-6
    maxiter: int = 3000
    gtol: float = 1e-9


@dataclass
class DesignResult:
    circuit: CircuitSpec
    achieved_fidelity: float
    achieved_success: float
    v_projected: np.ndarray
    feasible: bool
    params: np.ndarray
    optimizer_trace: list = field(default_factory=list)
    modes: QubitModeMap = field(default_factory=QubitModeMap)

    @property
    def total_modulation(self) -> float:
        return sum(e.modulation_index for e in self.circuit.elements if isinstance(e, EomElement))

    def rank_key(self):
        return (not self.feasible, -self.achieved_success, -self.achieved_fidelity, self.total_modulation)


# -- parameter decoding -----------------------------------------------------


def decode(params: np.ndarray, problem: DesignProblem) -> CircuitSpec:
    params = np.asarray(params, dtype=float)
    if params.shape != (problem.n_params,):
        raise ValueError(f"expected {problem.n_params} parameters, got {params.shape}")
    els, i = [], 0
    for kind in problem.topology:
        if kind == "eom":
            els.append(EomElement(abs(params[i]), params[i + 1]))
            i += 2
        else:
            n = len(problem.shaped_bins)
            els.append(ShaperElement(dict(zip(problem.shaped_bins, params[i:i + n]))))
            i += n
    return CircuitSpec(tuple(els), problem.grid)


def encode(circuit: CircuitSpec, problem: DesignProblem) -> np.ndarray:
    out = []
    for e in circuit.elements:
        if isinstance(e, EomElement):
            out += [e.modulation_index, e.rf_phase]
        else:
            out += [e.phase(b) for b in problem.shaped_bins]
    return np.array(out, dtype=float)


class _BatchCircuit:
    """Evaluates the projected 4x4 block for many parameter vectors at once."""

    def __init__(self, problem: DesignProblem):
        self.problem = problem
        g = problem.grid
        self.size = g.size
        n = g.size
        i, j = np.indices((n, n))
        self.lag = i - j
        self.lag_index = self.lag + n - 1
        self.k = np.arange(-(n - 1), n)
        self.io = np.array([g.index(b) for b in problem.modes.bins])
        self.shaped = np.array([g.index(b) for b in problem.shaped_bins])

    def v4(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        b = x.shape[0]
        state = np.zeros((b, self.size, 4), dtype=complex)
        state[:, self.io, np.arange(4)] = 1.0
        i = 0
        for kind in self.problem.topology:
            if kind == "eom":
                m, th = np.abs(x[:, i]), x[:, i + 1]
                coef = jv(self.k[None, :], m[:, None]) * np.exp(1j * self.k[None, :] * th[:, None])
                state = np.matmul(coef[:, self.lag_index], state)
                i += 2
            else:
                ns = len(self.shaped)
                phase = np.ones((b, self.size), dtype=complex)
                phase[:, self.shaped] = np.exp(1j * x[:, i:i + ns])
                state = state * phase[:, :, None]
                i += ns
        return state[:, self.io, :]

    def _eom(self, m: float, th: float) -> np.ndarray:
        coef = jv(self.k, abs(m)) * np.exp(1j * self.k * th)
        return coef[self.lag_index]

    def fd_v4(self, x: np.ndarray, h: float) -> np.ndarray:
        """Blocks for ``x``, ``x + h e_j`` (j = 0..P-1), then ``x - h e_j``.

        Same values as ``v4(x + steps)``, but built from cached prefix and
        suffix products: a shaper phase step is a rank-one update and an
        EOM step only rebuilds that one modulator.
        """
        topo = self.problem.topology
        n, ns, dim = self.size, len(self.shaped), x.size
        mats, i = [], 0
        for kind in topo:
            if kind == "eom":
                mats.append(self._eom(x[i], x[i + 1]))
                i += 2
            else:
                d = np.ones(n, dtype=complex)
                d[self.shaped] = np.exp(1j * x[i:i + ns])
                mats.append(d)
                i += ns

        def apply(mat, s):  # mat acting on an N x 4 state
            return mat @ s if mat.ndim == 2 else mat[:, None] * s

        pre = [np.eye(n, dtype=complex)[:, self.io]]
        for mat in mats:
            pre.append(apply(mat, pre[-1]))
        suf = [None] * (len(mats) + 1)
        suf[-1] = np.eye(n, dtype=complex)[self.io, :]
        for p in range(len(mats) - 1, -1, -1):
            suf[p] = suf[p + 1] @ mats[p] if mats[p].ndim == 2 else suf[p + 1] * mats[p][None, :]
        base = suf[0] @ pre[0]

        out = np.empty((2 * dim + 1, 4, 4), dtype=complex)
        out[0] = base
        i = 0
        for p, kind in enumerate(topo):
            left, right = suf[p + 1], pre[p]
            if kind == "eom":
                m, th = x[i], x[i + 1]
                for j, sign in ((0, 1), (1, 1), (0, -1), (1, -1)):
                    mm, tt = (m + sign * h, th) if j == 0 else (m, th + sign * h)
                    slot = 1 + i + j + (0 if sign > 0 else dim)
                    out[slot] = left @ self._eom(mm, tt) @ right
                i += 2
            else:
                d = mats[p][self.shaped]
                outer = left[:, self.shaped].T[:, :, None] * right[self.shaped, :][:, None, :]
                for sign in (1, -1):
                    delta = d * (np.exp(1j * sign * h) - 1.0)
                    slot = 1 + i + (0 if sign > 0 else dim)
                    out[slot:slot + ns] = base[None] + delta[:, None, None] * outer
                i += ns
        return out

    def fd_metrics(self, x: np.ndarray, h: float):
        return self._metrics_of(self.fd_v4(x, h))

    def metrics(self, x: np.ndarray):
        return self._metrics_of(self.v4(x))

    def _metrics_of(self, v4: np.ndarray):
        w = two_photon_map(v4)
        p = success_probability(w)
        overlap = np.einsum("ij,bij->b", np.conj(self.problem.target), w)
        with np.errstate(divide="ignore", invalid="ignore"):
            f = np.where(p > 0, np.abs(overlap) ** 2 / (16.0 * p), 0.0)
        return np.atleast_1d(p), np.atleast_1d(f)


def objective(params: np.ndarray, problem: DesignProblem) -> tuple[float, float]:
    """(success probability, fidelity) of the decoded circuit."""
    circuit = decode(params, problem)
    v4 = project_computational(compose(circuit), problem.modes)
    w = two_photon_map(v4)
    return success_probability(w), fidelity(w, problem.target)


# -- optimisation -------------------------------------------------------------


def _random_start(problem: DesignProblem, cfg: OptimizerConfig, rng: np.random.Generator) -> np.ndarray:
    x = []
    for kind in problem.topology:
        if kind == "eom":
            x += [rng.uniform(*cfg.m_range), rng.uniform(-np.pi, np.pi)]
        else:
            x += list(rng.uniform(-np.pi, np.pi, len(problem.shaped_bins)))
    return np.array(x)


def _local_search(x0, batch: _BatchCircuit, floor: float, cfg: OptimizerConfig, trace: list):
    h = cfg.fd_step
    dim = x0.size
    target = min(floor + cfg.floor_margin, 1.0)
    x = x0.copy()
    lam = cfg.penalty_start
    for rnd in range(cfg.max_rounds):

        def fun(z, lam=lam):
            p, f = batch.fd_metrics(z, h)
            val = -p + lam * np.maximum(0.0, target - f) ** 2
            grad = (val[1:dim + 1] - val[dim + 1:]) / (2 * h)
            return val[0], grad

        res = minimize(fun, x, jac=True, method="BFGS", options={"maxiter": cfg.maxiter, "gtol": cfg.gtol})
        x = res.x
        p, f = batch.metrics(x)
        viol = max(0.0, floor - f[0])
        trace.append({"round": rnd, "penalty": lam, "success": float(p[0]), "fidelity": float(f[0]),
                      "iterations": int(res.nit)})
        if max(0.0, target - f[0]) < cfg.violation_tol and viol == 0.0:
            break
        lam *= cfg.penalty_growth
    return x


def _finish(x: np.ndarray, problem: DesignProblem, trace: list) -> DesignResult:
    circuit = decode(x, problem)
    v4 = project_computational(compose(circuit), problem.modes)
    w = two_photon_map(v4)
    p = success_probability(w)
    f = fidelity(w, problem.target) if p > 0 else 0.0
    return DesignResult(
        circuit=circuit,
        achieved_fidelity=f,
        achieved_success=p,
        v_projected=v4,
        feasible=bool(f >= problem.fidelity_floor),
        params=encode(circuit, problem),
        optimizer_trace=trace,
        modes=problem.modes,
    )


def run_restart(problem: DesignProblem, cfg: OptimizerConfig, seed: int, index: int) -> DesignResult:
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))
    batch = _BatchCircuit(problem)
    trace: list = []
    x = _local_search(_random_start(problem, cfg, rng), batch, problem.fidelity_floor, cfg, trace)
    for t in trace:
        t["restart"] = index
    return _finish(x, problem, trace)


def best_of(results: Sequence[DesignResult]) -> DesignResult:
    feasible = [r for r in results if r.feasible]
    if feasible:
        return min(feasible, key=DesignResult.rank_key)
    # infeasible: closest to the fidelity floor
    return max(results, key=lambda r: (r.achieved_fidelity, r.achieved_success))


def optimize(problem: DesignProblem, config: OptimizerConfig | None = None, seed: int = 0) -> DesignResult:
    """Best-of-multistart design; check ``result.feasible`` for the status."""
    cfg = config or OptimizerConfig()
    t0 = time.perf_counter()
    results = []
    for i in range(cfg.restarts):
        r = run_restart(problem, cfg, seed, i)
        log.debug("restart %d: P=%.6f F=%.7f feasible=%s", i, r.achieved_success, r.achieved_fidelity, r.feasible)
        results.append(r)
    best = best_of(results)
    trace = [t for r in results for t in r.optimizer_trace]
    best = replace(best, optimizer_trace=trace)
    log.info("design done in %.1fs: P=%.6f F=%.7f", time.perf_counter() - t0, best.achieved_success,
             best.achieved_fidelity)
    return best


def placement_search(problem: DesignProblem, candidates: Sequence[QubitModeMap],
                     config: OptimizerConfig | None = None, seed: int = 0) -> list[DesignResult]:
    """Optimise each candidate placement; feasible results first, by success."""
    if not candidates:
        raise ValueError("no candidate placements")
    results = [optimize(problem.with_modes(c), config, seed) for c in candidates]
    return sorted(results, key=DesignResult.rank_key)


def recheck(result: DesignResult, target: np.ndarray = CNOT) -> tuple[float, float]:
    """Recompute (P, F) of a result's circuit from scratch."""
    return circuit_metrics(result.circuit, result.modes, target)
