"""Classical-light characterisation of a frequency-bin multiport.

Amplitudes come from single-line probes (output power at bin n is
``|V[n, u]|^2`` per unit input power). Phases come from two-line probes whose
relative phase ``alpha`` is scanned: the output fringe
``|V[n, u] + exp(i alpha) V[n, w]|^2`` peaks at ``alpha = phi_nu - phi_nw``,
so each scan fixes phase differences along a row. Rows are tied to absolute
values through gauge phases chosen a priori.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import constants
from .optics import CNOT, ModeTransform, QubitModeMap, gate_metrics, wrap_phase

DEFAULT_FLOOR_DB = 60.0
# fringe depth, relative to the brightest fringe mean on the same output bin,
# below which the scan carries no usable phase
MIN_CONTRAST = 0.05

DEFAULT_GAUGE = {slot: float(constants.DESIGN_PHASE[slot]) for slot in constants.FIXED_PHASE_SLOTS}


@dataclass(frozen=True)
class ProbeResult:
    input_bins: tuple[int, ...]
    output_powers: Mapping[int, float]
    relative_phase: float | None = None
    input_power: float = 1.0


@dataclass
class ReconstructedMatrix:
    amplitude_mean: np.ndarray
    amplitude_std: np.ndarray
    phase_mean: np.ndarray  # NaN where undetermined
    phase_std: np.ndarray
    phase_determined: np.ndarray  # bool
    phase_fixed: np.ndarray  # bool, gauge-fixed slots
    n_repeats: int = 1
    amplitude_determined: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.amplitude_determined is None:
            self.amplitude_determined = ~np.isnan(self.amplitude_mean)

    @property
    def undetermined(self) -> np.ndarray:
        return ~self.phase_determined

    def to_complex(self, fill_phases: np.ndarray | None = None, fill_amplitude: float | None = None) -> np.ndarray:
        """Complex 4x4 block. Undetermined phases must be supplied via ``fill_phases``."""
        ph = np.array(self.phase_mean, dtype=float)
        if np.any(self.undetermined):
            if fill_phases is None:
                raise ValueError("undetermined phases present; pass fill_phases")
            ph[self.undetermined] = np.asarray(fill_phases, dtype=float)[self.undetermined]
        amp = np.array(self.amplitude_mean, dtype=float)
        missing = ~self.amplitude_determined
        if np.any(missing):
            if fill_amplitude is None:
                raise ValueError("undetermined amplitudes present; pass fill_amplitude")
            amp[missing] = fill_amplitude
        return amp * np.exp(1j * ph)

    @classmethod
    def from_arrays(cls, amp, amp_std, phase, phase_std, gauge: Mapping = DEFAULT_GAUGE, n_repeats: int = 1):
        phase = np.asarray(phase, dtype=float)
        fixed = np.zeros((4, 4), dtype=bool)
        for slot in gauge:
            fixed[slot] = True
        return cls(np.asarray(amp, float), np.asarray(amp_std, float), phase, np.asarray(phase_std, float),
                   ~np.isnan(phase), fixed, n_repeats)


def _noisy(power: np.ndarray, sigma: float, rng: np.random.Generator | None) -> np.ndarray:
    if sigma <= 0:
        return power
    return np.clip(power * (1.0 + sigma * rng.standard_normal(power.shape)), 0.0, None)


def _record(v: ModeTransform, power: np.ndarray, floor_db: float) -> dict:
    peak = power.max()
    keep = power >= peak * 10 ** (-floor_db / 10) if peak > 0 else np.zeros_like(power, bool)
    return {int(n): float(p) for n, p, k in zip(v.grid.bins, power, keep) if k}


def probe_single_line(v: ModeTransform, u: int, floor_db: float = DEFAULT_FLOOR_DB, input_power: float = 1.0,
                      noise_sigma: float = 0.0, rng: np.random.Generator | None = None) -> ProbeResult:
    col = v.entries[:, v.grid.index(u)]
    power = _noisy(input_power * np.abs(col) ** 2, noise_sigma, rng)
    return ProbeResult((u,), _record(v, power, floor_db), None, input_power)


def probe_phase_scan(v: ModeTransform, u: int, w: int, phases: Sequence[float],
                     floor_db: float = DEFAULT_FLOOR_DB, input_power: float = 1.0,
                     noise_sigma: float = 0.0, rng: np.random.Generator | None = None) -> list[ProbeResult]:
    """Two equal lines at bins u and w, the second delayed in phase by each ``alpha``."""
    cu = v.entries[:, v.grid.index(u)]
    cw = v.entries[:, v.grid.index(w)]
    out = []
    for alpha in phases:
        power = _noisy(input_power * np.abs(cu + np.exp(1j * alpha) * cw) ** 2, noise_sigma, rng)
        out.append(ProbeResult((u, w), _record(v, power, floor_db), float(alpha), input_power))
    return out


def fit_fringe(alpha: np.ndarray, power: np.ndarray) -> tuple[float, float, float]:
    """Least-squares ``a + b cos(alpha - c)``; returns (a, b, c) with b >= 0."""
    alpha = np.asarray(alpha, dtype=float)
    design = np.column_stack([np.ones_like(alpha), np.cos(alpha), np.sin(alpha)])
    (a, bc, bs), *_ = np.linalg.lstsq(design, np.asarray(power, dtype=float), rcond=None)
    return float(a), float(np.hypot(bc, bs)), float(np.arctan2(bs, bc))


def _single_acquisition(probes: Sequence[ProbeResult], modes: QubitModeMap, gauge: Mapping,
                        min_contrast: float):
    bins = modes.bins
    pos = {b: i for i, b in enumerate(bins)}
    amp = np.full((4, 4), np.nan)
    for pr in probes:
        if len(pr.input_bins) == 1 and pr.input_bins[0] in pos:
            col = pos[pr.input_bins[0]]
            for row, n in enumerate(bins):
                if n in pr.output_powers:
                    amp[row, col] = np.sqrt(pr.output_powers[n] / pr.input_power)

    # group scans by input pair, then fit one fringe per output row
    scans: dict = {}
    for pr in probes:
        if len(pr.input_bins) == 2 and all(b in pos for b in pr.input_bins):
            scans.setdefault(pr.input_bins, []).append(pr)
    fits = {row: [] for row in range(4)}
    for (u, w), group in scans.items():
        alpha = np.array([p.relative_phase for p in group])
        for row, n in enumerate(bins):
            if not all(n in p.output_powers for p in group):
                continue
            power = np.array([p.output_powers[n] / p.input_power for p in group])
            fits[row].append((pos[u], pos[w], *fit_fringe(alpha, power)))
    edges = {row: [] for row in range(4)}
    for row, rows in fits.items():
        if not rows:
            continue
        brightest = max(f[2] for f in rows)
        for cu, cw, a, b, c in rows:
            if brightest > 0 and b >= min_contrast * brightest:
                # fringe maximum at alpha = phi[n, u] - phi[n, w]
                edges[row].append((cu, cw, c))

    phase = np.full((4, 4), np.nan)
    fixed = np.zeros((4, 4), dtype=bool)
    for (r, c), val in gauge.items():
        phase[r, c] = val
        fixed[r, c] = True
    for row in range(4):
        known = [c for c in range(4) if fixed[row, c]]
        queue = list(known)
        while queue:
            cur = queue.pop(0)
            for cu, cw, diff in edges[row]:
                if cu == cur and np.isnan(phase[row, cw]):
                    phase[row, cw] = phase[row, cu] - diff
                    queue.append(cw)
                elif cw == cur and np.isnan(phase[row, cu]):
                    phase[row, cu] = phase[row, cw] + diff
                    queue.append(cu)
    phase = np.where(np.isnan(phase), np.nan, wrap_phase(np.nan_to_num(phase)))
    return amp, phase, fixed


def reconstruct(acquisitions: Sequence[Sequence[ProbeResult]], modes: QubitModeMap | None = None,
                gauge: Mapping = DEFAULT_GAUGE, min_contrast: float = MIN_CONTRAST) -> ReconstructedMatrix:
    """Average the per-acquisition reconstructions (circular statistics for phases).

    ``acquisitions`` is a list of probe sets, one per repeated measurement; a
    flat list of :class:`ProbeResult` is treated as a single acquisition.
    """
    modes = modes or QubitModeMap()
    if acquisitions and isinstance(acquisitions[0], ProbeResult):
        acquisitions = [acquisitions]
    amps, phases = [], []
    fixed = None
    for probes in acquisitions:
        a, p, fixed = _single_acquisition(probes, modes, gauge, min_contrast)
        amps.append(a)
        phases.append(p)
    amps, phases = np.array(amps), np.array(phases)
    determined = ~np.any(np.isnan(phases), axis=0)
    z = np.exp(1j * np.where(np.isnan(phases), 0.0, phases)).mean(axis=0)
    pmean = np.where(determined, wrap_phase(np.angle(z)), np.nan)
    pstd = np.where(determined, np.sqrt(-2.0 * np.log(np.clip(np.abs(z), 1e-300, 1.0))), np.nan)
    pstd[fixed] = 0.0
    pmean[fixed] = phases[0][fixed]
    amp_ok = ~np.any(np.isnan(amps), axis=0)
    return ReconstructedMatrix(
        np.where(amp_ok, amps.mean(axis=0), np.nan),
        np.where(amp_ok, amps.std(axis=0), np.nan),
        pmean,
        pstd,
        determined,
        fixed,
        len(amps),
        amp_ok,
    )


def acquire(v: ModeTransform, modes: QubitModeMap | None = None, n_phases: int = 16,
            floor_db: float = DEFAULT_FLOOR_DB, noise_sigma: float = 0.0,
            rng: np.random.Generator | None = None, input_power: float = 1.0) -> list[ProbeResult]:
    """Single-line probe of every computational input plus scans of every input pair."""
    modes = modes or QubitModeMap()
    if n_phases < 8:
        raise ValueError("need at least 8 scan phases")
    alphas = np.arange(n_phases) * 2 * np.pi / n_phases
    probes = [probe_single_line(v, u, floor_db, input_power, noise_sigma, rng) for u in modes.bins]
    for u, w in itertools.combinations(modes.bins, 2):
        probes += probe_phase_scan(v, u, w, alphas, floor_db, input_power, noise_sigma, rng)
    return probes


def characterize(v: ModeTransform, modes: QubitModeMap | None = None, repeats: int = 5, n_phases: int = 16,
                 noise_sigma: float = 0.0, seed: int = 0, gauge: Mapping = DEFAULT_GAUGE,
                 floor_db: float = DEFAULT_FLOOR_DB, min_contrast: float = MIN_CONTRAST) -> ReconstructedMatrix:
    modes = modes or QubitModeMap()
    rng = np.random.default_rng(seed)
    acqs = [acquire(v, modes, n_phases, floor_db, noise_sigma, rng) for _ in range(repeats)]
    return reconstruct(acqs, modes, gauge, min_contrast)


def inferred_metrics(rec: ReconstructedMatrix, target: np.ndarray = CNOT, fill_phases: np.ndarray | None = None,
                     seed: int | None = 0) -> tuple[float, float]:
    """(fidelity, success) of the reconstruction; undetermined phases drawn at random unless given."""
    if fill_phases is None:
        fill_phases = np.random.default_rng(seed).uniform(-np.pi, np.pi, (4, 4))
    p, f = gate_metrics(rec.to_complex(fill_phases, fill_amplitude=0.0), target)
    return f, p


def coherent_reference() -> ReconstructedMatrix:
    """The coherent-state reference matrix as a reconstruction object."""
    return ReconstructedMatrix.from_arrays(
        constants.COHERENT_AMP,
        constants.COHERENT_AMP_STD,
        constants.COHERENT_PHASE,
        constants.COHERENT_PHASE_STD,
        n_repeats=5,
    )
