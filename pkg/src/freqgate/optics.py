"""Frequency-bin mode transformations, two-photon maps and gate metrics.

Bins sit at ``omega_n = omega_0 + n * delta_omega``. A :class:`ModeTransform`
holds the matrix ``V`` mapping input mode operators to output ones,
``b_n = sum_n' V[n, n'] a_n'``, over a finite window of bins. Phase
modulators (EOMs) couple neighbouring bins with Bessel weights; pulse
shapers apply a per-bin phase.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, Union

import numpy as np
from scipy.linalg import toeplitz
from scipy.special import jv

TWO_PI = 2.0 * np.pi

# ITU grid used in the experiment: 193.45 THz carrier, 25 GHz spacing.
DEFAULT_CENTER = TWO_PI * 193.45e12
DEFAULT_SPACING = TWO_PI * 25e9
DEFAULT_GUARD = 16

MODE_LABELS = ("C0", "C1", "T0", "T1")
COINCIDENCE_BASIS = ("C0T0", "C0T1", "C1T0", "C1T1")

CNOT = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
)


class GridMismatchError(ValueError):
    pass


class UndefinedFidelityError(ValueError):
    pass


def wrap_phase(x):
    """Wrap angles into (-pi, pi]."""
    w = np.pi - np.mod(np.pi - np.asarray(x, dtype=float), TWO_PI)
    return float(w) if np.ndim(w) == 0 else w


@dataclass(frozen=True)
class FrequencyGrid:
    """Contiguous window of bins ``n_min..n_max`` (inclusive)."""

    n_min: int
    n_max: int
    center_frequency: float = DEFAULT_CENTER
    bin_spacing: float = DEFAULT_SPACING

    def __post_init__(self):
        if not self.bin_spacing > 0:
            raise ValueError("bin_spacing must be positive")
        if not self.n_min < self.n_max:
            raise ValueError("n_min must be smaller than n_max")

    @classmethod
    def around(cls, bins: Iterable[int], guard: int = DEFAULT_GUARD, **kw) -> "FrequencyGrid":
        """Window spanning ``bins`` plus ``guard`` extra bins on each side."""
        bins = [int(b) for b in bins]
        return cls(min(bins) - guard, max(bins) + guard, **kw)

    @property
    def size(self) -> int:
        return self.n_max - self.n_min + 1

    @property
    def bins(self) -> np.ndarray:
        return np.arange(self.n_min, self.n_max + 1)

    def index(self, n: int) -> int:
        if not self.n_min <= n <= self.n_max:
            raise IndexError(f"bin {n} outside window [{self.n_min}, {self.n_max}]")
        return int(n) - self.n_min

    def frequency(self, n):
        return self.center_frequency + np.asarray(n) * self.bin_spacing

    def contains(self, n: int) -> bool:
        return self.n_min <= n <= self.n_max


@dataclass(frozen=True)
class QubitModeMap:
    """Bins carrying the logical modes C0, C1, T0, T1."""

    c0: int = 0
    c1: int = 6
    t0: int = 7
    t1: int = 8
    pump_labels: Mapping[str, float] | None = field(default=None, compare=False)

    def __post_init__(self):
        if len(set(self.bins)) != 4:
            raise ValueError(f"mode bins must be distinct, got {self.bins}")

    @property
    def bins(self) -> tuple[int, int, int, int]:
        return (self.c0, self.c1, self.t0, self.t1)

    def check(self, grid: FrequencyGrid) -> None:
        for b in self.bins:
            grid.index(b)


@dataclass(frozen=True)
class ModeTransform:
    grid: FrequencyGrid
    entries: np.ndarray

    def __post_init__(self):
        a = np.array(self.entries, dtype=complex)
        if a.shape != (self.grid.size, self.grid.size):
            raise ValueError(
                f"entries shape {a.shape} does not match grid size {self.grid.size}"
            )
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    def __getitem__(self, key: tuple[int, int]) -> complex:
        n, m = key
        return complex(self.entries[self.grid.index(n), self.grid.index(m)])

    def column_norm_deviation(self, bins: Iterable[int] | None = None) -> float:
        """Largest ``|1 - ||column|| |`` over the given input bins."""
        cols = self.grid.bins if bins is None else list(bins)
        idx = [self.grid.index(b) for b in cols]
        norms = np.linalg.norm(self.entries[:, idx], axis=0)
        return float(np.max(np.abs(1.0 - norms)))

    @classmethod
    def identity(cls, grid: FrequencyGrid) -> "ModeTransform":
        return cls(grid, np.eye(grid.size, dtype=complex))


@dataclass(frozen=True)
class EomElement:
    """Single-harmonic phase modulator driven at the bin spacing."""

    modulation_index: float
    rf_phase: float = 0.0

    def __post_init__(self):
        if not self.modulation_index >= 0:
            raise ValueError("modulation_index must be >= 0")
        object.__setattr__(self, "modulation_index", float(self.modulation_index))
        object.__setattr__(self, "rf_phase", wrap_phase(self.rf_phase))


@dataclass(frozen=True)
class ShaperElement:
    """Line-by-line spectral phase; bins not listed get zero phase."""

    phases: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self):
        items = tuple(sorted((int(k), wrap_phase(v)) for k, v in dict(self.phases).items()))
        object.__setattr__(self, "phases", dict(items))

    def __hash__(self):
        return hash(tuple(self.phases.items()))

    def phase(self, n: int) -> float:
        return self.phases.get(int(n), 0.0)


Element = Union[EomElement, ShaperElement]


@dataclass(frozen=True)
class CircuitSpec:
    """Elements in propagation order (first element acts first)."""

    elements: tuple
    grid: FrequencyGrid

    def __post_init__(self):
        els = tuple(self.elements)
        if not els:
            raise ValueError("circuit needs at least one element")
        for e in els:
            if not isinstance(e, (EomElement, ShaperElement)):
                raise TypeError(f"unknown circuit element {e!r}")
        object.__setattr__(self, "elements", els)

    @property
    def topology(self) -> tuple[str, ...]:
        return tuple("eom" if isinstance(e, EomElement) else "ps" for e in self.elements)

    def inverse(self) -> "CircuitSpec":
        """Element-wise inverse in reversed order (exact only on an infinite lattice)."""
        inv = []
        for e in reversed(self.elements):
            if isinstance(e, EomElement):
                inv.append(EomElement(e.modulation_index, e.rf_phase + np.pi))
            else:
                inv.append(ShaperElement({k: -v for k, v in e.phases.items()}))
        return CircuitSpec(tuple(inv), self.grid)

    def with_grid(self, grid: FrequencyGrid) -> "CircuitSpec":
        return CircuitSpec(self.elements, grid)


def eom_matrix(m: float, theta: float, size: int) -> np.ndarray:
    """Toeplitz Bessel matrix ``J_{n-n'}(m) exp(i (n-n') theta)``."""
    k = np.arange(size)
    col = jv(k, m) * np.exp(1j * k * theta)  # n - n' = k >= 0
    row = jv(-k, m) * np.exp(-1j * k * theta)
    return toeplitz(col, row)


def eom_transform(element: EomElement, grid: FrequencyGrid) -> ModeTransform:
    return ModeTransform(grid, eom_matrix(element.modulation_index, element.rf_phase, grid.size))


def ps_transform(element: ShaperElement, grid: FrequencyGrid) -> ModeTransform:
    phi = np.array([element.phase(n) for n in grid.bins])
    return ModeTransform(grid, np.diag(np.exp(1j * phi)))


def element_transform(element: Element, grid: FrequencyGrid) -> ModeTransform:
    if isinstance(element, EomElement):
        return eom_transform(element, grid)
    return ps_transform(element, grid)


def compose_transforms(transforms: Sequence[ModeTransform]) -> ModeTransform:
    """Cascade in propagation order: the last transform ends up leftmost."""
    if not transforms:
        raise ValueError("nothing to compose")
    grid = transforms[0].grid
    out = np.eye(grid.size, dtype=complex)
    for t in transforms:
        if t.grid != grid:
            raise GridMismatchError(f"grid {t.grid} differs from {grid}")
        out = t.entries @ out
    return ModeTransform(grid, out)


def compose(circuit: CircuitSpec) -> ModeTransform:
    return compose_transforms([element_transform(e, circuit.grid) for e in circuit.elements])


def project_computational(v: ModeTransform, modes: QubitModeMap) -> np.ndarray:
    """4x4 sub-block ordered (C0, C1, T0, T1); no renormalisation."""
    idx = [v.grid.index(b) for b in modes.bins]
    return np.array(v.entries[np.ix_(idx, idx)])


def embed_computational(v4: np.ndarray, modes: QubitModeMap, grid: FrequencyGrid | None = None) -> ModeTransform:
    """Place a 4x4 block back on a bin window, zeros elsewhere."""
    if grid is None:
        grid = FrequencyGrid(min(modes.bins), max(modes.bins))
    full = np.zeros((grid.size, grid.size), dtype=complex)
    idx = [grid.index(b) for b in modes.bins]
    full[np.ix_(idx, idx)] = np.asarray(v4, dtype=complex)
    return ModeTransform(grid, full)


def two_photon_map(v4: np.ndarray) -> np.ndarray:
    """Coincidence-basis transform W from a (C0, C1, T0, T1) ordered block.

    ``W[(r s), (k l)] = V[Cr, Ck] V[Ts, Tl] + V[Cr, Tl] V[Ts, Ck]``, the
    permanent of the 2x2 sub-block picked by outputs (Cr, Ts) and inputs
    (Ck, Tl). Rows/columns follow ``COINCIDENCE_BASIS``. Leading batch
    dimensions are allowed.
    """
    v4 = np.asarray(v4, dtype=complex)
    cc = v4[..., :2, :2]
    tt = v4[..., 2:, 2:]
    ct = v4[..., :2, 2:]
    tc = v4[..., 2:, :2]
    w = np.einsum("...rk,...sl->...rskl", cc, tt) + np.einsum("...rl,...sk->...rskl", ct, tc)
    return w.reshape(v4.shape[:-2] + (4, 4))


def success_probability(w: np.ndarray):
    w = np.asarray(w)
    p = np.sum(np.abs(w) ** 2, axis=(-2, -1)) / 4.0
    return float(p) if p.ndim == 0 else p


def fidelity(w: np.ndarray, target: np.ndarray = CNOT):
    w = np.asarray(w)
    p = np.sum(np.abs(w) ** 2, axis=(-2, -1)) / 4.0
    if np.any(p <= 0):
        raise UndefinedFidelityError("fidelity undefined for zero success probability")
    overlap = np.einsum("ij,...ij->...", np.conj(np.asarray(target)), w)
    f = np.abs(overlap) ** 2 / (16.0 * p)
    return float(f) if f.ndim == 0 else f


def gate_metrics(v4: np.ndarray, target: np.ndarray = CNOT) -> tuple[float, float]:
    """(success probability, fidelity) of a projected 4x4 mode block."""
    w = two_photon_map(v4)
    return success_probability(w), fidelity(w, target)


def circuit_metrics(circuit: CircuitSpec, modes: QubitModeMap, target: np.ndarray = CNOT):
    return gate_metrics(project_computational(compose(circuit), modes), target)


def adaptive_metrics(
    elements: Sequence[Element],
    modes: QubitModeMap,
    target: np.ndarray = CNOT,
    guard: int = DEFAULT_GUARD,
    tol: float = 1e-8,
    max_guard: int = 1024,
):
    """Gate metrics with the guard band doubled until P and F settle below ``tol``.

    Returns ``(P, F, grid)`` for the first grid whose metrics agree with the
    next doubling.
    """
    grid = FrequencyGrid.around(modes.bins, guard)
    prev = circuit_metrics(CircuitSpec(tuple(elements), grid), modes, target)
    while guard < max_guard:
        guard *= 2
        nxt_grid = FrequencyGrid.around(modes.bins, guard)
        nxt = circuit_metrics(CircuitSpec(tuple(elements), nxt_grid), modes, target)
        if abs(nxt[0] - prev[0]) < tol and abs(nxt[1] - prev[1]) < tol:
            return prev[0], prev[1], grid
        grid, prev = nxt_grid, nxt
    raise RuntimeError(f"metrics did not settle within guard {max_guard}")


def phasor(r, phi) -> np.ndarray:
    return np.asarray(r, dtype=float) * np.exp(1j * np.asarray(phi, dtype=float))
