"""Photon-counting model: detection probabilities, likelihoods and simulated data.

Per frame (one resolving time) a pair is produced with probability ``mu``;
detector A watches control bin C_r, detector B target bin T_s, with system
efficiencies ``eta_a``/``eta_b`` and dark probabilities ``dark_a``/``dark_b``.
A configuration is an input ``|C_k T_l>`` with outputs ``(r, s)``; a data
set normally holds all 16 of them.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .optics import CNOT, ModeTransform

CONFIGS = tuple(itertools.product((0, 1), repeat=4))  # (k, l, r, s)

# category probabilities below this are treated as exactly zero
TINY = 1e-300


@dataclass(frozen=True)
class NoiseParams:
    mu: float
    eta_a: float
    eta_b: float
    dark_a: float = 0.0
    dark_b: float = 0.0

    def __post_init__(self):
        for name in ("mu", "eta_a", "eta_b", "dark_a", "dark_b"):
            val = getattr(self, name)
            if not 0 <= val < 1:
                raise ValueError(f"{name}={val} outside [0, 1)")
            if val > 0.1:
                warnings.warn(f"{name}={val} is not small; the counting model assumes << 1", stacklevel=3)


@dataclass(frozen=True)
class ExperimentConfig:
    frames: float
    input: tuple[int, int] = (0, 0)
    output: tuple[int, int] = (0, 0)
    resolving_time: float | None = None

    def __post_init__(self):
        if not self.frames > 0:
            raise ValueError("frames must be positive")
        object.__setattr__(self, "input", tuple(int(i) for i in self.input))
        object.__setattr__(self, "output", tuple(int(i) for i in self.output))
        for b in self.input + self.output:
            if b not in (0, 1):
                raise ValueError(f"logical values must be 0/1, got {self.input}->{self.output}")

    @property
    def key(self) -> tuple[int, int, int, int]:
        return self.input + self.output


@dataclass(frozen=True)
class ConfigCounts:
    n_a: int
    n_b: int
    n_ab: int

    def __post_init__(self):
        if min(self.n_a, self.n_b, self.n_ab) < 0:
            raise ValueError("counts must be non-negative")

    def consistent(self, frames: float) -> bool:
        return self.n_ab <= min(self.n_a, self.n_b) and self.n_a + self.n_b - self.n_ab <= frames


@dataclass(frozen=True)
class CountDataset:
    """(config, counts) records; each (input, output) pair appears at most once."""

    records: tuple = ()
    noise: NoiseParams | None = None
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        recs = tuple(sorted(self.records, key=lambda rc: rc[0].key))
        keys = [c.key for c, _ in recs]
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate input/output configuration")
        object.__setattr__(self, "records", recs)

    def __iter__(self) -> Iterator:
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def complete(self) -> bool:
        return len(self.records) == 16

    def arrays(self):
        """Config indices into ``CONFIGS`` plus (n_a, n_b, n_ab, frames) arrays."""
        idx = np.array([CONFIGS.index(c.key) for c, _ in self.records], dtype=int)
        n_a = np.array([n.n_a for _, n in self.records], dtype=float)
        n_b = np.array([n.n_b for _, n in self.records], dtype=float)
        n_ab = np.array([n.n_ab for _, n in self.records], dtype=float)
        frames = np.array([c.frames for c, _ in self.records], dtype=float)
        return idx, n_a, n_b, n_ab, frames

    def counts(self, key) -> ConfigCounts:
        for c, n in self.records:
            if c.key == tuple(key):
                return n
        raise KeyError(key)


# -- per-pair probabilities on the full lattice ------------------------------


def per_pair_joint(v: ModeTransform, u: int, v_in: int, m: int, n: int) -> float:
    """Probability of one photon in bin m and one in bin n (m != n), lossless."""
    if m == n or u == v_in:
        raise ValueError("need distinct inputs and distinct outputs")
    amp = v[m, u] * v[n, v_in] + v[m, v_in] * v[n, u]
    return abs(amp) ** 2


def per_pair_double(v: ModeTransform, u: int, v_in: int, m: int) -> float:
    """Probability of both photons in bin m."""
    return 2.0 * abs(v[m, u] * v[m, v_in]) ** 2


def per_pair_marginal(v: ModeTransform, u: int, v_in: int, m: int, direct: bool = False) -> float:
    """Probability of exactly one photon in bin m.

    The closed form relies on unitarity of ``v``; ``direct=True`` instead
    sums the joint probability over every other bin in the window.
    """
    if direct:
        return sum(per_pair_joint(v, u, v_in, m, n) for n in v.grid.bins if n != m)
    a, b = abs(v[m, u]) ** 2, abs(v[m, v_in]) ** 2
    return a + b - 4.0 * a * b


# -- detection probabilities on the computational block ----------------------


def singles_probs(v4: np.ndarray, cfg: ExperimentConfig, p: NoiseParams, exact: bool = False):
    """(p_A, p_B): click probability per frame on each detector.

    The default is the small-efficiency form; ``exact`` keeps the
    double-occupancy terms.
    """
    v4 = np.asarray(v4)
    (k, l), (r, s) = cfg.input, cfg.output
    out = []
    for (x, y), eta, dark in (
        ((v4[r, k], v4[r, 2 + l]), p.eta_a, p.dark_a),
        ((v4[2 + s, k], v4[2 + s, 2 + l]), p.eta_b, p.dark_b),
    ):
        a, b = abs(x) ** 2, abs(y) ** 2
        if exact:
            p2 = 2.0 * a * b
            p1 = a + b - 4.0 * a * b
            out.append(p.mu * (eta + (1 - eta) * eta) * p2 + p.mu * eta * p1 + dark)
        else:
            out.append(p.mu * eta * (a + b) + dark)
    return out[0], out[1]


def correlated_prob(v4: np.ndarray, cfg: ExperimentConfig, p: NoiseParams) -> float:
    v4 = np.asarray(v4)
    (k, l), (r, s) = cfg.input, cfg.output
    perm = v4[r, k] * v4[2 + s, 2 + l] + v4[r, 2 + l] * v4[2 + s, k]
    return p.mu * p.eta_a * p.eta_b * abs(perm) ** 2


def coincidence_prob(v4: np.ndarray, cfg: ExperimentConfig, p: NoiseParams, exact: bool = False) -> float:
    """Correlated pair term plus the ``2 p_A p_B`` accidental term."""
    pa, pb = singles_probs(v4, cfg, p, exact)
    return correlated_prob(v4, cfg, p) + 2.0 * pa * pb


def config_probs(v4: np.ndarray, cfg: ExperimentConfig, p: NoiseParams, exact: bool = False):
    pa, pb = singles_probs(v4, cfg, p, exact)
    return pa, pb, correlated_prob(v4, cfg, p) + 2.0 * pa * pb


def all_config_probs(v4: np.ndarray, p: NoiseParams, exact: bool = False):
    """Vectorised (p_A, p_B, p_AB), each of shape (16,) in ``CONFIGS`` order."""
    return config_prob_arrays(v4, p.mu, p.eta_a, p.eta_b, p.dark_a, p.dark_b, exact)


def _flat_indices():
    k, l, r, s = np.array(CONFIGS).T
    return 4 * r + k, 4 * r + 2 + l, 4 * (2 + s) + k, 4 * (2 + s) + 2 + l


# flat positions in the 4x4 block of V[Cr,Ck], V[Cr,Tl], V[Ts,Ck], V[Ts,Tl] per config
_A_C, _A_T, _B_C, _B_T = _flat_indices()


def config_prob_arrays(v4, mu, eta_a, eta_b, dark_a, dark_b, exact=False):
    vf = np.asarray(v4).reshape(16)
    a2 = vf.real ** 2 + vf.imag ** 2
    xa, ya, xb, yb = a2[_A_C], a2[_A_T], a2[_B_C], a2[_B_T]
    if exact:
        sa = (eta_a + (1 - eta_a) * eta_a) * 2 * xa * ya + eta_a * (xa + ya - 4 * xa * ya)
        sb = (eta_b + (1 - eta_b) * eta_b) * 2 * xb * yb + eta_b * (xb + yb - 4 * xb * yb)
    else:
        sa = eta_a * (xa + ya)
        sb = eta_b * (xb + yb)
    pa = mu * sa + dark_a
    pb = mu * sb + dark_b
    perm = vf[_A_C] * vf[_B_T] + vf[_A_T] * vf[_B_C]
    pab = mu * eta_a * eta_b * (perm.real ** 2 + perm.imag ** 2) + 2.0 * pa * pb
    return pa, pb, pab


def _xlogy(n, q):
    """n * log(q) with 0 * log(0) = 0 and n > 0 at q ~ 0 giving -inf."""
    n = np.asarray(n, dtype=float)
    q = np.asarray(q, dtype=float)
    tiny = q <= TINY
    with np.errstate(divide="ignore", invalid="ignore"):
        val = n * np.log(np.where(tiny, 1.0, q))
    return np.where(tiny, np.where(n > 0, -np.inf, 0.0), val)


def category_log_likelihood(n_a, n_b, n_ab, frames, pa, pb, pab):
    """Elementwise multinomial log-likelihood (normalisation dropped)."""
    n_a, n_b, n_ab = (np.asarray(x, dtype=float) for x in (n_a, n_b, n_ab))
    none = frames - n_a - n_b + n_ab
    qa, qb = pa - pab, pb - pab
    if np.all(qa > TINY) and np.all(qb > TINY) and np.all(pab > TINY) and np.all(pa + pb - pab < 1):
        # common case: every category has positive probability
        bad = (n_ab > np.minimum(n_a, n_b)) | (none < 0)
        total = (n_a - n_ab) * np.log(qa) + (n_b - n_ab) * np.log(qb) + n_ab * np.log(pab) \
            + none * np.log1p(-(pa + pb - pab))
        return np.where(bad, -np.inf, total)
    q_none = 1.0 - pa - pb + pab
    with np.errstate(invalid="ignore"):
        log_none = np.where(
            q_none > TINY,
            none * np.log1p(-(np.asarray(pa) + pb - pab)),
            np.where(none > 0, -np.inf, 0.0),
        )
    total = _xlogy(n_a - n_ab, pa - pab) + _xlogy(n_b - n_ab, pb - pab) + _xlogy(n_ab, pab) + log_none
    bad = (n_ab > np.minimum(n_a, n_b)) | (none < 0)
    return np.where(bad, -np.inf, total)


def config_log_likelihood(counts: ConfigCounts, probs, frames: float) -> float:
    pa, pb, pab = probs
    return float(category_log_likelihood(counts.n_a, counts.n_b, counts.n_ab, frames, pa, pb, pab))


def dataset_log_likelihood(data: CountDataset, v4: np.ndarray, p: NoiseParams, exact: bool = False) -> float:
    if len(data) == 0:
        return 0.0
    idx, n_a, n_b, n_ab, frames = data.arrays()
    pa, pb, pab = all_config_probs(v4, p, exact)
    return float(np.sum(category_log_likelihood(n_a, n_b, n_ab, frames, pa[idx], pb[idx], pab[idx])))


def config_rng(seed: int, index: int) -> np.random.Generator:
    """Counter-based stream for one configuration, independent of draw order."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(index,))))


def simulate_dataset(
    v4: np.ndarray,
    p: NoiseParams,
    frames: float,
    seed: int,
    exact: bool = False,
    resolving_time: float | None = None,
) -> CountDataset:
    """Multinomial draw of (A only, B only, AB, none) per configuration."""
    pa, pb, pab = all_config_probs(v4, p, exact)
    m = int(round(frames))
    records = []
    for i, key in enumerate(CONFIGS):
        q = np.array([pa[i] - pab[i], pb[i] - pab[i], pab[i]])
        q = np.clip(q, 0.0, None)
        a_only, b_only, both, _ = config_rng(seed, i).multinomial(m, np.append(q, max(0.0, 1.0 - q.sum())))
        cfg = ExperimentConfig(frames=m, input=key[:2], output=key[2:], resolving_time=resolving_time)
        records.append((cfg, ConfigCounts(int(a_only + both), int(b_only + both), int(both))))
    return CountDataset(tuple(records), noise=p)


def correct_output_fraction(data: CountDataset, target: np.ndarray = CNOT) -> float:
    """Coincidences landing in the target's output, per input, averaged over inputs."""
    fractions = []
    for k, l in itertools.product((0, 1), repeat=2):
        col = 2 * k + l
        want = int(np.argmax(np.abs(np.asarray(target)[:, col])))
        by_out = {(r, s): data.counts((k, l, r, s)).n_ab for r, s in itertools.product((0, 1), repeat=2)}
        total = sum(by_out.values())
        if total:
            fractions.append(by_out[divmod(want, 2)] / total)
    return float(np.mean(fractions)) if fractions else float("nan")
