"""Posterior inference of the gate block and noise rates from count data.

The 28 sampled coordinates are laid out as

* ``x[0:15]``  -- squared moduli of the 4x4 block divided by the norm
  constraint, row-major, the 16th being ``1 - sum``;
* ``x[15:25]`` -- the ten free phases in (0, 2 pi), row-major over the
  slots not listed in ``FIXED_PHASE_SLOTS``;
* ``x[25:28]`` -- ``mu``, ``eta_a``, ``eta_b``.

A uniform density over the simplex coordinates is a flat prior over the
squared moduli subject to the norm constraint.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import constants
from .counting import TINY, CountDataset, category_log_likelihood, config_prob_arrays
from .optics import CNOT, fidelity, two_photon_map, wrap_phase
from .sampling import PosteriorChain, SliceConfig, slice_sample

TWO_PI = 2.0 * np.pi
N_MODULI = 16
N_FREE_PHASES = 10
DIM = (N_MODULI - 1) + N_FREE_PHASES + 3  # 28

FIXED_SLOTS = tuple(constants.FIXED_PHASE_SLOTS)
FREE_SLOTS = tuple((i, j) for i in range(4) for j in range(4) if (i, j) not in FIXED_SLOTS)
_FIXED_FLAT = np.array([4 * i + j for i, j in FIXED_SLOTS])
_FREE_FLAT = np.array([4 * i + j for i, j in FREE_SLOTS])
DEFAULT_FIXED_PHASES = np.array([constants.DESIGN_PHASE[s] for s in FIXED_SLOTS])

SIMPLEX = slice(0, 15)
PHASES = slice(15, 25)
RATES = slice(25, 28)


@dataclass(frozen=True)
class PriorSpec:
    norm_constraint: float = constants.NORM_CONSTRAINT
    fixed_phases: np.ndarray = field(default_factory=lambda: DEFAULT_FIXED_PHASES.copy())

    def __post_init__(self):
        if not self.norm_constraint > 0:
            raise ValueError("norm_constraint must be positive")


@dataclass(frozen=True)
class ParamVector:
    squared_moduli: np.ndarray  # (4, 4)
    free_phases: np.ndarray  # (10,) in (0, 2 pi)
    mu: float
    eta_a: float
    eta_b: float
    fixed_phases: np.ndarray = field(default_factory=lambda: DEFAULT_FIXED_PHASES.copy())

    def phases(self) -> np.ndarray:
        ph = np.empty(16)
        ph[_FIXED_FLAT] = self.fixed_phases
        ph[_FREE_FLAT] = self.free_phases
        return ph.reshape(4, 4)

    def v4(self) -> np.ndarray:
        return np.sqrt(np.asarray(self.squared_moduli)) * np.exp(1j * self.phases())

    @classmethod
    def from_matrix(cls, v4, mu, eta_a, eta_b, prior: PriorSpec | None = None, rescale: bool = True):
        """Build from a complex block; free phases are read off, fixed ones come from the prior.

        With ``rescale`` the block is scaled to the norm constraint and the
        efficiencies are compensated so every detection probability is unchanged.
        """
        prior = prior or PriorSpec()
        v4 = np.asarray(v4, dtype=complex)
        sq = np.abs(v4) ** 2
        if rescale:
            s = prior.norm_constraint / sq.sum()
            sq = sq * s
            eta_a, eta_b = eta_a / s, eta_b / s
        free = np.mod(np.angle(v4).reshape(16)[_FREE_FLAT], TWO_PI)
        return cls(sq, free, mu, eta_a, eta_b, np.asarray(prior.fixed_phases, dtype=float))


def pack(beta: ParamVector, prior: PriorSpec | None = None) -> np.ndarray:
    prior = prior or PriorSpec()
    x = np.empty(DIM)
    x[SIMPLEX] = np.asarray(beta.squared_moduli).reshape(16)[:15] / prior.norm_constraint
    x[PHASES] = beta.free_phases
    x[RATES] = (beta.mu, beta.eta_a, beta.eta_b)
    return x


def unpack(x: np.ndarray, prior: PriorSpec | None = None) -> ParamVector:
    prior = prior or PriorSpec()
    x = np.asarray(x, dtype=float)
    z = np.append(x[SIMPLEX], 1.0 - x[SIMPLEX].sum())
    return ParamVector(
        (z * prior.norm_constraint).reshape(4, 4),
        x[PHASES].copy(),
        float(x[25]),
        float(x[26]),
        float(x[27]),
        np.asarray(prior.fixed_phases, dtype=float),
    )


def in_support(x: np.ndarray) -> bool:
    z, ph, r = x[SIMPLEX], x[PHASES], x[RATES]
    return bool(
        z.min() > 0
        and z.sum() < 1.0
        and ph.min() > 0
        and ph.max() < TWO_PI
        and r.min() > 0
        and r.max() < 1
    )


def log_prior_vector(x: np.ndarray) -> float:
    return 0.0 if in_support(np.asarray(x, dtype=float)) else -np.inf


def log_prior(beta: ParamVector, prior: PriorSpec | None = None) -> float:
    """Flat prior: 0 on the support, -inf outside."""
    prior = prior or PriorSpec()
    sq = np.asarray(beta.squared_moduli)
    total = sq.sum()
    if not np.isclose(total, prior.norm_constraint, rtol=0, atol=1e-10):
        raise AssertionError(f"squared moduli sum to {total}, not {prior.norm_constraint}")
    if np.any(sq <= 0):
        return -np.inf
    return log_prior_vector(pack(beta, prior))


class LogPosterior:
    """Callable ``x -> log P(D | beta) + log P(beta)`` on the 28-vector."""

    def __init__(self, data: CountDataset, prior: PriorSpec | None = None,
                 dark_a: float | None = None, dark_b: float | None = None, exact: bool = False):
        self.prior = prior or PriorSpec()
        noise = data.noise
        self.dark_a = dark_a if dark_a is not None else (noise.dark_a if noise else 0.0)
        self.dark_b = dark_b if dark_b is not None else (noise.dark_b if noise else 0.0)
        self.exact = exact
        self.idx, self.n_a, self.n_b, self.n_ab, self.frames = data.arrays()
        self._counts = (self.n_a - self.n_ab, self.n_b - self.n_ab, self.n_ab,
                        self.frames - self.n_a - self.n_b + self.n_ab)
        self._bad = bool(np.any(self.n_ab > np.minimum(self.n_a, self.n_b)) or np.any(self._counts[3] < 0))
        self._phase = np.empty(16)
        self._phase[_FIXED_FLAT] = self.prior.fixed_phases

    def v4(self, x: np.ndarray) -> np.ndarray:
        z = np.empty(16)
        z[:15] = x[SIMPLEX]
        z[15] = 1.0 - z[:15].sum()
        ph = self._phase.copy()
        ph[_FREE_FLAT] = x[PHASES]
        return (np.sqrt(z * self.prior.norm_constraint) * np.exp(1j * ph)).reshape(4, 4)

    def log_likelihood(self, x: np.ndarray) -> float:
        if len(self.idx) == 0:
            return 0.0
        pa, pb, pab = config_prob_arrays(self.v4(x), x[25], x[26], x[27], self.dark_a, self.dark_b, self.exact)
        i = self.idx
        pa, pb, pab = pa[i], pb[i], pab[i]
        qa, qb, qn = pa - pab, pb - pab, pa + pb - pab
        if self._bad or qa.min() <= TINY or qb.min() <= TINY or pab.min() <= TINY or qn.max() >= 1.0:
            return float(np.sum(category_log_likelihood(self.n_a, self.n_b, self.n_ab, self.frames, pa, pb, pab)))
        c_a, c_b, c_ab, c_none = self._counts
        return float(c_a @ np.log(qa) + c_b @ np.log(qb) + c_ab @ np.log(pab) + c_none @ np.log1p(-qn))

    def __call__(self, x: np.ndarray) -> float:
        if not in_support(x):
            return -np.inf
        return self.log_likelihood(x)

    def fidelity(self, x: np.ndarray, target: np.ndarray = CNOT) -> float:
        return fidelity(two_photon_map(self.v4(x)), target)


def log_posterior(beta: ParamVector, data: CountDataset, prior: PriorSpec | None = None, **kw) -> float:
    prior = prior or PriorSpec()
    return LogPosterior(data, prior, **kw)(pack(beta, prior))


def default_widths(init: np.ndarray) -> np.ndarray:
    w = np.empty(DIM)
    w[SIMPLEX] = 0.05
    w[PHASES] = 0.1
    w[RATES] = 0.5 * np.asarray(init)[RATES]
    return w


def warm_start(mu: float, eta_a: float, eta_b: float, prior: PriorSpec | None = None,
               v4: np.ndarray | None = None) -> np.ndarray:
    """Designed block (rescaled to the norm constraint) plus rate guesses."""
    prior = prior or PriorSpec()
    v4 = constants.design_matrix() if v4 is None else v4
    return pack(ParamVector.from_matrix(v4, mu, eta_a, eta_b, prior), prior)


def cold_start(posterior: LogPosterior, rng: np.random.Generator, rates=(0.01, 1e-3, 1e-3), tries: int = 1000):
    """Random point on the support with a finite posterior."""
    for _ in range(tries):
        x = np.empty(DIM)
        x[SIMPLEX] = rng.dirichlet(np.ones(16))[:15]
        x[PHASES] = rng.uniform(0, TWO_PI, N_FREE_PHASES)
        x[RATES] = rates
        if np.isfinite(posterior(x)):
            return x
    raise RuntimeError("no finite starting point found")


def infer(data: CountDataset, init: np.ndarray, n: int = 4096, config: SliceConfig | None = None,
          seed: int = 0, prior: PriorSpec | None = None, target_gate: np.ndarray = CNOT,
          **kw) -> PosteriorChain:
    """Slice-sample the posterior, monitoring fidelity for the thinning choice."""
    post = LogPosterior(data, prior, **kw)
    cfg = config or SliceConfig(widths=default_widths(init))
    return slice_sample(post, init, n, cfg, seed, statistic=lambda x: post.fidelity(x, target_gate))


# -- summaries ---------------------------------------------------------------


def circular_mean_std(angles: np.ndarray, axis: int = 0):
    z = np.mean(np.exp(1j * np.asarray(angles)), axis=axis)
    r = np.clip(np.abs(z), 1e-300, 1.0)
    return wrap_phase(np.angle(z)), np.sqrt(-2.0 * np.log(r))


@dataclass
class PosteriorSummary:
    fidelity: tuple[float, float]
    mu: tuple[float, float]
    eta_a: tuple[float, float]
    eta_b: tuple[float, float]
    amplitude_mean: np.ndarray
    amplitude_std: np.ndarray
    phase_mean: np.ndarray
    phase_std: np.ndarray
    pathway_probabilities: np.ndarray  # [input kl, output rs], rows sum to 1
    pathway_std: np.ndarray
    correct_output: tuple[float, float]
    n_samples: int


def pathway_probabilities(w: np.ndarray) -> np.ndarray:
    """Per-input normalised ``|W[rs, kl]|^2``, indexed [..., kl, rs]."""
    p = np.abs(np.asarray(w)) ** 2
    p = np.swapaxes(p, -1, -2)
    return p / p.sum(axis=-1, keepdims=True)


def summarize(chain: PosteriorChain, target_gate: np.ndarray = CNOT, prior: PriorSpec | None = None) -> PosteriorSummary:
    prior = prior or PriorSpec()
    xs = np.asarray(chain.samples)
    z = np.column_stack([xs[:, SIMPLEX], 1.0 - xs[:, SIMPLEX].sum(axis=1)])
    amp = np.sqrt(np.clip(z * prior.norm_constraint, 0, None)).reshape(-1, 4, 4)
    ph = np.empty((len(xs), 16))
    ph[:, _FIXED_FLAT] = prior.fixed_phases
    ph[:, _FREE_FLAT] = xs[:, PHASES]
    ph = ph.reshape(-1, 4, 4)
    v = amp * np.exp(1j * ph)
    w = two_photon_map(v)
    fid = np.atleast_1d(fidelity(w, target_gate))
    paths = pathway_probabilities(w)
    want = np.argmax(np.abs(np.asarray(target_gate)), axis=0)  # correct output per input
    correct = paths[:, np.arange(4), want].mean(axis=1)
    pmean, pstd = circular_mean_std(ph, axis=0)

    def ms(a):
        return float(np.mean(a)), float(np.std(a))

    return PosteriorSummary(
        fidelity=ms(fid),
        mu=ms(xs[:, 25]),
        eta_a=ms(xs[:, 26]),
        eta_b=ms(xs[:, 27]),
        amplitude_mean=amp.mean(axis=0),
        amplitude_std=amp.std(axis=0),
        phase_mean=np.asarray(pmean),
        phase_std=np.asarray(pstd),
        pathway_probabilities=paths.mean(axis=0),
        pathway_std=paths.std(axis=0),
        correct_output=ms(correct),
        n_samples=len(xs),
    )
