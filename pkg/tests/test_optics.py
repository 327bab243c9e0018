import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from freqgate import constants
from freqgate.optics import (
    CNOT,
    CircuitSpec,
    EomElement,
    FrequencyGrid,
    GridMismatchError,
    ModeTransform,
    QubitModeMap,
    ShaperElement,
    UndefinedFidelityError,
    adaptive_metrics,
    compose,
    compose_transforms,
    embed_computational,
    eom_matrix,
    fidelity,
    gate_metrics,
    project_computational,
    success_probability,
    two_photon_map,
    wrap_phase,
)


def modulation_oracle(m, theta, shift, n_points=512):
    """Fourier coefficient of exp(i m sin(x + theta)) at harmonic ``shift``.

    The trapezoid rule on a periodic integrand converges geometrically, so
    512 nodes are far beyond what m <= 4 needs.
    """
    x = np.arange(n_points) * 2 * np.pi / n_points
    return np.mean(np.exp(1j * m * np.sin(x + theta)) * np.exp(-1j * shift * x))


def fock_two_photon(v4, u, w):
    """Two-photon output amplitudes by expanding (sum_m V[m,u] a_m^+)(sum_n V[n,w] a_n^+)|0>."""
    coeff = {}
    for m, n in itertools.product(range(4), repeat=2):
        key = tuple(sorted((m, n)))
        coeff[key] = coeff.get(key, 0) + v4[m, u] * v4[n, w]
    amps = {}
    for (m, n), c in coeff.items():
        amps[(m, n)] = c * np.sqrt(2.0) if m == n else c
    return amps


def random_complex(rng, shape):
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


@pytest.mark.parametrize("m", [0.0, 0.3, 1.1, 2.4048, 3.0])
@pytest.mark.parametrize("theta", [0.0, 0.7, -2.5])
def test_eom_matches_quadrature(m, theta):
    size = 21
    mat = eom_matrix(m, theta, size)
    for n, n_in in itertools.product(range(size), repeat=2):
        assert abs(mat[n, n_in] - modulation_oracle(m, theta, n - n_in)) <= 1e-10


def test_two_photon_map_matches_fock_expansion():
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(50):
        v4 = random_complex(rng, (4, 4))
        w = two_photon_map(v4)
        for k, l in itertools.product((0, 1), repeat=2):
            amps = fock_two_photon(v4, k, 2 + l)
            for r, s in itertools.product((0, 1), repeat=2):
                worst = max(worst, abs(w[2 * r + s, 2 * k + l] - amps[(r, 2 + s)]))
    assert worst <= 1e-12


def test_two_photon_map_batches():
    rng = np.random.default_rng(2)
    vs = random_complex(rng, (3, 5, 4, 4))
    w = two_photon_map(vs)
    assert w.shape == (3, 5, 4, 4)
    assert np.allclose(w[1, 2], two_photon_map(vs[1, 2]))


def test_ideal_gate_metrics():
    # a block with W = CNOT / 3 gives the textbook success probability 1/9
    p, f = success_probability(CNOT / 3), fidelity(CNOT / 3)
    assert np.isclose(p, 1 / 9) and np.isclose(f, 1.0)


def test_identity_block_is_not_cnot():
    p, f = gate_metrics(np.eye(4))
    assert p == pytest.approx(1.0)
    assert f == pytest.approx(0.25)


def test_fidelity_undefined_for_zero():
    with pytest.raises(UndefinedFidelityError):
        fidelity(np.zeros((4, 4)))


def test_reference_matrix_metrics_at_quoted_precision():
    p, f = gate_metrics(constants.design_matrix())
    assert abs(p - 0.0445) <= 5e-4
    # the block reproduces the quoted four-decimal fidelity; the strict
    # F >= 0.9999 check lives in the acceptance suite
    assert round(f, 4) == 0.9999
    assert f == pytest.approx(0.9998982, abs=1e-7)


@settings(max_examples=50, deadline=None)
@given(st.floats(-np.pi, np.pi), st.integers(0, 2**31 - 1))
def test_metrics_ignore_global_phase(phi, seed):
    v4 = random_complex(np.random.default_rng(seed), (4, 4))
    p0, f0 = gate_metrics(v4)
    p1, f1 = gate_metrics(np.exp(1j * phi) * v4)
    assert np.isclose(p0, p1, rtol=1e-12) and np.isclose(f0, f1, rtol=1e-10, atol=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 3.0), st.floats(-np.pi, np.pi))
def test_eom_and_reverse_drive_cancel(m, theta):
    # the pi-shifted drive undoes the first modulator away from the window edges
    size = 61
    prod = eom_matrix(m, theta + np.pi, size) @ eom_matrix(m, theta, size)
    mid = slice(20, 41)
    assert np.allclose(prod[mid, mid], np.eye(size)[mid, mid], atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 3.0), st.floats(-np.pi, np.pi))
def test_eom_columns_normalised_in_the_interior(m, theta):
    mat = eom_matrix(m, theta, 61)
    norms = np.sum(np.abs(mat[:, 25:36]) ** 2, axis=0)
    assert np.allclose(norms, 1.0, atol=1e-12)


def test_circuit_inverse_is_identity():
    grid = FrequencyGrid(-30, 40)
    circ = CircuitSpec(
        (EomElement(1.2, 0.4), ShaperElement({n: 0.3 * n for n in range(-5, 12)}), EomElement(0.8, -1.0)), grid
    )
    total = compose_transforms([compose(circ), compose(circ.inverse())])
    interior = [grid.index(n) for n in range(-5, 15)]
    assert np.allclose(total.entries[np.ix_(interior, interior)], np.eye(len(interior)), atol=1e-12)


def test_composition_order_last_element_leftmost():
    grid = FrequencyGrid(-10, 10)
    a, b = EomElement(0.5, 0.2), ShaperElement({1: 1.0, 2: -0.4})
    v = compose(CircuitSpec((a, b), grid))
    from freqgate.optics import element_transform

    expected = element_transform(b, grid).entries @ element_transform(a, grid).entries
    assert np.allclose(v.entries, expected)


def test_grid_mismatch_rejected():
    g1, g2 = FrequencyGrid(-5, 5), FrequencyGrid(-6, 5)
    with pytest.raises(GridMismatchError):
        compose_transforms([ModeTransform.identity(g1), ModeTransform.identity(g2)])


def test_modes_must_lie_on_grid():
    with pytest.raises(IndexError):
        QubitModeMap().check(FrequencyGrid(0, 5))
    with pytest.raises(ValueError):
        QubitModeMap(0, 0, 7, 8)


def test_project_and_embed_round_trip():
    v4 = constants.design_matrix()
    modes = QubitModeMap()
    full = embed_computational(v4, modes)
    assert np.array_equal(project_computational(full, modes), v4)
    assert full[(6, 7)] == v4[1, 2]


def test_shaper_is_diagonal_with_default_zero():
    grid = FrequencyGrid(-3, 3)
    v = compose(CircuitSpec((ShaperElement({1: np.pi / 2}),), grid))
    assert np.allclose(v.entries, np.diag(np.where(grid.bins == 1, 1j, 1.0)))


def test_eom_validation_and_phase_wrapping():
    with pytest.raises(ValueError):
        EomElement(-0.1, 0.0)
    e = EomElement(1.0, 3 * np.pi)
    assert np.isclose(e.rf_phase, np.pi)


@settings(max_examples=100)
@given(st.floats(-1e3, 1e3))
def test_wrap_phase_range(x):
    y = wrap_phase(x)
    assert -np.pi < y <= np.pi
    assert np.isclose(np.exp(1j * x), np.exp(1j * y))


def test_adaptive_guard_settles():
    elements = (EomElement(1.5, 0.3), ShaperElement({n: 0.1 * n * n for n in range(-20, 30)}), EomElement(1.5, 2.0))
    p, f, grid = adaptive_metrics(elements, QubitModeMap(), tol=1e-10)
    wide = FrequencyGrid.around(QubitModeMap().bins, 200)
    from freqgate.optics import circuit_metrics

    p_wide, f_wide = circuit_metrics(CircuitSpec(elements, wide), QubitModeMap())
    assert abs(p - p_wide) < 1e-9 and abs(f - f_wide) < 1e-9
    assert grid.size < wide.size
