import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from freqgate import constants
from freqgate.bayes import (
    DIM,
    FIXED_SLOTS,
    LogPosterior,
    ParamVector,
    PriorSpec,
    cold_start,
    default_widths,
    in_support,
    infer,
    log_posterior,
    log_prior,
    pack,
    pathway_probabilities,
    summarize,
    unpack,
    warm_start,
)
from freqgate.counting import CountDataset, NoiseParams, all_config_probs, dataset_log_likelihood, simulate_dataset
from freqgate.optics import CNOT, gate_metrics, two_photon_map
from freqgate.sampling import NonFiniteInitError, SliceConfig

TRUTH = NoiseParams(0.024, 3.5e-4, 4.7e-4, constants.DARK_A, constants.DARK_B)


@pytest.fixture(scope="module")
def paper_data():
    return simulate_dataset(constants.design_matrix(), TRUTH, constants.FRAMES, seed=10)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6))
def test_pack_unpack_round_trip(seed):
    rng = np.random.default_rng(seed)
    x = np.empty(DIM)
    x[:15] = rng.dirichlet(np.ones(16))[:15]
    x[15:25] = rng.uniform(0.01, 6.2, 10)
    x[25:] = rng.uniform(1e-5, 0.1, 3)
    assert np.allclose(pack(unpack(x)), x, rtol=1e-13, atol=1e-15)
    assert in_support(x)


def test_fixed_phases_come_from_the_prior():
    beta = unpack(warm_start(0.02, 1e-3, 1e-3))
    ph = beta.phases()
    for slot in FIXED_SLOTS:
        assert ph[slot] == constants.DESIGN_PHASE[slot]


def test_rescaled_block_keeps_detection_probabilities():
    v4 = constants.design_matrix()
    beta = ParamVector.from_matrix(v4, 0.024, 3.5e-4, 4.7e-4)
    assert np.isclose(np.sum(beta.squared_moduli), constants.NORM_CONSTRAINT)
    before = all_config_probs(v4, NoiseParams(0.024, 3.5e-4, 4.7e-4))
    after = all_config_probs(beta.v4(), NoiseParams(beta.mu, beta.eta_a, beta.eta_b))
    assert np.allclose(before[0], after[0], rtol=1e-12)
    assert np.allclose(before[1], after[1], rtol=1e-12)
    assert np.allclose(before[2], after[2], rtol=1e-12)


def test_rescaling_keeps_fidelity():
    v4 = constants.design_matrix()
    beta = ParamVector.from_matrix(v4, 0.024, 3.5e-4, 4.7e-4)
    assert np.isclose(gate_metrics(beta.v4())[1], gate_metrics(v4)[1], rtol=1e-12)


def test_prior_support():
    x = warm_start(0.02, 1e-3, 1e-3)
    assert log_prior(unpack(x)) == 0.0
    bad = x.copy()
    bad[20] = 7.0
    assert not in_support(bad)
    bad = x.copy()
    bad[25] = 0.0
    assert not in_support(bad)
    wrong = unpack(x)
    with pytest.raises(AssertionError):
        log_prior(ParamVector(wrong.squared_moduli * 1.1, wrong.free_phases, 0.02, 1e-3, 1e-3))


def test_posterior_matches_reference_likelihood(paper_data):
    post = LogPosterior(paper_data)
    x = warm_start(0.024, 3.5e-4, 4.7e-4)
    beta = unpack(x)
    ref = dataset_log_likelihood(paper_data, beta.v4(),
                                 NoiseParams(beta.mu, beta.eta_a, beta.eta_b, TRUTH.dark_a, TRUTH.dark_b))
    assert np.isclose(post(x), ref, rtol=1e-12)
    assert np.isclose(log_posterior(beta, paper_data), ref, rtol=1e-12)


def test_empty_data_posterior_is_the_prior():
    post = LogPosterior(CountDataset())
    x = warm_start(0.02, 1e-3, 1e-3)
    assert post(x) == 0.0


def test_default_widths():
    x = warm_start(0.02, 1e-3, 2e-3)
    w = default_widths(x)
    assert np.all(w[:15] == 0.05) and np.all(w[15:25] == 0.1)
    assert np.allclose(w[25:], 0.5 * x[25:])


def test_cold_start_is_finite(paper_data):
    post = LogPosterior(paper_data)
    x = cold_start(post, np.random.default_rng(0), rates=(0.024, 3.5e-4, 4.7e-4))
    assert np.isfinite(post(x))


def test_impossible_data_rejected_at_start():
    from freqgate.counting import ConfigCounts, ExperimentConfig

    data = CountDataset(((ExperimentConfig(100, (0, 0), (0, 0)), ConfigCounts(1, 1, 5)),))
    with pytest.raises(NonFiniteInitError):
        infer(data, warm_start(0.02, 1e-3, 1e-3), n=5)


def test_short_chain_tracks_the_truth(paper_data):
    x0 = warm_start(0.024, 3.5e-4, 4.7e-4)
    cfg = SliceConfig(widths=default_widths(x0), burn_in=60, pilot=40)
    chain = infer(paper_data, x0, n=80, config=cfg, seed=1)
    s = summarize(chain)
    # singles pin mu * eta to ~0.1%; mu alone is set by the few hundred
    # coincidences and drifts slowly along that ridge in a short chain
    scale = np.sum(np.abs(constants.design_matrix()) ** 2) / constants.NORM_CONSTRAINT
    xs = chain.samples
    assert np.mean(xs[:, 25] * xs[:, 26]) == pytest.approx(0.024 * 3.5e-4 * scale, rel=0.01)
    assert np.mean(xs[:, 25] * xs[:, 27]) == pytest.approx(0.024 * 4.7e-4 * scale, rel=0.01)
    assert s.mu[0] == pytest.approx(0.024, rel=0.1)
    assert 0.8 < s.fidelity[0] <= 1.0
    assert np.allclose(s.pathway_probabilities.sum(axis=1), 1.0)
    assert s.n_samples == 80
    # sqrt(-2 log r) turns r = 1 - 1e-16 roundoff into ~1e-8
    assert np.all(s.phase_std[tuple(np.array(FIXED_SLOTS).T)] < 1e-6)


def test_summary_phase_mean_is_circular():
    from freqgate.sampling import PosteriorChain

    x = warm_start(0.02, 1e-3, 1e-3)
    xs = np.tile(x, (4, 1))
    # straddle the 0 / 2 pi cut in one free phase
    xs[:, 15] = [0.05, 2 * np.pi - 0.05, 0.05, 2 * np.pi - 0.05]
    s = summarize(PosteriorChain(xs, np.zeros(4), 0, 1))
    from freqgate.bayes import FREE_SLOTS

    slot = FREE_SLOTS[0]
    assert abs(s.phase_mean[slot]) < 1e-9
    assert s.phase_std[slot] == pytest.approx(0.05, rel=0.01)


def test_pathway_probabilities_of_ideal_gate():
    paths = pathway_probabilities(CNOT / 3)
    assert np.allclose(paths, np.abs(CNOT.T))
    w = two_photon_map(constants.design_matrix())
    assert np.allclose(pathway_probabilities(w).sum(axis=1), 1.0)


def test_prior_spec_validation():
    with pytest.raises(ValueError):
        PriorSpec(norm_constraint=0.0)
