import numpy as np
import pytest

from freqgate.design import (
    DesignProblem,
    OptimizerConfig,
    _BatchCircuit,
    best_of,
    decode,
    encode,
    objective,
    optimize,
    placement_search,
    recheck,
    run_restart,
)
from freqgate.optics import FrequencyGrid, QubitModeMap, compose, project_computational

FAST = OptimizerConfig(restarts=3)


def test_topology_names_and_validation():
    assert DesignProblem(topology="3EOM/2PS").topology == ("eom", "ps", "eom", "ps", "eom")
    with pytest.raises(ValueError):
        DesignProblem(topology=("eom", "lens"))
    with pytest.raises(ValueError):
        DesignProblem(fidelity_floor=1.5)
    with pytest.raises(IndexError):
        DesignProblem(grid=FrequencyGrid(0, 5))


def test_parameter_count():
    prob = DesignProblem(topology="2EOM/1PS")
    assert prob.n_params == 4 + prob.grid.size


def test_encode_decode_round_trip():
    prob = DesignProblem(topology="3EOM/2PS")
    x = np.random.default_rng(0).uniform(-3, 3, prob.n_params)
    x[[0, 2 + prob.grid.size]] = np.abs(x[[0, 2 + prob.grid.size]])
    back = encode(decode(x, prob), prob)
    assert np.allclose(np.exp(1j * back), np.exp(1j * x))
    assert np.allclose(back[0], x[0])


def test_batch_matches_full_composition():
    prob = DesignProblem(topology="3EOM/2PS")
    x = np.random.default_rng(1).uniform(-2, 2, prob.n_params)
    v_batch = _BatchCircuit(prob).v4(x)[0]
    v_full = project_computational(compose(decode(x, prob)), prob.modes)
    assert np.allclose(v_batch, v_full, atol=1e-13)


@pytest.mark.parametrize("topology", ["2EOM/1PS", "3EOM/2PS"])
def test_finite_difference_batch_matches_direct_evaluation(topology):
    prob = DesignProblem(topology=topology, grid=FrequencyGrid(-6, 14))
    batch = _BatchCircuit(prob)
    x = np.random.default_rng(2).uniform(-2, 2, prob.n_params)
    h = 1e-3
    steps = np.vstack([np.zeros(x.size), h * np.eye(x.size), -h * np.eye(x.size)])
    assert np.allclose(batch.fd_v4(x, h), batch.v4(x + steps), atol=1e-13)


def test_objective_agrees_with_batch_metrics():
    prob = DesignProblem()
    x = np.random.default_rng(3).uniform(-2, 2, prob.n_params)
    p, f = objective(x, prob)
    pb, fb = _BatchCircuit(prob).metrics(x)
    assert np.isclose(p, pb[0]) and np.isclose(f, fb[0])


def test_restart_is_reproducible():
    prob = DesignProblem()
    a = run_restart(prob, FAST, seed=4, index=1)
    b = run_restart(prob, FAST, seed=4, index=1)
    assert np.array_equal(a.params, b.params)
    assert a.achieved_success == b.achieved_success


def test_small_design_is_feasible_and_honest():
    res = optimize(DesignProblem(), FAST, seed=0)
    assert res.feasible
    assert res.achieved_fidelity >= 0.9999
    assert res.achieved_success > 0.04
    p, f = recheck(res)
    assert p == res.achieved_success and f == res.achieved_fidelity


def test_raising_the_floor_never_raises_success():
    results = [optimize(DesignProblem(fidelity_floor=fl), FAST, seed=0) for fl in (0.99, 0.9999)]
    assert all(r.feasible for r in results)
    assert results[0].achieved_success >= results[1].achieved_success


def test_single_shaper_cannot_reach_cnot():
    res = optimize(DesignProblem(topology="1PS"), OptimizerConfig(restarts=1, max_rounds=2), seed=0)
    assert not res.feasible
    # a diagonal transform cannot flip the target qubit
    assert res.achieved_fidelity <= 0.5 + 1e-9


def test_best_of_prefers_feasible_then_success():
    prob = DesignProblem()
    base = run_restart(prob, OptimizerConfig(restarts=1, max_rounds=1, maxiter=5), 0, 0)
    from dataclasses import replace

    good = replace(base, feasible=True, achieved_success=0.03)
    better = replace(base, feasible=True, achieved_success=0.04)
    infeasible = replace(base, feasible=False, achieved_success=0.2)
    assert best_of([infeasible, good, better]) is better
    assert best_of([infeasible]) is infeasible


def test_placement_search_orders_results():
    prob = DesignProblem()
    cands = [QubitModeMap(0, 6, 7, 8), QubitModeMap(0, 1, 2, 3)]
    out = placement_search(prob, cands, OptimizerConfig(restarts=1, max_rounds=2, maxiter=50), seed=0)
    keys = [r.rank_key() for r in out]
    assert keys == sorted(keys)
    with pytest.raises(ValueError):
        placement_search(prob, [], FAST)
