import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from freqgate import constants
from freqgate import io as fio
from freqgate.coherent import characterize, coherent_reference
from freqgate.counting import CountDataset, NoiseParams, simulate_dataset
from freqgate.design import DesignProblem, OptimizerConfig, optimize
from freqgate.optics import CircuitSpec, EomElement, FrequencyGrid, ModeTransform, QubitModeMap, ShaperElement, embed_computational

finite = st.floats(-1e6, 1e6, allow_nan=False)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (2, 3, 3), elements=finite))
def test_complex_matrix_round_trip(parts):
    z = parts[0] + 1j * parts[1]
    text = json.dumps(fio.complex_to_json(z))
    assert np.array_equal(fio.complex_from_json(json.loads(text)), z)


def test_mode_transform_round_trip():
    grid = FrequencyGrid(-2, 3)
    v = ModeTransform(grid, np.random.default_rng(0).normal(size=(6, 6)) * (1 + 0.5j))
    back = fio.mode_transform_from_json(json.loads(fio.dumps(fio.mode_transform_to_json(v))))
    assert back.grid == grid
    assert np.array_equal(back.entries, v.entries)


def test_circuit_round_trip():
    grid = FrequencyGrid(-4, 12)
    c = CircuitSpec((EomElement(1.3, 0.2), ShaperElement({0: 0.5, 7: -1.0}), EomElement(0.4, -2.0)), grid)
    back = fio.circuit_from_json(json.loads(fio.dumps(fio.circuit_to_json(c))))
    assert back == c


def test_design_result_round_trip():
    res = optimize(DesignProblem(), OptimizerConfig(restarts=1, max_rounds=1, maxiter=20), seed=0)
    d = json.loads(fio.dumps(fio.design_result_to_json(res)))
    back = fio.design_result_from_json(d)
    assert back.circuit == res.circuit
    assert back.achieved_success == res.achieved_success
    assert np.array_equal(back.v_projected, res.v_projected)
    assert d["status"] in ("feasible", "infeasible")


def test_problem_from_json_defaults():
    prob = fio.problem_from_json({"topology": "3EOM/2PS", "modes": [1, 2, 3, 4], "guard": 4})
    assert prob.modes == QubitModeMap(1, 2, 3, 4)
    assert prob.grid == FrequencyGrid(-3, 8)
    with pytest.raises(ValueError):
        fio.problem_from_json({"target": "SWAP"})


def test_dataset_csv_and_json_round_trip():
    noise = NoiseParams(0.024, 3.5e-4, 4.7e-4, constants.DARK_A, constants.DARK_B)
    data = simulate_dataset(constants.design_matrix(), noise, 4e11, seed=2, resolving_time=1.5e-9)
    from_csv = fio.dataset_from_csv(fio.dataset_to_csv(data))
    assert from_csv.records == data.records
    assert from_csv.metadata["dark_a"] == constants.DARK_A
    from_json = fio.dataset_from_json(json.loads(fio.dumps(fio.dataset_to_json(data))))
    assert from_json == data


def test_csv_columns_and_header():
    text = fio.dataset_to_csv(CountDataset())
    lines = text.splitlines()
    assert lines[0] == "# format_version=1.0"
    assert lines[-1] == "input_k,input_l,output_r,output_s,N_A,N_B,N_AB,M"
    assert len(fio.dataset_from_csv(text)) == 0


def test_mismatched_major_version_rejected():
    d = fio.mode_transform_to_json(ModeTransform.identity(FrequencyGrid(0, 1)))
    d["format_version"] = "2.0"
    with pytest.raises(fio.FormatVersionError):
        fio.mode_transform_from_json(d)
    d["format_version"] = "1.7"
    fio.mode_transform_from_json(d)
    with pytest.raises(fio.FormatVersionError):
        fio.dataset_from_csv("input_k,input_l,output_r,output_s,N_A,N_B,N_AB,M\n")
    with pytest.raises(fio.FormatVersionError):
        fio.dataset_from_csv("# format_version=0.9\ninput_k,input_l,output_r,output_s,N_A,N_B,N_AB,M\n")


def test_reconstruction_round_trip_keeps_nan():
    rec = coherent_reference()
    back = fio.reconstruction_from_json(json.loads(fio.dumps(fio.reconstruction_to_json(rec))))
    assert np.array_equal(back.phase_determined, rec.phase_determined)
    assert np.allclose(back.phase_mean, rec.phase_mean, equal_nan=True)
    rec2 = characterize(embed_computational(constants.design_matrix(), QubitModeMap()), repeats=1)
    d = fio.reconstruction_to_json(rec2, {"F_inf": 0.99})
    assert d["inferred"]["F_inf"] == 0.99


def test_chain_round_trip():
    xs = np.random.default_rng(0).normal(size=(5, 28))
    assert np.array_equal(fio.chain_from_jsonl(fio.chain_to_jsonl(xs)), xs)


def test_atomic_write_leaves_no_temp_files(tmp_path):
    target = tmp_path / "sub" / "out.json"
    fio.write_atomic(target, "first")
    fio.write_atomic(target, "second")
    assert target.read_text() == "second"
    assert [p.name for p in target.parent.iterdir()] == ["out.json"]
