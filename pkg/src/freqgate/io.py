"""JSON / CSV persistence for transforms, circuits, designs, data sets and posteriors.

Complex numbers are written as ``[re, im]`` pairs in row-major nested lists.
Every artifact carries ``format_version``; readers reject another major.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .bayes import PosteriorSummary
from .coherent import ReconstructedMatrix
from .counting import CountDataset, ConfigCounts, ExperimentConfig, NoiseParams
from .design import DesignProblem, DesignResult
from .optics import (
    CNOT,
    TWO_PI,
    CircuitSpec,
    EomElement,
    FrequencyGrid,
    ModeTransform,
    QubitModeMap,
    ShaperElement,
)

FORMAT_VERSION = "1.0"
CSV_COLUMNS = ("input_k", "input_l", "output_r", "output_s", "N_A", "N_B", "N_AB", "M")


class FormatVersionError(ValueError):
    pass


def check_version(version: str | None, what: str = "artifact") -> None:
    if version is None:
        raise FormatVersionError(f"{what} has no format_version")
    if str(version).split(".")[0] != FORMAT_VERSION.split(".")[0]:
        raise FormatVersionError(f"{what} format_version {version} incompatible with {FORMAT_VERSION}")


def _versioned(kind: str, body: dict) -> dict:
    return {"format_version": FORMAT_VERSION, "kind": kind, **body}


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def write_atomic(path, text: str) -> Path:
    """Write via a temp file in the same directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


# -- complex matrices ---------------------------------------------------------


def complex_to_json(a) -> list:
    a = np.asarray(a, dtype=complex)
    if a.ndim == 0:
        return [float(a.real), float(a.imag)]
    return [complex_to_json(row) for row in a]


def complex_from_json(data) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    if arr.shape[-1] != 2:
        raise ValueError("complex entries must be [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


def real_to_json(a) -> list:
    a = np.asarray(a, dtype=float)
    return [None if np.isnan(x) else float(x) for x in a] if a.ndim == 1 else [real_to_json(r) for r in a]


def real_from_json(data) -> np.ndarray:
    return np.array([[np.nan if x is None else x for x in row] for row in data], dtype=float)


# -- grids, transforms, circuits ------------------------------------------------


def grid_to_json(grid: FrequencyGrid) -> dict:
    return {
        "center_hz": grid.center_frequency / TWO_PI,
        "spacing_hz": grid.bin_spacing / TWO_PI,
        "n_min": grid.n_min,
        "n_max": grid.n_max,
    }


def grid_from_json(d: dict) -> FrequencyGrid:
    return FrequencyGrid(int(d["n_min"]), int(d["n_max"]), TWO_PI * float(d["center_hz"]),
                         TWO_PI * float(d["spacing_hz"]))


def modes_to_json(modes: QubitModeMap) -> dict:
    return {"c0": modes.c0, "c1": modes.c1, "t0": modes.t0, "t1": modes.t1}


def modes_from_json(d) -> QubitModeMap:
    if isinstance(d, (list, tuple)):
        return QubitModeMap(*[int(x) for x in d])
    return QubitModeMap(int(d["c0"]), int(d["c1"]), int(d["t0"]), int(d["t1"]), d.get("pump_labels"))


def mode_transform_to_json(v: ModeTransform) -> dict:
    return _versioned("mode_transform", {"grid": grid_to_json(v.grid), "entries": complex_to_json(v.entries)})


def mode_transform_from_json(d: dict) -> ModeTransform:
    check_version(d.get("format_version"), "mode_transform")
    return ModeTransform(grid_from_json(d["grid"]), complex_from_json(d["entries"]))


def element_to_json(e) -> dict:
    if isinstance(e, EomElement):
        return {"eom": {"m": e.modulation_index, "theta": e.rf_phase}}
    return {"ps": {"phases": {str(k): v for k, v in e.phases.items()}}}


def element_from_json(d: dict):
    if set(d) == {"eom"}:
        return EomElement(float(d["eom"]["m"]), float(d["eom"].get("theta", 0.0)))
    if set(d) == {"ps"}:
        return ShaperElement({int(k): float(v) for k, v in d["ps"].get("phases", {}).items()})
    raise ValueError(f"unknown element {d!r}")


def circuit_to_json(c: CircuitSpec) -> dict:
    return _versioned("circuit", {"grid": grid_to_json(c.grid), "elements": [element_to_json(e) for e in c.elements]})


def circuit_from_json(d: dict) -> CircuitSpec:
    check_version(d.get("format_version"), "circuit")
    return CircuitSpec(tuple(element_from_json(e) for e in d["elements"]), grid_from_json(d["grid"]))


# -- design -------------------------------------------------------------------


def target_from_json(t) -> np.ndarray:
    if t is None or (isinstance(t, str) and t.upper() == "CNOT"):
        return CNOT.copy()
    if isinstance(t, str):
        raise ValueError(f"unknown target gate {t!r}")
    return complex_from_json(t)


def problem_from_json(d: dict) -> DesignProblem:
    modes = modes_from_json(d.get("modes", {"c0": 0, "c1": 6, "t0": 7, "t1": 8}))
    grid = grid_from_json(d["grid"]) if "grid" in d else FrequencyGrid.around(modes.bins, int(d.get("guard", 16)))
    return DesignProblem(
        topology=d.get("topology", "2EOM/1PS"),
        target=target_from_json(d.get("target", "CNOT")),
        fidelity_floor=float(d.get("fidelity_floor", 0.9999)),
        modes=modes,
        grid=grid,
        shaped_bins=tuple(d["shaped_bins"]) if "shaped_bins" in d else None,
    )


def design_result_to_json(r: DesignResult, include_trace: bool = True) -> dict:
    body = {
        "status": "feasible" if r.feasible else "infeasible",
        "achieved_fidelity": r.achieved_fidelity,
        "achieved_success": r.achieved_success,
        "circuit": circuit_to_json(r.circuit),
        "modes": modes_to_json(r.modes),
        "v_projected": complex_to_json(r.v_projected),
        "total_modulation": r.total_modulation,
    }
    if include_trace:
        body["optimizer_trace"] = r.optimizer_trace
    return _versioned("design_result", body)


def design_result_from_json(d: dict) -> DesignResult:
    check_version(d.get("format_version"), "design_result")
    circuit = circuit_from_json(d["circuit"])
    return DesignResult(
        circuit=circuit,
        achieved_fidelity=float(d["achieved_fidelity"]),
        achieved_success=float(d["achieved_success"]),
        v_projected=complex_from_json(d["v_projected"]),
        feasible=d["status"] == "feasible",
        params=np.array([]),
        optimizer_trace=d.get("optimizer_trace", []),
        modes=modes_from_json(d["modes"]),
    )


# -- count data -----------------------------------------------------------------


def dataset_to_csv(data: CountDataset) -> str:
    buf = io.StringIO()
    buf.write(f"# format_version={FORMAT_VERSION}\n")
    for key, val in sorted(_dataset_metadata(data).items()):
        buf.write(f"# {key}={val!r}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for cfg, n in data:
        w.writerow([*cfg.input, *cfg.output, n.n_a, n.n_b, n.n_ab, int(cfg.frames)])
    return buf.getvalue()


def dataset_from_csv(text: str, noise: NoiseParams | None = None) -> CountDataset:
    lines = text.splitlines()
    meta = {}
    body = []
    for line in lines:
        if line.startswith("#"):
            key, sep, val = line[1:].strip().partition("=")
            if sep:
                meta[key.strip()] = val.strip()
        elif line.strip():
            body.append(line)
    check_version(meta.pop("format_version", None), "count CSV")
    meta = {k: float(v) for k, v in meta.items()}
    tau = meta.get("resolving_time")
    reader = csv.DictReader(body)
    if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
        raise ValueError(f"expected columns {CSV_COLUMNS}, got {reader.fieldnames}")
    records = []
    for row in reader:
        cfg = ExperimentConfig(frames=float(row["M"]), input=(int(row["input_k"]), int(row["input_l"])),
                               output=(int(row["output_r"]), int(row["output_s"])), resolving_time=tau)
        records.append((cfg, ConfigCounts(int(row["N_A"]), int(row["N_B"]), int(row["N_AB"]))))
    return CountDataset(tuple(records), noise=noise, metadata=meta)


def noise_to_json(p: NoiseParams | None):
    if p is None:
        return None
    return {"mu": p.mu, "eta_a": p.eta_a, "eta_b": p.eta_b, "dark_a": p.dark_a, "dark_b": p.dark_b}


def _dataset_metadata(data: CountDataset) -> dict:
    """Numeric metadata worth persisting: dark-count rates and resolving time."""
    meta = {k: v for k, v in data.metadata.items() if isinstance(v, (int, float))}
    if data.noise is not None:
        meta.setdefault("dark_a", data.noise.dark_a)
        meta.setdefault("dark_b", data.noise.dark_b)
    tau = next((c.resolving_time for c, _ in data if c.resolving_time is not None), None)
    if tau is not None:
        meta.setdefault("resolving_time", tau)
    return meta


def dataset_to_json(data: CountDataset, metadata: dict | None = None) -> dict:
    meta = dict(data.metadata)
    meta.update(_dataset_metadata(data))
    meta.update(metadata or {})
    rows = [dict(zip(CSV_COLUMNS, [*c.input, *c.output, n.n_a, n.n_b, n.n_ab, int(c.frames)])) for c, n in data]
    return _versioned("count_dataset", {"metadata": meta, "noise": noise_to_json(data.noise), "records": rows})


def dataset_from_json(d: dict) -> CountDataset:
    check_version(d.get("format_version"), "count_dataset")
    meta = d.get("metadata", {})
    noise = NoiseParams(**d["noise"]) if d.get("noise") else None
    tau = meta.get("resolving_time")
    records = []
    for row in d["records"]:
        cfg = ExperimentConfig(frames=float(row["M"]), input=(row["input_k"], row["input_l"]),
                               output=(row["output_r"], row["output_s"]), resolving_time=tau)
        records.append((cfg, ConfigCounts(int(row["N_A"]), int(row["N_B"]), int(row["N_AB"]))))
    return CountDataset(tuple(records), noise=noise, metadata=meta)


def load_dataset(path) -> CountDataset:
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".csv" or text.lstrip().startswith("#"):
        return dataset_from_csv(text)
    return dataset_from_json(json.loads(text))


# -- characterisation and inference ----------------------------------------------


def reconstruction_to_json(rec: ReconstructedMatrix, metrics: dict | None = None) -> dict:
    body = {
        "amplitude_mean": real_to_json(rec.amplitude_mean),
        "amplitude_std": real_to_json(rec.amplitude_std),
        "phase_mean": real_to_json(rec.phase_mean),
        "phase_std": real_to_json(rec.phase_std),
        "phase_determined": rec.phase_determined.tolist(),
        "phase_fixed": rec.phase_fixed.tolist(),
        "n_repeats": rec.n_repeats,
    }
    if metrics is not None:
        body["inferred"] = metrics
    return _versioned("reconstructed_matrix", body)


def reconstruction_from_json(d: dict) -> ReconstructedMatrix:
    check_version(d.get("format_version"), "reconstructed_matrix")
    return ReconstructedMatrix(
        real_from_json(d["amplitude_mean"]),
        real_from_json(d["amplitude_std"]),
        real_from_json(d["phase_mean"]),
        real_from_json(d["phase_std"]),
        np.array(d["phase_determined"], dtype=bool),
        np.array(d["phase_fixed"], dtype=bool),
        int(d["n_repeats"]),
    )


def summary_to_json(s: PosteriorSummary, extra: dict | None = None) -> dict:
    def ms(t):
        return {"mean": t[0], "std": t[1]}

    body = {
        "fidelity": ms(s.fidelity),
        "mu": ms(s.mu),
        "eta_a": ms(s.eta_a),
        "eta_b": ms(s.eta_b),
        "correct_output": ms(s.correct_output),
        "amplitude_mean": real_to_json(s.amplitude_mean),
        "amplitude_std": real_to_json(s.amplitude_std),
        "phase_mean": real_to_json(s.phase_mean),
        "phase_std": real_to_json(s.phase_std),
        "pathway_probabilities": real_to_json(s.pathway_probabilities),
        "pathway_std": real_to_json(s.pathway_std),
        "n_samples": s.n_samples,
    }
    body.update(extra or {})
    return _versioned("posterior_summary", body)


def summary_from_json(d: dict) -> PosteriorSummary:
    check_version(d.get("format_version"), "posterior_summary")

    def t(k):
        return (d[k]["mean"], d[k]["std"])

    return PosteriorSummary(
        fidelity=t("fidelity"),
        mu=t("mu"),
        eta_a=t("eta_a"),
        eta_b=t("eta_b"),
        amplitude_mean=real_from_json(d["amplitude_mean"]),
        amplitude_std=real_from_json(d["amplitude_std"]),
        phase_mean=real_from_json(d["phase_mean"]),
        phase_std=real_from_json(d["phase_std"]),
        pathway_probabilities=real_from_json(d["pathway_probabilities"]),
        pathway_std=real_from_json(d["pathway_std"]),
        correct_output=t("correct_output"),
        n_samples=int(d["n_samples"]),
    )


def chain_to_jsonl(samples: np.ndarray) -> str:
    lines = [json.dumps({"format_version": FORMAT_VERSION, "kind": "posterior_chain", "dim": int(samples.shape[1])})]
    lines += [json.dumps([float(v) for v in row]) for row in samples]
    return "\n".join(lines) + "\n"


def chain_from_jsonl(text: str) -> np.ndarray:
    lines = text.splitlines()
    header = json.loads(lines[0])
    check_version(header.get("format_version"), "posterior_chain")
    return np.array([json.loads(line) for line in lines[1:] if line.strip()], dtype=float).reshape(-1, header["dim"])
