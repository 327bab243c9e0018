"""Command-line driver: design, simulate, characterize, infer, report, pipeline.

Every command reads one JSON run configuration (``--config``), writes its
artifacts into ``--out`` via temp-file-and-rename, and finishes with a single
``manifest.json`` describing inputs, seeds and outputs.
"""

from __future__ import annotations

import argparse
import copy
import csv
import datetime as dt
import hashlib
import io as _io
import json
import logging
import sys
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__, constants
from . import io as fio
from .bayes import PriorSpec, cold_start, default_widths, infer, summarize, warm_start, LogPosterior
from .coherent import characterize, inferred_metrics
from .counting import CountDataset, NoiseParams, simulate_dataset
from .design import OptimizerConfig, optimize
from .optics import COINCIDENCE_BASIS, ModeTransform, QubitModeMap, compose, embed_computational, project_computational
from .sampling import NonFiniteInitError, SliceConfig

log = logging.getLogger("freqgate")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_NONFINITE_INIT = 4

STAGES = ("design", "simulate", "characterize", "infer", "report")


class ConfigError(Exception):
    def __init__(self, messages):
        super().__init__("; ".join(messages))
        self.messages = list(messages)


class InfeasibleDesign(Exception):
    pass


# -- configuration schema -------------------------------------------------------

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_RATE = {"type": "number", "minimum": 0, "exclusiveMaximum": 1}
_MODES = {
    "oneOf": [
        {"type": "object", "additionalProperties": False, "required": ["c0", "c1", "t0", "t1"],
         "properties": {k: {"type": "integer"} for k in ("c0", "c1", "t0", "t1")}},
        {"type": "array", "items": {"type": "integer"}, "minItems": 4, "maxItems": 4},
    ]
}
_MATRIX_SOURCE = {
    "oneOf": [
        {"enum": ["reference", "design"]},
        {"type": "object", "additionalProperties": False, "required": ["path"], "properties": {"path": {"type": "string"}}},
    ]
}
_PROBLEM = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "format_version": {"type": "string"},
        "kind": {"const": "design_problem"},
        "topology": {"oneOf": [{"enum": ["1PS", "2EOM/1PS", "3EOM/2PS"]},
                               {"type": "array", "items": {"enum": ["eom", "ps"]}, "minItems": 1}]},
        "target": {"oneOf": [{"const": "CNOT"}, {"type": "array"}]},
        "fidelity_floor": {"type": "number", "minimum": 0, "maximum": 1},
        "modes": _MODES,
        "guard": {"type": "integer", "minimum": 0},
        "shaped_bins": {"type": "array", "items": {"type": "integer"}},
    },
}
_NOISE = {
    "type": "object",
    "additionalProperties": False,
    "required": ["mu", "eta_a", "eta_b"],
    "properties": {"mu": _RATE, "eta_a": _RATE, "eta_b": _RATE, "dark_a": _RATE, "dark_b": _RATE},
}
SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "format_version": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "out": {"type": "string"},
        "design": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "problem": _PROBLEM,
                "restarts": {"type": "integer", "minimum": 1},
                "maxiter": {"type": "integer", "minimum": 1},
                "max_rounds": {"type": "integer", "minimum": 1},
            },
        },
        "simulate": {
            "type": "object",
            "additionalProperties": False,
            "required": ["noise"],
            "properties": {
                "matrix": _MATRIX_SOURCE,
                "noise": _NOISE,
                "frames": _POS,
                "resolving_time": _POS,
                "exact": {"type": "boolean"},
            },
        },
        "characterize": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "matrix": _MATRIX_SOURCE,
                "repeats": {"type": "integer", "minimum": 1},
                "n_phases": {"type": "integer", "minimum": 8},
                "noise_sigma": {"type": "number", "minimum": 0},
                "floor_db": _POS,
            },
        },
        "infer": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "data": {"type": "string"},
                "samples": {"type": "integer", "minimum": 1},
                "burn_in": {"type": "integer", "minimum": 0},
                "thinning": {"type": "integer", "minimum": 1},
                "pilot": {"type": "integer", "minimum": 4},
                "init": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {"matrix": _MATRIX_SOURCE, "mu": _RATE, "eta_a": _RATE, "eta_b": _RATE},
                },
                "cold_start": {"type": "boolean"},
                "dark_a": _RATE,
                "dark_b": _RATE,
                "norm_constraint": _POS,
                "exact": {"type": "boolean"},
            },
        },
        "report": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"data": {"type": "string"}, "summary": {"type": "string"}},
        },
    },
}


@dataclass
class RunConfig:
    blocks: dict
    seed: int = 0
    out: Path = Path("freqgate-out")
    format_version: str = fio.FORMAT_VERSION
    source: str | None = None
    raw: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict, source: str | None = None) -> "RunConfig":
        d = copy.deepcopy(d)
        if d.get("kind") == "design_problem" or "topology" in d:
            # a bare DesignProblem document
            d = {"format_version": d.get("format_version", fio.FORMAT_VERSION), "design": {"problem": d}}
        validator = jsonschema.Draft202012Validator(SCHEMA)
        errors = sorted(validator.iter_errors(d), key=lambda e: list(e.absolute_path))
        if errors:
            raise ConfigError([f"{'/'.join(map(str, e.absolute_path)) or '<root>'}: {e.message}" for e in errors])
        try:
            fio.check_version(d.get("format_version", fio.FORMAT_VERSION), "run config")
        except fio.FormatVersionError as exc:
            raise ConfigError([str(exc)]) from exc
        blocks = {k: d[k] for k in STAGES if k in d}
        return cls(blocks, int(d.get("seed", 0)), Path(d.get("out", "freqgate-out")),
                   d.get("format_version", fio.FORMAT_VERSION), source, d)


def bundled_configs() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("freqgate.configs").iterdir() if p.name.endswith(".json"))


def load_config(spec: str | None) -> tuple[dict, str | None, bytes]:
    """Path to a JSON file, or the name of a bundled configuration."""
    if spec is None:
        return {}, None, b"{}"
    path = Path(spec)
    if path.is_file():
        raw = path.read_bytes()
    else:
        res = resources.files("freqgate.configs") / f"{spec}.json"
        if not res.is_file():
            raise ConfigError([f"no config file or bundled config named {spec!r} (bundled: {', '.join(bundled_configs())})"])
        raw = res.read_bytes()
    try:
        return json.loads(raw), spec, raw
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{spec}: invalid JSON: {exc}"]) from exc


def stage_seed(seed: int, stage: str) -> int:
    digest = hashlib.sha256(f"{seed}:{stage}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# -- run context -----------------------------------------------------------------


class Run:
    def __init__(self, config: RunConfig, out: Path, fmt: str, command: str, config_bytes: bytes):
        self.config = config
        self.out = out
        self.fmt = fmt
        self.command = command
        self.config_bytes = config_bytes
        self.inputs: dict[str, str] = {}
        self.artifacts: list[str] = []
        self.seeds: dict[str, int] = {}
        self.notes: dict = {}
        self.started = dt.datetime.now(dt.timezone.utc).isoformat()

    def seed(self, stage: str) -> int:
        self.seeds[stage] = stage_seed(self.config.seed, stage)
        return self.seeds[stage]

    def write(self, name: str, text: str) -> Path:
        path = fio.write_atomic(self.out / name, text)
        if name not in self.artifacts:
            self.artifacts.append(name)
        return path

    def read_input(self, path: Path) -> Path:
        path = Path(path)
        if not path.is_file():
            raise ConfigError([f"input file not found: {path}"])
        self.inputs[str(path)] = sha256_file(path)
        return path

    def manifest(self, status: str, exit_code: int) -> dict:
        return {
            "format_version": fio.FORMAT_VERSION,
            "kind": "run_manifest",
            "command": self.command,
            "tool_version": __version__,
            "seed": self.config.seed,
            "stage_seeds": self.seeds,
            "config": {"source": self.config.source, "sha256": hashlib.sha256(self.config_bytes).hexdigest()},
            "inputs": self.inputs,
            "artifacts": self.artifacts,
            "status": status,
            "exit_code": exit_code,
            "notes": self.notes,
            "started": self.started,
            "finished": dt.datetime.now(dt.timezone.utc).isoformat(),
        }

    def block(self, stage: str) -> dict:
        if stage not in self.config.blocks:
            raise ConfigError([f"config has no '{stage}' block"])
        return self.config.blocks[stage]


def _dataset_name(fmt: str) -> str:
    return "counts.csv" if fmt == "csv" else "counts.json"


def _resolve_matrix(run: Run, source, modes: QubitModeMap | None = None) -> tuple[ModeTransform, QubitModeMap]:
    """Full-lattice transform plus the mode map its computational block lives on."""
    modes = modes or QubitModeMap()
    if source in (None, "reference"):
        return embed_computational(constants.design_matrix(), modes), modes
    path = run.out / "design_result.json" if source == "design" else Path(source["path"])
    run.read_input(path)
    d = fio.read_json(path)
    kind = d.get("kind")
    try:
        if kind == "design_result":
            res = fio.design_result_from_json(d)
            return compose(res.circuit), res.modes
        if kind == "circuit":
            return compose(fio.circuit_from_json(d)), modes
        if kind == "mode_transform":
            return fio.mode_transform_from_json(d), modes
        if kind == "matrix":
            fio.check_version(d.get("format_version"), "matrix")
            return embed_computational(fio.complex_from_json(d["entries"]), modes), modes
    except fio.FormatVersionError as exc:
        raise ConfigError([f"{path}: {exc}"]) from exc
    raise ConfigError([f"{path}: unsupported artifact kind {kind!r}"])


# -- stages ----------------------------------------------------------------------


def stage_design(run: Run, restarts: int | None = None, fidelity_floor: float | None = None) -> dict:
    block = run.block("design")
    problem_json = dict(block.get("problem", {}))
    if fidelity_floor is not None:
        problem_json["fidelity_floor"] = fidelity_floor
    try:
        problem = fio.problem_from_json(problem_json)
    except ValueError as exc:
        raise ConfigError([f"design/problem: {exc}"]) from exc
    cfg = OptimizerConfig()
    overrides = {k: block[k] for k in ("restarts", "maxiter", "max_rounds") if k in block}
    if restarts is not None:
        overrides["restarts"] = restarts
    cfg = replace(cfg, **overrides)
    result = optimize(problem, cfg, run.seed("design"))
    run.write("design_result.json", fio.dumps(fio.design_result_to_json(result)))
    run.write("design_summary.txt", design_summary(result, problem, cfg))
    run.notes["design"] = {"feasible": result.feasible, "success": result.achieved_success,
                           "fidelity": result.achieved_fidelity}
    if not result.feasible:
        raise InfeasibleDesign(f"no restart met the fidelity floor {problem.fidelity_floor}")
    return run.notes["design"]


def design_summary(result, problem, cfg) -> str:
    lines = [
        f"topology        {'/'.join(problem.topology)}",
        f"modes           C0={result.modes.c0} C1={result.modes.c1} T0={result.modes.t0} T1={result.modes.t1}",
        f"fidelity floor  {problem.fidelity_floor}",
        f"restarts        {cfg.restarts}",
        f"status          {'feasible' if result.feasible else 'INFEASIBLE'}",
        f"success P       {result.achieved_success:.6f}",
        f"fidelity F      {result.achieved_fidelity:.8f}",
        "elements (applied in this order):",
    ]
    for e in result.circuit.elements:
        if hasattr(e, "modulation_index"):
            lines.append(f"  EOM  m={e.modulation_index:.6f}  theta={e.rf_phase:+.6f}")
        else:
            ph = ", ".join(f"{n}:{p:+.4f}" for n, p in sorted(e.phases.items()) if abs(p) > 1e-12)
            lines.append(f"  PS   {ph or 'flat'}")
    lines.append("projected V (|V|, arg V) rows/cols C0 C1 T0 T1:")
    for row in result.v_projected:
        lines.append("  " + "  ".join(f"{abs(z):.4f}/{np.angle(z):+.4f}" for z in row))
    return "\n".join(lines) + "\n"


def stage_simulate(run: Run) -> CountDataset:
    block = run.block("simulate")
    v, modes = _resolve_matrix(run, block.get("matrix", "reference"))
    v4 = project_computational(v, modes)
    noise = NoiseParams(**block["noise"])
    data = simulate_dataset(v4, noise, float(block.get("frames", constants.FRAMES)), run.seed("simulate"),
                            exact=bool(block.get("exact", False)), resolving_time=block.get("resolving_time"))
    name = _dataset_name(run.fmt)
    run.write(name, fio.dataset_to_csv(data) if run.fmt == "csv" else fio.dumps(fio.dataset_to_json(data)))
    return data


def stage_characterize(run: Run) -> dict:
    block = run.block("characterize")
    v, modes = _resolve_matrix(run, block.get("matrix", "reference"))
    seed = run.seed("characterize")
    rec = characterize(v, modes, repeats=int(block.get("repeats", 5)), n_phases=int(block.get("n_phases", 16)),
                       noise_sigma=float(block.get("noise_sigma", 0.0)), seed=seed,
                       floor_db=float(block.get("floor_db", 60.0)))
    f_inf, p_inf = inferred_metrics(rec, seed=seed)
    metrics = {"F_inf": f_inf, "P_inf": p_inf, "undetermined_phases": int(rec.undetermined.sum())}
    run.write("reconstruction.json", fio.dumps(fio.reconstruction_to_json(rec, metrics)))
    return metrics


def _find_dataset(run: Run, given: str | None) -> Path:
    if given is not None:
        return Path(given)
    for name in (_dataset_name(run.fmt), "counts.csv", "counts.json"):
        if (run.out / name).is_file():
            return run.out / name
    raise ConfigError(["infer/report: no data path given and no counts file in the output directory"])


def stage_infer(run: Run) -> dict:
    block = run.block("infer")
    path = run.read_input(_find_dataset(run, block.get("data")))
    try:
        data = fio.load_dataset(path)
    except (fio.FormatVersionError, ValueError, KeyError) as exc:
        raise ConfigError([f"{path}: {exc}"]) from exc
    prior = PriorSpec(norm_constraint=float(block.get("norm_constraint", constants.NORM_CONSTRAINT)))
    dark_a = block.get("dark_a", data.metadata.get("dark_a", 0.0))
    dark_b = block.get("dark_b", data.metadata.get("dark_b", 0.0))
    kw = {"dark_a": float(dark_a), "dark_b": float(dark_b), "exact": bool(block.get("exact", False))}
    seed = run.seed("infer")
    init_block = block.get("init", {})
    if block.get("cold_start", False):
        init = cold_start(LogPosterior(data, prior, **kw), np.random.default_rng(seed),
                          rates=(init_block.get("mu", 0.01), init_block.get("eta_a", 1e-3), init_block.get("eta_b", 1e-3)))
    else:
        v, modes = _resolve_matrix(run, init_block.get("matrix", "reference"))
        init = warm_start(init_block.get("mu", constants.BME_MU), init_block.get("eta_a", constants.BME_ETA_A),
                          init_block.get("eta_b", constants.BME_ETA_B), prior, project_computational(v, modes))
    cfg = SliceConfig(widths=default_widths(init), burn_in=int(block.get("burn_in", 1024)),
                      thinning=block.get("thinning"), pilot=int(block.get("pilot", 512)))
    chain = infer(data, init, int(block.get("samples", 4096)), cfg, seed, prior, **kw)
    summary = summarize(chain, prior=prior)
    extra = {"burn_in": chain.burn_in, "thinning": chain.thinning, "diagnostics": chain.diagnostics}
    run.write("chain.jsonl", fio.chain_to_jsonl(chain.samples))
    run.write("summary.json", fio.dumps(fio.summary_to_json(summary, extra)))
    return {"fidelity": summary.fidelity, "thinning": chain.thinning}


def _table(header, rows) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def report_tables(data: CountDataset | None, summary=None) -> dict[str, tuple[list, list]]:
    """Coincidence, accidental and pathway tables as (header, rows), rows keyed by input state."""
    header = ["input", *COINCIDENCE_BASIS]
    coinc, acc = [], []
    by_key = {c.key: (c, n) for c, n in (data or ())}
    for i, label in enumerate(COINCIDENCE_BASIS):
        k, l = divmod(i, 2)
        cells = [by_key.get((k, l, *divmod(j, 2))) for j in range(4)]
        if not any(cells):
            continue
        coinc.append([label] + ["" if c is None else c[1].n_ab for c in cells])
        # 2 M p_A p_B with singles probabilities estimated as N / M
        acc.append([label] + ["" if c is None else repr(2.0 * c[1].n_a * c[1].n_b / c[0].frames) for c in cells])
    paths, path_std = [], []
    if summary is not None:
        for i, label in enumerate(COINCIDENCE_BASIS):
            paths.append([label] + [repr(float(x)) for x in summary.pathway_probabilities[i]])
            path_std.append([label] + [repr(float(x)) for x in summary.pathway_std[i]])
    tables = {"coincidences": (header, coinc), "accidentals": (header, acc),
              "pathways": (header, paths), "pathways_std": (header, path_std)}
    if summary is not None:
        labels = ["C0", "C1", "T0", "T1"]
        mh = ["output", *labels]
        for name, arr in (("amplitude_mean", summary.amplitude_mean), ("amplitude_std", summary.amplitude_std),
                          ("phase_mean", summary.phase_mean), ("phase_std", summary.phase_std)):
            tables[name] = (mh, [[labels[r]] + [repr(float(x)) for x in arr[r]] for r in range(4)])
    return tables


def stage_report(run: Run) -> dict:
    block = run.config.blocks.get("report", {})
    data = None
    data_path = block.get("data")
    if data_path is None:
        try:
            data_path = _find_dataset(run, None)
        except ConfigError:
            data_path = None
    if data_path is not None:
        data = fio.load_dataset(run.read_input(Path(data_path)))
    summary = None
    summary_path = block.get("summary")
    if summary_path is None and (run.out / "summary.json").is_file():
        summary_path = run.out / "summary.json"
    if summary_path is not None:
        summary = fio.summary_from_json(fio.read_json(run.read_input(Path(summary_path))))
    tables = report_tables(data, summary)
    for name, (header, rows) in tables.items():
        if run.fmt == "csv":
            run.write(f"report_{name}.csv", _table(header, rows))
        else:
            run.write(f"report_{name}.json",
                      fio.dumps({"format_version": fio.FORMAT_VERSION, "kind": "table", "name": name,
                                 "header": header, "rows": rows}))
    return {name: len(rows) for name, (_, rows) in tables.items()}


# -- entry point -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="freqgate", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in (*STAGES, "pipeline"):
        s = sub.add_parser(name)
        s.add_argument("--config", help="run-config JSON path or bundled config name")
        s.add_argument("--seed", type=int, help="global seed (overrides the config)")
        s.add_argument("--out", help="output directory (overrides the config)")
        s.add_argument("--format", choices=("json", "csv"), default="csv",
                       help="format for count data and report tables")
        s.add_argument("-v", "--verbose", action="store_true")
        if name in ("design", "pipeline"):
            s.add_argument("--restarts", type=int)
            s.add_argument("--fidelity-floor", type=float)
    sub.add_parser("list-configs", help="print the bundled configuration names")
    return p


def _error(kind: str, messages) -> None:
    print(json.dumps({"error": kind, "messages": list(messages)}), file=sys.stderr)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list-configs":
        print("\n".join(bundled_configs()))
        return EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")

    run = None
    raw, source, raw_bytes = {}, args.config, b""
    try:
        raw, source, raw_bytes = load_config(args.config)
        try:
            cfg = RunConfig.from_dict(raw, source)
        except ConfigError:
            # still record the failed run where the user asked for output
            out = args.out or (raw.get("out") if isinstance(raw, dict) and isinstance(raw.get("out"), str) else None)
            if out is not None:
                run = Run(RunConfig({}, source=source), Path(out), args.format, args.command, raw_bytes)
            raise
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError(["--seed must be non-negative"])
            cfg.seed = args.seed
        out = Path(args.out) if args.out else cfg.out
        run = Run(cfg, out, args.format, args.command, raw_bytes)
        if args.command == "design":
            stage_design(run, args.restarts, args.fidelity_floor)
        elif args.command == "simulate":
            stage_simulate(run)
        elif args.command == "characterize":
            stage_characterize(run)
        elif args.command == "infer":
            stage_infer(run)
        elif args.command == "report":
            stage_report(run)
        else:
            if not cfg.blocks:
                raise ConfigError(["pipeline config has no stage blocks"])
            for stage in STAGES:
                if stage not in cfg.blocks:
                    continue
                if stage == "design":
                    stage_design(run, args.restarts, args.fidelity_floor)
                else:
                    {"simulate": stage_simulate, "characterize": stage_characterize,
                     "infer": stage_infer, "report": stage_report}[stage](run)
    except ConfigError as exc:
        _error("config", exc.messages)
        return _finish(run, "config_error", EXIT_CONFIG)
    except InfeasibleDesign as exc:
        _error("infeasible_design", [str(exc)])
        return _finish(run, "infeasible", EXIT_INFEASIBLE)
    except NonFiniteInitError as exc:
        _error("non_finite_init", [str(exc)])
        return _finish(run, "non_finite_init", EXIT_NONFINITE_INIT)
    if args.command == "design":
        sys.stdout.write((run.out / "design_summary.txt").read_text())
    return _finish(run, "ok", EXIT_OK)


def _finish(run: Run | None, status: str, code: int) -> int:
    if run is not None:
        fio.write_atomic(run.out / "manifest.json", fio.dumps(run.manifest(status, code)))
    return code


if __name__ == "__main__":
    sys.exit(main())
