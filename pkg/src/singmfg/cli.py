"""Config-driven command line entry point.

Usage::

    singmfg --config experiment.json [--seed N] [--threads N] [--out DIR]

The config names one command and its parameters; see ``SCHEMAS`` for the
accepted keys.  Every run writes its data files plus ``manifest.json``.

Exit codes: 0 success, 2 invalid config / missing file / violated
precondition, 3 flagged non-convergence (outputs are still written).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import platform
import sys
import time
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .cadlag import (
    compactness_diagnostic,
    load_paths,
    m1_distance_matrix,
    m1_mesh,
    modified_oscillation,
    oscillation,
    path_from_json,
    strong_m1_oscillation,
)
from .control import RelaxedControlGrid, SingularControl, grid_from_json
from .dynamics import cost, model_from_json, simulate, validate_assumptions
from .measure import EmpiricalMeasure, EmpiricalPathMeasure, measure_from_json, path_wasserstein, wasserstein_p
from .mfg import CandidateFamily, SolverConfig, approx_study, solve_fixed_point, solve_general, solve_mckean_vlasov

EXIT_OK, EXIT_INVALID, EXIT_UNCONVERGED = 0, 2, 3

COMMANDS = (
    "m1-dist",
    "oscillation",
    "compactness",
    "wasserstein",
    "simulate",
    "solve-mfg",
    "solve-general",
    "solve-mv",
    "approx-study",
    "validate-model",
)


class ConfigError(Exception):
    pass


# -- schemas ---------------------------------------------------------------------

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_posint = {"type": "integer", "minimum": 1}
_files = {"type": "array", "items": {"type": "string"}, "minItems": 1}
_deltas = {"type": "array", "items": _pos, "minItems": 1}

_family = {
    "type": "object",
    "additionalProperties": False,
    "required": ["u_values"],
    "properties": {
        "u_values": {"type": "array", "items": _num, "minItems": 1},
        "knots": _posint,
        "mixtures": {"type": "boolean"},
        "jump_times": {"type": "array", "items": {"type": "number", "minimum": 0}},
        "heights": {"type": "array", "items": _pos},
        "ramps": {"type": "array", "items": {"type": "array", "items": _num, "minItems": 3, "maxItems": 3}},
    },
}
_solver = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "tol": _pos,
        "max_iter": _posint,
        "damping": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "n_paths": {"type": "integer", "minimum": 2},
        "grid_steps": _posint,
        "p": {"type": "number", "minimum": 1},
        "n_certificate": {"type": "integer", "minimum": 2},
        "certificate_N": {"type": "integer", "minimum": 16},
        "inner_tol": _pos,
        "inner_max_iter": _posint,
    },
}
_model = {"type": ["object", "string"]}


def _params(props: dict, required=()) -> dict:
    return {"type": "object", "additionalProperties": False, "properties": props, "required": list(required)}


SCHEMAS = {
    "m1-dist": (_params({"paths": _files}, ["paths"]), _params({"N": {"type": "integer", "minimum": 16}})),
    "oscillation": (
        _params({"paths": _files}, ["paths"]),
        _params({"deltas": _deltas, "t": _num, "resolution": _pos}, ["deltas"]),
    ),
    "compactness": (
        _params({"paths": _files}, ["paths"]),
        _params({"deltas": _deltas, "tol": _pos, "resolution": _pos}),
    ),
    "wasserstein": (
        _params({"mu": {"type": "string"}, "nu": {"type": "string"}}, ["mu", "nu"]),
        _params({"p": {"type": "number", "minimum": 1}, "space": {"enum": ["state", "path"]}, "N": {"type": "integer", "minimum": 16}}),
    ),
    "simulate": (
        _params({"model": {"type": "string"}, "regular": {"type": "string"}, "singular": {"type": "string"}}),
        _params(
            {
                "model": _model,
                "n_paths": _posint,
                "grid_steps": _posint,
                "u": _num,
                "dump_paths": {"type": "integer", "minimum": 0},
            }
        ),
    ),
    "solve-mfg": (
        _params({"model": {"type": "string"}}),
        _params({"model": _model, "m": _pos, "family": _family, "solver": _solver}, ["family"]),
    ),
    "solve-general": (
        _params({"model": {"type": "string"}}),
        _params(
            {"model": _model, "schedule": {"type": "array", "items": _pos, "minItems": 1}, "family": _family, "solver": _solver},
            ["schedule", "family"],
        ),
    ),
    "solve-mv": (
        _params({"model": {"type": "string"}}),
        _params({"model": _model, "m": _pos, "family": _family, "solver": _solver, "contrast": {"type": "boolean"}}, ["family"]),
    ),
    "approx-study": (
        _params({"model": {"type": "string"}}),
        _params(
            {
                "model": _model,
                "m": _pos,
                "n_list": {"type": "array", "items": _posint, "minItems": 1},
                "epsilon": _pos,
                "family": _family,
                "solver": _solver,
                "N": {"type": "integer", "minimum": 16},
            },
            ["n_list", "family"],
        ),
    ),
    "validate-model": (
        _params({"model": {"type": "string"}}),
        _params(
            {"model": _model, "n_samples": _posint, "x_range": _pos, "measure_scale": _pos, "atoms": _posint}
        ),
    ),
}

TOP_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["command"],
    "properties": {
        "command": {"enum": list(COMMANDS)},
        "inputs": {"type": "object"},
        "params": {"type": "object"},
        "seed": {"type": "integer", "minimum": 0},
        "output_dir": {"type": "string"},
    },
}


def validate_config(cfg: dict) -> None:
    """Raise :class:`ConfigError` unless ``cfg`` matches the command schema."""
    try:
        jsonschema.validate(cfg, TOP_SCHEMA)
        inputs_schema, params_schema = SCHEMAS[cfg["command"]]
        jsonschema.validate(cfg.get("inputs", {}), inputs_schema)
        jsonschema.validate(cfg.get("params", {}), params_schema)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {where}: {exc.message}") from None


# -- output helpers ----------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


class _Outputs:
    def __init__(self, out_dir: Path):
        self.dir = out_dir
        self.dir.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []

    def csv(self, name: str, header: list[str], rows) -> None:
        with open(self.dir / name, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_fmt(v) for v in r])
        self.files.append(name)

    def json(self, name: str, obj) -> None:
        text = json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=True)
        (self.dir / name).write_text(text + "\n", encoding="utf-8")
        self.files.append(name)


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _read_json(path: str, base: Path):
    p = Path(path)
    if not p.is_absolute():
        p = base / p
    if not p.exists():
        raise ConfigError(f"missing input file: {p}")
    try:
        return json.loads(p.read_text(encoding="utf-8")), p
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p} is not valid JSON: {exc}") from None


def _load_model(cfg: dict, base: Path):
    spec = cfg.get("params", {}).get("model")
    if spec is None and "model" in cfg.get("inputs", {}):
        spec, _ = _read_json(cfg["inputs"]["model"], base)
    elif isinstance(spec, str):
        spec, _ = _read_json(spec, base)
    if spec is None:
        raise ConfigError("a model is required (params.model or inputs.model)")
    try:
        return model_from_json(spec)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid model: {exc}") from None


def _load_paths(files, base: Path):
    out = {}
    for f in files:
        p = Path(f) if Path(f).is_absolute() else base / f
        if not p.exists():
            raise ConfigError(f"missing input file: {p}")
        try:
            loaded = load_paths(p)
        except (ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
            raise ConfigError(f"invalid path file {p}: {exc}") from None
        for k, v in loaded.items():
            key = k
            i = 1
            while key in out:
                key = f"{k}#{i}"
                i += 1
            out[key] = v
    return out


def _family(params: dict, model) -> CandidateFamily:
    fam = params["family"]
    try:
        return CandidateFamily.build(
            model.T,
            fam["u_values"],
            fam.get("knots", 1),
            fam.get("mixtures", False),
            fam.get("jump_times", []),
            fam.get("heights", []),
            fam.get("ramps", []),
            U=model.U,
        )
    except ValueError as exc:
        raise ConfigError(f"invalid family: {exc}") from None


def _solver(params: dict, seed: int, threads: int) -> SolverConfig:
    return SolverConfig(**params.get("solver", {}), seed=seed, threads=threads)


def _trace_rows(sol):
    return [(r["iter"], r["gap"], r["J"], r["candidate"]) for r in sol.trace]


# -- commands ------------------------------------------------------------------------


def _cmd_m1(cfg, base, out, seed, threads):
    params = cfg.get("params", {})
    N = params.get("N", 128)
    paths = _load_paths(cfg["inputs"]["paths"], base)
    ids = list(paths)
    try:
        D = m1_distance_matrix([paths[i] for i in ids], N)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out.csv("distances.csv", ["id", *ids], [(i, *D[k]) for k, i in enumerate(ids)])
    meshes = {f"{a}|{b}": m1_mesh(paths[a], paths[b], N) for k, a in enumerate(ids) for b in ids[k + 1:]}
    out.json(
        "m1_report.json",
        {"N": N, "ids": ids, "mesh": meshes, "identity_tol": 1e-12, "triangle_tol": "2 * max mesh of the pairs"},
    )
    if len(ids) == 2:
        print(repr(float(D[0, 1])))
    else:
        for k, a in enumerate(ids):
            for b in ids[k + 1:]:
                print(f"{a},{b},{float(D[k, ids.index(b)])!r}")
    return EXIT_OK


def _cmd_oscillation(cfg, base, out, seed, threads):
    params = cfg["params"]
    paths = _load_paths(cfg["inputs"]["paths"], base)
    res = params.get("resolution")
    rows = []
    for pid, x in paths.items():
        for d in params["deltas"]:
            row = [pid, d, strong_m1_oscillation(x, d, res), modified_oscillation(x, d, res)]
            if "t" in params:
                row.append(oscillation(x, params["t"], d))
            rows.append(row)
    header = ["path_id", "delta", "w_s", "modified"] + (["local_at_t"] if "t" in params else [])
    out.csv("oscillation.csv", header, rows)
    return EXIT_OK


def _cmd_compactness(cfg, base, out, seed, threads):
    params = cfg.get("params", {})
    paths = _load_paths(cfg["inputs"]["paths"], base)
    kw = {k: params[k] for k in ("tol", "resolution") if k in params}
    if "deltas" in params:
        kw["deltas"] = params["deltas"]
    try:
        rep = compactness_diagnostic(list(paths.values()), **kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out.json(
        "compactness.json",
        {
            "ids": list(paths),
            "sup_norm": rep.sup_norm,
            "deltas": list(rep.deltas),
            "modified_oscillation": list(rep.oscillations),
            "tol": rep.tol,
            "verdict": rep.verdict,
        },
    )
    out.csv("compactness.csv", ["delta", "modified_oscillation"], zip(rep.deltas, rep.oscillations))
    print(rep.verdict)
    return EXIT_OK


def _load_measure(path: str, base: Path, space: str):
    if space == "state":
        obj, p = _read_json(path, base)
        try:
            return measure_from_json(obj)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"invalid measure {p}: {exc}") from None
    paths = _load_paths([path], base)
    try:
        return EmpiricalPathMeasure.from_paths(list(paths.values()))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _cmd_wasserstein(cfg, base, out, seed, threads):
    params = cfg.get("params", {})
    p = params.get("p", 1.0)
    space = params.get("space", "state")
    N = params.get("N", 128)
    mu = _load_measure(cfg["inputs"]["mu"], base, space)
    nu = _load_measure(cfg["inputs"]["nu"], base, space)
    try:
        if space == "state":
            value = wasserstein_p(mu, nu, p=p)
            ground, grid = "euclidean", ""
        else:
            value = path_wasserstein(mu, nu, p, N)
            ground, grid = "m1", N
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    id1, id2 = Path(cfg["inputs"]["mu"]).stem, Path(cfg["inputs"]["nu"]).stem
    out.csv("wasserstein.csv", ["id1", "id2", "p", "value", "ground", "grid"], [(id1, id2, p, value, ground, grid)])
    print(repr(float(value)))
    return EXIT_OK


def _cmd_simulate(cfg, base, out, seed, threads):
    params = cfg.get("params", {})
    inputs = cfg.get("inputs", {})
    model = _load_model(cfg, base)
    n_paths = params.get("n_paths", 1000)
    steps = params.get("grid_steps", 100)
    if "regular" in inputs:
        obj, _ = _read_json(inputs["regular"], base)
        Q = grid_from_json(obj)
    else:
        Q = RelaxedControlGrid.constant(model.T, params.get("u", 0.0))
    Z = None
    if "singular" in inputs:
        obj, _ = _read_json(inputs["singular"], base)
        try:
            Z = SingularControl(path_from_json(obj))
        except ValueError as exc:
            raise ConfigError(f"invalid singular control: {exc}") from None
    grid = np.linspace(0.0, model.T, steps + 1)
    ens = simulate(model, None, Q, Z, grid, n_paths, seed)
    J, se = cost(model, ens)
    xT = ens.X[:, -1]
    dump = min(params.get("dump_paths", 100), n_paths)
    out.csv(
        "ensemble.csv",
        ["path_id", "t", "X_t"],
        ((i, t, x) for i in range(dump) for t, x in zip(ens.times, ens.X[i])),
    )
    out.json(
        "simulation.json",
        {
            "n_paths": n_paths,
            "grid_points": int(ens.times.size),
            "mean_X_T": float(xT.mean()),
            "var_X_T": float(xT.var(ddof=1)) if n_paths > 1 else 0.0,
            "cost": J,
            "cost_se": se,
            "mode": "interacting particles (moments from the simulated cloud)",
            "note": "relaxed controls simulated with aggregated drift and squared diffusion",
        },
    )
    return EXIT_OK


def _cmd_solve_mfg(cfg, base, out, seed, threads):
    params = cfg["params"]
    model = _load_model(cfg, base)
    sol = solve_fixed_point(model, params.get("m"), _family(params, model), _solver(params, seed, threads))
    out.csv("trace.csv", ["iter", "gap", "J", "candidate"], _trace_rows(sol))
    out.json("solution.json", sol.summary())
    print(f"{sol.status} after {sol.iterations} iterations, J={sol.J!r}")
    return EXIT_OK if sol.converged else EXIT_UNCONVERGED


def _cmd_solve_general(cfg, base, out, seed, threads):
    params = cfg["params"]
    model = _load_model(cfg, base)
    try:
        sols, report = solve_general(model, params["schedule"], _family(params, model), _solver(params, seed, threads))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    rows = [(m, r["iter"], r["gap"], r["J"], r["candidate"]) for m, s in zip(params["schedule"], sols) for r in s.trace]
    out.csv("trace.csv", ["m", "iter", "gap", "J", "candidate"], rows)
    out.json("solutions.json", {"report": report, "solutions": [s.summary() for s in sols]})
    print(report["verdict"])
    return EXIT_OK if all(s.converged for s in sols) else EXIT_UNCONVERGED


def _cmd_solve_mv(cfg, base, out, seed, threads):
    params = cfg["params"]
    model = _load_model(cfg, base)
    sol, contrast = solve_mckean_vlasov(
        model, params.get("m"), _family(params, model), _solver(params, seed, threads), params.get("contrast", True)
    )
    out.csv(
        "table.csv",
        ["index", "regular", "singular", "J", "se", "inner_iterations", "inner_gap", "inner_converged"],
        [
            (r["index"], r["regular"], r["singular"], r["J"], r["se"], r["inner_iterations"], r["inner_gap"], r["inner_converged"])
            for r in sol.table
        ],
    )
    out.json("solution.json", dict(sol.summary(), contrast=contrast))
    print(f"{sol.status}, J={sol.J!r}")
    return EXIT_OK if sol.converged else EXIT_UNCONVERGED


def _cmd_approx(cfg, base, out, seed, threads):
    params = cfg["params"]
    model = _load_model(cfg, base)
    try:
        res = approx_study(
            model,
            params["n_list"],
            params.get("m"),
            _family(params, model),
            _solver(params, seed, threads),
            params.get("epsilon"),
            params.get("N", 256),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out.csv(
        "approx.csv",
        ["n", "wasserstein_gap", "abs_dJ", "mean_d_m1", "std_error"],
        [(r["n"], r["wasserstein_gap"], r["abs_dJ"], r["mean_d_m1"], r["std_error"]) for r in res["rows"]],
    )
    out.json("approx.json", res)
    statuses = [res["status_star"]] + [r["status_n"] for r in res["rows"]]
    return EXIT_OK if all(s == "converged" for s in statuses) else EXIT_UNCONVERGED


def _cmd_validate(cfg, base, out, seed, threads):
    params = dict(cfg.get("params", {}))
    params.pop("model", None)
    model = _load_model(cfg, base)
    rep = validate_assumptions(model, seed=seed, **params)
    out.json("assumptions.json", rep.to_json())
    out.csv("assumptions.csv", ["check", "passed", "margin"], [(c["name"], c["passed"], c["margin"]) for c in rep.checks])
    for c in rep.checks:
        print(f"{'ok  ' if c['passed'] else 'FAIL'} {c['name']}: margin {c['margin']:.6g}")
    return EXIT_OK


HANDLERS = {
    "m1-dist": _cmd_m1,
    "oscillation": _cmd_oscillation,
    "compactness": _cmd_compactness,
    "wasserstein": _cmd_wasserstein,
    "simulate": _cmd_simulate,
    "solve-mfg": _cmd_solve_mfg,
    "solve-general": _cmd_solve_general,
    "solve-mv": _cmd_solve_mv,
    "approx-study": _cmd_approx,
    "validate-model": _cmd_validate,
}


def _versions() -> dict:
    import numba
    import scipy

    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
        "jsonschema": metadata.version("jsonschema"),
        "singmfg": __version__,
    }


def run(cfg: dict, base: Path = Path("."), seed: int | None = None, threads: int = 1, out_dir: str | None = None) -> int:
    """Execute one config and return the exit code.

    Relative input paths and ``output_dir`` resolve against ``base`` (the
    directory of the config file); an explicit ``out_dir`` is used as given.
    """
    validate_config(cfg)
    seed = cfg.get("seed", 0) if seed is None else seed
    out = _Outputs(Path(out_dir) if out_dir else base / cfg.get("output_dir", "out"))
    started = datetime.now(timezone.utc)
    t0 = time.perf_counter()
    code = HANDLERS[cfg["command"]](cfg, base, out, seed, threads)
    manifest = {
        "command": cfg["command"],
        "config": cfg,
        "seed": seed,
        "threads": threads,
        "exit_code": code,
        "status": {EXIT_OK: "ok", EXIT_UNCONVERGED: "unconverged"}.get(code, "error"),
        "versions": _versions(),
        "outputs": [
            {"file": f, "sha256": hashlib.sha256((out.dir / f).read_bytes()).hexdigest()} for f in out.files
        ],
        "started_at": started.isoformat(),
        "wall_time_s": time.perf_counter() - t0,
    }
    (out.dir / "manifest.json").write_text(json.dumps(_clean(manifest), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return code


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="singmfg", description="Singular-control mean field game experiments.")
    ap.add_argument("--config", required=True, help="experiment config (JSON)")
    ap.add_argument("--seed", type=int, default=None, help="override the config seed")
    ap.add_argument("--threads", type=int, default=1, help="cap on worker threads")
    ap.add_argument("--out", default=None, help="output directory (overrides output_dir)")
    args = ap.parse_args(argv)
    path = Path(args.config)
    if not path.exists():
        print(f"error: missing config file {path}", file=sys.stderr)
        return EXIT_INVALID
    try:
        cfg = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        print(f"error: config is not valid JSON: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if args.threads < 1:
        print("error: --threads must be positive", file=sys.stderr)
        return EXIT_INVALID
    try:
        return run(cfg, path.parent, args.seed, args.threads, args.out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
