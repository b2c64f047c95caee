"""Command-line front end.

Exit codes: 0 ok, 2 configuration error, 3 solver error, 4 missing
artifacts, 5 infeasible potentials.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import sys
from contextlib import nullcontext
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .analysis import (
    DegenerateOutputError,
    circular_map_extract,
    identity_estimate,
    map_error,
    pair_marginal,
    terminal_coupling,
)
from .constraints import ConstraintSystem, ConvergenceError
from .cost import CostKind, QuadraticCost, dynamic_cost, semiconvex_shift
from .duality import (
    DualPotentials,
    domination_check,
    dual_objective,
    hj_residual,
    lifted_potentials,
    load_potentials,
    static_duals,
)
from .flows import SourceSpec, realize_source
from .grid import GridError, GridSpec, StaggeredField
from .measures import ValidationError, normalize
from .oracle import PRESETS, analytic_map, comonotone_coupling, preset_marginal, static_optimum
from .solver import DIAGNOSTIC_COLUMNS, SolverParams, solve

logger = logging.getLogger("dmmot")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_MISSING, EXIT_INFEASIBLE = 0, 2, 3, 4, 5


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


# Configuration -----------------------------------------------------------------

DEFAULT_CONFIG = {
    "problem": {
        "k": 3,
        "cost": {"type": "quadratic_pairwise", "alpha": 0.0, "scale": 1.0},
        "marginals": [
            {"preset": "paper_mu1", "delta": 0.2},
            {"preset": "paper_mu2"},
            {"preset": "paper_mu3"},
        ],
        "source": {"type": "diagonal", "nu": {"preset": "uniform"}},
    },
    "grid": {"n_t": 10, "n_x": 10, "scaling_mode": "divided_differences"},
    "solver": {
        "theta": 1.0,
        "sigma": 85.0,
        "tau": 0.1,
        "iterations": 5000,
        "projection_tol": 1e-10,
        "projection_method": "spectral",
        "max_inner_iterations": None,
        "enforce_step_rule": False,
        "free_initial": False,
        "log_every": 1,
        "seed": 0,
    },
    "diffusion": {"epsilon": 0.0},
    "analysis": {"condition_on": "row_marginal"},
    "check": {"tolerance": 1e-6},
    "output": {"directory": "run"},
}

_POS = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}
_MEASURE = {
    "oneOf": [
        {"type": "string", "enum": list(PRESETS)},
        {
            "type": "object",
            "properties": {"preset": {"enum": list(PRESETS)}, "delta": _NONNEG},
            "required": ["preset"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {"mass": {"type": "array", "items": _NONNEG, "minItems": 2}},
            "required": ["mass"],
            "additionalProperties": False,
        },
    ]
}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "problem": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "k": {"type": "integer", "minimum": 2},
                "cost": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "type": {"enum": [c.value for c in CostKind]},
                        "alpha": _NONNEG,
                        "scale": _POS,
                    },
                },
                "marginals": {"type": "array", "items": _MEASURE, "minItems": 2},
                "source": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "type": {"enum": ["diagonal", "delta", "explicit"]},
                        "nu": _MEASURE,
                        "point": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                        "mass": {"type": "array"},
                    },
                    "required": ["type"],
                },
            },
        },
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_t": {"type": "integer", "minimum": 1},
                "n_x": {"type": "integer", "minimum": 2},
                "scaling_mode": {"enum": ["divided_differences", "paper_literal"]},
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "theta": {"type": "number", "minimum": 0, "maximum": 1},
                "sigma": _POS,
                "tau": _POS,
                "iterations": {"type": "integer", "minimum": 0},
                "projection_tol": _POS,
                "projection_method": {"enum": ["spectral", "direct", "cg"]},
                "max_inner_iterations": {"type": ["integer", "null"], "minimum": 1},
                "enforce_step_rule": {"type": "boolean"},
                "free_initial": {"type": "boolean"},
                "log_every": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
            },
        },
        "diffusion": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"epsilon": _NONNEG},
        },
        "analysis": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"condition_on": {"enum": ["row_marginal", "target_mu1"]}},
        },
        "check": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"tolerance": _NONNEG},
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"directory": {"type": "string"}},
        },
    },
}


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict) and key not in ("source",):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def resolve_config(raw: dict) -> dict:
    """Validate a user config and expand all defaults.

    A manifest written by ``solve`` is accepted too; its embedded config is
    used.
    """
    if not isinstance(raw, dict):
        raise CliError("config: top level must be a JSON object", EXIT_CONFIG)
    if "manifest_version" in raw and "config" in raw:
        raw = raw["config"]
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        key = ".".join(str(p) for p in exc.absolute_path) or "config"
        raise CliError(f"{key}: {exc.message}", EXIT_CONFIG) from None
    cfg = _merge(DEFAULT_CONFIG, raw)
    k = cfg["problem"]["k"]
    if len(cfg["problem"]["marginals"]) != k:
        raise CliError(
            f"problem.marginals: expected {k} marginals for k={k}, got {len(cfg['problem']['marginals'])}",
            EXIT_CONFIG,
        )
    return cfg


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise CliError(f"config: cannot read {path}: {exc.strerror}", EXIT_CONFIG) from None
    except json.JSONDecodeError as exc:
        raise CliError(f"config: {path} is not valid JSON ({exc.msg} at line {exc.lineno})", EXIT_CONFIG) from None
    return resolve_config(raw)


def _measure(spec, n_x: int, key: str) -> np.ndarray:
    if isinstance(spec, str):
        spec = {"preset": spec}
    try:
        if "preset" in spec:
            return preset_marginal(spec["preset"], n_x, spec.get("delta", 0.2))
        mass = np.asarray(spec["mass"], dtype=float)
        if mass.shape != (n_x,):
            raise CliError(f"{key}.mass: expected {n_x} entries, got {mass.size}", EXIT_CONFIG)
        return normalize(mass, key)
    except ValidationError as exc:
        raise CliError(f"{key}: {exc}", EXIT_CONFIG) from None


class Problem:
    """Objects built from a resolved config."""

    def __init__(self, cfg: dict):
        self.cfg = cfg
        p, gr, so = cfg["problem"], cfg["grid"], cfg["solver"]
        try:
            self.grid = GridSpec(p["k"], gr["n_t"], gr["n_x"], gr["scaling_mode"])
        except GridError as exc:
            raise CliError(f"grid: {exc}", EXIT_CONFIG) from None
        n = self.grid.n_x
        self.marginals = [_measure(m, n, f"problem.marginals.{i}") for i, m in enumerate(p["marginals"])]
        self.source = self._source(p["source"])
        base = QuadraticCost(p["cost"]["type"], self.grid.k, 0.0, p["cost"]["scale"])
        self.cost, self.correction = semiconvex_shift(base, p["cost"]["alpha"], self.marginals, n)
        try:
            self.constraints = ConstraintSystem(
                self.grid,
                tuple(self.marginals),
                None if so["free_initial"] else self.source,
                diffusion_epsilon=cfg["diffusion"]["epsilon"],
                projector_tolerance=so["projection_tol"],
                max_inner_iterations=so["max_inner_iterations"],
                method=so["projection_method"],
            )
            self.params = SolverParams(
                theta=so["theta"],
                sigma=so["sigma"],
                tau=so["tau"],
                iterations=so["iterations"],
                log_every=so["log_every"],
                enforce_step_rule=so["enforce_step_rule"],
                seed=so["seed"],
            )
        except ValidationError as exc:
            raise CliError(f"solver: {exc}", EXIT_CONFIG) from None

    def _source(self, spec: dict) -> np.ndarray:
        g = self.grid
        kind = spec["type"]
        try:
            if kind == "diagonal":
                s = SourceSpec.diagonal(_measure(spec.get("nu", "uniform"), g.n_x, "problem.source.nu"))
            elif kind == "delta":
                s = SourceSpec.delta(spec.get("point", [0] * g.k))
            else:
                if "mass" not in spec:
                    raise CliError("problem.source.mass: required for an explicit source", EXIT_CONFIG)
                s = SourceSpec.explicit(np.reshape(np.asarray(spec["mass"], dtype=float), g.spatial_shape))
            return realize_source(s, g)
        except (ValidationError, ValueError) as exc:
            raise CliError(f"problem.source: {exc}", EXIT_CONFIG) from None


# Serialization -----------------------------------------------------------------


def _num(x) -> str:
    return f"{float(x):.17g}"


def _json_num(x):
    x = float(x)
    return x if np.isfinite(x) else str(x)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, (str, int, np.integer)) else _num(v) for v in row])


def write_field_snapshots(out: Path, u: StaggeredField, g: GridSpec) -> None:
    pi = u.pi_s.reshape(g.n_t + 1, -1)
    _write_csv(out / "pi_s.csv", ["t_index", "flat_index", "pi_s"],
               ((i, j, pi[i, j]) for i in range(pi.shape[0]) for j in range(pi.shape[1])))
    for l in range(g.k):
        m = u.m_s[l].reshape(g.n_t, -1)
        _write_csv(out / f"m_s_{l + 1}.csv", ["t_index", "flat_index", f"m_s_{l + 1}"],
                   ((i, j, m[i, j]) for i in range(m.shape[0]) for j in range(m.shape[1])))


def read_field_snapshots(run: Path, g: GridSpec) -> StaggeredField:
    def read(path, shape):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        arr = np.zeros(shape[0] * int(np.prod(shape[1:])))
        arr[(data[:, 0] * int(np.prod(shape[1:])) + data[:, 1]).astype(int)] = data[:, 2]
        return arr.reshape(shape)

    pi = read(run / "pi_s.csv", (g.n_t + 1,) + g.spatial_shape)
    m = np.stack([read(run / f"m_s_{l + 1}.csv", (g.n_t,) + g.spatial_shape) for l in range(g.k)])
    return StaggeredField(pi, m)


def write_coupling(path: Path, mass: np.ndarray) -> None:
    k = mass.ndim
    idx = np.indices(mass.shape).reshape(k, -1).T
    _write_csv(path, [f"i{l + 1}" for l in range(k)] + ["mass"],
               (tuple(int(v) for v in row) + (m,) for row, m in zip(idx, mass.ravel())))


def read_coupling(path: Path, k: int, n_x: int) -> np.ndarray:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    out = np.zeros((n_x,) * k)
    out[tuple(data[:, :k].astype(int).T)] = data[:, k]
    return out


def _svg_plot(series, title: str) -> str:
    """Self-contained SVG line plot of ``(label, xs, ys, color, dashed)`` series on [0,1]^2."""
    w, h, pad = 420, 420, 40

    def pt(x, y):
        return f"{pad + x * (w - 2 * pad):.2f},{h - pad - y * (h - 2 * pad):.2f}"

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">',
        f'<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>',
        f'<rect x="{pad}" y="{pad}" width="{w - 2 * pad}" height="{h - 2 * pad}" fill="none" stroke="black"/>',
        f'<text x="{w / 2}" y="{pad / 2}" text-anchor="middle" font-size="14">{title}</text>',
    ]
    for tick in (0.0, 0.5, 1.0):
        x0, y0 = pt(tick, 0).split(",")
        parts.append(f'<text x="{x0}" y="{float(y0) + 16}" text-anchor="middle" font-size="11">{tick:g}</text>')
        x1, y1 = pt(0, tick).split(",")
        parts.append(f'<text x="{float(x1) - 6}" y="{y1}" text-anchor="end" font-size="11">{tick:g}</text>')
    for row, (label, xs, ys, color, dashed) in enumerate(series):
        pts = " ".join(pt(x, y) for x, y in zip(xs, ys) if np.isfinite(y))
        dash = ' stroke-dasharray="5,4"' if dashed else ""
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>')
        parts.append(f'<text x="{pad + 8}" y="{pad + 16 + 14 * row}" font-size="11" fill="{color}">{label}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# Commands ----------------------------------------------------------------------


def _prepare_out(out: Path, force: bool) -> None:
    if out.exists() and any(out.iterdir()) and not force:
        raise CliError(f"output: {out} exists and is not empty (use --force to overwrite)", EXIT_CONFIG)
    out.mkdir(parents=True, exist_ok=True)


def _run_dir(args) -> Path:
    run = args.run_dir or args.out
    if run is None:
        raise CliError("a run directory is required", EXIT_CONFIG)
    return Path(run)


def _load_run(run: Path) -> tuple[dict, dict]:
    path = run / "manifest.json"
    if not path.is_file():
        raise CliError(f"missing artifact: {path}", EXIT_MISSING)
    manifest = json.loads(path.read_text())
    return manifest, resolve_config(manifest["config"])


def cmd_solve(args) -> int:
    if args.config is None:
        raise CliError("config: --config is required for solve", EXIT_CONFIG)
    cfg = load_config(args.config)
    out = Path(args.out or cfg["output"]["directory"])
    cfg["output"]["directory"] = str(out)
    prob = Problem(cfg)
    _prepare_out(out, args.force)
    try:
        h, centered, diag = solve(prob.constraints, prob.cost, prob.params)
    except ValidationError as exc:
        raise CliError(f"solver.enforce_step_rule: {exc}", EXIT_CONFIG) from None
    except ConvergenceError as exc:
        raise CliError(f"solver: projection did not converge (residual {exc.residual:.3g})", EXIT_SOLVER) from None
    g = prob.grid
    _write_csv(out / "diagnostics.csv", DIAGNOSTIC_COLUMNS, diag.rows)
    write_coupling(out / "coupling.csv", h.pi_s[-1])
    write_field_snapshots(out, h, g)
    finite = bool(np.all(np.isfinite(h.pi_s)) and np.all(np.isfinite(h.m_s)))
    with np.errstate(all="ignore"):
        strict = dynamic_cost(centered, prob.cost, g) if finite else float("nan")
        relaxed = dynamic_cost(centered, prob.cost, g, relaxed=True) if finite else float("nan")
    report = prob.constraints.residual_report(h)
    manifest = {
        "manifest_version": 1,
        "version": __version__,
        "config": cfg,
        "grid": g.to_dict(),
        "cost": prob.cost.to_dict(),
        "semiconvex_correction": prob.correction,
        "solver": {
            "opnorm_estimate": diag.opnorm,
            "sigma_tau_opnorm_sq": diag.step_product,
            "step_rule_satisfied": bool(diag.step_product < 1.0),
            "wall_time_seconds": diag.wall_time,
            "iterations_run": diag.final_state.iteration if diag.final_state else 0,
        },
        "result": {
            "finite": finite,
            "dynamic_cost": _json_num(strict),
            "objective": _json_num(relaxed),
            "residuals": {key: _json_num(v) for key, v in report.items()},
        },
    }
    _write_json(out / "manifest.json", manifest)
    if not finite:
        print(f"dmmot: iterates diverged (sigma*tau*||K||^2 = {diag.step_product:.4g}); outputs written to {out}",
              file=sys.stderr)
        return EXIT_SOLVER
    print(f"solved: objective {relaxed:.6g}, sigma*tau*||K||^2 = {diag.step_product:.4g}, "
          f"{diag.wall_time:.1f} s -> {out}")
    return EXIT_OK


def cmd_compare(args) -> int:
    run = _run_dir(args)
    manifest, cfg = _load_run(run)
    prob = Problem(cfg)
    g = prob.grid
    cpath = run / "coupling.csv"
    if not cpath.is_file():
        raise CliError(f"missing artifact: {cpath}", EXIT_MISSING)
    try:
        tc = terminal_coupling(read_coupling(cpath, g.k, g.n_x))
    except DegenerateOutputError as exc:
        raise CliError(f"compare: {exc}", EXIT_SOLVER) from None
    mu1 = prob.marginals[0]
    x = g.x_centered()
    rows, maps, series = [], {}, []
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]
    for l in range(1, g.k):
        pair = pair_marginal(tc.mass, 0, l)
        est = circular_map_extract(pair, mu1, cfg["analysis"]["condition_on"])
        ref = analytic_map(mu1, prob.marginals[l])
        err = map_error(est, ref, mu1)
        err["baseline_identity_l1"] = map_error(identity_estimate(g.n_x), ref, mu1)["l1"]
        maps[f"1->{l + 1}"] = {key: _json_num(v) for key, v in err.items()}
        d = np.abs(np.where(est.valid, est.values, 0.0) - ref) % 1.0
        d = np.minimum(d, 1.0 - d)
        for j in range(g.n_x):
            rows.append((l + 1, x[j], est.values[j], ref[j], d[j] if est.valid[j] else np.nan, int(est.valid[j])))
        c = colors[(l - 1) % len(colors)]
        series.append((f"T_1->{l + 1} numerical", x, est.values, c, False))
        series.append((f"T_1->{l + 1} analytic", x, ref, c, True))
    _write_csv(run / "maps.csv", ["target", "x1", "T_est", "T_ref", "circular_error", "valid"], rows)
    summary = {"clipped_mass": tc.clipped_mass, "condition_on": cfg["analysis"]["condition_on"], "maps": maps}
    _write_json(run / "summary.json", summary)
    (run / "maps.svg").write_text(_svg_plot(series, "transport maps from the first marginal"))
    for name, e in maps.items():
        print(f"{name}: l1 {e['l1']}, linf {e['linf']}, coverage {e['coverage']}, identity baseline {e['baseline_identity_l1']}")
    return EXIT_OK


def cmd_check(args) -> int:
    run = _run_dir(args)
    manifest, cfg = _load_run(run)
    prob = Problem(cfg)
    g = prob.grid
    if args.potentials and args.lift_oracle:
        raise CliError("check: use either --potentials or --lift-oracle", EXIT_CONFIG)
    if args.potentials:
        try:
            pot = load_potentials(args.potentials, g)
        except OSError:
            raise CliError(f"missing artifact: {args.potentials}", EXIT_MISSING) from None
        except (ValidationError, ValueError, IndexError) as exc:
            raise CliError(f"potentials: {exc}", EXIT_CONFIG) from None
        origin = str(args.potentials)
    elif args.lift_oracle:
        lam, _ = static_duals(prob.marginals, prob.cost)
        pot = lifted_potentials(lam, prob.cost, g)
        origin = "lifted static duals"
    else:
        pot = DualPotentials.zeros(g)
        origin = "zero"
    tol = cfg["check"]["tolerance"] if args.tol is None else args.tol
    # iterates may carry slightly negative mass, where the strict cost is +inf;
    # the gap uses the solver's objective, which skips those cells
    primal = float(manifest["result"]["objective"])
    strict = float(manifest["result"]["dynamic_cost"])
    hj = hj_residual(pot, prob.cost, g)
    dom = domination_check(pot, prob.marginals)
    dual = dual_objective(pot, prob.marginals, prob.source)
    feasible = bool(hj <= tol and dom <= tol)
    result = {
        "potentials": origin,
        "tolerance": tol,
        "hj_residual": _json_num(hj),
        "domination_residual": _json_num(dom),
        "dual_objective": _json_num(dual),
        "primal_objective": _json_num(primal),
        "primal_dynamic_cost": _json_num(strict),
        "gap": _json_num(primal - dual),
        "feasible": feasible,
    }
    _write_json(run / "check.json", result)
    for key, val in result.items():
        print(f"{key}: {val}")
    return EXIT_OK if feasible else EXIT_INFEASIBLE


def cmd_oracle(args) -> int:
    if args.config is None:
        raise CliError("config: --config is required for oracle", EXIT_CONFIG)
    cfg = load_config(args.config)
    cost = cfg["problem"]["cost"]
    if cost["type"] != CostKind.QUADRATIC_PAIRWISE.value or cost["alpha"] != 0:
        raise CliError("problem.cost: the oracle supports the unshifted quadratic_pairwise cost only", EXIT_CONFIG)
    out = Path(args.out or cfg["output"]["directory"])
    n = cfg["grid"]["n_x"]
    margs = [_measure(m, n, f"problem.marginals.{i}") for i, m in enumerate(cfg["problem"]["marginals"])]
    _prepare_out(out, args.force)
    x = np.arange(n) / n
    for l in range(1, len(margs)):
        _write_csv(out / f"map_1_{l + 1}.csv", ["x", "T"], zip(x, analytic_map(margs[0], margs[l])))
    gamma = comonotone_coupling(margs)
    _write_csv(out / "coupling.csv", [f"i{l + 1}" for l in range(gamma.k)] + ["mass"],
               (tuple(int(v) for v in row) + (m,) for row, m in zip(gamma.indices, gamma.mass)))
    qc = QuadraticCost(CostKind.QUADRATIC_PAIRWISE, len(margs), scale=cost["scale"])
    value = static_optimum(margs, qc)
    _write_json(out / "static_optimum.json", {"static_optimum": value, "n_x": n, "k": len(margs), "cost": qc.to_dict()})
    print(f"static optimum {value:.10g} -> {out}")
    return EXIT_OK


# Entry point -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="run configuration (JSON)")
    common.add_argument("--out", metavar="DIR", help="run directory")
    common.add_argument("--force", action="store_true", help="overwrite a non-empty output directory")
    common.add_argument("--threads", type=int, metavar="N", help="limit BLAS/FFT worker threads")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="dmmot", description="Dynamic multi-marginal optimal transport solver.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="run the primal-dual solver").set_defaults(func=cmd_solve)
    p = sub.add_parser("compare", parents=[common], help="compare extracted maps with the analytic ones")
    p.add_argument("run_dir", nargs="?")
    p.set_defaults(func=cmd_compare)
    p = sub.add_parser("check", parents=[common], help="check dual potentials against a run")
    p.add_argument("run_dir", nargs="?")
    p.add_argument("--potentials", metavar="PATH", help="potentials CSV (default: zero potentials)")
    p.add_argument("--lift-oracle", action="store_true", help="use Hopf-Lax lifted static LP duals")
    p.add_argument("--tol", type=float, help="feasibility tolerance (default from config)")
    p.set_defaults(func=cmd_check)
    sub.add_parser("oracle", parents=[common], help="write 1D analytic references").set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.threads is not None and args.threads < 1:
        print("dmmot: --threads: must be a positive integer", file=sys.stderr)
        return EXIT_CONFIG
    if args.threads:
        from threadpoolctl import threadpool_limits

        limiter = threadpool_limits(limits=args.threads)
    else:
        limiter = nullcontext()
    try:
        with limiter:
            return args.func(args)
    except CliError as exc:
        print(f"dmmot: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
