"""Command-line front end.

    lsmm {reduce|freqresp|simulate|bound|example} --config FILE [--out DIR] [--seed N]

Exit status is 0 on success, 2 for configuration or validation errors and
3 for numerical failures. ``LSMM_LOG`` sets the log level (default WARNING).
"""

import argparse
import json
import logging
import os
import sys
import warnings
from dataclasses import dataclass, field, fields

import numpy as np

from . import io
from .benchmarks import (
    FssParams,
    InverterParams,
    build_fss,
    build_inverter_chain,
    fss_spec,
    inverter_spec,
)
from .errors import LSMMError, NotSkewSymmetric, PointInSpectrum, Unstable
from .generator import InterpolationSpec, build_canonical_T, build_generator
from .linear import (
    ReducedModel,
    ReductionParams,
    StateSpace,
    admissibility_report,
    assemble_family,
    dominant_reduction_pipeline,
    error_bound,
    index_J,
    is_controllable,
    solve_relaxed,
)
from .poly import PolyMap
from .series import NonlinearReducedModel, PolyVectorField, assemble_nonlinear_family
from .simulate import (
    SimConfig,
    Trajectory,
    compare_nonlinear,
    default_horizon,
    estimate_gamma_rms,
    frequency_response,
    rms_value,
    simulate_interconnection,
)

log = logging.getLogger("lsmm")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

PIPELINES = ("dominant", "explicit", "relaxed")


class CliFailure(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


@dataclass
class ProjectConfig:
    """Parsed configuration. ``system`` is a StateSpace, or ``(field, h)``
    for a polynomial system."""

    system: object
    spec: InterpolationSpec
    r: int
    pipeline: str = "dominant"
    P: np.ndarray = None
    Delta: np.ndarray = None
    degree: int = 3
    orders: tuple = (1, 3)
    sim: SimConfig = None
    freq: dict = field(default_factory=dict)
    model_file: str = None
    gamma_method: str = "auto"

    @property
    def nonlinear(self):
        return isinstance(self.system, tuple)

    def linear_system(self):
        if not self.nonlinear:
            return self.system
        fld, h = self.system
        A, B = fld.jacobians()
        return StateSpace(A, B, h.linear_part())


# --- built-in examples ------------------------------------------------------

EXAMPLES = {
    "fss": {
        "system": {"builtin": "fss", "K": 30, "seed": 1009},
        "interpolation": {"frequencies": [0.01, 0.1, 1, 5.5, 10, 16, 20, 30, 50, 100, 1000, 10000]},
        "r": 10,
        "pipeline": "dominant",
        "simulation": {"t_final": 10.0, "samples": 100001},
        "freqresp": {"omega_min": 0.01, "omega_max": 10000.0, "points": 400},
    },
    "inverter": {
        "system": {"builtin": "inverter", "n": 12, "V_T": 0.25, "alpha": 4.0, "expand_degree": 3},
        "interpolation": {"frequencies": [1, 2, 3, 4, 5]},
        "r": 4,
        "pipeline": "dominant",
        "degree": 3,
        "orders": [1, 3],
        "simulation": {"t_final": 2400.0, "rel_tol": 1e-5, "abs_tol": 1e-7, "samples": 48001},
    },
}


def _build_system(obj, seed, base_dir):
    if not isinstance(obj, dict):
        raise io.ConfigError("'system' must be an object")
    sources = [k for k in ("builtin", "file", "A") if k in obj]
    if len(sources) != 1:
        raise io.ConfigError("'system' needs exactly one of builtin, file or inline A/B/C")
    src = sources[0]
    if src == "A":
        return io.load_system(obj), None
    if src == "file":
        path = os.path.join(base_dir, obj["file"])
        return io.load_system(io.load_json(path)), None
    name = obj["builtin"]
    opts = {k: v for k, v in obj.items() if k != "builtin"}
    if name == "fss":
        if seed is not None:
            opts["seed"] = seed
        allowed = {f.name for f in fields(FssParams)}
        bad = set(opts) - allowed
        if bad:
            raise io.ConfigError(f"unknown FSS parameters: {sorted(bad)}")
        for k in ("chi_range", "phi_range", "b_range", "c_range"):
            if k in opts:
                opts[k] = tuple(opts[k])
        p = FssParams(**opts)
        return build_fss(p), fss_spec()
    if name == "inverter":
        allowed = {f.name for f in fields(InverterParams)}
        bad = set(opts) - allowed
        if bad:
            raise io.ConfigError(f"unknown inverter parameters: {sorted(bad)}")
        return build_inverter_chain(InverterParams(**opts)), inverter_spec()
    raise io.ConfigError(f"unknown builtin system {name!r}")


def _build_spec(obj):
    if "frequencies" in obj:
        return InterpolationSpec.from_frequencies(obj["frequencies"], int(obj.get("order", 0)))
    if "points" in obj:
        pts = []
        for p in obj["points"]:
            pts.append(complex(*p) if isinstance(p, (list, tuple)) else complex(p))
        orders = obj.get("orders", [0] * len(pts))
        return InterpolationSpec(tuple(pts), tuple(orders))
    raise io.ConfigError("'interpolation' needs 'frequencies' or 'points'")


def parse_config(data, seed=None, base_dir="."):
    """Validate a config dictionary; raises ConfigError."""
    if not isinstance(data, dict):
        raise io.ConfigError("config must be a JSON object")
    try:
        system, default_spec = _build_system(data.get("system"), seed, base_dir)
        spec = _build_spec(data["interpolation"]) if "interpolation" in data else default_spec
        if spec is None:
            raise io.ConfigError("'interpolation' is required for this system")
        r = int(data.get("r", 0))
        if r < 1:
            raise io.ConfigError("'r' must be at least 1")
        pipeline = data.get("pipeline", "dominant")
        if pipeline not in PIPELINES:
            raise io.ConfigError(f"'pipeline' must be one of {PIPELINES}")
        P = io.matrix_from_json(data["P"], "P") if "P" in data else None
        Delta = io.matrix_from_json(data["Delta"], "Delta") if "Delta" in data else None
        if pipeline in ("explicit", "relaxed") and P is None:
            raise io.ConfigError(f"pipeline {pipeline!r} needs 'P'")
        if pipeline == "explicit" and Delta is None:
            raise io.ConfigError("pipeline 'explicit' needs 'Delta'")
        sim = SimConfig(**data.get("simulation", {}))
        freq = dict(data.get("freqresp", {}))
        orders = tuple(int(k) for k in data.get("orders", (1, 3)))
        degree = int(data.get("degree", max(orders)))
        model_file = data.get("model")
        if model_file is not None:
            model_file = os.path.join(base_dir, model_file)
        method = data.get("gamma_method", "auto")
        if method not in ("simulate", "exact", "auto"):
            raise io.ConfigError("'gamma_method' must be 'simulate', 'exact' or 'auto'")
    except KeyError as exc:
        raise io.ConfigError(f"missing key {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, io.ConfigError):
            raise
        raise io.ConfigError(str(exc)) from None
    return ProjectConfig(system, spec, r, pipeline, P, Delta, degree, orders, sim, freq, model_file, method)


# --- reduction -------------------------------------------------------------


def _reduce_linear(cfg, sys, gen):
    if cfg.pipeline == "dominant":
        model, _ = dominant_reduction_pipeline(sys, cfg.spec, cfg.r, gen=gen)
        return model
    T = build_canonical_T(gen).T
    if cfg.pipeline == "relaxed":
        return solve_relaxed(sys, gen, cfg.P, T)
    return assemble_family(sys, gen, ReductionParams(cfg.P, cfg.Delta, T))


def reduce_model(cfg):
    """``(gen, model)``; the model is nonlinear for polynomial systems."""
    gen = build_generator(cfg.spec)
    sys = cfg.linear_system()
    if cfg.model_file is not None:
        return gen, _load_any_model(cfg.model_file)
    lin = _reduce_linear(cfg, sys, gen)
    if not cfg.nonlinear:
        return gen, lin
    p = lin.provenance
    fld, h = cfg.system
    return gen, assemble_nonlinear_family(fld, h, gen, p.P, p.Delta, p.T, cfg.degree)


def _linear_view(model):
    if isinstance(model, NonlinearReducedModel):
        return ReducedModel(model.F_lin, model.G_lin, model.kappa.linear_part(), model.provenance)
    return model


def _load_any_model(path):
    data = io.load_json(path)
    model = io.model_from_dict(data)
    if "kappa" not in data:
        return model
    k = data["kappa"]
    kappa = PolyMap(model.r, 1, int(k["degree"]), io.matrix_from_json(k["coeffs"], "kappa"))
    return NonlinearReducedModel(model.F, model.G, kappa, model.provenance)


def _eig_json(vals):
    vals = sorted(np.asarray(vals, complex), key=lambda z: (-z.real, z.imag))
    return [[float(z.real), float(z.imag)] for z in vals]


def build_report(cfg, gen, model):
    sys = cfg.linear_system()
    lin = _linear_view(model)
    report = {
        "r": lin.r,
        "nu": gen.nu,
        "pipeline": cfg.pipeline,
        "index_J": index_J(sys, lin, gen),
        "error_bound": error_bound(sys, lin, gen),
        "sigma_F": _eig_json(np.linalg.eigvals(lin.F)),
        "controllable": is_controllable(lin.F, lin.G),
    }
    if lin.provenance is not None and cfg.pipeline != "relaxed":
        rep = admissibility_report(gen, lin.provenance)
        report["admissibility"] = {k: {"ok": bool(ok), "detail": d} for k, (ok, d) in rep.items()}
    if cfg.nonlinear:
        report["note"] = "index_J and error_bound refer to the linearization"
    return report


# --- commands --------------------------------------------------------------


def cmd_reduce(cfg, out):
    gen, model = reduce_model(cfg)
    report = build_report(cfg, gen, model)
    data = io.model_to_dict(_linear_view(model))
    if isinstance(model, NonlinearReducedModel):
        data["kappa"] = {"degree": model.degree, "coeffs": io.matrix_to_json(model.kappa.coeffs)}
    data["report"] = report
    path = os.path.join(out, "model.json")
    with open(path, "w") as fh:
        json.dump(data, fh, indent=1)
    with open(os.path.join(out, "report.json"), "w") as fh:
        json.dump(report, fh, indent=1)
    print(f"index_J     {report['index_J']:.6e}")
    print(f"error_bound {report['error_bound']:.6e}")
    for k, v in report.get("admissibility", {}).items():
        print(f"{k:<11} {'ok' if v['ok'] else 'FAILED ' + v['detail']}")
    print(f"model written to {path}")
    return EXIT_OK


def frequency_grid(opts):
    if "omegas" in opts:
        return np.asarray(opts["omegas"], float)
    lo, hi = float(opts.get("omega_min", 1e-2)), float(opts.get("omega_max", 1e4))
    n = int(opts.get("points", 400))
    if not 0 < lo < hi or n < 2:
        raise io.ConfigError("frequency grid needs 0 < omega_min < omega_max and points >= 2")
    return np.logspace(np.log10(lo), np.log10(hi), n)


def _response_rows(system, omegas):
    vals, flags = [], []
    for w in omegas:
        try:
            vals.append(frequency_response(system, [w])[0])
            flags.append("")
        except PointInSpectrum:
            vals.append(np.nan)
            flags.append("pole")
    return np.array(vals, complex), flags


def cmd_freqresp(cfg, out):
    omegas = frequency_grid(cfg.freq)
    sys = cfg.linear_system()
    _, model = reduce_model(cfg)
    lin = _linear_view(model)
    W, f1 = _response_rows(sys, omegas)
    Wr, f2 = _response_rows(lin, omegas)
    with np.errstate(invalid="ignore", divide="ignore"):
        rel = np.abs(W - Wr) / np.abs(W)
    flags = [";".join(x for x in (a and "system " + a, b and "model " + b) if x) for a, b in zip(f1, f2)]
    path = os.path.join(out, "freqresp.csv")
    io.write_csv(
        path,
        ["omega", "mag", "phase", "mag_model", "phase_model", "rel_error", "flag"],
        [omegas, np.abs(W), np.angle(W), np.abs(Wr), np.angle(Wr), rel, flags],
    )
    print(f"{omegas.size} frequencies written to {path}")
    return EXIT_OK


def _warn_stability(sys, lin):
    if not sys.is_stable():
        log.warning("system matrix is not Hurwitz; steady state may not exist")
    if not np.all(np.linalg.eigvals(lin.F).real < 0):
        log.warning("reduced model is not Hurwitz; steady state may not exist")


def cmd_simulate(cfg, out):
    gen, model = reduce_model(cfg)
    sim = cfg.sim
    lin = _linear_view(model)
    _warn_stability(cfg.linear_system(), lin)
    if sim.t_final is None:
        sim = sim.with_horizon(default_horizon(gen, cfg.linear_system().A, lin.F))
    start = (1.0 - sim.steady_state_fraction) * sim.t_final
    path = os.path.join(out, "simulate.csv")
    if cfg.nonlinear:
        fld, h = cfg.system
        orders = tuple(k for k in cfg.orders if k <= model.degree)
        traj = compare_nonlinear(fld, h, model, gen, sim, orders)
        y = traj.values[:, 0]
        psis = [traj.values[:, j + 1] for j in range(len(orders))]
        errs = [y - p for p in psis]
        header = ["t", "y"] + [f"psi{k}" for k in orders] + [f"e{k}" for k in orders]
        io.write_csv(path, header, [traj.times, y] + psis + errs)
        stats = {f"rms_e{k}": rms_value(Trajectory(traj.times, e), start) for k, e in zip(orders, errs)}
    else:
        traj = simulate_interconnection(gen, [cfg.system, lin], sim, linear="exact")
        y, psi = traj.values[:, 0], traj.values[:, 1]
        e = y - psi
        io.write_csv(path, ["t", "y", "psi", "e"], [traj.times, y, psi, e])
        stats = {"rms_e": rms_value(Trajectory(traj.times, e), start)}
    stats["rms_y"] = rms_value(Trajectory(traj.times, y), start)
    stats["window_start"] = start
    with open(os.path.join(out, "simulate_report.json"), "w") as fh:
        json.dump(stats, fh, indent=1)
    for k, v in stats.items():
        print(f"{k:<12} {v:.6e}")
    print(f"{traj.times.size} samples written to {path}")
    return EXIT_OK


def cmd_bound(cfg, out):
    gen, model = reduce_model(cfg)
    plant, lin = cfg.linear_system(), _linear_view(model)
    try:
        bound = error_bound(plant, lin, gen)
        est = estimate_gamma_rms(plant, lin, gen, cfg.sim, method=cfg.gamma_method)
    except (Unstable, NotSkewSymmetric) as exc:
        raise CliFailure(EXIT_CONFIG, str(exc)) from None
    ratio = est / bound if bound > 0 else (0.0 if est == 0 else float("inf"))
    report = {"error_bound": bound, "gamma_rms_estimate": est, "ratio": ratio}
    with open(os.path.join(out, "bound.json"), "w") as fh:
        json.dump(report, fh, indent=1)
    print(f"error_bound        {bound:.6e}")
    print(f"gamma_rms_estimate {est:.6e}")
    print(f"ratio              {ratio:.6f}")
    if est > bound + 1e-6:
        raise CliFailure(EXIT_NUMERIC, "gamma_rms estimate exceeds the error bound")
    return EXIT_OK


def cmd_example(name, out, seed):
    if name not in EXAMPLES:
        raise CliFailure(EXIT_CONFIG, f"unknown example {name!r}; choose from {sorted(EXAMPLES)}")
    data = json.loads(json.dumps(EXAMPLES[name]))
    if seed is not None and name == "fss":
        data["system"]["seed"] = seed
    path = os.path.join(out, f"{name}.json")
    with open(path, "w") as fh:
        json.dump(data, fh, indent=1)
    print(f"example config written to {path}")
    return EXIT_OK


COMMANDS = {"reduce": cmd_reduce, "freqresp": cmd_freqresp, "simulate": cmd_simulate, "bound": cmd_bound}


def _parser():
    p = argparse.ArgumentParser(prog="lsmm", description="Least-squares moment matching model reduction.")
    p.add_argument("command", choices=sorted(COMMANDS) + ["example"])
    p.add_argument("name", nargs="?", help="example name (fss or inverter) for 'example'")
    p.add_argument("--config", help="JSON configuration file")
    p.add_argument("--out", default=".", help="output directory (default: current)")
    p.add_argument("--seed", type=int, help="override the FSS random seed")
    return p


def _setup_logging():
    level = os.environ.get("LSMM_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s"
    )
    logging.captureWarnings(True)


def main(argv=None):
    _setup_logging()
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise CliFailure(EXIT_CONFIG, "--seed must be an unsigned 64-bit integer")
        os.makedirs(args.out, exist_ok=True)
        if args.command == "example":
            return cmd_example(args.name or "fss", args.out, args.seed)
        if not args.config:
            raise CliFailure(EXIT_CONFIG, f"'{args.command}' requires --config")
        data = io.load_json(args.config)
        cfg = parse_config(data, args.seed, os.path.dirname(os.path.abspath(args.config)))
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return COMMANDS[args.command](cfg, args.out)
    except CliFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except io.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LSMMError as exc:
        print(f"numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except np.linalg.LinAlgError as exc:
        print(f"numerical failure (LinAlgError): {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
