"""Command-line interface: ``mrstruct <command> [options]``.

Exit codes: 0 success, 1 a check failed (or a numerical stage failed hard),
2 usage or I/O error.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import sys
from pathlib import Path

import numpy as np

from . import io as _io
from . import medm as _medm
from . import riemann as _riemann
from . import stoch as _stoch
from . import suites as _suites
from .errors import BackendMismatchError, CatalogueError, LevelError, MRSError
from .forms import (
    TAU_ZERO,
    GraphForm,
    SGForm,
    SuperpositionForm,
    complete_graph,
    default_family,
    e1_orthonormal_family,
    energy_measure,
    indicator_family,
    mutual_energy_measure,
    path_graph,
    random_graph,
)

COMMANDS = ("generate", "measures", "medm", "index", "sample", "grad", "check", "simulate", "pipeline")
GENERATE_KINDS = ("graph:random", "graph:path", "graph:complete", "sg", "superposition")
FAMILIES = ("default", "indicators", "e1", "harmonic", "splines", "catalogue")


class UsageError(Exception):
    pass


def _positive(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="global seed (default 0)")
    common.add_argument("--tol-rank", type=_positive, default=_riemann.TOL_RANK, help="relative rank cutoff")
    common.add_argument("--cond-max", type=_positive, default=_riemann.KAPPA_MAX, help="condition-number ceiling")
    common.add_argument("--tau-zero", type=_positive, default=TAU_ZERO, help="absolute zero threshold for nu")
    common.add_argument("--out", default=None, help="output file (directory for pipeline); stdout if omitted")

    p = argparse.ArgumentParser(prog="mrstruct", description="Measurable Riemannian structures on finite models.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="write a model JSON file")
    g.add_argument("kind", choices=GENERATE_KINDS, help="model type")
    g.add_argument("--n", type=int, default=None, help="vertices (graphs) or dimension (superposition)")
    g.add_argument("--level", type=int, default=4, help="SG cell level")
    g.add_argument("--grid", type=int, default=32, help="superposition cells per axis")
    g.add_argument("--extra", type=float, default=0.1, help="chord probability for graph:random")

    def model_cmd(name, help_):
        c = sub.add_parser(name, parents=[common], help=help_)
        c.add_argument("model", help="model JSON file")
        c.add_argument("--family", choices=FAMILIES, default="default", help="generating family (default: model default)")
        return c

    c = model_cmd("measures", "energy measure mu<f> (or mu<f,g>) per atom")
    c.add_argument("--f", default=None, help="function: JSON file, catalogue id or comma-separated values")
    c.add_argument("--g", default=None, help="second function for the mutual measure")
    model_cmd("medm", "minimal energy-dominant measure per atom")
    model_cmd("index", "pointwise index per atom")
    model_cmd("sample", "sample a coordinate tuple")
    c = model_cmd("grad", "gradient of f along a sampled tuple")
    c.add_argument("--f", default=None, help="function file, catalogue id or comma-separated values")
    c = model_cmd("check", "run named invariant suites")
    c.add_argument("--suite", default="forms", help=f"comma-separated: {', '.join(_suites.SUITES)}")
    c.add_argument("--functions", type=int, default=20, help="random functions per check")
    c.add_argument("--paths", type=int, default=200, help="simulated paths")
    c.add_argument("--horizon", type=_positive, default=10.0, help="path horizon T")
    c.add_argument("--specs", type=int, default=5, help="random martingale specs")
    c.add_argument("--random-graphs", type=int, default=0,
                   help="run the forms suite on this many seeded random graphs instead of the model")
    c = model_cmd("simulate", "simulate the jump chain and test representation and energy")
    c.add_argument("--f", default=None, help="function file, catalogue id or comma-separated values")
    c.add_argument("--paths", type=int, default=1000, help="simulated paths")
    c.add_argument("--horizon", type=_positive, default=10.0, help="path horizon T")
    c.add_argument("--init", default="stationary", help="stationary | atom:<id>")
    c.add_argument("--per-path", default=None, help="optional per-path CSV")
    c = model_cmd("pipeline", "run every stage and write all artifacts")
    c.add_argument("--functions", type=int, default=20, help="random functions per check")
    c.add_argument("--paths", type=int, default=200, help="simulated paths")
    c.add_argument("--horizon", type=_positive, default=10.0, help="path horizon T")
    c.add_argument("--specs", type=int, default=5, help="random martingale specs")
    return p


def _load_model(path):
    return _io.load_model(path)


def _family(model, name, seed):
    if name == "default":
        return default_family(model, seed)
    if isinstance(model, GraphForm) and name in ("indicators", "e1"):
        return indicator_family(model) if name == "indicators" else e1_orthonormal_family(model, seed)
    if isinstance(model, SGForm) and name in ("harmonic", "splines"):
        return model.harmonic_family() if name == "harmonic" else model.spline_family(model.level)
    if isinstance(model, SuperpositionForm) and name == "catalogue":
        return model.default_family()
    raise UsageError(f"family {name!r} is not available for a {model.kind} model")


def _function(model, text, seed, index=0):
    if text is None:
        return _suites.random_function(model, seed, index)
    if Path(text).is_file():
        return _io.load_function(model, text)
    if isinstance(model, SuperpositionForm):
        return model.coerce(text)
    try:
        vals = np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise UsageError(f"cannot read a function from {text!r}") from None
    return model.coerce(vals)


def _emit(text, out):
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _context(args, model, **kw):
    return _suites.Context(
        model, _family(model, args.family, args.seed), seed=args.seed, tol_rank=args.tol_rank,
        kappa_max=args.cond_max, tau_zero=args.tau_zero, **kw,
    )


def _tuple_json(ctx):
    t = ctx.tuple
    charged = np.flatnonzero(t.charged)
    return {
        "seed": t.seed,
        "redraws": t.redraws,
        "p": t.p,
        "in_G": t.in_G,
        "in_Ghat": t.in_Ghat,
        "kappa_max": t.kappa_max,
        "worst_atom": ctx.atom(t.worst_atom),
        "max_cond": float(t.cond[charged].max()) if charged.size else 1.0,
        "cond": {ctx.atom(i): float(t.cond[i]) for i in charged},
        "coefficients": t.coefficients.tolist(),
    }


def _grad_csv(ctx, f):
    gf = _riemann.gradient(ctx.model, f, ctx.tuple).values
    header = ["atom_id"] + [f"comp_{i + 1}" for i in range(gf.shape[1])]
    return _io.field_csv(ctx.model.space.atoms, gf.T, header)


def cmd_generate(args):
    kind = args.kind
    if kind == "graph:path":
        model = path_graph(args.n or 3)
    elif kind == "graph:complete":
        model = complete_graph(args.n or 3)
    elif kind == "graph:random":
        model = random_graph(args.n or 20, seed=args.seed, extra=args.extra)
    elif kind == "sg":
        model = SGForm(args.level)
    else:
        model = SuperpositionForm(args.n or 2, args.grid)
    _emit(json.dumps(_io.model_to_dict(model), indent=1) + "\n", args.out)
    return 0


def cmd_measures(args):
    model = _load_model(args.model)
    f = _function(model, args.f, args.seed, 0)
    mu = energy_measure(model, f) if args.g is None else mutual_energy_measure(
        model, f, _function(model, args.g, args.seed, 1))
    _emit(_io.field_csv(model.space.atoms, [mu], ["atom_id", "value"]), args.out)
    return 0


def cmd_medm(args):
    model = _load_model(args.model)
    nu = _medm.build_medm(model, _family(model, args.family, args.seed))
    _emit(_io.field_csv(model.space.atoms, [nu.nu_weights], ["atom_id", "value"]), args.out)
    return 0


def cmd_index(args):
    ctx = _context(args, _load_model(args.model))
    _emit(_io.field_csv(ctx.model.space.atoms, [ctx.index.p_x], ["atom_id", "p"]), args.out)
    return 0


def cmd_sample(args):
    ctx = _context(args, _load_model(args.model))
    _emit(_io.dumps(_tuple_json(ctx)), args.out)
    return 0


def cmd_grad(args):
    ctx = _context(args, _load_model(args.model))
    _emit(_grad_csv(ctx, _function(ctx.model, args.f, args.seed)), args.out)
    return 0


def cmd_check(args):
    names = [s.strip() for s in args.suite.split(",") if s.strip()]
    unknown = [n for n in names if n not in _suites.SUITES]
    if unknown:
        raise UsageError(f"unknown suite(s): {', '.join(unknown)}")
    if args.random_graphs:
        report = _suites.SuiteReport(_suites.random_graph_forms_checks(args.random_graphs, args.seed))
    else:
        ctx = _context(args, _load_model(args.model), n_functions=args.functions, n_paths=args.paths,
                       horizon=args.horizon, n_specs=args.specs)
        report = _suites.run_suites(ctx, names)
    _emit(_io.dumps(report.to_dict()), args.out)
    return 0 if report.passed else 1


def _parse_init(model, text):
    if text == "stationary":
        return "stationary"
    if text.startswith("atom:"):
        return model.space.index(text[5:])
    raise UsageError(f"--init must be 'stationary' or 'atom:<id>', got {text!r}")


def cmd_simulate(args):
    model = _load_model(args.model)
    if not isinstance(model, GraphForm):
        raise UsageError("simulate needs a graph model")
    ctx = _context(args, model, n_paths=args.paths, horizon=args.horizon)
    init = _parse_init(model, args.init)
    chain = ctx.chain
    paths = _stoch.simulate_paths(chain, args.seed, args.horizon, args.paths, init)
    f = _function(model, args.f, args.seed)
    M = _stoch.MAFSpec.fukushima(f)
    rep = _stoch.representation_check(chain, paths, M, ctx.tuple)
    iso = _stoch.energy_isometry(chain, M, ctx.tuple, paths=paths if init == "stationary" else None)
    summary = {
        "e_exact": iso.e_exact,
        "half_norm": iso.half_norm,
        "e_mc": iso.e_mc,
        "se": iso.se,
        "sup_repr_error": rep.max_error,
        "paths": len(paths),
        "horizon": args.horizon,
        "status": "pass" if rep.ok else "fail",
    }
    if args.per_path:
        J, K = M.kernel(chain)
        rows = ["path_id,n_jumps,M_T,sup_abs_M"]
        for p in paths:
            fn = _stoch._functional(p, J, K)
            rows.append(f"{p.path_id},{p.n_jumps},{_io.FLOAT_FMT % fn.terminal},{_io.FLOAT_FMT % fn.sup_abs()}")
        Path(args.per_path).write_text("\n".join(rows) + "\n")
    _emit(_io.dumps(summary), args.out)
    return 0 if rep.ok else 1


def cmd_pipeline(args):
    model = _load_model(args.model)
    ctx = _context(args, model, n_functions=args.functions, n_paths=args.paths, horizon=args.horizon,
                   n_specs=args.specs)
    stamp = _dt.datetime.now(_dt.timezone.utc).strftime("%Y%m%dT%H%M%SZ")
    out = Path(args.out or "runs") / f"{stamp}-seed{args.seed}"
    out.mkdir(parents=True, exist_ok=False)
    atoms = model.space.atoms
    (out / "model.json").write_text(json.dumps(_io.model_to_dict(model), indent=1) + "\n")
    (out / "nu.csv").write_text(_io.field_csv(atoms, [ctx.nu.nu_weights], ["atom_id", "value"]))
    (out / "index.csv").write_text(_io.field_csv(atoms, [ctx.index.p_x], ["atom_id", "p"]))
    report = _suites.SuiteReport(info={"index": ctx.index.index, "seed": args.seed, "kind": model.kind})
    try:
        tup = ctx.tuple
    except MRSError as exc:
        report.checks.append(_suites.CheckResult("sample", False, float("inf"), args.cond_max, str(exc)))
        (out / "report.json").write_text(_io.dumps(report.to_dict()))
        sys.stderr.write(f"pipeline aborted: sample: {exc}\n")
        return 1
    (out / "tuple.json").write_text(_io.dumps(_tuple_json(ctx)))
    f = _suites.random_function(model, args.seed, 0)
    (out / "grad.csv").write_text(_grad_csv(ctx, f))
    (out / "schur.csv").write_text(
        _io.field_csv(atoms, [_riemann.schur_residual(model, f, tup)], ["atom_id", "value"]))
    (out / "remainder.csv").write_text(
        _io.field_csv(atoms, [_riemann.remainder_density(model, f, tup)], ["atom_id", "value"]))
    if isinstance(model, SGForm):
        stats = _riemann.kusuoka_ratio_stats(range(1, max(model.level, 1) + 1))
        rows = ["level,mean_ratio,small_fraction"] + [
            f"{s['level']},{_io.FLOAT_FMT % s['mean_ratio']},{_io.FLOAT_FMT % s['small_fraction']}" for s in stats
        ]
        (out / "kusuoka.csv").write_text("\n".join(rows) + "\n")
    if isinstance(model, SuperpositionForm):
        p = ctx.index.p_x
        report.info["bulk_p"] = sorted(set(p[~model.is_surface].tolist()))
        report.info["surface_p"] = sorted(set(p[model.is_surface].tolist()))
    full = _suites.run_suites(ctx, list(_suites.PIPELINE_SUITES))
    report.checks.extend(full.checks)
    (out / "report.json").write_text(_io.dumps(report.to_dict()))
    sys.stdout.write(str(out) + "\n")
    if not report.passed:
        sys.stderr.write(f"failing checks: {', '.join(report.failing())}\n")
    return 0 if report.passed else 1


HANDLERS = {name: globals()[f"cmd_{name}"] for name in COMMANDS}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return HANDLERS[args.command](args)
    except (UsageError, CatalogueError, BackendMismatchError, LevelError) as exc:
        sys.stderr.write(f"mrstruct: error: {exc}\n")
        return 2
    except MRSError as exc:
        sys.stderr.write(f"mrstruct: check failed: {type(exc).__name__}: {exc}\n")
        return 1
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"mrstruct: error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
