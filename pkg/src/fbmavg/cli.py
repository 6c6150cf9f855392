"""Command line interface.

Subcommands: fbm, norms, integrate, simulate, average-study, phi, validate,
replay. Exit status is 0 on success, 1 on validation failure and 2 on a
numerical abort.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .averaging import convergence_study, phi_estimate
from .exceptions import (
    AdmissibilityError,
    AssumptionViolation,
    ConfigError,
    DomainError,
    EmbeddingError,
    FactorizationError,
    SolverAbort,
)
from .fbm import TimeGrid, sample_fbm
from .fractional import rs_sum, zahle_integral
from .io import (
    RunConfig,
    config_from_mapping,
    fmt,
    load_config,
    manifest,
    paths_csv,
    pretty_json,
    read_sample_path,
    write_atomic,
)
from .metrics import holder_norm, holder_seminorm, lambda_norm, sup_norm
from .models import get_model
from .solver import coupled_solve, solve_oscillatory, validate_assumptions

log = logging.getLogger("fbmavg")

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2

SCHEME_NOTES = {
    "law_approximation": "N-particle empirical measure; propagation-of-chaos error not controlled",
    "drift_substeps": "midpoint nodes per step = max(1, ceil(dt/(eps*pi/4)) * sub_steps_per_osc); "
                      "1 node for time-independent drifts",
    "scheme": "explicit Euler (Milstein correction 0.5*sigma*sigma'*dB^2 optional)",
    "measure_freeze": "measure frozen at the start of each step",
}


def _emit(outputs, man_path, man):
    for path, text in outputs.items():
        write_atomic(path, text)
    write_atomic(man_path, pretty_json(man))


def _prefix_paths(prefix, *suffixes):
    return [Path(f"{prefix}{s}") for s in suffixes]


def _replay_argv(argv, dest_flag):
    """argv minus the output destination, recorded in manifests."""
    out, skip = [], False
    for a in argv:
        if skip:
            skip = False
            continue
        if a == dest_flag:
            skip = True
            continue
        if a.startswith(dest_flag + "="):
            continue
        out.append(a)
    return out


def _config(args):
    if getattr(args, "_config_obj", None) is not None:
        return args._config_obj
    if args.config is None:
        return RunConfig().validate()
    return load_config(args.config)


def cmd_fbm(args):
    grid = TimeGrid(args.t_end, args.steps)
    batch = sample_fbm(grid, args.hurst, args.paths, args.seed, args.method)
    text = paths_csv(batch.paths, grid.nodes)
    out = Path(args.out)
    man = manifest("fbm", args._argv, {"paths.csv": text}, seed=args.seed,
                   extra={"hurst": args.hurst, "method": args.method})
    _emit({out: text}, Path(f"{out}.manifest.json"), man)
    return EXIT_OK


def cmd_norms(args):
    path = read_sample_path(args.input)
    result = {
        "sup": sup_norm(path),
        "seminorm": holder_seminorm(path, args.gamma),
        "holder": holder_norm(path, args.gamma),
        "lambda_norm": lambda_norm(path, args.gamma, args.lam),
    }
    exact = holder_seminorm(path, args.gamma, with_flag=True).exact
    result["exact"] = exact
    text = pretty_json(result)
    sys.stdout.write(text)
    if args.out:
        out = Path(args.out)
        _emit({out: text}, Path(f"{out}.manifest.json"),
              manifest("norms", args._argv, {"norms.json": text}))
    return EXIT_OK


def cmd_integrate(args):
    f = read_sample_path(args.f)
    g = read_sample_path(args.g)
    z = zahle_integral(f, g, args.alpha, args.a, args.b, check=not args.no_check)
    result = {"zahle": z}
    if args.oracle:
        r = rs_sum(f, g, args.a, args.b)
        result.update(rs=r, diff=z - r)
    text = pretty_json(result)
    sys.stdout.write(text)
    if args.out:
        out = Path(args.out)
        _emit({out: text}, Path(f"{out}.manifest.json"),
              manifest("integrate", args._argv, {"integral.json": text}))
    return EXIT_OK


def _validated_model(cfg):
    entry = get_model(cfg.model)
    report = validate_assumptions(entry.drift, entry.diffusion)
    if not report.passed and not cfg.force:
        raise AssumptionViolation("; ".join(report.violations), report)
    return entry, report


def cmd_simulate(args):
    cfg = _config(args)
    entry, report = _validated_model(cfg)
    scfg = cfg.solver_config()
    noise = sample_fbm(scfg.grid, scfg.hurst, scfg.n_particles, scfg.seed, cfg.fbm_method)
    traj = solve_oscillatory(scfg, entry.drift, entry.diffusion, noise)
    prefix = args.out_prefix or cfg.out_prefix or "run"
    csv_path, man_path = _prefix_paths(prefix, "_trajectories.csv", "_manifest.json")
    text = paths_csv(traj.paths, traj.grid.nodes, id_name="particle_id")
    man = manifest("simulate", args._argv, {"trajectories.csv": text}, config=cfg, seed=cfg.seed,
                   validation=report.summary(), extra={"scheme_notes": SCHEME_NOTES})
    _emit({csv_path: text}, man_path, man)
    return EXIT_OK


def cmd_average_study(args):
    cfg = _config(args)
    if args.epsilons:
        cfg.epsilons = [float(e) for e in args.epsilons.split(",")]
    if args.replicates:
        cfg.replicates = args.replicates
    cfg.validate()
    entry, report = _validated_model(cfg)
    rep = convergence_study(cfg.solver_config(), entry.drift, entry.diffusion,
                            cfg.epsilons, cfg.replicates, cfg.gamma, cfg.lam, cfg.fbm_method)
    rows = rep.rows()
    cols = list(rows[0])
    lines = [",".join(cols)] + [",".join(fmt(r[c]) for c in cols) for r in rows]
    text = "\n".join(lines) + "\n"
    prefix = args.out_prefix or cfg.out_prefix or "study"
    csv_path, man_path = _prefix_paths(prefix, "_report.csv", "_manifest.json")
    man = manifest("average-study", args._argv, {"report.csv": text}, config=cfg,
                   seed=cfg.seed,
                   validation=report.summary(),
                   extra={"replicate_seeds": rep.replicate_seeds,
                          "scheme_notes": SCHEME_NOTES,
                          "estimator": "particle mean within replicate, then mean and "
                                       "standard error over replicates"})
    _emit({csv_path: text}, man_path, man)
    return EXIT_OK


def cmd_phi(args):
    cfg = _config(args)
    if args.T_values:
        cfg.T_values = [float(t) for t in args.T_values.split(",")]
    cfg.validate()
    entry = get_model(cfg.model)
    drift = entry.drift
    if drift.averaged is None:
        from .averaging import numeric_average_drift
        drift = numeric_average_drift(drift)
    curve = phi_estimate(drift, drift.averaged, cfg.T_values)
    lines = ["T,phi,phi_envelope,phi_abs"]
    lines += [",".join(fmt(v) for v in row) for row in
              zip(curve.T_values, curve.phi_estimates, curve.phi_envelope, curve.abs_estimates)]
    text = "\n".join(lines) + "\n"
    prefix = args.out_prefix or cfg.out_prefix or "phi"
    csv_path, man_path = _prefix_paths(prefix, "_curve.csv", "_manifest.json")
    man = manifest("phi", args._argv, {"curve.csv": text}, config=cfg, seed=cfg.seed,
                   extra={"probes": curve.probes, "note": curve.note,
                          "ordering_holds": curve.ordering_holds,
                          "ordering_checks": curve.ordering_checks})
    _emit({csv_path: text}, man_path, man)
    return EXIT_OK


def cmd_validate(args):
    names = [args.model] if args.model else None
    if names is None:
        names = [_config(args).model]
    summaries = {}
    ok = True
    for name in names:
        entry = get_model(name)
        report = validate_assumptions(entry.drift, entry.diffusion)
        summaries[name] = report.summary()
        ok &= report.passed
    sys.stdout.write(pretty_json(summaries))
    return EXIT_OK if ok else EXIT_INVALID


def cmd_replay(args):
    man = json.loads(Path(args.manifest).read_text())
    command = man["command"]
    dest_flag = DEST_FLAGS[command]
    argv = [command] + man["argv"] + [dest_flag, args.dest]
    ns = build_parser().parse_args(argv)
    ns._argv = man["argv"]
    ns._config_obj = config_from_mapping(man["config"]) if "config" in man else None
    return ns.func(ns)


DEST_FLAGS = {"fbm": "--out", "norms": "--out", "integrate": "--out",
              "simulate": "--out-prefix", "average-study": "--out-prefix",
              "phi": "--out-prefix"}


def build_parser():
    p = argparse.ArgumentParser(prog="fbmavg", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("fbm", help="sample fractional Brownian motion paths")
    s.add_argument("--hurst", type=float, default=0.7)
    s.add_argument("--t-end", type=float, default=1.0)
    s.add_argument("--steps", type=int, default=256)
    s.add_argument("--paths", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--method", choices=["cholesky", "circulant"], default="circulant")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_fbm)

    s = sub.add_parser("norms", help="sup, Hölder and weighted norms of a path CSV")
    s.add_argument("input")
    s.add_argument("--gamma", type=float, default=0.55)
    s.add_argument("--lambda", dest="lam", type=float, default=1.0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_norms)

    s = sub.add_parser("integrate", help="Young integral of two path CSVs")
    s.add_argument("f")
    s.add_argument("g")
    s.add_argument("--alpha", type=float, default=0.35)
    s.add_argument("--a", type=float, default=None)
    s.add_argument("--b", type=float, default=None)
    s.add_argument("--oracle", action="store_true", help="also print the Riemann-Stieltjes sum")
    s.add_argument("--no-check", action="store_true", help="skip the exponent admissibility check")
    s.add_argument("--out")
    s.set_defaults(func=cmd_integrate)

    for name, func, help_ in [
        ("simulate", cmd_simulate, "simulate the oscillatory particle system"),
        ("average-study", cmd_average_study, "epsilon convergence study"),
        ("phi", cmd_phi, "averaging-rate curve of a model"),
    ]:
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config")
        s.add_argument("--out-prefix")
        if name == "average-study":
            s.add_argument("--epsilons", help="comma separated, strictly decreasing")
            s.add_argument("--replicates", type=int)
        if name == "phi":
            s.add_argument("--T-values", dest="T_values", help="comma separated window lengths")
        s.set_defaults(func=func)

    s = sub.add_parser("validate", help="check a model against its declared constants")
    s.add_argument("--model")
    s.add_argument("--config")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("replay", help="re-run a command from its manifest")
    s.add_argument("manifest")
    s.add_argument("dest", help="output path (or prefix) for the re-run")
    s.set_defaults(func=cmd_replay)
    return p


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command != "replay":
        cmd_argv = argv[argv.index(args.command) + 1:]
        args._argv = _replay_argv(cmd_argv, DEST_FLAGS.get(args.command, "--out"))
    try:
        return args.func(args)
    except (ConfigError, AssumptionViolation, AdmissibilityError, DomainError, KeyError) as exc:
        log.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (SolverAbort, EmbeddingError, FactorizationError, FloatingPointError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
