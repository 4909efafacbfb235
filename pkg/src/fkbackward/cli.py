"""Command-line entry point ``fk``.

Exit codes: 0 success, 1 invalid input, 2 an acceptance band was violated,
3 numeric singularity (collapse, zero normalizer). Every output file gets a
``<name>.manifest.json`` companion recording version, resolved config, seed,
timestamps and the SHA-256 of each output.
"""
import argparse
import datetime as _dt
import hashlib
import logging
import os
import sys

import numpy as np

from . import __version__, assumptions, experiments, oracle, smc, smoothers
from ._accel import backend_name
from .config import load_json, model_from_config, resolve_config, simulate_data, write_csv, write_json
from .errors import NumericSingularityError, OracleInconsistencyError, ValidationError
from .functionals import default_probe, functional_from_config

log = logging.getLogger("fkbackward")

EXIT_OK, EXIT_INVALID, EXIT_BAND, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ValidationError(f"{self.prog}: {message}")


def _now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat()


def _sha256(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def write_manifest(out_path, *, argv, command, config, seed, started, outputs, extra=None):
    manifest = {
        "tool": "fkbackward",
        "version": __version__,
        "command": command,
        "argv": list(argv),
        "config": config,
        "seed": seed,
        "started": started,
        "finished": _now(),
        "backend": backend_name(),
        "outputs": {os.path.basename(p): _sha256(p) for p in outputs},
    }
    if extra:
        manifest.update(extra)
    path = out_path + ".manifest.json"
    write_json(path, manifest)
    return path


def _load_functionals(path, model):
    if path is None:
        return [default_probe(model)]
    spec = load_json(path)
    specs = spec if isinstance(spec, list) else [spec]
    if not specs:
        raise ValidationError("functional file holds an empty list")
    return [functional_from_config(s, model) for s in specs]


def _functional_spec(path):
    return None if path is None else load_json(path)


def _load_model(path):
    cfg = resolve_config(load_json(path))
    return cfg, model_from_config(cfg)


def _horizon(args, model):
    n = args.n if args.n is not None else model.horizon
    if n is None:
        raise ValidationError("--n is required")
    model.check_horizon(n)
    return n


def _require(args, *names):
    for name in names:
        if getattr(args, name) is None:
            raise ValidationError(f"--{name.replace('_', '-')} is required for '{args.command}'")


# ------------------------------------------------------------------ commands


def cmd_simulate(args, argv, started):
    _require(args, "config", "n", "out")
    cfg = load_json(args.config)
    seed = 0 if args.seed is None else args.seed
    xs, ys = simulate_data(cfg, args.n, seed)
    out = {k: v for k, v in cfg.items() if k != "observations"}
    out["observations"] = ys.tolist()
    out["hidden_states"] = xs.tolist()
    out["simulated_from"] = {"n": args.n, "seed": seed}
    write_json(args.out, out)
    write_manifest(args.out, argv=argv, command="simulate-data", config=cfg, seed=seed, started=started,
                   outputs=[args.out])
    return EXIT_OK


def cmd_filter(args, argv, started):
    _require(args, "config", "particles", "out")
    cfg, model = _load_model(args.config)
    n = _horizon(args, model)
    probes = _load_functionals(args.functional, model)
    seed = 0 if args.seed is None else args.seed
    policy = smc.RngPolicy(seed)
    names = []
    for i, f in enumerate(probes):
        name = f"eta_{f.name}"
        names.append(name if name not in names else f"{name}_{i}")
    rows = []
    for ens in smc.run_filter(model, n, args.particles, policy):
        p = ens.time_index
        log_gamma, _ = smc.gamma_log_estimate(ens)
        rows.append([p] + [float(np.mean(f(p, ens.particles))) for f in probes] + [log_gamma])
        log.debug("filter p=%d log_gamma_hat=%.6g", p, log_gamma)
    write_csv(args.out, ["p"] + names + ["log_gamma_hat"], rows)
    write_manifest(args.out, argv=argv, command="filter", config=cfg, seed=seed, started=started,
                   outputs=[args.out], extra={"n": n, "particles": args.particles,
                                              "functional": _functional_spec(args.functional)})
    return EXIT_OK


def cmd_smooth(args, argv, started):
    _require(args, "config", "particles", "out")
    cfg, model = _load_model(args.config)
    n = _horizon(args, model)
    F = _load_functionals(args.functional, model)[0]
    seed = 0 if args.seed is None else args.seed
    method = args.method or "both"
    run = smoothers.run_smoothers(model, F, n, args.particles, smc.RngPolicy(seed), method=method)
    rows = []
    for p in range(n + 1):
        rows.append([p, float(run.backward[p]), float(run.genealogy.get(p, float("nan")))])
    write_csv(args.out, ["p", "backward", "genealogy"], rows)
    write_manifest(args.out, argv=argv, command="smooth", config=cfg, seed=seed, started=started,
                   outputs=[args.out], extra={"n": n, "particles": args.particles, "method": method,
                                              "functional": _functional_spec(args.functional),
                                              "ensemble_digest": run.ensemble_digest})
    return EXIT_OK


def cmd_oracle(args, argv, started):
    _require(args, "config", "out")
    cfg, model = _load_model(args.config)
    n = _horizon(args, model)
    F = _load_functionals(args.functional, model)[0]
    report = oracle.oracle_report(model, F, n)
    write_json(args.out, report)
    write_manifest(args.out, argv=argv, command="oracle", config=cfg, seed=None, started=started,
                   outputs=[args.out], extra={"functional": _functional_spec(args.functional)})
    return EXIT_OK


def cmd_check(args, argv, started):
    _require(args, "config", "out")
    cfg, model = _load_model(args.config)
    d = 5.0 if args.d is None else args.d
    alpha = 0.25 if args.alpha is None else args.alpha
    report = assumptions.run_all_checks(model, d, alpha)
    write_json(args.out, report)
    write_manifest(args.out, argv=argv, command="check", config=cfg, seed=None, started=started,
                   outputs=[args.out], extra={"d": d, "alpha": alpha})
    for h in report["hypotheses"]:
        log.info("check %s: %s", h["hypothesis"], h["verdict"])
    return EXIT_OK


def cmd_study(args, argv, started):
    _require(args, "spec", "out")
    raw = load_json(args.spec)
    spec = experiments.ReplicateStudySpec.from_dict(raw)
    if args.seed is not None:
        spec.master_seed = args.seed
    threads = experiments.resolve_threads(args.threads)
    if args.kind == "clt":
        report = experiments.run_clt_study(spec, threads)
    elif args.kind == "growth":
        report = experiments.run_growth_study(spec, threads)
    else:
        report = experiments.run_cost_study(spec)
    write_csv(args.out, report.CSV_HEADER, report.csv_rows())
    summary_path = os.path.splitext(args.out)[0] + ".summary.json"
    summary = report.summary()
    write_json(summary_path, summary)
    resolved = dict(raw, model=spec.model_config, seed=spec.master_seed)
    write_manifest(args.out, argv=argv, command=f"study {args.kind}", config=resolved, seed=spec.master_seed,
                   started=started, outputs=[args.out, summary_path], extra={"threads": threads})
    for band in summary["bands"]:
        log.info("band %s value=%r [%r, %r] %s", band["name"], band["value"], band["lo"], band["hi"],
                 "pass" if band["passed"] else "FAIL")
    return EXIT_OK if report.passed else EXIT_BAND


COMMANDS = {
    "simulate-data": cmd_simulate,
    "filter": cmd_filter,
    "smooth": cmd_smooth,
    "oracle": cmd_oracle,
    "check": cmd_check,
    "study": cmd_study,
}


def build_parser():
    parser = _Parser(prog="fk", description="Forward-only smoothing of Feynman-Kac models.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(p, *flags):
        table = {
            "config": dict(help="model config JSON"),
            "spec": dict(help="study spec JSON"),
            "functional": dict(help="functional JSON (object, or list of objects for filter probes)"),
            "n": dict(type=int, help="time horizon"),
            "particles": dict(type=int, help="number of particles N"),
            "seed": dict(type=int, help="64-bit master seed"),
            "threads": dict(type=int, help="worker threads (default: FK_THREADS or 1)"),
            "out": dict(help="output path"),
            "method": dict(choices=("backward", "genealogy", "both")),
            "d": dict(type=float, help="level-set threshold"),
            "alpha": dict(type=float, help="weight exponent"),
        }
        for f in flags:
            p.add_argument(f"--{f}", **table[f])

    common(sub.add_parser("simulate-data", help="draw hidden states and observations"), "config", "n", "seed", "out")
    common(sub.add_parser("filter", help="particle filter estimates"),
           "config", "functional", "n", "particles", "seed", "out")
    common(sub.add_parser("smooth", help="backward and genealogy smoothers"),
           "config", "functional", "n", "particles", "seed", "method", "out")
    common(sub.add_parser("oracle", help="exact smoother value and asymptotic variance"),
           "config", "functional", "n", "out")
    common(sub.add_parser("check", help="grid verification of the model hypotheses"), "config", "d", "alpha", "out")
    study = sub.add_parser("study", help="replicate studies")
    study.add_argument("kind", choices=("clt", "growth", "cost"))
    common(study, "spec", "seed", "threads", "out")
    return parser


def dispatch(argv):
    """Run ``fk`` with ``argv`` and return the exit code."""
    argv = list(argv)
    started = _now()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, stream=sys.stderr,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.command is None:
            parser.print_usage(sys.stderr)
            raise ValidationError("a subcommand is required")
        return COMMANDS[args.command](args, argv, started)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (NumericSingularityError, OracleInconsistencyError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main(argv=None):
    sys.exit(dispatch(sys.argv[1:] if argv is None else argv))


if __name__ == "__main__":  # pragma: no cover
    main()
