"""Command-line front end: ``ntk-transfer {spectrum,theory,simulate,check}``."""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path
from typing import List, Optional

import jsonschema

from . import __version__
from . import theory as T
from .checks import run_checks, validate_spectrum_file
from .config import CONFIG_SCHEMA, Config, bundled_config, load_config
from .errors import ConfigError, InvariantFailure, NTKTransferError
from .experiment import build_kernel, build_spectrum, rows_to_csv, run_experiment
from .spectral import build_quadrature, decompose, reconstruction_error

OUT_ENV = "NTK_TRANSFER_OUT"

MANIFEST_SCHEMA = {
    "type": "object",
    "required": ["tool", "version", "command", "config", "seed", "timings", "outputs"],
    "properties": {
        "tool": {"const": "ntk-transfer"},
        "version": {"type": "string"},
        "command": {"enum": ["spectrum", "theory", "simulate"]},
        "config": CONFIG_SCHEMA,
        "config_source": {"type": ["string", "null"]},
        "seed": {"type": "integer", "minimum": 0},
        "threads": {"type": "integer", "minimum": 1},
        "timings": {"type": "object", "additionalProperties": {"type": "number", "minimum": 0}},
        "outputs": {"type": "array", "items": {"type": "string"}, "minItems": 1},
    },
}


def resolve_config(name_or_path: str) -> Config:
    """A config file path, or the name of a bundled recipe such as ``fig1a``."""
    path = Path(name_or_path)
    if path.exists():
        return load_config(path)
    if path.suffix == "" and path.parent == Path("."):
        return bundled_config(name_or_path)
    raise ConfigError(f"config file {name_or_path} not found")


class _Timer:
    def __init__(self):
        self.stages = {}

    def __call__(self, name):
        timer = self

        class _Stage:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                timer.stages[name] = round(time.perf_counter() - self.t0, 6)

        return _Stage()


def write_manifest(out: Path, command: str, cfg: Config, timings: dict,
                   outputs: List[Path], threads: int = 1) -> Path:
    manifest = {
        "tool": "ntk-transfer",
        "version": __version__,
        "command": command,
        "config": cfg.to_dict(),
        "config_source": cfg.source,
        "seed": cfg.experiment.seed,
        "threads": threads,
        "timings": timings,
        "outputs": [str(p) for p in outputs],
    }
    try:
        jsonschema.validate(manifest, MANIFEST_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise InvariantFailure(f"manifest does not validate: {exc.message}") from exc
    path = out / f"{command}.manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def theory_points(cfg: Config, spec) -> List[T.CurvePoint]:
    """Every theory quantity implied by the experiment grid of ``cfg``."""
    e = cfg.experiment
    points = []
    if e.N_list:
        for sizes in e.N_list:
            for s2 in e.sigma_sq:
                curve = T.learning_curve(spec, sizes, s2)
                for n, value in enumerate(curve.errors, start=1):
                    points.append(T.CurvePoint("E_n", sizes[0], sizes[n - 1], n, 1.0, s2,
                                               float(value)))
        return points
    singles = sorted({n for pair in e.size_pairs for n in pair})
    for s2 in e.sigma_sq:
        for N in singles:
            points.append(T.CurvePoint("E1", N, N, 1, float("nan"), s2, T.e_single(spec, N, s2)))
        for N_A, N_B in e.size_pairs:
            for rho in e.rho:
                points.append(T.CurvePoint("E_AB", N_A, N_B, 2, rho, s2,
                                           T.e_transfer(spec, N_A, N_B, rho, s2)))
                points.append(T.CurvePoint("E_AB_back", N_A, N_B, 2, rho, s2,
                                           T.e_backward(spec, N_A, N_B, rho, s2)))
                if s2 == 0:
                    points.append(T.CurvePoint("E_ave", N_A, N_B, 2, rho, s2,
                                               T.e_average(spec, N_A, N_B, rho)))
    return points


def cmd_spectrum(cfg: Config, out: Path, args) -> int:
    timer = _Timer()
    d = cfg.kernel.input_dim
    kernel = build_kernel(cfg)
    with timer("quadrature"):
        rule = build_quadrature(d, cfg.spectrum.r)
    with timer("decompose"):
        full = decompose(kernel, d, cfg.spectrum.k_max, rule, zero_constant=False)
        spec = decompose(kernel, d, cfg.spectrum.k_max, rule)
    path = out / "spectrum.csv"
    path.write_text(spec.to_csv())
    gap = (full.trace - kernel.trace) / kernel.trace
    recon = reconstruction_error(full, kernel, rule.nodes)
    print(f"Theta(1) = {kernel.trace:.10g}; truncated trace = {full.trace:.10g} "
          f"(relative gap {gap:+.3e}, tolerance 5%)")
    print(f"max reconstruction error on quadrature nodes: {recon:.3e} x Theta(1)")
    print(f"constant level eta_0 = {full.eta[0]:.6g} set to 0; "
          f"positive modes: {spec.n_modes:.6g}")
    print(f"wrote {path}")
    write_manifest(out, "spectrum", cfg, timer.stages, [path])
    return 0


def cmd_theory(cfg: Config, out: Path, args) -> int:
    timer = _Timer()
    with timer("spectrum"):
        spec = build_spectrum(cfg)
    with timer("theory"):
        points = theory_points(cfg, spec)
    path = out / "theory.csv"
    path.write_text(T.curve_points_csv(points))
    print(f"wrote {len(points)} rows to {path}")
    write_manifest(out, "theory", cfg, timer.stages, [path])
    return 0


def cmd_simulate(cfg: Config, out: Path, args) -> int:
    timer = _Timer()
    with timer("spectrum"):
        spec = build_spectrum(cfg)
    with timer("simulate"):
        rows = run_experiment(cfg, threads=args.threads, spectrum=spec)
    path = out / "simulate.csv"
    path.write_text(rows_to_csv(rows))
    print(f"wrote {len(rows)} rows to {path}")
    write_manifest(out, "simulate", cfg, timer.stages, [path], threads=args.threads)
    return 0


def cmd_check(args) -> int:
    if args.spectrum:
        results = validate_spectrum_file(args.spectrum, args.dim)
    else:
        results = run_checks(fast=args.fast, threads=args.threads)
    for r in results:
        print(r.line())
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"{len(failed)} of {len(results)} checks failed: {', '.join(failed)}")
        return InvariantFailure.exit_code
    print(f"all {len(results)} checks passed" + (" (Monte Carlo skipped)" if args.fast else ""))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ntk-transfer",
        description="Learning curves of sequential NTK regression and their Monte Carlo check.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=1, help="worker threads for trials")
    run = argparse.ArgumentParser(add_help=False)
    run.add_argument("--config", required=True,
                     help="config file, or the name of a bundled recipe (e.g. fig1a)")
    run.add_argument("--out", default=os.environ.get(OUT_ENV, "results"),
                     help=f"output directory (default ${OUT_ENV} or ./results)")
    run.add_argument("--seed", type=int, default=None, help="override the config seed")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("spectrum", parents=[run, common], help="write spectrum.csv")
    sub.add_parser("theory", parents=[run, common], help="write theory.csv")
    sub.add_parser("simulate", parents=[run, common], help="run the Monte Carlo experiment")
    check = sub.add_parser("check", parents=[common], help="run the acceptance checks")
    check.add_argument("--fast", action="store_true", help="skip Monte Carlo checks")
    check.add_argument("--spectrum", default=None, help="validate a spectrum CSV instead")
    check.add_argument("--dim", type=int, default=None,
                       help="sphere dimension for the degeneracy check of --spectrum")
    return parser


COMMANDS = {"spectrum": cmd_spectrum, "theory": cmd_theory, "simulate": cmd_simulate}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        if args.command == "check":
            return cmd_check(args)
        cfg = resolve_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be non-negative")
            cfg = cfg.with_seed(args.seed)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out, args)
    except NTKTransferError as exc:
        kind = type(exc).__name__
        print(f"error ({kind}): {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"error (invalid input): {exc}", file=sys.stderr)
        return ConfigError.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
