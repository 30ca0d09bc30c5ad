"""Command-line interface.

Exit codes: 0 success, 2 finished but flagged (training above the error
ceiling), 3 outside a model's region of validity, 64 usage error, 74 I/O
error.
"""

import argparse
import csv
import json
import logging
import os
import sys

import numpy as np

from .embed import can_embed, embed
from .errors import (
    DegenerateCoefficientsError,
    FermiForgeError,
    ModelFileError,
    NoValidModelError,
    OutOfRegionError,
    ValidationError,
)
from .io import load_model, read_matrix, save_model, write_matrix
from .matrix import MatmulCounter, PrecisionMode, normalize_problem, region_violations
from .models import Architecture, evaluate_model
from .scalar import layer_count_estimate

EXIT_OK = 0
EXIT_FLAGGED = 2
EXIT_REGION = 3
EXIT_USAGE = 64
EXIT_IO = 74

PRECISIONS = {"double": PrecisionMode.DOUBLE, "single": PrecisionMode.SINGLE,
              "mixed": PrecisionMode.MIXED_EMULATED}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _layers(text):
    if text == "auto":
        return 0
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected an integer or 'auto'")
    if n < 1:
        raise argparse.ArgumentTypeError("layers must be >= 1")
    return n


def _grid(text):
    try:
        w, h = text.lower().split("x")
        w, h = int(w), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError("expected WxH, e.g. 50x50")
    if w < 1 or h < 1:
        raise argparse.ArgumentTypeError("grid dimensions must be positive")
    return w, h


def _sizes(text):
    try:
        sizes = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma-separated integers")
    if not sizes or min(sizes) < 1:
        raise argparse.ArgumentTypeError("sizes must be positive")
    return sizes


def _precision(text):
    if text not in PRECISIONS:
        raise argparse.ArgumentTypeError(f"unknown precision {text!r}")
    return PRECISIONS[text]


def _precisions(text):
    out = []
    for p in text.split(","):
        if p.strip() not in PRECISIONS:
            raise argparse.ArgumentTypeError(f"unknown precision {p!r}")
        out.append(PRECISIONS[p.strip()])
    return out


# --------------------------------------------------------------------------
# commands

def cmd_train(args):
    from .trainer import TrainingConfig, train_entropy, train_fermi, TRAINABLE

    arch = Architecture.parse(args.arch)
    if arch is Architecture.ARBSP2 and not args.force:
        raise UsageError("architecture not trainable by default: arbsp2 (use --force)")
    if arch is Architecture.SP2:
        raise UsageError("sp2 has no trainable parameters")
    if arch is Architecture.ENTROPY:
        if not args.model:
            raise UsageError("entropy training needs --model with the base Fermi model")
        base = load_model(args.model[0])
        beta0, mu0 = base.beta0, base.mu0
    elif args.beta0 is None or args.mu0 is None:
        raise UsageError("--beta0 and --mu0 are required")
    else:
        beta0, mu0 = args.beta0, args.mu0
        if arch not in TRAINABLE and not args.force:
            raise UsageError(f"architecture not trainable by default: {arch.value}")
    layers = args.layers if arch is not Architecture.ENTROPY else base.layers
    cfg = TrainingConfig(
        beta0=beta0, mu0=mu0,
        architecture=Architecture.MLSP2 if arch is Architecture.ENTROPY else arch,
        layers=layers, layer_margin=args.margin, sample_count=args.samples,
        weighting=args.weighting, seed=args.seed, max_iterations=args.max_iter,
        minimax_passes=args.minimax_passes, residual_tolerance=args.tol,
        fix_constant_term=args.fix_constant, skip_depth=args.skip_depth,
        accumulators=args.accumulators, allow_untrainable=args.force)
    if arch is not Architecture.ENTROPY and args.layers == 0:
        print(f"layers: auto -> {layer_count_estimate(beta0)} + {args.margin} = "
              f"{cfg.resolved_layers()}")
    if arch is Architecture.ENTROPY:
        m, rep = train_entropy(cfg, base)
    else:
        m, rep = train_fermi(cfg)
    save_model(m, args.out)
    print(f"wrote {args.out}: {m.architecture.value}, beta0={m.beta0:g}, mu0={m.mu0:.17g}, "
          f"layers={m.layers}")
    print(rep.summary())
    return EXIT_OK if rep.converged else EXIT_FLAGGED


def _library(paths):
    from .workflow import ModelLibrary

    if paths:
        return ModelLibrary.from_paths(paths)
    return ModelLibrary.default()


def _region_message(H, beta, mu, lib):
    """Explain, per model, which validity inequality a query breaks."""
    problem = normalize_problem(H, beta, mu)
    lines = [f"beta'={problem.beta_prime:.6g}, mu'={problem.mu_prime:.6g}"]
    for m in lib.fermi_models():
        for v in region_violations(problem.beta_prime, problem.mu_prime, m.beta0, m.mu0):
            lines.append(f"  model beta0={m.beta0:g}, mu0={m.mu0:.6g}: {v}")
    return "\n".join(lines)


def cmd_apply(args):
    from .workflow import compute_density_matrix

    lib = _library(args.model)
    H = read_matrix(args.hamiltonian)
    counter = MatmulCounter()
    try:
        D, prov = compute_density_matrix(H, args.beta, args.mu, lib, args.precision,
                                         counter=counter)
    except (NoValidModelError, OutOfRegionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(_region_message(H, args.beta, args.mu, lib), file=sys.stderr)
        return EXIT_REGION
    write_matrix(args.out, D)
    prov_path = os.path.splitext(args.out)[0] + ".provenance.json"
    with open(prov_path, "w") as fh:
        json.dump(prov, fh, indent=1)
    mm = prov["matmuls"]
    print(f"wrote {args.out} (beta'={prov['beta_prime']:.6g}, mu'={prov['mu_prime']:.6g}, "
          f"model beta0={prov['model']['beta0']:g} layers={prov['model']['layers']}, "
          f"precision={prov['precision']}, matmuls full={mm['full']} half={mm['half']})")
    return EXIT_OK


def cmd_solve_mu(args):
    from .matrix import spectral_bounds
    from .workflow import solve_chemical_potential

    lib = _library(args.model)
    H = read_matrix(args.hamiltonian)
    N = H.shape[0]
    if not 0 < args.nocc < N:
        raise UsageError(f"--nocc must lie in (0, {N})")
    guess = args.mu
    if guess is None:
        b = spectral_bounds(H)
        guess = 0.5 * (b.eps_min + b.eps_max)
    try:
        D, rep = solve_chemical_potential(H, args.beta, args.nocc, guess, lib, args.tol,
                                          args.max_iter, args.precision)
    except (NoValidModelError, OutOfRegionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_REGION
    print(f"{'iter':>4}  {'mu':>22}  {'Tr D':>22}  {'delta mu':>12}")
    for i, (mu, g) in enumerate(rep.residual_history):
        step = f"{rep.steps[i]:12.4e}" if i < len(rep.steps) else f"{'':>12}"
        print(f"{i:4d}  {mu:22.15f}  {g + args.nocc:22.15f}  {step}")
    for note in rep.notes:
        print(f"note: {note}")
    state = "converged" if rep.converged else "NOT converged"
    print(f"{state}: mu = {rep.mu_final:.15g} after {rep.iterations} iterations")
    if args.out:
        write_matrix(args.out, D)
        print(f"wrote {args.out}")
    return EXIT_OK if rep.converged else EXIT_FLAGGED


def cmd_validate(args):
    from .diagnostics import validity_heatmap

    m = load_model(args.model)
    cells = validity_heatmap(m, args.beta_max, args.grid, args.probe)
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh)
        w.writerow(["beta_prime", "mu_prime", "max_error", "in_region"])
        for c in cells:
            w.writerow([f"{c.beta_prime:.10g}", f"{c.mu_prime:.10g}", f"{c.max_error:.6e}",
                        str(c.in_region).lower()])
    finally:
        if args.out:
            fh.close()
    inside = [c.max_error for c in cells if c.in_region]
    if args.out:
        worst = max(inside) if inside else float("nan")
        print(f"wrote {args.out}: {len(cells)} cells, {len(inside)} in region, "
              f"worst in-region error {worst:.3e}")
    return EXIT_OK


def cmd_bench(args):
    from .diagnostics import BENCH_NOTE, run_benchmark

    m = load_model(args.model)
    if m.is_entropy:
        raise UsageError("bench needs a Fermi model")
    rows = run_benchmark(args.sizes, m, args.precision, args.seed)
    header = ["size", "precision", "apply_s", "full_mm", "half_mm", "jacobi_s", "lapack_s",
              "error_2norm"]
    table = [[r.size, r.precision, f"{r.apply_seconds:.4f}", r.full_matmuls, r.half_matmuls,
              f"{r.jacobi_seconds:.4f}", f"{r.lapack_seconds:.4f}", f"{r.error_2norm:.3e}"]
             for r in rows]
    if args.csv:
        w = csv.writer(sys.stdout)
        w.writerow(header)
        w.writerows(table)
    else:
        widths = [max(len(str(x)) for x in col) for col in zip(header, *table)]
        for line in [header] + table:
            print("  ".join(str(x).rjust(wd) for x, wd in zip(line, widths)))
    print(BENCH_NOTE)
    return EXIT_OK


def cmd_convert(args):
    m = load_model(args.model)
    target = Architecture.parse(args.to)
    if not can_embed(m.architecture, target):
        raise UsageError(f"cannot convert {m.architecture.value} to {target.value}: "
                         "embeddings are one-directional")
    try:
        out = embed(m, target, skip_depth=args.skip_depth, accumulators=args.accumulators)
    except DegenerateCoefficientsError as exc:
        raise UsageError(str(exc))
    x = np.linspace(0.0, 1.0, 10001)
    dev = float(np.max(np.abs(evaluate_model(out, x) - evaluate_model(m, x))))
    path = args.out or os.path.splitext(args.model)[0] + f"_{target.value}.json"
    save_model(out, path)
    print(f"wrote {path}: {m.architecture.value} -> {target.value}, "
          f"max grid deviation {dev:.3e}")
    return EXIT_OK


def cmd_info(args):
    m = load_model(args.model)
    print(f"architecture: {m.architecture.value}")
    print(f"beta0: {m.beta0:.17g}")
    print(f"mu0: {m.mu0:.17g}")
    print(f"layers: {m.layers}")
    err = m.info.get("final_max_error")
    print(f"final_max_error: {err:.3e}" if err is not None else "final_max_error: unknown")
    if m.is_entropy:
        print(f"alpha: {m.payload.alpha:.17g}")
    for key in ("seed", "sample_count", "weighting", "iterations"):
        if key in m.info:
            print(f"{key}: {m.info[key]}")
    return EXIT_OK


# --------------------------------------------------------------------------

def build_parser():
    p = _Parser(prog="fermiforge", description="Train and apply SP2-family Fermi-operator models.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="fit a model at (beta0, mu0)")
    t.add_argument("--arch", default="mlsp2",
                   help="mlsp2, mlsp2_compact, skipsp2, maxsp2 or entropy")
    t.add_argument("--beta0", type=float)
    t.add_argument("--mu0", type=float)
    t.add_argument("--layers", type=_layers, default=0, help="integer or 'auto'")
    t.add_argument("--margin", type=int, default=2, help="extra layers added to 'auto'")
    t.add_argument("--samples", type=int, default=20000)
    t.add_argument("--weighting", choices=["uniform", "derivative", "arclength"],
                   default="derivative")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--max-iter", type=int, default=3000)
    t.add_argument("--minimax-passes", type=int, default=4)
    t.add_argument("--tol", type=float, default=1e-12, help="residual norm tolerance")
    t.add_argument("--fix-constant", action="store_true",
                   help="hold MLSP2 constant terms at their initial value")
    t.add_argument("--skip-depth", type=int, default=1)
    t.add_argument("--accumulators", type=int, default=1)
    t.add_argument("--model", action="append", help="base Fermi model for --arch entropy")
    t.add_argument("--force", action="store_true", help="allow training arbsp2")
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    a = sub.add_parser("apply", help="density matrix of a Hamiltonian")
    a.add_argument("--model", action="append",
                   help="model file or directory (repeatable); default: packaged library")
    a.add_argument("--hamiltonian", required=True)
    a.add_argument("--beta", type=float, required=True)
    a.add_argument("--mu", type=float, required=True)
    a.add_argument("--precision", type=_precision, default="double",
                   metavar="{double,single,mixed}")
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_apply)

    s = sub.add_parser("solve-mu", help="find mu with Tr D = nocc")
    s.add_argument("--model", action="append")
    s.add_argument("--hamiltonian", required=True)
    s.add_argument("--beta", type=float, required=True)
    s.add_argument("--nocc", type=float, required=True)
    s.add_argument("--mu", type=float, help="initial guess (default: centre of the bounds)")
    s.add_argument("--tol", type=float, default=1e-8)
    s.add_argument("--max-iter", type=int, default=50)
    s.add_argument("--precision", type=_precision, default="double",
                   metavar="{double,single,mixed}")
    s.add_argument("--out")
    s.set_defaults(func=cmd_solve_mu)

    v = sub.add_parser("validate", help="scalar error heatmap over (beta', mu')")
    v.add_argument("--model", required=True)
    v.add_argument("--grid", type=_grid, default=(50, 50))
    v.add_argument("--beta-max", type=float, help="largest beta' (default 2 beta0)")
    v.add_argument("--probe", type=int, default=2001, help="probe points per cell")
    v.add_argument("--out", help="CSV path (default stdout)")
    v.set_defaults(func=cmd_validate)

    b = sub.add_parser("bench", help="time model application against diagonalization")
    b.add_argument("--model", required=True)
    b.add_argument("--sizes", type=_sizes, default=[128, 256])
    b.add_argument("--precision", type=_precisions, default=[PrecisionMode.DOUBLE],
                   help="comma-separated list of double, single, mixed")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--csv", action="store_true", help="emit CSV instead of a table")
    b.set_defaults(func=cmd_bench)

    c = sub.add_parser("convert", help="embed a model into a richer architecture")
    c.add_argument("--model", required=True)
    c.add_argument("--to", required=True)
    c.add_argument("--skip-depth", type=int, default=1)
    c.add_argument("--accumulators", type=int, default=1)
    c.add_argument("--out")
    c.set_defaults(func=cmd_convert)

    i = sub.add_parser("info", help="print model metadata")
    i.add_argument("--model", required=True)
    i.set_defaults(func=cmd_info)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"fermiforge {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ModelFileError) as exc:
        print(f"fermiforge {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValidationError, ValueError) as exc:
        print(f"fermiforge {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FermiForgeError as exc:
        print(f"fermiforge {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
