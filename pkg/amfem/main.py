# --------------------------------------------------
# main.py
# --------------------------------------------------
# Command-line front end for amfem:
#
# ✔ adapt  - AMFEM loop on a builtin domain or a mesh
#            file; writes history.csv, mesh.json,
#            indicators.csv, manifest.json, metrics.prom
#            and prints the error / eta rate summary
# ✔ verify - runs a verification suite; writes
#            report.json + metrics.prom, exit 2 names
#            the first failing assertion
# ✔ rates  - slopes of one or two history files, with
#            the difference when given two
#
# Notes:
#   - stdout carries results only; JSON logs go to stderr
#   - exit status: 0 ok, 1 config/data error,
#     2 failed assertion, 3 solver failure
#   - reaching the iteration cap is a warning, exit 0
# --------------------------------------------------

import argparse
import logging
import sys
import time
from typing import List, Optional

from pydantic import ValidationError
from scipy.linalg import LinAlgError

from . import __version__
from .adapt import amfem, fit_rate
from .complex import build_complex
from .config import settings
from .errors import AmfemError, ConfigError, ConvergenceDataError, SolverError
from .hodge import harmonic_basis
from .logging_utils import setup_logging
from .mesh import builtin_domain
from .metrics import metrics
from .problems import resolve_data
from .schemas import SUITES, RunConfig, RunManifest
from .storage import (
    ensure_dir,
    export_coo,
    load_mesh,
    read_history,
    save_mesh,
    write_harmonic_basis,
    write_history,
    write_indicators,
    write_json,
    write_text,
)
from .suites import run_suite

logger = logging.getLogger(__name__)


# --------------------------------------------------
# Argument parsing
# --------------------------------------------------


def _beta_grid(text: str) -> List[float]:
    try:
        return [float(item) for item in text.split(",") if item.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"invalid beta grid {text!r}") from exc


class _Parser(argparse.ArgumentParser):
    """Usage errors are config errors (exit 1), not argparse's exit 2."""

    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="amfem",
        description="Adaptive mixed FEM for the top-degree Hodge-Laplace problem in 2-D.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = _Parser(add_help=False)
    common.add_argument("--out", default=settings.OUTPUT_DIR, help="output directory")
    common.add_argument("--theta", type=float, default=0.5, help="Dorfler parameter in (0, 1]")
    common.add_argument("--max-iterations", type=int, default=settings.MAX_ITERATIONS)
    common.add_argument("--delta", type=float, default=0.25)
    common.add_argument("--beta-grid", type=_beta_grid, default=[0.01, 0.1, 1.0, 10.0],
                        help="comma separated, e.g. 0.01,0.1,1,10")
    common.add_argument("--beta", type=float, default=1.0, help="beta of the q column")
    common.add_argument("--reference-depth", type=int, default=2,
                        help="uniform levels above the finest mesh for the reference solve")
    common.add_argument("--seed", type=int, default=0)

    adapt = sub.add_parser("adapt", parents=[common], help="run the adaptive loop")
    source = adapt.add_mutually_exclusive_group()
    source.add_argument("--domain", default="lshape")
    source.add_argument("--mesh", help="mesh JSON file")
    adapt.add_argument("--f", default="const1", help="const1, sinsin, linex, signstep or a CSV of x,y,value")
    adapt.add_argument("--eps", type=float, default=1e-3, help="tolerance on eta (not eta^2)")
    adapt.add_argument("--strategy", default="dorfler", choices=("dorfler", "separate", "uniform"))
    adapt.add_argument("--export-operators", action="store_true",
                       help="write M1, D0, D1 of the final mesh as coordinate text")

    verify = sub.add_parser("verify", parents=[common], help="run a verification suite")
    verify.add_argument("--suite", default="all", choices=SUITES)
    verify.add_argument("--levels", type=int, default=4, help="uniform levels of the nested run matrix")

    rates = sub.add_parser("rates", help="fit convergence slopes of history files")
    rates.add_argument("files", nargs="+", help="history CSV files")

    return parser


def _config(args: argparse.Namespace) -> RunConfig:
    fields = {
        "command": args.command,
        "theta": args.theta,
        "max_iterations": args.max_iterations,
        "delta": args.delta,
        "beta_grid": args.beta_grid,
        "beta": args.beta,
        "out": args.out,
        "reference_depth": args.reference_depth,
        "seed": args.seed,
    }
    if args.command == "adapt":
        fields.update(domain=args.domain, mesh=args.mesh, f=args.f, eps=args.eps,
                      strategy=args.strategy, export_operators=args.export_operators)
    else:
        fields.update(suite=args.suite, levels=args.levels)
    try:
        return RunConfig(**fields)
    except ValidationError as exc:
        first = exc.errors()[0]
        where = ".".join(str(part) for part in first["loc"])
        raise ConfigError(f"invalid {where}: {first['msg']}") from exc


def _slope(history, y: str) -> Optional[float]:
    try:
        return fit_rate(history, "dofs", y)
    except ConvergenceDataError:
        return None


def _show(value: Optional[float]) -> str:
    return "n/a" if value is None else f"{value:.2f}"


# --------------------------------------------------
# adapt
# --------------------------------------------------


def cmd_adapt(cfg: RunConfig) -> int:
    out = ensure_dir(cfg.out)
    mesh0 = load_mesh(cfg.mesh) if cfg.mesh else builtin_domain(cfg.domain)
    f = resolve_data(cfg.f)
    metrics.reset()

    start = time.perf_counter()
    result = amfem(
        mesh0, f, cfg.eps, cfg.theta,
        max_iterations=cfg.max_iterations,
        strategy=cfg.strategy,
        reference_depth=cfg.reference_depth,
        delta=cfg.delta,
        beta=cfg.beta,
    )
    elapsed = time.perf_counter() - start

    outputs = {
        "history": str(out / "history.csv"),
        "mesh": str(out / "mesh.json"),
        "indicators": str(out / "indicators.csv"),
        "metrics": str(out / "metrics.prom"),
    }
    write_history(result.history, outputs["history"])
    save_mesh(result.mesh, outputs["mesh"])
    write_indicators(result.indicators[-1], outputs["indicators"])
    if cfg.export_operators:
        cx = result.solution.complex
        for name, matrix in (("M1", cx.M1), ("D0", cx.D0), ("D1", cx.D1)):
            outputs[name] = str(out / f"{name}.coo")
            export_coo(matrix, outputs[name])
    write_text(metrics.render_prometheus(), outputs["metrics"])

    final_eta = result.history[-1].eta_sq ** 0.5
    manifest = RunManifest(
        package_version=__version__,
        command="adapt",
        parameters=cfg.model_dump(),
        domain=cfg.mesh or cfg.domain,
        initial_cells=mesh0.num_triangles,
        final_cells=result.mesh.num_triangles,
        iterations=result.iterations,
        converged=result.converged,
        final_eta=final_eta,
        elapsed_seconds=elapsed,
        outputs=outputs,
    )
    outputs["manifest"] = str(out / "manifest.json")
    write_json(manifest.model_dump(), outputs["manifest"])

    print(f"iterations {result.iterations}  cells {result.mesh.num_triangles}  eta {final_eta:.6g}")
    print(f"rate vs dofs: error {_show(_slope(result.history, 'error'))}  "
          f"eta {_show(_slope(result.history, 'eta'))}")
    if not result.converged:
        print(f"warning: iteration cap {cfg.max_iterations} reached before eta <= {cfg.eps:g}",
              file=sys.stderr)
    return 0


# --------------------------------------------------
# verify
# --------------------------------------------------


def cmd_verify(cfg: RunConfig) -> int:
    out = ensure_dir(cfg.out)
    metrics.reset()
    run = run_suite(cfg)

    if cfg.suite in ("harmonics", "all"):
        cx = build_complex(builtin_domain("square_one_hole"))
        write_harmonic_basis(harmonic_basis(cx), cx.mesh, out / "harmonics_square_one_hole.csv")

    write_json(run.report, out / "report.json")
    write_text(metrics.render_prometheus(), out / "metrics.prom")

    if run.passed:
        print(f"suite {cfg.suite}: all assertions passed")
        return 0
    first = run.failures[0]
    print(f"suite {cfg.suite}: FAILED {first}", file=sys.stderr)
    return first.exit_code


# --------------------------------------------------
# rates
# --------------------------------------------------


def cmd_rates(paths: List[str]) -> int:
    slopes = []
    print(f"{'file':<40} {'error':>8} {'eta':>8}")
    for path in paths:
        history = read_history(path)
        if len(history) < 3:
            raise ConvergenceDataError(f"{path}: need at least 3 records for a rate, got {len(history)}")
        error, eta = _slope(history, "error"), _slope(history, "eta")
        slopes.append((error, eta))
        print(f"{path:<40} {_show(error):>8} {_show(eta):>8}")

    if len(paths) == 2:
        (e1, n1), (e2, n2) = slopes
        diff_error = e2 - e1 if e1 is not None and e2 is not None else None
        diff_eta = n2 - n1 if n1 is not None and n2 is not None else None
        print(f"{'difference (second - first)':<40} {_show(diff_error):>8} {_show(diff_eta):>8}")
    return 0


# --------------------------------------------------
# Entry point
# --------------------------------------------------


def main(argv: Optional[List[str]] = None) -> int:
    setup_logging(settings.LOG_LEVEL)
    command = None
    try:
        args = build_parser().parse_args(argv)
        command = args.command
        if args.command == "rates":
            return cmd_rates(args.files)
        cfg = _config(args)
        if cfg.command == "adapt":
            return cmd_adapt(cfg)
        return cmd_verify(cfg)
    except AmfemError as exc:
        return _fail(command, exc)
    except LinAlgError as exc:
        return _fail(command, SolverError(f"linear algebra failure: {exc}"))
    except OSError as exc:
        target = exc.filename if exc.filename is not None else "file"
        return _fail(command, ConfigError(f"cannot access {target}: {exc.strerror or exc}"))


def _fail(command: Optional[str], exc: AmfemError) -> int:
    logger.error({"msg": "command_failed", "command": command,
                  "error": type(exc).__name__, "detail": str(exc)})
    print(f"error: {exc}", file=sys.stderr)
    return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
