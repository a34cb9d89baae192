"""``forge`` command line: generate | train | extract | solve | analyze.

Exit codes: 0 success (an energy-guard blowup is a result, not a failure),
1 failed assertion or internal error, 2 I/O error, 3 missing prerequisite,
4 degenerate basis.
"""

from __future__ import annotations

import argparse
import contextlib
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import pipeline
from .config import ExperimentConfig, load_config
from .fileio import FormatError, write_csv

EXIT_OK, EXIT_ASSERT, EXIT_IO, EXIT_MISSING, EXIT_DEGENERATE = 0, 1, 2, 3, 4

log = logging.getLogger("basisforge")


def _thread_limit():
    """Honour FORGE_THREADS when threadpoolctl is available."""
    n = os.environ.get("FORGE_THREADS")
    if not n:
        return contextlib.nullcontext()
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        log.warning("FORGE_THREADS set but threadpoolctl is not installed; ignoring")
        return contextlib.nullcontext()
    return threadpool_limits(int(n))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="forge", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("generate", "sample initial conditions and solve the reference problem"),
        ("train", "train the operator network"),
        ("extract", "build the orthonormal basis from the trained trunk"),
        ("solve", "evolve test initial conditions in the basis and compare"),
        ("analyze", "approximation bounds and coefficient decay"),
    ):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", type=Path, help="key = value config file")
        p.add_argument("--out", help="output directory (default runs/<pde>)")
        p.add_argument("--seed", type=int)
        p.add_argument("--preset", choices=["full", "desk"])
        p.add_argument("--pde", help="override the config's PDE")
        p.add_argument("--cross-basis", type=Path, help="basis file built for another PDE")
        p.add_argument("--time-sampled", type=float, metavar="DT",
                       help="freeze the trunk at every multiple of DT in [0, T]")
        if name == "train":
            p.add_argument("--repeat", type=int, default=1,
                           help="train this many seeds and report mean and std test MSE")
    return parser


def resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    overrides = {
        "out_dir": args.out,
        "seed": args.seed,
        "preset": args.preset,
        "pde": args.pde,
        "cross_basis": None if args.cross_basis is None else str(args.cross_basis),
        "time_sampled_dt": args.time_sampled,
    }
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    return cfg.resolved()


def cmd_generate(cfg, args):
    data = pipeline.generate(cfg)
    print(f"generated {len(data['train'])} training and {len(data['test'])} test ICs "
          f"in {cfg.out_dir} (config {cfg.hash()})")


def cmd_train(cfg, args):
    mses = []
    for k in range(args.repeat):
        model, history, mse = pipeline.train_model(cfg, seed_offset=k)
        mses.append(mse)
        if k == 0:
            pipeline.write_training_outputs(cfg, model, history)
        print(f"run {k}: final train loss {history[-1]:.4e}  test MSE {mse:.4e}")
    if args.repeat > 1:
        out = Path(cfg.out_dir)
        write_csv(out / "repeat.csv", ["run", "test_mse"], enumerate(mses),
                  pipeline._stamp(cfg))
        print(f"test MSE over {args.repeat} runs: {np.mean(mses):.4e} +- {np.std(mses):.4e}")


def cmd_extract(cfg, args):
    basis, report = pipeline.extract(cfg)
    dev = pipeline.write_basis_outputs(cfg, basis)
    print(f"candidates {report['candidates']}  r = {basis.rank}  threshold {basis.threshold:.1e}")
    s = basis.singular_values
    print(f"sigma_1/sigma_r = {s[0] / s[basis.rank - 1]:.3e}  Gram deviation {dev:.2e}")


def cmd_solve(cfg, args):
    for r in pipeline.solve(cfg):
        status = "stable" if not r.blowup else f"blowup at t={r.blowup_time:.4f}"
        print(f"{cfg.pde} {r.ic}: r={r.rank} b={r.b}  mean E2 {r.mean_error:.4e}  {status}")


def cmd_analyze(cfg, args):
    reports, profile = pipeline.analyze(cfg)
    for key, rep in reports.items():
        print(f"{key} {rep.target}: ||f-Pf|| = {rep.projection_error:.3e} "
              f"<= {rep.bound:.3e} (tail {rep.tail:.2e}, damped {rep.damped_sum:.2e})")


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "extract": cmd_extract,
    "solve": cmd_solve,
    "analyze": cmd_analyze,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = resolve_config(args)
        with _thread_limit():
            COMMANDS[args.command](cfg, args)
    except pipeline.MissingArtifact as exc:
        print(f"forge: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except pipeline.DegenerateBasis as exc:
        print(f"forge: degenerate basis: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (OSError, FormatError) as exc:
        print(f"forge: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except AssertionError as exc:
        print(f"forge: assertion failed: {exc}", file=sys.stderr)
        return EXIT_ASSERT
    except ValueError as exc:
        print(f"forge: {exc}", file=sys.stderr)
        return EXIT_ASSERT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
