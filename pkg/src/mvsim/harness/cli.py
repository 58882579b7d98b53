"""Command line entry point: ``mvsim run|verify|sweep|converge <config>``.

Exit codes: 0 success, 2 configuration or parameter error, 3 solver or
non-finite error, 4 verification failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from ..errors import ConfigError, MvsimError, ParameterError, VerificationError
from .config import load_config
from .driver import run_simulation
from .verify import Report, convergence_study, sweep, verify_lemmas

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_VERIFY = 4


def _eps_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mvsim", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_text in [("run", "run one simulation"),
                            ("verify", "check the LLG forms and transport against characteristics"),
                            ("sweep", "run a config over several eps values"),
                            ("converge", "observed orders against manufactured solutions")]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="flat key = value config file")
        p.add_argument("--out", help="output directory (default: output_dir from the config)")
        if name == "verify":
            p.add_argument("--refine", action="store_true", help="add a run at twice the resolution")
        if name == "sweep":
            p.add_argument("--eps", type=_eps_list, required=True, help="comma-separated eps values")
        if name == "converge":
            p.add_argument("--levels", type=int, default=3, help="refinement levels (>= 3)")
    return ap


def _exit_code(exc: MvsimError) -> int:
    if isinstance(exc, (ConfigError, ParameterError)):
        return EXIT_CONFIG
    if isinstance(exc, VerificationError):
        return EXIT_VERIFY
    return EXIT_SOLVER


def _finish(rep: Report) -> int:
    print(rep.format())
    return EXIT_OK if rep.passed else EXIT_VERIFY


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        out = Path(args.out) if args.out else Path(cfg.output_dir)
        if args.command == "run":
            res = run_simulation(cfg, out_dir=out)
            print(res.summary)
            return EXIT_OK
        if args.command == "verify":
            return _finish(verify_lemmas(cfg, refine=args.refine))
        if args.command == "sweep":
            return _finish(sweep(cfg, args.eps, out))
        return _finish(convergence_study(cfg, args.levels, out))
    except MvsimError as exc:
        where = ""
        if exc.stage is not None:
            where = f" [stage {exc.stage}, step {exc.step}]"
        print(f"error{where}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
