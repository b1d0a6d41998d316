"""qucont: numerical checks of unique continuation and observability estimates.

Exit status: 0 every check passed, 1 a check failed, 2 configuration error,
3 numerical abort.  Flags fall back to ``QUCONT_CONFIG``, ``QUCONT_OUT``,
``QUCONT_SEED`` and ``QUCONT_WORKERS``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import scipy.linalg

from . import __version__
from .config import env_overrides, load_config
from .errors import QucontError, SpectralError
from .report import all_passed
from .suite import SUBCOMMANDS, build_setup, run_sections

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("qucont")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qucont", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"qucont {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON run configuration (default: shipped config)")
        p.add_argument("--out", help="report directory")
        p.add_argument("--seed", type=int, help="overrides sampling.seed")
        p.add_argument("--workers", type=int, help="concurrent experiments")
        p.add_argument("-q", "--quiet", action="store_true")
    return parser


def _error(out_dir, kind: str, exc: BaseException, code: int) -> int:
    payload = {"error": kind, "type": type(exc).__name__, "message": str(exc), "exit_code": code}
    text = json.dumps(payload, indent=2)
    print(text, file=sys.stderr)
    if out_dir is not None:
        try:
            Path(out_dir).mkdir(parents=True, exist_ok=True)
            (Path(out_dir) / "error.json").write_text(text + "\n")
        except OSError:
            pass
    return code


def build_report(subcommand, config, setup, sections, started, finished, elapsed) -> dict:
    records = []
    for s in sections:
        for c in s.checks:
            records.append({"section": s.name, **c.to_dict()})
    checks = [c for s in sections for c in s.checks]
    grid = setup.grid
    return {
        "subcommand": subcommand,
        "overall_pass": all_passed(checks),
        "checks": records,
        "sections": {s.name: s.summary for s in sections},
        "meta": {
            "version": __version__,
            "config_hash": config.digest(),
            "seed": config.seed,
            "grid_size": {"dim": grid.dim, "n": list(grid.n), "nodes": grid.num_nodes,
                          "interior": grid.num_interior},
            "timestamps": {"started": started, "finished": finished,
                           "elapsed_seconds": round(elapsed, 3)},
        },
    }


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def run(subcommand: str, config_path=None, out=None, seed=None, workers=None) -> tuple[dict, int]:
    """Run one subcommand; returns the report and the exit status."""
    config = load_config(config_path, seed=seed, workers=workers, out=out)
    out_dir = Path(config["output"]["dir"])
    started, t0 = _now(), time.perf_counter()
    with np.errstate(over="raise", invalid="raise"):
        setup = build_setup(config, spectrum=subcommand != "check-pseudoconvex")
    sections = run_sections(setup, subcommand)
    report = build_report(subcommand, config, setup, sections, started, _now(),
                          time.perf_counter() - t0)
    out_dir.mkdir(parents=True, exist_ok=True)
    for s in sections:
        for fname, writer in s.tables.items():
            writer(out_dir / fname)
    (out_dir / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report, EXIT_PASS if report["overall_pass"] else EXIT_FAIL


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s")
    out_dir = args.out
    try:
        env = env_overrides()
        out_dir = args.out or env.get("out")
        report, code = run(args.subcommand,
                           args.config or env.get("config"),
                           out=out_dir,
                           seed=args.seed if args.seed is not None else env.get("seed"),
                           workers=args.workers if args.workers is not None else env.get("workers"))
    except SpectralError as exc:
        return _error(out_dir, "numerical", exc, EXIT_NUMERIC)
    except (FloatingPointError, np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        return _error(out_dir, "numerical", exc, EXIT_NUMERIC)
    except (QucontError, ValueError) as exc:
        return _error(out_dir, "configuration", exc, EXIT_CONFIG)

    failed = [c for c in report["checks"] if not c["pass"] and not c["informational"]]
    for c in failed:
        log.warning("FAIL %s %s %s margin=%s", c["section"], c["tag"], c["name"], c["margin"])
    log.info("%s: %d checks, %d failed, report in %s", args.subcommand, len(report["checks"]),
             len(failed), out_dir or "qucont-out")
    return code


if __name__ == "__main__":
    sys.exit(main())
