"""Command line entry point: ``kinscl <run|converge|verify|noise> --config PATH``.

Exit status: 0 when every check passes, 1 when a check fails or a run aborts,
2 for configuration or output-directory errors.
"""
import argparse
import sys
import time
from pathlib import Path

from .config import parse_config, serialize
from .errors import ConfigurationError, InvariantViolation, SchemeAbort
from .io import OutputError, ReportEnvelope, to_json, write_outputs
from .pipelines import PIPELINES


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kinscl", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(PIPELINES))
    ap.add_argument("--config", required=True, help="configuration file")
    ap.add_argument("--seed", type=int, help="override run.seed")
    ap.add_argument("--samples", type=int, help="override run.n_samples")
    ap.add_argument("--out", help="override run.out")
    ap.add_argument("--jobs", type=int, help="worker processes (default: KINSCL_JOBS or 1)")
    ap.add_argument("--wall-clock", action="store_true",
                    help="record elapsed seconds in the report (makes it run-dependent)")
    return ap


def _load(args):
    try:
        text = Path(args.config).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {args.config}: {exc.strerror or exc}") from exc
    upd = {}
    if args.seed is not None:
        upd["run__seed"] = args.seed
    if args.samples is not None:
        upd["run__n_samples"] = args.samples
    if args.out is not None:
        upd["run__out"] = args.out
    return parse_config(text, upd)


def execute(command: str, cfg, jobs=None, wall_clock: bool = False) -> ReportEnvelope:
    """Run one subcommand and write its outputs; returns the report."""
    start = time.perf_counter()
    files, results = PIPELINES[command](cfg, jobs)
    env = ReportEnvelope(command, serialize(cfg, include_out=False), results,
                         time.perf_counter() - start if wall_clock else None)
    files = dict(files)
    files["report.json"] = to_json(env.as_dict()) + "\n"
    write_outputs(files, cfg.get("run", "out"), env.config_text)
    return env


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = _load(args)
        env = execute(args.command, cfg, args.jobs, args.wall_clock)
    except ConfigurationError as exc:
        for p in exc.problems:
            print(f"configuration error: {p}", file=sys.stderr)
        return 2
    except OutputError as exc:
        print(f"output error: {exc}", file=sys.stderr)
        return 2
    except (SchemeAbort, InvariantViolation) as exc:
        print(f"run aborted: {exc}", file=sys.stderr)
        return 1
    for r in env.results:
        est = r.get("estimate")
        est = "" if est is None else f" estimate={est:.6g}"
        print(f"{'PASS' if r['passed'] else 'FAIL'} {r['name']}{est}")
    return 0 if env.passed else 1


if __name__ == "__main__":
    sys.exit(main())
