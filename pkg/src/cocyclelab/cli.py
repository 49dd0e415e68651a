"""Command line entry point.

    cocyclelab <command> --config run.yaml [--out DIR] [--seed N]

Writes ``summary.json`` (one record per step), CSV tables and the effective
config to the output directory.  Exit codes: 0 all checks pass, 2 a check
failed, 3 infeasible certificate, 4 input error.
"""
import argparse
import json
import os
import sys

import numpy as np

from .config import parse_config
from .errors import (BadParams, BadRange, BracketFailure, ConfigError, GridMismatch,
                     Infeasible, NoNegativeSpace, NotContracting, NotConverged, PoleAt)
from .experiments import COMMANDS, Context

EXIT_PASS, EXIT_FAILED, EXIT_INFEASIBLE, EXIT_INPUT = 0, 2, 3, 4
CHECK_ERRORS = (NotConverged, BracketFailure, NotContracting, NoNegativeSpace)
INPUT_ERRORS = (ConfigError, BadParams, BadRange, GridMismatch, PoleAt)


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if np.isfinite(x) else repr(x)
    return x


def write_json(path, record):
    with open(path, "w") as fh:
        json.dump(_plain(record), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_table(path, cols, data):
    np.savetxt(path, np.atleast_2d(data), delimiter=",", fmt="%.12e", header=",".join(cols), comments="")


def run_command(cmd, cfg, out_dir):
    """Run one command; returns ``(exit_code, record)`` and writes artifacts to ``out_dir``."""
    if cmd not in COMMANDS:
        raise ConfigError(f"unknown command {cmd!r}; choose from {sorted(COMMANDS)}")
    os.makedirs(out_dir, exist_ok=True)
    cfg.dump(os.path.join(out_dir, "effective_config.yaml"))
    ctx = Context(cfg)
    steps, code = [], EXIT_PASS
    csv = "csv" in cfg.output.formats
    try:
        for step in COMMANDS[cmd]:
            res = step(ctx)
            steps.append({"step": res.name, "passed": res.passed, "summary": res.summary})
            if csv:
                for name, (cols, data) in res.tables.items():
                    write_table(os.path.join(out_dir, f"{name}.csv"), cols, data)
            if not res.passed:
                code = EXIT_FAILED
    except Infeasible as exc:
        code = EXIT_INFEASIBLE
        steps.append({"step": "error", "error": type(exc).__name__, "message": str(exc)})
    except CHECK_ERRORS as exc:
        code = EXIT_FAILED
        steps.append({"step": "error", "error": type(exc).__name__, "message": str(exc)})
    except INPUT_ERRORS as exc:
        code = EXIT_INPUT
        steps.append({"step": "error", "error": type(exc).__name__, "message": str(exc)})
    record = {"command": cmd, "exit_code": code, "passed": code == EXIT_PASS,
              "seed": cfg.seed, "model_kind": cfg.model.kind, "steps": steps}
    write_json(os.path.join(out_dir, "summary.json"), record)
    return code, record


def build_parser():
    p = argparse.ArgumentParser(prog="cocyclelab", description=__doc__.split("\n\n")[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="YAML run configuration")
    p.add_argument("--out", default=None, help="output directory (default: output.dir of the config)")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config)
    except ConfigError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        if args.out:
            os.makedirs(args.out, exist_ok=True)
            write_json(os.path.join(args.out, "summary.json"),
                       {"command": args.command, "exit_code": EXIT_INPUT, "passed": False,
                        "steps": [{"step": "error", "error": type(exc).__name__, "message": str(exc)}]})
        return EXIT_INPUT
    if args.seed is not None:
        cfg.seed = args.seed
    out = args.out or cfg.output.dir
    if args.out:
        cfg.output.dir = args.out
    code, record = run_command(args.command, cfg, out)
    for s in record["steps"]:
        status = "PASS" if s.get("passed") else ("ERROR " + s.get("error", "")) if s["step"] == "error" else "FAIL"
        print(f"{s['step']:>18}: {status}")
    print(f"exit {code}; artifacts in {out}")
    return code


if __name__ == "__main__":
    sys.exit(main())
