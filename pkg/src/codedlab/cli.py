"""``codedlab <command> --config <path> [--seed N] [--out <path>] [--format csv|jsonl]``.

Exit codes: 0 success, 2 config error, 3 unrecoverable experiment, 4 IO error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys

from . import __version__
from .config import COMMANDS, ConfigError, parse_config
from .errors import CodedLabError, InvalidParameterError
from .experiments import AXES, run

EXIT_OK, EXIT_CONFIG, EXIT_UNRECOVERABLE, EXIT_IO = 0, 2, 3, 4


def fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def header_block(cfg) -> list[str]:
    lines = [f"codedlab {__version__}", f"command = {cfg.command}"]
    for key, value in cfg.resolved_items():
        if isinstance(value, tuple):
            value = ",".join(fmt(v) for v in value)
        lines.append(f"{key} = {fmt(value)}")
    return lines


def render_csv(rows, cfg) -> str:
    buf = io.StringIO(newline="")
    for line in header_block(cfg):
        buf.write(f"# {line}\r\n")
    writer = csv.writer(buf, lineterminator="\r\n")
    axes = AXES[cfg.experiment]
    writer.writerow(["experiment_id", *axes, "metric", "value", "seed", "timestamp"])
    for row in rows:
        ax = dict(row.axes)
        writer.writerow([row.experiment_id, *(fmt(ax[a]) for a in axes), row.metric,
                         fmt(float(row.value)), row.seed, fmt(float(row.timestamp))])
    return buf.getvalue()


def render_jsonl(rows, cfg) -> str:
    config = {k: list(v) if isinstance(v, tuple) else v for k, v in cfg.resolved_items()}
    out = [json.dumps({"config": config, "command": cfg.command, "version": __version__}, sort_keys=True)]
    for row in rows:
        out.append(json.dumps({
            "experiment_id": row.experiment_id,
            "axes": dict(row.axes),
            "metric": row.metric,
            "value": float(row.value),
            "seed": row.seed,
            "timestamp": float(row.timestamp),
        }, sort_keys=True))
    return "\n".join(out) + "\n"


def write_csv(rows, path, cfg):
    _write(path, render_csv(rows, cfg))


def _write(path, text):
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def figure_path(out) -> str:
    root, _ = os.path.splitext(out)
    return root + ".png"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="codedlab", description="coded computation experiments")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="key = value config file")
    parser.add_argument("--seed", type=int, help="overrides the config seed")
    parser.add_argument("--out", help="output file (default stdout)")
    parser.add_argument("--format", choices=("csv", "jsonl"), help="output format (default csv)")
    parser.add_argument("--version", action="version", version=f"codedlab {__version__}")
    return parser


def _err(msg):
    print(f"codedlab: {msg}", file=sys.stderr)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG

    try:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
    except (OSError, UnicodeDecodeError) as exc:
        _err(f"cannot read config {args.config}: {exc}")
        return EXIT_IO

    try:
        cfg = parse_config(text, args.command)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError([(None, "--seed must be >= 0")])
            cfg.params["seed"] = args.seed
        if args.format:
            cfg.params["format"] = args.format
        if args.out:
            cfg.params["out"] = args.out
        if cfg.command == "report" and not cfg.get("out"):
            raise ConfigError([(None, "report needs an output path (--out or out = ...)")])
    except ConfigError as exc:
        for line, msg in exc.errors:
            _err(f"{args.config}:{line}: {msg}" if line else f"{args.config}: {msg}")
        return EXIT_CONFIG

    try:
        result = run(cfg)
    except InvalidParameterError as exc:
        _err(f"invalid parameters: {exc}")
        return EXIT_CONFIG
    except (CodedLabError, ValueError) as exc:
        _err(f"experiment failed: {exc}")
        return EXIT_UNRECOVERABLE

    out = cfg.get("out")
    render = render_jsonl if cfg.get("format") == "jsonl" else render_csv
    try:
        _write(out, render(result.rows, cfg))
        if cfg.command == "report":
            from .report import render as render_figure

            render_figure(cfg.experiment, result.figure_data, figure_path(out), title=cfg.experiment)
    except OSError as exc:
        _err(f"cannot write {getattr(exc, 'filename', None) or out}: {exc.strerror or exc}")
        return EXIT_IO

    if result.unrecoverable:
        _err("at least one round was unrecoverable (see rows with metric 'unrecoverable')")
        return EXIT_UNRECOVERABLE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
