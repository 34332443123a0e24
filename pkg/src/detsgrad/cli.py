"""Command-line entry point.

Exit codes: 0 success; 1 verification found a failing property;
2 config error; 3 data error; 4 missing or malformed run artifacts.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import ConfigInvalid, DataError
from .experiment import (ArtifactError, ConfigError, compare_runs, format_table, load_config,
                         preset_config, run_experiment, verify_run)
from .presets import preset_names, presets
from .problems.idx import read_header

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_DATA, EXIT_ARTIFACT = 0, 1, 2, 3, 4


def _err(msg):
    print(f"error: {msg}", file=sys.stderr)


def cmd_run(args) -> int:
    try:
        if args.config:
            cfg = load_config(args.config, args.override)
        elif args.preset:
            cfg = preset_config(args.preset, args.override)
        else:
            _err("run needs --config or --preset")
            return EXIT_CONFIG
        if args.seeds:
            cfg.seeds = [cfg.seeds[0] + i for i in range(args.seeds)]
        root = run_experiment(cfg, out_dir=args.out, threads=args.threads)
    except (ConfigError, ConfigInvalid) as exc:
        _err(exc)
        return EXIT_CONFIG
    except DataError as exc:
        _err(f"data: {exc}")
        return EXIT_DATA
    print(root)
    print((root / "aggregate.json").read_text(), end="")
    return EXIT_OK


def cmd_verify(args) -> int:
    try:
        report = verify_run(args.run_dir, against=args.against)
    except ArtifactError as exc:
        _err(exc)
        return EXIT_ARTIFACT
    for name, c in report["checks"].items():
        print(f"{'PASS' if c['pass'] else 'FAIL'}  {name}")
    return EXIT_OK if report["pass"] else EXIT_FAILED


def cmd_compare(args) -> int:
    try:
        comp = compare_runs(args.run_dirs)
    except ArtifactError as exc:
        _err(exc)
        return EXIT_ARTIFACT
    text, csv_text = format_table(comp)
    print(text, end="")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "comparison.csv").write_text(csv_text)
        (out / "comparison.txt").write_text(text)
    return EXIT_OK


def cmd_presets(args) -> int:
    if args.name:
        table = presets()
        if args.name not in table:
            _err(f"unknown preset {args.name!r}")
            return EXIT_CONFIG
        print(json.dumps(table[args.name], indent=2, sort_keys=True))
    else:
        print("\n".join(preset_names()))
    return EXIT_OK


def cmd_idx_inspect(args) -> int:
    try:
        for p in args.paths:
            print(json.dumps(read_header(p), sort_keys=True))
    except (DataError, OSError) as exc:
        _err(exc)
        return EXIT_DATA
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="detsgrad", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment over its seeds")
    r.add_argument("--config", help="TOML experiment file")
    r.add_argument("--preset", help="built-in preset name (instead of --config)")
    r.add_argument("--override", action="append", default=[], metavar="KEY=VAL",
                   help="dotted key override, value in TOML syntax (repeatable)")
    r.add_argument("--out", help="output root (default: the config's output_dir)")
    r.add_argument("--seeds", type=int, help="run N consecutive seeds starting at the first")
    r.add_argument("--threads", type=int, help="worker threads for per-agent gradients (results unchanged)")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify", help="check theoretical properties on a finished run")
    v.add_argument("run_dir")
    v.add_argument("--against", help="second run dir that must match bit-for-bit (e.g. upsilon0=0 vs continuous)")
    v.set_defaults(func=cmd_verify)

    c = sub.add_parser("compare", help="tabulate accuracy and broadcasts across runs")
    c.add_argument("run_dirs", nargs="+")
    c.add_argument("--out", help="directory for comparison.csv / comparison.txt")
    c.set_defaults(func=cmd_compare)

    p = sub.add_parser("presets", help="list presets, or show one")
    p.add_argument("name", nargs="?")
    p.set_defaults(func=cmd_presets)

    i = sub.add_parser("idx-inspect", help="print IDX header fields")
    i.add_argument("paths", nargs="+")
    i.set_defaults(func=cmd_idx_inspect)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
