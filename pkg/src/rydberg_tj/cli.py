"""Command line entry: ``rydberg-tj <subcommand> --config PATH --out DIR``."""
from __future__ import annotations

import argparse
import json
import sys

from .runner import STEPS, ConfigError, MissingArtifactError, OverwriteError, run


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rydberg-tj", description=__doc__)
    p.add_argument("subcommand", choices=STEPS + ("all",))
    p.add_argument("--config", help="JSON run configuration (required except for toycheck)")
    p.add_argument("--out", default="out", help="output directory (default: ./out)")
    p.add_argument("--threads", type=int, default=1, help="worker threads for sweeps and shot batches")
    p.add_argument("--seed-override", type=int, default=None, metavar="K",
                   help="replace every named seed in the config by K")
    p.add_argument("--force", action="store_true", help="overwrite outputs of a different config")
    return p


_TOY_CONFIG = {"geometry": {"kind": "triangular2d", "n_sites": 1, "a": 1.0}}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    config = args.config
    if config is None:
        if args.subcommand != "toycheck":
            print(f"error: {args.subcommand} needs --config", file=sys.stderr)
            return 2
        config = _TOY_CONFIG
    steps = None if args.subcommand == "all" else [args.subcommand]
    try:
        root = run(config, args.out, steps, threads=args.threads,
                   seed_override=args.seed_override, force=args.force)
    except (ConfigError, MissingArtifactError, OverwriteError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    manifest = json.loads((root / "manifest.json").read_text())
    status = 0
    for name, st in manifest["steps"].items():
        if steps is not None and name not in steps:
            continue
        summary = st.get("summary", {})
        print(f"{name}: {st['status']} {json.dumps(summary, sort_keys=True)}")
        if st["status"] != "complete":
            status = 1
    if args.subcommand == "toycheck":
        print((root / "toycheck" / "plaquette.tsv").read_text(), end="")
        print((root / "toycheck" / "tunneling.tsv").read_text(), end="")
    return status


if __name__ == "__main__":
    sys.exit(main())
