"""Command-line entry point: ``mechlab <experiment> [--key value]...``."""
from __future__ import annotations

import argparse
import json
import sys

from . import __version__, experiments
from .errors import ConfigError, MechlabError

USAGE = ("mechlab <experiment> [--key value]... [--config FILE] [--out DIR] [--seed N] [--threads N]\n"
         "       mechlab list [--json]")


def _split_overrides(tokens):
    out = {}
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if not tok.startswith("--") or tok == "--":
            raise ConfigError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, value = key.split("=", 1)
        else:
            if i + 1 >= len(tokens):
                raise ConfigError(f"option --{key} needs a value", key)
            i += 1
            value = tokens[i]
        out[key.replace("-", "_")] = value
        i += 1
    return out


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] in ("-h", "--help"):
        print(USAGE)
        return 0 if argv else 2
    if argv[0] == "--version":
        print(__version__)
        return 0
    if argv[0] == "list":
        if argv[1:] not in ([], ["--json"]):
            print(f"error: unexpected arguments {argv[1:]}\n{USAGE}", file=sys.stderr)
            return 2
        if argv[1:]:
            print(json.dumps(experiments.list_experiments(), indent=2))
        else:
            print(experiments.catalog_table())
        return 0

    name = argv[0]
    parser = argparse.ArgumentParser(prog=f"mechlab {name}", add_help=False)
    parser.add_argument("--config")
    parser.add_argument("--out")
    parser.add_argument("--seed")
    parser.add_argument("--threads", type=int)
    try:
        known, rest = parser.parse_known_args(argv[1:])
        overrides = {}
        if known.config:
            try:
                with open(known.config) as fh:
                    overrides.update(experiments.parse_config_text(fh.read()))
            except OSError as exc:
                raise ConfigError(f"cannot read config file: {exc}", "config") from None
        overrides.update(_split_overrides(rest))
        if known.seed is not None:
            overrides["seed"] = known.seed
        manifest = experiments.run(name, overrides, known.out, known.threads)
    except ConfigError as exc:
        print(f"config error: {exc}\n{USAGE}", file=sys.stderr)
        return 2
    except SystemExit:
        print(USAGE, file=sys.stderr)
        return 2
    except (MechlabError, ArithmeticError, ValueError) as exc:
        print(f"error in experiment {name}: {exc}", file=sys.stderr)
        return 1
    for f, digest in manifest.files.items():
        print(f"{f}  {digest}")
    print(f"done in {manifest.duration_s:.2f}s")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
