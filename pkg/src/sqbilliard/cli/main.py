"""Command line entry point.

Verbs::

    sqbilliard run CONFIG [--out DIR]
    sqbilliard preset NAME [--out DIR] [--seed N]
    sqbilliard list-presets
    sqbilliard validate CONFIG

``SQBILLIARD_THREADS`` sets the number of worker threads for trajectory
batches.  Exit status: 0 success, 1 invalid scenario, 2 numerical failure
(details in the manifest).
"""
from __future__ import annotations

import argparse
import os
import sys

from .config import ConfigError, check_physical, load_scenario
from .presets import get_preset, list_presets
from .runner import EXIT_OK, EXIT_VALIDATION, execute

THREADS_ENV = "SQBILLIARD_THREADS"


def _apply_threads():
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(THREADS_ENV, f"expected a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(THREADS_ENV, f"expected a positive integer, got {raw!r}")
    import numba

    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def build_parser():
    ap = argparse.ArgumentParser(prog="sqbilliard", description="Square billiard scenario runner")
    sub = ap.add_subparsers(dest="verb", required=True)
    r = sub.add_parser("run", help="run a scenario file")
    r.add_argument("config")
    r.add_argument("--out", default=None, help="run directory (default: runs/<name>)")
    p = sub.add_parser("preset", help="run a built-in scenario")
    p.add_argument("name")
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=None)
    sub.add_parser("list-presets", help="list built-in scenarios")
    v = sub.add_parser("validate", help="check a scenario file without running it")
    v.add_argument("config")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        _apply_threads()
        if args.verb == "list-presets":
            rows = list_presets()
            w = max(len(n) for n, _, _ in rows)
            for name, desc, fig in rows:
                print(f"{name:<{w}}  {fig:<8}  {desc}")
            return EXIT_OK
        if args.verb == "validate":
            scn = load_scenario(args.config)
            check_physical(scn)
            print(f"{args.config}: ok ({scn.name})")
            return EXIT_OK
        if args.verb == "run":
            scn = load_scenario(args.config)
        else:
            try:
                scn = get_preset(args.name, seed=args.seed)
            except KeyError as exc:
                raise ConfigError("name", exc.args[0]) from None
        out = args.out or os.path.join("runs", scn.name)
        code, manifest = execute(scn, out)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    for f in manifest["failures"]:
        print(f"numerical failure in {f['stage']}: {f['error']}", file=sys.stderr)
    print(f"{scn.name}: wrote {len(manifest['artifacts'])} artifacts to {out} (exit {code})")
    return code


if __name__ == "__main__":
    sys.exit(main())
