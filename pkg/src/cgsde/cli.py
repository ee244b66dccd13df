"""Command-line driver: ``cgsde <experiment-id> [--key value ...] --out DIR``.

Exit codes: 0 all verdicts pass, 1 any verdict fails, 2 configuration error.
``--config FILE`` reads defaults from a flat ``key = value`` file or from a
previously written ``manifest.json`` (command-line overrides win).
"""

from __future__ import annotations

import json
import sys

from .experiments import EXPERIMENTS, ConfigError, run_experiment


def _load_config(path: str, exp_id: str) -> dict:
    with open(path) as fh:
        text = fh.read()
    if text.lstrip().startswith("{"):
        data = json.loads(text)
        if "experiment" in data and data["experiment"] != exp_id:
            raise ConfigError(
                f"manifest is for experiment '{data['experiment']}', not '{exp_id}'"
            )
        return dict(data.get("params", data))
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        for sep in ("=", ":"):
            if sep in line:
                key, val = line.split(sep, 1)
                out[key.strip()] = val.strip()
                break
        else:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
    return out


def _usage(file=sys.stderr) -> None:
    print("usage: cgsde <experiment-id> [--key value ...] [--config FILE] --out DIR",
          file=file)
    print("experiments:", file=file)
    for name, exp in sorted(EXPERIMENTS.items()):
        print(f"  {name:22s} {exp.description}", file=file)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] in ("-h", "--help"):
        _usage(sys.stdout if argv else sys.stderr)
        return 0 if argv else 2
    exp_id = argv[0]
    out_dir = None
    config_path = None
    overrides = {}
    i = 1
    try:
        while i < len(argv):
            arg = argv[i]
            if not arg.startswith("--"):
                raise ConfigError(f"unexpected argument {arg!r}")
            if i + 1 >= len(argv):
                raise ConfigError(f"missing value for {arg}")
            key, val = arg[2:], argv[i + 1]
            if key == "out":
                out_dir = val
            elif key == "config":
                config_path = val
            else:
                overrides[key] = val
            i += 2
        if out_dir is None:
            raise ConfigError("--out DIR is required")
        merged = {}
        if config_path is not None:
            if exp_id not in EXPERIMENTS:
                raise ConfigError(f"unknown experiment '{exp_id}'")
            merged.update(_load_config(config_path, exp_id))
        merged.update(overrides)
        return run_experiment(exp_id, merged, out_dir)
    except ConfigError as e:
        print(f"cgsde: configuration error: {e}", file=sys.stderr)
        _usage()
        return 2
    except FileNotFoundError as e:
        print(f"cgsde: configuration error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
