"""CLI: ``cgsde-plot --spec spec.json`` or ``cgsde-plot <kind> <csv> <out.png>``.

Exit codes: 0 rendered, 2 schema/usage error (no image is written on error).
"""

from __future__ import annotations

import json
import sys

from .render import KINDS, PlotSpec, SchemaError, render


def _usage(file=sys.stderr):
    print("usage: cgsde-plot --spec spec.json", file=file)
    print("       cgsde-plot <kind> <csv> <out-image> [title]", file=file)
    print(f"kinds: {', '.join(KINDS)}", file=file)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        if not argv or argv[0] in ("-h", "--help"):
            _usage(sys.stdout if argv else sys.stderr)
            return 0 if argv else 2
        if argv[0] == "--spec":
            if len(argv) != 2:
                raise SchemaError("--spec takes exactly one JSON file")
            with open(argv[1]) as fh:
                spec = PlotSpec.from_dict(json.load(fh))
        else:
            if len(argv) < 3:
                raise SchemaError("positional form needs <kind> <csv> <out-image>")
            spec = PlotSpec(kind=argv[0], csv_paths=(argv[1],), out=argv[2],
                            title=argv[3] if len(argv) > 3 else "")
        result = render(spec)
        print(result.out)
        return 0
    except (SchemaError, FileNotFoundError, json.JSONDecodeError) as e:
        print(f"cgsde-plot: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
