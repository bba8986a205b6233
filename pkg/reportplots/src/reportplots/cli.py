"""Command-line entry: render every job listed in a manifest.

Exit codes: 0 when all jobs render, 2 on manifest or input errors.
"""

from __future__ import annotations

import argparse
import sys

from .jobs import ManifestError, load_manifest
from .rendering import render
from .tables import EmptyInputError, SchemaError


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="reportplots",
        description="render pipeline CSV/JSON artifacts into figures",
    )
    parser.add_argument("manifest", help="JSON manifest listing plot jobs")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        jobs = load_manifest(args.manifest)
        for job in jobs:
            info = render(job)
            print("wrote %s (%s)" % (info["output"], job.kind))
    except (ManifestError, SchemaError, EmptyInputError, OSError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    return 0


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
