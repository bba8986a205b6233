"""Command-line interface.

Exit codes: 0 when the requested run completes with every certified bound
intact, 2 when hypotheses are not met (including unusable configs and bad
usage), 3 when a certified bound is violated by a run whose hypotheses held.

All randomized commands take --seed and produce byte-identical CSV for a
fixed seed; --threads only changes wall time, never output.
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import (
    HypothesisError, InputError, InvariantFailureError, SingularityError,
)
from . import experiments as exp
from .initial_scale import SublevelSpec
from .lattice import ElementaryRegion
from .model import Phase, config_from_dict
from .multiscale import ScaleConstants

EXIT_OK = 0
EXIT_HYPOTHESIS = 2
EXIT_BOUND_VIOLATION = 3


def _load(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError("cannot read config %s: %s" % (path, exc)) from exc


def _model(obj):
    if "model" not in obj:
        raise InputError("config has no \"model\" section")
    return config_from_dict(obj["model"])


def _phase(obj, cfg, section):
    coords = section.get("phase", obj.get("phase"))
    if coords is None:
        raise InputError("config needs a \"phase\" (list of %d floats)"
                         % cfg.blocks.total)
    return Phase(tuple(float(c) for c in coords), cfg.blocks)


def _phases(cfg, section, args, key="phases", count_key="x_count"):
    if key in section:
        return [Phase(tuple(float(c) for c in row), cfg.blocks)
                for row in section[key]]
    return exp.phase_grid(cfg, int(section.get(count_key, 16)), args.seed)


def _energies(cfg, section):
    if "energies" in section:
        return [float(e) for e in section["energies"]]
    return exp.energy_grid(cfg, int(section.get("e_count", 16)))


def _section(obj, name):
    return obj.get(name, {})


def _write(args, header, rows):
    if args.out:
        exp.write_csv(args.out, header, rows)
    else:
        exp.write_csv(sys.stdout, header, rows)


def _require(section, keys, command):
    missing = [k for k in keys if k not in section]
    if missing:
        raise InputError("config section \"%s\" is missing keys: %s"
                         % (command, ", ".join(missing)))


def cmd_goodness_scan(args, obj):
    cfg = _model(obj)
    sec = _section(obj, "goodness_scan")
    _require(sec, ("scales", "rho_bar"), "goodness_scan")
    header, rows = exp.run_goodness_scan(
        cfg, [int(n) for n in sec["scales"]], _energies(cfg, sec),
        _phases(cfg, sec, args), float(sec["rho_bar"]),
        threads=args.threads,
    )
    _write(args, header, rows)
    return EXIT_OK


def cmd_ldt_scan(args, obj):
    cfg = _model(obj)
    sec = _section(obj, "ldt_scan")
    _require(sec, ("scales", "rho_bar"), "ldt_scan")
    header, rows = exp.run_ldt_scan(
        cfg, [int(n) for n in sec["scales"]], _energies(cfg, sec),
        _phases(cfg, sec, args), float(sec["rho_bar"]),
        threads=args.threads,
    )
    _write(args, header, rows)
    return EXIT_OK


def cmd_neumann_check(args, obj):
    cfg = _model(obj)
    sec = _section(obj, "neumann_check")
    _require(sec, ("scale", "energy", "delta"), "neumann_check")
    header, rows, violations = exp.run_neumann_check(
        cfg, int(sec["scale"]), float(sec["energy"]), float(sec["delta"]),
        int(sec.get("count", 50)), args.seed, threads=args.threads,
        series_terms=int(sec.get("series_terms", 0)),
    )
    _write(args, header, rows)
    usable = sum(1 for r in rows if r[1])
    if violations:
        print("certified bound violated on samples %s" % violations,
              file=sys.stderr)
        return EXIT_BOUND_VIOLATION
    if usable == 0:
        print("no sample satisfied the initial-scale hypotheses",
              file=sys.stderr)
        return EXIT_HYPOTHESIS
    return EXIT_OK


def cmd_cartan_sweep(args, obj):
    cfg = _model(obj)
    sec = _section(obj, "cartan_sweep")
    _require(sec, ("scale", "energy", "epsilons"), "cartan_sweep")
    x = _phase(obj, cfg, sec)
    calibration = tuple(sec.get("calibration", (1.0, 0.05)))
    header, rows = exp.run_cartan_sweep(
        cfg, int(sec["scale"]), float(sec["energy"]), x,
        [float(e) for e in sec["epsilons"]],
        int(sec.get("j_params", 1)), float(sec.get("half_width", 0.5)),
        int(sec.get("samples", 4096)), args.seed, calibration=calibration,
    )
    _write(args, header, rows)
    return EXIT_OK


def cmd_msa_toy(args, obj):
    cfg = _model(obj)
    sec = _section(obj, "msa_toy")
    _require(sec, ("energies", "delta", "n1", "n_bar", "big_n", "rho_bar"),
             "msa_toy")
    phases = _phases(cfg, sec, args)
    kwargs = {}
    for key in ("target_c1", "sigma", "cartan_samples", "degrade_constant",
                "inner_diam_cap"):
        if key in sec:
            kwargs[key] = sec[key]
    if "cartan_epsilons" in sec:
        kwargs["cartan_epsilons"] = tuple(float(e)
                                          for e in sec["cartan_epsilons"])
    header, rows, result = exp.run_msa_toy(
        cfg, phases, [float(e) for e in sec["energies"]],
        float(sec["delta"]), int(sec["n1"]), int(sec["n_bar"]),
        int(sec["big_n"]), float(sec["rho_bar"]),
        trace_path=sec.get("trace"), seed=args.seed, **kwargs,
    )
    _write(args, header, rows)
    summary = {
        "bad_fraction": result.bad_fraction,
        "measure_target": result.measure_target,
        "glued_norm_log_max": result.glued_norm_log_max,
        "norm_budget_log": result.norm_budget_log,
        "geometry_violations": len(result.geometry_violations),
        "ledger": [json.loads(r.to_json()) for r in result.ledger.stages],
    }
    print(json.dumps(summary, sort_keys=True), file=sys.stderr)
    if result.geometry_violations:
        return EXIT_BOUND_VIOLATION
    if result.glued_norm_log_max > result.norm_budget_log:
        return EXIT_BOUND_VIOLATION
    if not result.ok:
        return EXIT_HYPOTHESIS
    return EXIT_OK


def cmd_schedule_table(args, obj):
    sec = _section(obj, "schedule_table")
    constants = ScaleConstants(float(sec.get("c3", 0.04)),
                               float(sec.get("c4", 0.2)),
                               int(sec.get("b_max", 1)))
    header, rows, meta = exp.run_schedule_table(
        constants, sec.get("n_start", 100), int(sec.get("steps", 4)),
        float(sec.get("rho", 1.0)), float(sec.get("degrade_constant", 1.0)),
        n_start_log=sec.get("n_start_log"),
    )
    _write(args, header, rows)
    print(json.dumps(meta, sort_keys=True), file=sys.stderr)
    return EXIT_OK


def cmd_hit_count(args, obj):
    cfg = _model(obj)
    sec = _section(obj, "hit_count")
    _require(sec, ("energy", "delta", "n1", "scales"), "hit_count")
    x = _phase(obj, cfg, sec)
    base = ElementaryRegion((0,) * cfg.d, int(sec["n1"]))
    spec = SublevelSpec(float(sec["energy"]), float(sec["delta"]),
                        tuple(sorted(base.point_set())))
    header, rows, frac = exp.run_hit_count(
        cfg, spec, x, [int(n) for n in sec["scales"]],
    )
    _write(args, header, rows)
    print(json.dumps({"zero_fraction": frac}), file=sys.stderr)
    return EXIT_OK


def cmd_localization_profile(args, obj):
    cfg = _model(obj)
    sec = _section(obj, "localization_profile")
    _require(sec, ("scale",), "localization_profile")
    x = _phase(obj, cfg, sec)
    header, rows, summary = exp.localization_profile(cfg, int(sec["scale"]), x)
    _write(args, header, rows)
    print(json.dumps(summary, sort_keys=True), file=sys.stderr)
    return EXIT_OK


_COMMANDS = {
    "goodness-scan": cmd_goodness_scan,
    "ldt-scan": cmd_ldt_scan,
    "neumann-check": cmd_neumann_check,
    "cartan-sweep": cmd_cartan_sweep,
    "msa-toy": cmd_msa_toy,
    "schedule-table": cmd_schedule_table,
    "hit-count": cmd_hit_count,
    "localization-profile": cmd_localization_profile,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="qplab",
        description="numerical experiments on quasi-periodic operators",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True,
                       help="JSON config with the model and command sections")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=None, help="CSV output path")
        p.add_argument("--threads", type=int, default=1)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage errors already; normalize anything else
        return EXIT_HYPOTHESIS if exc.code else EXIT_OK
    try:
        obj = _load(args.config)
        return _COMMANDS[args.command](args, obj)
    except InputError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_HYPOTHESIS
    except HypothesisError as exc:
        print("hypothesis not met: %s (%s)" % (exc, exc.condition),
              file=sys.stderr)
        return EXIT_HYPOTHESIS
    except SingularityError as exc:
        print("hypothesis not met: %s" % exc, file=sys.stderr)
        return EXIT_HYPOTHESIS
    except InvariantFailureError as exc:
        print("certified bound violated: %s" % exc, file=sys.stderr)
        return EXIT_BOUND_VIOLATION


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
