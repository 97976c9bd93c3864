"""Command-line entry point ``lts-wave``.

Exit codes: 0 on success, 1 on invalid arguments or configuration, 2 when
the experiment itself fails.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback

from lts_wave.harness import ConfigError, ExperimentConfig, load_config, run_experiment

SUBCOMMANDS = {
    "converge": "converge",
    "energy": "energy",
    "spectrum": "spectrum",
    "cfl-table": "cfl_table",
    "instability": "instability",
    "lshape": "lshape",
}


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad input; this one reports 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lts-wave",
                     description="Stabilized leapfrog local time-stepping experiments.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name, help=f"run the {name} experiment")
        sp.add_argument("--config", help="TOML file with experiment parameters")
        sp.add_argument("--out", dest="output_dir", help="output directory (default: out)")
        sp.add_argument("--hc", dest="h_c", type=float, help="coarse mesh size")
        sp.add_argument("--p", type=int, help="coarse-to-fine step ratio")
        sp.add_argument("--nu", type=float, help="stabilization parameter")
        sp.add_argument("--T", type=float, help="final time")
        sp.add_argument("--dt-rule", dest="dt_rule", help="time-step rule")
        sp.add_argument("--dt-factor", dest="dt_factor", type=float)
        sp.add_argument("--dt", dest="dt_value", type=float, help="absolute time-step")
        sp.add_argument("--fine-lo", dest="fine_lo", type=float)
        sp.add_argument("--fine-hi", dest="fine_hi", type=float)
        sp.add_argument("--stride", type=int)
        if name == "converge":
            sp.add_argument("--levels", type=_floats, help="comma-separated h_c ladder")
            sp.add_argument("--ps", type=_ints, help="comma-separated p values")
            sp.add_argument("--reference", choices=("analytic", "semidiscrete"))
        if name in ("spectrum", "instability"):
            sp.add_argument("--grid", type=_floats, help="lo,hi,count in units of h_c")
        if name == "instability":
            sp.add_argument("--dt-perturb", dest="dt_perturb", type=float)
        if name == "cfl-table":
            sp.add_argument("--scan", type=int)
        if name == "lshape":
            sp.add_argument("--N", dest="N", type=_ints, help="comma-separated N ladder")
            sp.add_argument("--beta", type=float)
            sp.add_argument("--no-control", dest="control", action="store_const", const=False)
    return parser


def _config_from_args(args) -> ExperimentConfig:
    exp = SUBCOMMANDS[args.command]
    opts = {k: v for k, v in vars(args).items() if k not in ("command", "config") and v is not None}
    # a single --nu on the table selects that one column
    if exp == "cfl_table" and "nu" in opts:
        opts["nus"] = [opts.pop("nu")]
    if exp in ("spectrum", "instability") and "grid" in opts:
        g = opts["grid"]
        opts["grid"] = [g[0], g[1], int(g[2])] if len(g) == 3 else g
    if args.config:
        return load_config(args.config, exp, **opts)
    return ExperimentConfig(experiment=exp, **opts)


def cli_dispatch(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] in ("-h", "--help"):
        parser.print_help()
        return 0
    if not argv or argv[0] not in SUBCOMMANDS:
        parser.print_help(sys.stderr)
        if argv and not argv[0].startswith("-"):
            print(f"lts-wave: unknown subcommand {argv[0]!r}", file=sys.stderr)
        return 1
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = _config_from_args(args)
    except (ConfigError, TypeError, ValueError, OSError) as exc:
        print(f"lts-wave: invalid configuration: {exc}", file=sys.stderr)
        return 1
    try:
        res = run_experiment(cfg)
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        traceback.print_exc()
        print(f"lts-wave: {cfg.experiment} failed: {exc}", file=sys.stderr)
        return 2
    print(json.dumps({"experiment": cfg.experiment, "output_dir": cfg.output_dir,
                      "summary": _summary(res)}, default=str))
    return 0


def _summary(res):
    if isinstance(res, dict):  # convergence study
        return {str(p): [round(r.observed_rate, 4) for r in rows[1:]] for p, rows in res.items()}
    for attr in ("max_rel_dev", "growth"):
        if hasattr(res, attr):
            return {attr: getattr(res, attr)}
    if hasattr(res, "reports"):
        return [{"nu": r.nu, "ratio_pct": r.ratio_pct, "min_margin": r.min_margin}
                for r in res.reports]
    if hasattr(res, "critical"):
        return [{"dt": c.dt, "kind": c.kind} for c in res.critical]
    if hasattr(res, "graded"):
        return {"graded_l2": [r.observed_rate for r in res.graded[1:]],
                "control_l2": [r.observed_rate for r in res.control[1:]]}
    return None


def main() -> None:
    sys.exit(cli_dispatch())


if __name__ == "__main__":
    main()
