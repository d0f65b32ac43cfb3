"""Command-line entry point.

Exit codes: 0 on success, 2 when a requested estimate did not converge
within its sample cap or the cross-entropy search aborted, 1 for
configuration, data or usage errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import yaml

from .config import ConfigError, load_config
from .cross_entropy import CeZeroHitError
from .ingest import fit_naturalistic, render_fit_summary
from .runner import (
    run_experiment,
    run_search,
    search_to_dict,
    write_outputs,
    write_search_outputs,
)

__all__ = ["main"]


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors by default; keep 2 for "did not
    # converge" and report usage problems as ordinary errors instead.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_common(p: argparse.ArgumentParser, with_selection: bool = True) -> None:
    p.add_argument("--config", required=True, help="YAML experiment configuration")
    p.add_argument("--out", default="out", help="output directory (default: ./out)")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    if with_selection:
        p.add_argument(
            "--event", action="append", choices=["conflict", "crash", "injury"],
            default=None, help="restrict to an event type (repeatable)",
        )
        p.add_argument(
            "--mode", action="append", choices=["cmc", "is"], default=None,
            help="restrict to an estimation mode (repeatable)",
        )
        p.add_argument(
            "--bin", action="append", default=None,
            help="restrict to a velocity bin name (repeatable)",
        )
        p.add_argument("--n-cap", type=int, default=None, help="override the sample cap")
        p.add_argument("--workers", type=int, default=None, help="override worker count")
        p.add_argument(
            "--verbose-traces", action="store_true",
            help="also write per-scenario logs and event traces",
        )


def _overrides(args: argparse.Namespace) -> dict:
    return {
        "seed": args.seed,
        "events": getattr(args, "event", None),
        "modes": getattr(args, "mode", None),
        "bins": getattr(args, "bin", None),
        "n_cap": getattr(args, "n_cap", None),
        "workers": getattr(args, "workers", None),
    }


def _build_parser() -> _Parser:
    p = _Parser(
        prog="accel-eval",
        description="Accelerated rare-event evaluation of an automated vehicle "
        "against stochastic lane-change cut-ins.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    runp = sub.add_parser("run", help="cross-entropy search plus estimation, end to end")
    _add_common(runp)

    estp = sub.add_parser(
        "estimate",
        help="estimation only; importance sampling uses warm-start tilts when given",
    )
    _add_common(estp)

    srchp = sub.add_parser("search", help="cross-entropy tilt search only")
    _add_common(srchp)

    fitp = sub.add_parser("fit", help="fit the scenario model from an event CSV")
    fitp.add_argument("data", help="CSV with columns v, v_l, r_l, r_l_dot")
    fitp.add_argument("--out", default="model.yaml", help="where to write the model section")
    fitp.add_argument("--v-bin-width", type=float, default=2.0, help="lead-speed histogram bin width, m/s")
    fitp.add_argument("--ttc-speed-bin-width", type=float, default=5.0, help="speed interval width for inverse-TTC means, m/s")
    fitp.add_argument("--min-bin-count", type=int, default=10, help="records required before an interval contributes")

    repp = sub.add_parser("report", help="re-render a stored report.json")
    repp.add_argument("result_dir", help="directory holding report.json")
    repp.add_argument("--out", default="out", help="output directory")
    return p


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command in ("run", "estimate"):
            cfg = load_config(args.config, _overrides(args))
            report = run_experiment(
                cfg, do_ce=(args.command == "run"), verbose_traces=args.verbose_traces
            )
            write_outputs(report.to_dict(), args.out, report=report)
            bad = [r for r in report.rows if not r.converged]
            for r in bad:
                print(
                    f"warning: {r.event}/{r.bin_name}/{r.mode} not converged at "
                    f"n={r.n} (rel half-width "
                    f"{'-' if r.rel_half_width is None else f'{r.rel_half_width:.3g}'})",
                    file=sys.stderr,
                )
            print(f"wrote {os.path.join(args.out, 'summary.txt')}")
            return 2 if bad else 0
        if args.command == "search":
            cfg = load_config(args.config, _overrides(args))
            results = run_search(cfg)
            write_search_outputs(search_to_dict(cfg, results), args.out)
            print(f"wrote {os.path.join(args.out, 'summary.txt')}")
            return 0
        if args.command == "fit":
            fragment, summary = fit_naturalistic(
                args.data,
                v_bin_width=args.v_bin_width,
                ttc_speed_bin_width=args.ttc_speed_bin_width,
                min_bin_count=args.min_bin_count,
            )
            with open(args.out, "w", encoding="utf-8") as fh:
                yaml.safe_dump(fragment, fh, sort_keys=False)
            sys.stdout.write(render_fit_summary(summary))
            print(f"wrote {args.out} (add a seed to use it as a run config)")
            return 0
        if args.command == "report":
            path = os.path.join(args.result_dir, "report.json")
            with open(path, "r", encoding="utf-8") as fh:
                d = json.load(fh)
            write_outputs(d, args.out)
            print(f"wrote {os.path.join(args.out, 'summary.txt')}")
            return 0
        raise AssertionError(f"unhandled command {args.command!r}")
    except CeZeroHitError as e:
        print(f"cross-entropy search aborted: {e}", file=sys.stderr)
        return 2
    except (ConfigError, ValueError, OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
