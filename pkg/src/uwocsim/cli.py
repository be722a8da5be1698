"""Command-line front end for campaigns and their individual stages.

Every subcommand reads and writes the same artifacts as :mod:`uwocsim.campaign`,
so stages can be run one at a time, resumed, or pointed at external data::

    uwocsim plan     --config link.cfg --out run1
    uwocsim simulate --config link.cfg --out run1 --realizations 200 --workers 4
    uwocsim fit      --samples run1/samples.csv --out run1 --models Weibull,GG,WGG
    uwocsim gof      --out run1
    uwocsim ber      --out run1 --snr-db 0:50:1
    uwocsim run      --config link.cfg --out run2 --seed 7

Exit status: 0 success, 1 usage, 2 validation, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .campaign import (
    BER_FILE,
    EXIT_NUMERICAL,
    EXIT_USAGE,
    EXIT_VALIDATION,
    HISTOGRAM_FILE,
    PLAN_FILE,
    REPORT_FILE,
    SAMPLES_FILE,
    CampaignConfig,
    ConfigError,
    StageError,
    parse_snr_range,
    run_campaign,
    stage_ber,
    stage_fit,
    stage_gof,
    stage_plan,
    stage_simulate,
)
from .fading.distributions import ALL_FAMILIES


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; this CLI reserves 2 for validation."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _models(text: str) -> tuple[str, ...]:
    names = tuple(m.strip() for m in text.split(",") if m.strip())
    bad = [m for m in names if m not in ALL_FAMILIES]
    if not names or bad:
        raise argparse.ArgumentTypeError(f"unknown model(s) {bad or text!r}; choose from {','.join(ALL_FAMILIES)}")
    return names


def _snr(text: str) -> tuple[float, float, float]:
    try:
        return parse_snr_range(text)
    except ConfigError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="uwocsim", description="Wave-optics simulation of underwater optical links with fading-model fits.")
    sub = p.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    def add(name, help_, *flags):
        sp = sub.add_parser(name, help=help_, description=help_)
        if "config" in flags:
            sp.add_argument("--config", type=Path, help="key = value campaign configuration (defaults if omitted)")
        sp.add_argument("--out", type=Path, help="output directory (config output_dir if omitted)")
        if "seed" in flags:
            sp.add_argument("--seed", type=int, help="master seed")
        if "realizations" in flags:
            sp.add_argument("--realizations", type=_positive_int)
        if "workers" in flags:
            sp.add_argument("--workers", type=_positive_int, help="parallel workers")
        if "models" in flags:
            sp.add_argument("--models", type=_models, help=f"comma-separated subset of {','.join(ALL_FAMILIES)}")
        if "snr" in flags:
            sp.add_argument("--snr-db", type=_snr, metavar="START:STOP:STEP", help="SNR grid in dB (inclusive)")
        return sp

    add("plan", "place the phase screens and write plan.txt", "config")
    add("simulate", "run the realizations and write samples.csv", "config", "seed", "realizations", "workers")
    fit = add("fit", "fit the fading models and write fit_report.json", "config", "seed", "models")
    fit.add_argument("--samples", type=Path, help="sample CSV (default OUT/samples.csv)")
    gof = add("gof", "histogram the samples and add R^2 and MSE to the fit report", "config")
    gof.add_argument("--samples", type=Path, help="sample CSV (default OUT/samples.csv)")
    gof.add_argument("--report", type=Path, help="fit report (default OUT/fit_report.json)")
    gof.add_argument("--bins", type=_positive_int, help="histogram bin count")
    ber = add("ber", "average BER of the fitted WGG model, written to ber.csv", "config", "workers", "snr")
    ber.add_argument("--report", type=Path, help="fit report (default OUT/fit_report.json)")
    add("run", "plan, simulate, fit, gof and ber in one go", "config", "seed", "realizations", "workers", "models", "snr")
    return p


def load_config(args: argparse.Namespace) -> CampaignConfig:
    """Configuration file (or defaults) with command-line overrides applied."""
    cfg = CampaignConfig.from_file(args.config) if getattr(args, "config", None) else CampaignConfig()
    overrides = {}
    for flag, key in (("seed", "seed"), ("realizations", "realizations"), ("workers", "workers"), ("models", "models"), ("snr_db", "snr_db")):
        v = getattr(args, flag, None)
        if v is not None:
            overrides[key] = v
    if getattr(args, "out", None) is not None:
        overrides["output_dir"] = str(args.out)
    return replace(cfg, **overrides) if overrides else cfg


def _dispatch(args: argparse.Namespace) -> str:
    cfg = load_config(args)
    out = Path(cfg.output_dir)
    cmd = args.command
    if cmd == "plan":
        plan = stage_plan(cfg, out)
        return plan.report() + f"wrote {out / PLAN_FILE}\n"
    if cmd == "simulate":
        samples = stage_simulate(cfg, out)
        return f"{samples.count} samples, scintillation index {samples.variance():.6g}\nwrote {out / SAMPLES_FILE}\n"
    if cmd == "fit":
        report = stage_fit(args.samples or out / SAMPLES_FILE, out, cfg.models, seed=cfg.seed)
        return report.table() + f"wrote {out / REPORT_FILE}\n"
    if cmd == "gof":
        samples = args.samples or out / SAMPLES_FILE
        hist, report = stage_gof(samples, args.report or out / REPORT_FILE, out, n_bins=args.bins or cfg.n_bins)
        best = report.best()
        return report.table() + f"best by R2: {best}\nwrote {out / HISTOGRAM_FILE} ({hist.n_bins} bins), {out / REPORT_FILE}\n"
    if cmd == "ber":
        curve = stage_ber(args.report or out / REPORT_FILE, out, cfg.snr_db, workers=cfg.workers)
        n_flag = sum(curve.flagged)
        return f"{len(curve.snr_db)} SNR points, {n_flag} by quadrature fallback\nwrote {out / BER_FILE}\n"
    if cmd == "run":
        res = run_campaign(cfg, out)
        lines = [res.report.table(), f"best by R2: {res.report.best()}"]
        lines += [f"skipped {s}" for s in res.provenance["skipped_stages"]]
        lines += [f"wrote {p}" for p in res.files]
        return "\n".join(lines) + "\n"
    raise UsageError(f"unknown command {cmd!r}")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        sys.stdout.write(_dispatch(args))
    except UsageError as exc:
        print(f"uwocsim: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"uwocsim: [config] {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except StageError as exc:
        print(f"uwocsim: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, OSError) as exc:
        print(f"uwocsim: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ArithmeticError as exc:
        print(f"uwocsim: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
