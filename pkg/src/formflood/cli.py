"""Command line entry point: ``formflood <command> [options]``.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure,
3 a prevention adversary was wrongly accepted.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from importlib import resources
from pathlib import Path

from . import attack_sim, calibration, corpus_forms, defense, model_fit, prevention
from .attack_sim import ConfigError, TimeSeries
from .scenario import Scenario, load_scenario, resolve_scenario, save_scenario

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_ACCEPTANCE = 0, 1, 2, 3

log = logging.getLogger("formflood")


class UsageError(Exception):
    pass


def bundled_corpus() -> Path:
    return Path(str(resources.files("formflood") / "data" / "corpus"))


def _out_dir(args, scenario: Scenario | None = None) -> Path:
    d = Path(args.out_dir) if args.out_dir else Path(scenario.outputs if scenario else "out")
    d.mkdir(parents=True, exist_ok=True)
    return d


def _scenario(args) -> Scenario:
    if not args.scenario:
        raise UsageError("--scenario is required")
    try:
        path = resolve_scenario(args.scenario)
    except FileNotFoundError:
        raise UsageError(f"scenario not found: {args.scenario}") from None
    s = load_scenario(path)
    if args.seed is not None:
        s = Scenario(s.name, s.attack.replace(seed=args.seed), s.defense_policy, s.legit_traffic,
                     s.prevention_enabled, s.outputs, s.label)
    return s


def _write(path: Path, text: str) -> None:
    path.write_text(text)
    log.info("wrote %s", path)


# -- commands ----------------------------------------------------------------


def cmd_harvest(args) -> int:
    corpus = Path(args.corpus) if args.corpus else bundled_corpus()
    try:
        forms, rate = corpus_forms.harvest_corpus(corpus, workers=args.workers)
    except (FileNotFoundError, corpus_forms.EmptyCorpusError, UnicodeDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    out = Path(args.out) if args.out else _out_dir(args) / "forms.jsonl"
    out.parent.mkdir(parents=True, exist_ok=True)
    corpus_forms.write_form_db(forms, out)
    print(f"harvest_rate={rate:.3f}")
    print(f"forms={len(forms)} written to {out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    s = _scenario(args)
    out = attack_sim.run_attack(s.attack)
    d = _out_dir(args, s)
    _write(d / "series.csv", out.series.to_csv())
    summary = out.summary()
    _write(d / "summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    kill = "none" if out.kill_time is None else f"{out.kill_time:.3f}"
    print(f"attack_time={out.attack_time:.3f} kill_time={kill} messages={summary['message_count']}")
    return EXIT_OK


def cmd_fit(args) -> int:
    try:
        series = TimeSeries.from_csv(Path(args.series).read_text())
        params = model_fit.fit_tanh_model(series, args.channel)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    d = _out_dir(args)
    _write(d / "fit.csv", model_fit.fit_report_csv(params, args.channel))
    print(f"a={params.a!r} b={params.b!r} c={params.c!r} converged={str(params.converged).lower()}")
    return EXIT_OK


def _parse_forms(text: str) -> list[int]:
    try:
        vals = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"--forms expects comma-separated integers, got {text!r}") from None
    if not vals or any(v <= 0 for v in vals):
        raise UsageError("--forms needs positive attack sizes")
    return vals


GNUPLOT = """set datafile separator ','
set logscale xy
set key top right
set xlabel 'forms F'
set ylabel 'minutes'
fill_rate = {fill_rate!r}
plot '{csv}' every ::1 using 1:2 with linespoints title 'time to fill the quota', \\
     '{csv}' every ::1 using 1:($1/fill_rate) with lines title 'attack time'
"""


def cmd_sweep(args) -> int:
    s = _scenario(args)
    base = s.attack
    if args.no_snowball:
        base = attack_sim.disable_snowball(base)
    F_values = _parse_forms(args.forms)
    table = attack_sim.sweep(base, F_values, args.reps, channel=args.channel, workers=args.workers)
    d = _out_dir(args, s)
    _write(d / "sweep.csv", table.to_csv())
    _write(d / "sweep_fits.csv", table.fits_csv())

    fits = []
    kills = [(r.F, r.mean_kill) for r in table.rows if math.isfinite(r.mean_kill)]
    kill_fit = model_fit.fit_power_law(kills) if len(kills) >= 2 else None
    if kill_fit:
        fits.append(kill_fit)
    rates = [(r.F, r.mean_fit_a) for r in table.rows if math.isfinite(r.mean_fit_a) and r.mean_fit_a > 0]
    if len(rates) >= 2:
        fits.append(model_fit.fit_exponential(rates))
    small = [(F, a) for F, a in rates if F <= 2050]
    if len(small) >= 2:
        fits.append(model_fit.fit_linear(small))
    _write(d / "scaling.csv", model_fit.scaling_report_csv(fits))

    crossing = model_fit.crossing_point(kill_fit, base.fill_rate) if kill_fit else math.nan
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(
        [["fill_rate", "kill_exponent", "crossing_forms"],
         [repr(base.fill_rate), repr(kill_fit.exponent_or_rate) if kill_fit else "nan", repr(crossing)]])
    _write(d / "crossing.csv", buf.getvalue())
    if args.gnuplot:
        _write(d / "sweep.gp", GNUPLOT.format(fill_rate=base.fill_rate, csv="sweep.csv"))

    for r in table.rows:
        print(f"F={r.F} mean_kill={r.mean_kill:.1f} killed={r.kill_fraction:.2f}")
    if kill_fit:
        print(f"kill_exponent={kill_fit.exponent_or_rate:.3f} r2={kill_fit.r_squared:.3f} crossing_F={crossing:.0f}")
    else:
        print("kill_exponent=nan (fewer than two sizes killed the mailbox in every replication)")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    s = _scenario(args) if args.scenario else load_scenario(resolve_scenario("calibrated"))
    if args.target <= 0 or args.tolerance < 0:
        raise UsageError("--target must be > 0 and --tolerance >= 0")
    points = calibration.grid()
    if args.max_points:
        points = points[:args.max_points]
    result = calibration.calibrate(s.attack, args.target, args.tolerance, args.unit,
                                   replications=args.reps, points=points)
    d = _out_dir(args, s)
    report = result.report(args.unit)
    _write(d / "calibration.txt", report + "\n")
    print(report)
    if not result.success:
        return EXIT_RUNTIME
    calibrated = Scenario("calibrated", result.config, s.defense_policy, s.legit_traffic,
                          s.prevention_enabled, s.outputs, s.label)
    save_scenario(calibrated, d / "calibrated.json")
    return EXIT_OK


def cmd_defend(args) -> int:
    s = _scenario(args)
    if s.defense_policy is None or s.legit_traffic is None:
        raise UsageError(f"scenario {s.name!r} needs defense_policy and legit_traffic")
    outcome = attack_sim.run_attack(s.attack, record_traffic=True)
    legit = s.legit_traffic.generate(s.attack.effective_horizon)
    book = s.legit_traffic.book()
    metrics = defense.evaluate_defense(outcome, legit, s.defense_policy, book, threshold=args.threshold)
    d = _out_dir(args, s)
    _write(d / "defense_metrics.csv", defense.metrics_csv([metrics]))
    print(f"persona={metrics.persona} attack_recall={metrics.attack_recall:.3f} "
          f"legit_retention={metrics.legit_retention:.3f} bytes_freed={metrics.bytes_freed}")
    return EXIT_OK


def cmd_prevent(args) -> int:
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    registry = prevention.DomainRegistry.load(args.registry) if args.registry else prevention.default_registry()
    seed = 0 if args.seed is None else args.seed
    report = prevention.run_adversary_suite(registry, args.trials, seed)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["adversary", "verdict", "count"])
    w.writerows(report.rows())
    d = _out_dir(args)
    _write(d / "prevent_report.csv", buf.getvalue())
    print(f"trials={report.trials} false_accepts={report.false_accepts} false_rejects={report.false_rejects}")
    print(f"residual_risk_accepts={report.residual_risk_accepts} (shared-server insider; traceable, not blocked)")
    return EXIT_ACCEPTANCE if report.false_accepts else EXIT_OK


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    common.add_argument("--out-dir", default=None, help="directory for output files")
    common.add_argument("--scenario", default=None, help="scenario file or bundled preset name")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="formflood", description="Offline form-flooding simulator.")
    sub = p.add_subparsers(dest="command", required=True)

    h = sub.add_parser("harvest", parents=[common], help="extract launch-pad forms from a local corpus")
    h.add_argument("corpus", nargs="?", help="directory of *.html pages (default: bundled fixture)")
    h.add_argument("--out", help="form database path (default: OUT_DIR/forms.jsonl)")
    h.add_argument("--workers", type=int, default=None)
    h.set_defaults(func=cmd_harvest)

    s = sub.add_parser("simulate", parents=[common], help="run one attack scenario")
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("fit", parents=[common], help="fit the growth model to a series CSV")
    f.add_argument("series")
    f.add_argument("--channel", choices=("messages", "bytes"), default="messages")
    f.set_defaults(func=cmd_fit)

    w = sub.add_parser("sweep", parents=[common], help="kill time and rate versus attack size")
    w.add_argument("--forms", default="512,1024,2048,4096")
    w.add_argument("--reps", type=int, default=20)
    w.add_argument("--channel", choices=("messages", "bytes"), default="messages",
                   help="channel the growth model is fitted on")
    w.add_argument("--workers", type=int, default=None)
    w.add_argument("--no-snowball", action="store_true")
    w.add_argument("--gnuplot", action="store_true", help="also write a gnuplot script")
    w.set_defaults(func=cmd_sweep)

    c = sub.add_parser("calibrate", parents=[common], help="grid-search the launch-pad mix")
    c.add_argument("--target", type=float, default=0.06, help="long-term messages per form per UNIT")
    c.add_argument("--unit", choices=sorted(calibration.UNITS), default="day")
    c.add_argument("--tolerance", type=float, default=0.2)
    c.add_argument("--reps", type=int, default=10)
    c.add_argument("--max-points", type=int, default=None, help="search only the first N grid points")
    c.set_defaults(func=cmd_calibrate)

    d = sub.add_parser("defend", parents=[common], help="score the cleaner on a scenario")
    d.add_argument("--threshold", type=float, default=defense.DEFAULT_THRESHOLD)
    d.set_defaults(func=cmd_defend)

    v = sub.add_parser("prevent", parents=[common], help="run the validation adversary suite")
    v.add_argument("--trials", type=int, default=10_000)
    v.add_argument("--registry", help="domain registry JSON (default: built-in)")
    v.set_defaults(func=cmd_prevent)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - last-resort reporting for a batch tool
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
