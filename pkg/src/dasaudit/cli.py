"""Command-line driver: ``dasaudit run`` plus one subcommand per stage."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .bisg import NAME_PARTS, load_posteriors, run_bisg, save_posteriors
from .config import load_run_config, reference_config_path
from .dp_das import apply_dp_das
from .errors import ConfigError, DasAuditError, ParseError, StageError
from .pipeline import dp_condition, run_pipeline
from .policy_eval import evaluate_plans, generate_plans, save_plans
from .risk import build_risk_report
from .swap import apply_swapping, save_swap_log
from .synth_pop import (
    extract_voter_file,
    generate_population,
    load_microdata,
    load_voter_file,
    save_microdata,
    save_voter_file,
)
from .synth_pop.io import write_json
from .tabulate import load_tabulation, save_tabulation, table_distance, tabulate

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3

log = logging.getLogger("dasaudit")


def _config(args):
    path = args.config or reference_config_path()
    try:
        return load_run_config(path, seed=args.seed, output_dir=args.out, threads=args.threads,
                               epsilons=args.epsilon or None)
    except (ParseError, FileNotFoundError) as exc:
        raise ConfigError(str(exc), field="config") from exc


def cmd_run(args):
    manifest = run_pipeline(config=_config(args))
    print(json.dumps({"output_dir": manifest.output_dir, "complete": manifest.complete,
                      "artifacts": len(manifest.artifacts)}))


def cmd_generate(args):
    cfg = _config(args)
    out = Path(cfg.output_dir)
    md = generate_population(cfg.generation, cfg.seed)
    save_microdata(md, out / "microdata")
    save_voter_file(extract_voter_file(md, cfg.registration_rate, cfg.seed), out / "voters.csv")


def cmd_tabulate(args):
    save_tabulation(tabulate(load_microdata(args.microdata)), args.output)


def cmd_swap(args):
    cfg = _config(args)
    md, swap_log = apply_swapping(load_microdata(args.microdata), cfg.swap_config())
    save_microdata(md, args.output)
    save_swap_log(swap_log, Path(args.output) / "swap_log.csv")


def cmd_dpnoise(args):
    cfg = _config(args)
    tab = load_tabulation(args.tabulation)
    out = Path(args.output)
    for budget in cfg.budgets():
        save_tabulation(apply_dp_das(tab, budget, cfg.seed), out / f"{dp_condition(budget.epsilon_total)}.csv")


def cmd_diff(args):
    d = table_distance(load_tabulation(args.a), load_tabulation(args.b))
    print(json.dumps(d.to_dict(), sort_keys=True))


def cmd_bisg(args):
    cfg = _config(args)
    md = load_microdata(args.microdata)
    tab = load_tabulation(args.tabulation) if args.tabulation else None
    ps = run_bisg(load_voter_file(args.voters), md.name_model, tab, args.method,
                  cfg.bisg.population, cfg.bisg.smoothing)
    save_posteriors(ps, args.output)


def _emit_reports(reports, out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "risk_report.json", {c: r.to_dict() for c, r in reports.items()})
    (out / "risk_report.txt").write_text(
        "\n".join(f"== {c} ==\n{r.render()}" for c, r in reports.items()), encoding="utf-8")


def cmd_risk(args):
    report = build_risk_report(
        {args.method: {"without": load_posteriors(args.without), "with": load_posteriors(args.with_)}},
        epsilon=args.report_epsilon, condition=args.condition)
    _emit_reports({args.condition: report}, args.output)


def cmd_report(args):
    """Build risk reports for every condition under a posteriors directory."""
    root = Path(args.posteriors)
    none = root / "none"
    if not none.is_dir():
        raise FileNotFoundError(f"missing name-only posteriors: {none}")
    reports = {}
    for cond_dir in sorted(p for p in root.iterdir() if p.is_dir() and p.name != "none"):
        by_method = {}
        for f in sorted(cond_dir.glob("*.csv")):
            by_method[f.stem] = {"without": load_posteriors(none / f.name), "with": load_posteriors(f)}
        if not by_method:
            continue
        eps = float(cond_dir.name[len("dp_eps"):]) if cond_dir.name.startswith("dp_eps") else None
        ordered = {m: by_method[m] for m in sorted(by_method, key=_method_order)}
        reports[cond_dir.name] = build_risk_report(ordered, epsilon=eps, condition=cond_dir.name)
    _emit_reports(reports, args.output)


def _method_order(m):
    return NAME_PARTS.index(m) if m in NAME_PARTS else len(NAME_PARTS)


def cmd_policy(args):
    cfg = _config(args)
    p = cfg.policy
    root = Path(args.tabulations)
    tabs = {f.stem: load_tabulation(f) for f in sorted(root.glob("*.csv"))}
    if "confidential" not in tabs:
        raise FileNotFoundError(f"missing confidential tabulation: {root / 'confidential.csv'}")
    conf = tabs["confidential"]
    plans = generate_plans(conf.geography, conf, p.n_plans, p.n_districts, p.balance_tolerance,
                           cfg.seed, p.max_retries)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    evaluate_plans(plans, tabs, p.thresholds).save(out / "deviation_report.json", out / "deviation_summary.csv")
    save_plans(plans, out / "plans.csv")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run config (JSON); defaults to the shipped reference config")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", help="output directory (or DASAUDIT_OUT)")
    common.add_argument("--threads", type=int, help="worker threads (or DASAUDIT_THREADS)")
    common.add_argument("--epsilon", type=float, action="append", help="epsilon sweep value; repeatable")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="dasaudit", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, func, help):
        p = sub.add_parser(name, parents=[common], help=help)
        p.set_defaults(func=func)
        return p

    add("run", cmd_run, "run every stage and write reports")
    add("generate", cmd_generate, "write synthetic microdata and a voter file")
    p = add("tabulate", cmd_tabulate, "tabulate a microdata directory")
    p.add_argument("microdata")
    p.add_argument("output")
    p = add("swap", cmd_swap, "swap households in a microdata directory")
    p.add_argument("microdata")
    p.add_argument("output", help="directory for swapped microdata and swap_log.csv")
    p = add("dpnoise", cmd_dpnoise, "apply the noisy release to a tabulation, one file per epsilon")
    p.add_argument("tabulation")
    p.add_argument("output", help="directory for dp_eps<e>.csv files")
    p = add("diff", cmd_diff, "print the distance between two tabulations")
    p.add_argument("a")
    p.add_argument("b")
    p = add("bisg", cmd_bisg, "compute posteriors for a voter file")
    p.add_argument("microdata", help="microdata directory (for the name model)")
    p.add_argument("voters")
    p.add_argument("output")
    p.add_argument("--tabulation", help="released tabulation; omit for name-only priors")
    p.add_argument("--method", choices=NAME_PARTS, default="last")
    p = add("risk", cmd_risk, "risk report for one method from two posterior files")
    p.add_argument("without")
    p.add_argument("with_", metavar="with")
    p.add_argument("output")
    p.add_argument("--method", choices=NAME_PARTS, default="last")
    p.add_argument("--condition", default="released")
    p.add_argument("--report-epsilon", type=float)
    p = add("report", cmd_report, "risk reports for a posteriors/<condition>/<method>.csv tree")
    p.add_argument("posteriors")
    p.add_argument("output")
    p = add("policy", cmd_policy, "generate plans and evaluate a directory of tabulations")
    p.add_argument("tabulations")
    p.add_argument("output")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        print(f"stage {exc.stage} failed: {exc.cause}", file=sys.stderr)
        return EXIT_STAGE
    except (DasAuditError, FileNotFoundError, ValueError) as exc:
        print(f"{args.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_STAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
