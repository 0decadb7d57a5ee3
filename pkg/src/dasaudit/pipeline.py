"""End-to-end driver: generate -> tabulate -> {swap | dp} -> bisg -> risk -> policy."""

from __future__ import annotations

import contextlib
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .bisg import run_bisg, save_posteriors
from .config import RunConfig, load_run_config
from .dp_das import MECHANISM_VERSION, apply_dp_das
from .errors import DasAuditError, StageError
from .policy_eval import evaluate_plans, generate_plans, save_plans
from .risk import build_risk_report
from .rng import RNG_NAME, RNG_VERSION
from .swap import apply_swapping, save_swap_log
from .synth_pop import extract_voter_file, generate_population, save_microdata, save_voter_file
from .synth_pop.io import write_json
from .tabulate import save_tabulation, table_distance, tabulate

log = logging.getLogger(__name__)

SWAP_MECHANISM_VERSION = "household-swap/1"


def dp_condition(epsilon):
    return f"dp_eps{epsilon:g}"


@dataclass
class PipelineResults:
    config: RunConfig
    microdata: object = None
    voters: object = None
    swapped: object = None
    swap_log: object = None
    tabulations: dict = field(default_factory=dict)
    budgets: dict = field(default_factory=dict)
    without: dict = field(default_factory=dict)
    posteriors: dict = field(default_factory=dict)
    risk_reports: dict = field(default_factory=dict)
    distances: dict = field(default_factory=dict)
    plans: list = field(default_factory=list)
    deviation_report: object = None


@dataclass
class PipelineManifest:
    config_hash: str
    seed: int
    output_dir: str
    artifacts: list = field(default_factory=list)
    versions: dict = field(default_factory=dict)
    started_at: str = ""
    finished_at: str = ""
    complete: bool = False
    failed_stage: str | None = None
    error: str | None = None

    def to_dict(self):
        return dict(self.__dict__)


@contextlib.contextmanager
def stage(name):
    log.info("stage %s", name)
    try:
        yield
    except StageError:
        raise
    except (DasAuditError, ValueError, OSError, KeyError) as exc:
        raise StageError(name, exc) from exc


def _bisg_jobs(cfg, res):
    jobs = []
    for method in cfg.bisg.methods:
        jobs.append(("none", method, None))
        for cond, tab in res.tabulations.items():
            jobs.append((cond, method, tab))
    return jobs


def compute(cfg, stages=("generate", "tabulate", "swap", "dpnoise", "bisg", "risk", "policy"), results=None):
    """Run the analysis in memory. ``results`` collects partial output on failure."""
    res = results if results is not None else PipelineResults(cfg)
    seed = cfg.seed
    with stage("generate"):
        res.microdata = generate_population(cfg.generation, seed)
        res.voters = extract_voter_file(res.microdata, cfg.registration_rate, seed)
    with stage("tabulate"):
        res.tabulations["confidential"] = tabulate(res.microdata)
    conf = res.tabulations["confidential"]
    if "swap" in stages:
        with stage("swap"):
            res.swapped, res.swap_log = apply_swapping(res.microdata, cfg.swap_config())
            res.tabulations["swapped"] = tabulate(res.swapped)
    if "dpnoise" in stages:
        with stage("dpnoise"):
            for budget in cfg.budgets():
                name = dp_condition(budget.epsilon_total)
                res.budgets[name] = budget
                res.tabulations[name] = apply_dp_das(conf, budget, seed)
    with stage("distance"):
        res.distances = {c: table_distance(conf, t) for c, t in res.tabulations.items()}
    if "bisg" in stages:
        with stage("bisg"):
            b = cfg.bisg

            def job(j):
                cond, method, tab = j
                return run_bisg(res.voters, res.microdata.name_model, tab, method, b.population, b.smoothing)

            jobs = _bisg_jobs(cfg, res)
            with ThreadPoolExecutor(max_workers=max(1, cfg.threads)) as pool:
                outputs = list(pool.map(job, jobs))
            for (cond, method, _), ps in zip(jobs, outputs):
                if cond == "none":
                    res.without[method] = ps
                else:
                    res.posteriors.setdefault(cond, {})[method] = ps
    if "risk" in stages:
        with stage("risk"):
            for cond, by_method in res.posteriors.items():
                budget = res.budgets.get(cond)
                res.risk_reports[cond] = build_risk_report(
                    {m: {"without": res.without[m], "with": ps} for m, ps in by_method.items()},
                    epsilon=budget.epsilon_total if budget else None, condition=cond, budget=budget)
    if "policy" in stages:
        with stage("policy"):
            p = cfg.policy
            res.plans = generate_plans(res.microdata.geography, conf, p.n_plans, p.n_districts,
                                       p.balance_tolerance, seed, p.max_retries)
            res.deviation_report = evaluate_plans(res.plans, res.tabulations, p.thresholds)
    return res


def _write(res, out, artifacts):
    out = Path(out)

    def rel(path):
        artifacts.append(str(Path(path).relative_to(out)))

    if res.microdata is not None:
        save_microdata(res.microdata, out / "microdata")
        for f in ("households.csv", "persons.csv", "geography.json", "name_model.json"):
            rel(out / "microdata" / f)
        rel(save_voter_file(res.voters, out / "voters.csv"))
    if res.swapped is not None:
        save_microdata(res.swapped, out / "swapped")
        rel(out / "swapped" / "households.csv")
        rel(save_swap_log(res.swap_log, out / "swapped" / "swap_log.csv"))
    for cond, tab in res.tabulations.items():
        rel(save_tabulation(tab, out / "tabulations" / f"{cond}.csv"))
    for method, ps in res.without.items():
        (out / "posteriors" / "none").mkdir(parents=True, exist_ok=True)
        rel(save_posteriors(ps, out / "posteriors" / "none" / f"{method}.csv"))
    for cond, by_method in res.posteriors.items():
        (out / "posteriors" / cond).mkdir(parents=True, exist_ok=True)
        for method, ps in by_method.items():
            rel(save_posteriors(ps, out / "posteriors" / cond / f"{method}.csv"))
    reports = out / "reports"
    reports.mkdir(parents=True, exist_ok=True)
    if res.distances:
        write_json(reports / "distance_report.json", {c: d.to_dict() for c, d in res.distances.items()})
        rel(reports / "distance_report.json")
    if res.risk_reports:
        write_json(reports / "risk_report.json", {c: r.to_dict() for c, r in res.risk_reports.items()})
        (reports / "risk_report.txt").write_text(
            "\n".join(f"== {c} ==\n{r.render()}" for c, r in res.risk_reports.items()), encoding="utf-8")
        rel(reports / "risk_report.json")
        rel(reports / "risk_report.txt")
    if res.deviation_report is not None:
        res.deviation_report.save(reports / "deviation_report.json", reports / "deviation_summary.csv")
        rel(reports / "deviation_report.json")
        rel(reports / "deviation_summary.csv")
        rel(save_plans(res.plans, reports / "plans.csv"))


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def run_pipeline(config_path=None, config=None, **overrides):
    """Run every stage and write reports plus ``manifest.json`` under the output dir.

    On a stage failure the artifacts written so far are kept, the manifest is
    marked incomplete, and :class:`StageError` is re-raised.
    """
    cfg = config if config is not None else load_run_config(config_path, **overrides)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = PipelineManifest(
        config_hash=cfg.hash(), seed=cfg.seed, output_dir=str(out),
        versions={"dasaudit": __version__, "dp_das": MECHANISM_VERSION, "swap": SWAP_MECHANISM_VERSION,
                  "rng": f"{RNG_NAME}/{RNG_VERSION}"},
        started_at=_now(),
    )
    res = PipelineResults(cfg)
    try:
        compute(cfg, results=res)
        manifest.complete = True
    except StageError as exc:
        manifest.failed_stage = exc.stage
        manifest.error = str(exc.cause)
        raise
    finally:
        try:
            _write(res, out, manifest.artifacts)
        finally:
            manifest.finished_at = _now()
            write_json(out / "manifest.json", manifest.to_dict())
    return manifest
