"""Redistricting utility checks: population deviation and compliance flips.

Plans are grown on a synthetic rook-adjacency grid laid over blocks in id
order, then balanced by boundary moves. Deviation is
``(max district pop - min district pop) / (total pop / n_districts)``.
"""

from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ComparabilityError, ContractError, PlanGenerationError, UndefinedStatisticError
from .rng import stream
from .synth_pop.io import read_int_csv, write_json
from .tabulate import check_comparable

DEFAULT_THRESHOLDS = (0.0, 0.10)
PLAN_COLUMNS = ("plan_id", "block_id", "district_id")


@dataclass(frozen=True)
class Plan:
    plan_id: int
    assignment: dict
    n_districts: int

    def __post_init__(self):
        used = set(self.assignment.values())
        if used != set(range(self.n_districts)):
            raise ContractError(f"plan {self.plan_id}: every district 0..{self.n_districts - 1} must be non-empty")

    def districts_for(self, block_ids):
        try:
            return np.array([self.assignment[int(b)] for b in block_ids], dtype=np.int64)
        except KeyError as exc:
            raise ComparabilityError(f"plan {self.plan_id} does not assign block {exc.args[0]}") from None


def grid_adjacency(n):
    """Rook neighbours for ``n`` cells laid row-major on a ceil(sqrt(n))-wide grid."""
    width = max(1, math.ceil(math.sqrt(n)))
    adj = [[] for _ in range(n)]
    for i in range(n):
        r, c = divmod(i, width)
        for j in ((r - 1) * width + c if r else -1, i - 1 if c else -1,
                  i + 1 if c + 1 < width else -1, (r + 1) * width + c):
            if 0 <= j < n:
                adj[i].append(j)
    return adj


def _deviation(pops):
    total = pops.sum()
    if total <= 0:
        raise UndefinedStatisticError("zero total population")
    return float((pops.max() - pops.min()) / (total / len(pops)))


def district_populations(plan, tab):
    if set(plan.assignment) != set(int(b) for b in tab.block_ids):
        raise ComparabilityError(f"plan {plan.plan_id} and tabulation cover different blocks")
    d = plan.districts_for(tab.block_ids)
    return np.bincount(d, weights=tab.total_population(), minlength=plan.n_districts)


def max_deviation(plan, tab):
    return _deviation(district_populations(plan, tab))


def _grow(adj, k, rng):
    n = len(adj)
    assign = np.full(n, -1, dtype=np.int64)
    seeds = rng.choice(n, size=k, replace=False)
    assign[seeds] = np.arange(k)
    sizes = np.ones(k)
    remaining = n - k
    while remaining:
        frontier = {}
        for i in np.flatnonzero(assign >= 0):
            for j in adj[i]:
                if assign[j] < 0:
                    frontier.setdefault(int(assign[i]), []).append(j)
        d = min(frontier, key=lambda x: (sizes[x], x))
        cands = sorted(set(frontier[d]))
        j = cands[rng.integers(len(cands))]
        assign[j] = d
        sizes[d] += 1
        remaining -= 1
    return assign


def _connected_without(adj, assign, d, drop):
    members = [i for i in np.flatnonzero(assign == d) if i != drop]
    if not members:
        return False
    seen = {members[0]}
    queue = deque([members[0]])
    while queue:
        i = queue.popleft()
        for j in adj[i]:
            if j != drop and assign[j] == d and j not in seen:
                seen.add(j)
                queue.append(j)
    return len(seen) == len(members)


def _balance(adj, pop, assign, k, tolerance, max_moves=10_000):
    """Greedy boundary moves that reduce the sum of squared district deviations."""
    pops = np.bincount(assign, weights=pop, minlength=k)
    for _ in range(max_moves):
        if _deviation(pops) <= tolerance:
            break
        moves = []
        for i, nbrs in enumerate(adj):
            a = assign[i]
            p = pop[i]
            for j in nbrs:
                b = assign[j]
                # moving block i from a to b changes the squared deviations by 2p(p + P_b - P_a)
                if b != a and pops[a] - pops[b] > p:
                    moves.append((2 * p * (p + pops[b] - pops[a]), i, int(b)))
        if not moves:
            break
        moves.sort()
        for _, i, b in moves:
            a = assign[i]
            if _connected_without(adj, assign, a, i):
                assign[i] = b
                pops[a] -= pop[i]
                pops[b] += pop[i]
                break
        else:
            break
    return assign


def generate_plans(geo, tab, n_plans, n_districts, balance_tolerance, seed, max_retries=50):
    """Seeded contiguous plans whose deviation under ``tab`` is within tolerance."""
    n = geo.n_blocks
    if not 1 <= n_districts <= n:
        raise ContractError(f"n_districts must lie in 1..{n} (block count)")
    if balance_tolerance < 0:
        raise ContractError("balance_tolerance must be >= 0")
    if not np.array_equal(tab.block_ids, geo.block_id):
        raise ComparabilityError("tabulation and geography cover different blocks")
    pop = tab.total_population().astype(float)
    if pop.sum() <= 0:
        raise UndefinedStatisticError("zero total population")
    adj = grid_adjacency(n)
    rng = stream(seed, "policy_eval", "plans")
    plans = []
    best = math.inf
    failures = 0
    while len(plans) < n_plans:
        assign = _balance(adj, pop, _grow(adj, n_districts, rng), n_districts, balance_tolerance)
        dev = _deviation(np.bincount(assign, weights=pop, minlength=n_districts))
        best = min(best, dev)
        if dev <= balance_tolerance + 1e-12:
            plans.append(Plan(len(plans), {int(b): int(d) for b, d in zip(geo.block_id, assign)}, n_districts))
            failures = 0
        else:
            failures += 1
            if failures >= max_retries:
                raise PlanGenerationError(f"could not reach tolerance {balance_tolerance}", best)
    return plans


def _compliant(dev, threshold):
    return dev <= threshold + 1e-12


@dataclass(frozen=True)
class FlipSummary:
    n_plans: int
    lost: int
    gained: int

    @property
    def total(self):
        return self.lost + self.gained

    def to_dict(self):
        return {"n_plans": self.n_plans, "lost": self.lost, "gained": self.gained, "total": self.total}


def compliance_flips(plans, tab_conf, tab_dp, threshold):
    """Plans whose compliance (deviation <= threshold) differs between the two tables."""
    check_comparable(tab_conf, tab_dp)
    lost = gained = 0
    for plan in plans:
        before = _compliant(max_deviation(plan, tab_conf), threshold)
        after = _compliant(max_deviation(plan, tab_dp), threshold)
        lost += before and not after
        gained += after and not before
    return FlipSummary(len(plans), lost, gained)


def diversity_index(tab):
    """``1 - sum_r share_r**2`` per block; empty blocks score 0."""
    counts = tab.race_counts.astype(float)
    tot = counts.sum(axis=1, keepdims=True)
    shares = np.divide(counts, tot, out=np.zeros_like(counts), where=tot > 0)
    return np.where(tot[:, 0] > 0, 1.0 - (shares ** 2).sum(axis=1), 0.0)


def pearson(x, y):
    """Pearson correlation; NaN when either series has zero variance."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    dx, dy = x - x.mean(), y - y.mean()
    sx, sy = math.sqrt(float(dx @ dx)), math.sqrt(float(dy @ dy))
    if sx == 0 or sy == 0:
        return math.nan
    return float(dx @ dy) / (sx * sy)


def error_diversity_correlation(tab_conf, tab_noised):
    """Correlation between |block total error| and confidential block diversity.

    Returns NaN (the undefined-correlation sentinel) when either series is constant.
    """
    check_comparable(tab_conf, tab_noised)
    if tab_conf.n_blocks < 3:
        raise ContractError("need at least 3 blocks")
    err = np.abs(tab_noised.total_population() - tab_conf.total_population())
    return pearson(err, diversity_index(tab_conf))


@dataclass
class DeviationReport:
    plan_ids: list
    thresholds: tuple
    deviations: dict = field(default_factory=dict)
    flips: dict = field(default_factory=dict)
    inflation_ratio: dict = field(default_factory=dict)
    error_diversity_correlation: dict = field(default_factory=dict)
    reference: str = "confidential"
    swapped: str | None = "swapped"

    def compliance(self, condition, threshold):
        return [_compliant(d, threshold) for d in self.deviations[condition]]

    @property
    def swapped_equals_confidential(self):
        if self.swapped is None or self.swapped not in self.deviations:
            return None
        return self.deviations[self.swapped] == self.deviations[self.reference]

    def to_dict(self):
        def clean(v):
            return None if isinstance(v, float) and math.isnan(v) else v

        return {
            "reference": self.reference,
            "swapped": self.swapped,
            "thresholds": list(self.thresholds),
            "plan_ids": list(self.plan_ids),
            "deviations": self.deviations,
            "mean_deviation": {c: float(np.mean(d)) for c, d in self.deviations.items()},
            "compliance": {c: {format(t, "g"): self.compliance(c, t) for t in self.thresholds}
                           for c in self.deviations},
            "flips": {c: {format(t, "g"): f.to_dict() for t, f in fl.items()} for c, fl in self.flips.items()},
            "inflation_ratio": {c: clean(v) for c, v in self.inflation_ratio.items()},
            "error_diversity_correlation": {c: clean(v) for c, v in self.error_diversity_correlation.items()},
            "swapped_equals_confidential": self.swapped_equals_confidential,
        }

    def summary_rows(self):
        rows = []
        for c, devs in self.deviations.items():
            for pid, d in zip(self.plan_ids, devs):
                rows.append([pid, c, format(d, ".17g")]
                            + [int(_compliant(d, t)) for t in self.thresholds])
        return rows

    def save(self, json_path, csv_path):
        write_json(json_path, self.to_dict())
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["plan_id", "condition", "max_deviation"]
                       + [f"compliant_{format(t, 'g')}" for t in self.thresholds])
            w.writerows(self.summary_rows())


def evaluate_plans(plans, tabs, thresholds=DEFAULT_THRESHOLDS, reference="confidential", swapped="swapped"):
    """Deviation statistics for every plan under every tabulation in ``tabs``."""
    if reference not in tabs:
        raise ContractError(f"reference condition {reference!r} missing")
    ref = tabs[reference]
    report = DeviationReport([p.plan_id for p in plans], tuple(thresholds), reference=reference,
                             swapped=swapped if swapped in tabs else None)
    for name, tab in tabs.items():
        check_comparable(ref, tab)
        report.deviations[name] = [max_deviation(p, tab) for p in plans]
    base = report.deviations.get(report.swapped or reference)
    for name, tab in tabs.items():
        if name == reference:
            continue
        report.flips[name] = {t: compliance_flips(plans, ref, tab, t) for t in thresholds}
        if name != report.swapped:
            denom = float(np.mean(base)) if base else 0.0
            report.inflation_ratio[name] = float(np.mean(report.deviations[name])) / denom if denom else math.nan
            report.error_diversity_correlation[name] = error_diversity_correlation(ref, tab)
    return report


def save_plans(plans, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PLAN_COLUMNS)
        for p in plans:
            for b in sorted(p.assignment):
                w.writerow([p.plan_id, b, p.assignment[b]])
    return Path(path)


def load_plans(path):
    cols = read_int_csv(path, PLAN_COLUMNS)
    plans = []
    for pid in np.unique(cols["plan_id"]):
        m = cols["plan_id"] == pid
        assignment = {int(b): int(d) for b, d in zip(cols["block_id"][m], cols["district_id"][m])}
        plans.append(Plan(int(pid), assignment, len(set(assignment.values()))))
    return plans
