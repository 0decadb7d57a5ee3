"""Disclosure-risk metrics for BISG posteriors.

Absolute risk is the posterior probability placed on a person's true race.
Relative risk compares it with the name-only prior, symmetrically:
``max(post/prior, prior/post)``. A zero prior or posterior at the true race
yields ``math.inf``, which is counted separately and never folded into
maxima or means.

The module also carries an exact, mechanism-aware posterior for tiny
instances. That posterior models the noise actually added by the release,
unlike BISG, which reads the noised tables as if they were true counts.
Only the former is subject to the exp(epsilon) style bound.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .bisg import NAME_PARTS, PosteriorSet, error_rate
from .dp_das import PrivacyBudget, geometric_log_pmf
from .errors import ContractError, ReportError, ResourceError, UndefinedStatisticError
from .synth_pop.model import N_RACES, RACE_LABELS, Race

INFINITE_RISK = math.inf

# North Carolina voter-file figures as published (DAS-19.61 release), for
# side-by-side rendering only; synthetic runs are not expected to match them.
PUBLISHED_REFERENCE = {
    "epsilon": 19.61,
    "rows": {
        "last": {"error_rate_without_data": 0.409, "error_rate_with_data": 0.155,
                 "max_individual_relative_risk": 796.9},
        "first+last": {"error_rate_without_data": 0.275, "error_rate_with_data": 0.124,
                       "max_individual_relative_risk": 969.6},
        "first+middle+last": {"error_rate_without_data": 0.190, "error_rate_with_data": 0.102,
                              "max_individual_relative_risk": 1077.8},
    },
    "mean_relative_risk_by_race": {"White": 1.96, "Asian": 14.0, "Other": 21.5},
}

METHOD_LABELS = {
    "last": "Only last names",
    "first+last": "First and last names",
    "first+middle+last": "First, middle, and last names",
}


def _true(rec):
    if rec.true_race is None or rec.true_race < 0:
        raise ContractError(f"record {rec.person_id} has no true race")
    return int(rec.true_race)


def absolute_risk(rec):
    """Posterior probability of the true race."""
    return float(rec.posterior[_true(rec)])


def relative_risk(rec):
    t = _true(rec)
    return _symmetric_ratio(float(rec.posterior[t]), float(rec.prior[t]))


def _symmetric_ratio(post, prior):
    if post <= 0 or prior <= 0:
        return INFINITE_RISK
    r = post / prior
    return max(r, 1.0 / r)


def relative_risks(ps):
    """Vectorized relative risk for a :class:`PosteriorSet`."""
    if np.any(ps.true_race < 0):
        raise ContractError("every record needs a true race")
    idx = np.arange(len(ps))
    post = ps.posterior[idx, ps.true_race]
    prior = ps.prior[idx, ps.true_race]
    out = np.full(len(ps), INFINITE_RISK)
    ok = (post > 0) & (prior > 0)
    r = post[ok] / prior[ok]
    out[ok] = np.maximum(r, 1.0 / r)
    return out


def absolute_risks(ps):
    if np.any(ps.true_race < 0):
        raise ContractError("every record needs a true race")
    return ps.posterior[np.arange(len(ps)), ps.true_race]


def geometric_mean(values):
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise UndefinedStatisticError("geometric mean of an empty group")
    return float(np.exp(np.mean(np.log(v))))


@dataclass(frozen=True)
class GroupRisk:
    geometric_mean: float | None
    n: int
    n_infinite: int = 0

    @property
    def flagged(self):
        return self.n_infinite > 0

    def to_dict(self):
        return {"geometric_mean": self.geometric_mean, "n": self.n,
                "n_infinite": self.n_infinite, "flagged": self.flagged}


def mean_relative_risk_by_race(recs):
    """Geometric-mean relative risk per true race; races with no members are absent."""
    if isinstance(recs, PosteriorSet):
        risks, races = relative_risks(recs), recs.true_race
    else:
        recs = list(recs)
        risks = np.array([relative_risk(r) for r in recs], dtype=float)
        races = np.array([_true(r) for r in recs], dtype=np.int64)
    out = {}
    for r in Race:
        group = risks[races == r]
        if group.size == 0:
            continue
        finite = group[np.isfinite(group)]
        gm = geometric_mean(finite) if finite.size else None
        out[r] = GroupRisk(gm, int(group.size), int(group.size - finite.size))
    return out


def dp_bound(epsilon):
    """Largest factor by which an epsilon-DP release can move a prior."""
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    return math.exp(epsilon)


# --- exact posterior under the noise mechanism ---------------------------------

@dataclass(frozen=True)
class TinyInstance:
    """A small world where the attacker's posterior can be enumerated exactly.

    The target person lives in ``target_block``; their race has prior
    ``race_prior`` (uniform by default). Everyone else is summarized by the
    per-cell counts ``x[b, r]`` (total) and ``v[b, r]`` (voting age), which
    the attacker believes uniform over ``0 <= v <= x <= max_count``. The
    release adds two-sided geometric noise to every cell of both tables at
    the budget's per-table epsilons (before any post-processing).
    """

    n_blocks: int = 1
    n_races: int = 3
    max_count: int = 5
    target_block: int = 0
    target_adult: bool = True
    budget: PrivacyBudget = field(default_factory=lambda: PrivacyBudget(1.0))
    race_prior: tuple | None = None

    def __post_init__(self):
        if not 1 <= self.n_races <= N_RACES:
            raise ValueError(f"n_races must lie in 1..{N_RACES}")
        if self.n_blocks < 1 or not 0 <= self.target_block < self.n_blocks:
            raise ValueError("target_block must index one of n_blocks")
        if self.max_count < 0:
            raise ValueError("max_count must be >= 0")
        prior = (np.full(self.n_races, 1.0 / self.n_races) if self.race_prior is None
                 else np.asarray(self.race_prior, dtype=float))
        if prior.shape != (self.n_races,) or np.any(prior <= 0) or abs(prior.sum() - 1) > 1e-12:
            raise ValueError("race_prior must be a positive distribution over n_races")
        object.__setattr__(self, "race_prior", tuple(prior.tolist()))

    @property
    def eps_race(self):
        return self.budget.table_epsilon("race_table")

    @property
    def eps_vap(self):
        return self.budget.table_epsilon("vap_table")

    @property
    def attribute_epsilon(self):
        """Privacy loss for changing the target's race (two cells per touched table)."""
        return 2 * (self.eps_race + (self.eps_vap if self.target_adult else 0.0))

    def cell_pairs(self):
        """Every plausible (total, voting-age) count pair for one cell."""
        m = self.max_count
        return np.array([(x, v) for x in range(m + 1) for v in range(x + 1)], dtype=np.int64)


MAX_TABLES = 200_000


def mechanism_aware_posterior(inst, noisy_race, noisy_vap):
    """Exact Pr(target race | noised tables) by enumerating confidential tables.

    ``noisy_race`` and ``noisy_vap`` are the pre-post-processing releases,
    shape ``(n_blocks, n_races)``. Every combination of cell counts in every
    block is enumerated, so only genuinely tiny instances are accepted.
    """
    noisy_race = np.asarray(noisy_race, dtype=np.int64).reshape(inst.n_blocks, inst.n_races)
    noisy_vap = np.asarray(noisy_vap, dtype=np.int64).reshape(inst.n_blocks, inst.n_races)
    pairs = inst.cell_pairs()
    n_cells = inst.n_blocks * inst.n_races
    if len(pairs) ** n_cells > MAX_TABLES:
        raise ResourceError(f"{len(pairs)}^{n_cells} confidential tables exceeds {MAX_TABLES}")
    # tables[i, c] = index into pairs for cell c of table i
    tables = np.array(list(itertools.product(range(len(pairs)), repeat=n_cells)), dtype=np.int64)
    x = pairs[tables, 0]
    v = pairs[tables, 1]
    o = noisy_race.ravel()
    w = noisy_vap.ravel()
    target_cells = inst.target_block * inst.n_races + np.arange(inst.n_races)
    loglik = np.empty(inst.n_races)
    for r in range(inst.n_races):
        add = np.zeros(n_cells, dtype=np.int64)
        add[target_cells[r]] = 1
        ll = geometric_log_pmf(o - x - add, inst.eps_race).sum(axis=1)
        vap_add = add if inst.target_adult else 0
        ll = ll + geometric_log_pmf(w - v - vap_add, inst.eps_vap).sum(axis=1)
        loglik[r] = logsumexp(ll, axis=0)
    logpost = np.log(inst.race_prior) + loglik
    post = np.exp(logpost - logpost.max())
    return post / post.sum()


def _cell_likelihood_ratios(inst, window):
    """Per-race ratio Pr(cell outputs | target there) / Pr(... | target elsewhere).

    Enumerated over every (total, vap) output pair in the window. Cells of
    other races and other blocks do not depend on the target's race and
    cancel from the posterior.
    """
    pairs = inst.cell_pairs()
    m = inst.max_count
    outs = np.arange(-window, m + 2 + window)
    o, w = np.meshgrid(outs, outs if inst.target_adult else np.array([0]), indexing="ij")
    o, w = o.ravel()[:, None], w.ravel()[:, None]
    x, v = pairs[None, :, 0], pairs[None, :, 1]
    adult = 1 if inst.target_adult else 0
    base = geometric_log_pmf(o - x, inst.eps_race) + geometric_log_pmf(w - v, inst.eps_vap)
    plus = geometric_log_pmf(o - x - 1, inst.eps_race) + geometric_log_pmf(w - v - adult, inst.eps_vap)
    return np.exp(logsumexp(plus, axis=1) - logsumexp(base, axis=1))


@dataclass(frozen=True)
class BoundCheck:
    epsilon_total: float
    bound: float
    max_ratio: float
    max_inverse_ratio: float
    attribute_epsilon: float

    @property
    def holds(self):
        return self.max_ratio <= self.bound * (1 + 1e-6)

    def to_dict(self):
        return {"epsilon_total": self.epsilon_total, "bound": self.bound, "max_ratio": self.max_ratio,
                "max_inverse_ratio": self.max_inverse_ratio, "holds": self.holds,
                "attribute_epsilon": self.attribute_epsilon,
                "attribute_bound": math.exp(self.attribute_epsilon)}


def mechanism_aware_bound(inst, window=2):
    """Largest posterior/prior (and prior/posterior) ratio over all releases.

    Outputs below 0 or above ``max_count + 1`` give the same cell ratios as
    the window edges, so a window of 2 already covers every release.
    """
    lam = _cell_likelihood_ratios(inst, window)
    lo, hi = float(lam.min()), float(lam.max())
    prior = np.asarray(inst.race_prior)
    # the ratio for race s grows with its own cell ratio and shrinks with the others'
    up = hi / (prior * hi + (1 - prior) * lo)
    down = (prior * lo + (1 - prior) * hi) / lo
    eps = inst.budget.epsilon_total
    return BoundCheck(eps, dp_bound(eps), float(up.max()), float(down.max()), inst.attribute_epsilon)


def exhaustive_bound(inst, window=2):
    """Same as :func:`mechanism_aware_bound` by brute force over joint releases.

    Feasible only for one block with few races and a small ``max_count``.
    """
    m = inst.max_count
    outs = np.arange(-window, m + 2 + window)
    k = inst.n_races * inst.n_blocks
    vap_outs = outs if inst.target_adult else np.array([0])
    prior = np.asarray(inst.race_prior)
    up = down = 0.0
    for race_out in itertools.product(outs, repeat=k):
        for vap_out in itertools.product(vap_outs, repeat=k):
            post = mechanism_aware_posterior(inst, race_out, vap_out)
            up = max(up, float((post / prior).max()))
            down = max(down, float((prior / post).max()))
    eps = inst.budget.epsilon_total
    return BoundCheck(eps, dp_bound(eps), up, down, inst.attribute_epsilon)


# --- report ---------------------------------------------------------------------

@dataclass(frozen=True)
class MethodRow:
    method: str
    error_rate_without_data: float
    error_rate_with_data: float
    max_individual_relative_risk: float
    n_infinite_risk: int
    mean_absolute_risk_without_data: float
    mean_absolute_risk_with_data: float
    n_records: int

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True)
class RiskReport:
    condition: str
    epsilon: float | None
    dp_bound: float | None
    rows: tuple
    mean_relative_risk_by_race: dict
    by_race_method: str
    mechanism_check: dict | None

    def to_dict(self):
        return {
            "condition": self.condition,
            "epsilon": self.epsilon,
            "dp_bound": self.dp_bound,
            "rows": [r.to_dict() for r in self.rows],
            "mean_relative_risk_by_race": {
                "method": self.by_race_method,
                "groups": {RACE_LABELS[r]: g.to_dict() for r, g in sorted(self.mean_relative_risk_by_race.items())},
            },
            "mechanism_check": self.mechanism_check,
            # BISG reads noised counts as truth; its ratios are not DP-bounded.
            "as_is_posterior_dp_guarantee": False,
        }

    def render(self):
        head = ("BISG Method", "Error rate without Census data",
                f"Error rate with {self.condition} data", "Maximum individual relative disclosure risk")
        lines = [" | ".join(head), " | ".join("-" * len(h) for h in head)]
        for r in self.rows:
            lines.append(" | ".join((METHOD_LABELS.get(r.method, r.method),
                                     f"{100 * r.error_rate_without_data:.1f}%",
                                     f"{100 * r.error_rate_with_data:.1f}%",
                                     f"{r.max_individual_relative_risk:.1f}")))
        if self.epsilon is not None:
            lines.append(f"\nepsilon = {self.epsilon:g}; exp(epsilon) = {self.dp_bound:.6g}")
        groups = ", ".join(f"{RACE_LABELS[r]} {g.geometric_mean:.2f}" for r, g in
                           sorted(self.mean_relative_risk_by_race.items()) if g.geometric_mean is not None)
        lines.append(f"Geometric-mean relative risk by race ({self.by_race_method}): {groups}")
        return "\n".join(lines) + "\n"


def build_risk_report(posteriors, epsilon=None, condition="dp", budget=None):
    """Assemble the per-method error/risk table.

    ``posteriors`` maps each name-part method to ``{"without": PosteriorSet,
    "with": PosteriorSet}``. The by-race geometric means use the richest
    method present. When ``epsilon`` is given, the exact mechanism-aware
    bound check is run on a one-block five-race tiny instance at that budget.
    """
    if not posteriors:
        raise ReportError("no methods supplied")
    rows = []
    methods = [m for m in NAME_PARTS if m in posteriors] + sorted(set(posteriors) - set(NAME_PARTS))
    for method in methods:
        conds = posteriors[method]
        for key in ("without", "with"):
            if key not in conds:
                raise ReportError(f"method {method!r} is missing the {key!r} data condition")
        with_data = conds["with"]
        if len(with_data) == 0:
            raise UndefinedStatisticError(f"method {method!r} has no records")
        risks = relative_risks(with_data)
        finite = risks[np.isfinite(risks)]
        rows.append(MethodRow(
            method=method,
            error_rate_without_data=error_rate(conds["without"]),
            error_rate_with_data=error_rate(with_data),
            max_individual_relative_risk=float(finite.max()) if finite.size else INFINITE_RISK,
            n_infinite_risk=int(risks.size - finite.size),
            mean_absolute_risk_without_data=float(absolute_risks(conds["without"]).mean()),
            mean_absolute_risk_with_data=float(absolute_risks(with_data).mean()),
            n_records=len(with_data),
        ))
    known = [m for m in methods if m in NAME_PARTS]
    richest = known[-1] if known else methods[0]
    by_race = mean_relative_risk_by_race(posteriors[richest]["with"])
    check = None
    bound = None
    if epsilon is not None:
        bound = dp_bound(epsilon)
        b = budget if budget is not None else PrivacyBudget(epsilon)
        inst = TinyInstance(n_blocks=1, n_races=N_RACES, max_count=5, target_adult=True, budget=b)
        check = mechanism_aware_bound(inst).to_dict()
        check["instance"] = {"n_blocks": 1, "n_races": N_RACES, "max_count": 5, "target_adult": True}
        worst = max(r.max_individual_relative_risk for r in rows)
        check["as_is_max_relative_risk"] = worst
        check["as_is_exceeds_bound"] = bool(worst > bound)
    return RiskReport(condition, epsilon, bound, tuple(rows), by_race, richest, check)
