"""Differentially private block tables ("TopDown-lite").

Each cell of the race and voting-age race tables receives independent
two-sided geometric noise, negatives are clamped to zero, and the race table
is re-apportioned (largest remainder) so each state's total population is
published exactly. Household counts pass through unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ResourceError
from .rng import RNG_NAME, RNG_VERSION, stream
from .tabulate import NoisedTabulation

MECHANISM_VERSION = "topdown-lite/1"
TABLES = ("race_table", "vap_table")
DEFAULT_EPSILON = 19.61
MAX_OUTCOMES = 10_000


def _default_allocation():
    return {"race_table": 0.5, "vap_table": 0.5}


@dataclass(frozen=True)
class PrivacyBudget:
    epsilon_total: float = DEFAULT_EPSILON
    allocation: dict = field(default_factory=_default_allocation)

    def __post_init__(self):
        eps = self.epsilon_total
        if not (isinstance(eps, (int, float)) and math.isfinite(eps) and eps > 0):
            raise ConfigError(f"must be a positive finite number, got {eps!r}", field="epsilon_total")
        alloc = dict(self.allocation)
        if set(alloc) != set(TABLES):
            raise ConfigError(f"must have exactly the keys {TABLES}", field="allocation")
        if any(not v > 0 for v in alloc.values()):
            raise ConfigError("every share must be > 0", field="allocation")
        if abs(sum(alloc.values()) - 1.0) > 1e-12:
            raise ConfigError(f"shares must sum to 1, got {sum(alloc.values())!r}", field="allocation")
        object.__setattr__(self, "allocation", {k: float(alloc[k]) for k in TABLES})

    def table_epsilon(self, table):
        return self.epsilon_total * self.allocation[table]

    def to_dict(self):
        return {"epsilon_total": self.epsilon_total, "allocation": dict(self.allocation)}


def _check_epsilon(epsilon):
    if not (isinstance(epsilon, (int, float, np.floating)) and epsilon > 0):
        raise ConfigError(f"must be > 0, got {epsilon!r}", field="epsilon")


def geometric_log_pmf(k, epsilon):
    """log P(noise = k) for two-sided geometric noise with alpha = exp(-epsilon)."""
    _check_epsilon(epsilon)
    # log((1 - a) / (1 + a)) without cancellation for small epsilon
    norm = math.log(-math.expm1(-epsilon)) - math.log1p(math.exp(-epsilon))
    return norm - epsilon * np.abs(k)


def geometric_pmf(k, epsilon):
    return np.exp(geometric_log_pmf(k, epsilon))


def geometric_noise(epsilon, rng, size=None):
    """Two-sided geometric noise: P(k) = (1-a)/(1+a) * a**|k|, a = exp(-epsilon).

    Sampled as the difference of two iid geometric variables with success
    probability 1 - a.
    """
    _check_epsilon(epsilon)
    p = -math.expm1(-epsilon)
    noise = rng.geometric(p, size=size) - rng.geometric(p, size=size)
    return int(noise) if size is None else noise.astype(np.int64)


def largest_remainder(weights, total):
    """Integer apportionment of ``total`` proportional to ``weights``.

    Floors of the exact quotas are topped up one unit at a time in order of
    largest remainder, ties going to the lower index. All-zero weights are
    treated as uniform.
    """
    w = np.asarray(weights, dtype=np.int64).ravel()
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    total = int(total)
    if total < 0:
        raise ValueError("total must be non-negative")
    if w.size == 0:
        if total:
            raise ValueError("cannot apportion a positive total over no cells")
        return w.copy()
    s = int(w.sum())
    if s == 0:
        w = np.ones_like(w)
        s = w.size
    scaled = w * total
    base = scaled // s
    rem = scaled % s
    short = total - int(base.sum())
    if short:
        order = np.lexsort((np.arange(w.size), -rem))
        base[order[:short]] += 1
    return base.reshape(np.shape(weights))


def apply_dp_das(t, budget, seed):
    """Release a noised copy of ``t`` under ``budget``."""
    shape = t.race_counts.shape
    race = t.race_counts + geometric_noise(budget.table_epsilon("race_table"),
                                           stream(seed, "dp_das", "race_table"), size=shape)
    vap = t.vap_race_counts + geometric_noise(budget.table_epsilon("vap_table"),
                                              stream(seed, "dp_das", "vap_table"), size=shape)
    race = np.maximum(race, 0)
    vap = np.maximum(vap, 0)

    states = t.geography.state_id
    for s in np.unique(states):
        rows = states == s
        target = int(t.race_counts[rows].sum())
        race[rows] = largest_remainder(race[rows], target)
    vap = np.minimum(vap, race)

    provenance = {
        "mechanism": MECHANISM_VERSION,
        "budget": budget.to_dict(),
        "seed": int(seed),
        "rng": f"{RNG_NAME}/{RNG_VERSION}",
    }
    return NoisedTabulation(t.geography, race, vap, t.n_households.copy(), provenance=provenance)


def verify_dp_ratio(epsilon, counts, outcomes=None):
    """Largest likelihood ratio of the noise-addition step over neighbouring counts.

    Enumerates every count ``c`` with ``c + 1`` also in ``counts`` and every
    outcome ``o``, and returns the max of P(o | c) / P(o | c + 1) and its
    reciprocal. ``outcomes`` defaults to 30 values past each end of ``counts``.
    """
    _check_epsilon(epsilon)
    counts = np.unique(np.asarray(list(counts), dtype=np.int64))
    if counts.size == 0:
        raise ValueError("counts must be non-empty")
    if outcomes is None:
        outcomes = np.arange(counts.min() - 30, counts.max() + 31)
    outcomes = np.asarray(list(outcomes), dtype=np.int64)
    if outcomes.size > MAX_OUTCOMES:
        raise ResourceError(f"{outcomes.size} outcomes exceeds the exhaustive limit of {MAX_OUTCOMES}")
    if counts.size * outcomes.size > 100 * MAX_OUTCOMES:
        raise ResourceError("count domain too large for exhaustive enumeration")
    lower = counts[np.isin(counts + 1, counts)]
    if lower.size == 0:
        raise ValueError("counts contain no neighbouring pair")
    lp_c = geometric_log_pmf(outcomes[None, :] - lower[:, None], epsilon)
    lp_n = geometric_log_pmf(outcomes[None, :] - (lower[:, None] + 1), epsilon)
    return float(np.exp(np.abs(lp_c - lp_n).max()))
