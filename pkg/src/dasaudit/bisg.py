"""Bayesian Improved Surname Geocoding.

A name-only prior ``Pr(race | names)`` is built from the name model, then
updated with the geography likelihood

    g(block | r) = (count(r, block) + lam) / sum_{b in state} (count(r, b) + lam)

read off a released tabulation. Names are conditionally independent of
block given race, so the update is an exact Bayes step under the synthetic
generating model.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.special import softmax

from .errors import ContractError, DegenerateGeographyError, ParseError, UndefinedStatisticError
from .synth_pop.model import MISSING_NAME, N_RACES, RACE_LABELS, Race

NAME_PARTS = ("last", "first+last", "first+middle+last")
DEFAULT_SMOOTHING = 0.5
DEFAULT_POPULATION = "vap"


class VoterRecord(NamedTuple):
    person_id: int
    block_id: int
    surname_id: int
    first_name_id: int
    middle_name_id: int = MISSING_NAME
    true_race: int = -1


def voter_records(vf):
    for row in zip(*(getattr(vf, f).tolist() for f in vf.FIELDS)):
        yield VoterRecord(*row)


def _part_tables(nm, parts):
    if parts not in NAME_PARTS:
        raise ValueError(f"parts must be one of {NAME_PARTS}, got {parts!r}")
    tables = [("surname_id", nm.surname_given_race)]
    if parts != "last":
        tables.append(("first_name_id", nm.first_given_race))
    if parts == "first+middle+last":
        tables.append(("middle_name_id", nm.middle_given_race))
    return tables


def _normalize_log(logp):
    logp = np.asarray(logp, dtype=float)
    top = logp.max(axis=-1, keepdims=True)
    if np.any(~np.isfinite(top)):
        raise DegenerateGeographyError("every race has zero probability")
    return softmax(logp, axis=-1)


def name_priors(vf, nm, parts="last"):
    """Name-only race probabilities for every voter.

    Returns ``(probs, flagged)`` where ``flagged[i]`` marks a record with a
    name id outside the model's vocabulary; such a factor is left out.
    A missing middle name (-1) is left out without flagging.
    """
    n = len(vf.person_id)
    with np.errstate(divide="ignore"):
        logp = np.tile(np.log(nm.national_race_prior), (n, 1))
        flagged = np.zeros(n, dtype=bool)
        for column, table in _part_tables(nm, parts):
            ids = np.asarray(getattr(vf, column))
            present = ids != MISSING_NAME
            known = present & (ids >= 0) & (ids < table.shape[0])
            flagged |= present & ~known
            logp[known] += np.log(table[ids[known]])
    return _normalize_log(logp), flagged


def missing_name_parts(record, nm, parts="last"):
    """Name columns of ``record`` whose ids are not in the model vocabulary."""
    out = []
    for column, table in _part_tables(nm, parts):
        v = getattr(record, column)
        if v != MISSING_NAME and not 0 <= v < table.shape[0]:
            out.append(column)
    return tuple(out)


def name_prior(record, nm, parts="last"):
    """Normalized ``prior[r] * Pr(surname|r) [* Pr(first|r)] [* Pr(middle|r)]``."""
    p = np.array(nm.national_race_prior, dtype=float)
    for column, table in _part_tables(nm, parts):
        v = getattr(record, column)
        if v == MISSING_NAME or not 0 <= v < table.shape[0]:
            continue
        p = p * table[v]
    s = p.sum()
    if s <= 0:
        raise DegenerateGeographyError("name evidence rules out every race")
    return p / s


def geography_likelihood(tab, population=DEFAULT_POPULATION, smoothing=DEFAULT_SMOOTHING):
    """``g[b, r]``: share of race r's (smoothed) state count living in block b."""
    if smoothing < 0:
        raise ValueError("smoothing must be >= 0")
    counts = tab.table(population).astype(float) + smoothing
    g = np.zeros_like(counts)
    states = tab.geography.state_id
    for s in np.unique(states):
        rows = states == s
        denom = counts[rows].sum(axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            g[rows] = np.where(denom > 0, counts[rows] / denom, 0.0)
    return g


def _update(prior, g):
    post = np.asarray(prior, dtype=float) * g
    s = post.sum(axis=-1, keepdims=True)
    if np.any(s <= 0):
        raise DegenerateGeographyError("block has no smoothed mass for any race with positive prior")
    return post / s


def bisg_posterior(prior, tab, block_id, population=DEFAULT_POPULATION, smoothing=DEFAULT_SMOOTHING):
    """Posterior race probabilities for one person living in ``block_id``."""
    prior = np.asarray(prior, dtype=float)
    if prior.shape != (N_RACES,) or np.any(prior < 0) or abs(prior.sum() - 1) > 1e-9:
        raise ContractError("prior must be a probability vector over the 5 races")
    row = tab.geography.rows_of([block_id])[0]
    return _update(prior, geography_likelihood(tab, population, smoothing)[row])


def bisg_posteriors(priors, block_ids, tab, population=DEFAULT_POPULATION, smoothing=DEFAULT_SMOOTHING):
    g = geography_likelihood(tab, population, smoothing)
    return _update(priors, g[tab.geography.rows_of(block_ids)])


def classify_map(posterior):
    """Most probable race; exact ties go to the lowest race code."""
    return Race(int(np.argmax(np.asarray(posterior))))


@dataclass(frozen=True)
class PosteriorRecord:
    person_id: int
    prior: np.ndarray
    posterior: np.ndarray
    true_race: int | None = None
    block_id: int | None = None
    flagged: bool = False

    @property
    def map_race(self):
        return classify_map(self.posterior)


@dataclass(frozen=True, eq=False)
class PosteriorSet:
    """Column-wise store of PosteriorRecords for one method and data condition."""

    person_id: np.ndarray
    block_id: np.ndarray
    prior: np.ndarray
    posterior: np.ndarray
    true_race: np.ndarray
    flagged: np.ndarray

    def __len__(self):
        return len(self.person_id)

    @property
    def map_race(self):
        return np.argmax(self.posterior, axis=1) if len(self) else np.zeros(0, dtype=np.int64)

    def records(self):
        for i in range(len(self)):
            t = int(self.true_race[i])
            yield PosteriorRecord(int(self.person_id[i]), self.prior[i], self.posterior[i],
                                  None if t < 0 else t, int(self.block_id[i]), bool(self.flagged[i]))

    @classmethod
    def from_records(cls, records):
        records = list(records)
        return cls(
            person_id=np.array([r.person_id for r in records], dtype=np.int64),
            block_id=np.array([-1 if r.block_id is None else r.block_id for r in records], dtype=np.int64),
            prior=np.array([r.prior for r in records], dtype=float).reshape(-1, N_RACES),
            posterior=np.array([r.posterior for r in records], dtype=float).reshape(-1, N_RACES),
            true_race=np.array([-1 if r.true_race is None else r.true_race for r in records], dtype=np.int64),
            flagged=np.array([r.flagged for r in records], dtype=bool),
        )


def run_bisg(vf, nm, tab=None, parts="last", population=DEFAULT_POPULATION, smoothing=DEFAULT_SMOOTHING):
    """Priors from names and, when ``tab`` is given, posteriors from the release.

    Without a tabulation the posterior equals the name-only prior.
    """
    prior, flagged = name_priors(vf, nm, parts)
    post = prior.copy() if tab is None else bisg_posteriors(prior, vf.block_id, tab, population, smoothing)
    return PosteriorSet(np.asarray(vf.person_id).copy(), np.asarray(vf.block_id).copy(), prior, post,
                        np.asarray(vf.true_race).copy(), flagged)


def error_rate(predictions):
    """Fraction of records whose MAP race differs from the true race."""
    if isinstance(predictions, PosteriorSet):
        true, pred = predictions.true_race, predictions.map_race
    else:
        recs = list(predictions)
        true = np.array([-1 if r.true_race is None else r.true_race for r in recs], dtype=np.int64)
        pred = np.array([int(r.map_race) for r in recs], dtype=np.int64)
    if true.size == 0:
        raise UndefinedStatisticError("error rate of an empty prediction set")
    if np.any(true < 0):
        raise ContractError("every record needs a true race to score an error rate")
    return float(np.mean(pred != true))


_LABELS = [label.lower() for label in RACE_LABELS]
POSTERIOR_COLUMNS = (("person_id", "block_id") + tuple(f"prior_{c}" for c in _LABELS)
                     + tuple(f"posterior_{c}" for c in _LABELS) + ("map_race", "true_race", "flagged"))


def _fmt(x):
    return format(float(x), ".17g")


def save_posteriors(ps, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(POSTERIOR_COLUMNS)
        mp = ps.map_race
        for i in range(len(ps)):
            t = int(ps.true_race[i])
            w.writerow([int(ps.person_id[i]), int(ps.block_id[i]),
                        *map(_fmt, ps.prior[i]), *map(_fmt, ps.posterior[i]),
                        int(mp[i]), "" if t < 0 else t, int(ps.flagged[i])])
    return Path(path)


def _parse_field(name, cell, path, line):
    try:
        if name.startswith(("prior_", "posterior_")):
            return float(cell)
        if name == "true_race" and not cell.strip():
            return -1
        return int(cell)
    except ValueError:
        raise ParseError(f"bad value {cell!r}", path=path, line=line, column=name) from None


def load_posteriors(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing input file: {path}")
    ints, priors, posts = [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != POSTERIOR_COLUMNS:
            raise ParseError(f"expected header {','.join(POSTERIOR_COLUMNS)}", path=path, line=1)
        for row in reader:
            if not row:
                continue
            line = reader.line_num
            if len(row) != len(POSTERIOR_COLUMNS):
                raise ParseError(f"expected {len(POSTERIOR_COLUMNS)} fields, got {len(row)}", path=path, line=line)
            v = {name: _parse_field(name, cell, path, line) for name, cell in zip(POSTERIOR_COLUMNS, row)}
            ints.append((v["person_id"], v["block_id"], v["true_race"], v["flagged"]))
            priors.append([v[f"prior_{c}"] for c in _LABELS])
            posts.append([v[f"posterior_{c}"] for c in _LABELS])
    arr = np.array(ints, dtype=np.int64).reshape(-1, 4)
    return PosteriorSet(arr[:, 0], arr[:, 1], np.array(priors, dtype=float).reshape(-1, N_RACES),
                        np.array(posts, dtype=float).reshape(-1, N_RACES), arr[:, 2], arr[:, 3].astype(bool))
