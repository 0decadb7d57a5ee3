"""Block-level race, voting-age race and household tables.

A :class:`TabulationSet` is the release surface shared by both disclosure
avoidance mechanisms and by BISG. Counts are stored as ``(n_blocks, 5)``
integer arrays aligned with ``geography.block_id``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ComparabilityError, IntegrityError, ParseError
from .synth_pop.io import read_int_csv, read_json, write_json
from .synth_pop.model import N_RACES, RACE_LABELS, Geography

LEVELS = ("tract", "county", "state")
RACE_COLUMNS = tuple(label.lower() for label in RACE_LABELS)
VAP_COLUMNS = tuple(f"vap_{c}" for c in RACE_COLUMNS)
CSV_COLUMNS = ("block_id",) + RACE_COLUMNS + VAP_COLUMNS + ("n_households",)


@dataclass(frozen=True)
class BlockTable:
    block_id: int
    race_counts: tuple
    vap_race_counts: tuple
    n_households: int

    def total_population(self):
        return sum(self.race_counts)

    def voting_age_population(self):
        return sum(self.vap_race_counts)


def _counts(a, shape, name):
    arr = np.asarray(a)
    if arr.shape != shape:
        raise IntegrityError(f"{name}: expected shape {shape}, got {arr.shape}")
    if arr.dtype.kind == "f":
        if not np.all(arr == np.round(arr)):
            raise IntegrityError(f"{name}: counts must be integers")
    out = arr.astype(np.int64, copy=True)
    if np.any(out < 0):
        raise IntegrityError(f"{name}: counts must be non-negative")
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class TabulationSet:
    geography: Geography
    race_counts: np.ndarray
    vap_race_counts: np.ndarray
    n_households: np.ndarray

    def __post_init__(self):
        n = self.geography.n_blocks
        object.__setattr__(self, "race_counts", _counts(self.race_counts, (n, N_RACES), "race_counts"))
        object.__setattr__(self, "vap_race_counts",
                           _counts(self.vap_race_counts, (n, N_RACES), "vap_race_counts"))
        object.__setattr__(self, "n_households", _counts(self.n_households, (n,), "n_households"))
        if np.any(self.vap_race_counts > self.race_counts):
            raise IntegrityError("voting-age count exceeds total count in some cell")

    @property
    def block_ids(self):
        return self.geography.block_id

    @property
    def n_blocks(self):
        return self.geography.n_blocks

    def total_population(self):
        """Per-block total population."""
        return self.race_counts.sum(axis=1)

    def voting_age_population(self):
        return self.vap_race_counts.sum(axis=1)

    def table(self, population):
        """The race table used for ``population`` in {"total", "vap"}."""
        if population == "total":
            return self.race_counts
        if population == "vap":
            return self.vap_race_counts
        raise ValueError(f"population must be 'total' or 'vap', got {population!r}")

    def block(self, block_id):
        i = self.geography.block_index()[int(block_id)]
        return BlockTable(int(block_id), tuple(int(v) for v in self.race_counts[i]),
                          tuple(int(v) for v in self.vap_race_counts[i]), int(self.n_households[i]))

    def aggregate(self, level):
        """Totals per unit at ``level``: {unit_id: {...}} summed over its blocks."""
        units = self.geography.level(level)
        out = {}
        for u in np.unique(units):
            m = units == u
            out[int(u)] = {
                "total_population": int(self.race_counts[m].sum()),
                "voting_age_population": int(self.vap_race_counts[m].sum()),
                "households": int(self.n_households[m].sum()),
                "race_counts": self.race_counts[m].sum(axis=0).tolist(),
                "vap_race_counts": self.vap_race_counts[m].sum(axis=0).tolist(),
            }
        return out

    def aggregates(self):
        return {level: {str(k): v for k, v in self.aggregate(level).items()} for level in LEVELS}

    def state_race_totals(self):
        """Race totals with one row per state, in ascending state id order."""
        _, inv = np.unique(self.geography.state_id, return_inverse=True)
        out = np.zeros((inv.max() + 1, N_RACES), dtype=np.int64)
        np.add.at(out, inv, self.race_counts)
        return out

    def equals(self, other):
        return (self.geography.equals(other.geography)
                and np.array_equal(self.race_counts, other.race_counts)
                and np.array_equal(self.vap_race_counts, other.vap_race_counts)
                and np.array_equal(self.n_households, other.n_households))


@dataclass(frozen=True, eq=False)
class NoisedTabulation(TabulationSet):
    """A tabulation released by a noise mechanism, with its provenance."""

    provenance: dict = field(default_factory=dict)


def tabulate(md):
    """Count persons by block and race, adults by block and race, and households."""
    geo = md.geography
    n = geo.n_blocks
    person_rows = geo.rows_of(md.person_block())
    cell = person_rows * N_RACES + md.race
    race = np.bincount(cell, minlength=n * N_RACES).reshape(n, N_RACES)
    vap = np.bincount(cell[md.is_adult], minlength=n * N_RACES).reshape(n, N_RACES)
    hh_rows = geo.rows_of(md.household_block)
    households = np.bincount(hh_rows, minlength=n)
    return TabulationSet(geo, race, vap, households)


@dataclass(frozen=True)
class DistanceReport:
    """Per-block absolute differences between two tabulations."""

    block_ids: np.ndarray
    total_abs: np.ndarray
    race_l1: np.ndarray
    vap_total_abs: np.ndarray
    vap_l1: np.ndarray
    households_abs: np.ndarray

    @property
    def total_l1(self):
        return int(self.total_abs.sum())

    @property
    def mean_total_l1(self):
        return float(self.total_abs.mean())

    @property
    def max_abs_deviation(self):
        return int(self.total_abs.max())

    @property
    def is_zero(self):
        return not any(a.any() for a in (self.total_abs, self.race_l1, self.vap_total_abs,
                                          self.vap_l1, self.households_abs))

    def to_dict(self):
        return {
            "total_population_l1": self.total_l1,
            "mean_block_total_population_l1": self.mean_total_l1,
            "max_abs_deviation": self.max_abs_deviation,
            "race_l1": int(self.race_l1.sum()),
            "vap_total_l1": int(self.vap_total_abs.sum()),
            "vap_race_l1": int(self.vap_l1.sum()),
            "households_l1": int(self.households_abs.sum()),
        }


def check_comparable(a, b):
    if not np.array_equal(a.block_ids, b.block_ids):
        raise ComparabilityError("tabulations cover different block sets")


def table_distance(a, b):
    check_comparable(a, b)
    d_race = a.race_counts - b.race_counts
    d_vap = a.vap_race_counts - b.vap_race_counts
    return DistanceReport(
        block_ids=a.block_ids.copy(),
        total_abs=np.abs(d_race.sum(axis=1)),
        race_l1=np.abs(d_race).sum(axis=1),
        vap_total_abs=np.abs(d_vap.sum(axis=1)),
        vap_l1=np.abs(d_vap).sum(axis=1),
        households_abs=np.abs(a.n_households - b.n_households),
    )


def _sidecar(path, kind):
    path = Path(path)
    return path.with_name(f"{path.stem}.{kind}.json")


def save_tabulation(tab, path):
    """Write the block CSV plus ``<stem>.aggregates.json`` (and provenance if noised)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for i, b in enumerate(tab.block_ids):
            w.writerow([int(b), *tab.race_counts[i].tolist(), *tab.vap_race_counts[i].tolist(),
                        int(tab.n_households[i])])
    write_json(_sidecar(path, "aggregates"),
               {"geography": tab.geography.to_dict(), "aggregates": tab.aggregates()})
    if isinstance(tab, NoisedTabulation):
        write_json(_sidecar(path, "provenance"), tab.provenance)
    return path


def load_tabulation(path):
    path = Path(path)
    side = read_json(_sidecar(path, "aggregates"))
    geo = Geography.from_dict(side["geography"])
    cols = read_int_csv(path, CSV_COLUMNS)
    if not np.array_equal(cols["block_id"], geo.block_id):
        raise ParseError("block_id column does not match the geography sidecar", path=path)
    race = np.stack([cols[c] for c in RACE_COLUMNS], axis=1)
    vap = np.stack([cols[c] for c in VAP_COLUMNS], axis=1)
    prov_path = _sidecar(path, "provenance")
    if prov_path.exists():
        tab = NoisedTabulation(geo, race, vap, cols["n_households"], provenance=read_json(prov_path))
    else:
        tab = TabulationSet(geo, race, vap, cols["n_households"])
    if tab.aggregates() != side["aggregates"]:
        raise IntegrityError(f"{path}: aggregates sidecar disagrees with block rows")
    return tab
