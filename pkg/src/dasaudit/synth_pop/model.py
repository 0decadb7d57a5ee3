"""Core microdata types: races, geography, name model, persons and households."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, IntegrityError

NORMALIZATION_TOL = 1e-12
MISSING_NAME = -1


class Race(enum.IntEnum):
    WHITE = 0
    BLACK = 1
    HISPANIC = 2
    ASIAN = 3
    OTHER = 4

    @property
    def label(self):
        return RACE_LABELS[self]


RACE_LABELS = ("White", "Black", "Hispanic", "Asian", "Other")
N_RACES = len(Race)


def _frozen(a, dtype=np.int64):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Geography:
    """Block -> tract -> county -> state containment table.

    Tract, county and state ids are global (not relative to their parent), and
    each must map to exactly one parent.
    """

    block_id: np.ndarray
    tract_id: np.ndarray
    county_id: np.ndarray
    state_id: np.ndarray

    def __post_init__(self):
        arrays = [_frozen(getattr(self, f)) for f in ("block_id", "tract_id", "county_id", "state_id")]
        for name, arr in zip(("block_id", "tract_id", "county_id", "state_id"), arrays):
            object.__setattr__(self, name, arr)
        n = len(self.block_id)
        if n == 0:
            raise IntegrityError("geography has no blocks")
        if any(len(a) != n for a in arrays):
            raise IntegrityError("geography columns have different lengths")
        if len(np.unique(self.block_id)) != n:
            raise IntegrityError("duplicate block_id in geography")
        for child, parent, cname in ((self.tract_id, self.county_id, "tract"),
                                     (self.county_id, self.state_id, "county")):
            pairs = np.unique(np.stack([child, parent], axis=1), axis=0)
            if len(np.unique(pairs[:, 0])) != len(pairs):
                raise IntegrityError(f"a {cname} spans more than one parent unit")

    @property
    def n_blocks(self):
        return len(self.block_id)

    def level(self, name):
        """Unit id per block at ``name`` in {block, tract, county, state}."""
        try:
            return {"block": self.block_id, "tract": self.tract_id,
                    "county": self.county_id, "state": self.state_id}[name]
        except KeyError:
            raise ConfigError(f"unknown geography level {name!r}", field="level") from None

    def block_index(self):
        return {int(b): i for i, b in enumerate(self.block_id)}

    def rows_of(self, block_ids):
        """Row positions of ``block_ids`` in this geography's block order."""
        block_ids = np.asarray(block_ids, dtype=np.int64)
        order = np.argsort(self.block_id, kind="stable")
        pos = np.searchsorted(self.block_id[order], block_ids)
        pos = np.clip(pos, 0, len(order) - 1)
        rows = order[pos]
        if block_ids.size and not np.array_equal(self.block_id[rows], block_ids):
            raise IntegrityError("reference to a block missing from the geography")
        return rows

    def equals(self, other):
        return all(np.array_equal(getattr(self, f), getattr(other, f))
                   for f in ("block_id", "tract_id", "county_id", "state_id"))

    def to_dict(self):
        return {
            "blocks": [
                {"block_id": int(b), "tract_id": int(t), "county_id": int(c), "state_id": int(s)}
                for b, t, c, s in zip(self.block_id, self.tract_id, self.county_id, self.state_id)
            ]
        }

    @classmethod
    def from_dict(cls, doc):
        try:
            rows = doc["blocks"]
            return cls(*(np.array([int(r[k]) for r in rows], dtype=np.int64)
                         for k in ("block_id", "tract_id", "county_id", "state_id")))
        except (KeyError, TypeError, ValueError) as exc:
            raise IntegrityError(f"malformed geography document: {exc}") from exc

    @classmethod
    def regular(cls, n_states=1, counties_per_state=1, tracts_per_county=1, blocks_per_tract=1):
        """Evenly nested geography with consecutive integer ids at every level."""
        for name, v in (("n_states", n_states), ("counties_per_state", counties_per_state),
                        ("tracts_per_county", tracts_per_county), ("blocks_per_tract", blocks_per_tract)):
            if int(v) < 1:
                raise ConfigError("must be >= 1 (empty geography)", field=name)
        n = n_states * counties_per_state * tracts_per_county * blocks_per_tract
        blocks = np.arange(n)
        tracts = blocks // blocks_per_tract
        counties = tracts // tracts_per_county
        states = counties // counties_per_state
        return cls(blocks, tracts, counties, states)


def _check_distribution(p, name, axis=0):
    p = np.asarray(p, dtype=float)
    if p.size == 0:
        raise ConfigError("empty probability table", field=name)
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise ConfigError("probabilities must be finite and non-negative", field=name)
    sums = p.sum(axis=axis)
    if np.any(np.abs(sums - 1.0) > NORMALIZATION_TOL):
        raise ConfigError(f"probabilities must sum to 1 (got {np.atleast_1d(sums).tolist()})", field=name)
    return p


@dataclass(frozen=True, eq=False)
class NameModel:
    """Race-conditional name frequencies plus a national race prior.

    Each ``*_given_race`` table has shape ``(vocabulary size, N_RACES)`` and
    every column is a distribution over names.
    """

    surname_given_race: np.ndarray
    first_given_race: np.ndarray
    middle_given_race: np.ndarray
    national_race_prior: np.ndarray
    surname_labels: tuple = field(default=())

    def __post_init__(self):
        for name in ("surname_given_race", "first_given_race", "middle_given_race"):
            table = np.array(getattr(self, name), dtype=float)
            if table.ndim != 2 or table.shape[1] != N_RACES:
                raise ConfigError(f"expected shape (n, {N_RACES}), got {table.shape}", field=name)
            _check_distribution(table, name, axis=0)
            table.setflags(write=False)
            object.__setattr__(self, name, table)
        prior = _check_distribution(np.array(self.national_race_prior, dtype=float), "national_race_prior")
        if prior.shape != (N_RACES,):
            raise ConfigError(f"expected {N_RACES} entries", field="national_race_prior")
        prior.setflags(write=False)
        object.__setattr__(self, "national_race_prior", prior)
        object.__setattr__(self, "surname_labels", tuple(self.surname_labels))

    @property
    def n_surnames(self):
        return self.surname_given_race.shape[0]

    @property
    def n_first(self):
        return self.first_given_race.shape[0]

    @property
    def n_middle(self):
        return self.middle_given_race.shape[0]

    def equals(self, other):
        return (np.array_equal(self.surname_given_race, other.surname_given_race)
                and np.array_equal(self.first_given_race, other.first_given_race)
                and np.array_equal(self.middle_given_race, other.middle_given_race)
                and np.array_equal(self.national_race_prior, other.national_race_prior)
                and self.surname_labels == other.surname_labels)

    def to_dict(self):
        # json writes floats with repr(), which round-trips all 17 digits
        doc = {
            "races": list(RACE_LABELS),
            "national_race_prior": self.national_race_prior.tolist(),
            "surname_given_race": self.surname_given_race.tolist(),
            "first_given_race": self.first_given_race.tolist(),
            "middle_given_race": self.middle_given_race.tolist(),
        }
        if self.surname_labels:
            doc["surname_labels"] = list(self.surname_labels)
        return doc

    @classmethod
    def from_dict(cls, doc):
        try:
            return cls(
                surname_given_race=np.array(doc["surname_given_race"], dtype=float),
                first_given_race=np.array(doc["first_given_race"], dtype=float),
                middle_given_race=np.array(doc["middle_given_race"], dtype=float),
                national_race_prior=np.array(doc["national_race_prior"], dtype=float),
                surname_labels=tuple(doc.get("surname_labels", ())),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed name model document: {exc}", field="name_model") from exc


def _columns(rows):
    """Turn a {name: per-race weights} listing into a column-normalized table."""
    table = np.array(rows, dtype=float)
    return table / table.sum(axis=0, keepdims=True)


def demo_name_model():
    """Five-surname illustration table used in documentation examples.

    The numbers are illustrative, not Census figures.
    """
    surnames = ("Smith", "Washington", "Garcia", "Nguyen", "Locklear")
    return NameModel(
        surname_given_race=_columns([
            # White Black Hispanic Asian Other
            [0.70, 0.30, 0.05, 0.02, 0.20],
            [0.05, 0.55, 0.01, 0.01, 0.05],
            [0.15, 0.05, 0.85, 0.07, 0.10],
            [0.02, 0.02, 0.02, 0.85, 0.05],
            [0.08, 0.08, 0.07, 0.05, 0.60],
        ]),
        first_given_race=_columns([
            [0.50, 0.20, 0.20, 0.30, 0.30],
            [0.30, 0.60, 0.10, 0.20, 0.30],
            [0.20, 0.20, 0.70, 0.50, 0.40],
        ]),
        middle_given_race=_columns([
            [0.60, 0.50, 0.30, 0.40, 0.50],
            [0.40, 0.50, 0.70, 0.60, 0.50],
        ]),
        national_race_prior=np.array([0.60, 0.13, 0.18, 0.06, 0.03]),
        surname_labels=surnames,
    )


@dataclass(frozen=True, eq=False)
class Microdata:
    """Confidential person/household records with their geography.

    Stored column-wise; all arrays are read-only. ``middle_name_id`` uses -1
    for a missing middle name.
    """

    geography: Geography
    name_model: NameModel
    household_id: np.ndarray
    household_block: np.ndarray
    n_adults: np.ndarray
    n_children: np.ndarray
    person_id: np.ndarray
    person_household: np.ndarray
    race: np.ndarray
    is_adult: np.ndarray
    surname_id: np.ndarray
    first_name_id: np.ndarray
    middle_name_id: np.ndarray

    HOUSEHOLD_FIELDS = ("household_id", "household_block", "n_adults", "n_children")
    PERSON_FIELDS = ("person_id", "person_household", "race", "is_adult",
                     "surname_id", "first_name_id", "middle_name_id")

    def __post_init__(self):
        for name in self.HOUSEHOLD_FIELDS + self.PERSON_FIELDS:
            dtype = bool if name == "is_adult" else np.int64
            object.__setattr__(self, name, _frozen(getattr(self, name), dtype))
        self.validate()

    @property
    def n_households(self):
        return len(self.household_id)

    @property
    def n_persons(self):
        return len(self.person_id)

    def validate(self):
        hh_cols = [getattr(self, f) for f in self.HOUSEHOLD_FIELDS]
        p_cols = [getattr(self, f) for f in self.PERSON_FIELDS]
        if len({len(c) for c in hh_cols}) > 1:
            raise IntegrityError("household columns have different lengths")
        if len({len(c) for c in p_cols}) > 1:
            raise IntegrityError("person columns have different lengths")
        if len(np.unique(self.household_id)) != self.n_households:
            raise IntegrityError("duplicate household_id")
        if len(np.unique(self.person_id)) != self.n_persons:
            raise IntegrityError("duplicate person_id")
        missing_blocks = np.setdiff1d(self.household_block, self.geography.block_id)
        if missing_blocks.size:
            raise IntegrityError(f"household references missing block {int(missing_blocks[0])}")
        if np.any(self.n_adults < 0) or np.any(self.n_children < 0):
            raise IntegrityError("negative household member count")
        if np.any(self.n_adults + self.n_children < 1):
            raise IntegrityError("household with no members")
        missing_hh = np.setdiff1d(self.person_household, self.household_id)
        if missing_hh.size:
            raise IntegrityError(f"person references missing household {int(missing_hh[0])}")
        if np.any((self.race < 0) | (self.race >= N_RACES)):
            raise IntegrityError("race code outside 0..4")
        idx = self.household_positions()
        adults = np.bincount(idx, weights=self.is_adult, minlength=self.n_households).astype(np.int64)
        children = np.bincount(idx, weights=~self.is_adult, minlength=self.n_households).astype(np.int64)
        if not np.array_equal(adults, self.n_adults) or not np.array_equal(children, self.n_children):
            bad = np.flatnonzero((adults != self.n_adults) | (children != self.n_children))[0]
            raise IntegrityError(
                f"household {int(self.household_id[bad])} member counts disagree with person records")
        nm = self.name_model
        for col, size, name in ((self.surname_id, nm.n_surnames, "surname_id"),
                                (self.first_name_id, nm.n_first, "first_name_id")):
            if np.any((col < 0) | (col >= size)):
                raise IntegrityError(f"{name} outside the name model vocabulary")
        mid = self.middle_name_id
        if np.any((mid < MISSING_NAME) | (mid >= nm.n_middle)):
            raise IntegrityError("middle_name_id outside the name model vocabulary")

    def household_positions(self):
        """Row index into the household columns for every person."""
        order = np.argsort(self.household_id, kind="stable")
        pos = np.searchsorted(self.household_id[order], self.person_household)
        return order[pos]

    def person_block(self):
        return self.household_block[self.household_positions()]

    def with_household_blocks(self, household_block):
        """Copy with households relocated; person records are untouched."""
        kwargs = {f: getattr(self, f) for f in self.HOUSEHOLD_FIELDS + self.PERSON_FIELDS}
        kwargs["household_block"] = household_block
        return Microdata(geography=self.geography, name_model=self.name_model, **kwargs)

    def equals(self, other):
        if not isinstance(other, Microdata):
            return False
        return (self.geography.equals(other.geography)
                and self.name_model.equals(other.name_model)
                and all(np.array_equal(getattr(self, f), getattr(other, f))
                        for f in self.HOUSEHOLD_FIELDS + self.PERSON_FIELDS))


@dataclass(frozen=True, eq=False)
class VoterFile:
    """Public registration records: a subset of adults with self-reported race."""

    person_id: np.ndarray
    block_id: np.ndarray
    surname_id: np.ndarray
    first_name_id: np.ndarray
    middle_name_id: np.ndarray
    true_race: np.ndarray

    FIELDS = ("person_id", "block_id", "surname_id", "first_name_id", "middle_name_id", "true_race")

    def __post_init__(self):
        for name in self.FIELDS:
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        if len({len(getattr(self, f)) for f in self.FIELDS}) > 1:
            raise IntegrityError("voter file columns have different lengths")

    def __len__(self):
        return len(self.person_id)

    def equals(self, other):
        return all(np.array_equal(getattr(self, f), getattr(other, f)) for f in self.FIELDS)

    def subset(self, mask):
        return VoterFile(*(getattr(self, f)[mask] for f in self.FIELDS))
