"""Seeded synthetic population generator and voter-file extraction."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..errors import ConfigError
from ..rng import stream
from .model import (
    MISSING_NAME,
    N_RACES,
    Geography,
    Microdata,
    NameModel,
    VoterFile,
)

DEFAULT_RACE_SHARES = (0.60, 0.20, 0.12, 0.05, 0.03)


def _pmf(values, name):
    p = np.asarray(values, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ConfigError("must be a non-empty list of probabilities", field=name)
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ConfigError("probabilities must be finite and non-negative", field=name)
    if abs(p.sum() - 1.0) > 1e-9:
        raise ConfigError(f"probabilities must sum to 1 (got {p.sum()!r})", field=name)
    return p / p.sum()


@dataclass(frozen=True)
class GenerationConfig:
    """Shape of a synthetic population.

    Count distributions (``households_per_block``, ``adults_pmf``,
    ``children_pmf``) are probability vectors indexed by the count, so
    ``[0, 1]`` means "always exactly one".

    Block race mixtures are drawn from ``Dirichlet(segregation * race_shares)``
    unless ``block_mixtures`` lists one explicitly per block; small
    ``segregation`` values give homogeneous blocks.
    """

    n_states: int = 1
    counties_per_state: int = 1
    tracts_per_county: int = 5
    blocks_per_tract: int = 10
    households_per_block: Sequence[float] = (0.0,) * 8 + (0.1, 0.1, 0.1, 0.1, 0.2, 0.1, 0.1, 0.1, 0.1)
    adults_pmf: Sequence[float] = (0.0, 0.35, 0.5, 0.15)
    children_pmf: Sequence[float] = (0.55, 0.2, 0.15, 0.1)
    race_shares: Sequence[float] = DEFAULT_RACE_SHARES
    segregation: float = 1.0
    block_mixtures: Optional[Sequence[Sequence[float]]] = None
    n_surnames: int = 200
    n_first: int = 100
    n_middle: int = 50
    surname_concentration: float = 0.3
    first_concentration: float = 1.0
    middle_concentration: float = 3.0
    middle_name_rate: float = 1.0
    name_model: Optional[NameModel] = None

    def __post_init__(self):
        for name in ("households_per_block", "adults_pmf", "children_pmf", "race_shares"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        if self.block_mixtures is not None:
            object.__setattr__(self, "block_mixtures",
                               tuple(tuple(float(v) for v in row) for row in self.block_mixtures))
        for name in ("n_states", "counties_per_state", "tracts_per_county", "blocks_per_tract"):
            if int(getattr(self, name)) < 1:
                raise ConfigError("must be >= 1 (empty geography)", field=name)
        hpb = _pmf(self.households_per_block, "households_per_block")
        adults = _pmf(self.adults_pmf, "adults_pmf")
        children = _pmf(self.children_pmf, "children_pmf")
        if adults[0] == 1.0 and children[0] == 1.0:
            raise ConfigError("every household would be empty", field="adults_pmf")
        shares = _pmf(self.race_shares, "race_shares")
        if shares.shape != (N_RACES,):
            raise ConfigError(f"expected {N_RACES} entries", field="race_shares")
        if not self.segregation > 0:
            raise ConfigError("must be > 0", field="segregation")
        if self.block_mixtures is not None:
            mix = np.asarray(self.block_mixtures, dtype=float)
            if mix.shape != (self.n_blocks, N_RACES):
                raise ConfigError(f"expected shape ({self.n_blocks}, {N_RACES}), got {mix.shape}",
                                  field="block_mixtures")
            if np.any(mix < 0) or np.any(np.abs(mix.sum(axis=1) - 1.0) > 1e-9):
                raise ConfigError("every block mixture must be non-negative and sum to 1",
                                  field="block_mixtures")
        for name in ("n_surnames", "n_first", "n_middle"):
            if int(getattr(self, name)) < 1:
                raise ConfigError("must be >= 1", field=name)
        for name in ("surname_concentration", "first_concentration", "middle_concentration"):
            if not getattr(self, name) > 0:
                raise ConfigError("must be > 0", field=name)
        if not 0.0 <= self.middle_name_rate <= 1.0:
            raise ConfigError("must lie in [0, 1]", field="middle_name_rate")
        if hpb.size == 1 and hpb[0] == 1.0:
            raise ConfigError("every block would be empty", field="households_per_block")

    @property
    def n_blocks(self):
        return self.n_states * self.counties_per_state * self.tracts_per_county * self.blocks_per_tract

    def geography(self):
        return Geography.regular(self.n_states, self.counties_per_state,
                                 self.tracts_per_county, self.blocks_per_tract)

    @classmethod
    def from_dict(cls, doc):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown keys {sorted(unknown)}", field="generation")
        doc = dict(doc)
        if isinstance(doc.get("name_model"), dict):
            doc["name_model"] = NameModel.from_dict(doc["name_model"])
        return cls(**doc)

    def to_dict(self):
        out = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, NameModel):
                value = value.to_dict()
            elif isinstance(value, tuple):
                value = list(value)
            out[f.name] = value
        return out


def sample_name_model(config, seed):
    """Dirichlet-sampled Pr(name | race) tables with the configured vocabularies."""
    rng = stream(seed, "synth_pop", "name_model")
    tables = []
    for size, conc in ((config.n_surnames, config.surname_concentration),
                       (config.n_first, config.first_concentration),
                       (config.n_middle, config.middle_concentration)):
        draws = rng.dirichlet(np.full(size, conc), size=N_RACES).T
        # Dirichlet draws with small concentration can underflow to exact zeros
        # in every race; keep the vocabulary fully supported.
        draws = np.maximum(draws, 1e-300)
        tables.append(draws / draws.sum(axis=0, keepdims=True))
    return NameModel(tables[0], tables[1], tables[2],
                     national_race_prior=_pmf(config.race_shares, "race_shares"))


def _sample_counts(rng, pmf, n):
    return rng.choice(len(pmf), size=n, p=pmf)


def generate_population(config, seed):
    """Draw a synthetic population.

    Identical ``(config, seed)`` always produces identical arrays.
    """
    geo = config.geography()
    nm = config.name_model if config.name_model is not None else sample_name_model(config, seed)
    shares = _pmf(config.race_shares, "race_shares")
    n_blocks = geo.n_blocks

    if config.block_mixtures is not None:
        mix = np.asarray(config.block_mixtures, dtype=float)
        mix = mix / mix.sum(axis=1, keepdims=True)
    else:
        mix = stream(seed, "synth_pop", "mixture").dirichlet(config.segregation * shares, size=n_blocks)

    hh_per_block = _sample_counts(stream(seed, "synth_pop", "households"),
                                  _pmf(config.households_per_block, "households_per_block"), n_blocks)
    household_block = np.repeat(geo.block_id, hh_per_block)
    n_households = len(household_block)

    size_rng = stream(seed, "synth_pop", "household_size")
    adults_pmf = _pmf(config.adults_pmf, "adults_pmf")
    children_pmf = _pmf(config.children_pmf, "children_pmf")
    n_adults = _sample_counts(size_rng, adults_pmf, n_households)
    n_children = _sample_counts(size_rng, children_pmf, n_households)
    empty = np.flatnonzero(n_adults + n_children == 0)
    while empty.size:
        n_adults[empty] = _sample_counts(size_rng, adults_pmf, empty.size)
        n_children[empty] = _sample_counts(size_rng, children_pmf, empty.size)
        empty = empty[n_adults[empty] + n_children[empty] == 0]

    sizes = n_adults + n_children
    person_household = np.repeat(np.arange(n_households), sizes)
    n_persons = len(person_household)
    # adults first within each household
    start = np.repeat(np.cumsum(sizes) - sizes, sizes)
    rank = np.arange(n_persons) - start
    is_adult = rank < np.repeat(n_adults, sizes)
    person_block = household_block[person_household]

    race = np.empty(n_persons, dtype=np.int64)
    race_rng = stream(seed, "synth_pop", "race")
    order = np.argsort(person_block, kind="stable")
    bounds = np.searchsorted(person_block[order], geo.block_id, side="left")
    ends = np.searchsorted(person_block[order], geo.block_id, side="right")
    for b, (lo, hi) in enumerate(zip(bounds, ends)):
        if hi > lo:
            race[order[lo:hi]] = race_rng.choice(N_RACES, size=hi - lo, p=mix[b])

    surname = np.empty(n_persons, dtype=np.int64)
    first = np.empty(n_persons, dtype=np.int64)
    middle = np.empty(n_persons, dtype=np.int64)
    name_rng = stream(seed, "synth_pop", "names")
    for r in range(N_RACES):
        members = np.flatnonzero(race == r)
        k = members.size
        if k == 0:
            continue
        surname[members] = name_rng.choice(nm.n_surnames, size=k, p=nm.surname_given_race[:, r])
        first[members] = name_rng.choice(nm.n_first, size=k, p=nm.first_given_race[:, r])
        middle[members] = name_rng.choice(nm.n_middle, size=k, p=nm.middle_given_race[:, r])
    if config.middle_name_rate < 1.0:
        drop = stream(seed, "synth_pop", "middle_presence").random(n_persons) >= config.middle_name_rate
        middle[drop] = MISSING_NAME

    return Microdata(
        geography=geo,
        name_model=nm,
        household_id=np.arange(n_households),
        household_block=household_block,
        n_adults=n_adults,
        n_children=n_children,
        person_id=np.arange(n_persons),
        person_household=person_household,
        race=race,
        is_adult=is_adult,
        surname_id=surname,
        first_name_id=first,
        middle_name_id=middle,
    )


def extract_voter_file(md, registration_rate, seed):
    """Register each adult independently with probability ``registration_rate``."""
    if not 0.0 <= registration_rate <= 1.0:
        raise ConfigError(f"must lie in [0, 1], got {registration_rate!r}", field="registration_rate")
    u = stream(seed, "synth_pop", "registration").random(md.n_persons)
    chosen = md.is_adult & (u < registration_rate)
    return VoterFile(
        person_id=md.person_id[chosen],
        block_id=md.person_block()[chosen],
        surname_id=md.surname_id[chosen],
        first_name_id=md.first_name_id[chosen],
        middle_name_id=md.middle_name_id[chosen],
        true_race=md.race[chosen],
    )
