import numpy as np
import pytest

from dasaudit.synth_pop import (
    GenerationConfig,
    Geography,
    Microdata,
    demo_name_model,
    generate_population,
)


def make_microdata(households, n_blocks=None, geography=None, name_model=None):
    """Hand-built microdata from ``[(block_id, [(race, is_adult), ...]), ...]``.

    Every person gets name ids 0; blocks come from a one-tract geography
    unless ``geography`` is given.
    """
    if geography is None:
        n = n_blocks or (max(b for b, _ in households) + 1)
        geography = Geography.regular(blocks_per_tract=n)
    hh_block, n_adults, n_children = [], [], []
    p_hh, race, adult = [], [], []
    for h, (block, members) in enumerate(households):
        hh_block.append(block)
        n_adults.append(sum(1 for _, a in members if a))
        n_children.append(sum(1 for _, a in members if not a))
        for r, a in members:
            p_hh.append(h)
            race.append(r)
            adult.append(a)
    n = len(p_hh)
    return Microdata(
        geography=geography,
        name_model=name_model or demo_name_model(),
        household_id=np.arange(len(households)),
        household_block=np.array(hh_block, dtype=np.int64),
        n_adults=np.array(n_adults, dtype=np.int64),
        n_children=np.array(n_children, dtype=np.int64),
        person_id=np.arange(n),
        person_household=np.array(p_hh, dtype=np.int64),
        race=np.array(race, dtype=np.int64),
        is_adult=np.array(adult, dtype=bool),
        surname_id=np.zeros(n, dtype=np.int64),
        first_name_id=np.zeros(n, dtype=np.int64),
        middle_name_id=np.zeros(n, dtype=np.int64),
    )


def small_config(**kw):
    base = dict(counties_per_state=2, tracts_per_county=2, blocks_per_tract=5,
                n_surnames=40, n_first=20, n_middle=10)
    base.update(kw)
    return GenerationConfig(**base)


@pytest.fixture(scope="session")
def small_md():
    return generate_population(small_config(), seed=11)


@pytest.fixture(scope="session")
def default_md():
    return generate_population(GenerationConfig(), seed=5)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
