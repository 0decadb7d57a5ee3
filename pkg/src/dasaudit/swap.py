"""Legacy household swapping.

Selected households trade block assignments with a partner that has the same
number of adults and children, lives in a different block, and shares the
same pairing-scope unit (tract, county or state). Because partners have
identical sizes, every block's total and voting-age population and household
count are preserved exactly.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, IntegrityError
from .rng import stream
from .synth_pop.io import read_int_csv, read_json, write_json
from .tabulate import tabulate

SCOPES = ("tract", "county", "state")
LOG_COLUMNS = ("household_id_a", "household_id_b", "block_a", "block_b")


@dataclass(frozen=True)
class SwapConfig:
    swap_rate: float
    pairing_scope: str = "county"
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.swap_rate <= 1.0:
            raise ConfigError(f"must lie in [0, 1], got {self.swap_rate!r}", field="swap_rate")
        if self.pairing_scope not in SCOPES:
            raise ConfigError(f"must be one of {SCOPES}, got {self.pairing_scope!r}", field="pairing_scope")
        if int(self.seed) < 0:
            raise ConfigError("must be non-negative", field="seed")


@dataclass
class SwapLog:
    pairs: list = field(default_factory=list)
    n_selected: int = 0
    n_unmatched: int = 0

    def __len__(self):
        return len(self.pairs)


def apply_swapping(md, cfg):
    """Swap block assignments of matched household pairs.

    Returns the swapped microdata and a :class:`SwapLog`. Households are
    selected uniformly (``round(swap_rate * n_households)`` of them, in random
    order); a selected household already used as someone's partner is passed
    over, and one with no eligible partner is counted as unmatched.
    """
    n = md.n_households
    n_selected = int(np.floor(cfg.swap_rate * n + 0.5))
    log = SwapLog(n_selected=n_selected)
    if n_selected == 0:
        return md, log

    blocks = md.household_block
    scope = md.geography.level(cfg.pairing_scope)[md.geography.rows_of(blocks)]
    groups = defaultdict(list)
    for h, key in enumerate(zip(scope.tolist(), md.n_adults.tolist(), md.n_children.tolist())):
        groups[key].append(h)
    groups = {k: np.array(v, dtype=np.int64) for k, v in groups.items()}

    selected = stream(cfg.seed, "swap", "select").permutation(n)[:n_selected]
    partner_rng = stream(cfg.seed, "swap", "partner")
    used = np.zeros(n, dtype=bool)
    new_blocks = blocks.copy()
    for h in selected:
        if used[h]:
            continue
        cands = groups[(int(scope[h]), int(md.n_adults[h]), int(md.n_children[h]))]
        eligible = cands[~used[cands] & (blocks[cands] != blocks[h])]
        if eligible.size == 0:
            log.n_unmatched += 1
            continue
        p = eligible[partner_rng.integers(eligible.size)]
        new_blocks[h], new_blocks[p] = blocks[p], blocks[h]
        used[h] = used[p] = True
        log.pairs.append((int(md.household_id[h]), int(md.household_id[p]), int(blocks[h]), int(blocks[p])))
    if not log.pairs:
        return md, log
    return md.with_household_blocks(new_blocks), log


def apply_swap_log(md, log):
    """Exchange the current blocks of every logged pair.

    Applying a log to the microdata it produced restores the original.
    """
    pos = {int(h): i for i, h in enumerate(md.household_id)}
    blocks = md.household_block.copy()
    for a, b, _, _ in log.pairs:
        try:
            ia, ib = pos[a], pos[b]
        except KeyError as exc:
            raise IntegrityError(f"swap log references unknown household {exc.args[0]}") from None
        blocks[ia], blocks[ib] = blocks[ib], blocks[ia]
    return md.with_household_blocks(blocks)


def swap_then_tabulate(md, cfg):
    swapped, _ = apply_swapping(md, cfg)
    return tabulate(swapped)


def save_swap_log(log, path):
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        w.writerows(log.pairs)
    write_json(path.with_name(f"{path.stem}.summary.json"),
               {"n_pairs": len(log.pairs), "n_selected": log.n_selected, "n_unmatched": log.n_unmatched})
    return path


def load_swap_log(path):
    path = Path(path)
    cols = read_int_csv(path, LOG_COLUMNS)
    summary = read_json(path.with_name(f"{path.stem}.summary.json"))
    pairs = [tuple(int(v) for v in row) for row in zip(*(cols[c] for c in LOG_COLUMNS))]
    return SwapLog(pairs=pairs, n_selected=int(summary["n_selected"]), n_unmatched=int(summary["n_unmatched"]))
