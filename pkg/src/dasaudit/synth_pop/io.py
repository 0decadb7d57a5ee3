"""CSV/JSON persistence for microdata and voter files."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from ..errors import IntegrityError, ParseError
from .model import MISSING_NAME, Geography, Microdata, NameModel, VoterFile

HOUSEHOLD_COLUMNS = ("household_id", "block_id", "n_adults", "n_children")
PERSON_COLUMNS = ("person_id", "household_id", "race", "is_adult",
                  "surname_id", "first_name_id", "middle_name_id")
VOTER_COLUMNS = ("person_id", "block_id", "surname_id", "first_name_id", "middle_name_id", "true_race")


def write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_json(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing input file: {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, path=path, line=exc.lineno) from exc


def _optional(v):
    return "" if v == MISSING_NAME else str(int(v))


def write_int_csv(path, header, columns, formatters=None):
    formatters = formatters or {}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        fmts = [formatters.get(h, lambda v: str(int(v))) for h in header]
        for row in zip(*columns):
            w.writerow([f(v) for f, v in zip(fmts, row)])


def read_int_csv(path, header, optional=(), booleans=()):
    """Read an all-integer CSV into a dict of int64 arrays.

    Columns in ``optional`` may be blank (read as -1); ``booleans`` accept
    0/1/true/false. Errors carry the 1-based file line number.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing input file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            found = next(reader)
        except StopIteration:
            raise ParseError("empty file, expected a header row", path=path, line=1) from None
        if tuple(found) != tuple(header):
            raise ParseError(f"expected header {','.join(header)}, got {','.join(found)}", path=path, line=1)
        cols = [[] for _ in header]
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", path=path, line=line)
            for i, (name, raw) in enumerate(zip(header, row)):
                raw = raw.strip()
                if name in optional and raw == "":
                    cols[i].append(MISSING_NAME)
                    continue
                if name in booleans:
                    low = raw.lower()
                    if low in ("1", "true"):
                        cols[i].append(1)
                        continue
                    if low in ("0", "false"):
                        cols[i].append(0)
                        continue
                try:
                    cols[i].append(int(raw))
                except ValueError:
                    raise ParseError(f"not an integer: {raw!r}", path=path, line=line, column=name) from None
    return {name: np.array(c, dtype=np.int64) for name, c in zip(header, cols)}


def save_microdata(md, directory):
    """Write households.csv, persons.csv, geography.json and name_model.json."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_int_csv(d / "households.csv", HOUSEHOLD_COLUMNS,
                  [md.household_id, md.household_block, md.n_adults, md.n_children])
    write_int_csv(d / "persons.csv", PERSON_COLUMNS,
                  [md.person_id, md.person_household, md.race, md.is_adult.astype(np.int64),
                   md.surname_id, md.first_name_id, md.middle_name_id],
                  formatters={"middle_name_id": _optional})
    write_json(d / "geography.json", md.geography.to_dict())
    write_json(d / "name_model.json", md.name_model.to_dict())
    return d


def load_geography(path):
    return Geography.from_dict(read_json(path))


def load_name_model(path):
    return NameModel.from_dict(read_json(path))


def load_microdata(directory):
    d = Path(directory)
    geo = load_geography(d / "geography.json")
    nm = load_name_model(d / "name_model.json")
    hh = read_int_csv(d / "households.csv", HOUSEHOLD_COLUMNS)
    p = read_int_csv(d / "persons.csv", PERSON_COLUMNS, optional=("middle_name_id",), booleans=("is_adult",))
    if np.any((p["is_adult"] != 0) & (p["is_adult"] != 1)):
        raise IntegrityError("is_adult must be 0 or 1")
    return Microdata(
        geography=geo,
        name_model=nm,
        household_id=hh["household_id"],
        household_block=hh["block_id"],
        n_adults=hh["n_adults"],
        n_children=hh["n_children"],
        person_id=p["person_id"],
        person_household=p["household_id"],
        race=p["race"],
        is_adult=p["is_adult"].astype(bool),
        surname_id=p["surname_id"],
        first_name_id=p["first_name_id"],
        middle_name_id=p["middle_name_id"],
    )


def save_voter_file(vf, path):
    write_int_csv(path, VOTER_COLUMNS, [getattr(vf, f) for f in VoterFile.FIELDS],
                  formatters={"middle_name_id": _optional})
    return Path(path)


def load_voter_file(path):
    cols = read_int_csv(path, VOTER_COLUMNS, optional=("middle_name_id",))
    return VoterFile(*(cols[c] for c in VOTER_COLUMNS))
