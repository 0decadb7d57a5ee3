"""Run configuration: one JSON document validated against ``RUN_CONFIG_SCHEMA``."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema

from .bisg import DEFAULT_POPULATION, DEFAULT_SMOOTHING, NAME_PARTS
from .dp_das import PrivacyBudget
from .errors import ConfigError, ParseError
from .policy_eval import DEFAULT_THRESHOLDS
from .swap import SCOPES, SwapConfig
from .synth_pop import GenerationConfig

ENV_OUT = "DASAUDIT_OUT"
ENV_THREADS = "DASAUDIT_THREADS"

_prob = {"type": "number", "minimum": 0, "maximum": 1}
_pmf = {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1}

RUN_CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "dasaudit run configuration",
    "type": "object",
    "additionalProperties": False,
    "required": ["seed"],
    "properties": {
        "seed": {"type": "integer", "minimum": 0},
        "output_dir": {"type": "string"},
        "threads": {"type": "integer", "minimum": 1},
        "generation": {
            "type": "object",
            "properties": {
                "n_states": {"type": "integer", "minimum": 1},
                "counties_per_state": {"type": "integer", "minimum": 1},
                "tracts_per_county": {"type": "integer", "minimum": 1},
                "blocks_per_tract": {"type": "integer", "minimum": 1},
                "households_per_block": _pmf,
                "adults_pmf": _pmf,
                "children_pmf": _pmf,
                "race_shares": {**_pmf, "minItems": 5, "maxItems": 5},
                "segregation": {"type": "number", "exclusiveMinimum": 0},
                "block_mixtures": {"type": ["array", "null"], "items": {**_pmf, "minItems": 5, "maxItems": 5}},
                "n_surnames": {"type": "integer", "minimum": 1},
                "n_first": {"type": "integer", "minimum": 1},
                "n_middle": {"type": "integer", "minimum": 1},
                "surname_concentration": {"type": "number", "exclusiveMinimum": 0},
                "first_concentration": {"type": "number", "exclusiveMinimum": 0},
                "middle_concentration": {"type": "number", "exclusiveMinimum": 0},
                "middle_name_rate": _prob,
                "name_model": {"type": ["object", "null"]},
            },
            "additionalProperties": False,
        },
        "registration_rate": _prob,
        "swap": {
            "type": "object",
            "properties": {"swap_rate": _prob, "pairing_scope": {"enum": list(SCOPES)}},
            "additionalProperties": False,
        },
        "dp": {
            "type": "object",
            "properties": {
                "epsilons": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
                "allocation": {
                    "type": "object",
                    "properties": {"race_table": {"type": "number", "exclusiveMinimum": 0},
                                   "vap_table": {"type": "number", "exclusiveMinimum": 0}},
                    "required": ["race_table", "vap_table"],
                    "additionalProperties": False,
                },
            },
            "additionalProperties": False,
        },
        "bisg": {
            "type": "object",
            "properties": {
                "methods": {"type": "array", "items": {"enum": list(NAME_PARTS)}, "minItems": 1},
                "smoothing": {"type": "number", "minimum": 0},
                "population": {"enum": ["total", "vap"]},
            },
            "additionalProperties": False,
        },
        "policy": {
            "type": "object",
            "properties": {
                "n_plans": {"type": "integer", "minimum": 1},
                "n_districts": {"type": "integer", "minimum": 1},
                "balance_tolerance": {"type": "number", "minimum": 0},
                "thresholds": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
                "max_retries": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
    },
}


@dataclass(frozen=True)
class BisgSettings:
    methods: tuple = NAME_PARTS
    smoothing: float = DEFAULT_SMOOTHING
    population: str = DEFAULT_POPULATION


@dataclass(frozen=True)
class PolicySettings:
    n_plans: int = 20
    n_districts: int = 5
    balance_tolerance: float = 0.05
    thresholds: tuple = DEFAULT_THRESHOLDS
    max_retries: int = 50


@dataclass(frozen=True)
class RunConfig:
    seed: int
    generation: GenerationConfig = field(default_factory=GenerationConfig)
    registration_rate: float = 0.7
    swap_rate: float = 0.05
    pairing_scope: str = "county"
    epsilons: tuple = (0.25, 1.0, 4.0, 19.61)
    allocation: dict = field(default_factory=lambda: {"race_table": 0.5, "vap_table": 0.5})
    bisg: BisgSettings = field(default_factory=BisgSettings)
    policy: PolicySettings = field(default_factory=PolicySettings)
    output_dir: str = "dasaudit-out"
    threads: int = 1
    source: dict = field(default_factory=dict, compare=False)

    def budgets(self):
        return [PrivacyBudget(e, self.allocation) for e in self.epsilons]

    def swap_config(self):
        return SwapConfig(self.swap_rate, self.pairing_scope, self.seed)

    def hash(self):
        """SHA-256 of the canonical JSON of every science-bearing setting."""
        doc = {
            "seed": self.seed,
            "generation": self.generation.to_dict(),
            "registration_rate": self.registration_rate,
            "swap": {"swap_rate": self.swap_rate, "pairing_scope": self.pairing_scope},
            "dp": {"epsilons": list(self.epsilons), "allocation": self.allocation},
            "bisg": dataclasses.asdict(self.bisg),
            "policy": dataclasses.asdict(self.policy),
        }
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":"), default=list)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _path_of(error):
    return ".".join(str(p) for p in error.absolute_path) or "<root>"


def parse_run_config(doc, seed=None, output_dir=None, threads=None, epsilons=None):
    """Validate ``doc`` and build a :class:`RunConfig`; overrides win over the document."""
    try:
        jsonschema.validate(doc, RUN_CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(exc.message, field=_path_of(exc)) from None
    doc = json.loads(json.dumps(doc))
    if seed is not None:
        doc["seed"] = seed
    if epsilons:
        doc.setdefault("dp", {})["epsilons"] = list(epsilons)
    for e in doc.get("dp", {}).get("epsilons", []):
        if not e > 0:
            raise ConfigError(f"every epsilon must be > 0, got {e!r}", field="dp.epsilons")
    out = output_dir or os.environ.get(ENV_OUT) or doc.get("output_dir", "dasaudit-out")
    n_threads = threads or int(os.environ.get(ENV_THREADS, 0) or 0) or doc.get("threads", 1)
    gen = GenerationConfig.from_dict(doc.get("generation", {}))
    swap = doc.get("swap", {})
    dp = doc.get("dp", {})
    b = doc.get("bisg", {})
    p = doc.get("policy", {})
    cfg = RunConfig(
        seed=int(doc["seed"]),
        generation=gen,
        registration_rate=doc.get("registration_rate", 0.7),
        swap_rate=swap.get("swap_rate", 0.05),
        pairing_scope=swap.get("pairing_scope", "county"),
        epsilons=tuple(float(e) for e in dp.get("epsilons", (0.25, 1.0, 4.0, 19.61))),
        allocation=dp.get("allocation", {"race_table": 0.5, "vap_table": 0.5}),
        bisg=BisgSettings(tuple(b.get("methods", NAME_PARTS)), b.get("smoothing", DEFAULT_SMOOTHING),
                          b.get("population", DEFAULT_POPULATION)),
        policy=PolicySettings(p.get("n_plans", 20), p.get("n_districts", 5), p.get("balance_tolerance", 0.05),
                              tuple(p.get("thresholds", DEFAULT_THRESHOLDS)), p.get("max_retries", 50)),
        output_dir=str(out),
        threads=int(n_threads),
        source=doc,
    )
    # construct sub-configs now so bad values fail before any stage runs
    cfg.budgets()
    cfg.swap_config()
    if cfg.policy.n_districts > cfg.generation.n_blocks:
        raise ConfigError("more districts than blocks", field="policy.n_districts")
    return cfg


def load_run_config(path, **overrides):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing input file: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, path=path, line=exc.lineno) from exc
    return parse_run_config(doc, **overrides)


def reference_config_path():
    return Path(__file__).with_name("configs") / "reference.json"
