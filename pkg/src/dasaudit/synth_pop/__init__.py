"""Synthetic census microdata and the derived public voter file."""

from .generate import GenerationConfig, extract_voter_file, generate_population, sample_name_model
from .io import (
    load_geography,
    load_microdata,
    load_name_model,
    load_voter_file,
    save_microdata,
    save_voter_file,
)
from .model import (
    MISSING_NAME,
    N_RACES,
    RACE_LABELS,
    Geography,
    Microdata,
    NameModel,
    Race,
    VoterFile,
    demo_name_model,
)

__all__ = [
    "GenerationConfig", "Geography", "MISSING_NAME", "Microdata", "N_RACES", "NameModel",
    "RACE_LABELS", "Race", "VoterFile", "demo_name_model", "extract_voter_file",
    "generate_population", "load_geography", "load_microdata", "load_name_model",
    "load_voter_file", "sample_name_model", "save_microdata", "save_voter_file",
]
