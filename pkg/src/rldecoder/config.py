"""Versioned JSON run configuration.

Resolution order: preset defaults, then the config file, then command-line
overrides.  The resolved document is written next to every run's outputs
so a run can be repeated from it alone.
"""

from __future__ import annotations

import copy
import json
from dataclasses import asdict
from pathlib import Path
from typing import Any, Optional

from .noise import NOISE_MODELS, NoiseConfig
from .trainer import (
    CurriculumConfig,
    FixedParams,
    HyperParamPoint,
    StageConfig,
    desk_grid,
    full_grid,
)

SCHEMA_VERSION = 1
PRESETS = ("desk", "full")
TOP_LEVEL_KEYS = {
    "schema_version", "preset", "distance", "noise", "curriculum", "fixed", "grid", "seed",
    "workers", "evaluation",
}


class ConfigError(ValueError):
    pass


def preset_document(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; expected one of {PRESETS}")
    if name == "desk":
        distance, fixed, grid = 3, FixedParams.desk(), desk_grid()
    else:
        distance, fixed, grid = 5, FixedParams(), full_grid()
    return {
        "schema_version": SCHEMA_VERSION,
        "preset": name,
        "distance": distance,
        "noise": {"model": "bitflip", "p_phys": 5e-3, "p_meas": 5e-3, "volume_depth": fixed.volume_depth},
        "curriculum": {"p_start": 1e-3, "p_increment": 2e-3, "p_final": 1.5e-2},
        "fixed": fixed.to_dict(),
        "grid": [asdict(hp) for hp in grid],
        "seed": 0,
        "workers": 1,
        "evaluation": {"min_syndromes": 10**6, "rates": [1e-3, 3e-3, 5e-3, 7e-3, 9e-3, 1.1e-2, 1.3e-2, 1.5e-2]},
    }


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_document(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"config schema_version {version} is not supported (expected {SCHEMA_VERSION})")
    unknown = set(doc) - TOP_LEVEL_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return doc


def resolve(preset: Optional[str], path=None, overrides: Optional[dict] = None) -> dict:
    """Preset, then file, then overrides; validated."""
    file_doc = load_document(path) if path is not None else {}
    name = preset or file_doc.get("preset") or "desk"
    doc = _merge(preset_document(name), file_doc)
    doc["preset"] = name
    if overrides:
        doc = _merge(doc, overrides)
    validate(doc)
    return doc


def validate(doc: dict) -> None:
    try:
        d = int(doc["distance"])
        if d < 3 or d % 2 == 0:
            raise ConfigError(f"distance must be an odd integer >= 3, got {doc['distance']}")
        if doc["noise"]["model"] not in NOISE_MODELS:
            raise ConfigError(f"noise.model must be one of {NOISE_MODELS}")
        noise_config(doc)
        fixed_params(doc)
        curriculum_config(doc)
        if not doc["grid"]:
            raise ConfigError("grid must contain at least one point")
        if int(doc["workers"]) < 1:
            raise ConfigError("workers must be >= 1")
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc


def noise_config(doc: dict, p: Optional[float] = None) -> NoiseConfig:
    n = doc["noise"]
    if p is not None:
        return NoiseConfig(n["model"], p, p, int(n["volume_depth"]))
    return NoiseConfig(n["model"], float(n["p_phys"]), float(n["p_meas"]), int(n["volume_depth"]))


def fixed_params(doc: dict) -> FixedParams:
    fixed = dict(doc["fixed"])
    fixed["volume_depth"] = int(doc["noise"]["volume_depth"])
    return FixedParams.from_dict(fixed)


def grid(doc: dict) -> list[HyperParamPoint]:
    return [HyperParamPoint(**hp) for hp in doc["grid"]]


def stage_config(doc: dict) -> StageConfig:
    return StageConfig(int(doc["distance"]), noise_config(doc), fixed_params(doc))


def curriculum_config(doc: dict) -> CurriculumConfig:
    c = doc["curriculum"]
    return CurriculumConfig(
        distance=int(doc["distance"]),
        noise_model=doc["noise"]["model"],
        p_start=float(c["p_start"]),
        p_increment=float(c["p_increment"]),
        p_final=float(c["p_final"]),
        grid=tuple(grid(doc)),
        fixed=fixed_params(doc),
        seed=int(doc["seed"]),
    )


def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True)


def set_path(doc: dict, dotted: str, value: Any) -> dict:
    """``{"a": {"b": value}}`` for ``dotted = "a.b"``, merged into ``doc``."""
    keys = dotted.split(".")
    node = doc
    for k in keys[:-1]:
        node = node.setdefault(k, {})
    node[keys[-1]] = value
    return doc
