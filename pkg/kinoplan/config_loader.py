# kinoplan/config_loader.py
from __future__ import annotations
import os
import json
from pathlib import Path
from typing import Any, Dict, Optional

from pydantic import BaseModel, Field

from planning.costmap.core import Footprint
from planning.dataset.core import CollectConfig
from planning.geometry.core import VehicleModel
from planning.mpnet.core import PlannerConfig
from planning.navsim.core import NavSimConfig
from planning.navsim.gridworld import GridWorldSpec
from planning.neuralnet.core import NetworkConfig, TrainingConfig
from planning.nmpc.core import NMPCConfig
from planning.rrtstar.core import RRTStarConfig

ENV_PREFIX = "KINOPLAN_"


# ---- Models ----
class RunSettings(BaseModel):
    seed: int = 0
    workers: int = 1
    log_level: str = "INFO"

    model_config = {"extra": "ignore"}


class CostmapSettings(BaseModel):
    resolution: float = 0.1
    window_l: int = 40
    footprint: Footprint = Field(default_factory=Footprint)

    model_config = {"extra": "ignore"}


class Paths(BaseModel):
    out_dir: str = "runs"
    weights_name: str = "weights.kpnn"
    dataset_name: str = "dataset.kpds"

    model_config = {"extra": "ignore"}


class ConfigModel(BaseModel):
    run_settings: RunSettings = Field(default_factory=RunSettings)
    vehicle: VehicleModel = Field(default_factory=VehicleModel)
    costmap: CostmapSettings = Field(default_factory=CostmapSettings)
    gridworld: GridWorldSpec = Field(default_factory=GridWorldSpec)
    rrtstar: RRTStarConfig = Field(default_factory=RRTStarConfig)
    collect: CollectConfig = Field(default_factory=CollectConfig)
    network: NetworkConfig = Field(default_factory=NetworkConfig)
    training: TrainingConfig = Field(default_factory=TrainingConfig)
    planner: PlannerConfig = Field(default_factory=PlannerConfig)
    nmpc: NMPCConfig = Field(default_factory=NMPCConfig)
    navsim: NavSimConfig = Field(default_factory=NavSimConfig)
    paths: Paths = Field(default_factory=Paths)

    model_config = {"extra": "ignore"}


# ---- Loader functions ----
_DEFAULTS_PATH = Path(__file__).resolve().parent.parent / "config" / "defaults.json"
_cached: Optional[ConfigModel] = None
_cached_key: Optional[str] = None


def _load_json(path: Path) -> Dict[str, Any]:
    if path.exists():
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except Exception:
            return {}
    return {}


def _deep_merge(base: Dict[str, Any], over: Dict[str, Any]) -> Dict[str, Any]:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = v
    return out


def _parse_env_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except ValueError:
        return raw


def _merge_env_overrides(cfg: Dict[str, Any]) -> Dict[str, Any]:
    """KINOPLAN_<SECTION>__<FIELD>=value, value parsed as JSON when it parses."""
    for key, raw in os.environ.items():
        if not key.startswith(ENV_PREFIX) or "__" not in key:
            continue
        section, field = key[len(ENV_PREFIX):].lower().split("__", 1)
        if section not in ConfigModel.model_fields:
            continue
        sect = dict(cfg.get(section, {}) or {})
        sect[field] = _parse_env_value(raw)
        cfg[section] = sect
    return cfg


def get_config(override_path: Optional[str | Path] = None) -> ConfigModel:
    """
    Return a validated ConfigModel (Pydantic v2): defaults.json, then the
    optional override file, then environment overrides.
    """
    global _cached, _cached_key
    key = str(override_path) if override_path else ""
    if _cached is not None and _cached_key == key:
        return _cached

    base = _load_defaults()
    if override_path:
        p = Path(override_path)
        if not p.exists():
            raise FileNotFoundError(f"config override {p} not found")
        base = _deep_merge(base, json.loads(p.read_text(encoding="utf-8")))
    base = _merge_env_overrides(base)
    cfg = ConfigModel(**base)
    _cached, _cached_key = cfg, key
    return cfg


def _load_defaults() -> Dict[str, Any]:
    return _load_json(_DEFAULTS_PATH)


def reset_config() -> None:
    global _cached, _cached_key
    _cached, _cached_key = None, None
