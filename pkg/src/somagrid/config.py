"""Run configuration: defaults, INI file, environment overrides, hashing.

One human-readable `key = value` file configures a whole pipeline, with one
section per subsystem. Precedence: built-in defaults < config file <
SOMAGRID_<SECTION>__<KEY> environment variables < explicit CLI flags. The
effective configuration has a canonical text dump whose SHA-256 prefix is
stamped into every output file, and each (cohort, seed) training run gets its
own hash derived from the effective dump plus its coordinates.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import os
from dataclasses import dataclass, field, fields
from typing import Dict, List, Optional, Sequence, Tuple

from somagrid.agent import AgentDims, ConativeConfig
from somagrid.environment import EnvParams
from somagrid.perspective import PerspectiveParams


class ConfigError(ValueError):
    """Bad configuration input (file, environment, or flags)."""


COHORT_SWITCHES: Dict[str, Tuple[bool, bool]] = {
    # name -> (body_to_g, conative_on)
    "full": (True, True),
    "no_conation": (True, False),
    "no_body_to_g": (False, True),
}

COHORT_NAMES: Tuple[str, ...] = tuple(COHORT_SWITCHES)


@dataclass
class CohortSpec:
    name: str
    body_to_g: bool
    conative_on: bool

    @classmethod
    def from_name(cls, name: str) -> "CohortSpec":
        try:
            body_to_g, conative_on = COHORT_SWITCHES[name]
        except KeyError:
            raise ConfigError(
                f"unknown cohort {name!r}; valid cohorts: {', '.join(COHORT_NAMES)}"
            ) from None
        return cls(name, body_to_g, conative_on)


@dataclass
class TrainParams:
    episodes: int = 180
    warmup_episodes: int = 30
    steps_per_episode: int = 200
    updates_per_episode: int = 4
    lr: float = 0.01
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    gamma: float = 0.95
    entropy_bonus: float = 0.01
    lambda_body: float = 5.0
    lambda_con: float = 0.2
    horizon_k: int = 4
    body_surprise_weight: float = 0.5
    readout_velocity_weight: float = 100.0
    snapshot_every: int = 0
    log_trajectories: bool = False


@dataclass
class AssayParams:
    rollout_steps: int = 160
    shock_start: int = 60
    shock_len: int = 20
    shock_delta: float = -0.08
    recovery_start: int = 80
    probe_count: int = 64
    calibration_episodes: int = 3
    calibration_min_samples: int = 500
    pca_components: int = 2
    final_window: int = 50


@dataclass
class RunConfig:
    master_seed: int = 0
    seeds: List[int] = field(default_factory=lambda: list(range(8)))
    cohorts: List[str] = field(default_factory=lambda: list(COHORT_NAMES))
    workers: int = 1
    env: EnvParams = field(default_factory=EnvParams)
    dims: AgentDims = field(default_factory=AgentDims)
    conative: ConativeConfig = field(default_factory=ConativeConfig)
    perspective: PerspectiveParams = field(default_factory=PerspectiveParams)
    training: TrainParams = field(default_factory=TrainParams)
    assay: AssayParams = field(default_factory=AssayParams)

    def validate(self) -> None:
        if self.training.warmup_episodes >= self.training.episodes:
            raise ConfigError(
                f"warmup_episodes ({self.training.warmup_episodes}) must be below episodes ({self.training.episodes})"
            )
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        for name in self.cohorts:
            CohortSpec.from_name(name)
        a = self.assay
        if not (0 <= a.shock_start and a.shock_start + a.shock_len <= a.recovery_start <= a.rollout_steps):
            raise ConfigError("assay windows must satisfy shock before recovery before rollout end")


_SECTIONS: Dict[str, Optional[str]] = {
    "run": None,
    "environment": "env",
    "agent": "dims",
    "conative": "conative",
    "perspective": "perspective",
    "training": "training",
    "assay": "assay",
}

_RUN_KEYS = ("master_seed", "seeds", "cohorts", "workers")


def _parse_scalar(raw: str, pytype: type):
    raw = raw.strip()
    if pytype is bool:
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"cannot parse boolean from {raw!r}")
    if pytype is int:
        return int(raw)
    if pytype is float:
        return float(raw)
    return raw


def parse_seed_list(raw: str) -> List[int]:
    """Seed syntax: '0..7' (inclusive range), '0,3,5', or a single integer."""
    raw = raw.strip()
    if ".." in raw:
        lo, hi = raw.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(tok) for tok in raw.split(",") if tok.strip() != ""]


def parse_cohort_list(raw: str) -> List[str]:
    names = [tok.strip() for tok in raw.split(",") if tok.strip()]
    for n in names:
        if n not in COHORT_SWITCHES:
            raise ConfigError(f"unknown cohort {n!r}; valid cohorts: {', '.join(COHORT_NAMES)}")
    return names


def _apply_kv(cfg: RunConfig, section: str, key: str, raw: str, origin: str) -> None:
    if section not in _SECTIONS:
        raise ConfigError(f"{origin}: unknown section [{section}]")
    if section == "run":
        if key == "master_seed":
            cfg.master_seed = int(raw)
        elif key == "seeds":
            cfg.seeds = parse_seed_list(raw)
        elif key == "cohorts":
            cfg.cohorts = parse_cohort_list(raw)
        elif key == "workers":
            cfg.workers = int(raw)
        else:
            raise ConfigError(f"{origin}: unknown key {key!r} in [run]")
        return
    target = getattr(cfg, _SECTIONS[section])
    for f in fields(target):
        if f.name == key:
            try:
                setattr(target, key, _parse_scalar(raw, f.type if isinstance(f.type, type) else _resolve_type(f)))
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"{origin}: bad value for {section}.{key}: {exc}") from exc
            return
    raise ConfigError(f"{origin}: unknown key {key!r} in [{section}]")


def _resolve_type(f: dataclasses.Field) -> type:
    # dataclass field types arrive as strings under `from __future__ import annotations`
    name = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", "str")
    return {"int": int, "float": float, "bool": bool, "str": str}.get(name, str)


def load_config(path: Optional[str] = None,
                env: Optional[Dict[str, str]] = None,
                overrides: Optional[Sequence[Tuple[str, str, str]]] = None) -> RunConfig:
    """Effective configuration from defaults, file, environment, and overrides.

    `overrides` entries are (section, key, raw_value) applied last.
    """
    cfg = RunConfig()
    if path is not None:
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        try:
            with open(path, "r", encoding="utf-8") as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse config file {path}: {exc}") from exc
        for section in parser.sections():
            for key, raw in parser.items(section):
                _apply_kv(cfg, section.lower(), key.lower(), raw, f"{path} [{section}]")
    env_map = os.environ if env is None else env
    for var, raw in sorted(env_map.items()):
        if not var.startswith("SOMAGRID_"):
            continue
        body = var[len("SOMAGRID_"):]
        if "__" not in body:
            raise ConfigError(f"environment override {var} must look like SOMAGRID_SECTION__KEY")
        section, key = body.split("__", 1)
        _apply_kv(cfg, section.lower(), key.lower(), raw, f"env {var}")
    for section, key, raw in overrides or ():
        _apply_kv(cfg, section.lower(), key.lower(), raw, "flag")
    cfg.validate()
    return cfg


def effective_text(cfg: RunConfig) -> str:
    """Canonical, deterministic dump of the effective configuration."""
    lines: List[str] = []
    lines.append("[run]")
    lines.append(f"master_seed = {cfg.master_seed}")
    lines.append(f"seeds = {','.join(str(s) for s in cfg.seeds)}")
    lines.append(f"cohorts = {','.join(cfg.cohorts)}")
    lines.append(f"workers = {cfg.workers}")
    for section in ("environment", "agent", "conative", "perspective", "training", "assay"):
        target = getattr(cfg, _SECTIONS[section])
        lines.append("")
        lines.append(f"[{section}]")
        for f in sorted(fields(target), key=lambda f: f.name):
            lines.append(f"{f.name} = {getattr(target, f.name)!r}")
    return "\n".join(lines) + "\n"


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(effective_text(cfg).encode("utf-8")).hexdigest()[:12]


def run_hash(cfg: RunConfig, cohort: str, seed: int) -> str:
    payload = effective_text(cfg) + f"cohort={cohort}\nseed={seed}\n"
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:12]


def config_from_text(text: str) -> RunConfig:
    """Rebuild a RunConfig from an effective-text dump (checkpoint metadata)."""
    cfg = RunConfig()
    section = None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith(("#", ";")):
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].lower()
            continue
        if "=" not in line or section is None:
            raise ConfigError(f"line {lineno}: cannot parse {line!r}")
        key, raw = (tok.strip() for tok in line.split("=", 1))
        raw = raw.strip("'\"")
        _apply_kv(cfg, section, key.lower(), raw, f"text line {lineno}")
    cfg.validate()
    return cfg
