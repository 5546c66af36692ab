"""Shared fixtures: smoke-scale configurations and trained mini-runs."""

from __future__ import annotations

import numpy as np
import pytest

from somagrid.config import CohortSpec, RunConfig


def smoke_config(**training_overrides) -> RunConfig:
    """A seconds-scale configuration exercising every code path."""
    cfg = RunConfig()
    cfg.seeds = [0, 1]
    cfg.training.episodes = 6
    cfg.training.warmup_episodes = 2
    cfg.training.steps_per_episode = 40
    cfg.training.updates_per_episode = 2
    cfg.assay.rollout_steps = 60
    cfg.assay.shock_start = 20
    cfg.assay.shock_len = 10
    cfg.assay.recovery_start = 30
    cfg.assay.probe_count = 16
    cfg.assay.calibration_episodes = 1
    cfg.assay.calibration_min_samples = 30
    cfg.assay.final_window = 4
    for key, val in training_overrides.items():
        setattr(cfg.training, key, val)
    cfg.validate()
    return cfg


@pytest.fixture(scope="session")
def trained_smoke_run(tmp_path_factory):
    """One fully trained smoke run (full cohort, seed 0) with its checkpoint."""
    from somagrid.trainer import train_run

    cfg = smoke_config()
    out = tmp_path_factory.mktemp("smoke_run")
    summary = train_run(cfg, "full", 0, out)
    return cfg, out, summary
