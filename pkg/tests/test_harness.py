"""Harness: configuration, named RNG streams, CLI verbs, pipeline plumbing."""

import json
import math
from pathlib import Path

import numpy as np
import pytest

from conftest import smoke_config
from somagrid.checkpoint import CheckpointError, load_checkpoint
from somagrid.cli import main
from somagrid.config import (
    CohortSpec,
    ConfigError,
    RunConfig,
    config_from_text,
    config_hash,
    effective_text,
    load_config,
    parse_seed_list,
    run_hash,
)
from somagrid.harness import inspect_checkpoint
from somagrid.rng import RngStreams


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def test_defaults_valid():
    cfg = RunConfig()
    cfg.validate()
    assert cfg.cohorts == ["full", "no_conation", "no_body_to_g"]


def test_cohort_switch_table():
    assert CohortSpec.from_name("full") == CohortSpec("full", True, True)
    assert CohortSpec.from_name("no_conation") == CohortSpec("no_conation", True, False)
    assert CohortSpec.from_name("no_body_to_g") == CohortSpec("no_body_to_g", False, True)


def test_unknown_cohort_lists_valid_names():
    with pytest.raises(ConfigError) as exc:
        CohortSpec.from_name("fully")
    msg = str(exc.value)
    assert "full" in msg and "no_conation" in msg and "no_body_to_g" in msg


def test_seed_syntax():
    assert parse_seed_list("0..3") == [0, 1, 2, 3]
    assert parse_seed_list("0,4, 7") == [0, 4, 7]
    assert parse_seed_list("5") == [5]


def test_config_file_and_env_and_flag_precedence(tmp_path, monkeypatch):
    path = tmp_path / "run.ini"
    path.write_text(
        "[run]\nseeds = 0..2\n\n[training]\nepisodes = 50\nlr = 0.005\n",
        encoding="utf-8",
    )
    monkeypatch.setenv("SOMAGRID_TRAINING__EPISODES", "60")
    cfg = load_config(str(path), overrides=[("training", "warmup_episodes", "10")])
    assert cfg.seeds == [0, 1, 2]
    assert cfg.training.lr == 0.005
    assert cfg.training.episodes == 60          # env beats file
    assert cfg.training.warmup_episodes == 10   # flag beats both


def test_bad_keys_rejected(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[training]\nepisodez = 50\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(str(path))
    path.write_text("[nosuch]\nx = 1\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(str(path))


def test_warmup_must_precede_episodes():
    cfg = RunConfig()
    cfg.training.episodes = 10
    cfg.training.warmup_episodes = 10
    with pytest.raises(ConfigError):
        cfg.validate()


def test_effective_text_round_trips():
    cfg = smoke_config()
    text = effective_text(cfg)
    rebuilt = config_from_text(text)
    assert effective_text(rebuilt) == text
    assert config_hash(rebuilt) == config_hash(cfg)


def test_config_hash_sensitive_to_values():
    a = smoke_config()
    b = smoke_config()
    b.training.lr *= 2
    assert config_hash(a) != config_hash(b)


def test_run_hashes_distinct():
    cfg = smoke_config()
    hashes = {run_hash(cfg, c, s) for c in cfg.cohorts for s in cfg.seeds}
    assert len(hashes) == len(cfg.cohorts) * len(cfg.seeds)


# ---------------------------------------------------------------------------
# named random streams
# ---------------------------------------------------------------------------

def test_streams_reproducible_across_registries():
    a = RngStreams(7).stream("env").normal(size=5)
    b = RngStreams(7).stream("env").normal(size=5)
    assert np.array_equal(a, b)


def test_streams_differ_by_name_and_master():
    r = RngStreams(7)
    assert not np.array_equal(r.fresh("env").normal(size=5), r.fresh("policy").normal(size=5))
    assert not np.array_equal(
        RngStreams(7).fresh("env").normal(size=5),
        RngStreams(8).fresh("env").normal(size=5),
    )


def test_streams_independent_consumption():
    """Consuming one stream never changes another's output."""
    r1 = RngStreams(3)
    env_only = r1.stream("env").normal(size=4)
    r2 = RngStreams(3)
    r2.stream("policy").normal(size=1000)
    env_after_policy = r2.stream("env").normal(size=4)
    assert np.array_equal(env_only, env_after_policy)


def test_stream_capture_restore_mid_sequence():
    r = RngStreams(11)
    r.stream("env").normal(size=13)
    snap = r.capture()
    expect = r.stream("env").normal(size=6)
    r2 = RngStreams(11)
    r2.stream("env")  # instantiate before restore
    r2.restore(snap)
    assert np.array_equal(r2.stream("env").normal(size=6), expect)


def test_restore_rejects_wrong_master():
    snap = RngStreams(1).capture()
    with pytest.raises(ValueError):
        RngStreams(2).restore(snap)


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------

def _write_smoke_ini(path: Path) -> Path:
    cfg = smoke_config()
    ini = path / "smoke.ini"
    ini.write_text(
        "[run]\n"
        f"seeds = 0..1\n"
        "[training]\n"
        f"episodes = {cfg.training.episodes}\n"
        f"warmup_episodes = {cfg.training.warmup_episodes}\n"
        f"steps_per_episode = {cfg.training.steps_per_episode}\n"
        f"updates_per_episode = {cfg.training.updates_per_episode}\n"
        "[assay]\n"
        f"rollout_steps = {cfg.assay.rollout_steps}\n"
        f"shock_start = {cfg.assay.shock_start}\n"
        f"shock_len = {cfg.assay.shock_len}\n"
        f"recovery_start = {cfg.assay.recovery_start}\n"
        f"probe_count = {cfg.assay.probe_count}\n"
        f"calibration_episodes = {cfg.assay.calibration_episodes}\n"
        f"calibration_min_samples = {cfg.assay.calibration_min_samples}\n"
        f"final_window = {cfg.assay.final_window}\n",
        encoding="utf-8",
    )
    return ini


def test_cli_train_smoke_and_inspect(tmp_path, capsys):
    ini = _write_smoke_ini(tmp_path)
    out = tmp_path / "runs"
    code = main(["train", "--config", str(ini), "--cohort", "full", "--out", str(out)])
    assert code == 0
    ckpt = out / "full" / "seed00" / "checkpoint.json"
    assert ckpt.exists()
    assert (out / "full" / "seed01" / "checkpoint.json").exists()
    assert (out / "manifest.json").exists()
    code = main(["inspect", str(ckpt)])
    assert code == 0
    captured = capsys.readouterr().out
    assert "policy_head.w" in captured and "config_hash" in captured


def test_cli_invalid_cohort_exits_2(tmp_path, capsys):
    code = main(["train", "--cohort", "bogus", "--out", str(tmp_path / "x")])
    assert code == 2
    err = capsys.readouterr().err
    assert "full" in err and "no_conation" in err and "no_body_to_g" in err


def test_cli_assay_missing_runs_exits_2(tmp_path, capsys):
    ini = _write_smoke_ini(tmp_path)
    out = tmp_path / "runs"
    code = main(["train", "--config", str(ini), "--cohort", "full", "--out", str(out)])
    assert code == 0
    code = main(["assay", "--runs", str(out), "--out", str(tmp_path / "assays")])
    assert code == 2
    assert "no_conation" in capsys.readouterr().err


def test_cli_corrupted_checkpoint_integrity_error(tmp_path, capsys):
    ini = _write_smoke_ini(tmp_path)
    out = tmp_path / "runs"
    main(["train", "--config", str(ini), "--cohort", "full", "--out", str(out)])
    ckpt = out / "full" / "seed00" / "checkpoint.json"
    doc = json.loads(ckpt.read_text())
    first = next(iter(doc["params"]))
    blob = doc["params"][first]["data"]
    doc["params"][first]["data"] = blob[:-8] + ("AAAAAAA=" if blob[-8:] != "AAAAAAA=" else "BBBBBBB=")
    ckpt.write_text(json.dumps(doc))
    code = main(["inspect", str(ckpt)])
    assert code == 1
    assert "integrity" in capsys.readouterr().err.lower()


def test_cli_version_and_help():
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
