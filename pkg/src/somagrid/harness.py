"""Pipeline orchestration: manifests, batteries, and the replicate gate.

`train_battery` fans (cohort, seed) runs out to a worker pool (each run owns
all of its state, so parallelism never affects results) and records a run
manifest. `assay_battery` verifies inputs, freezes one probe set for the
whole battery, runs every per-run assay, and emits report.csv, summary.json,
per-step perspective trajectories, and SVG figures — all stamped with the
effective config hash and byte-stable across reruns. `evaluate_criteria`
turns a finished report into named pass/fail/skip findings; `replicate` is
the one-command train -> assay -> evaluate pipeline.
"""

from __future__ import annotations

import datetime
import json
import multiprocessing
import traceback
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from somagrid import __version__, figures
from somagrid.assays import (
    AssayRow,
    REPORT_COLUMNS,
    assay_row_values,
    assay_run,
    build_probe_set,
    bundle_from_checkpoint,
    mannwhitney,
    median_iqr,
    residue_correlation,
)
from somagrid.checkpoint import CheckpointError, load_checkpoint
from somagrid.config import (
    CohortSpec,
    ConfigError,
    RunConfig,
    config_from_text,
    config_hash,
    effective_text,
)
from somagrid.trainer import TrainingAborted, train_run


class MissingInputError(ValueError):
    """A battery is missing required upstream artifacts."""


CHANCE_OCCUPANCY = 1.0 / 9.0


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------

def _now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def write_manifest(path: Path, cfg: RunConfig, runs: Dict[str, Dict],
                   started_at: str, artifacts: Optional[Dict[str, str]] = None) -> None:
    doc = {
        "format": "somagrid-manifest-v1",
        "package_version": __version__,
        "config_hash": config_hash(cfg),
        "config_text": effective_text(cfg),
        "master_seed": cfg.master_seed,
        "seeds": cfg.seeds,
        "cohorts": cfg.cohorts,
        "started_at": started_at,
        "finished_at": _now(),
        "runs": runs,
        "artifacts": artifacts or {},
    }
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_manifest(path: Path) -> Dict:
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise MissingInputError(f"cannot read manifest {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# Training battery
# ---------------------------------------------------------------------------

def _train_worker(args: Tuple[str, str, int, str, bool]) -> Tuple[str, int, Dict]:
    config_text, cohort, seed, out_dir, resume = args
    cfg = config_from_text(config_text)
    try:
        summary = train_run(cfg, cohort, seed, Path(out_dir), resume=resume)
        return cohort, seed, {"status": "ok", **summary}
    except TrainingAborted as exc:
        return cohort, seed, {"status": "aborted", "episode": exc.episode, "error": str(exc)}
    except Exception as exc:  # pragma: no cover - surfaced to the manifest
        return cohort, seed, {"status": "failed", "error": f"{exc}\n{traceback.format_exc()}"}


def train_battery(cfg: RunConfig, out_dir: Path, resume: bool = False,
                  workers: Optional[int] = None) -> Dict[str, Dict]:
    """Train every (cohort, seed) run; returns per-run status map."""
    cfg.validate()
    out_dir.mkdir(parents=True, exist_ok=True)
    started = _now()
    jobs = [
        (effective_text(cfg), cohort, seed, str(out_dir), resume)
        for cohort in cfg.cohorts
        for seed in cfg.seeds
    ]
    n_workers = workers if workers is not None else cfg.workers
    results: List[Tuple[str, int, Dict]] = []
    if n_workers > 1 and len(jobs) > 1:
        ctx = multiprocessing.get_context("spawn")
        with ctx.Pool(min(n_workers, len(jobs))) as pool:
            results = pool.map(_train_worker, jobs)
    else:
        results = [_train_worker(j) for j in jobs]
    runs: Dict[str, Dict] = {}
    for cohort, seed, summary in results:
        runs[f"{cohort}/seed{seed:02d}"] = summary
    write_manifest(out_dir / "manifest.json", cfg, runs, started)
    aborted = [k for k, v in runs.items() if v["status"] == "aborted"]
    failed = [k for k, v in runs.items() if v["status"] == "failed"]
    if aborted:
        first = runs[aborted[0]]
        raise TrainingAborted(aborted[0].split("/")[0],
                              int(aborted[0].split("seed")[1]), first["episode"], first["error"])
    if failed:
        raise RuntimeError(f"training runs failed: {failed}: {runs[failed[0]]['error']}")
    return runs


# ---------------------------------------------------------------------------
# Assay battery
# ---------------------------------------------------------------------------

def _run_paths(runs_dir: Path, cohort: str, seed: int) -> Tuple[Path, Path]:
    base = runs_dir / cohort / f"seed{seed:02d}"
    return base / "checkpoint.json", base / "training_log.csv"


def check_battery_inputs(runs_dir: Path, cfg: RunConfig) -> None:
    missing = []
    for cohort in cfg.cohorts:
        for seed in cfg.seeds:
            ckpt, log = _run_paths(runs_dir, cohort, seed)
            if not ckpt.exists() or not log.exists():
                missing.append(f"{cohort}/seed{seed:02d}")
    if missing:
        raise MissingInputError(f"missing trained runs: {', '.join(missing)}")


def _probe_source_cohort(cfg: RunConfig) -> str:
    return "full" if "full" in cfg.cohorts else cfg.cohorts[0]


def assay_battery(runs_dir: Path, out_dir: Path, cfg: RunConfig) -> Dict:
    """Run every assay, emit report.csv / summary.json / trajectories / figures."""
    cfg.validate()
    check_battery_inputs(runs_dir, cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = _now()
    chash = config_hash(cfg)

    probe_ckpt, _ = _run_paths(runs_dir, _probe_source_cohort(cfg), cfg.seeds[0])
    probe_bundle, _ = bundle_from_checkpoint(probe_ckpt)
    probes = build_probe_set(probe_bundle, cfg)
    probe_hash = probes.fingerprint()

    rows: List[AssayRow] = []
    for cohort in cfg.cohorts:
        for seed in cfg.seeds:
            ckpt, log = _run_paths(runs_dir, cohort, seed)
            if probes.fingerprint() != probe_hash:
                raise MissingInputError("probe set mutated during the battery")
            rows.append(assay_run(ckpt, log, probes, cfg))

    _write_report_csv(out_dir / "report.csv", rows, chash)
    _write_g_trajectories(out_dir / "gtrajectories.csv", rows, chash)
    summary = _build_summary(rows, cfg, probe_hash)
    (out_dir / "summary.json").write_text(
        json.dumps(summary, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    _write_figures(out_dir / "figures", rows, cfg, summary)
    write_manifest(out_dir / "manifest.json", cfg, {}, started, artifacts={
        "report": str(out_dir / "report.csv"),
        "summary": str(out_dir / "summary.json"),
        "gtrajectories": str(out_dir / "gtrajectories.csv"),
        "figures": str(out_dir / "figures"),
        "probe_hash": probe_hash,
    })
    return summary


def _fmtval(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


def _write_report_csv(path: Path, rows: Sequence[AssayRow], chash: str) -> None:
    lines = [f"# config={chash}", ",".join(REPORT_COLUMNS)]
    for row in rows:
        lines.append(",".join(_fmtval(v) for v in assay_row_values(row)))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_g_trajectories(path: Path, rows: Sequence[AssayRow], chash: str) -> None:
    d_g = rows[0].extras["control"].g.shape[1] if rows else 8
    header = "seed,cohort,condition,t," + ",".join(f"g_{i}" for i in range(d_g))
    lines = [f"# config={chash}", header]
    for row in rows:
        for cond in ("control", "shock"):
            rec = row.extras[cond]
            for t in range(rec.g.shape[0]):
                gvals = ",".join(repr(float(v)) for v in rec.g[t])
                lines.append(f"{rec.seed},{rec.cohort},{cond},{t},{gvals}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _cohort_rows(rows: Sequence[AssayRow], cohort: str) -> List[AssayRow]:
    return [r for r in rows if r.cohort == cohort]


def _build_summary(rows: Sequence[AssayRow], cfg: RunConfig, probe_hash: str) -> Dict:
    summary: Dict = {
        "config_hash": config_hash(cfg),
        "probe_hash": probe_hash,
        "n_rows": len(rows),
        "cohorts": {},
        "tests": {},
    }
    for cohort in cfg.cohorts:
        crows = _cohort_rows(rows, cohort)
        summary["cohorts"][cohort] = {
            "top_right_occupancy": median_iqr([r.top_right_occupancy for r in crows]),
            "bottom_occupancy": median_iqr([r.bottom_occupancy for r in crows]),
            "q_up": median_iqr([float(r.q_by_action[0]) for r in crows]),
            "q_down": median_iqr([float(r.q_by_action[1]) for r in crows]),
            "eta_calibration_r": median_iqr([r.eta_calibration_r for r in crows]),
            "pca_displacement": median_iqr([r.pca_displacement for r in crows]),
            "spectrum_distance": median_iqr([r.spectrum_distance for r in crows]),
            "state_distance": median_iqr([r.state_distance for r in crows]),
            "shock_magnitude": median_iqr([r.shock_magnitude for r in crows]),
        }
    intact = [r.spectrum_distance for r in rows if r.cohort in ("full", "no_conation")]
    ablated = [r.spectrum_distance for r in rows if r.cohort == "no_body_to_g"]
    if len(intact) >= 3 and len(ablated) >= 3:
        u, p = mannwhitney(intact, ablated)
        summary["tests"]["spectrum_ranksum_intact_vs_ablated"] = {"U": u, "p": p,
                                                                  "n": [len(intact), len(ablated)]}
    if len(rows) >= 8:
        rho, p, n = residue_correlation(rows)
        summary["tests"]["residue_spearman"] = {"rho": rho, "p": p, "n": n}
    summary["shock_magnitude_pooled"] = median_iqr([r.shock_magnitude for r in rows])
    summary["acceptance"] = evaluate_criteria(rows, cfg)
    return summary


def _write_figures(fig_dir: Path, rows: Sequence[AssayRow], cfg: RunConfig, summary: Dict) -> None:
    fig_dir.mkdir(parents=True, exist_ok=True)
    chash = config_hash(cfg)
    occupancy = {}
    calib = {}
    curves = {}
    spectrum = {}
    for cohort in cfg.cohorts:
        crows = _cohort_rows(rows, cohort)
        if not crows:
            continue
        occ_rows = []
        for r in crows:
            fracs = np.zeros(9)
            fracs[2] = r.top_right_occupancy
            occ_rows.append(r.extras.get("zone_fractions", fracs))
        occupancy[cohort] = np.vstack(occ_rows)
        calib[cohort] = np.vstack([r.extras["calibration_sample"] for r in crows])
        curves[cohort] = np.vstack([r.extras["recovery_curve"] for r in crows])
        spectrum[cohort] = [r.spectrum_distance for r in crows]
    (fig_dir / "occupancy_bars.svg").write_text(
        figures.occupancy_bars(occupancy, chash), encoding="utf-8")
    (fig_dir / "calibration_scatter.svg").write_text(
        figures.calibration_scatter(calib, chash), encoding="utf-8")
    (fig_dir / "displacement_curves.svg").write_text(
        figures.displacement_curves(curves, chash, cfg.assay.recovery_start), encoding="utf-8")
    (fig_dir / "spectrum_distance_boxes.svg").write_text(
        figures.box_panel(spectrum, chash, "same-state metric-spectrum distance"), encoding="utf-8")
    spear = summary["tests"].get("residue_spearman", {"rho": 0.0, "p": 1.0})
    points = [(r.cohort, r.pca_displacement, r.spectrum_distance) for r in rows]
    (fig_dir / "residue_scatter.svg").write_text(
        figures.residue_scatter(points, spear["rho"], spear["p"], chash), encoding="utf-8")


# ---------------------------------------------------------------------------
# Acceptance-style evaluation of a finished battery
# ---------------------------------------------------------------------------

def _median(vals: Sequence[float]) -> float:
    return float(np.median(np.asarray(vals, dtype=np.float64)))


def evaluate_criteria(rows: Sequence[AssayRow], cfg: RunConfig) -> List[Dict]:
    """Desk-scale findings gates over a finished assay battery.

    Statistical gates are SKIPPED (not failed) when the battery is too small
    to evaluate them: fewer than 8 seeds, fewer post-warmup episodes than the
    occupancy window, or a missing cohort.
    """
    results: List[Dict] = []
    full = _cohort_rows(rows, "full")
    nocon = _cohort_rows(rows, "no_conation")
    nbg = _cohort_rows(rows, "no_body_to_g")
    have_cohorts = bool(full and nocon and nbg)
    n_seeds = len(cfg.seeds)
    post_warmup = cfg.training.episodes - cfg.training.warmup_episodes
    stat_ready = have_cohorts and n_seeds >= 8 and post_warmup >= cfg.assay.final_window

    def add(cid: str, name: str, ok: Optional[bool], detail: str) -> None:
        status = "SKIPPED" if ok is None else ("PASS" if ok else "FAIL")
        results.append({"id": cid, "name": name, "status": status, "detail": detail})

    # shock bookkeeping
    if rows and n_seeds >= 4:
        injected_ok = all(abs(r.injected_total - cfg.assay.shock_len * cfg.assay.shock_delta) < 1e-9
                          for r in rows)
        prefix_ok = all(r.paired_prefix_ok for r in rows)
        pooled = _median([r.shock_magnitude for r in rows])
        window_ok = -1.45 <= pooled <= -1.05
        add("shock_bookkeeping", "paired rollouts and shock magnitude",
            injected_ok and prefix_ok and window_ok,
            f"injected_ok={injected_ok} prefix_ok={prefix_ok} pooled_median_du={pooled:.4f}")
    else:
        add("shock_bookkeeping", "paired rollouts and shock magnitude", None,
            "needs at least 4 seeds")

    if stat_ready:
        tr_full = _median([r.top_right_occupancy for r in full])
        tr_nocon = _median([r.top_right_occupancy for r in nocon])
        tr_nbg = _median([r.top_right_occupancy for r in nbg])
        bot_full = _median([r.bottom_occupancy for r in full])
        bot_nocon = _median([r.bottom_occupancy for r in nocon])
        bot_nbg = _median([r.bottom_occupancy for r in nbg])
        ok = (tr_full > tr_nocon and tr_nbg > tr_nocon
              and tr_full >= 2 * CHANCE_OCCUPANCY and tr_nbg >= 2 * CHANCE_OCCUPANCY
              and bot_full < bot_nocon and bot_nbg < bot_nocon)
        add("conation_behavior", "conative cohorts occupy the viable corner",
            ok,
            f"top_right full={tr_full:.3f} no_conation={tr_nocon:.3f} no_body_to_g={tr_nbg:.3f}; "
            f"bottom full={bot_full:.3f} no_conation={bot_nocon:.3f} no_body_to_g={bot_nbg:.3f}")

        cal_meds = {c: _median([r.eta_calibration_r for r in _cohort_rows(rows, c)])
                    for c in ("full", "no_conation", "no_body_to_g")}
        ok = all(v >= 0.8 for v in cal_meds.values())
        add("calibration", "tendency field calibrated in every cohort", ok,
            " ".join(f"{c}={v:.3f}" for c, v in cal_meds.items()))

        def q_gap(crows: List[AssayRow]) -> float:
            return (_median([float(r.q_by_action[0]) for r in crows])
                    - _median([float(r.q_by_action[1]) for r in crows]))

        gap_full, gap_nocon, gap_nbg = q_gap(full), q_gap(nocon), q_gap(nbg)
        ok = (gap_full > 0.05 and gap_nbg > 0.05
              and abs(gap_nocon) < gap_full and abs(gap_nocon) < gap_nbg)
        add("readiness", "conative preference dissociates by cohort", ok,
            f"q_gap full={gap_full:.4f} no_conation={gap_nocon:.4f} no_body_to_g={gap_nbg:.4f}")

        d_full = _median([r.pca_displacement for r in full])
        d_nocon = _median([r.pca_displacement for r in nocon])
        d_nbg = _median([r.pca_displacement for r in nbg])
        s_full = _median([r.spectrum_distance for r in full])
        s_nocon = _median([r.spectrum_distance for r in nocon])
        s_nbg = _median([r.spectrum_distance for r in nbg])
        intact = [r.spectrum_distance for r in full + nocon]
        ablated = [r.spectrum_distance for r in nbg]
        _, p_spec = mannwhitney(intact, ablated)
        ok = (d_full >= d_nocon > d_nbg and d_nbg < 0.5 * min(d_full, d_nocon)
              and s_full >= s_nocon > s_nbg and p_spec < 0.05)
        add("geometric_residue", "body-to-g routing leaves the geometric residue", ok,
            f"displacement {d_full:.4f}>={d_nocon:.4f}>{d_nbg:.4f}; "
            f"spectrum {s_full:.4f}>={s_nocon:.4f}>{s_nbg:.4f} p={p_spec:.4g}")

        rho, p_rho, n = residue_correlation(rows)
        ok = rho > 0.3 and p_rho < 0.1
        add("residue_coupling", "displacement couples to spectrum distance", ok,
            f"rho={rho:.3f} p={p_rho:.4g} n={n}")
    else:
        reason = ("insufficient scale: needs >=8 seeds, all three cohorts, and "
                  f">={cfg.assay.final_window} post-warmup episodes")
        for cid, name in (
            ("conation_behavior", "conative cohorts occupy the viable corner"),
            ("calibration", "tendency field calibrated in every cohort"),
            ("readiness", "conative preference dissociates by cohort"),
            ("geometric_residue", "body-to-g routing leaves the geometric residue"),
            ("residue_coupling", "displacement couples to spectrum distance"),
        ):
            add(cid, name, None, reason)
    return results


# ---------------------------------------------------------------------------
# One-command replicate and checkpoint inspection
# ---------------------------------------------------------------------------

def replicate(cfg: RunConfig, out_dir: Path, workers: Optional[int] = None) -> Tuple[int, List[Dict]]:
    """Train all cohorts, run the assays, evaluate the findings gates.

    Returns (exit_code, criteria): 0 when nothing failed (skips allowed),
    1 when any gate failed.
    """
    runs_dir = out_dir / "runs"
    assay_dir = out_dir / "assays"
    train_battery(cfg, runs_dir, workers=workers)
    summary = assay_battery(runs_dir, assay_dir, cfg)
    criteria = summary["acceptance"]
    failed = [c for c in criteria if c["status"] == "FAIL"]
    return (1 if failed else 0), criteria


def inspect_checkpoint(path: Path) -> str:
    """Human-readable dump of a checkpoint's coordinates and parameter stats."""
    doc = load_checkpoint(str(path))
    meta = doc["meta"]
    lines = [
        f"checkpoint: {path}",
        f"cohort: {meta.get('cohort')}  seed: {meta.get('seed')}  "
        f"episodes_completed: {meta.get('episodes_completed')}",
        f"config_hash: {meta.get('config_hash')}  run_hash: {meta.get('run_hash')}",
        f"parameters ({sum(arr.size for arr in doc['params'].values())} scalars):",
    ]
    for name in sorted(doc["params"]):
        arr = doc["params"][name]
        lines.append(
            f"  {name:24s} shape={str(tuple(arr.shape)):12s} "
            f"min={arr.min():+.4f} max={arr.max():+.4f} mean={arr.mean():+.4f} std={arr.std():.4f}"
        )
    return "\n".join(lines)
