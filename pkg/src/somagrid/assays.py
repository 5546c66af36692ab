"""Analysis protocols over trained checkpoints.

Behavioral battery: zone occupancy and conative readiness from the final
training episodes, plus body-decoder calibration probed on-trajectory with
noise-free observations (isolating what the decoder learned from what the
sensors jitter).

Geometric-residue battery: paired frozen rollouts (control vs body shock,
same seed-derived random streams, parameters fixed, perspective reset at
onset), summarized by recovery-phase PCA displacement of the perspective
latent, a same-state probe that injects each condition's mean recovery
latent against one frozen input set and measures policy-state and
metric-spectrum separation, and the seed-level coupling between displacement
and spectrum distance.

Statistics are rank-based: Mann-Whitney U (exact for small untied samples,
normal approximation with tie and continuity corrections otherwise),
Spearman correlation with permutation p-values, Pearson r for calibration.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from somagrid import numcore as nc
from somagrid.agent import conative_distribution, readout_logit
from somagrid.checkpoint import load_checkpoint
from somagrid.config import CohortSpec, RunConfig, config_from_text
from somagrid.environment import Action, GridWorld, N_ACTIONS
from somagrid.numcore import ContractError, pca_fit_project, symmetric_eigenvalues
from somagrid.perspective import RoutingSwitch
from somagrid.rng import RngStreams
from somagrid.trainer import RunBundle, build_bundle, sample_categorical

_ONEHOTS = np.eye(N_ACTIONS)


# ---------------------------------------------------------------------------
# Rank statistics
# ---------------------------------------------------------------------------

def rankdata(values: Sequence[float]) -> np.ndarray:
    """Fractional (mid-rank) ranks, 1-based."""
    v = np.asarray(values, dtype=np.float64)
    order = np.argsort(v, kind="stable")
    ranks = np.empty(len(v))
    i = 0
    while i < len(v):
        j = i
        while j + 1 < len(v) and v[order[j + 1]] == v[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def pearson_r(x: Sequence[float], y: Sequence[float]) -> Tuple[float, bool]:
    """Correlation and a degenerate-variance flag (r reported as 0 when flagged)."""
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    if xa.shape != ya.shape or xa.ndim != 1:
        raise ContractError("pearson_r needs two equal-length vectors")
    xc = xa - xa.mean()
    yc = ya - ya.mean()
    vx = float(xc @ xc)
    vy = float(yc @ yc)
    if vx <= 1e-30 or vy <= 1e-30:
        return 0.0, True
    return float((xc @ yc) / math.sqrt(vx * vy)), False


def spearman_rho(x: Sequence[float], y: Sequence[float]) -> float:
    r, degenerate = pearson_r(rankdata(x), rankdata(y))
    return 0.0 if degenerate else r


def spearman_test(x: Sequence[float], y: Sequence[float],
                  mc_permutations: int = 10_000, mc_seed: int = 0) -> Tuple[float, float]:
    """Spearman rho with a two-sided permutation p-value.

    Exact enumeration up to n = 8; seeded Monte-Carlo resampling beyond
    (ties handled by mid-ranks throughout).
    """
    n = len(x)
    if n < 3:
        raise ContractError("spearman_test needs at least 3 pairs")
    rx = rankdata(x)
    ry = rankdata(y)
    rho_obs = spearman_rho(x, y)
    rxc = rx - rx.mean()
    ryc = ry - ry.mean()
    denom = math.sqrt(float(rxc @ rxc) * float(ryc @ ryc))
    if denom <= 1e-30:
        return 0.0, 1.0
    target = abs(rho_obs) - 1e-12
    if n <= 8:
        import itertools

        hits = 0
        total = 0
        for perm in itertools.permutations(range(n)):
            rho_p = float(rxc[list(perm)] @ ryc) / denom
            hits += abs(rho_p) >= target
            total += 1
        return rho_obs, hits / total
    gen = np.random.Generator(np.random.Philox(key=mc_seed))
    hits = 0
    for _ in range(mc_permutations):
        perm = gen.permutation(n)
        rho_p = float(rxc[perm] @ ryc) / denom
        hits += abs(rho_p) >= target
    return rho_obs, (1 + hits) / (1 + mc_permutations)


def _u_exact_cdf(n: int, m: int) -> np.ndarray:
    """Counts of subsets by Mann-Whitney U value (no ties)."""
    # c[i][u]: ways to place i group-A items among the first (i+j) ranks with U=u
    max_u = n * m
    table = np.zeros((n + 1, max_u + 1))
    table[0, 0] = 1.0
    for total in range(1, n + m + 1):
        new = np.zeros_like(table)
        for i in range(0, min(n, total) + 1):
            j = total - i
            if j < 0 or j > m:
                continue
            # next rank goes to group A (adds j to U) or group B
            if i > 0:
                add = table[i - 1]
                if j > 0:
                    new[i, j:] += add[:max_u + 1 - j]
                else:
                    new[i] += add
            if j > 0:
                new[i] += table[i]
        table = new
    return table[n]


def mannwhitney(a: Sequence[float], b: Sequence[float]) -> Tuple[float, float]:
    """Two-sided Mann-Whitney U test.

    Returns (U of the first group, p). Exact distribution for small untied
    samples; otherwise normal approximation with mid-rank tie correction and
    continuity correction. Identical pooled values give p = 1.
    """
    av = np.asarray(a, dtype=np.float64)
    bv = np.asarray(b, dtype=np.float64)
    n, m = len(av), len(bv)
    if n < 3 or m < 3:
        raise ContractError("mannwhitney needs at least 3 values per group")
    pooled = np.concatenate([av, bv])
    ranks = rankdata(pooled)
    u1 = float(ranks[:n].sum()) - n * (n + 1) / 2.0
    u2 = n * m - u1
    u_min = min(u1, u2)
    _, tie_counts = np.unique(pooled, return_counts=True)
    has_ties = bool((tie_counts > 1).any())
    if len(tie_counts) == 1:
        return u1, 1.0
    if not has_ties and n + m <= 20:
        counts = _u_exact_cdf(n, m)
        total = counts.sum()
        p = min(1.0, 2.0 * counts[: int(round(u_min)) + 1].sum() / total)
        return u1, p
    big_n = n + m
    tie_term = float(((tie_counts ** 3) - tie_counts).sum()) / (big_n ** 3 - big_n)
    sigma2 = n * m * (big_n + 1) / 12.0 * (1.0 - tie_term)
    if sigma2 <= 0:
        return u1, 1.0
    z = (u_min - n * m / 2.0 + 0.5) / math.sqrt(sigma2)
    p = min(1.0, 2.0 * 0.5 * (1.0 + math.erf(z / math.sqrt(2.0))))
    return u1, p


# ---------------------------------------------------------------------------
# Checkpoint reconstruction and frozen rollouts
# ---------------------------------------------------------------------------

def bundle_from_checkpoint(path: str | Path) -> Tuple[RunBundle, RunConfig]:
    doc = load_checkpoint(str(path))
    cfg = config_from_text(doc["config_text"])
    cohort = CohortSpec.from_name(doc["meta"]["cohort"])
    seed = int(doc["meta"]["seed"])
    bundle = build_bundle(cfg, cohort, seed, RngStreams(cfg.master_seed))
    params = doc["params"]
    for name, p in bundle.named_parameters():
        if name not in params:
            raise ContractError(f"checkpoint {path} misses parameter {name}")
        p.data = params[name]
    return bundle, cfg


@dataclass
class RolloutRecord:
    cohort: str
    seed: int
    condition: str                 # "control" | "shock"
    g: np.ndarray                  # (T, d_g), after each step's update
    u: np.ndarray                  # (T,), latent viability before acting
    b_tilde: np.ndarray            # (T,)
    row: np.ndarray                # (T,) int
    col: np.ndarray                # (T,) int
    action: np.ndarray             # (T,) int
    injected_total: float = 0.0

    def prefix_fingerprint(self, upto: int) -> bytes:
        h = hashlib.sha256()
        for arr in (self.g[:upto], self.u[:upto], self.b_tilde[:upto],
                    self.row[:upto], self.col[:upto], self.action[:upto]):
            h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        return h.digest()


@dataclass
class ProbeInput:
    x: np.ndarray
    b_tilde: float
    silhouette: np.ndarray
    p: np.ndarray


@dataclass
class ProbeSet:
    inputs: List[ProbeInput]

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for pi in self.inputs:
            for arr in (pi.x, [pi.b_tilde], pi.silhouette, pi.p):
                h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        return h.hexdigest()


def shock_rollout(bundle: RunBundle, cfg: RunConfig, condition: str,
                  capture_probes: Optional[List[int]] = None
                  ) -> Tuple[RolloutRecord, List[ProbeInput]]:
    """One frozen-parameter rollout under paired random streams.

    Control and shock share the seed-keyed env and policy streams, so records
    are bit-identical until the first injection. In the shock condition u
    receives `shock_delta` after each step in the shock window; the bounded
    readout is refreshed so the agent sees the perturbation from the next
    step on.
    """
    if condition not in ("control", "shock"):
        raise ContractError(f"unknown rollout condition {condition!r}")
    a = cfg.assay
    world, agent, persp = bundle.world, bundle.agent, bundle.perspective
    routing = RoutingSwitch(bundle.cohort.body_to_g)
    streams = RngStreams(cfg.master_seed)
    env_rng = streams.fresh(f"rollout/{bundle.seed}/env")
    pol_rng = streams.fresh(f"rollout/{bundle.seed}/policy")

    persp.reset_for_rollout()
    state = world.initial_state(env_rng)
    obs = world.observe(state)
    p_onehot = np.zeros(N_ACTIONS)
    prev_x_pred: Optional[np.ndarray] = None
    prev_b_hat: Optional[np.ndarray] = None
    prev_action = -1

    steps = a.rollout_steps
    d_g = cfg.perspective.d_g
    g_log = np.zeros((steps, d_g))
    u_log = np.zeros(steps)
    b_log = np.zeros(steps)
    row_log = np.zeros(steps, dtype=np.int64)
    col_log = np.zeros(steps, dtype=np.int64)
    act_log = np.zeros(steps, dtype=np.int64)
    probes: List[ProbeInput] = []
    capture = set(capture_probes or ())

    for t in range(steps):
        b_tilde = obs.b_tilde
        if t in capture:
            probes.append(ProbeInput(obs.x.copy(), b_tilde, obs.silhouette.copy(), p_onehot.copy()))
        z_obs, _, z = agent.encode_parts(obs.x, b_tilde, obs.silhouette)
        e_obs = float(((prev_x_pred - obs.x) ** 2).mean()) if prev_x_pred is not None else 0.0
        e_body = ((readout_logit(prev_b_hat[prev_action]) - readout_logit(b_tilde)) ** 2
                  if prev_b_hat is not None else 0.0)
        g = persp.update_g(z_obs, e_obs, e_body, routing)

        g_log[t] = g.data
        u_log[t] = state.u
        b_log[t] = b_tilde
        row_log[t] = state.row
        col_log[t] = state.col

        geom = agent.metric_from_g(g.data)
        phi = agent.quadratic_features(z, geom.m)
        s = agent.policy_state(z, phi, p_onehot, g.data)
        logits = agent.policy_logits(s, b_tilde)
        pi = nc.softmax(logits)
        action = sample_categorical(pi.data, pol_rng)
        act_log[t] = action

        _, b_hat = agent.body_decode(z, g, b_tilde)
        x_pred = agent.predict_observation(z, _ONEHOTS[action], g)
        next_obs, _ = world.step(state, action, env_rng)
        if condition == "shock" and a.shock_start <= t < a.shock_start + a.shock_len:
            world.inject_shock(state, a.shock_delta)
            next_obs.b_tilde = nc.sigmoid_scalar(state.u)

        prev_x_pred = x_pred.data
        prev_b_hat = b_hat.data
        prev_action = action
        p_onehot = _ONEHOTS[action]
        obs = next_obs

    record = RolloutRecord(
        cohort=bundle.cohort.name, seed=bundle.seed, condition=condition,
        g=g_log, u=u_log, b_tilde=b_log, row=row_log, col=col_log, action=act_log,
        injected_total=float(sum(d for _, d in state.shock_log)),
    )
    return record, probes


def build_probe_set(bundle: RunBundle, cfg: RunConfig) -> ProbeSet:
    """Fixed probe inputs drawn once from this bundle's control rollout."""
    steps = cfg.assay.rollout_steps
    count = cfg.assay.probe_count
    idx = sorted(set(int(round(v)) for v in np.linspace(0, steps - 1, count)))
    _, probes = shock_rollout(bundle, cfg, "control", capture_probes=idx)
    return ProbeSet(probes)


# ---------------------------------------------------------------------------
# Residue measures
# ---------------------------------------------------------------------------

@dataclass
class ResidueResult:
    displacement: float
    degenerate: bool
    recovery_curve: np.ndarray  # per-timestep control-shock distance in PC space
    g_control_mean: np.ndarray
    g_shock_mean: np.ndarray


def pca_displacement(control: RolloutRecord, shock: RolloutRecord, cfg: RunConfig) -> ResidueResult:
    """Distance between condition means in a shared recovery-phase PC basis."""
    start = cfg.assay.recovery_start
    gc = control.g[start:]
    gs = shock.g[start:]
    union = np.vstack([gc, gs])
    fit = pca_fit_project(union, cfg.assay.pca_components)
    n = gc.shape[0]
    proj_c = fit.projected[:n]
    proj_s = fit.projected[n:]
    disp = float(np.linalg.norm(proj_c.mean(axis=0) - proj_s.mean(axis=0)))
    curve = np.linalg.norm(proj_c - proj_s, axis=1)
    return ResidueResult(
        displacement=0.0 if fit.degenerate else disp,
        degenerate=fit.degenerate,
        recovery_curve=curve,
        g_control_mean=gc.mean(axis=0),
        g_shock_mean=gs.mean(axis=0),
    )


def same_state_probe(bundle: RunBundle, g_control: np.ndarray, g_shock: np.ndarray,
                     probes: ProbeSet) -> Tuple[float, float]:
    """Policy-state and metric-spectrum separation under two injected latents.

    Each probe input is evaluated with both g values; the metric depends only
    on g, so its spectrum distance is computed once from the two geometries.
    """
    agent = bundle.agent
    geom_c = agent.metric_from_g(g_control)
    geom_s = agent.metric_from_g(g_shock)
    spec_c = symmetric_eigenvalues(geom_c.m)
    spec_s = symmetric_eigenvalues(geom_s.m)
    spectrum_distance = float(np.linalg.norm(spec_c - spec_s))
    dists = []
    for pi in probes.inputs:
        z = agent.encode(pi.x, pi.b_tilde, pi.silhouette)
        phi_c = agent.quadratic_features(z, geom_c.m)
        phi_s = agent.quadratic_features(z, geom_s.m)
        s_c = agent.policy_state(z, phi_c, pi.p, g_control)
        s_s = agent.policy_state(z, phi_s, pi.p, g_shock)
        dists.append(float(np.linalg.norm(s_c.data - s_s.data)))
    return float(np.mean(dists)), spectrum_distance


# ---------------------------------------------------------------------------
# Behavioral measures
# ---------------------------------------------------------------------------

@dataclass
class CalibrationResult:
    r: float
    degenerate: bool
    predicted: np.ndarray
    oracle: np.ndarray


def calibration_assay(bundle: RunBundle, cfg: RunConfig) -> CalibrationResult:
    """Tendency-gap calibration over on-trajectory states.

    The frozen agent behaves under its normal noisy observations while each
    visited state is probed with a noise-free observation: the decoder's
    UP-DOWN tendency gap there is compared to the environment's counterfactual
    gap. Pearson r over all visited states.
    """
    a = cfg.assay
    world, agent, persp = bundle.world, bundle.agent, bundle.perspective
    routing = RoutingSwitch(bundle.cohort.body_to_g)
    streams = RngStreams(cfg.master_seed)
    predicted: List[float] = []
    oracle: List[float] = []
    steps_per_episode = cfg.training.steps_per_episode
    for ep in range(a.calibration_episodes):
        env_rng = streams.fresh(f"calibration/{bundle.seed}/{ep}/env")
        pol_rng = streams.fresh(f"calibration/{bundle.seed}/{ep}/policy")
        persp.reset_for_rollout()
        state = world.initial_state(env_rng)
        obs = world.observe(state)
        p_onehot = np.zeros(N_ACTIONS)
        prev_x_pred: Optional[np.ndarray] = None
        prev_b_hat: Optional[np.ndarray] = None
        prev_action = -1
        for t in range(steps_per_episode):
            b_tilde = obs.b_tilde
            z_obs, _, z = agent.encode_parts(obs.x, b_tilde, obs.silhouette)
            e_obs = float(((prev_x_pred - obs.x) ** 2).mean()) if prev_x_pred is not None else 0.0
            e_body = ((readout_logit(prev_b_hat[prev_action]) - readout_logit(b_tilde)) ** 2
                      if prev_b_hat is not None else 0.0)
            g = persp.update_g(z_obs, e_obs, e_body, routing)

            clean = world.observe(state, noiseless=True)
            z_clean = agent.encode(clean.x, clean.b_tilde, clean.silhouette)
            eta_clean, _ = agent.body_decode(z_clean, g, clean.b_tilde)
            predicted.append(float(eta_clean.data[Action.UP] - eta_clean.data[Action.DOWN]))
            oracle.append(
                world.counterfactual_tendency(state, Action.UP, cfg.training.horizon_k)
                - world.counterfactual_tendency(state, Action.DOWN, cfg.training.horizon_k)
            )

            geom = agent.metric_from_g(g.data)
            phi = agent.quadratic_features(z, geom.m)
            s = agent.policy_state(z, phi, p_onehot, g.data)
            pi = nc.softmax(agent.policy_logits(s, b_tilde))
            action = sample_categorical(pi.data, pol_rng)
            _, b_hat = agent.body_decode(z, g, b_tilde)
            x_pred = agent.predict_observation(z, _ONEHOTS[action], g)
            next_obs, _ = world.step(state, action, env_rng)
            prev_x_pred = x_pred.data
            prev_b_hat = b_hat.data
            prev_action = action
            p_onehot = _ONEHOTS[action]
            obs = next_obs
    if len(predicted) < a.calibration_min_samples:
        raise ContractError(
            f"calibration needs >= {a.calibration_min_samples} states, got {len(predicted)}"
        )
    r, degenerate = pearson_r(predicted, oracle)
    return CalibrationResult(r, degenerate, np.array(predicted), np.array(oracle))


def read_training_log(path: str | Path) -> Dict[str, np.ndarray]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    rows = [ln for ln in lines if ln and not ln.startswith("#")]
    header = rows[0].split(",")
    data = np.array([[float(tok) for tok in ln.split(",")] for ln in rows[1:]])
    return {name: data[:, i] for i, name in enumerate(header)}


@dataclass
class OccupancySummary:
    zone_fractions: np.ndarray  # (9,), averaged over the analysis window
    top_right: float
    bottom: float
    window_episodes: int
    short_run: bool


def occupancy_assay(log: Dict[str, np.ndarray], final_window: int) -> OccupancySummary:
    """Zone occupancy averaged over the final training episodes.

    Runs shorter than the window use everything available and are flagged.
    """
    n = len(log["episode"])
    short = n < final_window
    window = n if short else final_window
    fracs = np.array([log[f"zone{i}"][-window:].mean() for i in range(9)])
    return OccupancySummary(
        zone_fractions=fracs,
        top_right=float(fracs[2]),
        bottom=float(fracs[6] + fracs[7] + fracs[8]),
        window_episodes=window,
        short_run=short,
    )


def readiness_assay(log: Dict[str, np.ndarray], final_window: int) -> np.ndarray:
    """Mean conative preference per action over the final training episodes."""
    n = len(log["episode"])
    window = min(n, final_window)
    return np.array([log[f"q{a}"][-window:].mean() for a in range(N_ACTIONS)])


# ---------------------------------------------------------------------------
# Per-run assay record
# ---------------------------------------------------------------------------

@dataclass
class AssayRow:
    cohort: str
    seed: int
    top_right_occupancy: float
    bottom_occupancy: float
    q_by_action: np.ndarray
    eta_calibration_r: float
    calibration_degenerate: bool
    pca_displacement: float
    displacement_degenerate: bool
    state_distance: float
    spectrum_distance: float
    shock_magnitude: float
    injected_total: float
    paired_prefix_ok: bool
    occupancy_short_run: bool
    extras: dict = field(default_factory=dict)


REPORT_COLUMNS = [
    "cohort", "seed", "top_right_occupancy", "bottom_occupancy",
    "q_up", "q_down", "q_left", "q_right", "q_stay",
    "eta_calibration_r", "calibration_degenerate",
    "pca_displacement", "displacement_degenerate",
    "state_distance", "spectrum_distance",
    "shock_magnitude", "injected_total", "paired_prefix_ok", "occupancy_short_run",
]


def assay_row_values(row: AssayRow) -> List:
    return [
        row.cohort, row.seed, row.top_right_occupancy, row.bottom_occupancy,
        *[float(v) for v in row.q_by_action],
        row.eta_calibration_r, int(row.calibration_degenerate),
        row.pca_displacement, int(row.displacement_degenerate),
        row.state_distance, row.spectrum_distance,
        row.shock_magnitude, row.injected_total,
        int(row.paired_prefix_ok), int(row.occupancy_short_run),
    ]


def assay_run(checkpoint_path: str | Path, training_log_path: str | Path,
              probes: ProbeSet, cfg: RunConfig) -> AssayRow:
    """Full assay battery for one trained (cohort, seed) run."""
    bundle, ckpt_cfg = bundle_from_checkpoint(checkpoint_path)
    a = cfg.assay

    control, _ = shock_rollout(bundle, cfg, "control")
    shock, _ = shock_rollout(bundle, cfg, "shock")
    prefix_ok = (
        control.prefix_fingerprint(a.shock_start) == shock.prefix_fingerprint(a.shock_start)
    )
    residue = pca_displacement(control, shock, cfg)
    state_dist, spectrum_dist = same_state_probe(
        bundle, residue.g_control_mean, residue.g_shock_mean, probes
    )
    shock_magnitude = float((shock.u[a.recovery_start:] - control.u[a.recovery_start:]).mean())

    calib = calibration_assay(bundle, cfg)
    log = read_training_log(training_log_path)
    occupancy = occupancy_assay(log, a.final_window)
    q_by_action = readiness_assay(log, a.final_window)

    return AssayRow(
        cohort=bundle.cohort.name,
        seed=bundle.seed,
        top_right_occupancy=occupancy.top_right,
        bottom_occupancy=occupancy.bottom,
        q_by_action=q_by_action,
        eta_calibration_r=calib.r,
        calibration_degenerate=calib.degenerate,
        pca_displacement=residue.displacement,
        displacement_degenerate=residue.degenerate,
        state_distance=state_dist,
        spectrum_distance=spectrum_dist,
        shock_magnitude=shock_magnitude,
        injected_total=shock.injected_total,
        paired_prefix_ok=bool(prefix_ok),
        occupancy_short_run=occupancy.short_run,
        extras={
            "recovery_curve": residue.recovery_curve,
            "calibration_sample": _scatter_sample(calib),
            "zone_fractions": occupancy.zone_fractions,
            "control": control,
            "shock": shock,
        },
    )


def _scatter_sample(calib: CalibrationResult, limit: int = 200) -> np.ndarray:
    n = len(calib.predicted)
    idx = np.linspace(0, n - 1, min(limit, n)).round().astype(int)
    return np.column_stack([calib.oracle[idx], calib.predicted[idx]])


# ---------------------------------------------------------------------------
# Cohort-level aggregation
# ---------------------------------------------------------------------------

def median_iqr(values: Sequence[float]) -> Dict[str, float]:
    v = np.asarray(values, dtype=np.float64)
    return {
        "median": float(np.median(v)),
        "q25": float(np.percentile(v, 25)),
        "q75": float(np.percentile(v, 75)),
    }


def residue_correlation(rows: Sequence[AssayRow]) -> Tuple[float, float, int]:
    """Seed-level Spearman coupling of displacement and spectrum distance."""
    if len(rows) < 8:
        raise ContractError("residue correlation needs at least 8 seed-level pairs")
    disp = [r.pca_displacement for r in rows]
    spec = [r.spectrum_distance for r in rows]
    rho, p = spearman_test(disp, spec)
    return rho, p, len(rows)
