"""Training protocol: reward-free losses, warmup, cohorts, episode loop.

Each (cohort, seed) run trains one agent for a fixed number of 200-step
episodes from the grid center. Losses, all reward-free:

  obs_pred  mean squared error of the action-conditioned next-observation
            prediction; the only loss active during warmup.
  actor     score-function objective whose intrinsic return is the negative
            discounted sum of future observation-prediction errors, with a
            per-episode mean baseline and an entropy bonus.
  body      squared error of the per-action tendency and next-readout heads
            against the environment's counterfactual oracle.
  conative  KL(q || pi) with a detached body-derived preference q, routed
            through the policy head only.

One optimizer step per episode on the weighted sum. The perspective latent
decays (never resets) across episode boundaries; bodily viability and the
prediction-error state do reset. Gradient routing is audited on a live batch
at the first post-warmup episode of every run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from somagrid import numcore as nc
from somagrid.agent import (AgentNet, ConativeConfig, conative_distribution, conative_loss,
                            readout_logit)
from somagrid.checkpoint import encode_array, decode_array, load_checkpoint, save_checkpoint
from somagrid.config import CohortSpec, RunConfig, config_hash, effective_text, run_hash
from somagrid.environment import GridWorld, N_ACTIONS
from somagrid.numcore import Adam, ContractError, NumericsError, Tape, Tensor, backward
from somagrid.perspective import FirewallViolation, Perspective, RoutingSwitch
from somagrid.rng import RngStreams


class TrainingAborted(RuntimeError):
    """Training hit non-finite numbers; carries the episode index."""

    def __init__(self, cohort: str, seed: int, episode: int, message: str):
        super().__init__(f"cohort={cohort} seed={seed} episode={episode}: {message}")
        self.cohort = cohort
        self.seed = seed
        self.episode = episode


@dataclass
class LossBreakdown:
    obs_pred: float
    actor: float
    body: float
    conative: float
    total: float


@dataclass
class EpisodeResult:
    episode: int
    losses: LossBreakdown
    zone_fractions: np.ndarray  # (9,)
    q_mean: np.ndarray          # (5,)
    mean_b_tilde: float
    min_metric_eigenvalue: float


# ---------------------------------------------------------------------------
# Loss pieces
# ---------------------------------------------------------------------------

def discounted_error_returns(pred_errors: Sequence[float], gamma: float) -> np.ndarray:
    """R_t = -(e_t + gamma e_{t+1} + ...): the intrinsic reward-free return."""
    n = len(pred_errors)
    out = np.empty(n)
    acc = 0.0
    for t in range(n - 1, -1, -1):
        acc = pred_errors[t] + gamma * acc
        out[t] = -acc
    return out


def actor_loss(log_probs: Sequence[Tensor], entropies: Sequence[Tensor],
               pred_errors: Sequence[float], gamma: float, entropy_bonus: float) -> Tensor:
    """Mean per-step score-function loss with baseline-centered advantages."""
    n = len(log_probs)
    if n == 0:
        raise ContractError("actor loss needs a non-empty trajectory")
    if not (len(entropies) == len(pred_errors) == n):
        raise ContractError("actor loss trajectory pieces disagree in length")
    returns = discounted_error_returns(pred_errors, gamma)
    advantages = returns - returns.mean()
    score_terms = [nc.scale(lp, -float(a)) for lp, a in zip(log_probs, advantages)]
    score = nc.scale(nc.add_n(score_terms), 1.0 / n)
    bonus = nc.scale(nc.add_n(list(entropies)), -entropy_bonus / n)
    return nc.add(score, bonus)


def body_loss(eta_hat: Tensor, b_hat_next: Tensor, world: GridWorld, state, horizon_k: int) -> Tensor:
    """Action-averaged squared error of both body heads against the oracle."""
    eta_targets = np.array([world.counterfactual_tendency(state, a, horizon_k) for a in range(N_ACTIONS)])
    b_targets = np.array([world.counterfactual_readout(state, a) for a in range(N_ACTIONS)])
    return nc.add(nc.mse(eta_hat, eta_targets), nc.mse(b_hat_next, b_targets))


def sample_categorical(probs: np.ndarray, rng: np.random.Generator) -> int:
    """One action from a probability vector, consuming exactly one uniform."""
    u = rng.random()
    c = np.cumsum(probs)
    idx = int(np.searchsorted(c, u * c[-1], side="right"))
    return min(idx, len(probs) - 1)


# ---------------------------------------------------------------------------
# Run bundle
# ---------------------------------------------------------------------------

_ONEHOTS = np.eye(N_ACTIONS)


@dataclass
class RunBundle:
    """Everything one (cohort, seed) run owns."""

    world: GridWorld
    agent: AgentNet
    perspective: Perspective
    cohort: CohortSpec
    conative: ConativeConfig
    seed: int

    def named_parameters(self) -> List[Tuple[str, Tensor]]:
        return self.agent.named_parameters() + self.perspective.named_parameters()

    def parameters(self) -> List[Tensor]:
        return [t for _, t in self.named_parameters()]

    def parameter_groups(self) -> Dict[str, List[Tuple[str, Tensor]]]:
        groups = self.agent.parameter_groups()
        groups["perspective"] = self.perspective.named_parameters()
        return groups


def build_bundle(cfg: RunConfig, cohort: CohortSpec, seed: int, streams: RngStreams) -> RunBundle:
    """Fresh agent and perspective; cohorts share initialization per seed."""
    init_rng = streams.stream(f"train/{seed}/init")
    agent = AgentNet(cfg.dims, init_rng)
    persp = Perspective(cfg.perspective, cfg.dims.enc_obs_dim, init_rng)
    return RunBundle(GridWorld(cfg.env), agent, persp, cohort, cfg.conative, seed)


# expected gradient reach per loss; None entries in `required` are
# cohort-dependent and filled in at audit time
_FIREWALL_TABLE: Dict[str, Tuple[Tuple[str, ...], Tuple[str, ...]]] = {
    "obs_pred": (("encoders", "obs_decoder", "perspective"),
                 ("policy_head", "state_head", "body_decoder", "metric_net")),
    "actor": (("policy_head", "state_head", "encoders"),
              ("perspective", "metric_net", "obs_decoder", "body_decoder")),
    "body": (("body_decoder", "encoders", "perspective"),
             ("policy_head", "state_head", "obs_decoder", "metric_net")),
    "conative": (("policy_head",),
                 ("state_head", "encoders", "perspective", "metric_net", "obs_decoder", "body_decoder")),
}


def audit_firewall(bundle: RunBundle, loss_tensors: Dict[str, Tensor]) -> None:
    """Backpropagate each loss alone and check the gradient-reach table."""
    groups = bundle.parameter_groups()
    params = bundle.parameters()
    for loss_name, loss in loss_tensors.items():
        required, forbidden = _FIREWALL_TABLE[loss_name]
        nc.zero_grads(params)
        backward(loss)
        for gname in forbidden:
            for pname, p in groups[gname]:
                if p.grad is not None and float(np.abs(p.grad).max(initial=0.0)) != 0.0:
                    raise FirewallViolation(f"loss {loss_name} leaked into {pname}")
        for gname in required:
            reach = 0.0
            for _, p in groups[gname]:
                if p.grad is not None:
                    reach = max(reach, float(np.abs(p.grad).max(initial=0.0)))
            if reach == 0.0:
                raise FirewallViolation(f"loss {loss_name} failed to reach group {gname}")
    nc.zero_grads(params)


# ---------------------------------------------------------------------------
# Episode loop
# ---------------------------------------------------------------------------

class TrainingRun:
    """One (cohort, seed) training run with snapshot/resume support."""

    METRIC_AUDIT_EVERY = 25

    def __init__(self, cfg: RunConfig, cohort: CohortSpec, seed: int,
                 out_dir: Optional[Path] = None):
        cfg.validate()
        self.cfg = cfg
        self.cohort = cohort
        self.seed = seed
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.streams = RngStreams(cfg.master_seed)
        self.bundle = build_bundle(cfg, cohort, seed, self.streams)
        tp = cfg.training
        self.optimizer = Adam(self.bundle.parameters(), lr=tp.lr,
                              beta1=tp.adam_beta1, beta2=tp.adam_beta2, eps=tp.adam_eps)
        self.episode_rows: List[EpisodeResult] = []
        self.trajectory_rows: List[Tuple] = []
        self._next_episode = 0
        self._last_min_eig = float(cfg.dims.metric_eps)

    # -- single episode --------------------------------------------------------

    def run_episode(self, episode_idx: int, audit: bool = False,
                    apply_update: bool = True) -> EpisodeResult:
        cfg, tp = self.cfg, self.cfg.training
        world, agent, persp = self.bundle.world, self.bundle.agent, self.bundle.perspective
        routing = RoutingSwitch(self.cohort.body_to_g)
        warmup = episode_idx < tp.warmup_episodes
        env_rng = self.streams.stream(f"train/{self.seed}/env")
        pol_rng = self.streams.stream(f"train/{self.seed}/policy")

        state = world.initial_state(env_rng)
        obs = world.observe(state)
        p_onehot = np.zeros(N_ACTIONS)
        prev_x_pred: Optional[np.ndarray] = None
        prev_b_hat: Optional[np.ndarray] = None
        prev_action = -1

        zone_counts = np.zeros(9)
        q_sum = np.zeros(N_ACTIONS)
        b_sum = 0.0
        acc = np.zeros(5)  # weighted episode means of (obs, actor, body, con, total)

        n_steps = tp.steps_per_episode
        n_chunks = max(1, min(tp.updates_per_episode, n_steps))
        bounds = [round(i * n_steps / n_chunks) for i in range(n_chunks + 1)]

        for ci in range(n_chunks):
            chunk_len = bounds[ci + 1] - bounds[ci]
            obs_terms: List[Tensor] = []
            body_terms: List[Tensor] = []
            kl_terms: List[Tensor] = []
            log_probs: List[Tensor] = []
            entropies: List[Tensor] = []
            pred_errors: List[float] = []

            with Tape():
                for t in range(bounds[ci], bounds[ci + 1]):
                    b_tilde = obs.b_tilde
                    z_obs, _, z = agent.encode_parts(obs.x, b_tilde, obs.silhouette)
                    e_obs = float(((prev_x_pred - obs.x) ** 2).mean()) if prev_x_pred is not None else 0.0
                    e_body = ((readout_logit(prev_b_hat[prev_action]) - readout_logit(b_tilde)) ** 2
                              if prev_b_hat is not None else 0.0)
                    g = persp.update_g(z_obs, e_obs, e_body, routing)
                    geom = agent.metric_from_g(g.data)
                    phi = agent.quadratic_features(z, geom.m)
                    s = agent.policy_state(z, phi, p_onehot, g.data)
                    logits = agent.policy_logits(s, b_tilde)
                    pi = nc.softmax(logits)
                    log_pi = nc.log_softmax(logits)
                    action = sample_categorical(pi.data, pol_rng)

                    eta_hat, b_hat = agent.body_decode(z, g, b_tilde)
                    q = conative_distribution(eta_hat.data, b_hat.data, self.bundle.conative)

                    if not warmup:
                        log_probs.append(nc.pick(log_pi, action))
                        entropies.append(nc.scale(nc.tensor_sum(nc.mul(pi, log_pi)), -1.0))
                        body_terms.append(body_loss(eta_hat, b_hat, world, state, tp.horizon_k))
                        if self.cohort.conative_on:
                            logits_c = agent.policy_logits(s.detach(), b_tilde)
                            kl_terms.append(conative_loss(q, nc.softmax(logits_c)))

                    x_pred = agent.predict_observation(z, _ONEHOTS[action], g)
                    next_obs, moved = world.step(state, action, env_rng)
                    obs_term = nc.mse(x_pred, next_obs.x)
                    obs_terms.append(obs_term)
                    # the intrinsic return prices total sensory surprise:
                    # exteroceptive prediction error, the realized error of
                    # the readout prediction for the taken action, and the
                    # readout velocity (interoceptive turbulence is itself a
                    # prediction burden; settled bodies are predictable ones)
                    body_realized = (b_hat.data[action] - next_obs.b_tilde) ** 2
                    readout_vel = (next_obs.b_tilde - b_tilde) ** 2
                    pred_errors.append(obs_term.item()
                                       + tp.body_surprise_weight * body_realized
                                       + tp.readout_velocity_weight * readout_vel)

                    zone_counts[world.zone_of(state.row, state.col)] += 1
                    q_sum += q
                    b_sum += b_tilde
                    if tp.log_trajectories:
                        self.trajectory_rows.append(
                            (episode_idx, t, state.row, state.col, action, state.u,
                             next_obs.b_tilde, int(moved), world.zone_of(state.row, state.col))
                        )

                    prev_x_pred = x_pred.data
                    prev_b_hat = b_hat.data
                    prev_action = action
                    p_onehot = _ONEHOTS[action]
                    obs = next_obs

                loss_obs = nc.scale(nc.add_n(obs_terms), 1.0 / chunk_len)
                if warmup:
                    loss_actor = loss_body = loss_con = None
                    total = loss_obs
                else:
                    loss_actor = actor_loss(log_probs, entropies, pred_errors,
                                            tp.gamma, tp.entropy_bonus)
                    loss_body = nc.scale(nc.add_n(body_terms), 1.0 / chunk_len)
                    parts = [loss_obs, loss_actor, nc.scale(loss_body, tp.lambda_body)]
                    if self.cohort.conative_on:
                        loss_con = nc.scale(nc.add_n(kl_terms), 1.0 / chunk_len)
                        parts.append(nc.scale(loss_con, tp.lambda_con))
                    else:
                        loss_con = None
                    total = nc.add_n(parts)

                if audit and not warmup and ci == 0:
                    audit_losses = {"obs_pred": loss_obs, "actor": loss_actor, "body": loss_body}
                    if loss_con is not None:
                        audit_losses["conative"] = loss_con
                    audit_firewall(self.bundle, audit_losses)

                if apply_update:
                    self.optimizer.zero_grad()
                    backward(total)
                    self.optimizer.step()

            # truncate backpropagation at update boundaries: g carries as a value
            persp.g = persp.g.detach()
            w = chunk_len / n_steps
            acc += w * np.array([
                loss_obs.item(),
                loss_actor.item() if loss_actor is not None else 0.0,
                loss_body.item() if loss_body is not None else 0.0,
                loss_con.item() if loss_con is not None else 0.0,
                total.item(),
            ])

        persp.decay_across_episode()
        breakdown = LossBreakdown(obs_pred=float(acc[0]), actor=float(acc[1]),
                                  body=float(acc[2]), conative=float(acc[3]),
                                  total=float(acc[4]))
        # positive-definiteness audit of the induced metric at the logging interval
        if episode_idx % self.METRIC_AUDIT_EVERY == 0 or episode_idx == tp.episodes - 1:
            geom = self.bundle.agent.metric_from_g(persp.g.data)
            min_eig = float(nc.symmetric_eigenvalues(geom.m)[0])
            if min_eig < self.cfg.dims.metric_eps * 0.5:
                raise ContractError(f"metric lost positive-definiteness: min eigenvalue {min_eig}")
            self._last_min_eig = min_eig
        min_eig = self._last_min_eig
        return EpisodeResult(
            episode=episode_idx,
            losses=breakdown,
            zone_fractions=zone_counts / zone_counts.sum(),
            q_mean=q_sum / n_steps,
            mean_b_tilde=b_sum / n_steps,
            min_metric_eigenvalue=min_eig,
        )

    # -- full run ----------------------------------------------------------------

    def train(self, resume: bool = False) -> Dict:
        tp = self.cfg.training
        if resume:
            self._load_snapshot()
        try:
            for ep in range(self._next_episode, tp.episodes):
                audit = ep == tp.warmup_episodes
                result = self.run_episode(ep, audit=audit)
                self.episode_rows.append(result)
                self._next_episode = ep + 1
                if tp.snapshot_every > 0 and (ep + 1) % tp.snapshot_every == 0:
                    self._write_snapshot()
        except NumericsError as exc:
            raise TrainingAborted(self.cohort.name, self.seed, self._next_episode, str(exc)) from exc
        summary = self._finalize()
        return summary

    # -- persistence ---------------------------------------------------------------

    def _run_dir(self) -> Path:
        assert self.out_dir is not None, "this run was built without an output directory"
        d = self.out_dir / self.cohort.name / f"seed{self.seed:02d}"
        d.mkdir(parents=True, exist_ok=True)
        return d

    def checkpoint_path(self) -> Path:
        return self._run_dir() / "checkpoint.json"

    def _meta(self) -> Dict:
        return {
            "cohort": self.cohort.name,
            "seed": self.seed,
            "master_seed": self.cfg.master_seed,
            "config_hash": config_hash(self.cfg),
            "run_hash": run_hash(self.cfg, self.cohort.name, self.seed),
            "episodes_completed": self._next_episode,
        }

    def _finalize(self) -> Dict:
        summary = {"meta": self._meta()}
        if self.out_dir is None:
            return summary
        save_checkpoint(
            str(self.checkpoint_path()),
            [(n, p.data) for n, p in self.bundle.named_parameters()],
            effective_text(self.cfg),
            self._meta(),
        )
        self._write_training_log()
        if self.cfg.training.log_trajectories:
            self._write_trajectories()
        summary["checkpoint"] = str(self.checkpoint_path())
        summary["training_log"] = str(self._run_dir() / "training_log.csv")
        return summary

    def _write_training_log(self) -> None:
        path = self._run_dir() / "training_log.csv"
        cols = (["episode", "obs_pred", "actor", "body", "conative", "total"]
                + [f"zone{i}" for i in range(9)]
                + [f"q{a}" for a in range(N_ACTIONS)]
                + ["mean_b_tilde", "min_metric_eig"])
        lines = [f"# config={config_hash(self.cfg)} run={run_hash(self.cfg, self.cohort.name, self.seed)}"]
        lines.append(",".join(cols))
        for r in self.episode_rows:
            vals = ([r.episode, r.losses.obs_pred, r.losses.actor, r.losses.body,
                     r.losses.conative, r.losses.total]
                    + [float(v) for v in r.zone_fractions]
                    + [float(v) for v in r.q_mean]
                    + [r.mean_b_tilde, r.min_metric_eigenvalue])
            lines.append(",".join(repr(float(v)) if isinstance(v, float) else str(v) for v in vals))
        (path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    def _write_trajectories(self) -> None:
        path = self._run_dir() / "trajectories.csv"
        lines = [f"# config={config_hash(self.cfg)} run={run_hash(self.cfg, self.cohort.name, self.seed)}"]
        lines.append("episode,t,row,col,action,u,b_tilde,moved,zone")
        for row in self.trajectory_rows:
            lines.append(",".join(repr(float(v)) if isinstance(v, float) else str(v) for v in row))
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    def _snapshot_path(self) -> Path:
        return self._run_dir() / "snapshot.json"

    def _write_snapshot(self) -> None:
        extra = {
            "next_episode": self._next_episode,
            "adam": {
                "t": self.optimizer.t,
                "m": [encode_array(a) for a in self.optimizer.m],
                "v": [encode_array(a) for a in self.optimizer.v],
            },
            "g_carry": encode_array(self.bundle.perspective.g.data),
            "rng": self.streams.capture(),
            "last_min_eig": self._last_min_eig,
            "episode_rows": [_episode_row_json(r) for r in self.episode_rows],
            "trajectory_rows": [list(r) for r in self.trajectory_rows],
        }
        save_checkpoint(
            str(self._snapshot_path()),
            [(n, p.data) for n, p in self.bundle.named_parameters()],
            effective_text(self.cfg),
            self._meta(),
            extra=extra,
        )

    def _load_snapshot(self) -> None:
        doc = load_checkpoint(str(self._snapshot_path()))
        params = doc["params"]
        for name, p in self.bundle.named_parameters():
            p.data = params[name]
        extra = doc["extra"]
        self.optimizer.t = int(extra["adam"]["t"])
        self.optimizer.m = [decode_array(o) for o in extra["adam"]["m"]]
        self.optimizer.v = [decode_array(o) for o in extra["adam"]["v"]]
        self.bundle.perspective.g = Tensor(decode_array(extra["g_carry"]))
        self.streams.restore(extra["rng"])
        self._last_min_eig = float(extra["last_min_eig"])
        self.episode_rows = [_episode_row_from_json(o) for o in extra["episode_rows"]]
        self.trajectory_rows = [tuple(r) for r in extra["trajectory_rows"]]
        self._next_episode = int(extra["next_episode"])


def _episode_row_json(r: EpisodeResult) -> Dict:
    return {
        "episode": r.episode,
        "losses": [r.losses.obs_pred, r.losses.actor, r.losses.body, r.losses.conative, r.losses.total],
        "zone_fractions": [float(v) for v in r.zone_fractions],
        "q_mean": [float(v) for v in r.q_mean],
        "mean_b_tilde": r.mean_b_tilde,
        "min_metric_eig": r.min_metric_eigenvalue,
    }


def _episode_row_from_json(o: Dict) -> EpisodeResult:
    l = o["losses"]
    return EpisodeResult(
        episode=int(o["episode"]),
        losses=LossBreakdown(l[0], l[1], l[2], l[3], l[4]),
        zone_fractions=np.array(o["zone_fractions"]),
        q_mean=np.array(o["q_mean"]),
        mean_b_tilde=float(o["mean_b_tilde"]),
        min_metric_eigenvalue=float(o["min_metric_eig"]),
    )


def train_run(cfg: RunConfig, cohort_name: str, seed: int, out_dir: Path,
              resume: bool = False) -> Dict:
    """Train one (cohort, seed) run to completion under `out_dir`."""
    cohort = CohortSpec.from_name(cohort_name)
    run = TrainingRun(cfg, cohort, seed, out_dir)
    if resume and not run._snapshot_path().exists():
        resume = False
    return run.train(resume=resume)
