"""The agent's network stack.

Two small encoders fuse the exteroceptive reading (8 neighbor textures) and
the interoceptive channel (bounded readout plus 4-direction affordance
silhouette) into a fused state z. A slow perspective latent g (owned by
`somagrid.perspective`) induces a positive-definite metric M over z via a
learned lower-triangular factor; quadratic features vec[z (M z)^T] inject the
metric's cross-couplings into the policy state alongside z itself, the
previous-action trace, and g.

The body decoder predicts, per candidate action, the k-step tendency of the
latent viability and the next bounded readout. A detached conative score over
those predictions yields a soft action preference q; the conative loss pulls
the policy toward q through the policy head only, so conation never rewrites
the body or perspective pathways.

Gradient routing is part of the architecture: phi and g enter the policy
state as values (the policy-side losses cannot reach the metric network or
the perspective through them), while g enters both decoders live (prediction
losses are what train the perspective).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from somagrid import numcore as nc
from somagrid.numcore import ContractError, ShapeError, Tensor


@dataclass
class AgentDims:
    obs_dim: int = 8
    sil_dim: int = 4
    enc_obs_dim: int = 16
    enc_body_dim: int = 8
    d_g: int = 8
    state_dim: int = 32
    n_actions: int = 5
    metric_eps: float = 1e-3
    max_parameters: int = 30_000

    @property
    def body_in_dim(self) -> int:
        return 1 + self.sil_dim

    @property
    def d_z(self) -> int:
        return self.enc_obs_dim + self.enc_body_dim

    @property
    def tril_size(self) -> int:
        return self.d_z * (self.d_z + 1) // 2

    @property
    def state_in_dim(self) -> int:
        return self.d_z + self.d_z * self.d_z + self.n_actions + self.d_g


@dataclass
class ConativeConfig:
    """Weights and temperature of the conative score.

    The tendency term dominates by design; the next-readout term is a small
    corrective. The temperature sets how sharply tendency differences convert
    into preference differences and is calibrated so that realistic learned
    tendency gaps (a few hundredths in u-units at horizon 4) produce a
    clearly selective preference without saturating it.
    """

    w_eta: float = 1.0
    w_b: float = 0.5
    temperature: float = 0.04

    def __post_init__(self) -> None:
        if self.temperature <= 0:
            raise ValueError(f"conative temperature must be positive, got {self.temperature}")


@dataclass
class MetricGeometry:
    ell: np.ndarray  # lower-triangular factor (d_z, d_z)
    m: np.ndarray    # symmetric positive-definite metric (d_z, d_z)
    eps: float


@dataclass
class AgentStep:
    """One timestep's logged bundle."""

    t: int
    x: np.ndarray
    b_tilde: float
    silhouette: np.ndarray
    p: np.ndarray
    z: np.ndarray
    g: np.ndarray
    s: np.ndarray
    policy_logits: np.ndarray
    pi: np.ndarray
    q: np.ndarray
    eta_hat: np.ndarray
    b_hat_next: np.ndarray
    predicted_x_next: np.ndarray
    action: int = -1
    row: int = -1
    col: int = -1
    u: float = 0.0
    moved: bool = False
    zone: int = -1
    extras: dict = field(default_factory=dict)


class AgentNet:
    """Parameter container and forward operations for one agent."""

    def __init__(self, dims: AgentDims, rng: np.random.Generator):
        self.dims = dims
        d = dims
        self.enc_obs_w, self.enc_obs_b = nc.init_affine(rng, d.enc_obs_dim, d.obs_dim)
        self.enc_body_w, self.enc_body_b = nc.init_affine(rng, d.enc_body_dim, d.body_in_dim)
        self.metric_w, self.metric_b = nc.init_affine(rng, d.tril_size, d.d_g)
        self.state_w, self.state_b = nc.init_affine(rng, d.state_dim, d.state_in_dim)
        self.policy_w, self.policy_b = nc.init_affine(rng, d.n_actions, d.state_dim + 1)
        self.obs_dec_w, self.obs_dec_b = nc.init_affine(rng, d.obs_dim, d.d_z + d.n_actions + d.d_g)
        self.body_dec_w, self.body_dec_b = nc.init_affine(rng, 2 * d.n_actions, d.d_z + d.d_g + 1)
        self._tril_idx = np.tril_indices(d.d_z)
        self._diag_idx = np.diag_indices(d.d_z)
        n = self.parameter_count()
        if n >= dims.max_parameters:
            raise ContractError(f"agent has {n} parameters, desk-scale guard is {dims.max_parameters}")

    # -- parameter bookkeeping -------------------------------------------------

    def named_parameters(self) -> List[Tuple[str, Tensor]]:
        return [
            ("enc_obs.w", self.enc_obs_w), ("enc_obs.b", self.enc_obs_b),
            ("enc_body.w", self.enc_body_w), ("enc_body.b", self.enc_body_b),
            ("metric_net.w", self.metric_w), ("metric_net.b", self.metric_b),
            ("state_head.w", self.state_w), ("state_head.b", self.state_b),
            ("policy_head.w", self.policy_w), ("policy_head.b", self.policy_b),
            ("obs_decoder.w", self.obs_dec_w), ("obs_decoder.b", self.obs_dec_b),
            ("body_decoder.w", self.body_dec_w), ("body_decoder.b", self.body_dec_b),
        ]

    def parameters(self) -> List[Tensor]:
        return [t for _, t in self.named_parameters()]

    def parameter_groups(self) -> Dict[str, List[Tuple[str, Tensor]]]:
        return {
            "encoders": [("enc_obs.w", self.enc_obs_w), ("enc_obs.b", self.enc_obs_b),
                         ("enc_body.w", self.enc_body_w), ("enc_body.b", self.enc_body_b)],
            "metric_net": [("metric_net.w", self.metric_w), ("metric_net.b", self.metric_b)],
            "state_head": [("state_head.w", self.state_w), ("state_head.b", self.state_b)],
            "policy_head": [("policy_head.w", self.policy_w), ("policy_head.b", self.policy_b)],
            "obs_decoder": [("obs_decoder.w", self.obs_dec_w), ("obs_decoder.b", self.obs_dec_b)],
            "body_decoder": [("body_decoder.w", self.body_dec_w), ("body_decoder.b", self.body_dec_b)],
        }

    def parameter_count(self) -> int:
        return sum(t.data.size for _, t in self.named_parameters())

    # -- forward operations ------------------------------------------------------

    def encode_parts(self, x, b_tilde: float, silhouette) -> Tuple[Tensor, Tensor, Tensor]:
        """Exteroceptive code, interoceptive code, and their fused state z."""
        x_t = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))
        if x_t.data.shape != (self.dims.obs_dim,):
            raise ShapeError(f"exteroceptive input must be ({self.dims.obs_dim},), got {x_t.data.shape}")
        body_in = np.concatenate(([float(b_tilde)], np.asarray(silhouette, dtype=np.float64)))
        if body_in.shape != (self.dims.body_in_dim,):
            raise ShapeError(f"interoceptive input must be ({self.dims.body_in_dim},)")
        z_obs = nc.tanh(nc.affine(self.enc_obs_w, x_t, self.enc_obs_b))
        z_body = nc.tanh(nc.affine(self.enc_body_w, Tensor(body_in), self.enc_body_b))
        return z_obs, z_body, nc.concat([z_obs, z_body])

    def encode(self, x, b_tilde: float, silhouette) -> Tensor:
        """Fused state z = [tanh-affine(x); tanh-affine([b; silhouette])]."""
        return self.encode_parts(x, b_tilde, silhouette)[2]

    def metric_from_g(self, g_value: np.ndarray) -> MetricGeometry:
        """Positive-definite metric induced by g: M = L L^T + eps I.

        Computed on raw arrays: the metric network sits on the perspective
        side of the gradient firewall and no loss path reaches it, so the
        geometry is a pure readout of g.
        """
        g = np.asarray(g_value, dtype=np.float64)
        if g.shape != (self.dims.d_g,):
            raise ShapeError(f"g must be ({self.dims.d_g},), got {g.shape}")
        ell_entries = self.metric_w.data @ g + self.metric_b.data
        d = self.dims.d_z
        ell = np.zeros((d, d))
        ell[self._tril_idx] = ell_entries
        m = ell @ ell.T
        m = 0.5 * (m + m.T)
        m[self._diag_idx] += self.dims.metric_eps
        return MetricGeometry(ell=ell, m=m, eps=self.dims.metric_eps)

    def quadratic_features(self, z: Tensor, m: np.ndarray) -> Tensor:
        """vec[z (M z)^T], row-major: entry (i, j) = z_i * (M z)_j."""
        if m.shape != (self.dims.d_z, self.dims.d_z):
            raise ShapeError(f"metric must be ({self.dims.d_z},{self.dims.d_z})")
        mz = nc.matmul(Tensor(m), z)
        return nc.flatten(nc.outer(z, mz))

    def policy_state(self, z: Tensor, phi: Tensor, p_onehot: np.ndarray, g_value: np.ndarray) -> Tensor:
        """Policy-facing state from z, the metric features, the action trace, and g.

        phi carries z live (policy losses may train the encoders through it)
        but is built on a value-only metric; g enters as a value. Policy-side
        gradients therefore stop at the state head, the encoders, and nothing
        deeper.
        """
        p_arr = np.asarray(p_onehot, dtype=np.float64)
        g_arr = np.asarray(g_value, dtype=np.float64)
        if p_arr.shape != (self.dims.n_actions,) or g_arr.shape != (self.dims.d_g,):
            raise ShapeError("policy_state inputs have wrong shapes")
        joint = nc.concat([z, phi, Tensor(p_arr), Tensor(g_arr)])
        return nc.tanh(nc.affine(self.state_w, joint, self.state_b))

    def policy_logits(self, s: Tensor, b_tilde: float) -> Tensor:
        """Action logits from the policy state with the raw readout appended."""
        joint = nc.concat([s, Tensor(np.array([float(b_tilde)]))])
        return nc.affine(self.policy_w, joint, self.policy_b)

    def policy(self, s: Tensor, b_tilde: float) -> Tuple[Tensor, Tensor]:
        logits = self.policy_logits(s, b_tilde)
        return logits, nc.softmax(logits)

    def predict_observation(self, z: Tensor, action_onehot: np.ndarray, g: Tensor) -> Tensor:
        """Action-conditioned prediction of the next exteroceptive reading."""
        a_arr = np.asarray(action_onehot, dtype=np.float64)
        if a_arr.shape != (self.dims.n_actions,):
            raise ShapeError("action one-hot has wrong shape")
        joint = nc.concat([z, Tensor(a_arr), g])
        return nc.affine(self.obs_dec_w, joint, self.obs_dec_b)

    def body_decode(self, z: Tensor, g: Tensor, b_tilde: float) -> Tuple[Tensor, Tensor]:
        """Per-action viability tendency and next bounded readout.

        Both heads work in the latent viability coordinate, so the decoder
        consumes the readout through its logit (an exact reparametrization of
        the bounded channel). The tendency head is linear; the readout head
        predicts a per-action latent delta around the current logit and maps
        it back through the logistic, so an untrained head already predicts
        "no change" and training only has to capture the small action-
        conditioned drift.
        """
        u_in = _readout_logit(b_tilde)
        joint = nc.concat([z, g, Tensor(np.array([u_in]))])
        out = nc.affine(self.body_dec_w, joint, self.body_dec_b)
        n = self.dims.n_actions
        eta_hat = nc.slice_vec(out, 0, n)
        b_hat_next = nc.logistic(nc.shift(nc.slice_vec(out, n, 2 * n), u_in))
        return eta_hat, b_hat_next


def readout_logit(b_tilde: float) -> float:
    """Inverse of the bounded readout, clamped away from the numeric rails.

    Body-prediction quantities are handled in this latent coordinate so that
    saturation of the readout never flattens error or tendency signals.
    """
    b = min(max(float(b_tilde), 1e-12), 1.0 - 1e-12)
    return math.log(b / (1.0 - b))


_readout_logit = readout_logit


def conative_distribution(eta_hat: np.ndarray, b_hat_next: np.ndarray, cfg: ConativeConfig) -> np.ndarray:
    """Soft action preference from detached body predictions.

    Operates on plain arrays by construction: there is no tape path from the
    preference back into the decoder or perspective.
    """
    eta = np.asarray(eta_hat, dtype=np.float64)
    b_next = np.asarray(b_hat_next, dtype=np.float64)
    if eta.shape != b_next.shape or eta.ndim != 1:
        raise ShapeError("conative score needs matching per-action vectors")
    v = (cfg.w_eta * eta + cfg.w_b * b_next) / cfg.temperature
    v = v - v.max()
    e = np.exp(v)
    return e / e.sum()


def conative_loss(q: np.ndarray, pi: Tensor) -> Tensor:
    """KL(q || pi) with a detached target; gradients reach pi's logits only."""
    return nc.kl_divergence(np.asarray(q, dtype=np.float64), pi)


def action_entropy(pi: Tensor, log_pi: Tensor) -> Tensor:
    """H(pi) from matched probability and log-probability tensors."""
    return nc.scale(nc.tensor_sum(nc.mul(pi, log_pi)), -1.0)
