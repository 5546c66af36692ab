"""The slow perspective latent g and its gradient firewall.

g is the hidden state of a gated recurrent cell driven by the fused state z
together with two scalar prediction-error channels: the one-step
observation-prediction error and the one-step body-prediction error. An
adaptive update rate (a tiny affine+logistic "alpha" readout of the same
error channels) blends the previous g with the GRU candidate, so surprising
steps update the perspective fast and quiet stretches leave it nearly frozen:

    candidate = gru([z; e_obs; e_body * route], g)
    alpha     = logistic(affine([e_obs; e_body * route]))
    g'        = (1 - alpha) * g + alpha * candidate

Error scalars enter through a bounded saturating encoding e/(e + e_ref) so
both channels live on a comparable O(1) scale regardless of raw magnitudes.

Routing: with body-to-g routing off, the body-error input is identically
zero (z stays intact, so bodily information can still reach g weakly through
the interoceptive code inside z).

g persists across episodes with multiplicative decay and is carried as a
value, never as a gradient path; within an episode the update chain stays on
the tape so prediction losses can train the cell. Policy-side losses are
barred from the pathway entirely; `firewall_check` audits that after a
backward pass.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from somagrid import numcore as nc
from somagrid.numcore import GruCell, Tensor


class FirewallViolation(AssertionError):
    """A policy-side loss leaked gradient into a protected parameter."""


@dataclass
class PerspectiveParams:
    d_g: int = 8
    err_ref_obs: float = 0.02
    # body error arrives in squared latent-viability units (readout logits),
    # where a perturbation is equally salient at any saturation level
    err_ref_body: float = 1e-3
    cross_episode_decay: float = 0.99
    # adaptive-rate readout initialization: weights on [obs_err, body_err],
    # then bias. The baseline rate is kept near 0.01 so quiet stretches barely
    # move g (perturbation history persists on the recovery timescale) while
    # bodily surprise opens the gate wide.
    alpha_init_w_obs: float = 0.5
    alpha_init_w_body: float = 8.0
    alpha_init_bias: float = -4.5


@dataclass
class RoutingSwitch:
    body_to_g: bool = True


class Perspective:
    """Owner of g, the recurrent cell, and the adaptive update rate.

    The cell consumes the exteroceptive code together with the two error
    scalars. Interoception reaches the perspective only through its dedicated
    body-prediction-error channel, so switching that channel off severs the
    body-to-perspective route exactly (the ablation's meaning); bodily state
    can then influence g only indirectly, through behavior.
    """

    def __init__(self, params: PerspectiveParams, d_z_obs: int, rng: np.random.Generator):
        self.params = params
        self.d_z_obs = d_z_obs
        self.gru = GruCell(d_z_obs + 2, params.d_g, rng)
        self.alpha_w = nc.parameter(np.array([[params.alpha_init_w_obs, params.alpha_init_w_body]]))
        self.alpha_b = nc.parameter(np.array([params.alpha_init_bias]))
        self.g: Tensor = Tensor(np.zeros(params.d_g))

    # -- parameters ------------------------------------------------------------

    def named_parameters(self) -> List[Tuple[str, Tensor]]:
        out = [(f"perspective.{n}", t) for n, t in self.gru.named_parameters("gru")]
        out.append(("perspective.alpha.w", self.alpha_w))
        out.append(("perspective.alpha.b", self.alpha_b))
        return out

    def parameters(self) -> List[Tensor]:
        return [t for _, t in self.named_parameters()]

    # -- state management --------------------------------------------------------

    def reset_for_rollout(self) -> None:
        """Zero g (the recurrent hidden state); parameters untouched."""
        self.g = Tensor(np.zeros(self.params.d_g))

    def decay_across_episode(self) -> None:
        """Carry g across an episode boundary with multiplicative decay.

        The carried value is detached: backpropagation never crosses episode
        boundaries.
        """
        self.g = Tensor(self.params.cross_episode_decay * self.g.data)

    def encode_error(self, err: float, ref: float) -> float:
        if err < 0:
            raise nc.ContractError(f"squared-error input must be >= 0, got {err}")
        return err / (err + ref)

    def update_g(self, z_obs: Tensor, obs_error: float, body_error: float,
                 routing: RoutingSwitch, alpha_override: Optional[float] = None) -> Tensor:
        """One perspective update; returns the new g (also stored).

        `z_obs` is the exteroceptive code (the interoceptive lane enters only
        via the body-error scalar). `alpha_override` is a test hook forcing
        the update rate to an exact value (0 leaves g unchanged, 1 jumps to
        the candidate).
        """
        e_obs = self.encode_error(float(obs_error), self.params.err_ref_obs)
        e_body = self.encode_error(float(body_error), self.params.err_ref_body) if routing.body_to_g else 0.0
        err_vec = np.array([e_obs, e_body])
        gru_in = nc.concat([z_obs, Tensor(err_vec)])
        candidate = nc.gru_step(self.gru, gru_in, self.g)
        if alpha_override is None:
            alpha = nc.pick(nc.logistic(nc.affine(self.alpha_w, Tensor(err_vec), self.alpha_b)), 0)
        else:
            alpha = Tensor(np.asarray(float(alpha_override)))
        new_g = nc.add(nc.mul_scalar(self.g, nc.one_minus(alpha)), nc.mul_scalar(candidate, alpha))
        self.g = new_g
        return new_g

    def alpha_value(self, obs_error: float, body_error: float, routing: RoutingSwitch) -> float:
        """Current update rate for the given error pair (no tape)."""
        e_obs = self.encode_error(float(obs_error), self.params.err_ref_obs)
        e_body = self.encode_error(float(body_error), self.params.err_ref_body) if routing.body_to_g else 0.0
        pre = (self.alpha_w.data @ np.array([e_obs, e_body]) + self.alpha_b.data)[0]
        return nc.sigmoid_scalar(float(pre))


def firewall_check(loss_name: str, named_params: Dict[str, Tensor],
                   protected_prefixes: Tuple[str, ...] = ("perspective.", "metric_net.")) -> None:
    """Assert a just-backpropagated loss left protected parameters untouched.

    Call after backward() for the named loss alone (grads zeroed beforehand).
    Raises FirewallViolation naming the first offending parameter.
    """
    for name, p in named_params.items():
        if not name.startswith(protected_prefixes):
            continue
        if p.grad is not None and float(np.abs(p.grad).max(initial=0.0)) != 0.0:
            raise FirewallViolation(
                f"{loss_name} leaked gradient into protected parameter {name}"
            )
