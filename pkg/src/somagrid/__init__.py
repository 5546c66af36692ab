"""somagrid: reward-free embodied gridworld agents.

A desk-scale simulator and experiment harness for agents whose behavior is
shaped by an internal bodily-viability signal. The package couples a 15x15
two-gradient gridworld (observation noise falling left to right, bodily
affordance falling top to bottom) to a small network stack: fused
exteroceptive/interoceptive encoders, a slow perspective latent that induces
a positive-definite metric over the fused state, per-action bodily-tendency
prediction, and a conative alignment loss that trains the policy toward the
body-derived action preference without sending gradients back into the body
or perspective pathways.

Everything runs on a hand-rolled float64 reverse-mode autodiff core
(`somagrid.numcore`) so that runs are bit-deterministic given a master seed.
"""

__version__ = "0.1.0"

from somagrid.environment import Action, EnvParams, EnvState, GridWorld, Observation
from somagrid.rng import RngStreams

__all__ = [
    "Action",
    "EnvParams",
    "EnvState",
    "GridWorld",
    "Observation",
    "RngStreams",
    "__version__",
]
