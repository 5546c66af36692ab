"""The 15x15 two-gradient gridworld.

Two orthogonal structures shape the world. Horizontally, exteroceptive
observation noise falls linearly from `sigma_left` at column 0 to
`sigma_right` at column 14, so the right side of the grid is where the
agent's world-model can predict reliably. Vertically, a sigmoid-shaped
affordance gradient makes the top bodily favorable and the bottom bodily
unfavorable; it drives a latent viability scalar u through a slow
leak/cost/affordance update each step:

    u' = rho_aff * u - c_met - c_move * [moved] + lambda_aff * A(row)

The agent never sees u directly, only the bounded readout b = logistic(u),
plus a noisy four-direction silhouette of neighboring affordance.

The environment also exposes the counterfactual oracle used as the training
target for per-action tendency prediction: the deterministic change in u if
one action were repeated for k steps. It never mutates live state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import List, Optional, Tuple

import numpy as np

from somagrid.numcore import ContractError, sigmoid_scalar


class Action(IntEnum):
    UP = 0
    DOWN = 1
    LEFT = 2
    RIGHT = 3
    STAY = 4


# (drow, dcol) per action index
_MOVES: Tuple[Tuple[int, int], ...] = ((-1, 0), (1, 0), (0, -1), (0, 1), (0, 0))

N_ACTIONS = 5

ZONE_LABELS: Tuple[str, ...] = (
    "top-left", "top-middle", "top-right",
    "middle-left", "middle-middle", "middle-right",
    "bottom-left", "bottom-middle", "bottom-right",
)

TOP_RIGHT_ZONE = 2
BOTTOM_ZONES = (6, 7, 8)


@dataclass
class EnvParams:
    height: int = 15
    width: int = 15
    sigma_left: float = 0.40
    sigma_right: float = 0.05
    affordance_slope: float = 1.6
    rho_aff: float = 0.995
    c_met: float = 0.002
    c_move: float = 0.001
    lambda_aff: float = 0.05
    sigma_sil: float = 0.1


@dataclass
class Observation:
    x: np.ndarray           # 8 Moore-neighborhood texture readings, noised
    b_tilde: float          # logistic(u), exact
    silhouette: np.ndarray  # 4 cardinal-neighbor affordances, noised


@dataclass
class EnvState:
    row: int
    col: int
    u: float
    t: int
    rng: Optional[np.random.Generator] = None
    shock_log: List[Tuple[int, float]] = field(default_factory=list)

    def copy(self) -> "EnvState":
        # rng is shared by reference; the counterfactual oracle never draws
        return EnvState(self.row, self.col, self.u, self.t, self.rng, list(self.shock_log))

    def fingerprint(self) -> Tuple:
        return (self.row, self.col, float(self.u).hex(), self.t, tuple(self.shock_log))


# Moore neighborhood in row-major order, center excluded
_MOORE: Tuple[Tuple[int, int], ...] = (
    (-1, -1), (-1, 0), (-1, 1),
    (0, -1), (0, 1),
    (1, -1), (1, 0), (1, 1),
)


class GridWorld:
    """Static world structure plus the dynamics of the latent viability u."""

    def __init__(self, params: EnvParams | None = None):
        self.params = params or EnvParams()
        p = self.params
        self._affordance = np.array([self._affordance_raw(r) for r in range(p.height)])
        # per-cell texture: normalized column coordinate, so the horizontal
        # gradient is inferable from content while noise degrades the left side
        self._texture = np.tile(np.arange(p.width) / (p.width - 1), (p.height, 1))
        self._sigma = np.array([
            p.sigma_left + (p.sigma_right - p.sigma_left) * j / (p.width - 1)
            for j in range(p.width)
        ])

    # -- static structure ----------------------------------------------------

    def _affordance_raw(self, row: int) -> float:
        p = self.params
        mid = (p.height - 1) / 2.0
        y = (mid - row) * (3.0 / mid)  # spans [-3, 3] top to bottom
        return sigmoid_scalar(p.affordance_slope * y) - 0.5

    def affordance(self, row: int) -> float:
        """Bodily favorability of a row; +~0.49 at the top, -~0.49 at the bottom."""
        if not 0 <= row < self.params.height:
            raise ContractError(f"row {row} outside grid")
        return float(self._affordance[row])

    def noise_std(self, col: int) -> float:
        if not 0 <= col < self.params.width:
            raise ContractError(f"col {col} outside grid")
        return float(self._sigma[col])

    def texture(self, row: int, col: int) -> float:
        """Base content of a cell; out-of-grid coordinates read the nearest cell.

        Clamping keeps the content signal a pure function of column, so the
        vertical axis stays epistemically neutral: wall adjacency never makes
        observations harder or easier to predict, only the noise gradient does.
        """
        r = min(max(row, 0), self.params.height - 1)
        c = min(max(col, 0), self.params.width - 1)
        return float(self._texture[r, c])

    def zone_of(self, row: int, col: int) -> int:
        if not (0 <= row < self.params.height and 0 <= col < self.params.width):
            raise ContractError(f"({row},{col}) outside grid")
        return 3 * (row // 5) + (col // 5)

    def zone_label(self, row: int, col: int) -> str:
        return ZONE_LABELS[self.zone_of(row, col)]

    # -- dynamics ------------------------------------------------------------

    def initial_state(self, rng: Optional[np.random.Generator] = None) -> EnvState:
        """Episode start: grid center, viability reset to 0 (readout 0.5)."""
        return EnvState(self.params.height // 2, self.params.width // 2, 0.0, 0, rng)

    def step_body(self, u: float, moved: bool, row: int, col: int) -> float:
        """One viability update at the (post-move) cell."""
        p = self.params
        return p.rho_aff * u - p.c_met - (p.c_move if moved else 0.0) + p.lambda_aff * float(self._affordance[row])

    def move(self, row: int, col: int, action: int) -> Tuple[int, int, bool]:
        dr, dc = _MOVES[action]
        nr = min(max(row + dr, 0), self.params.height - 1)
        nc = min(max(col + dc, 0), self.params.width - 1)
        return nr, nc, (nr, nc) != (row, col)

    def observe(self, state: EnvState, rng: Optional[np.random.Generator] = None,
                noiseless: bool = False) -> Observation:
        """Draw the agent's observation at the current state.

        Noise draws are fixed-count (8 then 4) per call so paired rollouts
        stay aligned. `noiseless=True` consumes no randomness and returns the
        exact texture/affordance values (used by calibration probes).
        """
        p = self.params
        r0, c0 = state.row, state.col
        x = np.empty(8)
        for i, (dr, dc) in enumerate(_MOORE):
            x[i] = self.texture(r0 + dr, c0 + dc)
        sil = np.empty(4)
        for d in range(4):
            dr, dc = _MOVES[d]
            nr, nc = r0 + dr, c0 + dc
            if 0 <= nr < p.height and 0 <= nc < p.width:
                sil[d] = self._affordance[nr]
            else:
                sil[d] = self._affordance[r0]
        if not noiseless:
            gen = rng if rng is not None else state.rng
            if gen is None:
                raise ContractError("observe needs an RNG unless noiseless")
            x += gen.normal(0.0, self._sigma[c0], size=8)
            sil += gen.normal(0.0, p.sigma_sil, size=4)
        return Observation(x=x, b_tilde=sigmoid_scalar(state.u), silhouette=sil)

    def step(self, state: EnvState, action: int,
             rng: Optional[np.random.Generator] = None) -> Tuple[Observation, bool]:
        """Advance the state by one action; returns (observation, moved).

        Position updates with wall clamping, u updates at the post-move cell,
        the clock increments, and the observation is drawn at the new state.
        """
        if not 0 <= int(action) < N_ACTIONS:
            raise ContractError(f"invalid action {action}")
        nr, nc, moved = self.move(state.row, state.col, int(action))
        state.row, state.col = nr, nc
        state.u = self.step_body(state.u, moved, nr, nc)
        state.t += 1
        return self.observe(state, rng), moved

    def inject_shock(self, state: EnvState, delta: float) -> None:
        """Additive perturbation of u, logged with its timestep."""
        state.u += delta
        state.shock_log.append((state.t, float(delta)))

    # -- counterfactual oracle -----------------------------------------------

    def counterfactual_tendency(self, state: EnvState, action: int, k: int) -> float:
        """Change in u after k deterministic repetitions of `action`.

        Pure arithmetic on copies; the live state is untouched and no
        randomness is consumed (the u dynamics are deterministic).
        """
        if k < 1:
            raise ContractError(f"horizon k must be >= 1, got {k}")
        row, col, u = state.row, state.col, state.u
        u0 = u
        for _ in range(k):
            row, col, moved = self.move(row, col, int(action))
            u = self.step_body(u, moved, row, col)
        return u - u0

    def counterfactual_readout(self, state: EnvState, action: int) -> float:
        """Bounded readout after one deterministic step of `action`."""
        row, col, moved = self.move(state.row, state.col, int(action))
        return sigmoid_scalar(self.step_body(state.u, moved, row, col))

    def stay_fixed_point(self, row: int) -> float:
        """u value at which repeated STAY in `row` is stationary."""
        p = self.params
        return (-p.c_met + p.lambda_aff * self.affordance(row)) / (1.0 - p.rho_aff)


def zone_of(row: int, col: int) -> int:
    """Zone index of a cell on the standard 15x15 grid."""
    if not (0 <= row < 15 and 0 <= col < 15):
        raise ContractError(f"({row},{col}) outside grid")
    return 3 * (row // 5) + (col // 5)
