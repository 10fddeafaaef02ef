"""FrozenLake gridworld with deterministic or slippery dynamics.

Cells are addressed by flat index ``row * cols + col``. Actions follow the
usual convention Left=0, Down=1, Right=2, Up=3. Slippery moves realize the
intended direction or one of its two perpendiculars with probability 1/3
each, then apply the same off-grid clamping as deterministic moves.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import NamedTuple, Sequence

import numpy as np

from .errors import UsageError

DEFAULT_MAP = ("SFFF", "FHFH", "FFFH", "HFFG")


class Action(IntEnum):
    LEFT = 0
    DOWN = 1
    RIGHT = 2
    UP = 3


N_ACTIONS = len(Action)

# (drow, dcol) indexed by action value
_MOVES = ((0, -1), (1, 0), (0, 1), (-1, 0))


@dataclass(frozen=True)
class GridMap:
    rows: int
    cols: int
    cells: tuple[str, ...]
    start_index: int
    goal_index: int

    @classmethod
    def from_rows(cls, rows: Sequence[str]) -> "GridMap":
        rows = tuple(str(r).upper() for r in rows)
        if not rows or not rows[0]:
            raise UsageError("map must have at least one row and column")
        ncols = len(rows[0])
        if any(len(r) != ncols for r in rows):
            raise UsageError("map rows must have equal length")
        flat = "".join(rows)
        bad = set(flat) - set("SFHG")
        if bad:
            raise UsageError(f"unknown map symbols: {sorted(bad)}")
        if flat.count("S") != 1 or flat.count("G") != 1:
            raise UsageError("map needs exactly one S and one G")
        return cls(len(rows), ncols, rows, flat.index("S"), flat.index("G"))

    @property
    def n_states(self) -> int:
        return self.rows * self.cols

    def cell(self, index: int) -> str:
        r, c = divmod(index, self.cols)
        return self.cells[r][c]

    def is_terminal(self, index: int) -> bool:
        return self.cell(index) in "HG"

    @property
    def holes(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.n_states) if self.cell(i) == "H")


@dataclass(frozen=True)
class EnvConfig:
    slippery: bool = True
    max_steps: int = 100
    map: GridMap = field(default_factory=lambda: GridMap.from_rows(DEFAULT_MAP))

    def __post_init__(self):
        if self.max_steps < 1:
            raise UsageError("max_steps must be >= 1")


class Transition(NamedTuple):
    state: int
    action: int
    reward: float
    next_state: int
    terminal: bool
    truncated: bool = False


def reset(config: EnvConfig) -> int:
    return config.map.start_index


def move(grid: GridMap, state: int, direction: int) -> int:
    """Neighbor of ``state`` in ``direction``; off-grid moves stay put."""
    r, c = divmod(state, grid.cols)
    dr, dc = _MOVES[direction]
    nr, nc = r + dr, c + dc
    if 0 <= nr < grid.rows and 0 <= nc < grid.cols:
        return nr * grid.cols + nc
    return state


def slip_directions(action: int) -> tuple[int, int, int]:
    return ((action - 1) % N_ACTIONS, action, (action + 1) % N_ACTIONS)


def step(state: int, action: int, rng: np.random.Generator, config: EnvConfig,
         steps_taken: int = 0) -> Transition:
    """Advance one step from ``state``.

    ``steps_taken`` is the number of steps already taken this episode; the
    returned transition is flagged truncated when it exhausts the horizon
    without reaching a hole or the goal.
    """
    grid = config.map
    if not 0 <= state < grid.n_states:
        raise UsageError(f"state {state} out of range")
    if grid.is_terminal(state):
        raise UsageError(f"cannot step from terminal cell {state}")
    if steps_taken >= config.max_steps:
        raise UsageError("episode horizon already reached")
    action = int(action)
    if not 0 <= action < N_ACTIONS:
        raise UsageError(f"invalid action {action}")
    direction = action
    if config.slippery:
        direction = slip_directions(action)[int(rng.integers(3))]
    nxt = move(grid, state, direction)
    terminal = grid.is_terminal(nxt)
    reward = 1.0 if nxt == grid.goal_index else 0.0
    truncated = not terminal and steps_taken + 1 >= config.max_steps
    return Transition(state, action, reward, nxt, terminal, truncated)


def encode_state(state: int, grid: GridMap) -> np.ndarray:
    if not 0 <= state < grid.n_states:
        raise UsageError(f"state {state} out of range for {grid.n_states} cells")
    x = np.zeros(grid.n_states)
    x[state] = 1.0
    return x


def transition_distribution(state: int, action: int, config: EnvConfig) -> dict[int, float]:
    """Exact next-state probabilities by enumeration of realized directions."""
    if not config.slippery:
        return {move(config.map, state, action): 1.0}
    dist: dict[int, float] = {}
    for d in slip_directions(action):
        nxt = move(config.map, state, d)
        dist[nxt] = dist.get(nxt, 0.0) + 1.0 / 3.0
    return dist
