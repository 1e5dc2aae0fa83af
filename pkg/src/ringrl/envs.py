"""Action placement on the ring and a deterministic compass gridworld."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EpisodeFinishedError


@dataclass(frozen=True)
class ActionMapping:
    """Where each action sits on the ring.

    ``angles[k]`` is the angle of ring slot ``k``; action ``a`` occupies slot
    ``permutation[a]``.
    """
    n_actions: int
    angles: tuple = None
    permutation: tuple = None

    def __post_init__(self):
        if self.n_actions < 1:
            raise ValueError(f"n_actions must be positive, got {self.n_actions}")
        if self.angles is None:
            object.__setattr__(self, "angles",
                               tuple(2 * math.pi * a / self.n_actions for a in range(self.n_actions)))
        if self.permutation is None:
            object.__setattr__(self, "permutation", tuple(range(self.n_actions)))
        object.__setattr__(self, "angles", tuple(float(a) for a in self.angles))
        object.__setattr__(self, "permutation", tuple(int(p) for p in self.permutation))
        if len(self.angles) != self.n_actions:
            raise ValueError("angles must have one entry per action")
        if sorted(self.permutation) != list(range(self.n_actions)):
            raise ValueError(f"permutation {self.permutation} is not a bijection on [0, {self.n_actions})")

    def angle(self, a: int) -> float:
        return action_angle(self, a)

    def action_at(self, slot: int) -> int:
        """Inverse lookup: the action placed in ring slot ``slot``."""
        return self.permutation.index(slot)


def action_angle(mapping: ActionMapping, a: int) -> float:
    if not 0 <= a < mapping.n_actions:
        raise ValueError(f"action {a} out of range [0, {mapping.n_actions})")
    return mapping.angles[mapping.permutation[a]]


def permute_mapping(mapping: ActionMapping, rng: np.random.Generator) -> ActionMapping:
    # Generator.permutation is a seeded Fisher-Yates shuffle
    perm = rng.permutation(mapping.n_actions)
    return dataclasses.replace(mapping, permutation=tuple(int(p) for p in perm))


@dataclass
class GridWorld:
    width: int = 9
    height: int = 9
    start: tuple = (0, 0)
    goal: tuple = (8, 8)
    walls: frozenset = field(default_factory=frozenset)
    step_penalty: float = -0.01
    goal_reward: float = 1.0
    max_steps: int = 200
    n_actions: int = 8
    encoding: str = "onehot"

    def __post_init__(self):
        self.start = tuple(self.start)
        self.goal = tuple(self.goal)
        self.walls = frozenset(tuple(w) for w in self.walls)
        if self.width < 1 or self.height < 1 or self.max_steps < 1:
            raise ValueError("width, height and max_steps must be positive")
        for name, cell in (("start", self.start), ("goal", self.goal)):
            if not self._inside(cell) or cell in self.walls:
                raise ValueError(f"{name} cell {cell} must be inside the grid and not a wall")
        if self.encoding not in ("onehot", "xy"):
            raise ValueError(f"unknown state encoding {self.encoding!r}")
        self.mapping = ActionMapping(self.n_actions)
        self.moves = [
            (int(round(math.cos(t))), int(round(math.sin(t)))) for t in self.mapping.angles
        ]
        self.pos = self.start
        self.t = 0
        self.done = False
        self.truncated = False

    @classmethod
    def from_dict(cls, data: dict) -> "GridWorld":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown env config keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}
        d["start"] = list(self.start)
        d["goal"] = list(self.goal)
        d["walls"] = sorted(list(w) for w in self.walls)
        return d

    @property
    def state_dim(self) -> int:
        return self.width * self.height if self.encoding == "onehot" else 2

    def _inside(self, cell) -> bool:
        return 0 <= cell[0] < self.width and 0 <= cell[1] < self.height

    def encode(self, cell=None) -> np.ndarray:
        x, y = self.pos if cell is None else cell
        if self.encoding == "onehot":
            s = np.zeros(self.width * self.height)
            s[y * self.width + x] = 1.0
            return s
        return np.array([x / max(self.width - 1, 1), y / max(self.height - 1, 1)])

    def reset(self, seed=None) -> np.ndarray:
        # the layout is fixed, so the seed only matters for API symmetry
        self.pos = self.start
        self.t = 0
        self.done = False
        self.truncated = False
        return self.encode()

    def step(self, a: int):
        if self.done:
            raise EpisodeFinishedError("episode finished; call reset() first")
        if not 0 <= a < self.n_actions:
            raise ValueError(f"action {a} out of range [0, {self.n_actions})")
        dx, dy = self.moves[a]
        nxt = (self.pos[0] + dx, self.pos[1] + dy)
        if self._inside(nxt) and nxt not in self.walls:
            self.pos = nxt
        self.t += 1
        if self.pos == self.goal:
            reward, self.done = self.goal_reward, True
        else:
            reward = self.step_penalty
            self.done = self.truncated = self.t >= self.max_steps
        return self.encode(), reward, self.done


def reset(env: GridWorld, seed=None) -> np.ndarray:
    return env.reset(seed)


def env_step(env: GridWorld, a: int):
    return env.step(a)
