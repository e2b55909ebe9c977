"""The fixed agent zoo, the privileged expert and the canonical target."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .domain import ConfigError, DomainParams, Observation

ZOO_PD_GAINS = ((8.0, 4.0), (6.0, 3.0), (4.0, 2.0), (2.0, 1.0), (8.0, 0.0), (0.0, 4.0), (1.0, 0.5))

TARGET_V1 = DomainParams(
    trim=0.0,
    delay_steps=2,
    blur_window=1,
    camera_angle_deg=19.0,
    render_interval=1,
    noise_seed=1,
)


@dataclass
class PDAgent:
    """``omega = -kp * z_y - kd * z_phi``."""

    id: str
    kp: float
    kd: float
    privileged: bool = False

    def reset(self, seed: int) -> None:
        pass

    def act(self, obs: Observation) -> float:
        return -self.kp * obs.z_y - self.kd * obs.z_phi


@dataclass
class BangBangAgent:
    id: str
    magnitude: float = 1.0
    privileged: bool = False

    def reset(self, seed: int) -> None:
        pass

    def act(self, obs: Observation) -> float:
        if obs.z_y > 0:
            return -self.magnitude
        if obs.z_y < 0:
            return self.magnitude
        return 0.0


@dataclass
class ZeroAgent:
    id: str
    privileged: bool = False

    def reset(self, seed: int) -> None:
        pass

    def act(self, obs: Observation) -> float:
        return 0.0


@dataclass
class RandomAgent:
    """Uniform random steering in ``[-high, high]``; the stream depends on (seed, episode seed)."""

    id: str
    seed: int
    high: float = 1.0
    privileged: bool = False
    _draws: np.ndarray = field(default=None, init=False, repr=False)
    _pos: int = field(default=0, init=False, repr=False)
    _rng: np.random.Generator = field(default=None, init=False, repr=False)

    def reset(self, seed: int) -> None:
        self._rng = np.random.default_rng([int(self.seed), int(seed)])
        self._draws = np.empty(0)
        self._pos = 0

    def act(self, obs: Observation) -> float:
        if self._pos >= len(self._draws):
            self._draws = self._rng.uniform(-self.high, self.high, size=256)
            self._pos = 0
        u = float(self._draws[self._pos])
        self._pos += 1
        return u


def make_zoo(seed: int = 0) -> list:
    """The ten ranking agents in their fixed order."""
    agents = [PDAgent(f"pd_{_fmt(kp)}_{_fmt(kd)}", kp, kd) for kp, kd in ZOO_PD_GAINS]
    agents.append(BangBangAgent("bang_bang"))
    agents.append(ZeroAgent("zero"))
    agents.append(RandomAgent("random", seed=seed))
    return agents


def make_expert(kp: float = 8.0, kd: float = 4.0) -> PDAgent:
    """PD controller on the true lane offset and heading."""
    return PDAgent(f"expert_{_fmt(kp)}_{_fmt(kd)}", kp, kd, privileged=True)


def _fmt(x: float) -> str:
    return str(int(x)) if math.isclose(x, round(x)) else str(x).replace(".", "p")


ZOOS = {"zoo10": make_zoo}
TARGETS = {"target-v1": TARGET_V1}


def zoo_by_name(name: str, seed: int = 0) -> list:
    try:
        return ZOOS[name](seed)
    except KeyError:
        raise ConfigError(f"unknown zoo {name!r}; known: {', '.join(ZOOS)}") from None


def target_by_name(name: str) -> DomainParams:
    try:
        return TARGETS[name]
    except KeyError:
        raise ConfigError(f"unknown target {name!r}; known: {', '.join(TARGETS)}") from None
