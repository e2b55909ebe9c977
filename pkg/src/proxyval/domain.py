"""Lane-following domain family: parameters, instances, rollouts and datasets.

A domain instance maps steering commands to observations of a unicycle
driving along a straight lane.  Every knob the experiments sweep (wheel
trim, command latency, camera blur, camera pitch, rendering interval) is a
field of :class:`DomainParams`; two instances built from equal parameters and
seeds produce bit-identical rollouts.
"""
from __future__ import annotations

import dataclasses
import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Protocol, Sequence, Union

import numpy as np

DT = 0.05
SPEED = 0.5
TRIM_GAIN = 2.0
OMEGA_MAX = 2.0
REFERENCE_CAMERA_ANGLE = 19.0

LANE_HALF_WIDTH = 0.105
ONE_WHEEL_OUT = 0.05
OFF_ROAD = 3 * LANE_HALF_WIDTH

EPISODE_SECONDS = 60.0
EPISODE_STEPS = 1200

# Spread of episode start states drawn from a trial seed.
INIT_Y_RANGE = 0.1
INIT_PHI_RANGE = 0.15

_NOISE_CHUNK = 512


class ConfigError(ValueError):
    """Raised for invalid parameters or configuration documents."""


class ExpertError(RuntimeError):
    """Raised when an expert cannot produce demonstration data."""


@dataclass(frozen=True)
class DomainParams:
    trim: float = 0.0
    delay_steps: int = 0
    blur_window: int = 1
    camera_angle_deg: float = REFERENCE_CAMERA_ANGLE
    render_interval: int = 1
    noise_seed: int = 0
    obs_noise_y: float = 0.005
    obs_noise_phi: float = 0.01

    def __post_init__(self):
        if not isinstance(self.delay_steps, int) or self.delay_steps < 0:
            raise ConfigError(f"delay_steps must be a nonnegative integer, got {self.delay_steps!r}")
        if not isinstance(self.blur_window, int) or self.blur_window < 1:
            raise ConfigError(f"blur_window must be an integer >= 1, got {self.blur_window!r}")
        if not isinstance(self.render_interval, int) or self.render_interval < 1:
            raise ConfigError(f"render_interval must be an integer >= 1, got {self.render_interval!r}")
        if not self.camera_angle_deg > 0:
            raise ConfigError(f"camera_angle_deg must be positive, got {self.camera_angle_deg!r}")
        if self.obs_noise_y < 0 or self.obs_noise_phi < 0:
            raise ConfigError("observation noise std-devs must be nonnegative")
        if not 0 <= self.noise_seed < 2**64:
            raise ConfigError(f"noise_seed must fit in 64 bits, got {self.noise_seed!r}")

    def replace(self, **changes) -> "DomainParams":
        return dataclasses.replace(self, **changes)

    def with_value(self, name: str, value) -> "DomainParams":
        """Return a copy with one field set, coercing integer fields."""
        if name not in PARAM_FIELDS:
            raise ConfigError(f"unknown domain parameter {name!r}")
        if name in _INT_FIELDS:
            if float(value) != int(value):
                raise ConfigError(f"{name} must be an integer, got {value!r}")
            value = int(value)
        else:
            value = float(value)
        return dataclasses.replace(self, **{name: value})

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping) -> "DomainParams":
        unknown = sorted(set(data) - set(PARAM_FIELDS))
        if unknown:
            raise ConfigError(f"unknown DomainParams key(s): {', '.join(unknown)}")
        kwargs = {}
        for name, value in data.items():
            if name in _INT_FIELDS:
                if isinstance(value, bool) or not isinstance(value, int):
                    raise ConfigError(f"{name} must be an integer, got {value!r}")
            elif isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{name} must be a number, got {value!r}")
            else:
                value = float(value)
            kwargs[name] = value
        return cls(**kwargs)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "DomainParams":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed DomainParams JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("DomainParams JSON must be an object")
        return cls.from_dict(data)


PARAM_FIELDS = tuple(f.name for f in dataclasses.fields(DomainParams))
_INT_FIELDS = frozenset({"delay_steps", "blur_window", "render_interval", "noise_seed"})


@dataclass(frozen=True)
class Observation:
    z_y: float
    z_phi: float


@dataclass
class EnvState:
    s: float = 0.0
    y: float = 0.0
    phi: float = 0.0
    t: float = 0.0
    step_count: int = 0
    delay_queue: deque = field(default_factory=deque)
    blur_buffer: deque = field(default_factory=deque)
    last_rendered_obs: Observation = Observation(0.0, 0.0)


def clamp_command(omega: float) -> float:
    return min(OMEGA_MAX, max(-OMEGA_MAX, float(omega)))


def initial_state(seed: int) -> tuple[float, float]:
    """Start offset ``(y0, phi0)`` for an episode seed, shared by every domain."""
    rng = np.random.default_rng([0x5EED, int(seed)])
    y0, phi0 = rng.uniform(-1.0, 1.0, size=2)
    return float(y0 * INIT_Y_RANGE), float(phi0 * INIT_PHI_RANGE)


class DomainInstance:
    """One simulator instance ``S_theta`` with its own seeded noise stream.

    ``seed`` selects the episode: it fixes the observation-noise stream
    (mixed with ``params.noise_seed``).  ``x0`` is the starting ``(y, phi)``;
    it defaults to on-center.
    """

    def __init__(self, params: DomainParams, seed: int = 0, x0: tuple[float, float] = (0.0, 0.0)):
        self.params = params
        self.seed = int(seed)
        self.x0 = (float(x0[0]), float(x0[1]))
        self.reset()

    def reset(self) -> Observation:
        p = self.params
        self._rng = np.random.default_rng([p.noise_seed, self.seed])
        self._noise = np.empty((0, 2))
        self._noise_pos = 0
        self._camera_scale = REFERENCE_CAMERA_ANGLE / p.camera_angle_deg
        self.state = EnvState(
            y=self.x0[0],
            phi=self.x0[1],
            delay_queue=deque([0.0] * p.delay_steps),
            blur_buffer=deque(maxlen=p.blur_window),
        )
        self._render()
        self.observation = self._blurred()
        return self.observation

    @property
    def terminated(self) -> bool:
        return abs(self.state.y) > OFF_ROAD

    def _draw_noise(self) -> tuple[float, float]:
        if self._noise_pos >= len(self._noise):
            self._noise = self._rng.standard_normal((_NOISE_CHUNK, 2))
            self._noise_pos = 0
        ny, nphi = self._noise[self._noise_pos]
        self._noise_pos += 1
        return float(ny), float(nphi)

    def _render(self) -> None:
        p = self.params
        st = self.state
        ny, nphi = self._draw_noise()
        st.last_rendered_obs = Observation(
            self._camera_scale * st.y + p.obs_noise_y * ny,
            st.phi + p.obs_noise_phi * nphi,
        )

    def _blurred(self) -> Observation:
        st = self.state
        st.blur_buffer.append(st.last_rendered_obs)
        n = len(st.blur_buffer)
        if n == 1:
            return st.last_rendered_obs
        return Observation(
            sum(o.z_y for o in st.blur_buffer) / n,
            sum(o.z_phi for o in st.blur_buffer) / n,
        )

    def step(self, command: float) -> tuple[Observation, float]:
        """Advance one ``DT``; returns the new observation and the in-lane reward."""
        if self.terminated:
            raise RuntimeError("step() called on a terminated instance")
        p = self.params
        st = self.state
        omega = clamp_command(command)
        if p.delay_steps:
            st.delay_queue.append(omega)
            omega = st.delay_queue.popleft()
        st.phi += (omega + TRIM_GAIN * p.trim) * DT
        st.y += SPEED * math.sin(st.phi) * DT
        st.s += SPEED * math.cos(st.phi) * DT
        st.step_count += 1
        st.t = st.step_count * DT
        if st.step_count % p.render_interval == 0:
            self._render()
        self.observation = self._blurred()
        reward = 1.0 if abs(st.y) <= LANE_HALF_WIDTH else 0.0
        return self.observation, reward


class Agent(Protocol):
    """Anything that turns observations into steering commands.

    ``reset`` is called at the start of every episode with the trial seed.
    Privileged agents receive the true ``(y, phi)`` instead of the rendered
    observation.
    """

    id: str
    privileged: bool

    def reset(self, seed: int) -> None: ...

    def act(self, obs: Observation) -> float: ...


@dataclass
class Trajectory:
    """States ``x_0..x_N`` of one episode with the observations rendered at each.

    ``commands[k]`` is the (clamped) command issued in state ``k``, so there is
    one command fewer than there are states.
    """

    s: np.ndarray
    y: np.ndarray
    phi: np.ndarray
    t: np.ndarray
    z_y: np.ndarray
    z_phi: np.ndarray
    commands: np.ndarray
    rewards: np.ndarray
    terminated_early: bool

    @property
    def n_steps(self) -> int:
        return len(self.commands)

    def __len__(self) -> int:
        return len(self.s)

    @property
    def observations(self) -> list[Observation]:
        return [Observation(float(a), float(b)) for a, b in zip(self.z_y, self.z_phi)]

    def same_as(self, other: "Trajectory") -> bool:
        """Bitwise equality of every recorded series."""
        return self.terminated_early == other.terminated_early and all(
            np.array_equal(getattr(self, name), getattr(other, name))
            for name in ("s", "y", "phi", "t", "z_y", "z_phi", "commands", "rewards")
        )


def _run(instance: DomainInstance, next_command: Callable[[int, Observation], Optional[float]],
         max_steps: int) -> Trajectory:
    obs = instance.reset()
    st = instance.state
    s, y, phi, t = [st.s], [st.y], [st.phi], [st.t]
    z_y, z_phi = [obs.z_y], [obs.z_phi]
    commands, rewards = [], []
    terminated = False
    for k in range(max_steps):
        u = next_command(k, obs)
        if u is None:
            break
        u = clamp_command(u)
        obs, r = instance.step(u)
        commands.append(u)
        rewards.append(r)
        s.append(st.s)
        y.append(st.y)
        phi.append(st.phi)
        t.append(st.t)
        z_y.append(obs.z_y)
        z_phi.append(obs.z_phi)
        if instance.terminated:
            terminated = True
            break
    return Trajectory(
        s=np.array(s), y=np.array(y), phi=np.array(phi), t=np.array(t),
        z_y=np.array(z_y), z_phi=np.array(z_phi),
        commands=np.array(commands), rewards=np.array(rewards),
        terminated_early=terminated,
    )


def rollout(instance: DomainInstance, agent: Agent, max_steps: int = EPISODE_STEPS,
            agent_seed: Optional[int] = None) -> Trajectory:
    """Closed-loop episode: query the agent each step until ``max_steps`` or off-road."""
    if max_steps <= 0:
        raise ValueError("max_steps must be positive")
    agent.reset(instance.seed if agent_seed is None else agent_seed)

    if getattr(agent, "privileged", False):
        def next_command(k, obs):
            st = instance.state
            return agent.act(Observation(st.y, st.phi))
    else:
        def next_command(k, obs):
            return agent.act(obs)

    return _run(instance, next_command, max_steps)


def rollout_open_loop(instance: DomainInstance, commands: Sequence[float]) -> Trajectory:
    """Replay a fixed command sequence, ignoring observations."""
    commands = list(commands)
    if not commands:
        raise ValueError("commands must be nonempty")
    return _run(instance, lambda k, obs: commands[k], len(commands))


def episode_instance(params: DomainParams, seed: int) -> DomainInstance:
    """Instance for a trial: start state and noise stream both drawn from ``seed``."""
    return DomainInstance(params, seed=seed, x0=initial_state(seed))


@dataclass(frozen=True)
class DomainFamily:
    """Domain family ``S_Theta``: a base instance with some fields sampled uniformly."""

    base: DomainParams
    choices: Mapping[str, tuple]

    def __post_init__(self):
        for name, values in self.choices.items():
            if name not in PARAM_FIELDS:
                raise ConfigError(f"unknown domain parameter {name!r}")
            if not values:
                raise ConfigError(f"no choices given for {name!r}")

    def sample(self, seed: int) -> DomainParams:
        rng = np.random.default_rng([0xFA111, int(seed)])
        params = self.base
        for name in sorted(self.choices):
            values = self.choices[name]
            params = params.with_value(name, values[int(rng.integers(len(values)))])
        return params

    def to_dict(self) -> dict:
        return {"base": self.base.to_dict(), "choices": {k: list(v) for k, v in self.choices.items()}}


@dataclass
class Dataset:
    """Demonstration tuples ``(observation, reward, command)``, in collection order unless shuffled.

    ``prev_z`` holds the previous observation within the same episode (the
    current one at episode start); ``episode`` indexes ``episode_params``.
    """

    z: np.ndarray
    prev_z: np.ndarray
    rewards: np.ndarray
    commands: np.ndarray
    episode: np.ndarray
    episode_params: list[DomainParams]
    source: Union[DomainParams, DomainFamily]

    def __len__(self) -> int:
        return len(self.commands)

    def head(self, n: int) -> "Dataset":
        return self.permuted(np.arange(min(n, len(self))))

    def permuted(self, index: np.ndarray) -> "Dataset":
        return Dataset(self.z[index], self.prev_z[index], self.rewards[index], self.commands[index],
                       self.episode[index], self.episode_params, self.source)

    def mirrored(self) -> "Dataset":
        """Append the left-right reflection of every tuple (offsets, headings and commands negated)."""
        return Dataset(np.vstack([self.z, -self.z]), np.vstack([self.prev_z, -self.prev_z]),
                       np.concatenate([self.rewards, self.rewards]),
                       np.concatenate([self.commands, -self.commands]),
                       np.concatenate([self.episode, self.episode]), self.episode_params, self.source)


class _ExploringExpert:
    """Executes the expert's command plus Gaussian noise; records the clean command as the label."""

    def __init__(self, expert: Agent, sigma: float):
        self.expert = expert
        self.sigma = sigma
        self.id = expert.id
        self.privileged = getattr(expert, "privileged", False)
        self.labels: list[float] = []

    def reset(self, seed: int) -> None:
        self.expert.reset(seed)
        self.labels = []
        self._rng = np.random.default_rng([0xDA27, int(seed)])

    def act(self, obs: Observation) -> float:
        u = clamp_command(self.expert.act(obs))
        self.labels.append(u)
        if self.sigma:
            return u + self.sigma * float(self._rng.standard_normal())
        return u


def generate_dataset(source: Union[DomainParams, DomainFamily], expert: Agent, n: int,
                     episode_seeds: Iterable[int], max_steps: int = EPISODE_STEPS,
                     command_noise: float = 0.0, shuffle_seed: Optional[int] = None) -> Dataset:
    """Roll out the expert episode by episode and keep the first ``n`` tuples.

    With a :class:`DomainFamily`, fresh parameters are sampled for every
    episode.  Episodes in which the expert leaves the road are discarded.
    ``command_noise`` perturbs the executed command so the data covers
    off-center states; the stored label is always the expert's own command.
    ``shuffle_seed`` permutes the collected tuples so that prefixes are
    random subsets rather than the start of one episode.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    z, prev_z, rewards, commands, episode = [], [], [], [], []
    episode_params: list[DomainParams] = []
    collected = 0
    attempted = 0
    explorer = _ExploringExpert(expert, command_noise)
    for seed in episode_seeds:
        attempted += 1
        params = source.sample(seed) if isinstance(source, DomainFamily) else source
        traj = rollout(episode_instance(params, seed), explorer, max_steps)
        if traj.terminated_early:
            continue
        take = min(traj.n_steps, n - collected)
        zs = np.column_stack([traj.z_y, traj.z_phi])[:take]
        z.append(zs)
        prev_z.append(np.vstack([zs[:1], zs[:-1]]))
        rewards.append(traj.rewards[:take])
        commands.append(np.array(explorer.labels[:take]))
        episode.append(np.full(take, len(episode_params)))
        episode_params.append(params)
        collected += take
        if collected >= n:
            break
    if collected == 0:
        raise ExpertError(f"expert cannot produce data: left the road on all {attempted} episode(s)")
    if collected < n:
        raise ExpertError(f"expert cannot produce data: only {collected} of {n} samples from {attempted} episode(s)")
    data = Dataset(np.vstack(z), np.vstack(prev_z), np.concatenate(rewards),
                   np.concatenate(commands), np.concatenate(episode), episode_params, source)
    if shuffle_seed is not None:
        data = data.permuted(np.random.default_rng([0x5A1F, int(shuffle_seed)]).permutation(n))
    return data


@dataclass(frozen=True)
class Task:
    """Named evaluation metrics, each a pure function of a trajectory."""

    metrics: tuple[tuple[str, Callable[[Trajectory], float]], ...]

    def __post_init__(self):
        if not self.metrics:
            raise ConfigError("a task needs at least one metric")

    @property
    def names(self) -> list[str]:
        return [name for name, _ in self.metrics]

    def evaluate(self, traj: Trajectory) -> np.ndarray:
        return np.array([fn(traj) for _, fn in self.metrics], dtype=float)
