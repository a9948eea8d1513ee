"""Synthetic continuous-control tasks with scripted controllers.

Two goal-reaching environments with 2-d actions in [-1, 1], fixed horizon,
and latched success (reaching the goal once counts for the whole episode):

* ``point-reach``: double-integrator point mass. State (p, v), observation
  [p, v, g] (6-d). Velocity integrates clamped actions, position integrates
  velocity.
* ``reacher-2link``: planar two-link arm with velocity damping. Observation
  [cos q, sin q, qdot, g] (8-d); success is measured at the end effector.

Dynamics run in float64; observations are emitted float32. Scripted experts
are PD controllers (task-space via the Jacobian transpose for the reacher)
with gains frozen in this module; behavior policies (random, noisy-expert,
play) provide non-expert action-labeled data.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .rng import make_rng

POINT_REACH = "point-reach"
REACHER_2LINK = "reacher-2link"
ENV_KINDS = (POINT_REACH, REACHER_2LINK)

# PD gains, tuned once so each expert clears 0.95 success over 100 seeds,
# then frozen; regression-tested, do not retune per experiment.
POINT_KP = 5.0
POINT_KD = 2.0
REACHER_KP = 8.0
REACHER_KD = 1.0

GOAL_RADIUS_LOW = 0.35
GOAL_RADIUS_HIGH = 0.95


@dataclass(frozen=True)
class EnvSpec:
    kind: str
    horizon: int = 100
    dt: float = 0.1
    success_radius: float = 0.1
    damping: float = 0.1
    link_lengths: tuple = (0.5, 0.5)

    def __post_init__(self):
        if self.kind not in ENV_KINDS:
            raise ValueError(f"unknown env kind {self.kind!r}; choose from {ENV_KINDS}")
        if self.horizon < 2:
            raise ValueError(f"horizon must be >= 2, got {self.horizon}")
        if self.dt <= 0 or self.success_radius <= 0:
            raise ValueError("dt and success_radius must be positive")

    @property
    def obs_dim(self) -> int:
        return 6 if self.kind == POINT_REACH else 8

    @property
    def action_dim(self) -> int:
        return 2

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "horizon": self.horizon,
            "dt": self.dt,
            "success_radius": self.success_radius,
            "damping": self.damping,
            "link_lengths": list(self.link_lengths),
        }

    def spec_hash(self) -> int:
        """64-bit digest of the full spec; stored in data files."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return int.from_bytes(hashlib.sha256(blob.encode()).digest()[:8], "little")


@dataclass
class EnvState:
    q: np.ndarray      # point: position; reacher: joint angles
    qd: np.ndarray     # velocity
    goal: np.ndarray
    t: int = 0


def reset(spec: EnvSpec, seed: int) -> EnvState:
    rng = make_rng("env-reset", spec.kind, seed)
    if spec.kind == POINT_REACH:
        q = rng.uniform(-1.0, 1.0, 2)
        goal = rng.uniform(-1.0, 1.0, 2)
    else:
        q = rng.uniform(-np.pi, np.pi, 2)
        radius = rng.uniform(GOAL_RADIUS_LOW, GOAL_RADIUS_HIGH)
        angle = rng.uniform(-np.pi, np.pi)
        goal = radius * np.array([np.cos(angle), np.sin(angle)])
    return EnvState(q=q.astype(np.float64), qd=np.zeros(2), goal=goal.astype(np.float64))


def end_effector(spec: EnvSpec, q: np.ndarray) -> np.ndarray:
    if spec.kind == POINT_REACH:
        return q
    l1, l2 = spec.link_lengths
    s = q[0] + q[1]
    return np.array([l1 * np.cos(q[0]) + l2 * np.cos(s),
                     l1 * np.sin(q[0]) + l2 * np.sin(s)])


def observe(spec: EnvSpec, state: EnvState) -> np.ndarray:
    if spec.kind == POINT_REACH:
        obs = np.concatenate([state.q, state.qd, state.goal])
    else:
        obs = np.concatenate([np.cos(state.q), np.sin(state.q), state.qd, state.goal])
    return obs.astype(np.float32)


def _wrap_angle(q: np.ndarray) -> np.ndarray:
    return np.mod(q + np.pi, 2.0 * np.pi) - np.pi


def step(spec: EnvSpec, state: EnvState, action: np.ndarray):
    """Advance one step; returns (next_state, success_now)."""
    a = np.asarray(action, dtype=np.float64).reshape(-1)
    if a.shape != (spec.action_dim,):
        raise ValueError(f"action shape {a.shape}, expected ({spec.action_dim},)")
    if not np.all(np.isfinite(a)):
        raise ValueError("non-finite action")
    a = np.clip(a, -1.0, 1.0)
    if spec.kind == POINT_REACH:
        qd = np.clip(state.qd + spec.dt * a, -1.0, 1.0)
        q = state.q + spec.dt * qd
    else:
        qd = np.clip(state.qd + spec.dt * (a - spec.damping * state.qd), -1.0, 1.0)
        q = _wrap_angle(state.q + spec.dt * qd)
    nxt = EnvState(q=q, qd=qd, goal=state.goal, t=state.t + 1)
    success = bool(np.linalg.norm(end_effector(spec, q) - state.goal) < spec.success_radius)
    return nxt, success


def _reacher_jacobian(spec: EnvSpec, q: np.ndarray) -> np.ndarray:
    l1, l2 = spec.link_lengths
    s = q[0] + q[1]
    return np.array([
        [-l1 * np.sin(q[0]) - l2 * np.sin(s), -l2 * np.sin(s)],
        [l1 * np.cos(q[0]) + l2 * np.cos(s), l2 * np.cos(s)],
    ])


def expert_action(spec: EnvSpec, state: EnvState, goal: np.ndarray = None) -> np.ndarray:
    """Scripted PD controller toward ``goal`` (default: the episode goal)."""
    g = state.goal if goal is None else goal
    if spec.kind == POINT_REACH:
        a = POINT_KP * (g - state.q) - POINT_KD * state.qd
    else:
        err = g - end_effector(spec, state.q)
        a = REACHER_KP * (_reacher_jacobian(spec, state.q).T @ err) - REACHER_KD * state.qd
    return np.clip(a, -1.0, 1.0)


class ExpertPolicy:
    """State-driven scripted expert, used to generate demonstration data."""

    kind = "expert"

    def begin_episode(self, spec: EnvSpec, rng: np.random.Generator) -> None:
        pass

    def action(self, spec: EnvSpec, state: EnvState) -> np.ndarray:
        return expert_action(spec, state)


class RandomPolicy:
    kind = "random"

    def begin_episode(self, spec: EnvSpec, rng: np.random.Generator) -> None:
        self._rng = rng

    def action(self, spec: EnvSpec, state: EnvState) -> np.ndarray:
        return self._rng.uniform(-1.0, 1.0, spec.action_dim)


class NoisyExpertPolicy:
    """Expert plus Gaussian action noise, clipped back to the action box."""

    kind = "noisy-expert"

    def __init__(self, sigma: float = 0.3):
        self.sigma = sigma

    def begin_episode(self, spec: EnvSpec, rng: np.random.Generator) -> None:
        self._rng = rng

    def action(self, spec: EnvSpec, state: EnvState) -> np.ndarray:
        a = expert_action(spec, state) + self._rng.normal(0.0, self.sigma, spec.action_dim)
        return np.clip(a, -1.0, 1.0)


class PlayPolicy:
    """Expert steered at a random waypoint, resampled every ``waypoint_every`` steps."""

    kind = "play"

    def __init__(self, waypoint_every: int = 20):
        if waypoint_every < 1:
            raise ValueError("waypoint_every must be >= 1")
        self.waypoint_every = waypoint_every

    def begin_episode(self, spec: EnvSpec, rng: np.random.Generator) -> None:
        self._rng = rng
        self._waypoint = None
        self.waypoints_visited: list = []

    def _sample_waypoint(self, spec: EnvSpec) -> np.ndarray:
        if spec.kind == POINT_REACH:
            return self._rng.uniform(-1.0, 1.0, 2)
        radius = self._rng.uniform(GOAL_RADIUS_LOW, GOAL_RADIUS_HIGH)
        angle = self._rng.uniform(-np.pi, np.pi)
        return radius * np.array([np.cos(angle), np.sin(angle)])

    def action(self, spec: EnvSpec, state: EnvState) -> np.ndarray:
        if state.t % self.waypoint_every == 0 or self._waypoint is None:
            self._waypoint = self._sample_waypoint(spec)
            self.waypoints_visited.append(self._waypoint.copy())
        return expert_action(spec, state, goal=self._waypoint)


BEHAVIOR_KINDS = ("expert", "random", "noisy-expert", "play")


def make_behavior_policy(kind: str, sigma: float = 0.3, waypoint_every: int = 20):
    if kind == "expert":
        return ExpertPolicy()
    if kind == "random":
        return RandomPolicy()
    if kind == "noisy-expert":
        return NoisyExpertPolicy(sigma)
    if kind == "play":
        return PlayPolicy(waypoint_every)
    raise ValueError(f"unknown behavior policy {kind!r}; choose from {BEHAVIOR_KINDS}")


def behavior_action(spec: EnvSpec, state: EnvState, kind: str,
                    rng: np.random.Generator) -> np.ndarray:
    """One-shot action for stateless behavior kinds."""
    if kind == "expert":
        return expert_action(spec, state)
    if kind == "random":
        return rng.uniform(-1.0, 1.0, spec.action_dim)
    if kind == "noisy-expert":
        a = expert_action(spec, state) + rng.normal(0.0, 0.3, spec.action_dim)
        return np.clip(a, -1.0, 1.0)
    raise ValueError(f"behavior_action does not support kind {kind!r} (stateful); "
                     "use make_behavior_policy")


def rollout(spec: EnvSpec, policy, seed: int, record_actions: bool = True):
    """Run one full-horizon episode; returns a datastore Trajectory."""
    from .data import Trajectory  # local import: data depends on envs for specs

    state = reset(spec, seed)
    policy.begin_episode(spec, make_rng("behavior", spec.kind, policy.kind, seed))
    observations = [observe(spec, state)]
    actions = []
    success = False
    steps_to_success = None
    for _ in range(spec.horizon):
        a = policy.action(spec, state)
        state, hit = step(spec, state, a)
        observations.append(observe(spec, state))
        actions.append(np.clip(np.asarray(a, dtype=np.float32), -1.0, 1.0))
        if hit and not success:
            success = True
            steps_to_success = state.t
    return Trajectory(
        observations=np.stack(observations),
        actions=np.stack(actions) if record_actions else None,
        latent_actions=None,
        success=success,
        steps_to_success=steps_to_success,
        seed=seed,
        policy_kind=policy.kind,
    )
