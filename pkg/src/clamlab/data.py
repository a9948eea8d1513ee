"""Trajectories, role-tagged datasets, window sampling, and the CLAMDATA format.

A Trajectory holds T observations and, depending on provenance, T-1 actions
and/or T-1 latent actions. Datasets carry a role that fixes which of those
must be present:

* ``unlabeled-expert``: observation-only demonstrations
* ``labeled``: true environment actions present
* ``relabeled-expert``: latent actions present (written by a trained model)

Training consumes windows o_{t-H..t+1}: H+2 consecutive observations whose
last element is the prediction target. Windows never cross episode
boundaries; at episode starts the window is front-padded by repeating o_0
and flagged, and flagged windows are excluded from losses by default.

CLAMDATA binary layout (integers little-endian, floats float32 little-endian):

    magic   8 bytes  b"CLAMDATA"
    u32     format version (currently 1)
    u64     env spec hash
    u8      role code (0 unlabeled-expert, 1 labeled, 2 relabeled-expert)
    u32     trajectory count
    per trajectory:
        u32  T (observation count)
        u8   flags: bit0 actions, bit1 latent actions, bit2 success
        u64  episode seed
        u8   policy-kind length; that many bytes UTF-8
        u16  obs_dim;    f32 x T*obs_dim
        u16  action_dim; f32 x (T-1)*action_dim        (if bit0)
        u16  latent_dim; f32 x (T-1)*latent_dim        (if bit1)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .checkpoint import _Reader
from .envs import EnvSpec, make_behavior_policy, rollout
from .errors import BadMagicError, TruncatedFileError, VersionMismatchError
from .rng import derive_seed, make_rng

MAGIC = b"CLAMDATA"
VERSION = 1

ROLE_UNLABELED = "unlabeled-expert"
ROLE_LABELED = "labeled"
ROLE_RELABELED = "relabeled-expert"
ROLES = (ROLE_UNLABELED, ROLE_LABELED, ROLE_RELABELED)
_ROLE_CODES = {role: i for i, role in enumerate(ROLES)}

EXPERT_RESAMPLE_CAP = 10  # attempts per requested success before giving up


@dataclass
class Trajectory:
    observations: np.ndarray
    actions: Optional[np.ndarray] = None
    latent_actions: Optional[np.ndarray] = None
    success: bool = False
    steps_to_success: Optional[int] = None  # transient; not serialized
    seed: int = 0
    policy_kind: str = "unknown"

    def __post_init__(self):
        obs = np.asarray(self.observations, dtype=np.float32)
        if obs.ndim != 2 or obs.shape[0] < 2:
            raise ValueError(f"observations must be (T>=2, obs_dim), got {obs.shape}")
        self.observations = obs
        for name in ("actions", "latent_actions"):
            arr = getattr(self, name)
            if arr is None:
                continue
            arr = np.asarray(arr, dtype=np.float32)
            if arr.ndim != 2 or arr.shape[0] != obs.shape[0] - 1:
                raise ValueError(
                    f"{name} must be (T-1={obs.shape[0]-1}, dim), got {arr.shape}")
            setattr(self, name, arr)

    @property
    def length(self) -> int:
        return int(self.observations.shape[0])


@dataclass
class Dataset:
    role: str
    trajectories: list
    env_spec_hash: int

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown dataset role {self.role!r}; choose from {ROLES}")
        if not self.trajectories:
            raise ValueError("dataset must contain at least one trajectory")
        obs_dim = self.trajectories[0].observations.shape[1]
        for tr in self.trajectories:
            if tr.observations.shape[1] != obs_dim:
                raise ValueError("mixed observation dims in one dataset")
            if self.role == ROLE_LABELED and tr.actions is None:
                raise ValueError("labeled dataset requires actions on every trajectory")
            if self.role == ROLE_RELABELED and tr.latent_actions is None:
                raise ValueError("relabeled dataset requires latent actions on every trajectory")

    def __len__(self) -> int:
        return len(self.trajectories)

    @property
    def obs_dim(self) -> int:
        return int(self.trajectories[0].observations.shape[1])

    @property
    def n_transitions(self) -> int:
        return int(sum(tr.length - 1 for tr in self.trajectories))

    def subset(self, n: int) -> "Dataset":
        """First n trajectories; episode seeds are independent, so a prefix
        is itself a valid smaller dataset."""
        if not 1 <= n <= len(self.trajectories):
            raise ValueError(f"subset size {n} out of range 1..{len(self.trajectories)}")
        return Dataset(self.role, self.trajectories[:n], self.env_spec_hash)


def generate_dataset(spec: EnvSpec, policy_kind: str, n_traj: int, seed: int,
                     role: Optional[str] = None, sigma: float = 0.3,
                     waypoint_every: int = 20) -> Dataset:
    """Roll out ``n_traj`` episodes under one behavior policy.

    Expert rollouts keep only successful episodes, resampling with derived
    seeds (capped); other behavior kinds keep everything. The default role is
    unlabeled-expert for expert data (actions dropped) and labeled otherwise.
    """
    if n_traj < 1:
        raise ValueError(f"n_traj must be >= 1, got {n_traj}")
    if role is None:
        role = ROLE_UNLABELED if policy_kind == "expert" else ROLE_LABELED
    record_actions = role != ROLE_UNLABELED
    expert_only_success = policy_kind == "expert"

    trajectories: list = []
    attempt = 0
    budget = n_traj * EXPERT_RESAMPLE_CAP if expert_only_success else n_traj
    while len(trajectories) < n_traj:
        if attempt >= budget:
            raise RuntimeError(
                f"expert produced {len(trajectories)}/{n_traj} successes "
                f"in {attempt} attempts; controller below par")
        policy = make_behavior_policy(policy_kind, sigma=sigma, waypoint_every=waypoint_every)
        tr = rollout(spec, policy, derive_seed(seed, "episode", attempt),
                     record_actions=record_actions)
        attempt += 1
        if expert_only_success and not tr.success:
            continue
        trajectories.append(tr)
    return Dataset(role=role, trajectories=trajectories, env_spec_hash=spec.spec_hash())


def num_windows(dataset: Dataset) -> int:
    """Valid (trajectory, t) pairs: one window per transition."""
    return dataset.n_transitions


def window_index(dataset: Dataset, context: int, include_padded: bool = True) -> np.ndarray:
    """(n, 2) array of (trajectory, t) pairs; t indexes the transition
    o_t -> o_{t+1}. Windows with t < context need front padding; pass
    include_padded=False to drop them (the training default)."""
    pairs = []
    lo = 0 if include_padded else context
    for i, tr in enumerate(dataset.trajectories):
        for t in range(lo, tr.length - 1):
            pairs.append((i, t))
    if not pairs:
        raise ValueError("no windows available; trajectories shorter than the context")
    return np.asarray(pairs, dtype=np.int64)


@dataclass
class LamBatch:
    windows: np.ndarray            # (n, context+2, obs_dim) float32
    padded: np.ndarray             # (n,) bool: True if the window repeats o_0
    actions: Optional[np.ndarray]  # (n, action_dim) for labeled sources
    latent_actions: Optional[np.ndarray] = None

    @property
    def context_obs(self) -> np.ndarray:
        return self.windows[:, :-1]

    @property
    def next_obs(self) -> np.ndarray:
        return self.windows[:, -1]


def _stacked(dataset: Dataset, which: str) -> Optional[np.ndarray]:
    """(n_traj, T, dim) stack of one field, cached on the dataset; None when
    lengths differ or any trajectory lacks the field."""
    cache = getattr(dataset, "_stack_cache", None)
    if cache is None:
        cache = {}
        dataset._stack_cache = cache
    if which not in cache:
        parts = [getattr(tr, which) for tr in dataset.trajectories]
        if any(p is None for p in parts) or len({p.shape for p in parts}) != 1:
            cache[which] = None
        else:
            cache[which] = np.stack(parts)
    return cache[which]


def gather_windows(dataset: Dataset, pairs: np.ndarray, context: int) -> LamBatch:
    """Materialize windows o_{t-H..t+1} for the given (trajectory, t) pairs."""
    offsets = np.arange(-context, 2)
    traj_idx = pairs[:, 0]
    t_idx = pairs[:, 1]
    lengths = np.array([tr.length for tr in dataset.trajectories])
    if (t_idx < 0).any() or (t_idx >= lengths[traj_idx] - 1).any():
        raise ValueError("window index out of range for its trajectory")
    padded = t_idx < context
    times = np.clip(t_idx[:, None] + offsets[None, :], 0, None)

    obs = _stacked(dataset, "observations")
    if obs is not None:
        windows = obs[traj_idx[:, None], times]
    else:
        windows = np.empty((len(pairs), context + 2, dataset.obs_dim), np.float32)
        for row in range(len(pairs)):
            windows[row] = dataset.trajectories[traj_idx[row]].observations[times[row]]

    def per_transition(which: str) -> Optional[np.ndarray]:
        stack = _stacked(dataset, which)
        if stack is not None:
            return stack[traj_idx, t_idx]
        if any(getattr(tr, which) is None for tr in dataset.trajectories):
            return None
        return np.stack([
            getattr(dataset.trajectories[i], which)[t] for i, t in pairs
        ]).astype(np.float32)

    return LamBatch(windows=windows.astype(np.float32), padded=padded,
                    actions=per_transition("actions"),
                    latent_actions=per_transition("latent_actions"))


def sample_lam_batch(dataset: Dataset, context: int, batch_size: int,
                     rng: np.random.Generator, include_padded: bool = False) -> LamBatch:
    """Uniform with-replacement draw over valid windows."""
    cache = getattr(dataset, "_index_cache", None)
    if cache is None:
        cache = {}
        dataset._index_cache = cache
    key = (context, include_padded)
    if key not in cache:
        cache[key] = window_index(dataset, context, include_padded=include_padded)
    index = cache[key]
    pick = rng.integers(0, len(index), size=batch_size)
    return gather_windows(dataset, index[pick], context)


def transition_pairs(dataset: Dataset, which: str) -> tuple:
    """(obs_t, target_t) stacked over every transition; ``which`` selects
    actions or latent_actions as the target."""
    obs, tgt = [], []
    for tr in dataset.trajectories:
        target = tr.actions if which == "actions" else tr.latent_actions
        if target is None:
            raise ValueError(f"dataset lacks {which}")
        obs.append(tr.observations[:-1])
        tgt.append(target)
    return np.concatenate(obs), np.concatenate(tgt)


def save_dataset(path, dataset: Dataset) -> None:
    out = bytearray()
    out += MAGIC
    out += struct.pack("<I", VERSION)
    out += struct.pack("<Q", dataset.env_spec_hash)
    out += struct.pack("<B", _ROLE_CODES[dataset.role])
    out += struct.pack("<I", len(dataset.trajectories))
    for tr in dataset.trajectories:
        flags = ((tr.actions is not None)
                 | ((tr.latent_actions is not None) << 1)
                 | (int(tr.success) << 2))
        out += struct.pack("<I", tr.length)
        out += struct.pack("<B", flags)
        out += struct.pack("<Q", tr.seed % (1 << 64))
        kind = tr.policy_kind.encode("utf-8")
        out += struct.pack("<B", len(kind))
        out += kind
        out += struct.pack("<H", tr.observations.shape[1])
        out += np.ascontiguousarray(tr.observations, dtype="<f4").tobytes()
        for arr in (tr.actions, tr.latent_actions):
            if arr is not None:
                out += struct.pack("<H", arr.shape[1])
                out += np.ascontiguousarray(arr, dtype="<f4").tobytes()
    Path(path).write_bytes(bytes(out))


def load_dataset(path) -> Dataset:
    blob = Path(path).read_bytes()
    r = _Reader(blob, str(path))
    magic = r.take(len(MAGIC))
    if magic != MAGIC:
        raise BadMagicError(f"{path}: expected magic {MAGIC!r}, found {magic!r}")
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise VersionMismatchError(f"{path}: format version {version}, supported {VERSION}")
    (spec_hash,) = r.unpack("<Q")
    (role_code,) = r.unpack("<B")
    if role_code >= len(ROLES):
        raise VersionMismatchError(f"{path}: unknown role code {role_code}")
    (count,) = r.unpack("<I")
    trajectories = []
    for _ in range(count):
        (length,) = r.unpack("<I")
        (flags,) = r.unpack("<B")
        (seed,) = r.unpack("<Q")
        (kind_len,) = r.unpack("<B")
        kind = r.take(kind_len).decode("utf-8")
        (obs_dim,) = r.unpack("<H")
        obs = np.frombuffer(r.take(4 * length * obs_dim), dtype="<f4")
        obs = obs.reshape(length, obs_dim).astype(np.float32, copy=True)
        actions = latents = None
        if flags & 1:
            (adim,) = r.unpack("<H")
            actions = np.frombuffer(r.take(4 * (length - 1) * adim), dtype="<f4")
            actions = actions.reshape(length - 1, adim).astype(np.float32, copy=True)
        if flags & 2:
            (ldim,) = r.unpack("<H")
            latents = np.frombuffer(r.take(4 * (length - 1) * ldim), dtype="<f4")
            latents = latents.reshape(length - 1, ldim).astype(np.float32, copy=True)
        trajectories.append(Trajectory(
            observations=obs, actions=actions, latent_actions=latents,
            success=bool(flags & 4), seed=seed, policy_kind=kind))
    if r.pos != len(blob):
        raise TruncatedFileError(f"{path}: {len(blob) - r.pos} trailing bytes after payload")
    return Dataset(role=ROLES[role_code], trajectories=trajectories, env_spec_hash=spec_hash)
