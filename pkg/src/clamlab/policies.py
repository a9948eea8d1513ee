"""Policies over observations: latent-action policy and baselines.

All policies expose ``predict(obs) -> action`` and are evaluated through
closed-loop rollouts that see observations only, so no policy can peek at
ground-truth state or actions at inference time.

* ``LatentPolicy``: regresses relabeled latent actions from observations and
  decodes through a trained latent action model at inference.
* ``BehaviorCloning``: direct observation-to-action regression on whatever
  action-labeled data exists.
* ``VptBaseline``: supervised inverse dynamics on the labeled set, pseudo-
  labels the expert observations, then behavior-clones the pseudo labels.
* ``train_lapo_style``: the latent pipeline with a vector-quantized
  bottleneck and two-phase (non-joint) training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .data import (Dataset, ROLE_RELABELED, ROLE_UNLABELED, Trajectory,
                   gather_windows, transition_pairs, window_index)
from .envs import EnvSpec, EnvState, expert_action, observe, reset, step
from .errors import TrainingDivergedError
from .lam import ClamEstimator, LamModel, TRUNK_MLP, nearest_code
from .nn import Mlp, MlpSpec
from .optim import Adam
from .rng import derive_seed, make_rng


def _as_batch(obs: np.ndarray, dim: int, what: str) -> tuple:
    arr = np.asarray(obs, dtype=np.float32)
    squeeze = arr.ndim == 1
    if squeeze:
        arr = arr[None]
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise ValueError(f"{what} expects (..., {dim}) observations, got {arr.shape}")
    return arr, squeeze


def _fit_regressor(net: Mlp, x: np.ndarray, y: np.ndarray, steps: int,
                   batch_size: int, lr: float, rng: np.random.Generator) -> list:
    """Minibatch MSE regression; returns per-step loss rows."""
    opt = Adam(net.parameters(), lr=lr)
    history = []
    n = len(x)
    for i in range(steps):
        pick = rng.integers(0, n, size=batch_size)
        opt.zero_grad()
        with Tape():
            pred = net(Tensor(x[pick]))
            loss = ad.mse(pred, Tensor(y[pick]))
            loss.backward()
        opt.step()
        value = float(loss.data)
        if not np.isfinite(value):
            raise TrainingDivergedError(f"non-finite loss at step {i}")
        history.append({"step": i, "loss": value})
    return history


class LatentPolicy(BaseEstimator):
    """Observation -> latent action, decoded to an env action at inference.

    ``lam`` is a fitted LamModel (or a fitted ClamEstimator). With
    ``init_from="idm"`` the trunk starts from the IDM's weights: the first
    layer takes the o_t block of the IDM's first layer, deeper layers copy
    where shapes match (MLP trunks only).
    """

    def __init__(self, lam=None, hidden_dim=256, n_hidden=2, steps=1500,
                 batch_size=128, lr=1e-3, init_from="fresh", seed=0):
        self.lam = lam
        self.hidden_dim = hidden_dim
        self.n_hidden = n_hidden
        self.steps = steps
        self.batch_size = batch_size
        self.lr = lr
        self.init_from = init_from
        self.seed = seed

    def _resolve_lam(self) -> LamModel:
        if isinstance(self.lam, LamModel):
            return self.lam
        if isinstance(self.lam, ClamEstimator):
            check_is_fitted(self.lam, "model_")
            return self.lam.model_
        raise ValueError("lam must be a LamModel or a fitted ClamEstimator")

    def _init_from_idm(self, net: Mlp, model: LamModel) -> None:
        if model.arch.trunk != TRUNK_MLP:
            raise ValueError("init_from='idm' is defined for MLP trunks only")
        idm_layers = model.idm.net.layers
        s = model.arch.obs_dim
        h = model.arch.context
        lo, hi = h * s, (h + 1) * s  # rows of the o_t block in the flattened window
        net.layers[0].w.data = idm_layers[0].w.data[lo:hi].copy()
        net.layers[0].b.data = idm_layers[0].b.data.copy()
        for mine, theirs in zip(net.layers[1:], idm_layers[1:]):
            if mine.w.data.shape == theirs.w.data.shape:
                mine.w.data = theirs.w.data.copy()
                mine.b.data = theirs.b.data.copy()

    def fit(self, relabeled: Dataset) -> "LatentPolicy":
        model = self._resolve_lam()
        if relabeled.role != ROLE_RELABELED:
            raise ValueError(f"latent policy expects role {ROLE_RELABELED!r}, "
                             f"got {relabeled.role!r}")
        if relabeled.env_spec_hash != model.arch.env_spec_hash:
            raise ValueError("relabeled data/model env spec hash mismatch")
        obs, z = transition_pairs(relabeled, "latent_actions")
        if z.shape[1] != model.arch.latent_dim:
            raise ValueError(f"latent dim mismatch: data {z.shape[1]}, "
                             f"model {model.arch.latent_dim}")
        if self.init_from not in ("fresh", "idm"):
            raise ValueError(f"unknown init_from {self.init_from!r}")
        net = Mlp(MlpSpec(model.arch.obs_dim, (self.hidden_dim,) * self.n_hidden,
                          model.arch.latent_dim),
                  make_rng(self.seed, "init", "policy"))
        if self.init_from == "idm":
            self._init_from_idm(net, model)
        self.history_ = _fit_regressor(net, obs, z, self.steps, self.batch_size,
                                       self.lr, make_rng(self.seed, "batch-policy"))
        self.trunk_ = net
        self.model_ = model
        return self

    def predict_latent(self, obs: np.ndarray) -> np.ndarray:
        check_is_fitted(self, "trunk_")
        x, squeeze = _as_batch(obs, self.model_.arch.obs_dim, "latent policy")
        z = self.trunk_(Tensor(x)).data
        if self.model_.codebook is not None:
            z, _ = nearest_code(self.model_.codebook.data, z)
        return z[0] if squeeze else z

    def predict(self, obs: np.ndarray) -> np.ndarray:
        return self.model_.decode_action(self.predict_latent(obs))

    def save(self, path) -> None:
        check_is_fitted(self, "trunk_")
        from .checkpoint import save_checkpoint
        meta = {"kind": "latent-policy", "obs_dim": self.model_.arch.obs_dim,
                "latent_dim": self.model_.arch.latent_dim,
                "hidden_dim": self.hidden_dim, "n_hidden": self.n_hidden}
        save_checkpoint(path, meta, {k: v.data for k, v in
                                     self.trunk_.named_parameters().items()})


class BehaviorCloning(BaseEstimator):
    """Direct regression from observations to actions, tanh-bounded."""

    def __init__(self, hidden_dim=256, n_hidden=2, steps=1500, batch_size=128,
                 lr=1e-3, seed=0):
        self.hidden_dim = hidden_dim
        self.n_hidden = n_hidden
        self.steps = steps
        self.batch_size = batch_size
        self.lr = lr
        self.seed = seed

    def fit(self, labeled: Dataset) -> "BehaviorCloning":
        if any(tr.actions is None for tr in labeled.trajectories):
            raise ValueError("behavior cloning needs actions on every trajectory")
        obs, actions = transition_pairs(labeled, "actions")
        net = Mlp(MlpSpec(obs.shape[1], (self.hidden_dim,) * self.n_hidden,
                          actions.shape[1], final_activation="tanh"),
                  make_rng(self.seed, "init", "bc"))
        self.history_ = _fit_regressor(net, obs, actions, self.steps,
                                       self.batch_size, self.lr,
                                       make_rng(self.seed, "batch-bc"))
        self.net_ = net
        self.obs_dim_ = int(obs.shape[1])
        self.action_dim_ = int(actions.shape[1])
        return self

    def predict(self, obs: np.ndarray) -> np.ndarray:
        check_is_fitted(self, "net_")
        x, squeeze = _as_batch(obs, self.obs_dim_, "behavior cloning")
        a = self.net_(Tensor(x)).data
        return a[0] if squeeze else a

    def save(self, path) -> None:
        check_is_fitted(self, "net_")
        from .checkpoint import save_checkpoint
        meta = {"kind": "bc-policy", "obs_dim": self.obs_dim_,
                "action_dim": self.action_dim_,
                "hidden_dim": self.hidden_dim, "n_hidden": self.n_hidden}
        save_checkpoint(path, meta, {k: v.data for k, v in
                                     self.net_.named_parameters().items()})


class VptBaseline(BaseEstimator):
    """Supervised inverse dynamics, pseudo-labeling, then behavior cloning.

    The IDM here sees the same o_{t-H..t+1} windows as the latent model but
    regresses true actions directly; its held-out MSE is kept as
    ``idm_val_mse_``.
    """

    def __init__(self, context=1, idm_hidden_dim=256, idm_n_hidden=2,
                 hidden_dim=256, n_hidden=2, idm_steps=1500, steps=1500,
                 batch_size=128, lr=1e-3, val_fraction=0.1, seed=0):
        self.context = context
        self.idm_hidden_dim = idm_hidden_dim
        self.idm_n_hidden = idm_n_hidden
        self.hidden_dim = hidden_dim
        self.n_hidden = n_hidden
        self.idm_steps = idm_steps
        self.steps = steps
        self.batch_size = batch_size
        self.lr = lr
        self.val_fraction = val_fraction
        self.seed = seed

    def fit(self, labeled: Dataset, unlabeled: Dataset) -> "VptBaseline":
        if any(tr.actions is None for tr in labeled.trajectories):
            raise ValueError("inverse dynamics pretraining needs actions")
        if unlabeled.role != ROLE_UNLABELED:
            raise ValueError(f"expected role {ROLE_UNLABELED!r} for the unlabeled set")
        if labeled.env_spec_hash != unlabeled.env_spec_hash:
            raise ValueError("labeled/unlabeled env spec hash mismatch")
        h = self.context
        obs_dim = labeled.obs_dim

        pairs = window_index(labeled, h, include_padded=False)
        batch = gather_windows(labeled, pairs, h)
        flat = batch.windows.reshape(len(pairs), -1)
        rng = make_rng(self.seed, "vpt-split")
        perm = rng.permutation(len(pairs))
        n_val = max(1, int(len(pairs) * self.val_fraction))
        val, train = perm[:n_val], perm[n_val:]

        idm = Mlp(MlpSpec(flat.shape[1], (self.idm_hidden_dim,) * self.idm_n_hidden,
                          batch.actions.shape[1], final_activation="tanh"),
                  make_rng(self.seed, "init", "vpt-idm"))
        self.idm_history_ = _fit_regressor(idm, flat[train], batch.actions[train],
                                           self.idm_steps, self.batch_size, self.lr,
                                           make_rng(self.seed, "batch-vpt-idm"))
        pred_val = idm(Tensor(flat[val])).data
        self.idm_val_mse_ = float(((pred_val - batch.actions[val]) ** 2).mean())
        self.idm_ = idm

        offsets = np.arange(-h, 2)
        pseudo = []
        for tr in unlabeled.trajectories:
            times = np.clip(np.arange(tr.length - 1)[:, None] + offsets[None, :], 0, None)
            windows = tr.observations[times].reshape(tr.length - 1, -1)
            actions = idm(Tensor(windows)).data.astype(np.float32)
            pseudo.append(Trajectory(
                observations=tr.observations.copy(), actions=actions,
                success=tr.success, seed=tr.seed, policy_kind=tr.policy_kind))
        self.pseudo_labeled_ = Dataset(role="labeled", trajectories=pseudo,
                                       env_spec_hash=unlabeled.env_spec_hash)

        bc = BehaviorCloning(hidden_dim=self.hidden_dim, n_hidden=self.n_hidden,
                             steps=self.steps, batch_size=self.batch_size,
                             lr=self.lr, seed=self.seed)
        bc.fit(self.pseudo_labeled_)
        self.policy_ = bc
        self.history_ = bc.history_
        self.obs_dim_ = obs_dim
        return self

    def predict(self, obs: np.ndarray) -> np.ndarray:
        check_is_fitted(self, "policy_")
        return self.policy_.predict(obs)

    def save(self, path) -> None:
        check_is_fitted(self, "policy_")
        self.policy_.save(path)


def train_lapo_style(unlabeled: Dataset, labeled: Dataset,
                     lam_params: dict = None, policy_params: dict = None):
    """Two-phase vector-quantized latent pipeline; same code path as the
    continuous-joint pipeline with two flags flipped."""
    lam_params = dict(lam_params or {})
    lam_params["latent_mode"] = "vq"
    lam_params["joint_training"] = False
    est = ClamEstimator(**lam_params).fit(unlabeled, labeled)
    relabeled = est.transform(unlabeled)
    policy = LatentPolicy(lam=est.model_, **(policy_params or {})).fit(relabeled)
    return est, policy


def load_policy(path, lam: LamModel = None):
    """Rebuild a fitted policy from a checkpoint.

    Latent policies emit latent actions and need the matching latent action
    model (``lam``) to decode them; behavior-cloned policies stand alone.
    """
    from .checkpoint import load_checkpoint
    meta, tensors = load_checkpoint(path)
    kind = meta.get("kind")
    if kind == "latent-policy":
        if lam is None:
            raise ValueError("latent policy checkpoints need the latent action "
                             "model that produced their training labels")
        if (lam.arch.obs_dim != meta["obs_dim"]
                or lam.arch.latent_dim != meta["latent_dim"]):
            raise ValueError("policy/model dimension mismatch: policy "
                             f"({meta['obs_dim']} -> {meta['latent_dim']}), model "
                             f"({lam.arch.obs_dim} -> {lam.arch.latent_dim})")
        pol = LatentPolicy(lam=lam, hidden_dim=meta["hidden_dim"],
                           n_hidden=meta["n_hidden"])
        net = Mlp(MlpSpec(meta["obs_dim"], (meta["hidden_dim"],) * meta["n_hidden"],
                          meta["latent_dim"]), make_rng(0, "load"))
        net.load_state(tensors)
        pol.trunk_ = net
        pol.model_ = lam
        pol.history_ = []
        return pol
    if kind == "bc-policy":
        pol = BehaviorCloning(hidden_dim=meta["hidden_dim"],
                              n_hidden=meta["n_hidden"])
        net = Mlp(MlpSpec(meta["obs_dim"], (meta["hidden_dim"],) * meta["n_hidden"],
                          meta["action_dim"], final_activation="tanh"),
                  make_rng(0, "load"))
        net.load_state(tensors)
        pol.net_ = net
        pol.obs_dim_ = int(meta["obs_dim"])
        pol.action_dim_ = int(meta["action_dim"])
        pol.history_ = []
        return pol
    raise ValueError(f"unknown policy checkpoint kind {kind!r}")


class ExpertAgent:
    """Scripted expert driven from observations only."""

    def __init__(self, spec: EnvSpec):
        self.spec = spec

    def _state_from_obs(self, obs: np.ndarray) -> EnvState:
        o = np.asarray(obs, dtype=np.float64)
        if self.spec.kind == "point-reach":
            return EnvState(q=o[0:2], qd=o[2:4], goal=o[4:6])
        q = np.arctan2(o[2:4], o[0:2])
        return EnvState(q=q, qd=o[4:6], goal=o[6:8])

    def predict(self, obs: np.ndarray) -> np.ndarray:
        return expert_action(self.spec, self._state_from_obs(obs))


class RandomAgent:
    def __init__(self, action_dim: int, seed: int = 0):
        self.action_dim = action_dim
        self._rng = make_rng("random-agent", seed)

    def predict(self, obs: np.ndarray) -> np.ndarray:
        return self._rng.uniform(-1.0, 1.0, self.action_dim)


@dataclass
class EvalReport:
    success_rate: float
    mean_steps_to_success: float
    n_episodes: int
    episodes: list

    def rows(self) -> list:
        return self.episodes


def evaluate(policy, spec: EnvSpec, n_episodes: int = 100, seed: int = 0) -> EvalReport:
    """Closed-loop evaluation; episode seeds derive from ``seed`` alone, so
    every policy evaluated with the same seed sees the same episodes."""
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    episodes = []
    steps_list = []
    wins = 0
    for i in range(n_episodes):
        ep_seed = derive_seed(seed, "eval-episode", i)
        state = reset(spec, ep_seed)
        success = False
        steps_to = None
        for _ in range(spec.horizon):
            action = policy.predict(observe(spec, state))
            state, hit = step(spec, state, action)
            if hit and not success:
                success = True
                steps_to = state.t
        wins += int(success)
        if steps_to is not None:
            steps_list.append(steps_to)
        episodes.append({"episode": i, "seed": ep_seed, "success": success,
                         "steps_to_success": steps_to if steps_to is not None
                         else float("nan")})
    return EvalReport(
        success_rate=wins / n_episodes,
        mean_steps_to_success=float(np.mean(steps_list)) if steps_list else float("nan"),
        n_episodes=n_episodes,
        episodes=episodes,
    )
