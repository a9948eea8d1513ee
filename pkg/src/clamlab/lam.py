"""Latent action model: inverse dynamics into a continuous (or vector-quantized)
latent action, forward dynamics conditioned on it, and an action decoder.

The inverse dynamics model (IDM) reads a window o_{t-H..t+1} and emits a
latent action z_t; the forward dynamics model (FDM) must reproduce o_{t+1}
from the context o_{t-H..t} and z_t alone, which is what forces z_t to carry
action information. A small decoder maps z_t to environment actions and is
trained on whatever action-labeled data exists; with joint training its
gradient also shapes the IDM (weighted by beta).

``ClamEstimator`` wraps pretraining as fit(unlabeled, labeled) and relabeling
as transform(dataset). Each objective owns an independent Adam instance:
sharing moment state across objectives would let a zero-gradient step still
move parameters, silently breaking the beta=0 and no-joint equivalences.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import autodiff as ad
from . import nn
from .autodiff import Tape, Tensor
from .checkpoint import load_checkpoint, save_checkpoint
from .data import (Dataset, LamBatch, ROLE_RELABELED, ROLE_UNLABELED, Trajectory,
                   sample_lam_batch)
from .errors import ShapeMismatchError, TrainingDivergedError
from .optim import Adam
from .rng import make_rng

LATENT_CONTINUOUS = "continuous"
LATENT_VQ = "vq"
LATENT_MODES = (LATENT_CONTINUOUS, LATENT_VQ)
TRUNK_MLP = "mlp"
TRUNK_TRANSFORMER = "transformer"
TRUNKS = (TRUNK_MLP, TRUNK_TRANSFORMER)

# full-scale trunk sizes, enabled by the full_scale flag
FULL_SCALE_MLP_HIDDEN = (1024, 1024, 1024)
FULL_SCALE_MODEL_DIM = 256
FULL_SCALE_N_LAYERS = 3
FULL_SCALE_FF_DIM = 2048
FULL_SCALE_DROPOUT = 0.1


@dataclass(frozen=True)
class LamArch:
    """Everything needed to rebuild a model skeleton."""

    obs_dim: int
    action_dim: int
    latent_dim: int
    context: int
    trunk: str
    mlp_hidden: tuple
    dec_hidden: tuple
    model_dim: int
    n_heads: int
    n_layers: int
    ff_dim: int
    dropout: float
    latent_mode: str
    codebook_size: int
    commitment_weight: float
    env_spec_hash: int

    def __post_init__(self):
        if self.trunk not in TRUNKS:
            raise ValueError(f"unknown trunk {self.trunk!r}; choose from {TRUNKS}")
        if self.latent_mode not in LATENT_MODES:
            raise ValueError(f"unknown latent mode {self.latent_mode!r}; choose from {LATENT_MODES}")
        if min(self.obs_dim, self.action_dim, self.latent_dim, self.codebook_size) < 1:
            raise ValueError("dims must be positive")
        if self.context < 0:
            raise ValueError(f"context must be >= 0, got {self.context}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mlp_hidden"] = list(self.mlp_hidden)
        d["dec_hidden"] = list(self.dec_hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LamArch":
        d = dict(d)
        d["mlp_hidden"] = tuple(d["mlp_hidden"])
        d["dec_hidden"] = tuple(d["dec_hidden"])
        return cls(**d)


class MlpIdm(nn.Module):
    def __init__(self, arch: LamArch, rng: np.random.Generator):
        self.arch = arch
        window = (arch.context + 2) * arch.obs_dim
        self.net = nn.Mlp(nn.MlpSpec(window, arch.mlp_hidden, arch.latent_dim), rng)

    def forward(self, windows: Tensor) -> Tensor:
        b, t, s = windows.shape
        return self.net(ad.reshape(windows, (b, t * s)))


class MlpFdm(nn.Module):
    def __init__(self, arch: LamArch, rng: np.random.Generator):
        self.arch = arch
        ctx = (arch.context + 1) * arch.obs_dim
        self.net = nn.Mlp(nn.MlpSpec(ctx + arch.latent_dim, arch.mlp_hidden, arch.obs_dim), rng)

    def forward(self, context: Tensor, z: Tensor) -> Tensor:
        b, t, s = context.shape
        flat = ad.reshape(context, (b, t * s))
        return self.net(ad.concat([flat, z], axis=1))


class TfIdm(nn.Module):
    """Bidirectional encoder over the window; latent head per position,
    the final position (the o_t -> o_{t+1} transition) is the latent action."""

    def __init__(self, arch: LamArch, rng: np.random.Generator):
        self.arch = arch
        spec = nn.TransformerSpec(arch.model_dim, arch.n_heads, arch.n_layers,
                                  arch.ff_dim, arch.dropout, max_seq_len=arch.context + 2)
        self.input_embed = nn.Linear(arch.obs_dim, arch.model_dim, rng)
        self.pos = nn.LearnedPositions(arch.context + 2, arch.model_dim, rng)
        self.encoder = nn.TransformerEncoder(spec, rng)
        self.latent_head = nn.Linear(arch.model_dim, arch.latent_dim, rng)

    def forward(self, windows: Tensor, drop_rng=None) -> Tensor:
        t = windows.shape[1]
        tok = ad.add(ad.leaky_relu(self.input_embed(windows)), self.pos(t))
        h = self.encoder(tok, mask=None, drop_rng=drop_rng)
        zs = self.latent_head(h)
        return ad.take_slice(zs, (slice(None), -1))


class TfFdm(nn.Module):
    """Causal decoder over the context; the latent action enters as a memory
    token through unmasked cross-attention."""

    def __init__(self, arch: LamArch, rng: np.random.Generator):
        self.arch = arch
        spec = nn.TransformerSpec(arch.model_dim, arch.n_heads, arch.n_layers,
                                  arch.ff_dim, arch.dropout, max_seq_len=arch.context + 1)
        self.input_embed = nn.Linear(arch.obs_dim, arch.model_dim, rng)
        self.pos = nn.LearnedPositions(arch.context + 1, arch.model_dim, rng)
        self.la_embed = nn.Linear(arch.latent_dim, arch.model_dim, rng)
        self.decoder = nn.TransformerDecoder(spec, rng)
        self.out = nn.Linear(arch.model_dim, arch.obs_dim, rng)

    def forward(self, context: Tensor, z: Tensor, drop_rng=None) -> Tensor:
        b, t, _ = context.shape
        tok = ad.add(ad.leaky_relu(self.input_embed(context)), self.pos(t))
        memory = ad.reshape(ad.leaky_relu(self.la_embed(z)), (b, 1, self.arch.model_dim))
        h = self.decoder(tok, memory, drop_rng=drop_rng)
        return self.out(ad.take_slice(h, (slice(None), -1)))


class ActionDecoder(nn.Module):
    """Latent action -> environment action, tanh-bounded to the action box."""

    def __init__(self, arch: LamArch, rng: np.random.Generator):
        self.net = nn.Mlp(nn.MlpSpec(arch.latent_dim, arch.dec_hidden, arch.action_dim,
                                     final_activation="tanh"), rng)

    def forward(self, z: Tensor) -> Tensor:
        return self.net(z)


def idm_forward(model: "LamModel", windows: Tensor, drop_rng=None) -> Tensor:
    if windows.ndim != 3 or windows.shape[1] != model.arch.context + 2 \
            or windows.shape[2] != model.arch.obs_dim:
        raise ShapeMismatchError("idm_forward", windows.shape,
                                 (-1, model.arch.context + 2, model.arch.obs_dim))
    if model.arch.trunk == TRUNK_MLP:
        return model.idm(windows)
    return model.idm(windows, drop_rng=drop_rng)


def fdm_forward(model: "LamModel", context: Tensor, z: Tensor, drop_rng=None) -> Tensor:
    if context.ndim != 3 or context.shape[1] != model.arch.context + 1 \
            or context.shape[2] != model.arch.obs_dim:
        raise ShapeMismatchError("fdm_forward", context.shape,
                                 (-1, model.arch.context + 1, model.arch.obs_dim))
    if z.ndim != 2 or z.shape[0] != context.shape[0] or z.shape[1] != model.arch.latent_dim:
        raise ShapeMismatchError("fdm_forward", z.shape, (context.shape[0], model.arch.latent_dim))
    if model.arch.trunk == TRUNK_MLP:
        return model.fdm(context, z)
    return model.fdm(context, z, drop_rng=drop_rng)


def action_decode(model: "LamModel", z: Tensor) -> Tensor:
    return model.decoder(z)


def nearest_code(codebook: np.ndarray, z: np.ndarray):
    """Nearest codebook row by Euclidean distance; ties take the lowest index."""
    d2 = (z * z).sum(axis=1, keepdims=True) - 2.0 * (z @ codebook.T) \
        + (codebook * codebook).sum(axis=1)
    idx = np.argmin(d2, axis=1)
    return codebook[idx], idx


def vq_quantize(codebook: Tensor, z: Tensor, commitment_weight: float = 0.25):
    """Straight-through quantization.

    Returns (z_q, indices, vq_loss). The forward value of z_q is the selected
    code; its gradient passes to z untouched. vq_loss pulls selected codes
    toward latents (codebook term) and latents toward codes (commitment term,
    scaled by ``commitment_weight``).
    """
    zq_val, idx = nearest_code(codebook.data, z.data)
    z_q = ad.add(z, Tensor(zq_val - z.data))
    codebook_term = ad.mse(ad.embedding_lookup(codebook, idx), Tensor(z.data.copy()))
    commitment_term = ad.mse(z, Tensor(zq_val))
    vq_loss = ad.add(codebook_term, ad.scale(commitment_term, commitment_weight))
    return z_q, idx, vq_loss


class LamModel:
    """Built model: IDM + FDM + action decoder (+ codebook in vq mode)."""

    def __init__(self, arch: LamArch, seed: int):
        self.arch = arch
        self.seed = seed
        if arch.trunk == TRUNK_MLP:
            self.idm = MlpIdm(arch, make_rng(seed, "init", "idm"))
            self.fdm = MlpFdm(arch, make_rng(seed, "init", "fdm"))
        else:
            self.idm = TfIdm(arch, make_rng(seed, "init", "idm"))
            self.fdm = TfFdm(arch, make_rng(seed, "init", "fdm"))
        self.decoder = ActionDecoder(arch, make_rng(seed, "init", "decoder"))
        self.codebook: Optional[Tensor] = None
        if arch.latent_mode == LATENT_VQ:
            init = make_rng(seed, "init", "codebook").normal(
                0.0, 0.1, (arch.codebook_size, arch.latent_dim))
            self.codebook = Tensor(init.astype(np.float32), requires_grad=True)

    def named_parameters(self) -> dict:
        out = {}
        out.update(self.idm.named_parameters(prefix="idm."))
        out.update(self.fdm.named_parameters(prefix="fdm."))
        out.update(self.decoder.named_parameters(prefix="decoder."))
        if self.codebook is not None:
            out["codebook"] = self.codebook
        return out

    def param_count(self) -> int:
        return int(sum(p.data.size for p in self.named_parameters().values()))

    def lam_parameters(self) -> list:
        params = self.idm.parameters() + self.fdm.parameters()
        if self.codebook is not None:
            params.append(self.codebook)
        return params

    def infer_latent(self, windows: np.ndarray, quantize: bool = True,
                     chunk: int = 8192) -> np.ndarray:
        """Latent actions for a stack of windows; inference only, no tape."""
        out = []
        for lo in range(0, len(windows), chunk):
            z = idm_forward(self, Tensor(windows[lo:lo + chunk])).data
            if quantize and self.codebook is not None:
                z, _ = nearest_code(self.codebook.data, z)
            out.append(z)
        return np.concatenate(out).astype(np.float32)

    def decode_action(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=np.float32)
        squeeze = z.ndim == 1
        if squeeze:
            z = z[None]
        a = action_decode(self, Tensor(z)).data
        return a[0] if squeeze else a

    def predict_next(self, context: np.ndarray, z: np.ndarray) -> np.ndarray:
        return fdm_forward(self, Tensor(context), Tensor(z)).data

    def save(self, path) -> None:
        meta = {"kind": "lam", "arch": self.arch.to_dict(), "seed": self.seed}
        save_checkpoint(path, meta, {k: v.data for k, v in self.named_parameters().items()})

    @classmethod
    def load(cls, path) -> "LamModel":
        meta, tensors = load_checkpoint(path)
        if meta.get("kind") != "lam":
            raise ValueError(f"{path}: checkpoint kind {meta.get('kind')!r}, expected 'lam'")
        model = cls(LamArch.from_dict(meta["arch"]), seed=int(meta.get("seed", 0)))
        params = model.named_parameters()
        missing = sorted(set(params) - set(tensors))
        if missing:
            raise KeyError(f"checkpoint missing tensors: {missing[:4]}")
        for name, p in params.items():
            arr = tensors[name]
            if arr.shape != p.data.shape:
                raise ShapeMismatchError(f"load[{name}]", p.data.shape, arr.shape)
            p.data = arr.copy()
        return model


def _window_tensor(batch: LamBatch) -> Tensor:
    return Tensor(np.ascontiguousarray(batch.windows))


def relabel(model: LamModel, dataset: Dataset) -> Dataset:
    """Write latent actions onto every transition of unlabeled expert data."""
    if dataset.role != ROLE_UNLABELED:
        raise ValueError(f"relabel expects role {ROLE_UNLABELED!r}, got {dataset.role!r}")
    if dataset.env_spec_hash != model.arch.env_spec_hash:
        raise ValueError("dataset/model env spec hash mismatch: "
                         f"{dataset.env_spec_hash} vs {model.arch.env_spec_hash}")
    if dataset.obs_dim != model.arch.obs_dim:
        raise ShapeMismatchError("relabel", (dataset.obs_dim,), (model.arch.obs_dim,))
    h = model.arch.context
    offsets = np.arange(-h, 2)
    out = []
    for tr in dataset.trajectories:
        times = np.clip(np.arange(tr.length - 1)[:, None] + offsets[None, :], 0, None)
        windows = tr.observations[times]
        z = model.infer_latent(windows)
        out.append(Trajectory(
            observations=tr.observations.copy(), actions=None, latent_actions=z,
            success=tr.success, seed=tr.seed, policy_kind=tr.policy_kind))
    return Dataset(role=ROLE_RELABELED, trajectories=out,
                   env_spec_hash=dataset.env_spec_hash)


class ClamEstimator(BaseEstimator):
    """Latent action model pretrainer with sklearn-style fit/transform.

    fit(unlabeled, labeled) alternates one reconstruction update on
    observation-only windows with one decoder update on action-labeled
    windows (weighted by ``beta``); transform(dataset) relabels unlabeled
    expert data with inferred latent actions.

    Parameters mirror the architecture and training knobs; ``latent_dim=None``
    resolves to twice the action dim. ``joint_training=False`` switches to
    two-phase training: reconstruction only, then decoder fitting on frozen
    latents. ``full_scale=True`` swaps in the large trunk sizes.
    """

    def __init__(self, latent_dim=None, context=1, trunk=TRUNK_MLP,
                 hidden_dim=256, n_hidden=2, dec_hidden_dim=256, dec_n_hidden=2,
                 model_dim=64, n_heads=4, n_layers=2, ff_dim=256, dropout=0.0,
                 latent_mode=LATENT_CONTINUOUS, codebook_size=2,
                 commitment_weight=0.25, beta=1.0, joint_training=True,
                 labeled_updates_train_idm=True, steps=2000, decoder_steps=None,
                 batch_size=128, lr=1e-3, include_padded_windows=False,
                 action_dim=None, full_scale=False, seed=0):
        self.latent_dim = latent_dim
        self.context = context
        self.trunk = trunk
        self.hidden_dim = hidden_dim
        self.n_hidden = n_hidden
        self.dec_hidden_dim = dec_hidden_dim
        self.dec_n_hidden = dec_n_hidden
        self.model_dim = model_dim
        self.n_heads = n_heads
        self.n_layers = n_layers
        self.ff_dim = ff_dim
        self.dropout = dropout
        self.latent_mode = latent_mode
        self.codebook_size = codebook_size
        self.commitment_weight = commitment_weight
        self.beta = beta
        self.joint_training = joint_training
        self.labeled_updates_train_idm = labeled_updates_train_idm
        self.steps = steps
        self.decoder_steps = decoder_steps
        self.batch_size = batch_size
        self.lr = lr
        self.include_padded_windows = include_padded_windows
        self.action_dim = action_dim
        self.full_scale = full_scale
        self.seed = seed

    def _resolve_arch(self, unlabeled: Dataset, labeled: Optional[Dataset]) -> LamArch:
        obs_dim = unlabeled.obs_dim
        if labeled is not None:
            action_dim = labeled.trajectories[0].actions.shape[1]
            if self.action_dim is not None and self.action_dim != action_dim:
                raise ValueError(f"action_dim={self.action_dim} but labeled data has {action_dim}")
        elif self.action_dim is not None:
            action_dim = self.action_dim
        else:
            raise ValueError("need labeled data or an explicit action_dim")
        latent_dim = self.latent_dim if self.latent_dim is not None else 2 * action_dim
        if self.full_scale:
            mlp_hidden = FULL_SCALE_MLP_HIDDEN
            dec_hidden = FULL_SCALE_MLP_HIDDEN
            model_dim, n_layers = FULL_SCALE_MODEL_DIM, FULL_SCALE_N_LAYERS
            ff_dim, dropout = FULL_SCALE_FF_DIM, FULL_SCALE_DROPOUT
        else:
            mlp_hidden = (self.hidden_dim,) * self.n_hidden
            dec_hidden = (self.dec_hidden_dim,) * self.dec_n_hidden
            model_dim, n_layers = self.model_dim, self.n_layers
            ff_dim, dropout = self.ff_dim, self.dropout
        return LamArch(
            obs_dim=obs_dim, action_dim=action_dim, latent_dim=int(latent_dim),
            context=self.context, trunk=self.trunk, mlp_hidden=mlp_hidden,
            dec_hidden=dec_hidden, model_dim=model_dim, n_heads=self.n_heads,
            n_layers=n_layers, ff_dim=ff_dim, dropout=dropout,
            latent_mode=self.latent_mode, codebook_size=self.codebook_size,
            commitment_weight=self.commitment_weight,
            env_spec_hash=unlabeled.env_spec_hash)

    def _check_inputs(self, unlabeled: Dataset, labeled: Optional[Dataset]) -> None:
        if unlabeled.role != ROLE_UNLABELED:
            raise ValueError(f"unlabeled dataset has role {unlabeled.role!r}")
        if labeled is not None:
            if any(tr.actions is None for tr in labeled.trajectories):
                raise ValueError("labeled dataset must carry actions on every trajectory")
            if labeled.env_spec_hash != unlabeled.env_spec_hash:
                raise ValueError("unlabeled/labeled env spec hash mismatch")
            if labeled.obs_dim != unlabeled.obs_dim:
                raise ShapeMismatchError("fit", (labeled.obs_dim,), (unlabeled.obs_dim,))

    def _recon_step(self, model, batch, opt, drop_rng) -> tuple:
        opt.zero_grad()
        with Tape():
            z = idm_forward(model, _window_tensor(batch), drop_rng=drop_rng)
            l_vq = None
            if model.codebook is not None:
                z, _, l_vq = vq_quantize(model.codebook, z, model.arch.commitment_weight)
            pred = fdm_forward(model, Tensor(np.ascontiguousarray(batch.context_obs)), z,
                               drop_rng=drop_rng)
            l_recon = ad.mse(pred, Tensor(np.ascontiguousarray(batch.next_obs)))
            loss = l_recon if l_vq is None else ad.add(l_recon, l_vq)
            loss.backward()
        opt.step()
        return float(l_recon.data), (float(l_vq.data) if l_vq is not None else 0.0)

    def _joint_decoder_step(self, model, batch, opt, drop_rng) -> float:
        opt.zero_grad()
        with Tape():
            z = idm_forward(model, _window_tensor(batch), drop_rng=drop_rng)
            if not self.labeled_updates_train_idm:
                z = z.detach()
            if model.codebook is not None:
                zq_val, _ = nearest_code(model.codebook.data, z.data)
                z = ad.add(z, Tensor(zq_val - z.data))  # straight-through, no vq terms
            a_hat = action_decode(model, z)
            l_ad = ad.mse(a_hat, Tensor(batch.actions))
            loss = ad.scale(l_ad, self.beta)
            loss.backward()
        opt.step()
        return float(l_ad.data)

    def _frozen_decoder_step(self, model, batch, opt) -> float:
        z = model.infer_latent(batch.windows)
        opt.zero_grad()
        with Tape():
            a_hat = action_decode(model, Tensor(z))
            l_ad = ad.mse(a_hat, Tensor(batch.actions))
            l_ad.backward()
        opt.step()
        return float(l_ad.data)

    def fit(self, unlabeled: Dataset, labeled: Optional[Dataset] = None) -> "ClamEstimator":
        self._check_inputs(unlabeled, labeled)
        arch = self._resolve_arch(unlabeled, labeled)
        model = LamModel(arch, seed=self.seed)
        rng_u = make_rng(self.seed, "batch-unlabeled")
        rng_l = make_rng(self.seed, "batch-labeled")
        drop_rng = make_rng(self.seed, "dropout") if arch.dropout > 0 else None
        include = self.include_padded_windows

        opt_lam = Adam(model.lam_parameters(), lr=self.lr)
        dec_params = list(model.decoder.parameters())
        if self.labeled_updates_train_idm:
            dec_params += model.idm.parameters()
        # Adam divides out any constant factor on its loss, so scaling l_ad by
        # beta alone would leave the labeled update unweighted; the weight has
        # to enter through the step size.
        opt_dec = Adam(dec_params, lr=self.lr * self.beta)

        history = []

        def check_finite(step_i, *values):
            if not all(np.isfinite(v) for v in values if not np.isnan(v)):
                raise TrainingDivergedError(f"non-finite loss at step {step_i}")

        for i in range(self.steps):
            batch_u = sample_lam_batch(unlabeled, arch.context, self.batch_size,
                                       rng_u, include_padded=include)
            l_recon, l_vq = self._recon_step(model, batch_u, opt_lam, drop_rng)
            l_ad = float("nan")
            if self.joint_training and labeled is not None:
                batch_l = sample_lam_batch(labeled, arch.context, self.batch_size,
                                           rng_l, include_padded=include)
                l_ad = self._joint_decoder_step(model, batch_l, opt_dec, drop_rng)
            l_total = l_recon + l_vq + (self.beta * l_ad if not np.isnan(l_ad) else 0.0)
            if not np.isfinite(l_total):
                raise TrainingDivergedError(f"non-finite loss at step {i}")
            check_finite(i, l_recon, l_vq, l_ad)
            history.append({"step": i, "l_recon": l_recon, "l_ad": l_ad,
                            "l_vq": l_vq, "l_total": l_total})

        if not self.joint_training and labeled is not None:
            opt_dec2 = Adam(model.decoder.parameters(), lr=self.lr)
            n_dec = self.decoder_steps if self.decoder_steps is not None else self.steps
            for j in range(n_dec):
                batch_l = sample_lam_batch(labeled, arch.context, self.batch_size,
                                           rng_l, include_padded=include)
                l_ad = self._frozen_decoder_step(model, batch_l, opt_dec2)
                check_finite(self.steps + j, l_ad)
                history.append({"step": self.steps + j, "l_recon": float("nan"),
                                "l_ad": l_ad, "l_vq": float("nan"),
                                "l_total": float("nan")})

        self.model_ = model
        self.arch_ = arch
        self.history_ = history
        return self

    def transform(self, dataset: Dataset) -> Dataset:
        check_is_fitted(self, "model_")
        return relabel(self.model_, dataset)

    def fit_transform(self, unlabeled: Dataset, labeled: Optional[Dataset] = None) -> Dataset:
        return self.fit(unlabeled, labeled).transform(unlabeled)

    def save(self, path) -> None:
        check_is_fitted(self, "model_")
        self.model_.save(path)
