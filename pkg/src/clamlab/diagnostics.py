"""Degeneracy probes for trained latent action models.

A latent dynamics objective can be satisfied in useless ways: constant
latents (collapse) or latents that smuggle o_{t+1} through to the forward
model (copy shortcut). These probes quantify both on held data with true
actions available:

* ``latent_variance``: mean per-dimension variance of inferred latents.
* ``probe_r2_action``: R^2 of a ridge regression from latents to true
  actions; high means latents encode actions.
* ``probe_r2_copy``: R^2 of a ridge regression from latents to the next
  observation; above 0.95 is flagged as a copy shortcut.
* ``shuffled_z_recon_gap``: reconstruction error with latents permuted
  across the batch minus the true reconstruction error; positive means the
  forward model actually uses the latent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.linear_model import Ridge
from sklearn.metrics import r2_score

from .data import Dataset, gather_windows, window_index
from .lam import LamModel
from .rng import make_rng

MIN_TRANSITIONS = 100
COPY_R2_THRESHOLD = 0.95


@dataclass(frozen=True)
class DegeneracyReport:
    latent_variance: float
    probe_r2_action: float
    probe_r2_copy: float
    shuffled_z_recon_gap: float
    n_transitions: int

    @property
    def copy_shortcut_warning(self) -> bool:
        return self.probe_r2_copy > COPY_R2_THRESHOLD

    @property
    def warnings(self) -> tuple:
        out = []
        if self.copy_shortcut_warning:
            out.append(f"probe_r2_copy={self.probe_r2_copy:.3f} exceeds "
                       f"{COPY_R2_THRESHOLD}: latents look like a copy of o_t+1")
        if self.latent_variance < 1e-4:
            out.append(f"latent_variance={self.latent_variance:.2e}: latents collapsed")
        return tuple(out)


def _ridge_r2(x: np.ndarray, y: np.ndarray) -> float:
    probe = Ridge(alpha=1e-3).fit(x, y)
    return float(r2_score(y, probe.predict(x), multioutput="uniform_average"))


def degeneracy_report(model: LamModel, dataset: Dataset, seed: int = 0) -> DegeneracyReport:
    """Run all probes; ``dataset`` must carry true actions on every trajectory."""
    if any(tr.actions is None for tr in dataset.trajectories):
        raise ValueError("degeneracy probes need a dataset with true actions")
    n = dataset.n_transitions
    if n < MIN_TRANSITIONS:
        raise ValueError(f"degeneracy probes need >= {MIN_TRANSITIONS} transitions, got {n}")

    pairs = window_index(dataset, model.arch.context, include_padded=True)
    batch = gather_windows(dataset, pairs, model.arch.context)
    z = model.infer_latent(batch.windows)

    latent_variance = float(z.var(axis=0).mean())
    r2_action = _ridge_r2(z, batch.actions)
    r2_copy = _ridge_r2(z, batch.next_obs)

    perm = make_rng(seed, "diagnostics-shuffle").permutation(len(z))
    context = np.ascontiguousarray(batch.context_obs)
    pred_true = model.predict_next(context, z)
    pred_shuf = model.predict_next(context, z[perm])
    err_true = float(((pred_true - batch.next_obs) ** 2).mean())
    err_shuf = float(((pred_shuf - batch.next_obs) ** 2).mean())

    return DegeneracyReport(
        latent_variance=latent_variance,
        probe_r2_action=r2_action,
        probe_r2_copy=r2_copy,
        shuffled_z_recon_gap=err_shuf - err_true,
        n_transitions=n,
    )
