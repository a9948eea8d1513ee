"""Factor sweeps over the experiment configuration.

Each study varies exactly one factor, holding everything else (including the
generated datasets) fixed within a seed. Scale studies reuse one max-size
dataset per seed and take prefixes, so level N sees exactly the trajectories
level M < N saw plus new ones.

Output is tidy: one row per (level, seed) plus a per-level summary with mean
and sample standard deviation.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import reports
from .config import ExperimentConfig
from .data import generate_dataset
from .experiment import run_pipeline
from .policies import evaluate
from .rng import derive_seed


def _set_lam(config: ExperimentConfig, **kwargs) -> ExperimentConfig:
    return replace(config, lam=replace(config.lam, **kwargs))


_MODE_FLAGS = {
    "continuous-joint": ("continuous", True),
    "continuous-no-joint": ("continuous", False),
    "discrete-joint": ("vq", True),
    "discrete-no-joint": ("vq", False),
}


@dataclass(frozen=True)
class StudySpec:
    levels: tuple
    apply: Callable[[ExperimentConfig, object], ExperimentConfig]


STUDIES = {
    "joint-vs-discrete": StudySpec(
        tuple(_MODE_FLAGS),
        lambda c, v: _set_lam(c, latent_mode=_MODE_FLAGS[v][0],
                              joint_training=_MODE_FLAGS[v][1])),
    "beta": StudySpec(
        (0.0, 0.001, 0.01, 1.0, 5.0),
        lambda c, v: _set_lam(c, beta=float(v))),
    "latent-dim": StudySpec(
        (1, 2, 4, 8),
        lambda c, v: _set_lam(c, latent_dim=int(v))),
    "unlabeled-scale": StudySpec(
        (25, 50, 100, 200),
        lambda c, v: replace(c, n_unlabeled=int(v))),
    "labeled-scale": StudySpec(
        (10, 25, 50, 100),
        lambda c, v: replace(c, n_labeled=int(v))),
    "labeled-expertise": StudySpec(
        ("random", "play", "noisy-expert", "expert"),
        lambda c, v: replace(c, labeled_policy=str(v))),
}


def run_study(study: str, base_config: ExperimentConfig, n_seeds: int = 3,
              out_dir=None, levels: Optional[Sequence] = None,
              eval_episodes: Optional[int] = None) -> tuple:
    """Run one study; returns (rows, summary) and optionally writes both CSVs."""
    if study not in STUDIES:
        raise ValueError(f"unknown study {study!r}; choose from "
                         f"{sorted(STUDIES)}")
    if n_seeds < 1:
        raise ValueError("n_seeds must be >= 1")
    spec_ = STUDIES[study]
    levels = tuple(spec_.levels if levels is None else levels)
    for lv in levels:
        if study in ("joint-vs-discrete", "labeled-expertise") and lv not in spec_.levels:
            raise ValueError(f"unknown level {lv!r} for study {study!r}")

    env = base_config.env_spec()
    unl_max = max(levels) if study == "unlabeled-scale" else base_config.n_unlabeled
    lab_max = max(levels) if study == "labeled-scale" else base_config.n_labeled

    rows = []
    for k in range(n_seeds):
        seed_k = derive_seed(base_config.seed, "study", study, k)
        unl_full = generate_dataset(env, "expert", unl_max,
                                    derive_seed(seed_k, "data-unlabeled"))
        lab_cache = {}
        for level in levels:
            cfg = spec_.apply(replace(base_config, seed=seed_k), level)
            unl = unl_full if cfg.n_unlabeled == unl_max else unl_full.subset(cfg.n_unlabeled)
            if cfg.labeled_policy not in lab_cache:
                lab_cache[cfg.labeled_policy] = generate_dataset(
                    env, cfg.labeled_policy, lab_max,
                    derive_seed(seed_k, "data-labeled"), role="labeled")
            lab = lab_cache[cfg.labeled_policy]
            if cfg.n_labeled != lab_max:
                lab = lab.subset(cfg.n_labeled)
            result = run_pipeline(cfg, unl, lab)
            report = evaluate(result.agent, env,
                              eval_episodes or cfg.eval_episodes,
                              seed=derive_seed(cfg.seed, "eval"))
            rows.append({"study": study, "level": level, "seed": k,
                         "success_rate": report.success_rate,
                         "mean_steps": report.mean_steps_to_success})

    summary = summarize(rows)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        reports.write_csv(out / f"{study}.csv", reports.STUDY_HEADER, rows)
        reports.write_csv(out / f"{study}_summary.csv",
                          reports.STUDY_SUMMARY_HEADER, summary)
    return rows, summary


def summarize(rows: list) -> list:
    """Per-level mean and sample sd of success_rate, in first-seen level order."""
    order = []
    grouped = {}
    for r in rows:
        key = (r["study"], r["level"])
        if key not in grouped:
            grouped[key] = []
            order.append(key)
        grouped[key].append(r["success_rate"])
    out = []
    for study, level in order:
        vals = np.asarray(grouped[(study, level)], dtype=np.float64)
        sd = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
        out.append({"study": study, "level": level,
                    "mean_success": float(vals.mean()),
                    "sd_success": sd, "n_seeds": len(vals)})
    return out


def level_means(summary: list) -> dict:
    """level -> mean_success, convenient for assertions over one study."""
    return {r["level"]: r["mean_success"] for r in summary}
