"""End-to-end experiment runner.

``run_experiment`` generates datasets, trains the configured method, relabels
and trains the policy where applicable, evaluates closed-loop, and writes
every artifact into one directory:

    config.json             canonical config (its sha256 prefix is the run id)
    datasets/*.clamdata     unlabeled / labeled (/ relabeled) data
    lam.ckpt, policy.ckpt   trained weights
    lam_metrics.csv         step,l_recon,l_ad,l_vq,l_total
    policy_metrics.csv      step,loss
    eval_episodes.csv       per-episode outcomes
    report.csv              one summary row (shared schema across methods)
    run_info.json           wall clock and config hash; the only file allowed
                            to differ between identical reruns

Every random draw is a named stream off the config seed, so rerunning one
config reproduces every CSV and binary artifact byte for byte.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from . import reports
from .config import ExperimentConfig, save_config
from .data import Dataset, generate_dataset, save_dataset
from .lam import ClamEstimator
from .policies import BehaviorCloning, EvalReport, LatentPolicy, VptBaseline, evaluate
from .rng import derive_seed


def build_datasets(config: ExperimentConfig) -> tuple:
    spec = config.env_spec()
    unlabeled = generate_dataset(spec, "expert", config.n_unlabeled,
                                 derive_seed(config.seed, "data-unlabeled"))
    labeled = generate_dataset(spec, config.labeled_policy, config.n_labeled,
                               derive_seed(config.seed, "data-labeled"), role="labeled")
    return unlabeled, labeled


def _clam_estimator(config: ExperimentConfig) -> ClamEstimator:
    s = config.lam
    kwargs = dict(
        latent_dim=s.latent_dim, context=s.context, trunk=s.trunk,
        hidden_dim=s.hidden_dim, n_hidden=s.n_hidden,
        dec_hidden_dim=s.dec_hidden_dim, dec_n_hidden=s.dec_n_hidden,
        model_dim=s.model_dim, n_heads=s.n_heads, n_layers=s.n_layers,
        ff_dim=s.ff_dim, dropout=s.dropout, latent_mode=s.latent_mode,
        codebook_size=s.codebook_size, commitment_weight=s.commitment_weight,
        beta=s.beta, joint_training=s.joint_training,
        labeled_updates_train_idm=s.labeled_updates_train_idm,
        steps=s.steps, decoder_steps=s.decoder_steps, batch_size=s.batch_size,
        lr=s.lr, include_padded_windows=s.include_padded_windows,
        full_scale=s.full_scale, seed=config.seed)
    if config.method == "lapo":
        kwargs["latent_mode"] = "vq"
        kwargs["joint_training"] = False
    return ClamEstimator(**kwargs)


@dataclass
class PipelineResult:
    agent: object
    lam: Optional[ClamEstimator]
    policy: object
    relabeled: Optional[Dataset]


def run_pipeline(config: ExperimentConfig, unlabeled: Dataset,
                 labeled: Dataset) -> PipelineResult:
    """Train the configured method on already-built datasets."""
    p = config.policy
    if config.method in ("clam", "lapo"):
        est = _clam_estimator(config).fit(unlabeled, labeled)
        relabeled = est.transform(unlabeled)
        policy = LatentPolicy(lam=est.model_, hidden_dim=p.hidden_dim,
                              n_hidden=p.n_hidden, steps=p.steps,
                              batch_size=p.batch_size, lr=p.lr,
                              init_from=p.init_from, seed=config.seed)
        policy.fit(relabeled)
        return PipelineResult(agent=policy, lam=est, policy=policy, relabeled=relabeled)
    if config.method == "bc-al":
        policy = BehaviorCloning(hidden_dim=p.hidden_dim, n_hidden=p.n_hidden,
                                 steps=p.steps, batch_size=p.batch_size, lr=p.lr,
                                 seed=config.seed)
        policy.fit(labeled)
        return PipelineResult(agent=policy, lam=None, policy=policy, relabeled=None)
    if config.method == "vpt":
        policy = VptBaseline(context=config.lam.context, hidden_dim=p.hidden_dim,
                             n_hidden=p.n_hidden, idm_steps=config.lam.steps,
                             steps=p.steps, batch_size=p.batch_size, lr=p.lr,
                             seed=config.seed)
        policy.fit(labeled, unlabeled)
        return PipelineResult(agent=policy, lam=None, policy=policy, relabeled=None)
    raise ValueError(f"unknown method {config.method!r}")


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    report: EvalReport
    out_dir: Path

    @property
    def success_rate(self) -> float:
        return self.report.success_rate


def run_experiment(config: ExperimentConfig, out_dir) -> ExperimentResult:
    out = Path(out_dir)
    (out / "datasets").mkdir(parents=True, exist_ok=True)
    started = time.time()

    save_config(out / "config.json", config)
    unlabeled, labeled = build_datasets(config)
    save_dataset(out / "datasets" / "unlabeled.clamdata", unlabeled)
    save_dataset(out / "datasets" / "labeled.clamdata", labeled)

    result = run_pipeline(config, unlabeled, labeled)

    if result.lam is not None:
        result.lam.save(out / "lam.ckpt")
        reports.write_csv(out / "lam_metrics.csv", reports.LAM_METRICS_HEADER,
                          result.lam.history_)
        save_dataset(out / "datasets" / "relabeled.clamdata", result.relabeled)
    if isinstance(result.policy, VptBaseline):
        reports.write_csv(out / "idm_metrics.csv", reports.POLICY_METRICS_HEADER,
                          result.policy.idm_history_)
    result.policy.save(out / "policy.ckpt")
    reports.write_csv(out / "policy_metrics.csv", reports.POLICY_METRICS_HEADER,
                      result.policy.history_)

    eval_report = evaluate(result.agent, config.env_spec(), config.eval_episodes,
                           seed=derive_seed(config.seed, "eval"))
    reports.write_csv(out / "eval_episodes.csv", reports.EVAL_EPISODES_HEADER,
                      eval_report.episodes)
    reports.write_csv(out / "report.csv", reports.REPORT_HEADER, [{
        "method": config.method, "seed": config.seed,
        "episodes": eval_report.n_episodes,
        "success_rate": eval_report.success_rate,
        "mean_steps": eval_report.mean_steps_to_success,
    }])
    (out / "run_info.json").write_text(json.dumps({
        "config_hash": config.config_hash(),
        "wall_clock_s": round(time.time() - started, 3),
    }, indent=2) + "\n")
    return ExperimentResult(config=config, report=eval_report, out_dir=out)
