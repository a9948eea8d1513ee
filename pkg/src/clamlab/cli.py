"""Command-line interface.

Subcommands cover the full workflow piecewise (gen-data, pretrain-lam,
train-policy, train-baseline, evaluate, ablate) and as a single deterministic
run (run). Exit codes: 0 on success, 1 on a reported runtime error, 2 on bad
usage (argparse).
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from . import reports
from .ablate import STUDIES, run_study
from .config import ConfigError, ExperimentConfig, load_config
from .data import ROLES, generate_dataset, load_dataset, save_dataset
from .envs import ENV_KINDS, EnvSpec
from .errors import FormatError, TrainingDivergedError
from .experiment import _clam_estimator, run_experiment
from .lam import LamModel, relabel
from .policies import (BehaviorCloning, LatentPolicy, VptBaseline, evaluate,
                       load_policy)

BEHAVIOR_KINDS = ("expert", "noisy-expert", "play", "random")


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer")
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _seed(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer")
    if value < 0:
        raise argparse.ArgumentTypeError(f"seed must be >= 0, got {value}")
    return value


def _parse_level(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def _cmd_gen_data(args) -> int:
    spec = EnvSpec(args.env)
    data = generate_dataset(spec, args.policy, args.n, args.seed, role=args.role)
    save_dataset(args.out, data)
    print(f"wrote {len(data.trajectories)} trajectories to {args.out}")
    return 0


def _cmd_pretrain_lam(args) -> int:
    config = load_config(args.config)
    if args.full_scale:
        config = replace(config, lam=replace(config.lam, full_scale=True))
    unlabeled = load_dataset(args.unlabeled)
    labeled = load_dataset(args.labeled)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    est = _clam_estimator(config).fit(unlabeled, labeled)
    est.save(out / "lam.ckpt")
    reports.write_csv(out / "lam_metrics.csv", reports.LAM_METRICS_HEADER,
                      est.history_)
    save_dataset(out / "relabeled.clamdata", est.transform(unlabeled))
    print(f"wrote lam.ckpt, lam_metrics.csv, relabeled.clamdata to {out}")
    return 0


def _cmd_train_policy(args) -> int:
    model = LamModel.load(args.lam)
    data = load_dataset(args.data)
    if data.trajectories[0].latent_actions is None:
        data = relabel(model, data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    policy = LatentPolicy(lam=model, steps=args.steps, init_from=args.init_from,
                          seed=args.seed)
    policy.fit(data)
    policy.save(out / "policy.ckpt")
    reports.write_csv(out / "policy_metrics.csv", reports.POLICY_METRICS_HEADER,
                      policy.history_)
    print(f"wrote policy.ckpt, policy_metrics.csv to {out}")
    return 0


def _cmd_train_baseline(args) -> int:
    labeled = load_dataset(args.labeled)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.method == "bc-al":
        policy = BehaviorCloning(steps=args.steps, seed=args.seed).fit(labeled)
    else:
        if args.unlabeled is None:
            raise ValueError("vpt needs --unlabeled data to pseudo-label")
        unlabeled = load_dataset(args.unlabeled)
        policy = VptBaseline(steps=args.steps, seed=args.seed).fit(labeled, unlabeled)
        reports.write_csv(out / "idm_metrics.csv", reports.POLICY_METRICS_HEADER,
                          policy.idm_history_)
    policy.save(out / "policy.ckpt")
    reports.write_csv(out / "policy_metrics.csv", reports.POLICY_METRICS_HEADER,
                      policy.history_)
    print(f"wrote policy.ckpt, policy_metrics.csv to {out}")
    return 0


def _cmd_evaluate(args) -> int:
    lam = LamModel.load(args.lam) if args.lam else None
    policy = load_policy(args.policy, lam=lam)
    spec = EnvSpec(args.env)
    report = evaluate(policy, spec, args.episodes, seed=args.seed)
    if args.out:
        reports.write_csv(args.out, reports.EVAL_EPISODES_HEADER, report.episodes)
    print(f"episodes={report.n_episodes} success_rate={report.success_rate:.3f} "
          f"mean_steps={report.mean_steps_to_success:.1f}")
    return 0


def _cmd_ablate(args) -> int:
    config = load_config(args.config) if args.config else ExperimentConfig(env=args.env)
    levels = [_parse_level(t) for t in args.levels.split(",")] if args.levels else None
    _, summary = run_study(args.study, config, n_seeds=args.seeds,
                           out_dir=args.out, levels=levels,
                           eval_episodes=args.episodes)
    for row in summary:
        print(f"{row['study']} level={row['level']}: "
              f"mean_success={row['mean_success']:.3f} "
              f"sd={row['sd_success']:.3f} n={row['n_seeds']}")
    return 0


def _cmd_run(args) -> int:
    config = load_config(args.config)
    result = run_experiment(config, args.out)
    print(f"method={config.method} success_rate={result.report.success_rate:.3f} "
          f"report={Path(args.out) / 'report.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clamlab",
        description="Latent action model lab: pretraining, relabeling, "
                    "policies, baselines, and ablations on synthetic "
                    "continuous-control tasks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="roll out a behavior policy to a dataset file")
    p.add_argument("--env", choices=ENV_KINDS, required=True)
    p.add_argument("--policy", choices=BEHAVIOR_KINDS, required=True)
    p.add_argument("--n", type=_positive_int, required=True,
                   help="number of trajectories")
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--role", choices=ROLES, default=None,
                   help="dataset role tag (default: by policy kind)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("pretrain-lam", help="train the latent action model")
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--unlabeled", required=True, help=".clamdata file")
    p.add_argument("--labeled", required=True, help=".clamdata file")
    p.add_argument("--full-scale", action="store_true",
                   help="use full-size networks instead of desk-scale defaults")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_pretrain_lam)

    p = sub.add_parser("train-policy", help="train a latent policy on relabeled data")
    p.add_argument("--lam", required=True, help="lam.ckpt from pretrain-lam")
    p.add_argument("--data", required=True,
                   help=".clamdata file; relabeled on the fly if it has no latents")
    p.add_argument("--steps", type=_positive_int, default=1500)
    p.add_argument("--init-from", choices=("fresh", "idm"), default="fresh")
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_train_policy)

    p = sub.add_parser("train-baseline", help="train a baseline policy")
    p.add_argument("--method", choices=("bc-al", "vpt"), required=True)
    p.add_argument("--labeled", required=True, help=".clamdata file with actions")
    p.add_argument("--unlabeled", default=None,
                   help=".clamdata file (vpt pseudo-labels it)")
    p.add_argument("--steps", type=_positive_int, default=1500)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_train_baseline)

    p = sub.add_parser("evaluate", help="closed-loop policy evaluation")
    p.add_argument("--policy", required=True, help="policy.ckpt")
    p.add_argument("--lam", default=None,
                   help="lam.ckpt (required for latent policies)")
    p.add_argument("--env", choices=ENV_KINDS, required=True)
    p.add_argument("--episodes", type=_positive_int, default=100)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--out", default=None, help="optional per-episode CSV")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("ablate", help="run a factor study")
    p.add_argument("--study", choices=sorted(STUDIES), required=True)
    p.add_argument("--seeds", type=_positive_int, default=3)
    p.add_argument("--config", default=None,
                   help="base config JSON (default: built-in defaults)")
    p.add_argument("--env", choices=ENV_KINDS, default="reacher-2link",
                   help="environment when no config file is given")
    p.add_argument("--levels", default=None,
                   help="comma-separated subset of the study's levels")
    p.add_argument("--episodes", type=_positive_int, default=None,
                   help="override eval episodes per cell")
    p.add_argument("--out", default="ablations", help="output directory")
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("run", help="full experiment from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_run)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FormatError, TrainingDivergedError, ValueError,
            OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
