import json

import pytest

from clamlab.cli import _parse_level, main
from clamlab.data import load_dataset

TINY = {
    "env": "point-reach", "n_unlabeled": 6, "n_labeled": 4,
    "eval_episodes": 4, "seed": 0,
    "lam": {"hidden_dim": 32, "dec_hidden_dim": 32, "steps": 25,
            "decoder_steps": 25},
    "policy": {"hidden_dim": 32, "steps": 25},
}


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(TINY))
    return path


def _gen(tmp_path, name, policy, n, role=None):
    out = tmp_path / name
    argv = ["gen-data", "--env", "point-reach", "--policy", policy,
            "--n", str(n), "--out", str(out)]
    if role:
        argv += ["--role", role]
    assert main(argv) == 0
    return out


class TestGenData:
    def test_writes_dataset(self, tmp_path, capsys):
        out = _gen(tmp_path, "expert.clamdata", "expert", 3)
        data = load_dataset(out)
        assert len(data.trajectories) == 3
        assert "wrote 3 trajectories" in capsys.readouterr().out

    def test_role_override(self, tmp_path):
        out = _gen(tmp_path, "lab.clamdata", "random", 2, role="labeled")
        assert load_dataset(out).role == "labeled"

    def test_rejects_zero_trajectories(self, tmp_path):
        with pytest.raises(SystemExit) as err:
            main(["gen-data", "--env", "point-reach", "--policy", "expert",
                  "--n", "0", "--out", str(tmp_path / "x")])
        assert err.value.code == 2

    def test_rejects_unknown_env(self, tmp_path):
        with pytest.raises(SystemExit) as err:
            main(["gen-data", "--env", "cartpole", "--policy", "expert",
                  "--n", "1", "--out", str(tmp_path / "x")])
        assert err.value.code == 2


class TestPipelineCommands:
    def test_full_workflow(self, tmp_path, config_path, capsys):
        unl = _gen(tmp_path, "unl.clamdata", "expert", 4)
        lab = _gen(tmp_path, "lab.clamdata", "random", 3, role="labeled")

        lam_dir = tmp_path / "lam"
        assert main(["pretrain-lam", "--config", str(config_path),
                     "--unlabeled", str(unl), "--labeled", str(lab),
                     "--out", str(lam_dir)]) == 0
        assert (lam_dir / "lam.ckpt").exists()
        assert (lam_dir / "lam_metrics.csv").exists()
        assert load_dataset(lam_dir / "relabeled.clamdata").role == "relabeled-expert"

        pol_dir = tmp_path / "policy"
        assert main(["train-policy", "--lam", str(lam_dir / "lam.ckpt"),
                     "--data", str(lam_dir / "relabeled.clamdata"),
                     "--steps", "25", "--out", str(pol_dir)]) == 0
        assert (pol_dir / "policy.ckpt").exists()

        assert main(["evaluate", "--policy", str(pol_dir / "policy.ckpt"),
                     "--lam", str(lam_dir / "lam.ckpt"), "--env", "point-reach",
                     "--episodes", "3", "--out", str(tmp_path / "eval.csv")]) == 0
        out = capsys.readouterr().out
        assert "episodes=3" in out
        assert (tmp_path / "eval.csv").read_text().startswith("episode,seed,")

    def test_train_policy_relabels_raw_data(self, tmp_path, config_path):
        unl = _gen(tmp_path, "unl.clamdata", "expert", 4)
        lab = _gen(tmp_path, "lab.clamdata", "random", 3, role="labeled")
        lam_dir = tmp_path / "lam"
        main(["pretrain-lam", "--config", str(config_path),
              "--unlabeled", str(unl), "--labeled", str(lab),
              "--out", str(lam_dir)])
        pol_dir = tmp_path / "policy"
        assert main(["train-policy", "--lam", str(lam_dir / "lam.ckpt"),
                     "--data", str(unl), "--steps", "25",
                     "--out", str(pol_dir)]) == 0

    def test_baseline_bc(self, tmp_path):
        lab = _gen(tmp_path, "lab.clamdata", "random", 3, role="labeled")
        out = tmp_path / "bc"
        assert main(["train-baseline", "--method", "bc-al", "--labeled",
                     str(lab), "--steps", "25", "--out", str(out)]) == 0
        assert (out / "policy.ckpt").exists()
        assert not (out / "idm_metrics.csv").exists()

    def test_baseline_vpt(self, tmp_path):
        lab = _gen(tmp_path, "lab.clamdata", "random", 3, role="labeled")
        unl = _gen(tmp_path, "unl.clamdata", "expert", 4)
        out = tmp_path / "vpt"
        assert main(["train-baseline", "--method", "vpt", "--labeled", str(lab),
                     "--unlabeled", str(unl), "--steps", "25",
                     "--out", str(out)]) == 0
        assert (out / "idm_metrics.csv").exists()

    def test_vpt_without_unlabeled_fails(self, tmp_path, capsys):
        lab = _gen(tmp_path, "lab.clamdata", "random", 3, role="labeled")
        code = main(["train-baseline", "--method", "vpt", "--labeled",
                     str(lab), "--out", str(tmp_path / "vpt")])
        assert code == 1
        assert "error: vpt needs --unlabeled" in capsys.readouterr().err


class TestRunAndAblate:
    def test_run_command(self, tmp_path, config_path, capsys):
        out = tmp_path / "run"
        assert main(["run", "--config", str(config_path),
                     "--out", str(out)]) == 0
        assert (out / "report.csv").exists()
        assert "method=clam" in capsys.readouterr().out

    def test_ablate_with_levels(self, tmp_path, config_path, capsys):
        out = tmp_path / "study"
        assert main(["ablate", "--study", "beta", "--seeds", "1",
                     "--config", str(config_path), "--levels", "0.0,1.0",
                     "--episodes", "2", "--out", str(out)]) == 0
        assert (out / "beta.csv").exists()
        printed = capsys.readouterr().out
        assert "level=0.0" in printed and "level=1.0" in printed

    def test_ablate_rejects_unknown_study(self, tmp_path):
        with pytest.raises(SystemExit) as err:
            main(["ablate", "--study", "optimizer", "--out", str(tmp_path)])
        assert err.value.code == 2

    def test_ablate_rejects_bad_level(self, tmp_path, config_path, capsys):
        code = main(["ablate", "--study", "joint-vs-discrete", "--seeds", "1",
                     "--config", str(config_path), "--levels", "continuous",
                     "--out", str(tmp_path)])
        assert code == 1
        assert "unknown level" in capsys.readouterr().err


class TestErrorPaths:
    def test_missing_file_exits_one(self, tmp_path, capsys):
        code = main(["train-baseline", "--method", "bc-al", "--labeled",
                     str(tmp_path / "missing.clamdata"),
                     "--out", str(tmp_path / "o")])
        assert code == 1
        assert capsys.readouterr().err.startswith("error:")

    def test_invalid_config_exits_one(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text('{"env": "point-reach", "turbo": true}')
        code = main(["run", "--config", str(bad), "--out", str(tmp_path / "o")])
        assert code == 1
        assert "error:" in capsys.readouterr().err

    def test_negative_seed_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as err:
            main(["gen-data", "--env", "point-reach", "--policy", "expert",
                  "--n", "1", "--seed", "-3", "--out", str(tmp_path / "x")])
        assert err.value.code == 2

    def test_no_command_usage_error(self):
        with pytest.raises(SystemExit) as err:
            main([])
        assert err.value.code == 2


class TestParseLevel:
    def test_casts(self):
        assert _parse_level("4") == 4 and isinstance(_parse_level("4"), int)
        assert _parse_level("0.01") == 0.01
        assert _parse_level("continuous-joint") == "continuous-joint"
