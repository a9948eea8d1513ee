import json

import pytest

from clamlab.ablate import STUDIES, level_means, run_study, summarize
from clamlab.config import config_from_dict
from clamlab.reports import STUDY_HEADER, STUDY_SUMMARY_HEADER

TINY = {
    "env": "point-reach", "n_unlabeled": 6, "n_labeled": 4,
    "eval_episodes": 4, "seed": 0,
    "lam": {"hidden_dim": 32, "dec_hidden_dim": 32, "steps": 25,
            "decoder_steps": 25},
    "policy": {"hidden_dim": 32, "steps": 25},
}


def _cfg(**over):
    data = json.loads(json.dumps(TINY))
    data.update(over)
    return config_from_dict(data)


class TestRunStudy:
    def test_row_and_summary_shapes(self):
        rows, summary = run_study("beta", _cfg(), n_seeds=2,
                                  levels=(0.0, 1.0), eval_episodes=3)
        assert len(rows) == 4
        assert len(summary) == 2
        for r in rows:
            assert set(r) == set(STUDY_HEADER)
            assert r["study"] == "beta"
            assert r["level"] in (0.0, 1.0)
            assert 0.0 <= r["success_rate"] <= 1.0
        for s in summary:
            assert set(s) == set(STUDY_SUMMARY_HEADER)
            assert s["n_seeds"] == 2

    def test_levels_preserve_given_order(self):
        rows, summary = run_study("latent-dim", _cfg(), n_seeds=1,
                                  levels=(4, 1), eval_episodes=2)
        assert [r["level"] for r in rows] == [4, 1]
        assert [s["level"] for s in summary] == [4, 1]

    def test_deterministic_across_calls(self):
        a, _ = run_study("beta", _cfg(), n_seeds=1, levels=(1.0,),
                         eval_episodes=3)
        b, _ = run_study("beta", _cfg(), n_seeds=1, levels=(1.0,),
                         eval_episodes=3)
        assert json.dumps(a) == json.dumps(b)

    def test_seeds_actually_vary(self):
        rows, _ = run_study("beta", _cfg(), n_seeds=2, levels=(1.0,),
                            eval_episodes=4)
        assert rows[0]["seed"] != rows[1]["seed"]

    def test_writes_csvs(self, tmp_path):
        run_study("unlabeled-scale", _cfg(), n_seeds=1, levels=(4, 6),
                  eval_episodes=2, out_dir=tmp_path)
        rows_file = tmp_path / "unlabeled-scale.csv"
        summary_file = tmp_path / "unlabeled-scale_summary.csv"
        assert rows_file.exists() and summary_file.exists()
        lines = rows_file.read_text().splitlines()
        assert lines[0] == ",".join(STUDY_HEADER)
        assert len(lines) == 3
        slines = summary_file.read_text().splitlines()
        assert slines[0] == ",".join(STUDY_SUMMARY_HEADER)
        assert len(slines) == 3

    def test_unknown_study(self):
        with pytest.raises(ValueError, match="unknown study"):
            run_study("dropout", _cfg())

    def test_unknown_categorical_level(self):
        with pytest.raises(ValueError, match="unknown level"):
            run_study("joint-vs-discrete", _cfg(), levels=("continuous",))

    def test_bad_seed_count(self):
        with pytest.raises(ValueError, match="n_seeds"):
            run_study("beta", _cfg(), n_seeds=0)

    def test_labeled_expertise_levels_run(self):
        rows, _ = run_study("labeled-expertise", _cfg(), n_seeds=1,
                            levels=("random", "expert"), eval_episodes=2)
        assert [r["level"] for r in rows] == ["random", "expert"]


class TestStudyRegistry:
    def test_registered_names(self):
        assert set(STUDIES) == {
            "joint-vs-discrete", "beta", "latent-dim",
            "unlabeled-scale", "labeled-scale", "labeled-expertise",
        }

    def test_apply_changes_one_factor(self):
        base = _cfg()
        cfg = STUDIES["beta"].apply(base, 0.01)
        assert cfg.lam.beta == 0.01
        assert cfg.lam.latent_mode == base.lam.latent_mode
        assert cfg.n_unlabeled == base.n_unlabeled

    def test_mode_levels_set_both_flags(self):
        cfg = STUDIES["joint-vs-discrete"].apply(_cfg(), "discrete-no-joint")
        assert cfg.lam.latent_mode == "vq"
        assert cfg.lam.joint_training is False


class TestSummarize:
    def test_mean_and_sample_sd(self):
        rows = [
            {"study": "beta", "level": 0.0, "seed": 0, "success_rate": 0.2,
             "mean_steps": 1.0},
            {"study": "beta", "level": 0.0, "seed": 1, "success_rate": 0.4,
             "mean_steps": 1.0},
        ]
        (s,) = summarize(rows)
        assert s["mean_success"] == pytest.approx(0.3)
        assert s["sd_success"] == pytest.approx(0.1414213562373095)
        assert s["n_seeds"] == 2

    def test_single_seed_sd_is_zero(self):
        (s,) = summarize([{"study": "x", "level": 1, "seed": 0,
                           "success_rate": 0.5, "mean_steps": 2.0}])
        assert s["sd_success"] == 0.0

    def test_levels_in_first_seen_order(self):
        rows = [{"study": "x", "level": lv, "seed": 0, "success_rate": 0.1,
                 "mean_steps": 1.0} for lv in (8, 2, 4)]
        assert [s["level"] for s in summarize(rows)] == [8, 2, 4]

    def test_level_means(self):
        summary = [{"study": "x", "level": 1, "mean_success": 0.25,
                    "sd_success": 0.0, "n_seeds": 1},
                   {"study": "x", "level": 2, "mean_success": 0.75,
                    "sd_success": 0.0, "n_seeds": 1}]
        assert level_means(summary) == {1: 0.25, 2: 0.75}
