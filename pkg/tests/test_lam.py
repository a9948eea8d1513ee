import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from clamlab import autodiff as ad
from clamlab.autodiff import Tape, Tensor
from clamlab.data import generate_dataset
from clamlab.envs import EnvSpec
from clamlab.errors import TrainingDivergedError
from clamlab.lam import (ClamEstimator, LamModel, nearest_code, relabel,
                         vq_quantize)

POINT = EnvSpec("point-reach")

TINY = dict(hidden_dim=32, n_hidden=2, dec_hidden_dim=32, dec_n_hidden=1,
            steps=20, batch_size=32, seed=0)


@pytest.fixture(scope="module")
def data():
    unl = generate_dataset(POINT, "expert", 4, seed=10)
    lab = generate_dataset(POINT, "random", 3, seed=11)
    return unl, lab


class TestQuantization:
    def test_nearest_code_picks_closest(self):
        book = np.array([[0.0, 0.0], [1.0, 1.0]], np.float32)
        vals, idx = nearest_code(book, np.array([[0.2, 0.1], [0.9, 1.2]], np.float32))
        assert idx.tolist() == [0, 1]
        np.testing.assert_array_equal(vals, book[[0, 1]])

    def test_nearest_code_tie_takes_lowest_index(self):
        book = np.array([[0.0, 0.0], [1.0, 1.0]], np.float32)
        _, idx = nearest_code(book, np.array([[0.5, 0.5]], np.float32))
        assert idx.tolist() == [0]

    def test_straight_through_value_and_gradient(self):
        book = Tensor(np.array([[0.0, 0.0], [1.0, 1.0]], np.float32),
                      requires_grad=True)
        z = Tensor(np.array([[0.9, 1.2]], np.float32), requires_grad=True)
        z.zero_grad()
        book.zero_grad()
        with Tape():
            z_q, idx, vq_loss = vq_quantize(book, z)
            ad.mean(z_q).backward()
        np.testing.assert_array_equal(z_q.data, [[1.0, 1.0]])
        assert idx.tolist() == [1]
        # gradient of mean(z_q) w.r.t. z is passed through untouched
        np.testing.assert_allclose(z.grad, [[0.5, 0.5]])
        assert np.all(book.grad == 0.0)

    def test_vq_loss_pulls_codes_and_latents(self):
        book = Tensor(np.array([[0.0, 0.0], [1.0, 1.0]], np.float32),
                      requires_grad=True)
        z = Tensor(np.array([[0.9, 1.2]], np.float32), requires_grad=True)
        z.zero_grad()
        book.zero_grad()
        with Tape():
            _, _, vq_loss = vq_quantize(book, z, commitment_weight=0.25)
            vq_loss.backward()
        assert np.all(book.grad[0] == 0.0)       # unselected code untouched
        assert np.abs(book.grad[1]).max() > 0.0  # selected code moves
        assert np.abs(z.grad).max() > 0.0        # commitment term moves z


class TestEstimator:
    def test_fit_shapes_and_history(self, data):
        unl, lab = data
        est = ClamEstimator(**TINY).fit(unl, lab)
        assert est.arch_.latent_dim == 4  # 2 x action_dim by default
        assert len(est.history_) == TINY["steps"]
        assert set(est.history_[0]) == {"step", "l_recon", "l_ad", "l_vq", "l_total"}
        assert all(np.isfinite(row["l_ad"]) for row in est.history_)

    def test_recon_loss_decreases(self, data):
        unl, lab = data
        est = ClamEstimator(**{**TINY, "steps": 300}).fit(unl, lab)
        first = np.mean([r["l_recon"] for r in est.history_[:20]])
        last = np.mean([r["l_recon"] for r in est.history_[-20:]])
        assert last < first

    def test_beta_zero_leaves_decoder_at_init(self, data):
        unl, lab = data
        est = ClamEstimator(**{**TINY, "beta": 0.0}).fit(unl, lab)
        fresh = LamModel(est.arch_, seed=TINY["seed"])
        for name, p in est.model_.decoder.named_parameters().items():
            np.testing.assert_array_equal(
                p.data, fresh.decoder.named_parameters()[name].data)
        # while the reconstruction path still trained
        trained = est.model_.idm.named_parameters()
        for name, p in fresh.idm.named_parameters().items():
            assert not np.array_equal(p.data, trained[name].data)

    def test_no_joint_phase_one_matches_beta_zero(self, data):
        # the unlabeled stream is independent of the labeled one, so the
        # reconstruction trajectory is bit-identical whether or not zero-weight
        # decoder updates are interleaved
        unl, lab = data
        a = ClamEstimator(**{**TINY, "beta": 0.0}).fit(unl, lab)
        b = ClamEstimator(**{**TINY, "joint_training": False,
                             "decoder_steps": 5}).fit(unl, lab)
        for name, p in a.model_.idm.named_parameters().items():
            np.testing.assert_array_equal(p.data,
                                          b.model_.idm.named_parameters()[name].data)
        for name, p in a.model_.fdm.named_parameters().items():
            np.testing.assert_array_equal(p.data,
                                          b.model_.fdm.named_parameters()[name].data)

    def test_no_joint_history_appends_decoder_phase(self, data):
        unl, lab = data
        est = ClamEstimator(**{**TINY, "joint_training": False,
                               "decoder_steps": 7}).fit(unl, lab)
        assert len(est.history_) == TINY["steps"] + 7
        tail = est.history_[-1]
        assert np.isnan(tail["l_recon"]) and np.isfinite(tail["l_ad"])

    def test_joint_needs_labeled_for_decoder(self, data):
        unl, _ = data
        est = ClamEstimator(**{**TINY, "action_dim": 2}).fit(unl)
        assert all(np.isnan(r["l_ad"]) for r in est.history_)
        with pytest.raises(ValueError):
            ClamEstimator(**TINY).fit(unl)  # no labeled, no action_dim

    def test_rejects_wrong_roles(self, data):
        unl, lab = data
        with pytest.raises(ValueError):
            ClamEstimator(**TINY).fit(lab, lab)
        est = ClamEstimator(**TINY).fit(unl, lab)
        with pytest.raises(ValueError):
            est.transform(lab)

    def test_transform_before_fit_raises(self, data):
        unl, _ = data
        with pytest.raises(NotFittedError):
            ClamEstimator(**TINY).transform(unl)

    def test_estimator_is_cloneable(self):
        est = ClamEstimator(**TINY)
        assert clone(est).get_params() == est.get_params()

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_raises(self, data):
        unl, lab = data
        with pytest.raises(TrainingDivergedError):
            ClamEstimator(**{**TINY, "steps": 200, "lr": 1e8}).fit(unl, lab)

    def test_transformer_trunk_runs(self, data):
        unl, lab = data
        est = ClamEstimator(**{**TINY, "steps": 5, "trunk": "transformer",
                               "model_dim": 16, "n_heads": 2, "n_layers": 1,
                               "ff_dim": 32}).fit(unl, lab)
        rel = est.transform(unl)
        assert rel.trajectories[0].latent_actions.shape == (POINT.horizon, 4)

    def test_vq_mode_snaps_latents_to_codebook(self, data):
        unl, lab = data
        est = ClamEstimator(**{**TINY, "latent_mode": "vq",
                               "codebook_size": 3}).fit(unl, lab)
        rel = est.transform(unl)
        z = rel.trajectories[0].latent_actions
        book = est.model_.codebook.data
        d = np.abs(z[:, None, :] - book[None]).sum(axis=2).min(axis=1)
        assert d.max() < 1e-6


class TestModelIO:
    def test_save_load_round_trip(self, data, tmp_path):
        unl, lab = data
        est = ClamEstimator(**TINY).fit(unl, lab)
        est.save(tmp_path / "lam.ckpt")
        back = LamModel.load(tmp_path / "lam.ckpt")
        windows = np.random.default_rng(0).standard_normal((5, 3, 6)).astype(np.float32)
        np.testing.assert_array_equal(est.model_.infer_latent(windows),
                                      back.infer_latent(windows))
        z = np.random.default_rng(1).standard_normal((5, 4)).astype(np.float32)
        np.testing.assert_array_equal(est.model_.decode_action(z),
                                      back.decode_action(z))

    def test_load_rejects_wrong_kind(self, tmp_path):
        from clamlab.checkpoint import save_checkpoint
        save_checkpoint(tmp_path / "x.ckpt", {"kind": "bc-policy"}, {})
        with pytest.raises(ValueError):
            LamModel.load(tmp_path / "x.ckpt")

    def test_decoder_output_is_bounded(self, data):
        unl, lab = data
        est = ClamEstimator(**TINY).fit(unl, lab)
        z = 50.0 * np.random.default_rng(2).standard_normal((10, 4)).astype(np.float32)
        assert (np.abs(est.model_.decode_action(z)) <= 1.0).all()


class TestRelabel:
    def test_relabel_marks_every_transition(self, data):
        unl, lab = data
        est = ClamEstimator(**TINY).fit(unl, lab)
        rel = est.transform(unl)
        assert rel.role == "relabeled-expert"
        assert len(rel) == len(unl)
        for tr in rel.trajectories:
            assert tr.latent_actions.shape == (tr.length - 1, 4)
            assert tr.actions is None

    def test_relabel_rejects_env_mismatch(self, data):
        unl, lab = data
        est = ClamEstimator(**TINY).fit(unl, lab)
        other = generate_dataset(EnvSpec("reacher-2link"), "expert", 1, seed=0)
        with pytest.raises(ValueError):
            relabel(est.model_, other)

    def test_relabel_is_deterministic(self, data):
        unl, lab = data
        est = ClamEstimator(**TINY).fit(unl, lab)
        a, b = est.transform(unl), est.transform(unl)
        for ta, tb in zip(a.trajectories, b.trajectories):
            np.testing.assert_array_equal(ta.latent_actions, tb.latent_actions)
