"""Training loop: schedule logging, determinism, checkpoints, prediction."""

import numpy as np
import pytest
import torch

from progiqa.errors import ConfigError, DivergenceError
from progiqa.models.assembly import MULTISCALE_ONLY
from progiqa.presets import toy_model_config, toy_train_config
from progiqa.training import (
    LOG_COLUMNS,
    TrainConfig,
    load_checkpoint,
    predict,
    read_log,
    train,
    views_to_tensor,
    write_log,
)


@pytest.fixture(scope="module")
def small_run(blur_samples):
    mcfg = toy_model_config()
    tcfg = toy_train_config(max_epochs=4, seed=13)
    result = train(blur_samples, mcfg, tcfg)
    return blur_samples, mcfg, tcfg, result


class TestScheduleInLog:
    def test_first_epoch_is_pure_classification(self, small_run):
        _, _, _, result = small_run
        assert result.log[0].lambda1 == 0.0
        assert result.log[0].lambda2 == 1.0

    def test_lambda_ramp_strictly_increasing(self, small_run):
        _, _, _, result = small_run
        l1 = [e.lambda1 for e in result.log]
        assert all(a < b for a, b in zip(l1, l1[1:]))

    def test_weights_sum_to_one_each_row(self, small_run):
        _, _, _, result = small_run
        for e in result.log:
            assert e.lambda1 + e.lambda2 == 1.0

    def test_ramp_matches_formula(self, small_run):
        _, _, tcfg, result = small_run
        for e in result.log:
            assert e.lambda1 == (e.epoch / (tcfg.max_epochs + 1)) * tcfg.tradeoff

    def test_log_round_trip(self, small_run, tmp_path):
        _, _, _, result = small_run
        path = write_log(result.log, tmp_path / "log.csv")
        header = path.read_text().splitlines()[0]
        assert header == ",".join(LOG_COLUMNS)
        again = read_log(path)
        assert again == result.log


class TestDeterminism:
    def test_identical_runs_identical_logs_and_states(self, blur_samples):
        mcfg = toy_model_config()
        tcfg = toy_train_config(max_epochs=3, seed=21)
        a = train(blur_samples, mcfg, tcfg)
        b = train(blur_samples, mcfg, tcfg)
        assert a.log == b.log
        assert a.checkpoint.fingerprint == b.checkpoint.fingerprint
        for key, tensor in a.checkpoint.model_state.items():
            assert torch.equal(tensor, b.checkpoint.model_state[key]), key

    def test_different_seed_changes_the_run(self, blur_samples):
        mcfg = toy_model_config()
        a = train(blur_samples, mcfg, toy_train_config(max_epochs=2, seed=1))
        b = train(blur_samples, mcfg, toy_train_config(max_epochs=2, seed=2))
        assert a.log != b.log


class TestCheckpoint:
    def test_round_trip_predictions_bit_identical(self, small_run, tmp_path):
        samples, _, tcfg, result = small_run
        before = predict(result.checkpoint.build(), samples, tcfg)
        path = result.checkpoint.save(tmp_path / "ck.pt")
        loaded = load_checkpoint(path)
        after = predict(loaded.build(), samples, loaded.train_cfg)
        assert np.array_equal(before, after)

    def test_round_trip_preserves_configs(self, small_run, tmp_path):
        _, mcfg, tcfg, result = small_run
        path = result.checkpoint.save(tmp_path / "ck.pt")
        loaded = load_checkpoint(path)
        assert loaded.model_cfg == mcfg
        assert loaded.train_cfg == tcfg
        assert loaded.fingerprint == result.checkpoint.fingerprint
        assert loaded.schedule == result.checkpoint.schedule

    def test_missing_checkpoint(self, tmp_path):
        with pytest.raises(ConfigError):
            load_checkpoint(tmp_path / "none.pt")


class TestOptimizerContract:
    def _one_step(self, samples, weight_decay):
        mcfg = toy_model_config(dropout=0.0)
        tcfg = toy_train_config(
            max_epochs=1,
            batch_size=len(samples) * 5,
            weight_decay=weight_decay,
            fixed_weights=(0.0, 1.0),  # no regression gradient
            seed=3,
        )
        torch.manual_seed(tcfg.seed)
        from progiqa.models.assembly import build_model

        reference = build_model(mcfg, "progressive")
        ref_state = {
            k: v.clone() for k, v in reference.state_dict().items()
            if k.startswith("score_head")
        }
        result = train(samples, mcfg, tcfg)
        new_state = {
            k: v for k, v in result.checkpoint.model_state.items()
            if k.startswith("score_head")
        }
        return ref_state, new_state

    def test_zero_weight_ungradiented_head_frozen_without_decay(self, blur_samples):
        ref, new = self._one_step(blur_samples, weight_decay=0.0)
        for key in ref:
            assert torch.equal(ref[key], new[key]), key

    def test_weight_decay_still_moves_ungradiented_weights(self, blur_samples):
        ref, new = self._one_step(blur_samples, weight_decay=1e-2)
        moved = any(
            not torch.equal(ref[k], new[k])
            for k in ref
            if k.endswith(".weight")
        )
        assert moved
        # Biases carry no weight decay, so they stay put either way.
        for key in ref:
            if key.endswith(".bias"):
                assert torch.equal(ref[key], new[key]), key


class TestParamGroups:
    def test_backbone_lr_scale_and_bias_decay_exemption(self):
        from progiqa.models.assembly import build_model
        from progiqa.training import _param_groups

        model = build_model(toy_model_config(), "progressive")
        cfg = toy_train_config(
            learning_rate=1e-3, weight_decay=1e-4, backbone_lr_scale=0.1
        )
        groups = _param_groups(model, cfg)
        backbone_ids = {id(p) for p in model.extractor.backbone.parameters()}
        seen = set()
        for group in groups:
            for param in group["params"]:
                seen.add(id(param))
                expected_lr = 1e-4 if id(param) in backbone_ids else 1e-3
                assert group["lr"] == pytest.approx(expected_lr)
        bias_ids = {
            id(p) for n, p in model.named_parameters() if n.endswith(".bias")
        }
        for group in groups:
            for param in group["params"]:
                expected_wd = 0.0 if id(param) in bias_ids else 1e-4
                assert group["weight_decay"] == expected_wd
        assert seen == {id(p) for p in model.parameters()}


class TestGuards:
    def test_divergence_raises(self, blur_samples):
        tcfg = toy_train_config(max_epochs=8, learning_rate=1e18, seed=0)
        with pytest.raises(DivergenceError):
            train(blur_samples, toy_model_config(), tcfg)

    def test_empty_training_set(self):
        with pytest.raises(ConfigError):
            train([], toy_model_config(), toy_train_config())

    def test_foreign_dataset_samples_rejected(self, blur_samples):
        tcfg = toy_train_config(max_epochs=1, dataset="other-name")
        with pytest.raises(ConfigError):
            train(blur_samples, toy_model_config(), tcfg)

    def test_invalid_config_values(self):
        with pytest.raises(ConfigError):
            TrainConfig(learning_rate=0.0)
        with pytest.raises(ConfigError):
            TrainConfig(batch_size=0)
        with pytest.raises(ConfigError):
            TrainConfig(optimizer="sgd")
        with pytest.raises(ConfigError):
            TrainConfig(test_time_augment="mosaic")


class TestPredict:
    def _identity_view_config(self, **overrides):
        # crop == image size and no flips: every view is the image itself.
        params = dict(crop_size=64, num_views=1, allow_hflip=False)
        params.update(overrides)
        return toy_train_config(**params)

    def test_single_view_equals_direct_forward(self, small_run):
        samples, _, _, result = small_run
        model = result.checkpoint.build()
        tcfg = self._identity_view_config()
        scores = predict(model, samples[:3], tcfg)
        with torch.no_grad():
            direct = model.predict_scores(views_to_tensor(samples[:3])).numpy()
        np.testing.assert_allclose(scores, direct.astype(np.float64), atol=0)

    def test_duplicated_views_same_average(self, small_run):
        samples, _, _, result = small_run
        model = result.checkpoint.build()
        one = predict(model, samples[:3], self._identity_view_config(num_views=1))
        many = predict(model, samples[:3], self._identity_view_config(num_views=4))
        np.testing.assert_allclose(one, many, atol=1e-12)

    def test_batch_of_one_equals_batched(self, small_run):
        samples, _, tcfg, result = small_run
        model = result.checkpoint.build()
        batched = predict(model, samples[:4], tcfg)
        singles = np.array([predict(model, [s], tcfg)[0] for s in samples[:4]])
        np.testing.assert_allclose(batched, singles, atol=1e-12)

    def test_center_crop_mode_deterministic(self, small_run):
        samples, _, _, result = small_run
        model = result.checkpoint.build()
        tcfg = toy_train_config(test_time_augment="center_crop")
        a = predict(model, samples[:3], tcfg)
        b = predict(model, samples[:3], tcfg)
        np.testing.assert_array_equal(a, b)


class TestValidationTracking:
    def test_best_checkpoint_and_history(self, blur_samples):
        mcfg = toy_model_config()
        tcfg = toy_train_config(max_epochs=3, seed=5)
        result = train(
            blur_samples[:8], mcfg, tcfg, val_samples=blur_samples[8:]
        )
        assert result.best_checkpoint is not None
        assert len(result.val_history) == 3
        best_epochs = [e for e, s, _ in result.val_history if s == result.best_val_srcc]
        assert result.best_checkpoint.epoch in best_epochs


class TestVariants:
    def test_single_head_variant_trains(self, blur_samples):
        tcfg = toy_train_config(max_epochs=2, seed=4)
        result = train(
            blur_samples, toy_model_config(), tcfg, variant=MULTISCALE_ONLY
        )
        for e in result.log:
            assert e.lambda1 == 1.0
            assert e.lambda2 == 0.0
            assert e.loss_c == 0.0
