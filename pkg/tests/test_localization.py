import math

import numpy as np
import pytest

from etp.Engine import NonLocalBlock, cross_entropy, grad_check, regression_loss, softmax
from etp.Localization import (Detection, LnModel, LocalizationConfig, LossWeights, StagedProposal, build_ln_samples,
                              classification_loss, completeness_loss, multitask_loss, non_local, ohem_sample,
                              pooling_weights, pyramid_feature, rank_and_detect, ranking_score, stage_augment,
                              stage_units, train_ln)
from etp.Refinement import LabelledProposal, UnitConfig
from etp.Timeline import GroundTruthInstance, ProposalKind, TemporalInterval, iou, label_proposal
from etp.Utils.errors import InputError, TrainingError

UNITS = UnitConfig(unit_len=8, stride=8)


def span(start, end):
    return TemporalInterval(start, end)


def labelled(proposal, gts, features):
    return LabelledProposal(proposal, label_proposal(proposal, gts), features)


def randomize_out(block, rng):
    block.out.weight.value = rng.uniform(-0.5, 0.5, size=block.out.weight.shape)


class TestStageAugment:

    def test_examples(self):
        assert stage_augment(span(100, 200), 400) == StagedProposal(span(50, 100), span(100, 200), span(200, 250))
        assert stage_augment(span(0, 100), 400).starting is None
        assert stage_augment(span(300, 400), 400).ending is None

    def test_partial_clamp(self):
        staged = stage_augment(span(20, 120), 140)
        assert staged.starting == span(0, 20) and staged.ending == span(120, 140)


class TestNonLocal:

    def test_fresh_block_is_identity(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(6, 4))
        np.testing.assert_array_equal(non_local(x, NonLocalBlock("nl", 4, rng=rng)), x)

    def test_single_position_closed_form(self):
        block = NonLocalBlock("nl", 3, inner_dim=3)
        for layer in (block.theta, block.phi, block.g, block.out):
            layer.weight.value = np.eye(3)
        x = np.array([[0.5, -1.0, 2.0]])
        np.testing.assert_allclose(non_local(x, block), x + (x @ x.T) * x, atol=1e-12)

    @pytest.mark.parametrize("seed", range(10))
    def test_permutation_equivariance(self, seed):
        rng = np.random.default_rng(seed)
        block = NonLocalBlock("nl", 4, rng=rng)
        randomize_out(block, rng)
        x = rng.normal(size=(7, 4))
        perm = rng.permutation(7)
        np.testing.assert_allclose(non_local(x[perm], block), non_local(x, block)[perm], atol=1e-12)


class TestPyramid:

    def test_constant_features(self):
        v = np.array([0.2, -0.4, 1.0])
        features = np.tile(v, (200, 1))
        block = NonLocalBlock("nl", 3, rng=np.random.default_rng(1))
        out = pyramid_feature(features, stage_augment(span(64, 128), 200), block, UNITS)
        np.testing.assert_allclose(out, np.tile(v, 5), atol=1e-12)

    def test_empty_starting_stage(self):
        features = np.random.default_rng(2).uniform(1.0, 2.0, size=(200, 3))
        out = pyramid_feature(features, stage_augment(span(0, 40), 200), None, UNITS)
        np.testing.assert_array_equal(out[:3], 0.0)
        assert np.all(out[3:] > 0.0)

    def test_two_unit_course(self):
        a, b = np.array([1.0, 0.0]), np.array([0.0, 3.0])
        features = np.zeros((64, 2))
        features[16:24] = a
        features[24:32] = b
        out = pyramid_feature(features, StagedProposal(None, span(16, 32), None), None, UNITS)
        np.testing.assert_allclose(out.reshape(5, 2), [[0, 0], (a + b) / 2, a, b, [0, 0]])

    def test_pooling_rows(self):
        w = pooling_weights((2, 3, 1))
        assert w.shape == (5, 6)
        np.testing.assert_allclose(w.sum(axis=1), 1.0)
        np.testing.assert_allclose(w[2], [0, 0, 0.5, 0.5, 0, 0])
        np.testing.assert_allclose(w[3], [0, 0, 0, 0, 1.0, 0])
        single = pooling_weights((0, 1, 0))
        np.testing.assert_array_equal(single[2], single[3])
        np.testing.assert_array_equal(single[0], 0.0)

    def test_stage_units_counts(self):
        features = np.ones((200, 2))
        x, segments = stage_units(features, stage_augment(span(64, 128), 200), UNITS)
        assert segments == (4, 8, 4) and x.shape == (16, 2)


class TestLosses:

    @pytest.mark.parametrize("num_classes", [1, 3, 20])
    def test_uniform_logits(self, num_classes):
        loss = classification_loss(np.zeros((3, num_classes + 1)), [0, num_classes, 1 % (num_classes + 1)])
        assert loss == pytest.approx(math.log(num_classes + 1), abs=1e-9)

    def test_saturated_prediction(self):
        logits = np.zeros((1, 4))
        logits[0, 2] = 30.0
        assert classification_loss(logits, [2]) < 1e-9

    def test_batch_is_the_mean(self):
        rng = np.random.default_rng(3)
        logits = rng.normal(size=(2, 4))
        both = classification_loss(logits, [1, 3])
        one = classification_loss(logits[:1], [1])
        two = classification_loss(logits[1:], [3])
        assert both == pytest.approx((one + two) / 2.0, abs=1e-12)

    @pytest.mark.parametrize("pred, sign, expected", [(1.0, 1.0, 0.0), (0.0, 1.0, 1.0), (0.5, -1.0, 1.5)])
    def test_completeness_examples(self, pred, sign, expected):
        assert completeness_loss(np.array([pred]), np.array([sign])) == expected

    def test_multitask(self):
        assert multitask_loss(1.0, 2.0, 3.0, LossWeights()) == pytest.approx(1.5)
        assert multitask_loss(0.7, 2.0, 3.0, LossWeights(alpha=0.0, beta=0.0)) == 0.7
        assert multitask_loss(0.0, 0.0, 0.0, LossWeights()) == 0.0

    def test_negative_weights_rejected(self):
        with pytest.raises(ValueError):
            LossWeights(alpha=-0.1)


class TestOhem:

    def test_keeps_the_hardest(self):
        batch = ohem_sample([0], [10, 11, 12, 13], [0.9, 0.1, 0.2, 0.3], np.random.default_rng(0))
        np.testing.assert_array_equal(batch.positives, [0])
        np.testing.assert_array_equal(batch.incompletes, [10])

    def test_ties_keep_lower_indices(self):
        batch = ohem_sample([0, 1], np.arange(8) + 100, np.ones(8), np.random.default_rng(0))
        np.testing.assert_array_equal(batch.incompletes, [100, 101])

    def test_no_incompletes(self, etp_caplog):
        batch = ohem_sample([3, 4], [], [], np.random.default_rng(0))
        np.testing.assert_array_equal(batch.positives, [3, 4])
        assert len(batch.incompletes) == 0
        assert any(r.levelname == "WARNING" for r in etp_caplog.records)

    @pytest.mark.parametrize("n_pos, n_inc", [(3, 17), (3, 5), (1, 1), (2, 8)])
    def test_keeps_a_quarter_of_the_draw(self, n_pos, n_inc):
        rng = np.random.default_rng(n_pos * 100 + n_inc)
        losses = rng.uniform(size=n_inc)
        batch = ohem_sample(np.arange(n_pos), np.arange(n_inc), losses, rng, quiet=True)
        drawn = min(4 * n_pos, n_inc)
        assert len(batch.incompletes) == math.ceil(drawn / 4)
        if n_inc <= 4 * n_pos:
            rest = np.setdiff1d(np.arange(n_inc), batch.incompletes)
            if len(rest):
                assert losses[batch.incompletes].min() >= losses[rest].max()


class TestRanking:

    def test_background_wins(self):
        assert ranking_score(np.array([0.0, 0.0, 1.0]), 0.0) is None
        assert ranking_score(np.array([0.4, 0.2, 0.4]), 3.0) is None

    def test_score(self):
        assert ranking_score(np.array([0.8, 0.2]), 0.0) == (0, pytest.approx(0.8))
        k, score = ranking_score(np.array([0.1, 0.6, 0.3]), math.log(2.0))
        assert k == 1 and score == pytest.approx(1.2)

    def test_completeness_is_clipped(self):
        _, score = ranking_score(np.array([0.9, 0.1]), 1e4)
        assert np.isfinite(score)

    def test_scaling_never_reorders_classes(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            probs = softmax(rng.normal(size=(1, 5)))[0]
            s = float(rng.normal() * 3.0)
            ranked = ranking_score(probs, s)
            if ranked is not None:
                assert ranked[0] == int(np.argmax(probs[:-1] * np.exp(s)))

    def test_detection_requires_positive_score(self):
        with pytest.raises(InputError):
            Detection(span(0, 10), 0, 0.0)


def constant_model(cls_bias, input_dim=2):
    model = LnModel(input_dim, len(cls_bias) - 1, non_local=False)
    model.cls.bias.value = np.asarray(cls_bias, dtype=float)
    return model


class TestRankAndDetect:

    features = np.random.default_rng(6).normal(size=(120, 2))

    def test_background_proposals_are_dropped(self):
        model = constant_model([-50.0, 50.0])
        assert rank_and_detect([span(10, 50)], self.features, model, UNITS, 0.36) == []

    def test_score_is_class_probability(self):
        model = constant_model([math.log(0.8), math.log(0.2)])
        detections = rank_and_detect([span(10, 50)], self.features, model, UNITS, 0.36)
        assert len(detections) == 1
        assert detections[0].label == 0 and detections[0].interval == span(10, 50)
        assert detections[0].score == pytest.approx(0.8)

    def test_duplicates_are_suppressed(self):
        model = constant_model([math.log(0.8), math.log(0.2)])
        detections = rank_and_detect([span(10, 50), span(10, 50), span(70, 110)], self.features, model, UNITS,
                                     0.36, batch_size=2)
        assert [d.interval for d in detections] == [span(10, 50), span(70, 110)]

    def test_random_model_output(self):
        rng = np.random.default_rng(7)
        model = LnModel(2, 3, rng=rng)
        randomize_out(model.block, rng)
        model.reg.weight.value = rng.uniform(-0.1, 0.1, size=model.reg.weight.shape)
        proposals = [span(int(s), int(s) + int(rng.integers(8, 60))) for s in rng.integers(0, 60, size=30)]
        detections = rank_and_detect(proposals, self.features, model, UNITS, 0.5)
        assert all(d.score > 0.0 and 0 <= d.label < 3 for d in detections)
        assert [d.score for d in detections] == sorted((d.score for d in detections), reverse=True)
        for label in range(3):
            same = [d for d in detections if d.label == label]
            for i, a in enumerate(same):
                for b in same[i + 1:]:
                    assert iou(a.interval, b.interval) <= 0.5


def pyramid_inputs(rng, lengths, dim):
    inputs = []
    for n_start, n_course, n_end in lengths:
        x = rng.normal(size=(n_start + n_course + n_end, dim))
        inputs.append((x, pooling_weights((n_start, n_course, n_end))))
    return inputs


class TestLnModel:

    def test_zero_out_map_matches_model_without_block(self):
        rng = np.random.default_rng(8)
        with_block = LnModel(3, 2, rng=rng)
        plain = LnModel(3, 2, non_local=False)
        for name in ("cls", "comp", "reg"):
            for key in ("weight", "bias"):
                getattr(getattr(plain, name), key).value = getattr(getattr(with_block, name), key).value.copy()
        with_block.reg.weight.value = rng.normal(size=with_block.reg.weight.shape)
        plain.reg.weight.value = with_block.reg.weight.value.copy()
        inputs = pyramid_inputs(rng, [(2, 3, 1), (0, 4, 2)], 3)
        for a, b in zip(with_block.forward(inputs)[0], plain.forward(inputs)[0]):
            np.testing.assert_array_equal(a, b)

    def test_state_round_trip(self):
        model = LnModel(3, 2, rng=np.random.default_rng(0), non_local=False)
        restored = LnModel.from_state(model.state_dict())
        assert not restored.non_local and restored.num_classes == 2

    @pytest.mark.parametrize("seed", range(3))
    def test_grad_check(self, seed):
        rng = np.random.default_rng(seed)
        model = LnModel(3, 2, rng=rng)
        randomize_out(model.block, rng)
        model.reg.weight.value = rng.uniform(-0.5, 0.5, size=model.reg.weight.shape)
        inputs = pyramid_inputs(rng, [(1, 2, 1), (0, 3, 2)], 3)
        labels = [0, 2]
        comp_weights = rng.normal(size=2)
        targets = rng.normal(size=(2, 2)) * 0.2
        params = model.parameters()

        def loss_and_grads():
            model.zero_grad()
            (logits, comp, offsets), cache = model.forward(inputs)
            l_cls, d_cls = cross_entropy(logits, labels)
            l_loc, d_loc = regression_loss(offsets, targets)
            model.backward(d_cls, comp_weights.copy(), d_loc, cache)
            return l_cls + float(comp @ comp_weights) + l_loc, [p.grad for p in params]

        report = grad_check(loss_and_grads, [p.value for p in params], abs_tol=1e-8)
        assert report.passed, str(report)


def toy_dataset():
    features = np.zeros((64, 4))
    features[:, 1] = 1.0
    features[16:32] = [1.0, 0.0, 0.0, 0.0]
    gts = [GroundTruthInstance(span(16, 32), 0)]
    return features, gts


class TestTrainLn:

    units = UnitConfig(unit_len=4, stride=2)

    def hyper(self, **kw):
        base = dict(batch_size=2, iterations=500, learning_rate=0.1, log_every=100)
        base.update(kw)
        return LocalizationConfig(**base)

    def test_overfits_positive_and_background(self):
        features, gts = toy_dataset()
        dataset = [labelled(span(16, 32), gts, features), labelled(span(44, 60), gts, features)]
        model = LnModel(4, 1, rng=np.random.default_rng(0))
        model, losses = train_ln(model, dataset, self.hyper(), self.units, seed=0)
        samples = build_ln_samples(dataset, 1, self.units)
        (logits, _, _), _ = model.forward([s.pyramid_input for s in samples])
        assert cross_entropy(logits, [s.class_id for s in samples])[0] < 0.01
        assert len(losses) == 500

    def test_zero_weights_leave_completeness_and_regression_heads(self):
        features, gts = toy_dataset()
        dataset = [labelled(p, gts, features) for p in (span(16, 32), span(18, 34), span(12, 28), span(44, 60),
                                                        span(20, 40), span(0, 8))]
        model = LnModel(4, 1, rng=np.random.default_rng(1))
        comp_before = model.comp.weight.value.copy()
        model, _ = train_ln(model, dataset, self.hyper(iterations=30, alpha=0.0, beta=0.0), self.units, seed=1)
        np.testing.assert_array_equal(model.comp.weight.value, comp_before)
        np.testing.assert_array_equal(model.reg.weight.value, 0.0)
        np.testing.assert_array_equal(model.reg.bias.value, 0.0)

    def test_same_seed_same_curve(self):
        features, gts = toy_dataset()
        dataset = [labelled(p, gts, features) for p in (span(16, 32), span(14, 30), span(20, 40), span(44, 60))]
        curves = []
        for _ in range(2):
            model = LnModel(4, 1, rng=np.random.default_rng(2))
            _, losses = train_ln(model, dataset, self.hyper(iterations=40, batch_size=4), self.units, seed=2)
            curves.append(losses)
        assert curves[0] == curves[1]

    def test_needs_positives(self):
        features, gts = toy_dataset()
        with pytest.raises(TrainingError):
            train_ln(LnModel(4, 1), [labelled(span(44, 60), gts, features)], self.hyper(), self.units, seed=0)

    def test_sample_kinds(self):
        features, gts = toy_dataset()
        dataset = [labelled(p, gts, features) for p in (span(16, 32), span(20, 40), span(44, 60), span(4, 20))]
        samples = build_ln_samples(dataset, 1, self.units)
        kinds = [label_proposal(p.proposal, gts).kind for p in dataset]
        assert kinds[3] == ProposalKind.IGNORED
        assert [s.kind for s in samples] == [ProposalKind.POSITIVE, ProposalKind.INCOMPLETE, ProposalKind.BACKGROUND]
        assert samples[2].class_id == 1 and samples[2].target is None
        assert samples[0].class_id == 0 and (samples[0].target.c, samples[0].target.s) == (0.0, 0.0)
