"""Metrics: utility, ASR, stealth protocol, entropy, embeddings, reports."""

import json
import math

import numpy as np
import pytest
import torch
import torch.nn as nn

from conftest import rand_batch
from hijacklab.camouflager import camouflage_in_chunks, init_camouflager
from hijacklab.data import DatasetRole, ImageBatch, LabeledDataset, build_label_mapping
from hijacklab.evaluation import (
    EvalReport,
    attack_success_rate,
    camouflage_queries,
    entropy_distribution,
    entropy_histogram_overlap,
    euclidean_stealthiness,
    non_camouflaged_accuracy,
    prediction_entropy,
    tsne_embed,
    utility,
)
from hijacklab.training import TargetModel

SIZE = 32


class _Constant(nn.Module):
    def __init__(self, winner: int, classes: int):
        super().__init__()
        self.winner, self.classes = winner, classes

    def forward(self, x):
        logits = torch.zeros(x.shape[0], self.classes)
        logits[:, self.winner] = 1.0
        return logits


def _tiny_dataset(labels, role, class_count=10, side=8):
    labels = torch.as_tensor(labels, dtype=torch.long)
    images = ImageBatch(torch.zeros(len(labels), 3, side, side), "symmetric")
    return LabeledDataset(images, labels, role, class_count)


class TestEvalReport:
    def _base(self, **over):
        kwargs = dict(utility=0.9, clean_utility=0.95, asr=0.8,
                      non_camouflaged_acc=0.1)
        kwargs.update(over)
        return kwargs

    @pytest.mark.parametrize(
        "bad",
        [dict(utility=1.2), dict(asr=-0.1), dict(naive_asr=2.0),
         dict(stealth_distance_camouflaged=-3.0)],
    )
    def test_validation(self, bad):
        with pytest.raises(ValueError):
            EvalReport(**self._base(**bad))

    def test_json_round_trip(self, tmp_path):
        report = EvalReport(**self._base(
            naive_asr=0.5, stealth_distance_camouflaged=12.5,
            stealth_distance_hijacking=40.0,
            entropy_stats={"clean_test": {"mean": 0.1}},
            seeds={"query": 2},
        ))
        p = tmp_path / "report.json"
        report.write_json(p)
        back = EvalReport.read_json(p)
        assert back == report
        assert json.loads(p.read_text())["schema_version"] == 1

    def test_unsupported_schema_rejected(self):
        d = EvalReport(**self._base()).to_dict()
        d["schema_version"] = 99
        with pytest.raises(ValueError, match="schema_version"):
            EvalReport.from_dict(d)


class TestUtility:
    def test_counts_exact_matches(self):
        model = TargetModel("small_cnn", _Constant(3, 10), 10, 8)
        ds = _tiny_dataset([3, 3, 0, 1], DatasetRole.ORIGINAL)
        assert utility(model, ds) == pytest.approx(0.5)

    def test_role_validation(self):
        model = TargetModel("small_cnn", _Constant(0, 10), 10, 8)
        with pytest.raises(ValueError, match="Original"):
            utility(model, _tiny_dataset([0], DatasetRole.HIJACKING))

    def test_empty_rejected(self):
        model = TargetModel("small_cnn", _Constant(0, 10), 10, 8)
        with pytest.raises(ValueError, match="empty"):
            utility(model, _tiny_dataset([], DatasetRole.ORIGINAL))


class TestCamouflageQueries:
    def test_matches_manual_partner_draw(self, original_train):
        camouflager = init_camouflager(SIZE, seed=2)
        hijackee = original_train.subset(range(50))
        x_h = rand_batch(12, 3, SIZE, SIZE, seed=3)
        out = camouflage_queries(camouflager, hijackee, x_h, seed=7)
        partners = np.random.default_rng(7).integers(0, 50, size=12)
        expected = camouflage_in_chunks(
            camouflager,
            hijackee.images.to_symmetric().subset(partners),
            x_h.to_symmetric(),
        )
        assert torch.equal(out.data, expected.data)

    def test_deterministic_per_seed(self, original_train):
        camouflager = init_camouflager(SIZE, seed=2)
        hijackee = original_train.subset(range(50))
        x_h = rand_batch(6, 3, SIZE, SIZE, seed=3)
        a = camouflage_queries(camouflager, hijackee, x_h, seed=1)
        b = camouflage_queries(camouflager, hijackee, x_h, seed=1)
        c = camouflage_queries(camouflager, hijackee, x_h, seed=2)
        assert torch.equal(a.data, b.data)
        assert not torch.equal(a.data, c.data)

    def test_empty_hijackee(self, original_train):
        camouflager = init_camouflager(SIZE, seed=2)
        empty = original_train.subset([])
        with pytest.raises(ValueError, match="empty"):
            camouflage_queries(camouflager, empty, rand_batch(2, 3, SIZE, SIZE))


class TestAttackSuccessRate:
    def test_raw_query_path(self):
        model = TargetModel("small_cnn", _Constant(4, 10), 10, 8)
        mapping = build_label_mapping(10, 10, "identity")
        ds = _tiny_dataset([4, 4, 4, 0], DatasetRole.HIJACKING)
        assert attack_success_rate(None, model, mapping, ds) == pytest.approx(0.75)

    def test_out_of_image_prediction_is_incorrect(self):
        model = TargetModel("small_cnn", _Constant(9, 10), 10, 8)
        mapping = build_label_mapping(10, 4, "identity")
        ds = _tiny_dataset([1, 2, 3], DatasetRole.HIJACKING, class_count=4)
        assert attack_success_rate(None, model, mapping, ds) == 0.0

    def test_role_and_empty_validation(self):
        model = TargetModel("small_cnn", _Constant(0, 10), 10, 8)
        mapping = build_label_mapping(10, 10, "identity")
        with pytest.raises(ValueError, match="Hijacking"):
            attack_success_rate(None, model, mapping,
                                _tiny_dataset([0], DatasetRole.ORIGINAL))
        with pytest.raises(ValueError, match="empty"):
            attack_success_rate(None, model, mapping,
                                _tiny_dataset([], DatasetRole.HIJACKING))

    def test_camouflager_requires_hijackee(self):
        model = TargetModel("small_cnn", _Constant(0, 10), 10, SIZE)
        mapping = build_label_mapping(10, 10, "identity")
        ds = _tiny_dataset([0], DatasetRole.HIJACKING, side=SIZE)
        with pytest.raises(ValueError, match="hijackee"):
            attack_success_rate(init_camouflager(SIZE, seed=0), model, mapping, ds)


class TestNonCamouflagedAccuracy:
    def test_hand_check(self):
        model = TargetModel("small_cnn", _Constant(2, 10), 10, 8)
        mapping = build_label_mapping(10, 10, "identity")
        ds = _tiny_dataset([2, 2, 1, 3], DatasetRole.HIJACKING)
        assert non_camouflaged_accuracy(model, mapping, ds) == pytest.approx(0.5)

    def test_role_validation(self):
        model = TargetModel("small_cnn", _Constant(0, 10), 10, 8)
        mapping = build_label_mapping(10, 10, "identity")
        with pytest.raises(ValueError, match="Hijacking"):
            non_camouflaged_accuracy(model, mapping,
                                     _tiny_dataset([0], DatasetRole.ORIGINAL))


def _scalar_dataset(values, role=DatasetRole.ORIGINAL):
    """One-pixel images so flattened vectors are plain scalars."""
    data = torch.tensor(values, dtype=torch.float32).view(-1, 1, 1, 1)
    labels = torch.zeros(len(values), dtype=torch.long)
    return LabeledDataset(ImageBatch(data, "unit"), labels, role, 2)


def _stealth_oracle(probe, reference, sample_n, batch, seed):
    """Hand-rolled restatement of the stealth protocol."""
    available = min(sample_n, len(probe), len(reference))
    n = (available // batch) * batch
    idx_p = np.random.default_rng(seed).choice(len(probe), size=n, replace=False)
    idx_r = np.random.default_rng(seed).choice(len(reference), size=n, replace=False)
    p = probe.images.data.numpy().reshape(len(probe), -1)[idx_p].astype(np.float64)
    r = reference.images.data.numpy().reshape(len(reference), -1)[idx_r].astype(np.float64)
    mins = []
    for s in range(0, n, batch):
        for i in range(s, s + batch):
            best = math.inf
            for j in range(s, s + batch):
                d = math.sqrt(((p[i] - r[j]) ** 2).sum())
                best = min(best, d)
            mins.append(best)
    return sum(mins) / len(mins)


class TestStealthiness:
    def test_two_point_hand_case(self):
        # probes 0 and 1 against references 0.1 and 0.2 in one batch:
        # min distances are 0.1 and 0.8, mean 0.45
        probe = _scalar_dataset([0.0, 1.0])
        ref = _scalar_dataset([0.1, 0.2])
        got = euclidean_stealthiness(probe, ref, sample_n=2, batch=2, seed=0)
        assert got == pytest.approx(0.45, abs=1e-7)

    def test_identical_sets_score_zero(self, original_train):
        ds = original_train.subset(range(60))
        assert euclidean_stealthiness(ds, ds, sample_n=60, batch=20, seed=1) == 0.0

    def test_matches_loop_oracle(self, original_train, hijacking_train):
        probe = original_train.subset(range(40))
        ref = original_train.subset(range(40, 80))
        got = euclidean_stealthiness(probe, ref, sample_n=24, batch=8, seed=5)
        want = _stealth_oracle(probe, ref, sample_n=24, batch=8, seed=5)
        assert got == pytest.approx(want, rel=1e-9)

    def test_batch_locality_matters(self, original_train):
        probe = original_train.subset(range(16))
        ref = original_train.subset(range(16, 32))
        local = euclidean_stealthiness(probe, ref, sample_n=16, batch=4, seed=2)
        pooled = euclidean_stealthiness(probe, ref, sample_n=16, batch=16, seed=2)
        # a batch-local nearest neighbor can only be farther than the global one
        assert local >= pooled
        assert local != pooled

    def test_draw_shrinks_to_batch_multiple(self):
        probe = _scalar_dataset([0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 0.5])
        ref = _scalar_dataset([0.1, 0.3, 0.5, 0.7, 0.9, 0.95, 0.05])
        got = euclidean_stealthiness(probe, ref, sample_n=99, batch=3, seed=3)
        want = _stealth_oracle(probe, ref, sample_n=99, batch=3, seed=3)
        assert got == pytest.approx(want, rel=1e-9)

    def test_divisibility_enforced(self):
        ds = _scalar_dataset([0.0, 0.5, 1.0, 0.2])
        with pytest.raises(ValueError, match="divisible"):
            euclidean_stealthiness(ds, ds, sample_n=10, batch=3)

    def test_minimum_size_enforced(self):
        small = _scalar_dataset([0.0])
        big = _scalar_dataset([0.0, 0.5, 1.0, 0.2])
        with pytest.raises(ValueError, match="at least"):
            euclidean_stealthiness(small, big, sample_n=2, batch=2)

    def test_shape_mismatch(self, original_train, hijacking_train):
        with pytest.raises(ValueError, match="shapes"):
            euclidean_stealthiness(
                original_train.subset(range(20)),
                hijacking_train.subset(range(20)),  # single-channel
                sample_n=20, batch=10,
            )


class TestTsne:
    def test_shapes_roles_and_determinism(self):
        batches = {
            "original": rand_batch(8, 3, 8, 8, seed=1),
            "camouflaged": rand_batch(6, 3, 8, 8, seed=2),
            "hijacking": rand_batch(7, 3, 8, 8, seed=3),
        }
        a = tsne_embed(batches, seed=4, perplexity=5.0, max_iter=260)
        b = tsne_embed(batches, seed=4, perplexity=5.0, max_iter=260)
        assert a.coords.shape == (21, 2)
        assert a.roles == ["original"] * 8 + ["camouflaged"] * 6 + ["hijacking"] * 7
        assert math.isfinite(a.kl_divergence)
        np.testing.assert_array_equal(a.coords, b.coords)

    def test_default_perplexity_needs_more_samples(self):
        batches = {"a": rand_batch(12, 3, 8, 8, seed=1)}
        with pytest.raises(ValueError, match="perplexity"):
            tsne_embed(batches)

    def test_only_two_dims(self):
        with pytest.raises(ValueError, match="2-D"):
            tsne_embed({"a": rand_batch(40, 3, 8, 8)}, dims=3)

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="no samples"):
            tsne_embed({})


class TestPredictionEntropy:
    def test_uniform_is_log_k(self):
        assert prediction_entropy(np.full(10, 0.1)) == pytest.approx(
            math.log(10), abs=1e-9
        )

    def test_one_hot_is_zero(self):
        assert prediction_entropy([0.0, 1.0, 0.0]) == 0.0

    def test_two_way_split_is_log_two(self):
        assert prediction_entropy([0.5, 0.5]) == pytest.approx(math.log(2), abs=1e-9)

    def test_zero_times_log_zero_is_zero(self):
        assert prediction_entropy([0.5, 0.5, 0.0]) == pytest.approx(
            math.log(2), abs=1e-9
        )

    def test_matches_direct_sum(self):
        rng = np.random.default_rng(8)
        for _ in range(50):
            p = rng.dirichlet(np.ones(6))
            direct = -math.fsum(v * math.log(v) for v in p if v > 0)
            assert prediction_entropy(p) == pytest.approx(direct, abs=1e-12)

    def test_validation(self):
        with pytest.raises(ValueError, match="non-negative"):
            prediction_entropy([-0.2, 1.2])
        with pytest.raises(ValueError, match="sum"):
            prediction_entropy([0.4, 0.4])
        with pytest.raises(ValueError, match="empty"):
            prediction_entropy([])

    def test_tolerates_float_noise(self):
        p = np.array([0.3, 0.7 + 1e-13, -1e-13])
        assert prediction_entropy(p) >= 0.0


class TestEntropyDistribution:
    def test_uniform_logits_give_log_k_everywhere(self):
        class Flat(nn.Module):
            def forward(self, x):
                return torch.zeros(x.shape[0], 7)

        model = TargetModel("small_cnn", Flat(), 7, 8)
        ds = _tiny_dataset([0, 1, 2], DatasetRole.ORIGINAL, class_count=7)
        ent, stats = entropy_distribution(model, ds)
        assert ent.shape == (3,)
        np.testing.assert_allclose(ent, math.log(7), atol=1e-9)
        assert stats["mean"] == pytest.approx(math.log(7), abs=1e-9)
        assert stats["min"] == stats["max"] == pytest.approx(math.log(7), abs=1e-9)

    def test_matches_per_row_entropy(self, trained_eval_model):
        model, ds = trained_eval_model
        ent, stats = entropy_distribution(model, ds)
        model.module.eval()
        with torch.no_grad():
            logits = model.module(ds.images.to_symmetric().data)
        probs = torch.softmax(logits.double(), dim=1).numpy()
        expected = np.array([prediction_entropy(p) for p in probs])
        np.testing.assert_allclose(ent, expected, atol=1e-9)
        assert set(stats) == {"min", "max", "mean", "q25", "median", "q75"}

    def test_empty_gives_nan_stats(self):
        class Flat(nn.Module):
            def forward(self, x):
                return torch.zeros(x.shape[0], 7)

        model = TargetModel("small_cnn", Flat(), 7, 8)
        ent, stats = entropy_distribution(
            model, ImageBatch(torch.zeros(0, 3, 8, 8), "symmetric")
        )
        assert ent.size == 0
        assert all(math.isnan(v) for v in stats.values())

    def test_accepts_bare_image_batch(self):
        class Flat(nn.Module):
            def forward(self, x):
                return torch.zeros(x.shape[0], 4)

        model = TargetModel("small_cnn", Flat(), 4, 8)
        ent, _ = entropy_distribution(model, rand_batch(5, 3, 8, 8))
        assert ent.shape == (5,)


@pytest.fixture(scope="module")
def trained_eval_model(original_train):
    from hijacklab.training import OptimizerConfig, train_target

    subset = original_train.subset(range(96))
    model, _ = train_target(
        "small_cnn", subset, OptimizerConfig(epochs=1, batch_size=32, seed=6)
    )
    return model, subset


class TestEntropyHistogramOverlap:
    def test_identical_samples(self):
        a = np.array([0.1, 0.5, 0.9, 0.3])
        assert entropy_histogram_overlap(a, a.copy()) == pytest.approx(1.0)

    def test_disjoint_supports(self):
        a = np.linspace(0.0, 1.0, 50)
        b = np.linspace(10.0, 11.0, 50)
        assert entropy_histogram_overlap(a, b) == 0.0

    def test_hand_computed_two_bins(self):
        a = np.array([0.0, 0.0, 1.0])
        b = np.array([0.0, 1.0, 1.0])
        got = entropy_histogram_overlap(a, b, bins=2)
        assert got == pytest.approx(2.0 / 3.0)

    def test_degenerate_point_mass(self):
        a = np.array([0.5, 0.5])
        b = np.array([0.5])
        assert entropy_histogram_overlap(a, b) == 1.0

    def test_bounded_in_unit_interval(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            a = rng.normal(size=40)
            b = rng.normal(loc=rng.uniform(0, 3), size=40)
            v = entropy_histogram_overlap(a, b)
            assert 0.0 <= v <= 1.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="both"):
            entropy_histogram_overlap(np.array([]), np.array([1.0]))
