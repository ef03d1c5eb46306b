import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from hijacklab.data import (
    DatasetRole,
    ImageBatch,
    LabeledDataset,
    LabelMapping,
    assemble_poisoned,
    build_celeba_labels,
    build_label_mapping,
    pair_epoch,
    rescale_and_channelize,
    sample_hijackee,
)
from hijacklab.errors import CapacityError

from conftest import rand_batch


def bilinear_resize_oracle(img: np.ndarray, out_size: int) -> np.ndarray:
    """Brute-force bilinear interpolation, half-pixel centers, edge clamp."""
    h, w = img.shape
    out = np.zeros((out_size, out_size))
    sy = h / out_size
    sx = w / out_size
    for i in range(out_size):
        for j in range(out_size):
            y = (i + 0.5) * sy - 0.5
            x = (j + 0.5) * sx - 0.5
            y0, x0 = int(np.floor(y)), int(np.floor(x))
            dy, dx = y - y0, x - x0
            y1, x1 = y0 + 1, x0 + 1
            y0c, y1c = np.clip([y0, y1], 0, h - 1)
            x0c, x1c = np.clip([x0, x1], 0, w - 1)
            out[i, j] = (
                img[y0c, x0c] * (1 - dy) * (1 - dx)
                + img[y0c, x1c] * (1 - dy) * dx
                + img[y1c, x0c] * dy * (1 - dx)
                + img[y1c, x1c] * dy * dx
            )
    return out


class TestImageBatch:
    def test_range_validation(self):
        with pytest.raises(ValueError):
            ImageBatch(torch.full((1, 3, 4, 4), 2.0), "unit")
        with pytest.raises(ValueError):
            ImageBatch(torch.full((1, 3, 4, 4), -2.0), "symmetric")
        with pytest.raises(ValueError):
            ImageBatch(torch.zeros(1, 2, 4, 4), "unit")
        with pytest.raises(ValueError):
            ImageBatch(torch.zeros(3, 4, 4), "unit")

    def test_round_trip_conversion(self):
        b = rand_batch(4, 3, 8, 8, seed=1, value_range="unit")
        back = b.to_symmetric().to_unit()
        assert torch.allclose(back.data, b.data, atol=1e-6)
        assert back.value_range == "unit"

    def test_conversion_is_affine(self):
        b = ImageBatch(torch.tensor([[[[0.0, 0.5], [1.0, 0.25]]]]), "unit")
        sym = b.to_symmetric()
        assert torch.allclose(sym.data, torch.tensor([[[[-1.0, 0.0], [1.0, -0.5]]]]))

    def test_subset_keeps_range(self):
        b = rand_batch(5, 3, 4, 4, seed=2)
        s = b.subset([3, 1])
        assert s.n == 2
        assert torch.equal(s.data[0], b.data[3])
        assert s.value_range == "symmetric"


class TestRescale:
    def test_constant_image(self):
        b = ImageBatch(torch.full((1, 1, 28, 28), 0.5), "unit")
        out = rescale_and_channelize(b, 32)
        assert out.data.shape == (1, 3, 32, 32)
        assert torch.allclose(out.data, torch.full((1, 3, 32, 32), 0.5), atol=1e-6)

    def test_identity_when_sizes_match(self):
        b = rand_batch(2, 3, 32, 32, seed=3, value_range="unit")
        out = rescale_and_channelize(b, 32)
        assert torch.allclose(out.data, b.data, atol=1e-6)

    def test_matches_bilinear_oracle(self):
        img = np.array([[0.0, 1.0], [1.0, 0.0]])
        b = ImageBatch(torch.tensor(img, dtype=torch.float32).view(1, 1, 2, 2), "unit")
        out = rescale_and_channelize(b, 4)
        expected = bilinear_resize_oracle(img, 4)
        for c in range(3):
            assert np.allclose(out.data[0, c].numpy(), expected, atol=1e-6)

    def test_matches_oracle_on_random_inputs(self):
        rng = np.random.default_rng(7)
        for _ in range(5):
            img = rng.random((5, 5))
            b = ImageBatch(
                torch.tensor(img, dtype=torch.float32).view(1, 1, 5, 5), "unit"
            )
            out = rescale_and_channelize(b, 8)
            assert np.allclose(
                out.data[0, 0].numpy(), bilinear_resize_oracle(img, 8), atol=1e-5
            )

    def test_channel_replication(self):
        b = rand_batch(2, 1, 8, 8, seed=4, value_range="unit")
        out = rescale_and_channelize(b, 8)
        assert torch.equal(out.data[:, 0], out.data[:, 1])
        assert torch.equal(out.data[:, 0], out.data[:, 2])


class TestLabelMapping:
    def test_identity_round_trip(self):
        m = build_label_mapping(10, 10, "identity")
        labels = torch.arange(10)
        mapped = m.map_labels(labels)
        assert torch.equal(mapped, labels)
        inverted, valid = m.invert_labels(mapped)
        assert torch.equal(inverted, labels)
        assert valid.all()

    def test_explicit_order(self):
        m = build_label_mapping(5, 3, [4, 0, 2])
        assert torch.equal(m.map_labels(torch.tensor([0, 1, 2])), torch.tensor([4, 0, 2]))

    def test_injectivity_enforced(self):
        with pytest.raises(ValueError):
            LabelMapping((1, 1, 2), original_count=5, hijacking_count=3)

    def test_capacity_error(self):
        with pytest.raises(CapacityError):
            build_label_mapping(8, 10, "identity")

    def test_out_of_range_inverse_is_invalid(self):
        m = build_label_mapping(10, 3, "identity")
        inverted, valid = m.invert_labels(torch.tensor([0, 1, 2, 7]))
        assert torch.equal(inverted, torch.tensor([0, 1, 2, -1]))
        assert valid.tolist() == [True, True, True, False]

    @given(
        st.integers(min_value=1, max_value=12).flatmap(
            lambda h: st.tuples(
                st.just(h),
                st.permutations(range(12)).map(lambda p: list(p)[:h]),
            )
        )
    )
    @settings(max_examples=30, deadline=None)
    def test_round_trip_property(self, case):
        h, order = case
        m = build_label_mapping(12, h, order)
        labels = torch.arange(h)
        inverted, valid = m.invert_labels(m.map_labels(labels))
        assert torch.equal(inverted, labels)
        assert valid.all()


class TestSampleHijackee:
    def test_sizes_and_classes(self, original_train):
        h = sample_hijackee(original_train, 5, 50, seed=0)
        assert len(h) == 50
        assert h.role == DatasetRole.HIJACKEE
        assert len(torch.unique(h.labels)) <= 5

    def test_no_duplicates(self, original_train):
        h = sample_hijackee(original_train, 10, 100, seed=1)
        flat = h.images.data.flatten(1)
        dists = torch.cdist(flat, flat)
        dists.fill_diagonal_(float("inf"))
        assert (dists > 0).all()

    def test_deterministic(self, original_train):
        a = sample_hijackee(original_train, 5, 50, seed=2)
        b = sample_hijackee(original_train, 5, 50, seed=2)
        assert torch.equal(a.images.data, b.images.data)
        assert torch.equal(a.labels, b.labels)

    def test_binomial_class_frequency(self):
        # 10k draws from a 10-class pool: each selected class' expected share
        # is uniform; check one class count within a generous binomial bound
        g = torch.Generator().manual_seed(11)
        images = ImageBatch(torch.rand(20000, 3, 4, 4, generator=g), "unit")
        labels = torch.arange(20000) % 10
        ds = LabeledDataset(images, labels, DatasetRole.ORIGINAL, 10)
        h = sample_hijackee(ds, 10, 10000, seed=3)
        count = int((h.labels == 0).sum())
        assert abs(count - 1000) < 150


class TestAssemblePoisoned:
    def test_original_bit_exact_and_appended(self, original_train, hijacking_train):
        m = build_label_mapping(10, 10, "identity")
        camo_images = rescale_and_channelize(
            hijacking_train.images.subset(range(20)), 32
        ).to_symmetric()
        camo = LabeledDataset(
            camo_images, hijacking_train.labels[:20], DatasetRole.CAMOUFLAGED, 10
        )
        base = LabeledDataset(
            original_train.images.to_symmetric(),
            original_train.labels,
            DatasetRole.ORIGINAL,
            10,
        )
        out = assemble_poisoned(base, camo, m)
        n = len(base)
        assert out.role == DatasetRole.POISONED
        assert len(out) == n + 20
        assert torch.equal(out.images.data[:n], base.images.data)
        assert torch.equal(out.labels[:n], base.labels)
        assert torch.equal(out.labels[n:], m.map_labels(camo.labels))

    def test_empty_payload(self, original_train):
        m = build_label_mapping(10, 10, "identity")
        camo = LabeledDataset(
            ImageBatch(torch.empty(0, 3, 32, 32), "symmetric"),
            torch.empty(0, dtype=torch.long),
            DatasetRole.CAMOUFLAGED,
            10,
        )
        base = LabeledDataset(
            original_train.images.to_symmetric(),
            original_train.labels,
            DatasetRole.ORIGINAL,
            10,
        )
        out = assemble_poisoned(base, camo, m)
        assert len(out) == len(base)
        assert out.role == DatasetRole.POISONED


class TestPairEpoch:
    @pytest.fixture()
    def pools(self, original_train, hijacking_train):
        hijackee = original_train.subset(range(15), role=DatasetRole.HIJACKEE)
        hijacking = hijacking_train.subset(range(40))
        return hijackee, hijacking

    def test_each_hijacking_exactly_once(self, pools):
        hijackee, hijacking = pools
        plan = pair_epoch(hijackee, hijacking, seed=0)
        assert sorted(plan.hijacking_indices) == list(range(40))

    def test_partners_in_range_and_vary_by_seed(self, pools):
        hijackee, hijacking = pools
        a = pair_epoch(hijackee, hijacking, seed=1)
        b = pair_epoch(hijackee, hijacking, seed=2)
        assert all(0 <= p < 15 for p in a.hijackee_indices)
        assert a.hijackee_indices != b.hijackee_indices

    def test_deterministic(self, pools):
        hijackee, hijacking = pools
        a = pair_epoch(hijackee, hijacking, seed=5)
        b = pair_epoch(hijackee, hijacking, seed=5)
        assert a.hijacking_indices == b.hijacking_indices
        assert a.hijackee_indices == b.hijackee_indices


class TestCelebaLabels:
    def test_bit_weights(self):
        attrs = np.array(
            [[0, 0, 0], [0, 0, 1], [0, 1, 0], [1, 0, 0], [1, 1, 1]], dtype=np.int64
        )
        labels = build_celeba_labels(attrs)
        assert labels.tolist() == [0, 1, 2, 4, 7]

    def test_all_eight_values(self):
        attrs = np.array(
            [[(v >> 2) & 1, (v >> 1) & 1, v & 1] for v in range(8)], dtype=np.int64
        )
        assert sorted(build_celeba_labels(attrs).tolist()) == list(range(8))

    def test_rejects_non_binary(self):
        with pytest.raises(ValueError):
            build_celeba_labels(np.array([[0, 2, 0]]))
