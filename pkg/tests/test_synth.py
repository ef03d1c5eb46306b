"""Synthetic dataset generators: determinism, shapes, label semantics."""

import numpy as np
import pytest
import torch

from hijacklab.data import DatasetRole, build_celeba_labels
from hijacklab.synth import synth_digits, synth_faces, synth_objects


GENERATORS = [
    ("digits", lambda n, s, seed: synth_digits(n, size=s, seed=seed)),
    ("objects", lambda n, s, seed: synth_objects(n, size=s, seed=seed)),
    ("faces", lambda n, s, seed: synth_faces(n, size=s, seed=seed)[0]),
]


@pytest.mark.parametrize("name,gen", GENERATORS, ids=[g[0] for g in GENERATORS])
class TestCommonContract:
    def test_same_seed_bit_identical(self, name, gen):
        a = gen(12, 16, 42)
        b = gen(12, 16, 42)
        assert torch.equal(a.images.data, b.images.data)
        assert torch.equal(a.labels, b.labels)

    def test_different_seeds_differ(self, name, gen):
        a = gen(12, 16, 1)
        b = gen(12, 16, 2)
        assert not torch.equal(a.images.data, b.images.data)

    def test_shape_dtype_range(self, name, gen):
        ds = gen(5, 24, 0)
        channels = 1 if name == "digits" else 3
        assert ds.images.data.shape == (5, channels, 24, 24)
        assert ds.images.data.dtype == torch.float32
        assert ds.images.value_range == "unit"
        assert ds.images.data.min().item() >= 0.0
        assert ds.images.data.max().item() <= 1.0
        assert ds.labels.shape == (5,)
        assert ds.labels.dtype == torch.int64
        assert ds.role == DatasetRole.ORIGINAL

    def test_size_parameter(self, name, gen):
        for size in (16, 32, 64):
            ds = gen(2, size, 3)
            assert ds.images.data.shape[-2:] == (size, size)

    def test_labels_cover_all_classes(self, name, gen):
        ds = gen(400, 8, 9)
        counts = torch.bincount(ds.labels, minlength=ds.class_count)
        assert counts.min().item() > 0
        # roughly uniform: no class hoards more than 3x its fair share
        assert counts.max().item() < 3 * 400 / ds.class_count


class TestClassCount:
    def test_digits_restricted_label_range(self):
        ds = synth_digits(100, size=16, seed=5, class_count=4)
        assert ds.class_count == 4
        assert ds.labels.max().item() < 4

    def test_objects_restricted_label_range(self):
        ds = synth_objects(100, size=16, seed=5, class_count=8)
        assert ds.class_count == 8
        assert ds.labels.max().item() < 8

    @pytest.mark.parametrize("bad", [0, 11, -1])
    def test_invalid_class_count_rejected(self, bad):
        with pytest.raises(ValueError):
            synth_digits(4, size=16, seed=0, class_count=bad)
        with pytest.raises(ValueError):
            synth_objects(4, size=16, seed=0, class_count=bad)


class TestFaces:
    def test_returns_attrs_and_consistent_labels(self):
        ds, attrs = synth_faces(50, size=16, seed=21)
        assert attrs.shape == (50, 3)
        assert set(np.unique(attrs)) <= {0, 1}
        assert ds.class_count == 8
        assert torch.equal(ds.labels, build_celeba_labels(attrs))

    def test_attrs_deterministic(self):
        _, a = synth_faces(20, size=8, seed=33)
        _, b = synth_faces(20, size=8, seed=33)
        np.testing.assert_array_equal(a, b)


class TestLabelCarriesSignal:
    def test_digit_eight_brighter_than_one(self):
        # glyph 8 lights all seven segments, glyph 1 only two, so with the
        # same fg/bg statistics the class-8 mean intensity must be higher
        ds = synth_digits(600, size=16, seed=77)
        imgs, labels = ds.images.data, ds.labels
        mean_eight = imgs[labels == 8].mean().item()
        mean_one = imgs[labels == 1].mean().item()
        assert mean_eight > mean_one + 0.1

    def test_object_stripes_have_directional_structure(self):
        # horizontal stripes (class 2): variance across rows dominates;
        # vertical stripes (class 3): variance across columns dominates
        ds = synth_objects(400, size=16, seed=78)
        imgs, labels = ds.images.data, ds.labels

        def row_col_var(cls):
            sel = imgs[labels == cls].mean(dim=1)  # grayscale [K, H, W]
            row_means = sel.mean(dim=2)  # [K, H]
            col_means = sel.mean(dim=1)  # [K, W]
            return row_means.var(dim=1).mean().item(), col_means.var(dim=1).mean().item()

        h_row, h_col = row_col_var(2)
        v_row, v_col = row_col_var(3)
        assert h_row > 2 * h_col
        assert v_col > 2 * v_row

    def test_face_attribute_visibly_changes_pixels(self):
        # makeup adds cheek disks and a saturated red mouth: the red-channel
        # mass must separate makeup from no-makeup populations
        ds, attrs = synth_faces(300, size=16, seed=79)
        red = ds.images.data[:, 0].mean(dim=(1, 2))
        with_makeup = red[attrs[:, 0] == 1].mean().item()
        without = red[attrs[:, 0] == 0].mean().item()
        assert with_makeup > without
