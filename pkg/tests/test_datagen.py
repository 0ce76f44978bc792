import dataclasses
import math

import numpy as np
import pytest

from boda.datagen import (
    DatasetSpec,
    DomainShift,
    LabelProfile,
    generate,
    label_divergence,
    load_dataset,
    load_spec,
    profile_counts,
    save_dataset,
    save_spec,
    spec_from_dict,
    spec_to_dict,
)
from boda.errors import ValidationError

from conftest import balanced_spec, divergent_spec, tiny_spec


class TestProfileCounts:
    def test_uniform(self):
        counts = profile_counts(LabelProfile("uniform", 1000), 10)
        assert counts == [1000] * 10

    def test_forward_lt_geometric(self):
        counts = profile_counts(LabelProfile("forward_lt", 1000, 100.0), 10)
        expected = [
            int(math.floor(1000 * 100.0 ** (-c / 9) + 0.5)) for c in range(10)
        ]
        assert counts == expected
        assert counts[0] == 1000 and counts[-1] == 10
        # geometric decay: successive ratios roughly constant up to rounding
        ratios = [counts[i] / counts[i + 1] for i in range(9)]
        assert max(ratios) / min(ratios) < 1.05

    def test_backward_is_reversed_forward(self):
        fwd = profile_counts(LabelProfile("forward_lt", 777, 31.0), 7)
        bwd = profile_counts(LabelProfile("backward_lt", 777, 31.0), 7)
        assert bwd == fwd[::-1]

    def test_ratio_below_one_rejected(self):
        with pytest.raises(ValidationError):
            LabelProfile("forward_lt", 100, 0.5)

    def test_single_class_rejected(self):
        with pytest.raises(ValidationError):
            profile_counts(LabelProfile("uniform", 10), 1)


class TestGenerate:
    def test_zero_pair_removes_train_only(self):
        spec = dataclasses.replace(tiny_spec(seed=3),
                                   zero_pairs=frozenset({(0, 2)}))
        ds = generate(spec)
        assert ds.counts[(0, 2)] == 0
        test_mask = (ds.test.domain == 0) & (ds.test.label == 2)
        assert test_mask.sum() == spec.test_per_pair
        val_mask = (ds.val.domain == 0) & (ds.val.label == 2)
        assert val_mask.sum() == spec.val_per_pair

    def test_counts_match_train(self, tiny_dataset):
        ds = tiny_dataset
        for (d, c), n in ds.counts.items():
            mask = (ds.train.domain == d) & (ds.train.label == c)
            assert mask.sum() == n
        assert sum(ds.counts.values()) == len(ds.train)

    def test_val_test_balanced(self, tiny_dataset):
        ds = tiny_dataset
        for split, per_pair in ((ds.val, 5), (ds.test, 10)):
            for d in range(ds.num_domains):
                for c in range(ds.num_classes):
                    mask = (split.domain == d) & (split.label == c)
                    assert mask.sum() == per_pair

    def test_no_shift_means_matching_class_means(self):
        # identical domains: per-domain class means differ only by noise
        dim = 6
        spec = DatasetSpec(
            num_domains=2, num_classes=4, input_dim=dim,
            profiles=(LabelProfile("uniform", 400),) * 2,
            domain_shift=(DomainShift(0.0, (0.0,) * dim),) * 2,
            class_separation=3.0, noise_std=0.5,
            test_per_pair=5, val_per_pair=5, seed=21,
        )
        ds = generate(spec)
        for c in range(4):
            m0 = ds.train.x[(ds.train.domain == 0) & (ds.train.label == c)]
            m1 = ds.train.x[(ds.train.domain == 1) & (ds.train.label == c)]
            gap = np.linalg.norm(m0.mean(axis=0) - m1.mean(axis=0))
            # each mean has std noise/sqrt(N) per coordinate
            assert gap <= 3.0 * 0.5 * math.sqrt(dim) / math.sqrt(400) * 2

    def test_deterministic_bytes(self, tmp_path):
        spec = tiny_spec(seed=9)
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        save_dataset(generate(spec), p1)
        save_dataset(generate(spec), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_rejects_1d_input(self):
        with pytest.raises(ValidationError):
            DatasetSpec(
                num_domains=2, num_classes=3, input_dim=1,
                profiles=(LabelProfile("uniform", 10),) * 2,
                domain_shift=(DomainShift(0.0, (0.0,)),) * 2,
                class_separation=1.0, noise_std=1.0,
                test_per_pair=2, val_per_pair=2, seed=0,
            )

    def test_roundtrip_csv(self, tmp_path, tiny_dataset):
        path = tmp_path / "ds.csv"
        save_dataset(tiny_dataset, path)
        loaded = load_dataset(path)
        np.testing.assert_array_equal(loaded.train.x, tiny_dataset.train.x)
        np.testing.assert_array_equal(loaded.test.label, tiny_dataset.test.label)
        assert loaded.counts == tiny_dataset.counts


class TestSpecJson:
    def test_roundtrip(self, tmp_path):
        spec = divergent_spec(seed=5)
        path = tmp_path / "spec.json"
        save_spec(spec, path)
        assert load_spec(path) == spec

    def test_missing_field_named(self):
        data = spec_to_dict(balanced_spec())
        del data["noise_std"]
        with pytest.raises(ValidationError, match="noise_std"):
            spec_from_dict(data)

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(ValidationError):
            load_spec(path)


class TestLabelDivergence:
    def test_identical_balanced_domains_near_zero(self):
        ds = generate(balanced_spec(seed=2, max_count=100, num_classes=5))
        report = label_divergence(ds)
        for v in report["to_uniform"].values():
            assert 0.0 <= v <= 1e-12
        for v in report["pairwise"].values():
            assert 0.0 <= v <= 1e-12

    def test_divergent_exceeds_uniform_divergence(self):
        ds = generate(divergent_spec(seed=4))
        report = label_divergence(ds)
        max_uniform = max(report["to_uniform"].values())
        min_pairwise = min(report["pairwise"].values())
        assert min_pairwise > max_uniform

    def test_single_class_domain_closed_form(self):
        # one domain concentrated on class 0, the other uniform
        dim = 4
        c_count = 5
        n = 200
        spec = DatasetSpec(
            num_domains=2, num_classes=c_count, input_dim=dim,
            profiles=(LabelProfile("uniform", n),) * 2,
            domain_shift=(DomainShift(0.0, (0.0,) * dim),) * 2,
            class_separation=2.0, noise_std=0.5,
            zero_pairs=frozenset((0, c) for c in range(1, c_count)),
            test_per_pair=2, val_per_pair=2, seed=1,
        )
        ds = generate(spec)
        report = label_divergence(ds)
        # closed form with add-one smoothing on counts (n,0,0,0,0)
        p = np.array([n + 1.0] + [1.0] * (c_count - 1)) / (n + c_count)
        expected = float(np.sum(p * np.log(p * c_count)))
        assert report["to_uniform"][0] == pytest.approx(expected, rel=1e-12)
        assert expected < math.log(c_count)  # smoothing shrinks it below ln C
        assert report["to_uniform"][0] > 0.9 * math.log(c_count)

    def test_all_divergences_nonnegative(self):
        ds = generate(tiny_spec(seed=8))
        report = label_divergence(ds)
        assert all(v >= 0 for v in report["to_uniform"].values())
        assert all(v >= 0 for v in report["pairwise"].values())
