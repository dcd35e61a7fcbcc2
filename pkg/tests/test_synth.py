from dataclasses import replace

import numpy as np
import pytest

from tgg import synth
from tgg.dataio import SchemaError, SyntheticSpec, generate_synthetic, mixing_matrix


def test_recovers_generator_map():
    spec = SyntheticSpec(sigma=1e-300, seed=1)
    s = synth.fit(generate_synthetic(spec), ridge=1e-12)
    L = mixing_matrix(spec)
    assert np.linalg.norm(s.mapping - L) / np.linalg.norm(L) <= 1e-6
    assert not s.underdetermined


def test_single_seen_class_is_rank_one(synthetic):
    ds = replace(synthetic, seen_classes=frozenset({0}), unseen_classes=frozenset(range(1, 15)))
    train = ds.split("train")
    ds = replace(ds, splits={**ds.splits, "train": train[ds.labels[train] == 0]})
    with pytest.warns(synth.UnderdeterminedWarning):
        s = synth.fit(ds)
    assert s.underdetermined
    assert np.linalg.matrix_rank(s.mapping, tol=1e-9) == 1
    mean0 = ds.features[ds.split("train")].mean(0)
    np.testing.assert_allclose(s.mean(0), mean0, rtol=1e-2)
    # every attribute maps onto the direction of that class mean
    for c in range(1, 15):
        out = s.mean(c)
        cos = out @ mean0 / (np.linalg.norm(out) * np.linalg.norm(mean0))
        assert abs(cos) == pytest.approx(1.0, abs=1e-9)


def test_residual_decreases_as_ridge_vanishes(synthetic):
    residuals = [synth.fit(synthetic, ridge=r).residual for r in (10.0, 1.0, 0.1, 1e-2, 1e-4, 1e-8)]
    assert all(a >= b for a, b in zip(residuals, residuals[1:]))
    assert residuals[0] > residuals[-1]


def test_zero_noise_sample_is_mean(synthetic):
    s = synth.fit(synthetic)
    s = replace(s, noise=np.zeros_like(s.noise))
    rows = s.sample(12, 5, seed=0)
    np.testing.assert_array_equal(rows, np.tile(s.mapping @ synthetic.attributes[12], (5, 1)))


def test_sample_mean_law_of_large_numbers(synthetic):
    s = synth.fit(synthetic)
    rows = s.sample(11, 10_000, seed=3)
    assert np.all(np.abs(rows.mean(0) - s.mean(11)) <= 3 * s.noise / np.sqrt(10_000))


def test_sample_deterministic(synthetic):
    s = synth.fit(synthetic)
    np.testing.assert_array_equal(s.sample(10, 4, seed=9), s.sample(10, 4, seed=9))


def test_unknown_class(synthetic):
    with pytest.raises(SchemaError):
        synth.fit(synthetic).sample(99, 1, seed=0)


def test_noise_is_pooled_within_class_spread(synthetic):
    s = synth.fit(synthetic)
    np.testing.assert_allclose(s.noise, 0.3, rtol=0.15)


@pytest.mark.parametrize("seed", range(5))
def test_dummies_land_near_own_class(seed):
    spec = SyntheticSpec(seed=seed, sigma=0.3)
    ds = generate_synthetic(spec)
    s = synth.fit(ds)
    true_means = ds.attributes @ mixing_matrix(spec).T
    unseen = sorted(ds.unseen_classes)
    hits = total = 0
    for c in unseen:
        rows = s.sample(c, 200, seed=seed * 100 + c)
        d = ((rows[:, None, :] - true_means[unseen][None]) ** 2).sum(-1)
        hits += np.sum(np.asarray(unseen)[d.argmin(1)] == c)
        total += len(rows)
    assert hits / total >= 0.90


def test_refit_on_synthesized_data_recovers_map(synthetic):
    s = synth.fit(synthetic)
    seen = sorted(synthetic.seen_classes)
    rows = [s.sample(c, 2000, seed=c) for c in seen]
    feats = np.concatenate(rows)
    labels = np.repeat(seen, 2000)
    ds = replace(
        synthetic,
        features=feats,
        labels=labels,
        instance_ids=np.arange(len(labels)),
        splits={"train": np.arange(len(labels))},
    )
    again = synth.fit(ds)
    assert np.linalg.norm(again.mapping - s.mapping) / np.linalg.norm(s.mapping) <= 0.05
