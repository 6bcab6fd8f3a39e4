import warnings

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from blvkit.data import (
    Dataset,
    GeneratorSpec,
    SplitWarning,
    allocate_counts,
    compute_class_stats,
    dataset_to_text,
    discretized_gaussian_priors,
    generate_longtail,
    load_dataset,
    save_dataset,
    split_dataset,
)
from blvkit.errors import DataError


def _alpha_oracle(counts):
    mpmath.mp.dps = 50
    n = mpmath.mpf(sum(counts))
    logs = [mpmath.log(n / q) for q in counts]
    top = max(logs)
    return [float(v / top) for v in logs]


def test_uniform_counts_give_unit_alpha():
    stats = compute_class_stats(np.repeat(np.arange(4), 25), 4)
    np.testing.assert_array_equal(stats.alpha, [1.0, 1.0, 1.0, 1.0])
    assert stats.counts == (25, 25, 25, 25) and stats.total == 100


@pytest.mark.parametrize(
    "counts, expected",
    [
        ([50, 30, 20], [0.4307, 0.7481, 1.0]),
        ([99, 1], [0.002182, 1.0]),
    ],
)
def test_alpha_examples(counts, expected):
    labels = np.repeat(np.arange(len(counts)), counts)
    stats = compute_class_stats(labels, len(counts))
    np.testing.assert_allclose(stats.alpha, _alpha_oracle(counts), rtol=0, atol=1e-12)
    np.testing.assert_allclose(stats.alpha, expected, rtol=1e-3)


def test_zero_count_class_errors_unless_clamped():
    labels = [0, 0, 2, 2, 2]
    with pytest.raises(DataError, match="class 1 has zero samples"):
        compute_class_stats(labels, 3)
    stats = compute_class_stats(labels, 3, clamp_empty=True)
    assert stats.counts == (2, 1, 3)
    assert stats.alpha[1] == 1.0


def test_single_class_rejected():
    with pytest.raises(DataError):
        compute_class_stats([0, 0, 0], 1)


@given(st.lists(st.integers(1, 500), min_size=2, max_size=10), st.randoms(use_true_random=False))
@settings(max_examples=100, deadline=None)
def test_class_stats_properties(counts, rnd):
    labels = np.repeat(np.arange(len(counts)), counts)
    shuffled = labels.copy()
    rnd.shuffle(shuffled)
    if len(set(counts)) == 1:
        a = compute_class_stats(labels, len(counts))
        assert np.all(a.alpha == 1.0)
        return
    a = compute_class_stats(labels, len(counts))
    b = compute_class_stats(shuffled, len(counts))
    assert a.counts == b.counts
    np.testing.assert_array_equal(a.alpha, b.alpha)
    assert a.alpha[int(np.argmin(counts))] == 1.0
    assert a.alpha.max() == 1.0 and np.all(a.alpha > 0)
    order = np.argsort(counts, kind="stable")
    assert np.all(np.diff(a.alpha[order]) <= 1e-15)


def test_allocation_examples():
    assert allocate_counts(np.full(4, 0.25), 100).tolist() == [25, 25, 25, 25]
    assert allocate_counts([0.5, 0.3, 0.2], 100).tolist() == [50, 30, 20]
    assert allocate_counts([1 / 3] * 3, 10).tolist() == [4, 3, 3]


def test_generator_counts_follow_priors():
    ds = generate_longtail(GeneratorSpec(n_classes=3, n_samples=100, priors=[0.5, 0.3, 0.2], dim=4, seed=3))
    assert np.bincount(ds.labels).tolist() == [50, 30, 20]
    ds = generate_longtail(GeneratorSpec(n_classes=4, n_samples=100, priors="uniform", dim=4))
    assert np.bincount(ds.labels).tolist() == [25, 25, 25, 25]


def test_discretized_gaussian_priors_against_cdf():
    pri = discretized_gaussian_priors(5, 2.0, 1.0)
    edges = np.array([-np.inf, 0.5, 1.5, 2.5, 3.5, np.inf])
    expected = np.diff(norm.cdf(edges, loc=2.0, scale=1.0))
    np.testing.assert_allclose(pri, expected, rtol=0, atol=1e-14)
    counts = allocate_counts(pri, 1000)
    assert int(np.argmax(counts)) == 2
    assert counts[0] <= counts[1] <= counts[2] >= counts[3] >= counts[4]


def test_default_profile_is_long_tailed():
    spec = GeneratorSpec()
    counts = allocate_counts(spec.resolved_priors(), spec.n_samples)
    assert counts.sum() == 2000
    assert 9.5 <= counts.max() / counts.min() <= 10.5


def test_generator_is_deterministic_and_checks_empty_classes():
    spec = GeneratorSpec(n_classes=5, n_samples=200, dim=8, seed=11)
    a, b = generate_longtail(spec), generate_longtail(spec)
    assert a.embeddings.tobytes() == b.embeddings.tobytes()
    np.testing.assert_array_equal(a.labels, b.labels)
    with pytest.raises(DataError, match="increase n_samples"):
        generate_longtail(GeneratorSpec(n_classes=5, n_samples=10, priors=[0.96, 0.01, 0.01, 0.01, 0.01], dim=5))


def test_generator_spec_validation():
    with pytest.raises(DataError):
        generate_longtail(GeneratorSpec(n_classes=3, priors=[0.5, 0.5, 0.5], dim=4))
    with pytest.raises(DataError):
        generate_longtail(GeneratorSpec(separation=0.0))
    with pytest.raises(DataError):
        generate_longtail(GeneratorSpec(n_classes=1, priors=[1.0]))


def test_zero_noise_clusters_sit_on_centres():
    ds = generate_longtail(GeneratorSpec(n_classes=3, n_samples=30, priors="uniform", dim=3, noise_std=0.0, separation=2.0))
    pooled = ds.pooled()
    for k in range(3):
        pts = pooled[ds.labels == k]
        assert np.all(pts == pts[0])
    centres = np.array([pooled[ds.labels == k][0] for k in range(3)])
    dist = np.linalg.norm(centres[:, None] - centres[None], axis=-1)
    np.testing.assert_allclose(dist[~np.eye(3, dtype=bool)], 2.0, rtol=1e-12)


def test_token_sequences_have_valid_lengths():
    ds = generate_longtail(GeneratorSpec(n_classes=3, n_samples=60, priors="uniform", dim=4, max_tokens=5, seed=2))
    assert ds.embeddings.shape == (60, 5, 4)
    assert ds.lengths.min() >= 1 and ds.lengths.max() <= 5
    for i in range(60):
        assert np.all(ds.embeddings[i, ds.lengths[i] :] == 0)


def test_save_load_round_trip(tmp_path):
    ds = generate_longtail(GeneratorSpec(n_classes=5, n_samples=50, dim=6, max_tokens=3, seed=4))
    path = tmp_path / "d.jsonl"
    save_dataset(ds, path)
    back = load_dataset(path)
    assert back.embeddings.tobytes() == ds.embeddings.tobytes()
    np.testing.assert_array_equal(back.labels, ds.labels)
    np.testing.assert_array_equal(back.lengths, ds.lengths)
    assert back.class_names == ds.class_names
    assert dataset_to_text(back) == path.read_text()


def test_load_small_file(tmp_path):
    path = tmp_path / "small.jsonl"
    path.write_text(
        '{"version": 1, "classes": 5, "dim": 2, "class_names": ["a","b","c","d","e"]}\n'
        '{"label": 0, "embedding": [[1.0, 2.0]]}\n'
        '{"label": 4, "embedding": [[0.5, 0.5], [1.5, -0.5]]}\n'
        '{"label": 2, "embedding": [[3, 4]]}\n'
    )
    ds = load_dataset(path)
    assert len(ds) == 3 and ds.n_classes == 5
    np.testing.assert_array_equal(ds.lengths, [1, 2, 1])
    np.testing.assert_allclose(ds.pooled()[1], [1.0, 0.0])


def test_load_rejects_out_of_range_label(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"version": 1, "classes": 5, "dim": 1}\n{"label": 1, "embedding": [[0.0]]}\n{"label": 7, "embedding": [[0.0]]}\n')
    with pytest.raises(DataError, match=r":3: label out of range: sample 1"):
        load_dataset(path)


def test_load_reports_malformed_line(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"version": 1, "classes": 2, "dim": 1}\n{"label": 1, "embedding": [[0.0]]}\n{"label": 1, "embed\n')
    with pytest.raises(DataError, match=r":3: malformed record"):
        load_dataset(path)


def _two_class(n_per=50):
    x = np.arange(2 * n_per, dtype=float)[:, None]
    return Dataset.from_vectors(x, np.repeat([0, 1], n_per), 2)


def test_split_sizes_and_stratification():
    tr, dv, te = split_dataset(_two_class(), (0.8, 0.1, 0.1), seed=1)
    assert (len(tr), len(dv), len(te)) == (80, 10, 10)
    for part, per in ((tr, 40), (dv, 5), (te, 5)):
        assert np.bincount(part.labels, minlength=2).tolist() == [per, per]


def test_split_is_deterministic_partition():
    ds = _two_class()
    a = split_dataset(ds, (0.6, 0.2, 0.2), seed=9)
    b = split_dataset(ds, (0.6, 0.2, 0.2), seed=9)
    ids = [p.embeddings[:, 0, 0].tolist() for p in a]
    assert ids == [p.embeddings[:, 0, 0].tolist() for p in b]
    union = sorted(sum(ids, []))
    assert union == ds.embeddings[:, 0, 0].tolist()
    assert not set(ids[0]) & set(ids[1]) and not set(ids[1]) & set(ids[2])


def test_split_warns_for_tiny_classes():
    ds = Dataset.from_vectors(np.arange(12.0)[:, None], [0] * 10 + [1, 1], 2)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        tr, dv, te = split_dataset(ds, (0.8, 0.1, 0.1), seed=0)
    assert any(issubclass(w.category, SplitWarning) for w in caught)
    assert np.sum(tr.labels == 1) == 2


def test_split_rejects_bad_fractions():
    with pytest.raises(DataError):
        split_dataset(_two_class(), (0.5, 0.5, 0.1))


def test_dataset_rejects_bad_labels():
    with pytest.raises(DataError, match="label out of range"):
        Dataset.from_vectors(np.zeros((2, 3)), [0, 5], 3)
