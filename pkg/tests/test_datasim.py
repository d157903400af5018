"""Corpus generation: quotas, determinism, noise models, file format."""
import numpy as np
import pytest

from dualfuse.datasim import (
    CORPUS_MAGIC,
    Corpus,
    CorpusSpec,
    clean_twin_spec,
    degrade,
    generate,
    inject_noise,
    load_corpus,
    mask_missing,
    plan_label_runs,
    save_corpus,
)


def small_spec(**kw):
    defaults = dict(n_samples=200, seed=42)
    defaults.update(kw)
    return CorpusSpec(**defaults)


def test_clean_spec_has_no_noise_or_missing():
    corpus = generate(small_spec(noise_rate=0.0, missing_rate=0.0))
    assert (corpus.noise_levels == 0).all()
    assert corpus.present.all()


def test_noise_quota_is_exact():
    corpus = generate(CorpusSpec(n_samples=1000, noise_rate=0.5, seed=3))
    noisy_samples = (corpus.noise_levels > 0).any(axis=1).sum()
    assert noisy_samples == 500


def test_generation_is_deterministic():
    spec = small_spec(noise_rate=0.3, missing_rate=0.2)
    a = generate(spec)
    b = generate(small_spec(noise_rate=0.3, missing_rate=0.2))
    assert a.labels.tobytes() == b.labels.tobytes()
    for wa, wb in zip(a.windows, b.windows):
        assert wa.tobytes() == wb.tobytes()
    assert a.present.tobytes() == b.present.tobytes()
    assert a.noise_levels.tobytes() == b.noise_levels.tobytes()


def test_different_seed_changes_data():
    a = generate(small_spec(seed=1))
    b = generate(small_spec(seed=2))
    assert a.windows[0].tobytes() != b.windows[0].tobytes()


def test_label_balance_within_one():
    for n in (200, 1001, 997):
        corpus = generate(small_spec(n_samples=n))
        counts = np.bincount(corpus.labels, minlength=3)
        target = n / 3
        assert all(abs(c - target) <= 1 for c in counts), counts


def test_plan_label_runs_exact_quota():
    rng = np.random.default_rng(0)
    runs = plan_label_runs(1001, 3, 10, rng)
    counts = {}
    for cls, size in runs:
        counts[cls] = counts.get(cls, 0) + size
    assert sorted(counts.values()) == [333, 334, 334]


def test_history_ids_front_padded():
    corpus = generate(small_spec())
    t = corpus.spec.history
    assert corpus.history_ids(0) == [0] * t
    assert corpus.history_ids(3) == [0, 0, 0, 0, 0, 0, 1, 2][-t:]
    assert corpus.history_ids(50) == list(range(50 - t, 50))


def test_zero_window_or_channels_fails():
    with pytest.raises(ValueError, match="window"):
        small_spec().modalities[0].__class__("bad", window=0, channels=2).validate()
    with pytest.raises(ValueError, match="channel"):
        small_spec().modalities[0].__class__("bad", window=8, channels=0).validate()


# -- inject_noise -------------------------------------------------------------

def test_inject_zero_magnitude_is_identity():
    rng = np.random.default_rng(0)
    win = rng.standard_normal((32, 2))
    for kind in ("additive-gaussian", "occlusion-zeroing", "baseline-wander"):
        out = inject_noise(win, kind, 0.0, rng)
        np.testing.assert_array_equal(out, win)


def test_inject_negative_magnitude_fails():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError, match="nonnegative"):
        inject_noise(np.zeros((8, 1)), "additive-gaussian", -1.0, rng)


def test_additive_gaussian_matches_requested_sigma():
    # law of large numbers: sample std within 10% on a zero signal
    rng = np.random.default_rng(7)
    win = np.zeros((1000, 2))
    out = inject_noise(win, "additive-gaussian", 1.5, rng)
    assert abs(out.std() - 1.5) / 1.5 < 0.10


def test_occlusion_zeroes_contiguous_span():
    rng = np.random.default_rng(1)
    win = np.ones((50, 3))
    out = inject_noise(win, "occlusion-zeroing", 0.5, rng)
    zero_rows = np.flatnonzero((out == 0).all(axis=1))
    assert len(zero_rows) >= 10  # at least 20% of 50 time steps
    assert len(zero_rows) <= 30  # at most 60%
    assert np.array_equal(zero_rows, np.arange(zero_rows[0], zero_rows[-1] + 1))


def test_baseline_wander_adds_bounded_drift():
    rng = np.random.default_rng(2)
    win = np.zeros((64, 2))
    out = inject_noise(win, "baseline-wander", 0.8, rng)
    assert np.abs(out).max() <= 0.8 + 1e-12
    assert np.abs(out).max() > 0.1


# -- mask_missing --------------------------------------------------------------

def test_mask_rate_zero_changes_nothing():
    corpus = generate(small_spec())
    before = corpus.windows[1].tobytes()
    mask_missing(corpus, 1, 0.0, seed=0)
    assert corpus.present.all()
    assert corpus.windows[1].tobytes() == before


def test_mask_rate_one_masks_everything():
    corpus = generate(small_spec())
    mask_missing(corpus, 1, 1.0, seed=0)
    assert not corpus.present[:, 1].any()
    assert (corpus.windows[1] == 0).all()


def test_mask_quota_exact():
    corpus = generate(small_spec())
    mask_missing(corpus, 0, 0.5, seed=0)
    assert (~corpus.present[:, 0]).sum() == 100


def test_mask_unknown_modality_fails():
    corpus = generate(small_spec())
    with pytest.raises(ValueError, match="modality"):
        mask_missing(corpus, 9, 0.5, seed=0)


def test_absent_windows_are_zeroed():
    corpus = generate(small_spec(missing_rate=0.4))
    absent = ~corpus.present[:, corpus.spec.missing_modality]
    assert (corpus.windows[corpus.spec.missing_modality][absent] == 0).all()


# -- clean twin / degradation ---------------------------------------------------

def test_clean_twin_shares_base_signals():
    spec = small_spec(noise_rate=0.5, missing_rate=0.3)
    noisy = generate(spec)
    clean = generate(clean_twin_spec(spec))
    assert clean.present.all()
    assert (clean.noise_levels == 0).all()
    np.testing.assert_array_equal(clean.labels, noisy.labels)
    untouched = (noisy.noise_levels[:, 0] == 0) & noisy.present[:, 0]
    np.testing.assert_array_equal(
        clean.windows[0][untouched], noisy.windows[0][untouched]
    )


def test_degrade_is_cell_deterministic():
    clean = generate(small_spec(noise_rate=0.0, missing_rate=0.0))
    a = degrade(clean, 0.5, 0.5, 1, seed=123)
    b = degrade(clean, 0.5, 0.5, 1, seed=123)
    c = degrade(clean, 0.5, 0.5, 1, seed=124)
    for wa, wb in zip(a.windows, b.windows):
        assert wa.tobytes() == wb.tobytes()
    assert a.windows[1].tobytes() != c.windows[1].tobytes()
    # the source corpus is untouched
    assert clean.present.all()


def test_split_is_block_aligned():
    corpus = generate(small_spec())
    train_idx, test_idx = corpus.split(0.8)
    assert len(train_idx) + len(test_idx) == corpus.n
    assert len(train_idx) % corpus.spec.run_len == 0


def test_subset_reindexes_cleanly():
    corpus = generate(small_spec())
    sub = corpus.subset(np.arange(50, 100))
    assert sub.n == 50
    np.testing.assert_array_equal(sub.labels, corpus.labels[50:100])


# -- corpus file io --------------------------------------------------------------

def test_corpus_roundtrip(tmp_path):
    corpus = generate(small_spec(noise_rate=0.4, missing_rate=0.2))
    path = tmp_path / "corpus.bin"
    save_corpus(path, corpus)
    assert path.read_bytes().startswith(CORPUS_MAGIC)
    loaded = load_corpus(path)
    np.testing.assert_array_equal(loaded.labels, corpus.labels)
    np.testing.assert_array_equal(loaded.present, corpus.present)
    np.testing.assert_array_equal(loaded.noise_levels, corpus.noise_levels)
    np.testing.assert_array_equal(loaded.fluct_flags, corpus.fluct_flags)
    for wa, wb in zip(loaded.windows, corpus.windows):
        np.testing.assert_array_equal(wa, wb)
    assert loaded.spec.n_classes == corpus.spec.n_classes


def test_corpus_file_bytes_deterministic(tmp_path):
    spec = small_spec(noise_rate=0.3)
    p1, p2 = tmp_path / "a.bin", tmp_path / "b.bin"
    save_corpus(p1, generate(spec))
    save_corpus(p2, generate(small_spec(noise_rate=0.3)))
    assert p1.read_bytes() == p2.read_bytes()


def test_corpus_bad_magic(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"WRONG1" + b"\x00" * 8)
    with pytest.raises(ValueError, match="magic"):
        load_corpus(path)


# -- learnability ---------------------------------------------------------------

def test_linear_classifier_fits_clean_data():
    # the synthetic task must be learnable or downstream checks are vacuous
    from sklearn.linear_model import LogisticRegression

    corpus = generate(CorpusSpec(n_samples=600, noise_rate=0.0, missing_rate=0.0, seed=5))
    feats = np.concatenate(
        [w.reshape(corpus.n, -1) for w in corpus.windows], axis=1
    )
    clf = LogisticRegression(max_iter=2000)
    clf.fit(feats, corpus.labels)
    assert clf.score(feats, corpus.labels) >= 0.90


def test_fluctuation_flags_only_on_abnormal_runs():
    corpus = generate(small_spec(fluctuation_rate=1.0))
    flagged = corpus.labels[corpus.fluct_flags]
    assert len(flagged) > 0
    assert (flagged != 0).all()
