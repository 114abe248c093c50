from itertools import product

import numpy as np
import pytest

from src.quantization.formats import (
    QuantizationError,
    SemanticCodebook,
    read_codebook,
    read_codes,
    read_embeddings,
    write_codebook,
    write_codes,
    write_embeddings,
)
from src.quantization.opq import assign_nearest, encode, kmeans, pca_reduce, quantization_error, reconstruct, train_opq
from src.quantization.text_embedder import mock_embed


def _pairwise(x):
    return np.linalg.norm(x[:, None, :] - x[None, :, :], axis=-1)


# --- ACP ---

def test_pca_full_rank_is_an_isometry():
    raw = np.random.default_rng(0).normal(size=(30, 4))
    reduced = pca_reduce(raw, 4)
    np.testing.assert_allclose(_pairwise(reduced), _pairwise(raw), atol=1e-6)


def test_pca_on_a_line(caplog):
    t = np.arange(6.0)
    raw = np.stack([t, t], axis=1)
    one = pca_reduce(raw, 1)
    np.testing.assert_allclose(one[:, 0], np.sqrt(2.0) * (t - t.mean()), atol=1e-9)
    with caplog.at_level("WARNING"):
        two = pca_reduce(raw, 2)
    np.testing.assert_allclose(two[:, 1], 0.0, atol=1e-12)
    assert "rang 1" in caplog.text


def test_pca_of_identical_rows_is_zero():
    assert not pca_reduce(np.ones((5, 3)), 2).any()


def test_pca_components_are_ordered_and_sign_fixed():
    rng = np.random.default_rng(1)
    raw = rng.normal(size=(200, 5)) * np.array([5.0, 3.0, 2.0, 1.0, 0.5])
    reduced = pca_reduce(raw, 3)
    variances = reduced.var(axis=0)
    assert variances[0] > variances[1] > variances[2]
    np.testing.assert_array_equal(reduced, pca_reduce(raw, 3))
    flipped = pca_reduce(-raw, 3)
    np.testing.assert_allclose(np.abs(flipped), np.abs(reduced), atol=1e-9)


def test_pca_rejects_too_many_dimensions():
    with pytest.raises(QuantizationError):
        pca_reduce(np.ones((4, 2)), 3)


# --- k-means et OPQ ---

def test_kmeans_reseeds_empty_clusters():
    points = np.array([[0.0], [0.0], [10.0], [11.0]])
    init = np.array([[0.0], [10.5], [100.0]])
    centroids, codes, error = kmeans(points, 3, 10, np.random.default_rng(0), init=init)
    assert np.isfinite(centroids).all()
    assert len(set(codes.tolist())) == 3
    assert error <= 0.25 + 1e-12


def test_single_subspace_without_rotation_is_plain_kmeans():
    base = np.array([[0.0, 0.0], [5.0, 0.0], [0.0, 5.0], [5.0, 5.0]])
    X = np.repeat(base, 3, axis=0)
    codebook = train_opq(X, 1, 4, iters=3, seed=0, update_rotation=False)
    np.testing.assert_array_equal(codebook.rotation, np.eye(2))
    assert codebook.error_history[-1] == pytest.approx(0.0)
    assert quantization_error(X, encode(X, codebook), codebook) == pytest.approx(0.0)


@pytest.mark.parametrize("seed", range(10))
def test_opq_error_is_monotone_and_rotation_orthogonal(seed):
    X = np.random.default_rng(seed).normal(size=(512, 16))
    deviations = []

    def check_rotation(iteration, rotation, error):
        deviations.append(np.abs(rotation.T @ rotation - np.eye(16)).max())

    codebook = train_opq(X, 4, 8, iters=5, seed=seed, kmeans_iters=10, tol=0.0, on_iteration=check_rotation)
    history = codebook.error_history
    assert len(history) >= 2
    for before, after in zip(history, history[1:]):
        assert after <= before * (1.0 + 1e-9)
    assert max(deviations) < 1e-6
    assert np.abs(codebook.rotation.T @ codebook.rotation - np.eye(16)).max() < 1e-6


def test_reconstruction_error_matches_kmeans_objective():
    X = np.random.default_rng(3).normal(size=(256, 8))
    codebook = train_opq(X, 2, 8, iters=4, seed=3, tol=0.0)
    codes = encode(X, codebook)
    assert quantization_error(X, codes, codebook) == pytest.approx(codebook.error_history[-1], rel=1e-9)


def test_encoding_is_idempotent_on_reconstructions():
    X = np.random.default_rng(4).normal(size=(128, 8))
    codebook = train_opq(X, 4, 4, iters=3, seed=4)
    codes = encode(X, codebook)
    np.testing.assert_array_equal(encode(reconstruct(codes, codebook), codebook), codes)


def test_fixed_seed_is_bit_identical():
    X = np.random.default_rng(5).normal(size=(100, 8))
    a = train_opq(X, 2, 4, iters=3, seed=11)
    b = train_opq(X, 2, 4, iters=3, seed=11)
    np.testing.assert_array_equal(a.rotation, b.rotation)
    for ca, cb in zip(a.codebooks, b.codebooks):
        np.testing.assert_array_equal(ca, cb)
    np.testing.assert_array_equal(encode(X, a), encode(X, b))


def test_train_opq_preconditions():
    X = np.zeros((3, 4))
    with pytest.raises(QuantizationError):
        train_opq(X, 3, 2)
    with pytest.raises(QuantizationError):
        train_opq(X, 2, 4)
    with pytest.raises(QuantizationError):
        train_opq(X, 2, 2, iters=0)


# --- Encodage ---

def _identity_codebook(codebooks):
    d = sum(c.shape[1] for c in codebooks)
    return SemanticCodebook(rotation=np.eye(d), codebooks=[np.asarray(c, dtype=float) for c in codebooks])


def test_encode_item_equal_to_a_centroid():
    centroids = np.arange(16.0).reshape(8, 2)
    codebook = _identity_codebook([centroids, centroids])
    item = np.concatenate([centroids[5], centroids[5]])[None, :]
    np.testing.assert_array_equal(encode(item, codebook), [[5, 5]])


def test_encode_ties_pick_lowest_index():
    centroids = np.zeros((8, 1))
    centroids[2, 0], centroids[7, 0] = -1.0, 1.0
    centroids[[0, 1, 3, 4, 5, 6], 0] = 50.0
    codebook = _identity_codebook([centroids])
    np.testing.assert_array_equal(encode(np.zeros((1, 1)), codebook), [[2]])


def test_encode_matches_exhaustive_search():
    rng = np.random.default_rng(6)
    codebook = _identity_codebook([rng.normal(size=(2, 2)), rng.normal(size=(2, 2))])
    X = rng.normal(size=(40, 4))
    codes = encode(X, codebook)
    for row, x in enumerate(X):
        best = min(product(range(2), range(2)),
                   key=lambda c: ((x - np.concatenate([codebook.codebooks[0][c[0]], codebook.codebooks[1][c[1]]])) ** 2).sum())
        assert tuple(codes[row]) == best


def test_assign_nearest_returns_squared_distances():
    codes, dists = assign_nearest(np.array([[0.0, 0.0], [3.0, 4.0]]), np.array([[0.0, 0.0], [3.0, 0.0]]))
    np.testing.assert_array_equal(codes, [0, 1])
    np.testing.assert_allclose(dists, [0.0, 16.0])


# --- Fichiers binaires ---

def test_binary_files(tmp_path):
    matrix = np.random.default_rng(7).normal(size=(5, 3))
    write_embeddings(str(tmp_path / "x.emb"), matrix)
    blob = (tmp_path / "x.emb").read_bytes()
    assert blob[:4] == b"EMB1" and len(blob) == 12 + 5 * 3 * 4
    np.testing.assert_allclose(read_embeddings(str(tmp_path / "x.emb")), matrix, rtol=1e-6)

    codes = np.array([[0, 3], [2, 1]])
    write_codes(str(tmp_path / "c.sid"), codes, 4)
    loaded, size = read_codes(str(tmp_path / "c.sid"))
    np.testing.assert_array_equal(loaded, codes)
    assert size == 4
    with pytest.raises(QuantizationError):
        write_codes(str(tmp_path / "bad.sid"), codes, 3)

    codebook = train_opq(np.random.default_rng(8).normal(size=(20, 4)), 2, 3, iters=2, seed=0)
    write_codebook(str(tmp_path / "cb.opq"), codebook)
    loaded_cb = read_codebook(str(tmp_path / "cb.opq"))
    assert (loaded_cb.d_text, loaded_cb.num_subspaces, loaded_cb.codebook_size) == (4, 2, 3)
    np.testing.assert_allclose(loaded_cb.rotation, codebook.rotation, atol=1e-6)


def test_reading_a_file_with_the_wrong_magic_fails(tmp_path):
    write_codes(str(tmp_path / "c.sid"), np.zeros((1, 1), dtype=int), 2)
    with pytest.raises(QuantizationError):
        read_embeddings(str(tmp_path / "c.sid"))


def test_mock_embedder_is_deterministic_and_groups_items():
    texts = ["Tent. Outdoors.", "Stakes. Garden.", "Mug. Kitchen."]
    groups = ["bundle-001", "bundle-001", "bundle-002"]
    emb = mock_embed(texts, 64, seed=3, groups=groups, group_weight=0.8)
    np.testing.assert_allclose(np.linalg.norm(emb, axis=1), 1.0)
    np.testing.assert_array_equal(emb, mock_embed(texts, 64, seed=3, groups=groups, group_weight=0.8))
    assert emb[0] @ emb[1] > emb[0] @ emb[2]
    assert not np.allclose(mock_embed(texts, 64, seed=4), mock_embed(texts, 64, seed=3))
