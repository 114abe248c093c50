import numpy as np
import pytest

from conftest import make_tiny_model
from src.model.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from src.model.encoder import attention_layer, attention_mask, init_layer_params
from src.model.recommender import PAD, ComplementaryTransitionRecommender, ModelConfig, pad_prefixes
from src.model.transition import init_transition_prior, standardize, transition_score, transition_scores
from src.numcore import ShapeError, Tensor, ops

A, B = 0, 1


# --- Prior de transition ---

def _prior_fixture(weight=0.8):
    codes = np.array([[1, 2], [3, 2]])
    return init_transition_prior({(A, B): weight, (B, A): weight}, codes, 2, 4, epsilon=1.0)


def test_prior_on_two_items():
    T = _prior_fixture()
    assert T[0, 1, 3] == pytest.approx(np.log(1.8))
    assert T[0, 3, 1] == pytest.approx(np.log(1.8))
    assert T[1, 2, 2] == pytest.approx(np.log(2.6))
    untouched = np.ones_like(T, dtype=bool)
    untouched[0, 1, 3] = untouched[0, 3, 1] = untouched[1, 2, 2] = False
    np.testing.assert_array_equal(T[untouched], 0.0)


def test_prior_without_relations_is_log_epsilon():
    T = init_transition_prior({}, np.zeros((3, 2), dtype=int), 2, 4, epsilon=0.5)
    np.testing.assert_allclose(T, np.log(0.5))


def test_prior_grows_with_weights():
    low, high = _prior_fixture(0.4), _prior_fixture(0.8)
    touched = low != 0.0
    assert (high[touched] > low[touched]).all()


def test_prior_is_symmetric_per_subspace():
    rng = np.random.default_rng(0)
    codes = rng.integers(0, 5, size=(10, 3))
    relations = {(int(i), int(j)): float(rng.random()) for i, j in rng.integers(0, 10, size=(15, 2)) if i != j}
    T = init_transition_prior(relations, codes, 3, 5)
    np.testing.assert_allclose(T, np.transpose(T, (0, 2, 1)))


def test_prior_rejects_non_positive_epsilon():
    with pytest.raises(ValueError):
        init_transition_prior({}, np.zeros((1, 1), dtype=int), 1, 2, epsilon=0.0)


# --- Standardisation et score de transition ---

def test_standardize_examples():
    T = Tensor(np.stack([np.full((2, 2), 3.0), np.array([[0.0, 2.0], [2.0, 0.0]])]))
    P = standardize(T).data
    np.testing.assert_array_equal(P[0], 0.0)
    np.testing.assert_allclose(P[1], [[-1.0, 1.0], [1.0, -1.0]])
    np.testing.assert_allclose(standardize(Tensor(4.0 * T.data + 7.0)).data, P, atol=1e-12)


def test_transition_score_examples():
    codes = np.array([[0, 1], [1, 0]])
    P = np.stack([np.full((2, 2), 2.0), np.zeros((2, 2))])
    assert transition_score(0, 1, codes, P, np.array([0.5, 0.5])) == pytest.approx(1.0)

    omega = ops.softmax(Tensor(np.zeros(3)))
    P3 = Tensor(np.full((3, 2, 2), -0.4))
    out = transition_scores(P3, omega, np.array([[0, 1, 1]]), np.array([[1, 1, 0]]))
    np.testing.assert_allclose(out.data, [-0.4])


@pytest.mark.parametrize("seed", range(5))
def test_transition_scores_match_scalar_loop(seed):
    rng = np.random.default_rng(seed)
    D, C, N = 3, 4, 7
    P = rng.normal(size=(D, C, C))
    omega = rng.dirichlet(np.ones(D))
    codes = rng.integers(0, C, size=(N, D))
    src, dst = rng.integers(0, N, size=(2, 5, 6))
    got = transition_scores(Tensor(P), Tensor(omega), codes[src], codes[dst]).data
    assert got.shape == (5, 6)
    for a in range(5):
        for b in range(6):
            expected = sum(omega[k] * P[k, codes[src[a, b], k], codes[dst[a, b], k]] for k in range(D))
            assert got[a, b] == pytest.approx(expected)


def test_transition_scores_depend_only_on_codes():
    model = make_tiny_model()
    perm = np.random.default_rng(1).permutation(model.config.num_items)
    scores = model.pair_transition_scores(np.arange(6), np.arange(6)[::-1]).data
    permuted = make_tiny_model()
    permuted.codes = model.codes[perm]
    inverse = np.argsort(perm)
    again = permuted.pair_transition_scores(inverse, inverse[::-1]).data
    np.testing.assert_allclose(again, scores)


# --- Représentations d'items ---

def test_zero_weights_give_zero_representations(tiny_model):
    for p in tiny_model.parameters():
        p.data[...] = 0.0
    np.testing.assert_array_equal(tiny_model.item_representations().data, 0.0)


def test_subspace_order_matters(tiny_model):
    before = tiny_model.item_representations().data
    tiny_model.codes = tiny_model.codes[:, ::-1].copy()
    after = tiny_model.item_representations().data
    differs = tiny_model.codes[:, 0] != tiny_model.codes[:, 1]
    assert differs.any()
    assert not np.allclose(before[differs], after[differs])


def test_mean_pooling_without_alignment():
    model = make_tiny_model(use_alignment=False)
    h = model.item_representations().data
    table = model.params["code_embeddings"].data
    C = model.config.codebook_size
    for i in range(model.config.num_items):
        e = np.stack([table[k * C + model.codes[i, k]] for k in range(model.config.num_subspaces)])
        z = model.text[i] @ model.params["w_proj"].data
        np.testing.assert_allclose(h[i], e.mean(axis=0) + z)


def test_model_without_codes_has_no_transition_tensor():
    model = make_tiny_model(use_codes=False)
    assert "transition" not in model.params and "code_embeddings" not in model.params
    assert model.transition_bias(np.array([[0, 1]])) is None
    with pytest.raises(ShapeError):
        model.transition_view()


def test_invalid_inputs_are_rejected():
    config = ModelConfig(num_items=3, d_text=2, num_subspaces=2, codebook_size=4, hidden=4, heads=2)
    with pytest.raises(ShapeError):
        ComplementaryTransitionRecommender(config, np.array([[0, 4]] * 3), np.zeros((3, 2)))
    with pytest.raises(ShapeError):
        ComplementaryTransitionRecommender(config, np.zeros((3, 2), dtype=int), np.zeros((3, 5)))
    model = ComplementaryTransitionRecommender(config, np.zeros((3, 2), dtype=int), np.zeros((3, 2)))
    with pytest.raises(ShapeError):
        model.item_representations(np.array([3]))


# --- Attention ---

def _layer(d=4, heads=1, ffn=4, seed=0):
    return init_layer_params("l", d, ffn, 0.3, np.random.default_rng(seed))


def test_single_visible_position_attends_to_itself():
    params = _layer()
    x = Tensor(np.random.default_rng(0).normal(size=(1, 3, 4)))
    attentions = []
    bias = Tensor(np.random.default_rng(1).normal(size=(1, 1, 3, 3)))
    attention_layer(x, params, "l", 1, attention_mask(np.ones((1, 3), dtype=bool)), bias=bias,
                    attentions=attentions)
    np.testing.assert_allclose(attentions[0][0, 0, 0], [1.0, 0.0, 0.0])


def test_transition_bias_shifts_attention():
    params = _layer()
    params["l.w_q"].data[...] = 0.0
    x = Tensor(np.random.default_rng(0).normal(size=(1, 2, 4)))
    bias = Tensor(np.array([[[[0.0, 0.0], [np.log(3.0), 0.0]]]]))
    attentions = []
    attention_layer(x, params, "l", 1, attention_mask(np.ones((1, 2), dtype=bool)), bias=bias,
                    attentions=attentions)
    np.testing.assert_allclose(attentions[0][0, 0, 1], [0.75, 0.25])


def test_zero_bias_is_bitwise_standard_attention():
    params = _layer(d=6, heads=2, ffn=8)
    x = Tensor(np.random.default_rng(2).normal(size=(2, 4, 6)))
    mask = attention_mask(np.array([[True] * 4, [False, True, True, True]]))
    plain = attention_layer(x, params, "l", 2, mask, bias=None).data
    zero = attention_layer(x, params, "l", 2, mask, bias=ops.scale(Tensor(np.ones((2, 1, 4, 4))), 0.0)).data
    np.testing.assert_array_equal(plain, zero)


def test_lambda_zero_drops_the_bias():
    model = make_tiny_model(lambda_=0.0)
    assert model.transition_bias(np.array([[0, 1, 2]])) is None


@pytest.mark.parametrize("seed", range(50))
def test_attention_rows_are_distributions(seed):
    rng = np.random.default_rng(seed)
    heads = int(rng.integers(1, 4))
    d = heads * int(rng.integers(1, 4))
    B, n = int(rng.integers(1, 4)), int(rng.integers(1, 7))
    valid = np.ones((B, n), dtype=bool)
    for row in range(B):
        valid[row, :int(rng.integers(0, n))] = False
    params = _layer(d=d, heads=heads, ffn=5, seed=seed)
    attentions = []
    x = Tensor(rng.normal(size=(B, n, d)))
    bias = Tensor(rng.normal(size=(B, 1, n, n)))
    attention_layer(x, params, "l", heads, attention_mask(valid), bias=bias, attentions=attentions)
    alpha = attentions[0]
    assert alpha.shape == (B, heads, n, n)
    assert (alpha >= 0).all()
    allowed = attention_mask(valid)
    np.testing.assert_array_equal(alpha[~np.broadcast_to(allowed, alpha.shape)], 0.0)
    sums = alpha.sum(axis=-1)
    np.testing.assert_allclose(sums[np.broadcast_to(valid[:, None, :], sums.shape)], 1.0, atol=1e-6)


def test_attention_is_causal():
    rng = np.random.default_rng(3)
    params = _layer(d=4, heads=2, ffn=6)
    mask = attention_mask(np.ones((1, 5), dtype=bool))
    x = rng.normal(size=(1, 5, 4))
    changed = x.copy()
    changed[:, 3:] += rng.normal(size=(1, 2, 4))
    out = attention_layer(Tensor(x), params, "l", 2, mask).data
    out_changed = attention_layer(Tensor(changed), params, "l", 2, mask).data
    np.testing.assert_allclose(out[:, :3], out_changed[:, :3], atol=1e-12)
    assert not np.allclose(out[:, 3:], out_changed[:, 3:])


# --- Encodage des séquences ---

def test_pad_prefixes_right_aligns_and_truncates():
    batch = pad_prefixes([[1, 2, 3, 4, 5], [7]], max_len=3)
    np.testing.assert_array_equal(batch, [[3, 4, 5], [PAD, PAD, 7]])
    with pytest.raises(ShapeError):
        pad_prefixes([[]], 3)


def test_zero_layers_returns_last_representation_plus_position():
    model = make_tiny_model(layers=0)
    s = model.encode_sequence([2, 4, 1]).data
    h = model.item_representations().data
    np.testing.assert_allclose(s, h[1] + model.params["positions"].data[-1])


def test_left_padding_does_not_change_the_encoding(tiny_model):
    alone = tiny_model.encode_sequences(pad_prefixes([[3, 1]], 4)).data
    batch = tiny_model.encode_sequences(pad_prefixes([[3, 1], [0, 2, 5, 4]], 4)).data
    np.testing.assert_allclose(batch[0], alone[0], atol=1e-10)


def test_encode_rejects_empty_and_overlong_prefixes(tiny_model):
    with pytest.raises(ShapeError):
        tiny_model.encode_sequences(np.array([[0, PAD]]))
    with pytest.raises(ShapeError):
        tiny_model.encode_sequences(np.zeros((1, 5), dtype=int))


def test_dropout_only_in_training():
    model = make_tiny_model(dropout=0.5)
    first = model.encode_sequence([1, 2]).data
    np.testing.assert_array_equal(model.encode_sequence([1, 2]).data, first)
    model.train()
    assert not np.allclose(model.encode_sequence([1, 2]).data, first)


# --- Score des candidats ---

def test_score_candidates():
    reps = Tensor(np.random.default_rng(0).normal(size=(3, 4)))
    zero = ComplementaryTransitionRecommender.score_candidates(Tensor(np.zeros(4)), reps, 0.07)
    np.testing.assert_array_equal(zero.data, 0.0)

    s = Tensor(np.random.default_rng(1).normal(size=4))
    logits = ComplementaryTransitionRecommender.score_candidates(s, reps, 0.07).data
    for v in range(3):
        assert logits[v] == pytest.approx(sum(s.data[k] * reps.data[v, k] for k in range(4)) / 0.07)
    halved = ComplementaryTransitionRecommender.score_candidates(s, reps, 0.035).data
    np.testing.assert_allclose(halved, 2.0 * logits)
    assert np.argmax(halved) == np.argmax(logits)
    with pytest.raises(ValueError):
        ComplementaryTransitionRecommender.score_candidates(s, reps, 0.0)


# --- Checkpoint ---

def test_checkpoint_round_trip(tmp_path, tiny_model):
    path = str(tmp_path / "model.ckpt")
    save_checkpoint(path, tiny_model.state_dict(), tiny_model.config.to_dict(), {"best_epoch": 3})
    state, config, metadata = load_checkpoint(path)
    assert config == tiny_model.config.to_dict()
    assert metadata == {"best_epoch": 3}
    assert list(state) == list(tiny_model.params)
    for name, value in state.items():
        np.testing.assert_allclose(value, tiny_model.params[name].data, rtol=1e-6, atol=1e-7)

    restored = make_tiny_model(seed=5)
    restored.codes, restored.text = tiny_model.codes, tiny_model.text
    restored.load_state_dict(state)
    save_checkpoint(str(tmp_path / "again.ckpt"), restored.state_dict(), config, metadata)
    assert (tmp_path / "again.ckpt").read_bytes() == (tmp_path / "model.ckpt").read_bytes()


def test_checkpoint_errors(tmp_path, tiny_model):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"NOPE" + b"\x00" * 8)
    with pytest.raises(CheckpointError):
        load_checkpoint(str(bad))
    path = str(tmp_path / "model.ckpt")
    save_checkpoint(path, tiny_model.state_dict(), tiny_model.config.to_dict())
    truncated = tmp_path / "truncated.ckpt"
    truncated.write_bytes(open(path, "rb").read()[:-4])
    with pytest.raises(CheckpointError):
        load_checkpoint(str(truncated))
    with pytest.raises(ShapeError):
        make_tiny_model(layers=2).load_state_dict(tiny_model.state_dict())
