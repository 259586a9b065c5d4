import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from floodlens.textembed import (
    Architecture,
    ConfigurationError,
    EmbeddingVector,
    FloodinessLabel,
    JoinError,
    TokenEmbeddingSequence,
    TrainConfig,
    TransferHead,
    embed_corpus,
    embed_grid,
    encode_tokens,
    finetune_classifier,
    label_floodiness,
    load_embeddings,
    load_encoder,
    mean_pool,
    save_embeddings,
    tiny_encoder,
    train_transfer_head,
)
from floodlens.textembed.encoder import EncoderUnavailable
from floodlens.textembed.finetune import load_finetuned, save_finetuned
from floodlens.textembed.head import fit_head

from conftest import make_event, table_of


def toy_corpus(n=40, seed=0):
    """Grids whose text mentions rivers are labeled 1, mountains 0."""
    rng = np.random.default_rng(seed)
    corpus, labels = {}, []
    wet = ["river", "delta", "floodplain", "lowland", "wetland"]
    dry = ["mountain", "plateau", "arid", "desert", "highland"]
    for g in range(n):
        y = g % 2
        words = list(rng.choice(wet if y else dry, 4)) + list(rng.choice(["the", "region", "lies", "near"], 4))
        rng.shuffle(words)
        corpus[1000 + g] = " ".join(words)
        labels.append(FloodinessLabel(1000 + g, y))
    return corpus, labels


def test_encode_shapes(tiny):
    seq = encode_tokens(tiny, "The city lies on a river delta.")
    assert seq.matrix.shape[1] == tiny.hidden_size == 32
    assert seq.attention_mask.all()
    assert seq.matrix.dtype == np.float64


def test_encode_deterministic(tiny):
    a = encode_tokens(tiny, "river delta").matrix
    b = encode_tokens(tiny, "river delta").matrix
    c = encode_tokens(tiny_encoder(seed=0), "river delta").matrix
    assert np.array_equal(a, b) and np.array_equal(a, c)


def test_truncation(tiny):
    seq = encode_tokens(tiny, " ".join(["river"] * 500))
    assert seq.matrix.shape[0] == 128


def test_padding_does_not_leak(tiny):
    alone = tiny.hidden_states(["river"])[0]
    batched = tiny.hidden_states(["river", "a much longer text about the mountain plateau region"])[0]
    assert alone.matrix.shape == batched.matrix.shape
    np.testing.assert_allclose(alone.matrix, batched.matrix, atol=1e-5)


def test_layers_differ(tiny):
    a = encode_tokens(tiny, "river", "second_to_last").matrix
    b = encode_tokens(tiny, "river", "last").matrix
    assert not np.allclose(a, b)


def test_empty_text_rejected(tiny):
    with pytest.raises(ValueError):
        encode_tokens(tiny, "")


def test_mean_pool_examples():
    m = np.array([[1.0, 2.0], [3.0, 4.0], [100.0, 100.0]])
    seq = TokenEmbeddingSequence(m, np.array([True, True, False]))
    np.testing.assert_array_equal(mean_pool(seq), [2.0, 3.0])
    with pytest.raises(ValueError):
        mean_pool(TokenEmbeddingSequence(m, np.zeros(3, bool)))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 20), st.integers(0, 2**31 - 1))
def test_mean_pool_in_hull(t, seed):
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(t, 4))
    p = mean_pool(TokenEmbeddingSequence(m, np.ones(t, bool)))
    assert np.all(p >= m.min(0) - 1e-12) and np.all(p <= m.max(0) + 1e-12)


def test_pinned_checksum(tiny):
    assert load_encoder("tiny", expected_checksum=tiny.checksum()).checksum() == tiny.checksum()
    with pytest.raises(EncoderUnavailable):
        load_encoder("tiny", expected_checksum="0" * 64)
    with pytest.raises(EncoderUnavailable):
        load_encoder("/nonexistent/encoder/path")


def test_label_floodiness():
    t = table_of(
        *[make_event(f"a{i}", "flood", 2000 + i) for i in range(3)],
        *[make_event(f"b{i}", "flood", 2000 + i, lat=-5.5) for i in range(2)],
        *[make_event(f"c{i}", "storm", 2000 + i, lat=30.5) for i in range(5)],
    )
    grids = sorted({e.grid for e in t.events})
    got = {lb.grid: lb.label for lb in label_floodiness(t, grids)}
    assert got[t.events[0].grid] == 1
    assert got[t.events[3].grid] == 0
    assert got[t.events[5].grid] == 0


# transfer head


def _fd_check(placement):
    rng = np.random.default_rng(1)
    head = TransferHead.init(6, seed=2, dim=4, sigmoid_placement=placement)
    head.readout_weight = rng.normal(size=4)
    head.readout_bias = 0.3
    docs = [rng.normal(size=(3, 6)), rng.normal(size=(5, 6))]
    labels = np.array([1.0, 0.0])
    _, grads = head.loss_and_grad(docs, labels)
    eps = 1e-6
    for name, value in head.params().items():
        num = np.zeros_like(value)
        for idx in np.ndindex(value.shape):
            params = {k: v.copy() for k, v in head.params().items()}
            params[name][idx] += eps
            plus = TransferHead(**{**_fields(head), **_as_fields(params)}).loss_and_grad(docs, labels)[0]
            params[name][idx] -= 2 * eps
            minus = TransferHead(**{**_fields(head), **_as_fields(params)}).loss_and_grad(docs, labels)[0]
            num[idx] = (plus - minus) / (2 * eps)
        rel = np.linalg.norm(num - grads[name]) / max(np.linalg.norm(num), 1e-12)
        assert rel < 1e-4, (placement, name, rel)


def _fields(head):
    return {"sigmoid_placement": head.sigmoid_placement, **_as_fields(head.params())}


def _as_fields(params):
    return {
        "weight": params["weight"],
        "bias": params["bias"],
        "readout_weight": params["readout_weight"],
        "readout_bias": float(params["readout_bias"].ravel()[0]),
    }


@pytest.mark.parametrize("placement", ["per_token", "post_average"])
def test_head_gradient_matches_finite_differences(placement):
    _fd_check(placement)


def test_untrained_head_predicts_half():
    head = TransferHead.init(8, seed=0)
    loss, _ = head.loss_and_grad([np.ones((3, 8))], np.array([1.0]))
    assert loss == pytest.approx(np.log(2))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 30), st.integers(0, 2**31 - 1), st.sampled_from(["per_token", "post_average"]))
def test_head_embedding_in_unit_interval(t, seed, placement):
    rng = np.random.default_rng(seed)
    head = TransferHead.init(8, seed=seed % 100, sigmoid_placement=placement)
    e = head.embed(rng.normal(scale=10, size=(t, 8)))
    assert e.shape == (32,)
    assert np.all((e >= 0) & (e <= 1))


def test_fit_head_full_batch_loss_decreases():
    rng = np.random.default_rng(0)
    docs = [rng.normal(loc=(1 if i % 2 else -1), size=(rng.integers(2, 6), 8)) for i in range(20)]
    labels = np.array([i % 2 for i in range(20)], dtype=float)
    head = TransferHead.init(8, seed=0)
    log = fit_head(head, docs, labels, epochs=15, lr=1e-2, batch_size=20)
    assert all(b < a for a, b in zip(log.epoch_loss, log.epoch_loss[1:]))


def test_train_transfer_head_freezes_backbone(tiny):
    corpus, labels = toy_corpus()
    before = tiny.checksum()
    head = train_transfer_head(tiny, corpus, labels, TrainConfig(epochs=2, learning_rate=1e-2))
    assert tiny.checksum() == before
    assert head.weight.shape == (32, 32)
    assert len(head.train_log.epoch_loss) == 2


def test_transfer_head_learns_toy(tiny):
    corpus, labels = toy_corpus(60)
    head = train_transfer_head(tiny, corpus, labels, TrainConfig(epochs=30, learning_rate=3e-2))
    assert head.train_log.val_accuracy[-1] > 0.5


def test_head_save_load(tmp_path):
    head = TransferHead.init(8, seed=3, sigmoid_placement="post_average")
    head.readout_weight = np.arange(32.0)
    head.save(tmp_path / "head.npz")
    back = TransferHead.load(tmp_path / "head.npz")
    assert back.sigmoid_placement == "post_average"
    for k, v in head.params().items():
        assert np.array_equal(back.params()[k], v)


# fine-tuning


def test_finetune_zero_epochs_keeps_weights(tiny):
    corpus, labels = toy_corpus(10)
    tuned, log = finetune_classifier(tiny, corpus, labels, TrainConfig(epochs=0))
    assert tuned.checksum() == tiny.checksum()
    assert tuned.finetuned and not tiny.finetuned
    assert log.epoch_loss == []


def test_finetune_deterministic_and_nonmutating(tiny):
    corpus, labels = toy_corpus(16)
    before = tiny.checksum()
    cfg = TrainConfig(epochs=1, learning_rate=1e-3, batch_size=8, seed=4)
    a, _ = finetune_classifier(tiny, corpus, labels, cfg)
    b, _ = finetune_classifier(tiny, corpus, labels, cfg)
    assert tiny.checksum() == before
    assert a.checksum() == b.checksum() != before


def test_finetune_learns_toy(tiny):
    corpus, labels = toy_corpus(60)
    _, log = finetune_classifier(tiny, corpus, labels, TrainConfig(epochs=6, learning_rate=3e-3, batch_size=8))
    assert log.val_accuracy[-1] > 0.5
    assert log.epoch_loss[-1] < log.epoch_loss[0]


def test_finetune_save_load(tiny, tmp_path):
    corpus, labels = toy_corpus(8)
    tuned, log = finetune_classifier(tiny, corpus, labels, TrainConfig(epochs=1, learning_rate=1e-3))
    save_finetuned(tuned, tmp_path / "ft.pt", {"log": log})
    back = load_finetuned(tiny, tmp_path / "ft.pt")
    assert back.checksum() == tuned.checksum() and back.finetuned


def test_join_error(tiny):
    corpus, labels = toy_corpus(6)
    with pytest.raises(JoinError):
        finetune_classifier(tiny, corpus, labels + [FloodinessLabel(1, 1)], TrainConfig(epochs=0))
    with pytest.raises(JoinError):
        train_transfer_head(tiny, corpus, [], TrainConfig(epochs=0))


# embedding


def test_embedding_dimensions(tiny):
    corpus, labels = toy_corpus(6)
    tuned, _ = finetune_classifier(tiny, corpus, labels, TrainConfig(epochs=0))
    head = TransferHead.init(tiny.hidden_size)
    assert embed_grid("river", "pretrained_avg", tiny).values.shape == (32,)
    assert embed_grid("river", "finetuned_avg", tuned).values.shape == (32,)
    grids, values = embed_corpus(corpus, Architecture.TRANSFER_HEAD, tiny, head)
    assert list(grids) == sorted(corpus) and values.shape == (6, 32)


def test_pretrained_is_mean_of_second_to_last(tiny):
    seq = encode_tokens(tiny, "river basin")
    np.testing.assert_allclose(embed_grid("river basin", "pretrained_avg", tiny).values, seq.matrix.mean(0))


def test_architecture_state_mismatch(tiny):
    corpus, labels = toy_corpus(6)
    tuned, _ = finetune_classifier(tiny, corpus, labels, TrainConfig(epochs=0))
    head = TransferHead.init(tiny.hidden_size)
    with pytest.raises(ConfigurationError):
        embed_grid("x", "transfer_head", tiny)
    with pytest.raises(ConfigurationError):
        embed_grid("x", "transfer_head", tuned, head)
    with pytest.raises(ConfigurationError):
        embed_grid("x", "pretrained_avg", tuned)
    with pytest.raises(ConfigurationError):
        embed_grid("x", "finetuned_avg", tiny)
    with pytest.raises(ConfigurationError):
        embed_grid("x", "pretrained_avg", tiny, head)
    with pytest.raises(ConfigurationError):
        embed_grid("x", "transfer_head", tiny, TransferHead.init(7))


def test_embedding_vector_finite():
    with pytest.raises(ValueError):
        EmbeddingVector(np.array([1.0, np.nan]), Architecture.PRETRAINED_AVG)


def test_embedding_store_round_trip(tmp_path, tiny):
    corpus, _ = toy_corpus(5)
    grids, values = embed_corpus(corpus, "pretrained_avg", tiny)
    save_embeddings(tmp_path / "e.npz", grids, values, {"architecture": "pretrained_avg"})
    got, header = load_embeddings(tmp_path / "e.npz")
    assert header == {"architecture": "pretrained_avg", "dimension": 32}
    for g, v in zip(grids, values):
        assert np.array_equal(got[int(g)], v)
