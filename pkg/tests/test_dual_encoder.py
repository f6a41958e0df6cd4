import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctrl_retrieve.dual_encoder import (
    PASSAGE,
    QUESTION,
    DualEncoder,
    EncoderParams,
    embed,
    encode_batch,
    init_dual_encoder,
    init_encoder,
    score,
)
from ctrl_retrieve.errors import DimensionMismatch, EmptySequence, ValidationError
from ctrl_retrieve.tokenization import TokenSeq


def test_init_is_seeded():
    a, b = init_encoder(20, 8, 6, seed=1), init_encoder(20, 8, 6, seed=1)
    for k in ("embedding", "proj_w", "proj_b"):
        assert getattr(a, k).tobytes() == getattr(b, k).tobytes()
    c = init_encoder(20, 8, 6, seed=2)
    assert not np.array_equal(a.embedding, c.embedding)
    assert np.all(np.abs(a.embedding) <= 0.05) and not a.proj_b.any()


def test_init_rejects_zero_dims():
    with pytest.raises(ValidationError):
        init_encoder(10, d_emb=0)


def test_embed_single_and_repeated_token():
    p = init_encoder(10, 4, 3, seed=0)
    expected = p.embedding[3] @ p.proj_w + p.proj_b
    np.testing.assert_allclose(embed(p, TokenSeq((3,))), expected, rtol=1e-12)
    assert np.array_equal(embed(p, TokenSeq((3, 3))), embed(p, TokenSeq((3,))))


def test_embed_zero_params_gives_zero():
    p = EncoderParams(np.zeros((5, 3)), np.ones((3, 2)), np.zeros(2))
    assert not embed(p, TokenSeq((0, 4, 2))).any()


def test_embed_empty_sequence():
    with pytest.raises(EmptySequence):
        embed(init_encoder(5, 2, 2), TokenSeq(()))


def test_score_cases():
    assert score([1, 0], [0, 1]) == 0
    assert score([1, 2], [1, 2]) == 5
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=7), rng.normal(size=7)
    assert score(a, b) == score(b, a)
    with pytest.raises(DimensionMismatch):
        score([1, 2], [1, 2, 3])


def test_encode_batch_matches_single_rows():
    enc = init_dual_encoder(30, "h", 8, 5, seed=3)
    seqs = [TokenSeq((1, 2, 3)), TokenSeq((7,)), TokenSeq((4, 4, 29, 0))]
    for side in (QUESTION, PASSAGE):
        batch = encode_batch(enc, side, seqs)
        for i, s in enumerate(seqs):
            assert np.array_equal(batch[i], embed(enc.tower(side), s))
        assert np.array_equal(encode_batch(enc, side, seqs[:1])[0], batch[0])
        perm = [2, 0, 1]
        assert np.array_equal(encode_batch(enc, side, [seqs[i] for i in perm]), batch[perm])
    with pytest.raises(EmptySequence) as exc:
        encode_batch(enc, QUESTION, [seqs[0], TokenSeq(())])
    assert exc.value.index == 1


def test_towers_differ_after_init():
    enc = init_dual_encoder(30, "h", 8, 5, seed=3)
    s = TokenSeq((1, 2))
    assert not np.allclose(embed(enc.q_params, s), embed(enc.p_params, s))


def test_checkpoint_roundtrip_is_byte_stable(tmp_path):
    enc = init_dual_encoder(12, "vh", 4, 3, seed=9)
    enc.save(tmp_path / "a.npz")
    enc.save(tmp_path / "b.npz")
    assert (tmp_path / "a.npz").read_bytes() == (tmp_path / "b.npz").read_bytes()
    again = DualEncoder.load(tmp_path / "a.npz")
    assert again.hash == enc.hash and again.vocab_hash == "vh"


@settings(max_examples=50)
@given(st.lists(st.integers(0, 19), min_size=1, max_size=12), st.randoms())
def test_mean_pool_order_invariance(ids, rnd):
    p = init_encoder(20, 6, 4, seed=0)
    shuffled = list(ids)
    rnd.shuffle(shuffled)
    np.testing.assert_allclose(embed(p, TokenSeq(tuple(ids))), embed(p, TokenSeq(tuple(shuffled))), rtol=1e-12, atol=1e-15)


@given(st.lists(st.integers(0, 9), min_size=1, max_size=8), st.floats(-4, 4))
def test_linearity_in_embedding_scale(ids, alpha):
    p = init_encoder(10, 4, 3, seed=5)
    scaled = EncoderParams(alpha * p.embedding, p.proj_w, p.proj_b)
    np.testing.assert_allclose(embed(scaled, ids), alpha * embed(p, ids), rtol=1e-9, atol=1e-12)
