import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pacc.models import (
    ATTENTION_KINDS,
    KINDS,
    Batch,
    Model,
    ModelSpec,
    SpecError,
    concat_width,
    contextual_attention,
    gene_attention,
    self_attention,
)
from pacc.nn import RngStream, grad_check
from pacc.nn.functional import mse_loss
from pacc.nn.optim import AdamState, LearningRateSchedule, adam_step
from pacc.nn.tensor import ShapeMismatch, Tensor
from support import toy_batch, toy_spec


# -- model spec ---------------------------------------------------------------------------


def test_default_sizes():
    assert ModelSpec("SA").A == ModelSpec("CA").A == 256
    mca = ModelSpec("MCA")
    assert (mca.H, mca.A, mca.f, mca.m, mca.kernel_widths, mca.p_drop) == (16, 64, 64, 4, (3, 5, 11), 0.5)
    assert ModelSpec("DNN").dense == (512, 256, 128, 64, 32, 16)
    assert ModelSpec("DNN").fp_width == 512


def test_concat_width_at_defaults():
    spec = ModelSpec("MCA")
    assert spec.mca_concat_width == concat_width(spec) == 3 * 4 * 64 + 4 * 16 == 832


def test_scnn_receptive_field():
    assert ModelSpec("SCNN").receptive_field() == 17


def test_spec_text_round_trip():
    for kind in KINDS:
        spec = toy_spec(kind, mask_pads=False)
        assert ModelSpec.from_text(spec.to_text()) == spec


def test_spec_rejects_bad_fields():
    with pytest.raises(SpecError):
        ModelSpec("XYZ")
    with pytest.raises(SpecError):
        ModelSpec("MCA", H=0)


# -- layers -------------------------------------------------------------------------


def test_gene_attention_zero_weights_uniform():
    g = np.random.default_rng(0).normal(size=(3, 5))
    filtered, alpha = gene_attention(Tensor(g), Tensor(np.zeros((5, 5))), Tensor(np.zeros(5)))
    assert np.allclose(alpha.data, 0.2, atol=0, rtol=1e-15)
    assert np.allclose(filtered.data, g / 5, rtol=1e-15)


@given(st.integers(0, 10_000))
def test_gene_attention_rows_sum_to_one(seed):
    rng = np.random.default_rng(seed)
    _, alpha = gene_attention(Tensor(rng.normal(size=(4, 8)) * 3), Tensor(rng.normal(size=(8, 8))),
                              Tensor(rng.normal(size=8)))
    assert np.max(np.abs(alpha.data.sum(-1) - 1)) < 1e-6


def test_gene_attention_gradient_at_eight_genes():
    rng = np.random.default_rng(0)
    w = rng.normal(size=(3, 8))
    rep = grad_check(lambda t: (gene_attention(t["g"], t["W"], t["b"])[0] * w).sum(),
                     {"g": rng.normal(size=(3, 8)), "W": rng.normal(size=(8, 8)), "b": rng.normal(size=8)})
    assert rep.worst < 1e-4


def test_self_attention_single_token():
    rng = np.random.default_rng(0)
    S = rng.normal(size=(2, 1, 3))
    pooled, alpha = self_attention(Tensor(S), np.ones((2, 1), bool), Tensor(rng.normal(size=(3, 4))),
                                   Tensor(rng.normal(size=4)), Tensor(rng.normal(size=4)))
    assert np.array_equal(alpha.data, np.ones((2, 1))) and np.allclose(pooled.data, S[:, 0], rtol=1e-15)


def test_identical_tokens_attend_uniformly():
    rng = np.random.default_rng(1)
    S = np.repeat(rng.normal(size=(2, 1, 3)), 5, axis=1)
    valid = np.array([[1, 1, 1, 1, 1], [1, 1, 0, 0, 0]], bool)
    We, V = Tensor(rng.normal(size=(3, 4))), Tensor(rng.normal(size=4))
    pooled, alpha = self_attention(Tensor(S), valid, We, Tensor(rng.normal(size=4)), V)
    assert np.allclose(alpha.data[0], 0.2) and np.allclose(alpha.data[1], [0.5, 0.5, 0, 0, 0])
    assert np.allclose(pooled.data, S[:, 0], atol=1e-14)
    G = Tensor(rng.normal(size=(2, 6)))
    _, alpha_ca = contextual_attention(Tensor(S), G, valid, We, Tensor(rng.normal(size=(6, 4))), V)
    assert np.allclose(alpha_ca.data, alpha.data)


def test_zero_context_reduces_to_self_attention():
    rng = np.random.default_rng(2)
    S = rng.normal(size=(2, 4, 3))
    valid = np.array([[1, 1, 1, 1], [1, 1, 1, 0]], bool)
    We, V = Tensor(rng.normal(size=(3, 5))), Tensor(rng.normal(size=5))
    _, a_sa = self_attention(Tensor(S), valid, We, Tensor(np.zeros(5)), V)
    _, a_ca = contextual_attention(Tensor(S), Tensor(np.zeros((2, 6))), valid, We,
                                   Tensor(rng.normal(size=(6, 5))), V)
    assert np.array_equal(a_sa.data, a_ca.data)


def test_contextual_attention_gradient():
    rng = np.random.default_rng(3)
    valid = np.array([[1, 1, 1, 0], [1, 1, 1, 1]], bool)
    w = rng.normal(size=(2, 3))
    rep = grad_check(lambda t: (contextual_attention(t["S"], t["G"], valid, t["We"], t["Wg"], t["V"])[0]
                                * w).sum(),
                     {"S": rng.normal(size=(2, 4, 3)), "G": rng.normal(size=(2, 5)),
                      "We": rng.normal(size=(3, 4)), "Wg": rng.normal(size=(5, 4)), "V": rng.normal(size=4)})
    assert rep.worst < 1e-4


# -- whole models -----------------------------------------------------------------------


@pytest.mark.parametrize("kind", KINDS)
def test_output_shapes(kind):
    batch = toy_batch(np.random.default_rng(0), B=5, dtype=np.float32)
    out = Model(toy_spec(kind), seed=1).forward(batch)
    assert out.values.shape == (5,) and out.values.dtype == np.float32
    if kind == "DNN":
        assert out.gene_attention is None and out.smiles_attention is None
    else:
        assert out.gene_attention.shape == (5, 4)
    if kind in ATTENTION_KINDS:
        heads = (len(toy_spec(kind).kernel_widths) + 1) * 2 if kind == "MCA" else 1
        assert out.smiles_attention.shape == (5, heads, 6)


def test_mca_emits_four_m_maps_at_defaults():
    spec = ModelSpec("MCA", vocab_size=10, n_genes=6, max_len=12, dense=(8,))
    batch = toy_batch(np.random.default_rng(0), B=3, T=12, G=6, V=10)
    out = Model(spec, seed=0).forward(batch)
    assert out.smiles_attention.shape == (3, 16, 12)
    assert Model(spec, seed=0).params["dense0.W"].shape[0] == 832


def test_single_token_gets_all_attention():
    rng = np.random.default_rng(4)
    batch = toy_batch(rng, B=3)
    batch.valid[:] = False
    batch.valid[:, 0] = True
    batch.ids[~batch.valid] = 0
    for kind in ATTENTION_KINDS:
        out = Model(toy_spec(kind), seed=0).forward(batch)
        assert np.all(out.smiles_attention[:, :, 0] == 1.0) and not out.smiles_attention[:, :, 1:].any()


def test_dnn_zero_output_layer_gives_zero():
    spec = toy_spec("DNN")
    model = Model(spec, seed=0)
    model.params["out.W"][:] = 0
    batch = Batch(genes=np.zeros((3, 4)), fingerprints=np.zeros((3, 16)))
    assert not model.forward(batch).values.any()


def test_dnn_width_mismatch():
    with pytest.raises(ShapeMismatch):
        Model(toy_spec("DNN"), seed=0).forward(Batch(genes=np.zeros((2, 4)), fingerprints=np.zeros((2, 8))))


def test_brnn_finite_over_many_draws():
    rng = np.random.default_rng(5)
    for seed in range(4):
        out = Model(toy_spec("bRNN"), seed=seed).forward(toy_batch(rng, B=250, dtype=np.float32))
        assert np.all(np.isfinite(out.values))


@pytest.mark.parametrize("kind", KINDS)
def test_batch_rows_are_independent(kind):
    rng = np.random.default_rng(6)
    batch = toy_batch(rng, B=7)
    model = Model(toy_spec(kind), seed=2).astype(np.float64)
    perm = rng.permutation(7)
    a = model.forward(batch).values
    b = model.forward(batch.take(perm)).values
    assert np.allclose(a[perm], b, rtol=0, atol=1e-12)


@pytest.mark.parametrize("kind", KINDS)
def test_attention_distributions(kind):
    rng = np.random.default_rng(7)
    batch = toy_batch(rng, B=6)
    out = Model(toy_spec(kind), seed=0).forward(batch)
    if out.gene_attention is not None:
        assert np.max(np.abs(out.gene_attention.sum(-1) - 1)) < 1e-5
    if out.smiles_attention is not None:
        assert np.max(np.abs(out.smiles_attention.sum(-1) - 1)) < 1e-5
        pads = np.broadcast_to(~batch.valid[:, None, :], out.smiles_attention.shape)
        assert np.all(out.smiles_attention[pads] == 0)


@pytest.mark.parametrize("kind", ("SA", "CA", "MCA", "bRNN", "SCNN"))
def test_trailing_padding_invariance(kind):
    rng = np.random.default_rng(8)
    spec = toy_spec(kind, T=6)
    model = Model(spec, seed=0)
    batch = toy_batch(rng, B=4, T=6, dtype=np.float32)
    longer = Model(spec.with_(max_len=14), seed=0)
    longer.params, longer.buffers = model.params, model.buffers
    pad = np.zeros((4, 8), dtype=batch.ids.dtype)
    wide = Batch(batch.genes, np.hstack([batch.ids, pad]), np.hstack([batch.valid, pad.astype(bool)]))
    assert np.max(np.abs(model.forward(batch).values - longer.forward(wide).values)) < 1e-6


def test_mca_order_sensitive():
    from pacc.chem import Vocabulary, tokenize

    vocab = Vocabulary.from_smiles(["CCO"])
    spec = ModelSpec("MCA", vocab_size=len(vocab), n_genes=3, max_len=3, H=4, A=4, f=4, m=2, dense=(4,))
    model = Model(spec, seed=0)
    genes = np.ones((1, 3))
    run = lambda s: model.forward(  # noqa: E731
        Batch(genes, vocab.encode_array(tokenize(s), 3)[None], np.ones((1, 3), bool))).values[0]
    assert run("CCO") != run("OCC")


def test_identical_token_sequences_are_order_free_for_sa():
    spec = toy_spec("SA")
    model = Model(spec, seed=0)
    ids = np.full((1, 6), 3)
    valid = np.ones((1, 6), bool)
    genes = np.ones((1, 4))
    a = model.forward(Batch(genes, ids, valid)).values
    b = model.forward(Batch(genes, ids[:, ::-1].copy(), valid)).values
    assert np.array_equal(a, b)


@pytest.mark.parametrize("kind", KINDS)
def test_encoder_gradients(kind):
    rng = np.random.default_rng(0)
    batch = toy_batch(rng)
    y = rng.random(len(batch))
    model = Model(toy_spec(kind), seed=0).astype(np.float64)
    params = {k: rng.normal(size=v.shape) * 0.5 for k, v in model.params.items()}
    rep = grad_check(lambda P: mse_loss(model.forward(batch, "train", RngStream(5), leaves=P).prediction, y),
                     params)
    assert rep.passed(1e-3)


@pytest.mark.parametrize("kind", KINDS)
def test_one_small_step_descends(kind):
    for seed in range(20):
        rng = np.random.default_rng(seed)
        batch = toy_batch(rng)
        y = rng.random(len(batch))
        model = Model(toy_spec(kind, p_drop=0.0), seed=seed).astype(np.float64)

        def loss(leaves):
            return mse_loss(model.forward(batch, "train", None, leaves).prediction, y)

        leaves = model.leaves(requires_grad=True)
        before = loss(leaves)
        before.backward()
        adam_step(model.params, {k: t.grad for k, t in leaves.items()},
                  AdamState(schedule=LearningRateSchedule(initial=1e-4)))
        assert loss(model.leaves()).item() < before.item()


def test_init_is_seed_deterministic():
    a, b = Model(toy_spec("MCA"), seed=3), Model(toy_spec("MCA"), seed=3)
    assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)
    c = Model(toy_spec("MCA"), seed=4)
    assert not np.array_equal(a.params["emb"], c.params["emb"])


def test_pad_mask_can_be_disabled():
    rng = np.random.default_rng(9)
    batch = toy_batch(rng, B=4)
    out = Model(toy_spec("SA", mask_pads=False), seed=0).forward(batch)
    assert np.all(out.smiles_attention[1, 0, 3:] > 0)
