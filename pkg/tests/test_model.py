import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from oracles import fd_check
from spt.errors import NumericalError, SeqTooLong, ShapeError
from spt.model import (EXT_GROUPS, Adam, ModelConfig, ModelParams, extension_parameter_count,
                       forward, full_head, init_params, loss_and_grads, make_optimizer,
                       reset_extension, sgd_step, softmax, trainable_parameter_count)
from spt.trainer import _head_loss_grads


def _model(d=16, layers=1, n_base=20, n_schemas=3, dtype="float32", tie=False, std=0.02, seed=0):
    cfg = ModelConfig(d_model=d, n_layers=layers, n_heads=2, d_ff=2 * d, max_seq_len=32,
                      dtype=dtype, tie_embeddings=tie, init_std=std, seed=seed)
    return init_params(cfg, n_base, n_schemas)


def test_softmax_reference_values():
    np.testing.assert_allclose(softmax(np.array([1.0, 2.0, 3.0])),
                               [0.0900, 0.2447, 0.6652], atol=5e-5)


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, (3, 7), elements=st.floats(-50, 50)))
def test_softmax_rows_normalised(z):
    p = softmax(z)
    assert np.all((p >= 0) & (p <= 1))
    np.testing.assert_allclose(p.sum(-1), 1.0, atol=1e-6)


def test_forward_rows_sum_to_one():
    p = _model()
    h, logits = forward(p, np.arange(10))
    assert h.shape == (10, 16) and logits.shape == (10, 20 + 3 + 2)
    np.testing.assert_allclose(softmax(logits.astype(np.float64)).sum(-1), 1.0, atol=1e-6)


def test_zero_extension_rows_give_equal_probabilities():
    p = _model()
    p.ext[:] = 0.0
    _, logits = forward(p, np.arange(6))
    probs = softmax(logits.astype(np.float64))[:, p.n_base:]
    np.testing.assert_allclose(probs, probs[:, :1].repeat(probs.shape[1], 1), rtol=1e-12)


def test_extension_rows_start_at_mean_head_row():
    p = _model()
    np.testing.assert_allclose(p.ext, np.tile(p.head.mean(0), (5, 1)), rtol=1e-6)


def test_extension_gradient_worked_example():
    # a head made only of the two helper rows; uniform p = [0.5, 0.5]
    d = 8
    cfg = ModelConfig(d_model=d, n_heads=2)
    params = ModelParams(cfg, {"tok_emb": np.zeros((0, d)), "head": np.zeros((0, d))},
                         np.zeros((2, d)))
    h = np.zeros((1, d))
    h[0, 0] = 1.0
    _, g = _head_loss_grads(params, h, np.array([0]), np.array([1.0]), EXT_GROUPS)
    np.testing.assert_allclose(g["rej"], -0.5 * h[0])
    np.testing.assert_allclose(g["gen"], 0.5 * h[0])
    assert g["W_S"].shape == (0, d)


def test_extension_gradient_closed_form():
    p = _model(dtype="float64", std=0.3)
    rng = np.random.default_rng(0)
    ids = rng.integers(0, p.n_base, 9)
    tgt = rng.integers(0, p.n_base + 5, 9)
    loss, g = loss_and_grads(p, ids, tgt)
    h, logits = forward(p, ids)
    P = softmax(logits)
    Y = np.eye(P.shape[1])[tgt]
    expect = (P - Y)[:, p.n_base:].T @ h / len(ids)
    np.testing.assert_allclose(g["W_S"], expect[:3], atol=1e-12)
    np.testing.assert_allclose(g["rej"], expect[3], atol=1e-12)
    np.testing.assert_allclose(g["gen"], expect[4], atol=1e-12)
    assert loss == pytest.approx(-np.log(P[np.arange(9), tgt]).mean())


def test_one_hot_prediction_has_zero_extension_gradient():
    p = _model(dtype="float64")
    ids = np.array([1, 2, 3])
    h, _ = forward(p, ids)
    # make schema 0 overwhelmingly likely at every position
    p.ext[0] = 1e4 * h.mean(0) / np.linalg.norm(h.mean(0)) ** 2
    target = p.n_base
    _, g = loss_and_grads(p, ids, np.full(3, target))
    assert np.abs(g["W_S"]).max() < 1e-12
    assert np.abs(g["rej"]).max() < 1e-12


@pytest.mark.parametrize("tie", [False, True])
def test_gradients_match_finite_differences(tie):
    p = _model(d=64, layers=2, n_base=30, dtype="float64", tie=tie, std=0.1, seed=1)
    reset_extension(p, noise=0.1, seed=2)
    rng = np.random.default_rng(0)
    ids = rng.integers(0, 30, (2, 10))
    ids[0, 3] = ids[1, 6] = p.gen_id
    tgt = rng.integers(0, 35, (2, 10))
    tgt[:, :2] = -1
    worst, report = fd_check(p, ids, tgt, ("base", "W_S", "rej", "gen"))
    assert worst < 1e-4, report
    assert {"W_S", "rej", "gen", "tok_emb", "h1.attn.wqkv"} <= set(report)


def test_gen_gradient_includes_soft_prompt_path():
    p = _model(dtype="float64", std=0.2)
    ids = np.array([1, p.gen_id, 3, 4])
    tgt = np.array([-1, -1, 5, 6])
    _, g_with = loss_and_grads(p, ids, tgt, trainable=("gen",))
    _, g_head = loss_and_grads(p, np.array([1, 2, 3, 4]), tgt, trainable=("gen",))
    # the head-row part alone differs from the full gradient once <Gen> is an input
    assert not np.allclose(g_with["gen"], g_head["gen"])


def test_frozen_groups_get_no_gradient():
    p = _model()
    p.frozen = {"base", "W_S"}
    _, g = loss_and_grads(p, np.arange(5), np.arange(5), trainable=("base", "W_S", "rej", "gen"))
    assert set(g) == {"rej", "gen"}


def test_sgd_worked_example():
    p = _model()
    p.ext[0, :2] = [1.0, 1.0]
    g = np.zeros_like(p.group_view("W_S"))
    g[0, :2] = [1.0, 0.0]
    sgd_step(p, {"W_S": g}, 0.1)
    np.testing.assert_allclose(p.ext[0, :2], [0.9, 1.0], rtol=1e-6)


def test_sgd_zero_lr_is_identity():
    p = _model()
    before = p.copy()
    _, g = loss_and_grads(p, np.arange(5), np.arange(5), trainable=("base", *EXT_GROUPS))
    sgd_step(p, g, 0.0)
    for k in p.base:
        assert p.base[k].tobytes() == before.base[k].tobytes()
    assert p.ext.tobytes() == before.ext.tobytes()


@pytest.mark.parametrize("opt", ["sgd", "adam"])
def test_frozen_base_bit_identical_after_steps(opt):
    p = _model()
    p.frozen = {"base"}
    before = {k: v.tobytes() for k, v in p.base.items()}
    o = make_optimizer(opt, 0.05)
    for _ in range(3):
        _, g = loss_and_grads(p, np.arange(6), np.arange(6), trainable=("base", *EXT_GROUPS))
        o.step(p, g)
    assert {k: v.tobytes() for k, v in p.base.items()} == before


def test_shape_mismatch_raises():
    p = _model()
    with pytest.raises(ShapeError):
        sgd_step(p, {"W_S": np.zeros((2, 2))}, 0.1)
    with pytest.raises(ShapeError):
        loss_and_grads(p, np.arange(4), np.arange(3))


def test_sequence_too_long():
    p = _model()
    with pytest.raises(SeqTooLong):
        forward(p, np.zeros(33, dtype=int))


def test_non_finite_loss_reports_batch_index():
    p = _model()
    p.ext[1] = np.inf
    with pytest.raises(NumericalError) as exc:
        loss_and_grads(p, np.arange(4), np.arange(4), batch_index=17)
    assert exc.value.batch_index == 17


def test_parameter_accounting():
    assert extension_parameter_count(26, 1536) == 28 * 1536 == 43008
    assert extension_parameter_count(26, 64) == 1792
    p = _model(d=64, n_schemas=26)
    assert trainable_parameter_count(p) == 1792
    assert trainable_parameter_count(p, ("W_S",)) == 26 * 64
    assert trainable_parameter_count(p, ("rej", "gen")) == 128


def test_tied_head_shares_embedding():
    p = _model(tie=True)
    assert "head" not in p.base
    assert p.head is p.base["tok_emb"]
    assert full_head(p).shape == (20 + 5, 16)
    _, logits = forward(p, np.arange(4))
    assert logits.shape == (4, 25)


def test_adam_first_step_moves_by_lr():
    p = _model(dtype="float64")
    g = np.ones_like(p.group_view("W_S"))
    before = p.group_view("W_S").copy()
    Adam(0.01).step(p, {"W_S": g})
    np.testing.assert_allclose(before - p.group_view("W_S"), 0.01, rtol=1e-5)
