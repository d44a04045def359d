import math

import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from rclbc.codes import LOWER_TRIANGULAR, SYSTEMATIC, ConfigError
from rclbc.gf2 import BitMatrix, solve_parity_lower_triangular
from rclbc.train import (
    DTYPE,
    PRECODE,
    RC,
    AdamState,
    TrainConfig,
    TrainState,
    TrainingDiverged,
    adam_step,
    assemble_H,
    assemble_H_bits,
    batch_loss,
    bce_loss,
    draw_batch,
    dsf,
    gradients,
    init_coding_params,
    learnable_mask,
    nbp_forward,
    run_stage,
    soft_encode,
    train_precode,
    train_rc,
    w_shape,
)

LT = LOWER_TRIANGULAR
K, N0 = 7, 15


def relaxed_binarizer(anchor):
    """Hard value at ``anchor`` with the sigmoid slope; lets FD see the STE adjoint."""
    step = (anchor >= 0).to(DTYPE)
    return lambda w: step + torch.sigmoid(w) - torch.sigmoid(anchor)


def close(a, f, rel=1e-3, floor=1e-9):
    return abs(a - f) <= rel * max(abs(a), abs(f)) + floor


# --- parameters and DSF ----------------------------------------------------

def test_shapes_and_mask():
    assert w_shape(LT, 7, 15) == (8, 15)
    assert w_shape(SYSTEMATIC, 7, 15) == (8, 7)
    mask = learnable_mask(LT, 7, 15)
    assert mask[:, :7].all()
    assert not mask[np.triu_indices(8, 0, 8)[0], 7 + np.triu_indices(8, 0, 8)[1]].any()
    with pytest.raises(ConfigError):
        w_shape("generic", 7, 15)


def test_init_range():
    w = init_coding_params(LT, 11, 31, np.random.default_rng(0))
    assert np.abs(w).max() <= 0.01
    assert not w[~learnable_mask(LT, 11, 31)].any()


def test_dsf_forward_and_backward():
    w = torch.tensor([-0.005, 0.003, 0.0], dtype=DTYPE, requires_grad=True)
    out = dsf(w)
    assert out.tolist() == [0.0, 1.0, 1.0]
    out.sum().backward()
    assert w.grad[2].item() == pytest.approx(0.25)
    s = torch.sigmoid(torch.tensor(-0.005, dtype=DTYPE)).item()
    assert w.grad[0].item() == pytest.approx(s * (1 - s))


@pytest.mark.parametrize("structure", [LT, SYSTEMATIC])
def test_assembled_H_structure(structure):
    w = init_coding_params(structure, K, N0, np.random.default_rng(1))
    h = assemble_H_bits(w, structure, K, N0).bits
    h2 = h[:, K:]
    assert (np.diag(h2) == 1).all() and not np.triu(h2, 1).any()
    if structure == SYSTEMATIC:
        assert np.array_equal(h2, np.eye(N0 - K))


# --- soft encoder ----------------------------------------------------------

def test_soft_encode_exact_on_random_instances():
    rng = np.random.default_rng(2)
    for structure in (LT, SYSTEMATIC):
        for _ in range(50):
            w = rng.normal(size=w_shape(structure, K, N0))
            h = assemble_H_bits(w, structure, K, N0)
            x = rng.integers(0, 2, (200, K))
            want = np.hstack([x, solve_parity_lower_triangular(h.submatrix(8, K),
                                                               BitMatrix(h.bits[:, K:]), x)])
            got = soft_encode(torch.tensor(h.bits, dtype=DTYPE), torch.as_tensor(x, dtype=DTYPE), K)
            assert np.array_equal(got.numpy(), want)


def test_single_parity_row_is_xor():
    h = torch.tensor([[1.0, 1.0, 1.0]], dtype=DTYPE)
    x = torch.tensor([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=DTYPE)
    assert soft_encode(h, x, 2)[:, 2].tolist() == [0.0, 1.0, 1.0, 0.0]


def test_zero_message_gives_zero_codeword_and_gradient():
    w = torch.tensor(init_coding_params(LT, K, N0, np.random.default_rng(3)), requires_grad=True)
    c = soft_encode(assemble_H(w, LT, K, N0), torch.zeros(4, K, dtype=DTYPE), K)
    assert not c.any()
    c.sum().backward()
    assert not w.grad.any()


def test_soft_encode_rejects_bad_structure():
    h = torch.tensor([[1.0, 1.0, 1.0], [1.0, 0.0, 1.0]], dtype=DTYPE)  # H2 upper entry set
    with pytest.raises(ConfigError):
        soft_encode(h, torch.zeros(1, 1, dtype=DTYPE), 1)


# --- loss ------------------------------------------------------------------

def test_bce_examples():
    x = torch.zeros(3, 5, dtype=DTYPE)
    assert bce_loss(torch.full((3, 5), 20.0, dtype=DTYPE), x).item() < 1e-6
    xr = torch.tensor(np.random.default_rng(4).integers(0, 2, (3, 5)), dtype=DTYPE)
    assert bce_loss(torch.zeros(3, 5, dtype=DTYPE), xr).item() == pytest.approx(math.log(2))
    assert bce_loss(torch.full((3, 5), -20.0, dtype=DTYPE), x).item() == pytest.approx(-math.log(1e-7), rel=1e-6)
    with pytest.raises(ValueError):
        bce_loss(torch.zeros(2, 3, dtype=DTYPE), torch.zeros(2, 4, dtype=DTYPE))


def test_dense_forward_matches_edge_decoder():
    from rclbc.decoder import DecoderParams, RCDecoder
    rng = np.random.default_rng(5)
    w = rng.normal(size=w_shape(LT, K, N0))
    h = assemble_H_bits(w, LT, K, N0)
    alpha = rng.uniform(0.5, 1.5, (5, 8, 15))
    llr = rng.normal(1.0, 3.0, (50, 15))
    dense = nbp_forward(torch.tensor(llr), torch.tensor(h.bits, dtype=DTYPE), torch.tensor(alpha))
    out, _ = RCDecoder(h, K, DecoderParams(alpha)).decode(llr)
    assert np.allclose(dense.numpy(), out, rtol=0, atol=1e-9)


# --- gradients -------------------------------------------------------------

def _fd_setup(seed=6):
    rng = np.random.default_rng(seed)
    w = rng.uniform(-1, 1, w_shape(LT, K, N0)) * learnable_mask(LT, K, N0)
    alpha = rng.uniform(0.9, 1.1, (5, 8, 15))
    batches = [draw_batch(rng, K, 15, 2.0, 8), draw_batch(rng, K, 11, 3.0, 8)]
    return rng, w, alpha, batches


def test_end_to_end_gradient_matches_finite_differences():
    rng, w, alpha, batches = _fd_setup()
    _, gw, ga = gradients(w, alpha, batches, LT, K, N0)
    relaxed = relaxed_binarizer(torch.tensor(w))

    def f(w_, a_):
        with torch.no_grad():
            return sum(batch_loss(torch.tensor(w_), torch.tensor(a_), b, LT, K, N0, relaxed).item()
                       for b in batches)

    h = 1e-4
    idx = np.argwhere(learnable_mask(LT, K, N0))
    for i, j in idx[rng.choice(len(idx), 20, replace=False)]:
        wp, wm = w.copy(), w.copy()
        wp[i, j] += h
        wm[i, j] -= h
        assert close(gw[i, j], (f(wp, alpha) - f(wm, alpha)) / (2 * h))
    hb = assemble_H_bits(w, LT, K, N0).bits
    edges = np.argwhere(hb)
    for i, j in edges[rng.choice(len(edges), 20, replace=False)]:
        l = rng.integers(5)
        ap, am = alpha.copy(), alpha.copy()
        ap[l, i, j] += h
        am[l, i, j] -= h
        assert close(ga[l, i, j], (f(w, ap) - f(w, am)) / (2 * h))


def test_encoder_only_gradient():
    rng = np.random.default_rng(7)
    w = rng.uniform(-1, 1, w_shape(LT, K, N0)) * learnable_mask(LT, K, N0)
    x = torch.tensor(rng.integers(0, 2, (16, K)), dtype=DTYPE)
    proj = torch.tensor(rng.normal(size=(16, N0)))
    anchor = torch.tensor(w)

    def f(w_, binarize):
        return (soft_encode(assemble_H(w_, LT, K, N0, binarize), x, K) * proj).sum()

    wt = torch.tensor(w, requires_grad=True)
    f(wt, dsf).backward()
    relaxed = relaxed_binarizer(anchor)
    h = 1e-4
    for i, j in np.argwhere(learnable_mask(LT, K, N0))[::3]:
        e = torch.zeros_like(anchor)
        e[i, j] = h
        fd = (f(anchor + e, relaxed) - f(anchor - e, relaxed)).item() / (2 * h)
        assert close(wt.grad[i, j].item(), fd)


def test_decoder_only_gradient():
    rng = np.random.default_rng(8)
    h_bits = torch.tensor(assemble_H_bits(rng.normal(size=(8, 15)), LT, K, N0).bits, dtype=DTYPE)
    llr = torch.tensor(rng.normal(1.5, 2.0, (8, 15)))
    x = torch.tensor(rng.integers(0, 2, (8, K)), dtype=DTYPE)
    alpha = torch.tensor(rng.uniform(0.9, 1.1, (5, 8, 15)), requires_grad=True)
    h = h_bits.clone().requires_grad_(True)
    bce_loss(nbp_forward(llr, h, alpha)[:, :K], x).backward()
    for _ in range(20):
        l, i, j = rng.integers(5), rng.integers(8), rng.integers(15)
        e = torch.zeros_like(alpha)
        e[l, i, j] = 1e-4
        with torch.no_grad():
            fd = (bce_loss(nbp_forward(llr, h_bits, alpha + e)[:, :K], x)
                  - bce_loss(nbp_forward(llr, h_bits, alpha - e)[:, :K], x)).item() / 2e-4
        assert close(alpha.grad[l, i, j].item(), fd)
    # the mask enters polynomially, so its adjoint is an ordinary derivative too.
    # Only edges are probed: at h = 0 a row whose other factors are all 1
    # sits on the atanh clip, and the loss has a kink there.
    for i, j in np.argwhere(h_bits.numpy())[::5]:
        e = torch.zeros_like(h_bits)
        e[i, j] = 1e-5
        with torch.no_grad():
            a0 = alpha.detach()
            fd = (bce_loss(nbp_forward(llr, h_bits + e, a0)[:, :K], x)
                  - bce_loss(nbp_forward(llr, h_bits - e, a0)[:, :K], x)).item() / 2e-5
        assert close(h.grad[i, j].item(), fd)


def test_punctured_rows_get_no_gradient():
    rng = np.random.default_rng(9)
    w = init_coding_params(LT, K, N0, rng)
    _, gw, _ = gradients(w, np.ones((5, 8, 15)), [draw_batch(rng, K, 11, 3.0, 64)], LT, K, N0)
    assert not gw[4:].any()
    assert gw[:4].any()


def test_mtl_locality():
    rng = np.random.default_rng(10)
    w = init_coding_params(LT, K, N0, rng)
    alpha = np.ones((5, 8, 15))
    b15, b11 = draw_batch(rng, K, 15, 3.0, 64), draw_batch(rng, K, 11, 4.0, 64)
    _, both, _ = gradients(w, alpha, [b15, b11], LT, K, N0)
    _, low, _ = gradients(w, alpha, [b15], LT, K, N0)
    assert np.allclose(both[4:], low[4:], rtol=0, atol=1e-15)


def test_noiseless_alpha_gradient_vanishes():
    rng = np.random.default_rng(11)
    w = rng.normal(size=w_shape(LT, K, N0))
    b = draw_batch(rng, K, 15, math.inf, 64)
    _, _, ga = gradients(w, np.ones((5, 8, 15)), [b], LT, K, N0)
    assert np.abs(ga).max() < 1e-4


# --- Adam ------------------------------------------------------------------

def test_adam_examples():
    st_ = AdamState()
    p = {"w": np.array([1.0, -2.0])}
    assert np.array_equal(adam_step(p, {"w": np.zeros(2)}, st_)["w"], p["w"])
    st_ = AdamState()
    out = adam_step({"w": np.array([0.5])}, {"w": np.array([3.0])}, st_, lr=1e-3)
    # first step: m_hat = g, v_hat = g^2, so the update is lr * g / (|g| + eps)
    assert out["w"][0] == pytest.approx(0.5 - 1e-3 * 3.0 / (3.0 + 1e-8))
    assert st_.t == 1


@given(st.floats(-100, 100).filter(lambda g: abs(g) > 1e-3), st.integers(1, 20))
def test_adam_constant_gradient_moves_about_lr(g, steps):
    st_ = AdamState()
    p = {"w": np.zeros(1)}
    for _ in range(steps):
        p = adam_step(p, {"w": np.array([g])}, st_)
    assert p["w"][0] == pytest.approx(-np.sign(g) * 1e-3 * steps, rel=1e-4)


# --- training loop ---------------------------------------------------------

def test_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(PRECODE, 1, ((15, 3.0), (11, 4.0)))
    with pytest.raises(ConfigError):
        TrainConfig(PRECODE, 1, ((15, 3.0),), batch_size=100)
    with pytest.raises(ConfigError):
        TrainConfig("joint", 1, ((15, 3.0),))
    with pytest.raises(ConfigError):
        train_rc(TrainConfig(RC, 1, ((15, 3.0),)), TrainState.fresh(LT, K, N0, 0))


def _small(stage, epochs, pairs, seed=3):
    return TrainConfig(stage, epochs, pairs, batch_size=64, vectors_per_epoch=256, seed=seed)


def test_precode_keeps_alpha_and_structure():
    st_ = train_precode(_small(PRECODE, 3, ((15, 3.0),)), LT, K)
    assert np.array_equal(st_.alpha, np.ones((5, 8, 15)))
    h2 = st_.H().bits[:, K:]
    assert (np.diag(h2) == 1).all() and not np.triu(h2, 1).any()
    assert not st_.w[~learnable_mask(LT, K, N0)].any()
    assert len(st_.history) == 3 and st_.adam.t == 12


def test_rc_resets_epoch_and_moves_alpha():
    st_ = train_precode(_small(PRECODE, 2, ((15, 3.0),)), LT, K)
    train_rc(_small(RC, 2, ((15, 3.0), (11, 4.0))), st_)
    assert st_.stage == RC and st_.epoch == 2 and st_.adam.t == 8
    assert not np.array_equal(st_.alpha, np.ones((5, 8, 15)))
    assert set(st_.history[-1]["loss"]) == {15, 11}
    with pytest.raises(ConfigError):
        run_stage(st_, _small(PRECODE, 1, ((15, 3.0),)))


def test_training_is_deterministic():
    a = train_precode(_small(PRECODE, 2, ((15, 3.0),)), LT, K)
    b = train_precode(_small(PRECODE, 2, ((15, 3.0),)), LT, K)
    assert np.array_equal(a.w, b.w)
    assert a.history == b.history


def test_divergence_raises_with_state(monkeypatch):
    import rclbc.train as T
    monkeypatch.setattr(T, "gradients", lambda *a, **k: ([float("nan")], np.zeros((8, 15)), None))
    with pytest.raises(TrainingDiverged) as err:
        train_precode(_small(PRECODE, 1, ((15, 3.0),)), LT, K)
    assert err.value.state.epoch == 0


@pytest.mark.slow
def test_smoke_precode_lowers_loss():
    cfg = TrainConfig(PRECODE, 50, ((15, 4.0),), seed=7)
    st_ = TrainState.fresh(LT, K, N0, 7)
    eval_b = draw_batch(np.random.default_rng(99), K, 15, 4.0, 4096)

    def loss(s):
        with torch.no_grad():
            return batch_loss(torch.tensor(s.w), torch.tensor(s.alpha), eval_b, LT, K, N0).item()

    before = loss(st_)
    run_stage(st_, cfg)
    assert loss(st_) < before
