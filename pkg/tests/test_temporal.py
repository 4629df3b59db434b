import numpy as np
import pytest

from tempora import temporal as T
from tempora.autoencoding import ta_pretrain
from tempora.evaluation import free_run
from tempora.rbm import RbmParams, UnitKind, run_chain, static_pretrain
from tempora.rng import RngStream, RowStreams
from tempora.schedule import TaConfig, TrainingSchedule
from tempora.temporal import CrbmParams, StageOrderError, TrbmParams

from conftest import brute_joint


def rand_base(n, m, seed, kind=UnitKind.BINARY, scale=1.0):
    r = RngStream(seed, 5)
    return RbmParams(r.normal((n, m)) * scale, r.normal(n) * scale, r.normal(m) * scale, kind)


def sinusoid(length=600, period=20.0, offset=0.3):
    # two correlated channels; the static layer has something to learn
    t = np.arange(length)[:, None]
    x = np.sin(2 * np.pi * t / period + np.array([0.0, offset])[None, :])
    return (x - x.mean(0)) / x.std(0)


def windows_of(frames, order):
    past = np.stack([frames[i:i + order] for i in range(len(frames) - order)])
    return past, frames[order:]


# --- TRBM energy -----------------------------------------------------------

def test_trbm_energy_decouples_without_delays():
    base = rand_base(3, 2, 0)
    m = TrbmParams(base, np.zeros((2, 2, 2)))
    r = RngStream(1)
    vs = (r.uniform((3, 3)) < 0.5).astype(float)
    hs = (r.uniform((3, 2)) < 0.5).astype(float)
    from tempora.rbm import energy
    assert T.trbm_energy(m, vs, hs) == pytest.approx(sum(energy(base, v, h) for v, h in zip(vs, hs)))


def test_trbm_energy_coupling_example():
    base = RbmParams(np.zeros((1, 1)), [0.0], [0.0])
    m = TrbmParams(base, [[[2.0]]])
    assert T.trbm_energy(m, [[0.3], [0.7]], [[1.0], [1.0]]) == pytest.approx(-2.0)


def test_trbm_energy_relabeling_symmetry():
    r = RngStream(2)
    base = rand_base(3, 4, 2)
    m = TrbmParams(base, r.normal((2, 4, 4)))
    perm = r.permutation(4)
    pb = RbmParams(base.weights[:, perm], base.visible_bias, base.hidden_bias[perm])
    pm = TrbmParams(pb, m.delayed[:, perm][:, :, perm])
    vs = (r.uniform((3, 3)) < 0.5).astype(float)
    hs = (r.uniform((3, 4)) < 0.5).astype(float)
    assert T.trbm_energy(m, vs, hs) == pytest.approx(T.trbm_energy(pm, vs, hs[:, perm]), abs=1e-12)


def test_trbm_shape_validation():
    with pytest.raises(ValueError):
        TrbmParams(rand_base(2, 3, 0), np.zeros((2, 3, 2)))


# --- filtering -------------------------------------------------------------

def test_filter_zero_weights_is_bias_bernoulli():
    base = RbmParams(np.zeros((2, 3)), np.zeros(2), [-1.0, 0.0, 2.0])
    m = TrbmParams(base, np.zeros((2, 3, 3)))
    h = T.trbm_filter_hidden(m, np.zeros((10_000, 2, 2)), RngStream(0))
    p = 1 / (1 + np.exp(-base.hidden_bias))
    se = np.sqrt(p * (1 - p) / 10_000)
    assert np.all(np.abs(h.mean(axis=0) - p) <= 3 * se)


def test_filter_deterministic_and_matches_conditional():
    base = rand_base(3, 2, 4)
    m = TrbmParams(base, np.zeros((2, 2, 2)))
    past = np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]])
    a = T.trbm_filter_hidden(m, past, RngStream(3))
    assert np.array_equal(a, T.trbm_filter_hidden(m, past, RngStream(3)))
    h = T.trbm_filter_hidden(m, np.broadcast_to(past, (10_000, 2, 3)), RngStream(4))
    from tempora.rbm import hidden_given_visible
    p = hidden_given_visible(base, past)
    se = np.sqrt(p * (1 - p) / 10_000)
    assert np.all(np.abs(h.mean(axis=0) - p) <= 3 * se)


# --- generation ------------------------------------------------------------

def _static_visible_means(base):
    joint, _ = brute_joint(base)
    return sum(pr * v for v, _, pr in joint)


@pytest.mark.parametrize("kind", ["trbm", "crbm"])
def test_generate_without_delays_samples_static_rbm(kind):
    base = rand_base(3, 2, 6)
    m = (TrbmParams(base, np.zeros((2, 2, 2))) if kind == "trbm"
         else CrbmParams(base, np.zeros((2, 3, 2)), np.zeros((2, 3, 3))))
    n = 10_000
    out = m.generate(np.zeros((n, 2, 3)), 100, RngStream(0))
    exact = _static_visible_means(base)
    se = np.sqrt(exact * (1 - exact) / n)
    assert np.all(np.abs(out.mean(axis=0) - exact) <= 3 * se)


@pytest.mark.parametrize("kind", ["trbm", "crbm"])
def test_generate_deterministic(kind):
    base = rand_base(2, 3, 1, UnitKind.GAUSSIAN, 0.3)
    m = (TrbmParams.initialize(2, 3, 2, RngStream(0)) if kind == "trbm"
         else CrbmParams.initialize(2, 3, 2, RngStream(0)))
    m = m.with_tensors({**m.tensors(), **base.tensors()})
    past = RngStream(2).normal((4, 2, 2))
    assert np.array_equal(m.generate(past, 20, RngStream(9)), m.generate(past, 20, RngStream(9)))
    with pytest.raises(ValueError):
        m.generate(past, 0, RngStream(9))


def test_zero_delays_bit_compatible_with_static_chain():
    base = rand_base(3, 4, 3, UnitKind.GAUSSIAN, 0.5)
    m = CrbmParams(base, np.zeros((2, 3, 4)), np.zeros((2, 3, 3)))
    rng = RngStream(11)
    out = m.generate(np.zeros((5, 2, 3)), 10, rng)
    chain = rng.child(1)
    v0 = chain.normal((5, 3))
    ref = run_chain(base, v0, 10, chain).visible_mean
    assert np.array_equal(out, ref)


def _trained(kind, frames, order=6, hidden=30, seed=0):
    past, present = windows_of(frames, order)
    m = (TrbmParams if kind == "trbm" else CrbmParams).initialize(
        frames.shape[1], hidden, order, RngStream(seed))
    sch = TrainingSchedule(static_epochs=100, minibatch_size=50, learning_rate=1e-2)
    base = static_pretrain(m.base, frames, sch, RngStream(seed, 1))
    m = T.replace(m, base=base, phase="static")
    return ta_pretrain(m, past, present, TaConfig(epochs_per_delay=20, learning_rate=0.5),
                       RngStream(seed, 2)), past, present


def test_trbm_ta_trained_fill_in_beats_free_run():
    frames = sinusoid()
    m, past, present = _trained("trbm", frames)
    starts = np.arange(500, 590)
    rep = free_run(m, frames, starts, horizon=6, rng=RngStream(3), gibbs_steps=50)
    assert rep.values[0] < rep.values[5]


def test_crbm_ta_trained_fill_in_below_signal_variance():
    frames = sinusoid()
    m, past, present = _trained("crbm", frames)
    pred = m.generate(past[-100:], 50, RngStream(4))
    assert np.mean((pred - present[-100:]) ** 2) < present.var(axis=0).mean()


# --- CRBM dynamic biases ---------------------------------------------------

def test_dynamic_biases_examples():
    base = rand_base(2, 3, 0)
    m = CrbmParams(base, np.zeros((2, 2, 3)), np.zeros((2, 2, 2)))
    hb, vb = T.crbm_dynamic_biases(m, RngStream(1).normal((2, 2)))
    assert np.array_equal(hb, base.hidden_bias) and np.array_equal(vb, base.visible_bias)
    m1 = CrbmParams(RbmParams([[0.0]], [0.0], [0.0]), [[[2.0]]], [[[-1.0]]])
    hb, vb = T.crbm_dynamic_biases(m1, [[1.0]])
    assert hb[0] == 2.0 and vb[0] == -1.0


def test_dynamic_biases_affine():
    r = RngStream(3)
    base = rand_base(3, 4, 1)
    m = CrbmParams(base, r.normal((2, 3, 4)), r.normal((2, 3, 3)))
    a, b = r.normal((2, 3)), r.normal((2, 3))
    d = lambda x: [u - s for u, s in zip(T.crbm_dynamic_biases(m, x), (base.hidden_bias, base.visible_bias))]  # noqa: E731
    for x, y, z in zip(d(2 * a), d(a), d(a + b)):
        assert np.allclose(x, 2 * y)
    for s, x, y in zip(d(a + b), d(a), d(b)):
        assert np.allclose(s, x + y)


# --- CD on windows ---------------------------------------------------------

@pytest.mark.parametrize("kind", ["trbm", "crbm"])
def test_temporal_cd_lr_zero(kind):
    m = (TrbmParams if kind == "trbm" else CrbmParams).initialize(3, 4, 2, RngStream(0))
    m = m.with_tensors({k: v + 0.1 for k, v in m.tensors().items()})
    win = (RngStream(1).normal((6, 2, 3)), RngStream(2).normal((6, 3)))
    upd = T.trbm_cd_update if kind == "trbm" else T.crbm_cd_update
    new = upd(m, win, lr=0.0, rng=RngStream(3))
    assert all(np.array_equal(new.tensors()[k], v) for k, v in m.tensors().items())


@pytest.mark.parametrize("kind", ["trbm", "crbm"])
def test_temporal_cd_order_invariant_with_row_lanes(kind):
    m = (TrbmParams if kind == "trbm" else CrbmParams).initialize(3, 4, 2, RngStream(0))
    m = m.with_tensors({k: v + 0.05 * RngStream(5).normal(v.shape) for k, v in m.tensors().items()})
    past, present = RngStream(1).normal((8, 2, 3)), RngStream(2).normal((8, 3))
    lane = lambda i: RngStream(7, 100 + i)  # noqa: E731
    perm = RngStream(4).permutation(8)
    a = T.cd_gradient(m, (past, present), 1, RowStreams(lane(i) for i in range(8)))
    b = T.cd_gradient(m, (past[perm], present[perm]), 1, RowStreams(lane(i) for i in perm))
    for k in a:
        assert np.allclose(a[k], b[k], atol=1e-12)


def test_crbm_p_gradient_zero_when_reconstruction_matches():
    r = RngStream(6)
    base = RbmParams(np.zeros((3, 2)), r.normal(3), r.normal(2), UnitKind.GAUSSIAN)
    m = CrbmParams(base, r.normal((2, 3, 2)), r.normal((2, 3, 3)))
    past = r.normal((5, 2, 3))
    _, vb = m.dynamic_biases(past)
    grads = T.crbm_cd_gradient(m, (past, vb), 1, RngStream(1), sample_visible=False)
    for d in (1, 2):
        assert np.allclose(grads[f"P_DELAY_{d}"], 0.0, atol=1e-12)


def test_trbm_cd_constant_sequence():
    const = np.array([1.0, -1.0, 0.5])
    frames = np.tile(const, (200, 1))
    past, present = windows_of(frames, 2)
    m = TrbmParams.initialize(3, 10, 2, RngStream(0)).with_phase("static")
    sch = TrainingSchedule(minibatch_size=50, learning_rate=1e-2)
    m = T.joint_train(m, past, present, sch, 300, RngStream(1))
    pred = m.generate(past[:50], 50, RngStream(2))
    # trivial predictor: zero (the mean of normalised data)
    assert np.mean((pred - present[:50]) ** 2) < np.mean(const ** 2)


def test_crbm_cd_ar1_near_noise_floor():
    r = RngStream(12)
    coef, sd, n = 0.9, 0.1, 1500
    x = np.zeros(n)
    for t in range(1, n):
        x[t] = coef * x[t - 1] + sd * r.normal(())
    frames = ((x - x.mean()) / x.std())[:, None]
    floor = sd ** 2 / x.var()
    past, present = windows_of(frames, 1)
    m = CrbmParams.initialize(1, 10, 1, RngStream(0)).with_phase("static")
    sch = TrainingSchedule(minibatch_size=100, learning_rate=1e-2)
    m = T.joint_train(m, past[:1000], present[:1000], sch, 500, RngStream(1))
    pred = np.mean([m.generate(past[1000:], 50, RngStream(3, k)) for k in range(20)], axis=0)
    assert np.mean((pred - present[1000:]) ** 2) < 2 * floor


def test_joint_refuses_fresh_model():
    m = CrbmParams.initialize(2, 3, 2, RngStream(0))
    with pytest.raises(StageOrderError):
        T.joint_train(m, np.zeros((4, 2, 2)), np.zeros((4, 2)), TrainingSchedule(), 1, RngStream(0))
