import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tempora import kernels
from tempora import rbm as R
from tempora.rbm import RbmParams, ShapeError, UnitKind
from tempora.rng import RngStream
from tempora.schedule import TrainingSchedule

from conftest import brute_joint, brute_loglik

SIG1 = 0.7310585786300049   # 1 / (1 + e^-1)


def binary(w, bv, bh):
    return RbmParams(np.array(w, float), bv, bh, UnitKind.BINARY)


def gaussian(w, bv, bh, var=None):
    return RbmParams(np.array(w, float), bv, bh, UnitKind.GAUSSIAN, var)


# --- sigmoid ---------------------------------------------------------------

def test_sigmoid_values():
    assert kernels.sigmoid(0.0) == 0.5
    assert abs(kernels.sigmoid(50.0) - 1.0) < 1e-15
    assert kernels.sigmoid(1.0) == pytest.approx(SIG1, abs=1e-10)


@given(st.floats(-700, 700))
def test_sigmoid_bounded_and_finite(x):
    y = kernels.sigmoid(x)
    assert np.isfinite(y) and 0.0 <= y <= 1.0
    assert kernels.sigmoid(-x) == pytest.approx(1.0 - y, abs=1e-15)


# --- parameters ------------------------------------------------------------

def test_params_validation():
    with pytest.raises(ShapeError):
        RbmParams(np.zeros((2, 3)), np.zeros(3), np.zeros(3))
    with pytest.raises(ValueError):
        RbmParams(np.full((1, 1), np.nan), [0.0], [0.0])
    with pytest.raises(ValueError):
        gaussian([[1.0]], [0.0], [0.0], var=[0.0])
    assert np.array_equal(gaussian([[1.0]], [0.0], [0.0]).visible_variance, [1.0])


def test_initialize_scale_and_zero_biases():
    p = RbmParams.initialize(50, 40, RngStream(3), UnitKind.GAUSSIAN)
    assert abs(p.weights.std() - 0.01) < 0.001
    assert not p.visible_bias.any() and not p.hidden_bias.any()


# --- energy ----------------------------------------------------------------

def test_energy_zero_params():
    p = binary(np.zeros((3, 2)), np.zeros(3), np.zeros(2))
    assert R.energy(p, [1, 0, 1], [1, 1]) == 0.0


def test_energy_gaussian_quadratic_only():
    p = gaussian(np.zeros((2, 1)), np.zeros(2), np.zeros(1))
    assert R.energy(p, [2.0, 0.0], [1.0]) == pytest.approx(2.0)


def test_energy_worked_example():
    p = binary([[1.0], [-1.0]], [0.0, 0.0], [0.5])
    assert R.energy(p, [1, 0], [1]) == pytest.approx(-1.5)


def test_energy_rejects_bad_dims():
    p = binary(np.zeros((2, 1)), np.zeros(2), np.zeros(1))
    with pytest.raises(ShapeError):
        R.energy(p, [1, 0, 1], [1])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_energy_hidden_permutation_invariance(seed):
    r = RngStream(seed)
    p = binary(r.normal((3, 4)), r.normal(3), r.normal(4))
    perm = r.permutation(4)
    q = binary(p.weights[:, perm], p.visible_bias, p.hidden_bias[perm])
    v = (r.uniform(3) < 0.5).astype(float)
    h = (r.uniform(4) < 0.5).astype(float)
    assert R.energy(p, v, h) == pytest.approx(R.energy(q, v, h[perm]), abs=1e-12)


# --- conditionals ----------------------------------------------------------

def test_hidden_given_visible_examples():
    z = binary(np.zeros((2, 3)), np.zeros(2), np.zeros(3))
    assert np.allclose(R.hidden_given_visible(z, [1, 0]), 0.5)
    assert R.hidden_given_visible(binary([[2.0]], [0.0], [-2.0]), [1.0])[0] == pytest.approx(0.5)
    g = gaussian([[2.0]], [0.0], [0.0], var=[4.0])
    assert R.hidden_given_visible(g, [2.0])[0] == pytest.approx(SIG1, abs=1e-10)


def test_visible_given_hidden_examples():
    z = binary(np.zeros((2, 3)), np.zeros(2), np.zeros(3))
    assert np.allclose(R.visible_given_hidden(z, [1, 0, 1]), 0.5)
    mean, var = R.visible_given_hidden(gaussian([[3.0]], [1.0], [0.0]), [1.0])
    assert mean[0] == 4.0 and var[0] == 1.0
    p = R.visible_given_hidden(binary([[1.0], [-1.0]], [0.0, 0.0], [0.0]), [1.0])
    assert np.allclose(p, [SIG1, 1 - SIG1], atol=1e-5)


def test_conditionals_factorize(random_binary):
    p = random_binary(3, 3, seed=4)
    joint, _ = brute_joint(p)
    v = np.array([1.0, 0.0, 1.0])
    rows = [(h, pr) for vv, h, pr in joint if np.array_equal(vv, v)]
    total = sum(pr for _, pr in rows)
    ph = R.hidden_given_visible(p, v)
    for h, pr in rows:
        assert pr / total == pytest.approx(np.prod(np.where(h == 1, ph, 1 - ph)), rel=1e-10)


# --- sampling --------------------------------------------------------------

def test_gibbs_fair_coin():
    p = binary(np.zeros((2, 3)), np.zeros(2), np.zeros(3))
    res = R.run_chain(p, np.zeros((10_000, 2)), 1, RngStream(0))
    assert np.all(np.abs(res.hidden.mean(axis=0) - 0.5) < 0.02)


def test_gibbs_step_deterministic():
    p = binary([[0.3, -0.2]], [0.1], [0.0, 0.2])
    a = R.gibbs_step(p, [1.0], RngStream(5, 1))
    b = R.gibbs_step(p, [1.0], RngStream(5, 1))
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_gibbs_strong_weights_marginals():
    p = binary([[5.0], [5.0]], [-5.0, -5.0], [-5.0])
    joint, _ = brute_joint(p)
    exact = sum(pr * v for v, _, pr in joint)
    n = 10_000
    res = R.run_chain(p, np.zeros((n, 2)), 500, RngStream(1))
    se = np.sqrt(exact * (1 - exact) / n)
    assert np.all(np.abs(res.visible.mean(axis=0) - exact) <= 3 * se)


def test_backends_agree():
    if kernels.BACKEND != "compiled":
        pytest.skip("compiled kernel not built")
    r = RngStream(2)
    for gauss in (False, True):
        w = r.normal((4, 6))
        args = (w, w, r.normal(6), r.normal(4), r.normal((30, 4)), r.uniform((30, 6)),
                r.normal((30, 4)), np.ones(4), gauss)
        for x, y in zip(kernels.gibbs_sweep(*args, backend="compiled"),
                        kernels.gibbs_sweep(*args, backend="numpy")):
            assert np.allclose(x, y, atol=1e-12)


# --- enumeration -----------------------------------------------------------

def test_partition_examples():
    assert R.exact_partition(binary([[0.0]], [0.0], [0.0])) == pytest.approx(4.0)
    assert R.exact_partition(binary([[np.log(2)]], [0.0], [0.0])) == pytest.approx(5.0)


def test_partition_matches_brute_force(random_binary):
    p = random_binary(2, 2, seed=1)
    _, z = brute_joint(p)
    assert R.exact_partition(p) == pytest.approx(z, rel=1e-12)
    _, _, probs = R.joint_probabilities(p)
    assert abs(probs.sum() - 1.0) < 1e-10


def test_partition_guards():
    with pytest.raises(ValueError, match="refusing"):
        R.exact_partition(binary(np.zeros((13, 12)), np.zeros(13), np.zeros(12)))
    with pytest.raises(NotImplementedError):
        R.exact_partition(gaussian([[0.0]], [0.0], [0.0]))


def test_loglik_gradient_one_unit_example():
    g = R.exact_loglik_gradient(binary([[0.0]], [0.0], [0.0]), [[1.0]])
    assert g.visible_bias[0] == pytest.approx(0.5)


def test_loglik_gradient_stationary():
    # N=1, M=1, W=0: P(v=1) = sigmoid(bv); data mean 0.75 and bh=0 is a stationary point
    p = binary([[0.0]], [np.log(3.0)], [0.0])
    data = np.array([[1.0], [1.0], [1.0], [0.0]])
    assert np.linalg.norm(R.exact_loglik_gradient(p, data).flat()) < 1e-8


def test_loglik_gradient_finite_differences(random_binary):
    p = random_binary(3, 2, seed=7)
    data = np.array([[1, 0, 1], [0, 1, 1], [1, 1, 0]], float)
    g = R.exact_loglik_gradient(p, data).tensors()
    step = 1e-5
    for name, arr in p.tensors().items():
        for idx in np.ndindex(arr.shape):
            plus, minus = arr.copy(), arr.copy()
            plus[idx] += step
            minus[idx] -= step
            fd = (brute_loglik(p.with_tensors({**p.tensors(), name: plus}), data)
                  - brute_loglik(p.with_tensors({**p.tensors(), name: minus}), data)) / (2 * step)
            assert g[name][idx] == pytest.approx(fd, rel=1e-6, abs=1e-9)


def test_exact_loglik_matches_brute(random_binary):
    p = random_binary(3, 2, seed=2)
    data = np.array([[1, 0, 1], [0, 0, 0]], float)
    assert R.exact_loglik(p, data) == pytest.approx(brute_loglik(p, data), rel=1e-12)


# --- CD --------------------------------------------------------------------

def test_cd_lr_zero_is_identity(random_binary):
    p = random_binary(3, 2)
    q = R.cd_update(p, [[1, 0, 1]], lr=0.0, rng=1)
    assert all(np.array_equal(a, b) for a, b in zip(p.tensors().values(), q.tensors().values()))


def test_cd_rejects_bad_input(random_binary):
    p = random_binary(3, 2)
    with pytest.raises(ValueError):
        R.cd_update(p, [[1, 0, 1]], lr=-1.0)
    with pytest.raises(ValueError):
        R.cd_update(p, [[1, 0, 1]], n=0)
    with pytest.raises(ValueError):
        R.cd_update(p, np.empty((0, 3)))


def test_cd_mean_update_aligns_with_exact_gradient(random_binary):
    p = random_binary(3, 2, seed=11, scale=0.5)
    data = np.array([[1, 1, 0], [1, 0, 0], [0, 1, 1], [1, 1, 1]], float)
    before = np.concatenate([t.ravel() for t in p.tensors().values()])
    total = np.zeros_like(before)
    rng = RngStream(0, 7)
    for k in range(2000):
        q = R.cd_update(p, data, lr=1.0, rng=rng.child(k))
        total += np.concatenate([t.ravel() for t in q.tensors().values()]) - before
    exact = R.exact_loglik_gradient(p, data).flat()
    cos = total @ exact / (np.linalg.norm(total) * np.linalg.norm(exact))
    assert cos > 0.8


def test_cd_learns_single_pattern():
    p = RbmParams.initialize(3, 4, RngStream(0), UnitKind.BINARY)
    data = np.ones((10, 3))
    opt = R.Momentum(0.1, 0.5)
    rng = RngStream(3)
    for epoch in range(500):
        p = R.cd_update(p, data, lr=0.1, rng=rng.child(epoch), optimizer=opt)
    assert R.visible_marginals(p).min() > 0.9
    vs, _, probs = R.joint_probabilities(p)
    assert probs.sum(axis=1)[np.all(vs == 1, axis=1)][0] > 0.9


def test_cd_gaussian_scaling():
    # with sigma^2 = 4 the weight gradient is a quarter of the unit-variance one
    r = RngStream(4)
    b = gaussian(r.normal((2, 3)) * 0.1, np.zeros(2), np.zeros(3), var=[4.0, 4.0])
    data = r.normal((5, 2))
    v0, p0, vn, pn = R.cd_statistics(b, data, 1, RngStream(1), sample_visible=False)
    gb, _ = R.cd_gradient(b, data, 1, RngStream(1), sample_visible=False)
    assert np.allclose(gb.weights, (v0.T @ p0 - vn.T @ pn) / 5 / 4.0)
    assert np.allclose(gb.visible_bias, (v0 - vn).mean(axis=0) / 4.0)


# --- static pretraining ----------------------------------------------------

def _plain_cd(p, frames, sch, rng):
    opt = R.Momentum(sch.learning_rate, sch.momentum)
    for epoch in range(sch.static_epochs):
        erng = rng.child(epoch)
        for bi, idx in enumerate(R.minibatches(len(frames), sch.minibatch_size, erng)):
            p = R.cd_update(p, frames[idx], sch.cd_steps, sch.learning_rate, erng.child(bi), opt)
    return p


def test_static_zero_sparsity_equals_plain_cd():
    r = RngStream(8)
    frames = r.normal((120, 3))
    p = RbmParams.initialize(3, 5, r.child(0), UnitKind.GAUSSIAN)
    sch = TrainingSchedule(static_epochs=4, minibatch_size=25, sparsity_strength=0.0)
    a = R.static_pretrain(p, frames, sch, RngStream(1))
    b = _plain_cd(p, frames, sch, RngStream(1))
    assert all(np.array_equal(x, y) for x, y in zip(a.tensors().values(), b.tensors().values()))


def test_static_sparsity_pulls_activation_to_target():
    r = RngStream(9)
    frames = (r.uniform((300, 8)) < 0.5).astype(float)
    p = RbmParams.initialize(8, 20, r.child(0), UnitKind.BINARY)
    sch = TrainingSchedule(static_epochs=60, minibatch_size=30, learning_rate=0.05,
                           sparsity_target=0.1, sparsity_strength=0.5)
    p = R.static_pretrain(p, frames, sch, RngStream(2))
    mean_h = R.hidden_given_visible(p, frames).mean()
    assert abs(mean_h - 0.1) <= 0.3 and mean_h >= 0.05


def test_static_reconstruction_improves():
    t = np.arange(1000)
    s = np.sin(2 * np.pi * t / 30)
    frames = np.stack([s, s, -s, 0.5 * s], axis=1) + RngStream(0).normal((1000, 4)) * 0.05
    frames = (frames - frames.mean(0)) / frames.std(0)
    from tempora.schedule import MetricsLog
    log = MetricsLog()
    p = RbmParams.initialize(4, 30, RngStream(1), UnitKind.GAUSSIAN)
    R.static_pretrain(p, frames, TrainingSchedule(static_epochs=100), RngStream(2), log)
    curve = log.values("static")
    assert len(curve) == 100 and curve[-1] < curve[0]


# --- rng -------------------------------------------------------------------

def test_rng_reproducible_and_distinct():
    a, b = RngStream(1, 2), RngStream(1, 2)
    assert np.array_equal(a.uniform(5), b.uniform(5))
    assert not np.array_equal(RngStream(1, 2).uniform(5), RngStream(1, 3).uniform(5))
    assert not np.array_equal(RngStream(1).child(0).uniform(5), RngStream(1).child(1).uniform(5))
    c = RngStream(4)
    c.uniform(3)
    assert np.array_equal(c.fresh().uniform(3), RngStream(4).uniform(3))
