"""Self-checks against independent oracles.

Each check compares the library against brute-force enumeration or central
finite differences on models small enough for exact answers.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import kernels
from .autoencoding import ta_batch_loss, ta_forward, ta_gradient
from .rbm import (RbmParams, UnitKind, cd_update, joint_probabilities, run_chain,
                  exact_loglik_gradient, visible_marginals)
from .rng import RngStream
from .temporal import CrbmParams, TrbmParams

LEVELS = ("quick", "full")


@dataclass
class Check:
    name: str
    value: float
    tolerance: str
    passed: bool
    detail: str = ""
    seconds: float = 0.0


def random_binary_rbm(n_visible: int, n_hidden: int, rng: RngStream, scale: float = 1.0) -> RbmParams:
    return RbmParams(rng.normal((n_visible, n_hidden)) * scale,
                     rng.normal(n_visible) * scale, rng.normal(n_hidden) * scale, UnitKind.BINARY)


def random_binary_data(n_rows: int, n_visible: int, rng: RngStream) -> np.ndarray:
    return (rng.uniform((n_rows, n_visible)) < 0.5).astype(np.float64)


def cosine(a, b) -> float:
    a, b = np.ravel(a), np.ravel(b)
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


def mean_cd_update(rbm: RbmParams, data, n_updates: int, rng: RngStream) -> np.ndarray:
    """Average parameter change of ``n_updates`` seeded CD-1 steps (lr 1, no momentum)."""
    before = np.concatenate([t.ravel() for t in rbm.tensors().values()])
    total = np.zeros_like(before)
    for k in range(n_updates):
        new = cd_update(rbm, data, n=1, lr=1.0, rng=rng.child(k))
        total += np.concatenate([t.ravel() for t in new.tensors().values()]) - before
    return total / n_updates


# ---------------------------------------------------------------------------
# individual checks

def check_partition(n_models: int = 5, seed: int = 0) -> Check:
    rng = RngStream(seed, stream_id=0xC1)
    worst = 0.0
    for i in range(n_models):
        rbm = random_binary_rbm(3 + i % 3, 2 + i % 2, rng.child(i), scale=2.0)
        _, _, p = joint_probabilities(rbm)
        worst = max(worst, abs(p.sum() - 1.0))
    return Check("partition normalisation", worst, "|sum P - 1| <= 1e-10", worst <= 1e-10,
                 f"{n_models} random binary RBMs")


def check_cd_cosine(n_models: int = 5, n_updates: int = 2000, seed: int = 0) -> Check:
    rng = RngStream(seed, stream_id=0xC2)
    sims = []
    for i in range(n_models):
        r = rng.child(i)
        rbm = random_binary_rbm(3, 2, r.child(0), scale=0.5)
        data = random_binary_data(8, 3, r.child(1))
        exact = exact_loglik_gradient(rbm, data).flat()
        sims.append(cosine(mean_cd_update(rbm, data, n_updates, r.child(2)), exact))
    worst = min(sims)
    return Check("CD-1 vs exact gradient cosine", worst, "min cosine > 0.8", worst > 0.8,
                 "cosines " + ", ".join(f"{s:.3f}" for s in sims))


def _ta_instance(kind: str, rng: RngStream, order=3, n_visible=5, n_hidden=4):
    cls = TrbmParams if kind == "trbm" else CrbmParams
    m = cls.initialize(n_visible, n_hidden, order, rng.child(0), UnitKind.GAUSSIAN, scale=0.5)
    t = {k: v + rng.child(1).child(len(k)).normal(v.shape) * 0.3 for k, v in m.tensors().items()}
    m = m.with_tensors(t)
    past = rng.child(2).normal((7, order, n_visible))
    present = rng.child(3).normal((7, n_visible))
    return m, past, present


def ta_finite_difference_error(m, past, present, step: float = 1e-5) -> float:
    """Worst relative error between backprop and central differences, every component."""
    _, cache = ta_forward(m, past)
    grads = ta_gradient(m, cache, present, update_biases=True, train_static=True)
    tensors = m.tensors()
    worst = 0.0
    for name, g in grads.items():
        base = tensors[name]
        for idx in np.ndindex(base.shape):
            plus, minus = base.copy(), base.copy()
            plus[idx] += step
            minus[idx] -= step
            lp = ta_batch_loss(present, ta_forward(m.with_tensors({**tensors, name: plus}), past)[0])
            lm = ta_batch_loss(present, ta_forward(m.with_tensors({**tensors, name: minus}), past)[0])
            fd = (lp - lm) / (2 * step)
            err = abs(fd - g[idx]) / max(abs(fd), abs(g[idx]), 1e-6)
            worst = max(worst, err)
    return worst


def check_ta_gradients(n_instances: int = 1, seed: int = 0) -> Check:
    rng = RngStream(seed, stream_id=0xC3)
    errs = {}
    for kind in ("trbm", "crbm"):
        for i in range(n_instances):
            m, past, present = _ta_instance(kind, rng.child(i).child(len(kind) + (kind == "crbm")))
            errs[kind] = max(errs.get(kind, 0.0), ta_finite_difference_error(m, past, present))
    worst = max(errs.values())
    return Check("TA gradient finite differences", worst, "max rel err <= 1e-5", worst <= 1e-5,
                 ", ".join(f"{k} {v:.1e}" for k, v in errs.items()))


def check_sampler(n_samples: int = 10000, burn_in: int = 200, seed: int = 0) -> Check:
    rng = RngStream(seed, stream_id=0xC4)
    rbm = random_binary_rbm(3, 2, rng.child(0), scale=1.0)
    exact = visible_marginals(rbm)
    v0 = random_binary_data(n_samples, 3, rng.child(1))
    freq = run_chain(rbm, v0, burn_in, rng.child(2)).visible.mean(axis=0)
    se = np.sqrt(exact * (1 - exact) / n_samples)
    z = float(np.max(np.abs(freq - exact) / se))
    return Check("Gibbs marginals vs enumeration", z, "max |z| <= 3", z <= 3.0,
                 f"{n_samples} chains, {burn_in} sweeps")


def check_backends(seed: int = 0) -> Check:
    if kernels.BACKEND != "compiled":
        return Check("compiled vs numpy kernel", 0.0, "max abs diff <= 1e-12", True,
                     "compiled kernel not built; skipped")
    rng = RngStream(seed, stream_id=0xC5)
    worst = 0.0
    for gaussian in (False, True):
        b, n, m = 64, 5, 7
        w = rng.child(0).normal((n, m))
        args = (w, w, rng.child(1).normal(m), rng.child(2).normal(n), rng.child(3).normal((b, n)),
                rng.child(4).uniform((b, m)),
                rng.child(5).normal((b, n)) if gaussian else rng.child(5).uniform((b, n)),
                np.ones(n), gaussian)
        a = kernels.gibbs_sweep(*args, backend="compiled")
        c = kernels.gibbs_sweep(*args, backend="numpy")
        worst = max(worst, max(float(np.max(np.abs(x - y))) for x, y in zip(a, c)))
    return Check("compiled vs numpy kernel", worst, "max abs diff <= 1e-12", worst <= 1e-12,
                 "binary and Gaussian sweeps")


def run_checks(level: str = "quick") -> list[Check]:
    if level not in LEVELS:
        raise ValueError(f"unknown level {level!r} (expected one of {', '.join(LEVELS)})")
    full = level == "full"
    plan = [
        lambda: check_partition(20 if full else 5),
        lambda: check_cd_cosine(10 if full else 5, 2000),
        lambda: check_ta_gradients(3 if full else 1),
        lambda: check_sampler(40000 if full else 10000),
        check_backends,
    ]
    out = []
    for fn in plan:
        t0 = time.perf_counter()
        c = fn()
        c.seconds = time.perf_counter() - t0
        out.append(c)
    return out


def format_table(checks: list[Check]) -> str:
    width = max(len(c.name) for c in checks)
    lines = [f"{'check':<{width}}  status  {'value':>10}  tolerance / detail"]
    for c in checks:
        status = "PASS" if c.passed else "FAIL"
        lines.append(f"{c.name:<{width}}  {status:<6}  {c.value:>10.3g}  {c.tolerance}; {c.detail} "
                     f"({c.seconds:.1f}s)")
    lines.append(f"{sum(c.passed for c in checks)}/{len(checks)} checks passed")
    return "\n".join(lines) + "\n"
