import itertools
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from ccslab import _pykernels
from ccslab._backend import BACKEND, available_backends
from ccslab.acceptance import naive_phi
from ccslab.pipeline import PipelineConfig, VideoConfig, build_world, edit_video, gen_toy_video, metric_mmd
from ccslab.tcs import (
    REFERENCE_ETA,
    ParticleSet,
    TCSConfig,
    iter_tcs,
    median_bandwidth,
    mmd2,
    phi_hat,
    phi_hat_all,
    rbf_kernel,
    tcs_update,
)

BACKENDS = available_backends()


def test_rbf_coincident():
    v, g = rbf_kernel(np.array([1.0, 2.0]), np.array([1.0, 2.0]), 0.7)
    assert v == 1.0 and not np.any(g)


def test_rbf_one_bandwidth_apart():
    h = 0.8
    v, g = rbf_kernel(np.array([0.0]), np.array([h]), h)
    assert v == pytest.approx(math.exp(-0.5), rel=1e-15)
    assert g[0] == pytest.approx(math.exp(-0.5) / h, rel=1e-15)


def test_rbf_gradient_finite_difference(rng):
    for _ in range(20):
        x, y = rng.normal(size=(2, 3))
        h = rng.uniform(0.5, 2)
        _, g = rbf_kernel(x, y, h)
        eps = 1e-6
        fd = np.array([(rbf_kernel(x + e, y, h)[0] - rbf_kernel(x - e, y, h)[0]) / (2 * eps) for e in np.eye(3) * eps])
        np.testing.assert_allclose(g, fd, atol=1e-6)


def test_rbf_rejects_nonpositive_bandwidth():
    with pytest.raises(ValueError):
        rbf_kernel(np.zeros(1), np.zeros(1), 0.0)


def test_median_two_points():
    assert median_bandwidth(np.array([[0.0, 0.0], [3.0, 4.0]])) == pytest.approx(5.0 / math.sqrt(2 * math.log(3)), rel=1e-15)


def test_median_coincident_floor():
    assert median_bandwidth(np.ones((4, 3))) == 1e-8


def test_median_brute_force(rng):
    pts = rng.normal(size=(5, 2))
    dists = sorted(math.dist(p, q) for p, q in itertools.combinations(pts.tolist(), 2))
    med = (dists[4] + dists[5]) / 2
    assert median_bandwidth(pts) == pytest.approx(med / math.sqrt(2 * math.log(6)), rel=1e-12)


def test_median_needs_two_points():
    with pytest.raises(ValueError):
        median_bandwidth(np.zeros((1, 2)))


def test_phi_fixed_point_single():
    x = np.array([[0.3, -0.2]])
    assert not np.any(phi_hat(ParticleSet(x, x), x[0], 1.0))


def test_phi_single_residual():
    z = np.array([0.3, -0.2])
    r = np.array([0.5, 1.5])
    np.testing.assert_array_equal(phi_hat(ParticleSet([z + r], [z]), z + r, 0.9), r)


def test_phi_three_point_2d(rng):
    e, s = rng.normal(size=(2, 3, 2))
    ps = ParticleSet(e, s)
    q = rng.normal(size=2)
    ref = naive_phi(e.tolist(), s.tolist(), q.tolist(), 1.3)
    assert np.max(np.abs(phi_hat(ps, q, 1.3) - ref)) <= 1e-12


@pytest.mark.parametrize("backend", sorted(BACKENDS))
def test_oracle_equivalence(backend, rng):
    kern = BACKENDS[backend]
    for _ in range(50):
        n, d = int(rng.integers(1, 6)), int(rng.integers(1, 4))
        e, s = rng.normal(size=(2, n, d))
        h = float(rng.uniform(0.3, 2.0))
        batch = kern.svgd_phi(e, s, h)
        for i in range(n):
            ref = naive_phi(e.tolist(), s.tolist(), e[i].tolist(), h)
            assert np.max(np.abs(phi_hat(ParticleSet(e, s), e[i], h) - ref)) <= 1e-12
            assert np.max(np.abs(np.asarray(batch[i]) - ref)) <= 1e-12


def test_attraction_linear_in_residual(rng):
    e, s = rng.normal(size=(2, 4, 3))
    h = 1.1
    q = e[1]
    # the repulsion term does not involve source, so subtract it via a zero-residual set
    rep = phi_hat(ParticleSet(e, e), q, h)
    att1 = phi_hat(ParticleSet(e, s), q, h) - rep
    att3 = phi_hat(ParticleSet(e, e - 3.0 * (e - s)), q, h) - rep
    np.testing.assert_allclose(att3, 3.0 * att1, rtol=1e-12, atol=1e-14)


def test_permutation_equivariance(rng):
    e, s = rng.normal(size=(2, 6, 3))
    perm = rng.permutation(6)
    cfg = TCSConfig(eta=0.3, L=5)
    a = tcs_update(ParticleSet(e, s), cfg).edited
    b = tcs_update(ParticleSet(e[perm], s[perm]), cfg).edited
    np.testing.assert_allclose(b, a[perm], atol=1e-12)


def test_synchronous_update(rng):
    e, s = rng.normal(size=(2, 5, 2))
    cfg = TCSConfig(eta=0.4, L=1, bandwidth=0.9)
    ps = ParticleSet(e, s)
    expected = e - 0.4 * np.array([naive_phi(e.tolist(), s.tolist(), q.tolist(), 0.9) for q in e])
    np.testing.assert_allclose(tcs_update(ps, cfg).edited, expected, atol=1e-12)
    assert np.array_equal(tcs_update(ps, cfg).source, s)


def test_single_particle_fixed_point():
    x = np.array([[1.0, -2.0, 0.5]])
    out = tcs_update(ParticleSet(x, x.copy()), TCSConfig(eta=0.5, L=50))
    assert np.max(np.abs(out.edited - x)) <= 1e-12
    assert np.array_equal(out.edited, x)


def test_single_particle_half_step():
    # kernel 1 at the particle itself, zero gradient: x <- x - eta * (x - z)
    out = tcs_update(ParticleSet([[1.0]], [[0.0]]), TCSConfig(eta=0.5, L=1, bandwidth=1e3))
    assert out.edited[0, 0] == pytest.approx(0.5, abs=1e-15)


def test_reference_step_size_oscillates_single_particle():
    trace = [ps.edited[0, 0] for ps, _ in iter_tcs(ParticleSet([[1.0]], [[0.0]]), TCSConfig(eta=REFERENCE_ETA, L=6, bandwidth=1e3))]
    assert trace == pytest.approx([-1.0, 1.0, -1.0, 1.0, -1.0, 1.0])


def test_iter_reports_bandwidths(rng):
    e, s = rng.normal(size=(2, 4, 2))
    hs = [h for _, h in iter_tcs(ParticleSet(e, s), TCSConfig(L=3))]
    assert len(hs) == 3 and hs[0] == median_bandwidth(np.vstack([e, s]))


@pytest.mark.parametrize("kw", [{"eta": 0.0}, {"L": 0}, {"bandwidth": "mean"}, {"bandwidth": -1.0}])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        TCSConfig(**kw)


def test_particle_set_validation():
    with pytest.raises(ValueError):
        ParticleSet(np.zeros((2, 3)), np.zeros((3, 3)))
    with pytest.raises(ValueError):
        ParticleSet(np.zeros((0, 3)), np.zeros((0, 3)))


def _mmd_oracle(a, b, h):
    k = lambda x, y: math.exp(-sum((xi - yi) ** 2 for xi, yi in zip(x, y)) / (2 * h * h))
    m = len(a)
    aa = sum(k(a[i], a[j]) for i in range(m) for j in range(m) if i != j) / (m * (m - 1))
    bb = sum(k(b[i], b[j]) for i in range(m) for j in range(m) if i != j) / (m * (m - 1))
    ab = sum(k(a[i], b[j]) for i in range(m) for j in range(m) if i != j) / (m * (m - 1))
    return aa + bb - 2 * ab


@pytest.mark.parametrize("backend", sorted(BACKENDS))
def test_mmd_identical_sets(backend, rng):
    a = rng.normal(size=(7, 3))
    assert abs(BACKENDS[backend].mmd2_unbiased(a, a.copy(), 1.0)) <= 1e-12


def test_mmd_two_point_far_clusters():
    a = np.array([[0.0, 0.0], [0.5, 0.0]])
    b = np.array([[100.0, 0.0], [100.0, 1.0]])
    h = 0.7
    expected = math.exp(-0.25 / (2 * h * h)) + math.exp(-1.0 / (2 * h * h))
    assert mmd2(a, b, h) == pytest.approx(expected, rel=1e-14)


def test_mmd_against_loop_oracle(rng):
    for _ in range(10):
        a, b = rng.normal(size=(2, 5, 3))
        assert mmd2(a, b, 1.2) == pytest.approx(_mmd_oracle(a.tolist(), b.tolist(), 1.2), abs=1e-13)


def test_mmd_unequal_sizes(rng):
    a, b = rng.normal(size=(4, 2)), rng.normal(size=(6, 2))
    k = lambda x, y: np.exp(-np.sum((x[:, None] - y[None]) ** 2, -1) / 2)
    kaa, kbb = k(a, a), k(b, b)
    ref = (kaa.sum() - 4) / 12 + (kbb.sum() - 6) / 30 - 2 * k(a, b).mean()
    assert mmd2(a, b, 1.0) == pytest.approx(ref, rel=1e-12)


def test_mmd_preconditions(rng):
    with pytest.raises(ValueError):
        mmd2(rng.normal(size=(1, 2)), rng.normal(size=(3, 2)), 1.0)
    with pytest.raises(ValueError):
        mmd2(rng.normal(size=(2, 2)), rng.normal(size=(3, 2)), 0.0)


@pytest.mark.skipif("cython" not in BACKENDS, reason="compiled kernels not built")
def test_backends_agree(rng):
    c, p = BACKENDS["cython"], _pykernels
    for n, d in [(1, 1), (3, 2), (16, 64), (40, 5)]:
        x, z = rng.normal(size=(2, n, d))
        np.testing.assert_allclose(c.pairwise_sq_dists(x, z), p.pairwise_sq_dists(x, z), rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(c.svgd_phi(x, z, 1.3), p.svgd_phi(x, z, 1.3), rtol=1e-12, atol=1e-14)
        if n >= 2:
            assert c.mmd2_unbiased(x, z, 1.3) == pytest.approx(p.mmd2_unbiased(x, z, 1.3), rel=1e-11, abs=1e-14)


def test_pure_python_fallback_selected_by_env():
    code = "from ccslab import _backend; print(_backend.BACKEND)"
    env = {**os.environ, "CCSLAB_PURE_PYTHON": "1"}
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
    assert BACKEND in ("cython", "python")


def test_eight_frame_toy_mmd_decreases():
    # frame 1 is passed through, leaving eight particles
    cfg = PipelineConfig(video=VideoConfig(n_frames=9), tcs=TCSConfig(eta=0.1, L=50))
    world = build_world(cfg)
    src = gen_toy_video(cfg, world=world)
    res = edit_video(src, src[0] + world.edit.delta, cfg, world)
    tr = res.mmd_trace
    assert len(tr) == 51
    assert all(b < a for a, b in zip(tr, tr[1:20]))
    assert tr[-1] < 0.2 * tr[0]
    assert metric_mmd(res.final.frames[1:], src.frames[1:], 1.0) == pytest.approx(
        mmd2(res.final.frames[1:], src.frames[1:], 1.0)
    )
