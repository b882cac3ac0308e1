import numpy as np
import pytest

from subflow.errors import NoDescentError
from subflow.geodesics import integrate, sr_exp
from subflow.harness.datasets import gen_sphere_cloud
from subflow.logmap import LogOptions, _bfgs, sr_distance, sr_log
from subflow.moments import KernelConfig
from subflow.subbundle import PrincipalSubbundle


@pytest.fixture(scope="module")
def planar_field(planar_cloud):
    return PrincipalSubbundle(planar_cloud, 2, KernelConfig(0.3))


@pytest.fixture(scope="module")
def sphere_field():
    cloud = gen_sphere_cloud(2000, 2, 3, 0.0, seed=0)
    return PrincipalSubbundle(cloud, 2, KernelConfig(0.1, cutoff=1e-8))


def test_log_of_base_is_zero(planar_field):
    p = np.array([0.1, 0.2, 0.0])
    res = sr_log(planar_field, p, p)
    assert np.array_equal(res.eta_hat, np.zeros(3))
    assert res.residual == 0.0
    assert sr_distance(planar_field, p, p) == 0.0


def test_planar_roundtrip(planar_field):
    p = np.array([0.1, -0.1, 0.0])
    eta0 = 0.3 * np.array([0.6, 0.8, 0.0])
    y = sr_exp(planar_field, p, eta0, delta=1e-3)
    res = sr_log(planar_field, p, y, space="dual_subbundle")
    assert np.linalg.norm(res.eta_hat - eta0) < 1e-3
    assert res.residual < 1e-4
    G = planar_field.frame(p).cometric.matrix
    assert np.linalg.norm(res.eta_hat - G @ res.eta_hat) < 1e-9


def test_full_cotangent_search(planar_field):
    p = np.array([0.0, 0.0, 0.0])
    y = np.array([0.2, -0.1, 0.0])
    res = sr_log(planar_field, p, y, space="full_cotangent", opts=LogOptions(n_random=1))
    assert res.residual < 1e-4
    assert sr_distance(planar_field, p, y, opts=LogOptions(n_random=1)) == pytest.approx(np.hypot(0.2, 0.1),
                                                                                          rel=1e-3)


def test_off_subbundle_target_leaves_residual(planar_field):
    p = np.zeros(3)
    y = np.array([0.1, 0.0, 0.05])
    res = sr_log(planar_field, p, y, opts=LogOptions(n_random=1))
    assert res.residual == pytest.approx(0.05, rel=1e-2)
    d = sr_distance(planar_field, p, y, opts=LogOptions(n_random=1))
    assert d >= np.linalg.norm(y - p) - res.residual - 1e-6


def test_unknown_space(planar_field):
    with pytest.raises(ValueError):
        sr_log(planar_field, np.zeros(3), np.ones(3), space="tangent")


def test_bfgs_monotone_and_converges():
    A = np.diag([1.0, 10.0])

    def fun(X):
        return 0.5 * np.einsum("bi,ij,bj->b", X - 1.0, A, X - 1.0)

    run = _bfgs(fun, np.array([3.0, -2.0]), 200, 1e-10, 1e-6)
    assert run.converged
    assert np.allclose(run.x, 1.0, atol=1e-6)


def test_bfgs_accepted_iterates_never_increase():
    values = []

    def rosen(X):
        return (1 - X[:, 0]) ** 2 + 100 * (X[:, 1] - X[:, 0] ** 2) ** 2

    x = np.array([-1.2, 1.0])
    for it in range(1, 30):
        run = _bfgs(rosen, x, it, 1e-12, 1e-7)
        values.append(run.f)
    assert all(b <= a + 1e-15 for a, b in zip(values, values[1:]))


def test_all_restarts_failing_raises(planar_field, monkeypatch):
    import subflow.logmap as logmap

    real = logmap.sr_exp_batch

    def failing(frames, p, etas, **kw):
        ends, batch = real(frames, p, etas, **kw)
        batch.status[:] = 1
        return ends, batch

    monkeypatch.setattr(logmap, "sr_exp_batch", failing)
    with pytest.raises(NoDescentError):
        sr_log(planar_field, np.zeros(3), np.array([0.2, 0.0, 0.0]), opts=LogOptions(n_random=1))


def test_constant_speed_distance_on_sphere(sphere_field):
    mu = np.array([0.0, -1.0, 0.0])
    eta = sphere_field.frame(mu).F @ np.array([0.6, 0.8])
    y = integrate(sphere_field, mu, eta, 1.0, 1e-3).endpoint
    d = sr_distance(sphere_field, mu, y, opts=LogOptions(n_random=1))
    assert d == pytest.approx(1.0, rel=0.02)
