import numpy as np
import pytest

from subflow.errors import NoSubmanifoldInRange
from subflow.harness.datasets import gen_s_surface, gen_sphere_cloud
from subflow.logmap import LogOptions
from subflow.geodesics import sr_exp
from subflow.moments import KernelConfig
from subflow.subbundle import PrincipalSubbundle
from subflow.submanifold import (PrincipalSubmanifold, combine, frechet_base_point, generate,
                                 project_continuous, project_discrete, unit_directions)


@pytest.fixture(scope="module")
def planar_field(planar_cloud):
    return PrincipalSubbundle(planar_cloud, 2, KernelConfig(0.3))


@pytest.fixture(scope="module")
def planar_sm(planar_field):
    return generate(None, np.zeros(3), 2, 0.3, 0.4, 8, 1e-2, frames=planar_field)


def test_point_count_k1():
    x = np.linspace(-1.0, 1.0, 201)
    line = np.column_stack([x, np.zeros_like(x), np.zeros_like(x)])
    field = PrincipalSubbundle(line, 1, KernelConfig(0.1))
    sm = generate(None, np.zeros(3), 1, 0.1, 0.05, 2, 1e-2, frames=field)
    assert sm.steps == 5
    assert len(sm) == 11
    assert sm.log == []


def test_point_count_general(planar_sm):
    assert len(planar_sm) == planar_sm.steps * planar_sm.L + 1
    assert np.array_equal(planar_sm.index[0], [0, 0])


def test_planar_oracle(planar_sm):
    r = planar_sm.r
    assert np.max(np.abs(planar_sm.points[:, 2])) < 1e-6 * r
    offsets = (planar_sm.points - planar_sm.mu) @ planar_sm.frame
    assert np.max(np.abs(offsets - planar_sm.chart)) < 1e-4


def test_unit_initial_hamiltonian(planar_sm):
    assert np.allclose(planar_sm.hamiltonian[:, 0], 0.5, atol=1e-8)
    assert np.allclose(np.linalg.norm(planar_sm.covectors, axis=1), 1.0)


def test_radial_isometry(planar_sm):
    dist = np.linalg.norm(planar_sm.points - planar_sm.mu, axis=1)
    assert np.max(np.abs(dist - planar_sm.arclen)) < 1e-4
    assert np.allclose(np.linalg.norm(planar_sm.chart, axis=1), planar_sm.arclen)


def test_sphere_oracle():
    cloud = gen_sphere_cloud(3000, 2, 3, 0.0, seed=1)
    delta = 1e-2
    sm = generate(cloud, np.array([0.0, 0.0, 1.0]), 2, KernelConfig(0.1, cutoff=1e-8), 1.0, 8, delta)
    assert sm.log == []
    assert np.max(np.abs(np.linalg.norm(sm.points, axis=1) - 1.0)) < 10 * delta


def test_truncated_geodesics_excluded_or_kept(planar_cloud):
    field = PrincipalSubbundle(planar_cloud, 2, KernelConfig(0.05))
    mu = np.array([0.8, 0.0, 0.0])
    ex = generate(None, mu, 2, 0.05, 3.0, 4, 5e-2, frames=field)
    kept = generate(None, mu, 2, 0.05, 3.0, 4, 5e-2, frames=field, truncated="keep_prefix")
    assert [e["geodesic"] for e in ex.log] == [1, 2, 3, 4]
    assert len(ex) == 1 and not any(e["kept"] for e in ex.log)
    for e in kept.log:
        assert e["kept"] and np.sum(kept.index[:, 0] == e["geodesic"]) == e["valid_steps"] > 0
    assert len(kept) == 1 + sum(e["valid_steps"] for e in kept.log)
    with pytest.raises(ValueError):
        generate(None, mu, 2, 0.05, 0.6, 4, 2e-2, frames=field, truncated="drop")


def test_unit_directions():
    assert np.array_equal(unit_directions(1, 4)[:, 0], [1, -1, 1, -1])
    for k in (2, 3, 5):
        assert np.allclose(np.linalg.norm(unit_directions(k, 7), axis=1), 1.0)
    with pytest.raises(ValueError):
        unit_directions(0, 3)


def test_project_discrete(planar_sm):
    p = planar_sm.points[17]
    pt, ch, d = project_discrete(p, planar_sm)
    assert np.array_equal(pt, p) and d == 0.0
    assert np.array_equal(ch, planar_sm.chart[17])
    pt, _, _ = project_discrete(planar_sm.mu + 1e-6, planar_sm)
    assert np.array_equal(pt, planar_sm.mu)
    pts, _, ds = project_discrete(planar_sm.points[:5], planar_sm)
    assert np.array_equal(pts, planar_sm.points[:5]) and np.all(ds == 0)


def test_project_discrete_tie_breaks_to_lowest_index():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0]])
    sm = PrincipalSubmanifold(mu=pts[0], r=1.0, k=1, alpha=0.1, L=2, delta=1.0, frame=np.eye(2)[:, :1],
                              directions=np.array([[1.0], [-1.0]]), points=pts,
                              index=np.array([[0, 0], [1, 1], [2, 1]]), arclen=np.array([0.0, 1.0, 1.0]),
                              chart=np.array([[0.0], [1.0], [-1.0]]))
    pt, ch, d = project_discrete(np.array([0.0, 1.0]), sm)
    assert np.array_equal(pt, pts[0])
    sm.points = np.array([[5.0, 5.0], [1.0, 0.0], [-1.0, 0.0]])
    pt, ch, d = project_discrete(np.array([0.0, 0.0]), sm)
    assert np.array_equal(pt, [1.0, 0.0]) and ch[0] == 1.0 and d == 1.0


def test_project_continuous(planar_field):
    mu = np.zeros(3)
    pt, ch = project_continuous(mu, mu, planar_field)
    assert np.array_equal(pt, mu) and np.array_equal(ch, np.zeros(2))
    F = planar_field.frame(mu).F
    c0 = np.array([0.15, -0.2])
    x = sr_exp(planar_field, mu, F @ c0, delta=1e-3)
    pt, ch = project_continuous(x, mu, planar_field, opts=LogOptions(n_random=1))
    assert np.linalg.norm(ch - c0) < 1e-3
    assert np.linalg.norm(pt - x) < 1e-3


def test_frechet_tie_and_middle():
    a = np.array([1.0, 2.0])
    assert np.array_equal(frechet_base_point(np.array([-a, a])), -a)
    line = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    assert np.array_equal(frechet_base_point(line[[2, 1, 0]]), [1.0, 0.0])
    assert np.array_equal(frechet_base_point(line, metric="geodesic"), [1.0, 0.0])
    with pytest.raises(ValueError):
        frechet_base_point(line, metric="manhattan")


def test_frechet_on_sphere_uses_arc_length():
    th = np.array([0.0, 0.4, 0.8])
    pts = np.column_stack([np.cos(th), np.sin(th), np.zeros(3)])
    from subflow.ambient import Hypersphere

    assert np.array_equal(frechet_base_point(pts, metric="geodesic", geom=Hypersphere(2)), pts[1])


def test_s_surface_local_mean():
    cloud = gen_s_surface(3000, 0.025, 100, seed=0)
    mu = frechet_base_point(cloud, "euclidean", kernel=KernelConfig(0.01))
    assert np.max(np.abs(mu[:3] - np.array([0.47, 0.47, 0.49]))) < 0.05


def _flat(offset, r=1.0):
    g = np.linspace(0.0, r, 11)
    pts = np.vstack([[0.0, offset], np.column_stack([g[1:], np.full(10, offset)])])
    n = len(pts)
    return PrincipalSubmanifold(mu=pts[0], r=r, k=1, alpha=0.1, L=1, delta=0.1, frame=np.eye(2)[:, :1],
                                directions=np.ones((1, 1)), points=pts,
                                index=np.column_stack([np.r_[0, np.ones(n - 1)], np.arange(n)]).astype(int),
                                arclen=np.r_[0.0, g[1:]], chart=np.r_[0.0, g[1:]][:, None])


def test_combine_single_and_symmetric():
    a, b = _flat(0.1), _flat(-0.1)
    x = np.array([0.5, 0.0])
    assert np.array_equal(combine([a], x, 1.0), a.points[5])
    assert np.allclose(combine([a, b], x, 1.0), [0.5, 0.0])


def test_combine_out_of_range_and_hull():
    a, b = _flat(0.1), _flat(-0.3)
    with pytest.raises(NoSubmanifoldInRange):
        combine([a, b], np.array([0.5, 5.0]), 0.5)
    out = combine([a, b], np.array([0.32, 0.0]), 1.0)
    assert -0.3 <= out[1] <= 0.1 and out[0] == pytest.approx(0.3)
    with pytest.raises(ValueError):
        combine([], np.zeros(2), 1.0)
    with pytest.raises(ValueError):
        combine([a], np.zeros(2), 0.0)


def test_csv_and_npz_roundtrip(planar_sm, tmp_path):
    planar_sm.to_csv(tmp_path / "sm.csv")
    rows = np.loadtxt(tmp_path / "sm.csv", delimiter=",", skiprows=1)
    assert rows.shape == (len(planar_sm), 3 + 3 + 2)
    assert np.array_equal(rows[:, 3:6], planar_sm.points)
    planar_sm.save(tmp_path / "sm.npz")
    back = PrincipalSubmanifold.load(tmp_path / "sm.npz")
    assert np.array_equal(back.points, planar_sm.points)
    assert np.array_equal(back.chart, planar_sm.chart)
    assert back.r == planar_sm.r and back.L == planar_sm.L
