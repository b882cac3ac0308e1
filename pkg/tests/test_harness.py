import json
from pathlib import Path

import numpy as np
import pytest

from subflow.ambient import Hypersphere
from subflow.errors import CloudFormatError
from subflow.harness.baselines import (resample_polyline, sse_to_curve,
                                       tangent_pca_geodesic)
from subflow.harness.cli import main
from subflow.harness.datasets import (gen_bumpy_sphere, gen_s_surface, gen_sphere_cloud,
                                      gen_sphere_curve_dataset)
from subflow.harness.experiments import default_config, eigen_gap_report
from subflow.harness.io import load_cloud, save_cloud


def test_s_surface_generator():
    c = gen_s_surface(500, 0.0, 10, seed=3)
    assert c.points.shape == (500, 10)
    assert np.all(c.points[:, 3:] == 0)
    assert np.all((c.points[:, :3] >= 0) & (c.points[:, :3] <= 1))
    assert np.array_equal(c.points, gen_s_surface(500, 0.0, 10, seed=3).points)
    noisy = gen_s_surface(3000, 0.025, 100, seed=0)
    eps = noisy.points - noisy.truth["clean"]
    se = 0.025 / np.sqrt(eps.size)
    assert abs(eps.mean()) < 3 * se
    assert abs(eps.std() - 0.025) < 3 * 0.025 / np.sqrt(2 * eps.size)
    with pytest.raises(ValueError):
        gen_s_surface(10, 0.0, 2)


def test_sphere_cloud_generator():
    c = gen_sphere_cloud(1000, 2, 3, 0.0, seed=1)
    assert np.allclose(np.linalg.norm(c.points, axis=1), 1.0)
    c = gen_sphere_cloud(200, 4, 50, 0.0, seed=1)
    assert np.all(c.points[:, 5:] == 0)
    assert np.allclose(np.linalg.norm(c.points, axis=1), 1.0)
    noisy = gen_sphere_cloud(2000, 2, 3, 0.1, seed=2)
    eps = noisy.points - noisy.truth["clean"]
    assert abs(eps.std() - 0.1) < 3 * 0.1 / np.sqrt(2 * eps.size)
    with pytest.raises(ValueError):
        gen_sphere_cloud(10, 3, 3, 0.0)


def test_bumpy_sphere_generator():
    c = gen_bumpy_sphere(500, amplitude=0.1, seed=0)
    r = np.linalg.norm(c.points, axis=1)
    assert np.all((r >= 0.9) & (r <= 1.1))


def test_sphere_curve_dataset():
    cloud, curve = gen_sphere_curve_dataset(seed=4)
    assert len(cloud) == 100
    assert np.allclose(np.linalg.norm(cloud.points, axis=1), 1.0)
    roots = np.sort(curve.roots)
    assert np.all((roots > -1) & (roots < 1)) and len(np.unique(roots)) == 4
    assert np.allclose(curve.f(roots), 0.0, atol=1e-15)
    assert np.allclose(np.linalg.norm(curve.discretize(2000), axis=1), 1.0)
    d = Hypersphere(2).dist(cloud.points, cloud.truth["clean"])
    # per-axis variance 5e-4 in two tangent directions
    assert np.mean(d**2) == pytest.approx(2 * 5e-4, rel=0.3)


def test_csv_roundtrip(tmp_path):
    pts = np.array([[0.1, 0.2, 0.3], [1.0, -2.0, 3.5], [1e-9, 0.0, 7.0]])
    save_cloud(tmp_path / "c.csv", pts)
    assert np.array_equal(load_cloud(tmp_path / "c.csv").points, pts)
    (tmp_path / "raw.csv").write_text("1,2\n3,4\n")
    assert np.array_equal(load_cloud(tmp_path / "raw.csv").points, [[1, 2], [3, 4]])


def test_ply_vertices(tmp_path):
    text = ("ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\n"
            "property float z\nelement face 0\nproperty list uchar int vertex_indices\nend_header\n"
            "0 0 1\n1 0.5 0\n")
    (tmp_path / "c.ply").write_text(text)
    assert np.array_equal(load_cloud(tmp_path / "c.ply").points, [[0, 0, 1], [1, 0.5, 0]])


def test_malformed_row(tmp_path):
    (tmp_path / "bad.csv").write_text("x,y\n1,2\n3,oops\n")
    with pytest.raises(CloudFormatError) as err:
        load_cloud(tmp_path / "bad.csv")
    assert err.value.row == 3
    (tmp_path / "ragged.csv").write_text("1,2\n3\n")
    with pytest.raises(CloudFormatError):
        load_cloud(tmp_path / "ragged.csv")


def test_tangent_pca_great_circle():
    sphere = Hypersphere(2)
    th = np.linspace(-0.6, 0.8, 30)
    pts = np.column_stack([np.sin(th), np.zeros_like(th), np.cos(th)])
    g = tangent_pca_geodesic(pts, np.array([0.0, 0.0, 1.0]), sphere)
    assert not g.degenerate
    assert np.max(np.abs(g.points[:, 1])) < 1e-6
    assert np.allclose(g.direction, [1.0, 0.0, 0.0], atol=1e-6)
    assert g.t_range == pytest.approx((-0.6, 0.8))


def test_tangent_pca_two_clusters():
    pts = np.array([[2.0, 0.1], [2.0, -0.1], [-2.0, 0.1], [-2.0, -0.1]])
    g = tangent_pca_geodesic(pts, np.zeros(2))
    assert np.allclose(g.direction, [1.0, 0.0])
    assert g.t_range == pytest.approx((-2.0, 2.0))


def test_tangent_pca_degenerate():
    pts = np.tile([0.0, 0.0, 1.0], (5, 1))
    g = tangent_pca_geodesic(pts, np.array([0.0, 0.0, 1.0]), Hypersphere(2))
    assert g.degenerate


def test_sse():
    sphere = Hypersphere(2)
    th = np.linspace(0, 1, 50)
    curve = np.column_stack([np.cos(th), np.sin(th), np.zeros_like(th)])
    assert sse_to_curve(curve[::7], curve, sphere) == pytest.approx(0.0, abs=1e-14)
    a = th[25]
    x = np.array([[np.cos(0.1) * np.cos(a), np.cos(0.1) * np.sin(a), np.sin(0.1)]])
    assert sse_to_curve(x, curve, sphere) == pytest.approx(0.01, rel=1e-9)
    rng = np.random.default_rng(0)
    cloud = rng.normal(size=(40, 2))
    base = np.column_stack([np.linspace(-1, 1, 5), np.zeros(5)])
    dense = np.vstack([base, resample_polyline(base, 50)])
    assert sse_to_curve(cloud, dense) <= sse_to_curve(cloud, base)


def test_resample_polyline_even_spacing():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 3.0]])
    r = resample_polyline(pts, 9)
    assert np.allclose(np.linalg.norm(np.diff(r, axis=0), axis=1), 0.5)


def test_gap_report():
    rng = np.random.default_rng(0)
    plane = np.column_stack([rng.random((800, 2)), 1e-4 * rng.normal(size=800)])
    rows = eigen_gap_report(plane, 2, [0.1, 0.2, 0.3], n_sample=20, seed=0)
    assert len(rows) == 3
    assert all(r["mean_gap_ratio"] > 0.5 for r in rows)
    g = np.linspace(-1, 1, 21)
    grid = np.array(np.meshgrid(g, g, g)).reshape(3, -1).T
    rows = eigen_gap_report(grid, 1, [0.2], n_sample=20, seed=0, mode="uncentered")
    centre = eigen_gap_report(np.zeros((1, 3)) + grid[[len(grid) // 2]], 1, [0.2], n_sample=1)
    assert len(rows) == 1 and len(centre) == 1


def test_gap_report_isotropic_zero():
    g = np.linspace(-1, 1, 21)
    grid = np.array(np.meshgrid(g, g, g)).reshape(3, -1).T
    from subflow.subbundle import PrincipalSubbundle
    from subflow.moments import KernelConfig

    lam = PrincipalSubbundle(grid, 1, KernelConfig(0.2)).eigvals_at(np.zeros(3))
    assert (lam[0] - lam[1]) / lam[0] < 1e-10


def test_default_config_overrides():
    cfg = default_config("sec6.3", replicates=2)
    assert cfg.N == 10000 and cfg.d == 50 and cfg.sigma == 0.01 and cfg.replicates == 2
    with pytest.raises(ValueError):
        default_config("sec9")


def test_cli_exit_codes(tmp_path, capsys):
    out = tmp_path / "s.csv"
    assert main(["gen", "sphere", "--seed", "1", "--N", "400", "--out", str(out)]) == 0
    assert main(["gen", "sphere", "--N", "400", "--out", str(out)]) == 2
    assert main(["frame", "--cloud", str(out), "--k", "2", "--alpha", "0.3", "--point", "0,0,1"]) == 0
    assert main(["frame", "--cloud", str(out), "--k", "2", "--alpha", "0.3", "--point", "0,1"]) == 2
    assert main(["frame", "--cloud", str(out), "--k", "2", "--alpha", "-1", "--point", "0,0,1"]) == 2
    assert main(["frame", "--cloud", str(tmp_path / "missing.csv"), "--k", "2", "--alpha", "0.3",
                 "--point", "0,0,1"]) == 4
    bad = tmp_path / "bad.csv"
    bad.write_text("1,2,3\n4,x,6\n")
    assert main(["frame", "--cloud", str(bad), "--k", "2", "--alpha", "0.3", "--point", "0,0,1"]) == 4
    assert main(["frame", "--cloud", str(out), "--k", "2", "--alpha", "0.3", "--point", "100,0,0"]) == 3
    assert main(["geodesic", "--cloud", str(out), "--k", "2", "--alpha", "0.3", "--p", "0,0,1",
                 "--eta", "1,0,0", "--T", "0.1", "--delta", "0.01", "--out", str(tmp_path / "g.csv")]) == 0
    capsys.readouterr()


def test_cli_deterministic(tmp_path, capsys):
    paths = []
    for n in range(2):
        cloud = tmp_path / f"c{n}.csv"
        sm = tmp_path / f"sm{n}.csv"
        assert main(["gen", "sphere", "--seed", "5", "--N", "500", "--out", str(cloud)]) == 0
        assert main(["submanifold", "--cloud", str(cloud), "--k", "2", "--alpha", "0.3", "--cutoff", "1e-8",
                     "--mu", "0,0,1", "--r", "0.2", "--L", "6", "--delta", "0.02", "--seed", "5",
                     "--out", str(sm)]) == 0
        paths.append((cloud.read_bytes(), sm.read_bytes()))
    assert paths[0] == paths[1]
    report = json.loads(capsys.readouterr().out.split("\n}\n")[-2] + "\n}")
    assert report["points"] == 6 * 10 + 1


def test_surface_smoke_on_bumpy_sphere(tmp_path):
    from subflow.harness.experiments import run_experiment

    rep = run_experiment(default_config("sec6.1", seed=0, L=8, output_dir=str(tmp_path)))
    for entry in rep.metrics["submanifolds"]:
        assert entry["failures"] == 0
        assert entry["points"] == 8 * int(entry["r"] / 1e-2 + 1e-9) + 1
        # within three noise standard deviations of the true surface
        assert entry["max_surface_error"] < 3 * 0.01
    report = json.loads((tmp_path / "sec6.1_report.json").read_text())
    assert report["experiment"] == "sec6.1"
    assert rep.artifacts and all(Path(a).exists() for a in rep.artifacts)


def test_cli_experiment(tmp_path, capsys):
    assert main(["experiment", "sec6.1", "--seed", "0", "--L", "4", "--out-dir", str(tmp_path)]) == 0
    assert main(["experiment", "sec6.2", "--seed", "0"]) == 3
    assert main(["experiment", "nope", "--seed", "0"]) == 2
    capsys.readouterr()
