"""Benchmark generators and the evaluation helpers built on them."""

import numpy as np
import pytest

from topoembed.graph import PointCloud, pairwise_distances
from topoembed.persistence import (
    DiagramPoint,
    PersistenceDiagram,
    check_general_position,
    rips_diagram,
)
from topoembed.synth import (
    SphereProfile,
    SyntheticSpec,
    diagram_match_report,
    eight_circles_spec,
    gen_circle,
    gen_eight_circles,
    gen_torus,
    generate,
    inscribed_sphere_profile,
    pca_projection,
    prominent_points,
    torus_spec,
    write_profile,
)


def h1(points):
    pts = tuple(
        DiagramPoint(1, b, d, (0, 1), (2, 3)) for b, d in points
    )
    return PersistenceDiagram(1, pts)


# ------------------------------------------------------------------- specs


@pytest.mark.parametrize(
    "kwargs",
    [
        {"kind": "sphere"},
        {"counts": (0, 16)},
        {"radii": (0.0, 1.0)},
        {"radii": (0.3, -1.0)},
        {"jitter": -1e-3},
    ],
)
def test_spec_rejects(kwargs):
    base = dict(kind="eight_circles", counts=(8, 16), radii=(0.3, 1.0))
    base.update(kwargs)
    with pytest.raises(ValueError):
        SyntheticSpec(**base)


def test_generators_check_their_kind():
    with pytest.raises(ValueError, match="kind"):
        gen_torus(eight_circles_spec())
    with pytest.raises(ValueError, match="kind"):
        gen_eight_circles(torus_spec())
    with pytest.raises(ValueError, match="kind"):
        gen_circle(torus_spec())


def test_self_intersecting_torus_rejected():
    spec = SyntheticSpec("torus", (8, 8), (2.0, 1.0))
    with pytest.raises(ValueError, match="tube radius"):
        gen_torus(spec)


def test_generation_is_deterministic_per_seed():
    a = generate(eight_circles_spec(seed=5))
    b = generate(eight_circles_spec(seed=5))
    c = generate(eight_circles_spec(seed=6))
    assert np.array_equal(a.points, b.points)
    assert not np.array_equal(a.points, c.points)


def test_jitter_is_bounded_and_optional():
    spec = SyntheticSpec("eight_circles", (8, 16), (0.3, 1.0), jitter=2e-3, seed=1)
    clean = SyntheticSpec("eight_circles", (8, 16), (0.3, 1.0), jitter=0.0)
    dev = np.abs(generate(spec).points - generate(clean).points)
    assert 0 < dev.max() <= 2e-3


# --------------------------------------------------------------- geometry


def test_eight_circles_geometry():
    pc = generate(SyntheticSpec("eight_circles", (8, 16), (0.3, 1.0), jitter=0.0))
    assert pc.points.shape == (128, 2)
    # first point of the first circle: center (1, 0) plus radius along x
    assert np.allclose(pc.points[0], [1.3, 0.0])
    centers = np.stack(
        [np.cos(2 * np.pi * np.arange(8) / 8), np.sin(2 * np.pi * np.arange(8) / 8)],
        axis=1,
    )
    spread = pc.points.reshape(8, 16, 2) - centers[:, None, :]
    assert np.allclose(np.linalg.norm(spread, axis=2), 0.3)


def test_circle_geometry():
    pc = generate(SyntheticSpec("circle", (1, 32), (1.0, 2.5), jitter=0.0))
    assert pc.points.shape == (32, 2)
    assert np.allclose(np.linalg.norm(pc.points, axis=1), 2.5)


def test_torus_grid_size():
    assert generate(SyntheticSpec("torus", (16, 8), (1.0, 2.0))).points.shape == (128, 3)
    assert generate(torus_spec()).points.shape == (512, 3)


def test_torus_implicit_equation():
    r, R = 1.0, 2.0
    pc = generate(SyntheticSpec("torus", (16, 8), (r, R), jitter=0.0))
    x, y, z = pc.points.T
    residual = (np.sqrt(x**2 + y**2) - R) ** 2 + z**2 - r**2
    assert np.abs(residual).max() < 1e-12


def test_default_clouds_are_in_general_position():
    for seed in (0, 1):
        pc = generate(eight_circles_spec(seed=seed))
        ok, _ = check_general_position(pairwise_distances(pc.points))
        assert ok
    tiny = SyntheticSpec("eight_circles", (8, 16), (0.3, 1.0), jitter=1e-6, seed=0)
    ok, _ = check_general_position(pairwise_distances(generate(tiny).points))
    assert ok


# ------------------------------------------------------------- prominence


def test_prominent_points_rule():
    assert prominent_points(PersistenceDiagram(1, ())) == []
    dgm = h1([(0.0, 10.0), (0.0, 1.0), (0.0, 1.0), (0.0, 1.0), (0.0, 1.0)])
    assert [p.death for p in prominent_points(dgm)] == [10.0]
    # threshold is strict and the ratio is adjustable
    assert len(prominent_points(dgm, ratio=9.0)) == 1
    assert len(prominent_points(dgm, ratio=10.0)) == 0


def test_eight_circles_cloud_shows_nine_prominent_cycles():
    # eight generated circles plus the large arrangement cycle, against a
    # tail of small cycles from the gaps between neighboring circles
    for seed in (0, 1, 2):
        pc = generate(eight_circles_spec(seed=seed))
        dgm = rips_diagram(pairwise_distances(pc.points), max_dim=1)[1]
        assert len(prominent_points(dgm)) == 9


def test_default_torus_has_two_loops_and_one_void():
    pc = generate(torus_spec())
    diagrams = rips_diagram(pairwise_distances(pc.points), max_dim=2)
    assert len(prominent_points(diagrams[1])) == 2
    assert len(prominent_points(diagrams[2])) == 1


# ---------------------------------------------------------------- profile


def test_profile_validation():
    flat2d = PointCloud(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]))
    with pytest.raises(ValueError, match="R\\^3"):
        inscribed_sphere_profile(flat2d)
    pc = generate(SyntheticSpec("torus", (8, 8), (1.0, 2.0)))
    with pytest.raises(ValueError, match="angles"):
        inscribed_sphere_profile(pc, K=3)
    with pytest.raises(ValueError):
        SphereProfile(np.zeros(3), np.zeros(4))
    with pytest.raises(ValueError):
        SphereProfile(np.zeros(3), np.array([0.1, -0.2, 0.3]))
    assert SphereProfile(np.zeros(2), np.zeros(2)).coefficient_of_variation() == np.inf


def test_dense_torus_profile_is_flat_at_tube_ratio():
    pc = generate(SyntheticSpec("torus", (64, 32), (1.0, 2.0), 5e-3, 0))
    prof = inscribed_sphere_profile(pc)
    ideal = 1.0 / 6.0  # r / (2 (R + r))
    assert np.abs(prof.radii - ideal).max() < 0.1 * ideal
    assert prof.coefficient_of_variation() < 0.05
    assert prof.angles.shape == (100,)


def test_flat_annulus_profiles_near_zero():
    pts = generate(SyntheticSpec("torus", (100, 40), (1.0, 2.0), 5e-3, 1)).points.copy()
    pts[:, 2] = 0.0
    pts += np.random.default_rng(2).uniform(-5e-3, 5e-3, pts.shape)
    prof = inscribed_sphere_profile(PointCloud(pts))
    assert prof.radii.max() < 0.02


def test_profile_rotation_equivariance():
    pc = generate(SyntheticSpec("torus", (64, 32), (1.0, 2.0), 5e-3, 0))
    base = inscribed_sphere_profile(pc)
    th = 2 * np.pi * 7 / 100
    rot = np.array(
        [[np.cos(th), -np.sin(th), 0], [np.sin(th), np.cos(th), 0], [0, 0, 1]]
    )
    turned = inscribed_sphere_profile(PointCloud(pc.points @ rot.T))
    assert np.abs(np.roll(base.radii, 7) - turned.radii).max() < 1e-9


def test_empty_slabs_warn_and_record_zero():
    rng = np.random.default_rng(0)
    clusters = np.vstack(
        [rng.normal([1, 0, 0], 0.01, (5, 3)), rng.normal([-1, 0, 0], 0.01, (5, 3))]
    )
    with pytest.warns(UserWarning, match="empty slab"):
        prof = inscribed_sphere_profile(PointCloud(clusters), K=8)
    assert (prof.radii == 0).any()


def test_profile_csv(tmp_path):
    prof = inscribed_sphere_profile(
        generate(SyntheticSpec("torus", (16, 8), (1.0, 2.0))), K=12
    )
    path = tmp_path / "profile.csv"
    write_profile(path, prof)
    lines = path.read_text().splitlines()
    assert lines[0] == "angle,radius"
    assert len(lines) == 13
    parsed = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
    assert np.allclose(parsed[:, 0], prof.angles)
    assert np.allclose(parsed[:, 1], prof.radii)


# ----------------------------------------------------------------- report


def test_match_report_identity():
    dgm = h1([(0.0, 2.0), (0.5, 1.0)])
    report = diagram_match_report(dgm, dgm, epsilon=1e-2)
    assert report["fg_exact"] == 0.0
    assert report["sfg"] == pytest.approx(0.0, abs=1e-9)
    assert sorted(report["pairs"]) == [[0, 0], [1, 1]]


def test_match_report_pairs_and_value():
    emb = h1([(0.0, 2.0)])
    target = h1([(0.1, 2.1), (4.0, 4.1)])
    report = diagram_match_report(emb, target, epsilon=1e-2)
    assert report["pairs"] == [[0, 0], [None, 1]]
    # matched pair pays |x - y|^2 = 0.02, the leftover target point pays its
    # squared diagonal distance (0.1)^2/2
    assert report["fg_exact"] == pytest.approx(0.025)
    assert report["sfg"] >= -1e-9


def test_match_report_cardinality_forcing():
    emb = h1([(0.0, 2.0)])
    target = h1([(0.0, 2.0 + 0.01 * k) for k in range(9)])
    report = diagram_match_report(emb, target, epsilon=1e-2)
    diagonal_targets = [p for p in report["pairs"] if p[0] is None]
    assert len(diagonal_targets) == 8
    swapped = diagram_match_report(target, emb, epsilon=1e-2)
    assert swapped["fg_exact"] == pytest.approx(report["fg_exact"])


# -------------------------------------------------------------------- pca


def test_pca_projection_shapes_and_rank():
    rng = np.random.default_rng(0)
    basis = rng.normal(size=(2, 5))
    flat = rng.normal(size=(40, 2)) @ basis  # rank-2 cloud in R^5
    proj = pca_projection(flat)
    assert proj.shape == (40, 3)
    assert np.abs(proj[:, 2]).max() < 1e-9
    variances = proj.var(axis=0)
    assert variances[0] >= variances[1] >= variances[2]
    planar = pca_projection(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]]))
    assert planar.shape == (3, 3)
    assert np.allclose(planar[:, 2], 0.0)
