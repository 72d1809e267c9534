import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gpplan.errors import InvalidArgumentError
from gpplan.workspace import (
    Box,
    Disk,
    OccupancyGrid,
    Scene2D,
    build_sdf,
    gradient,
    load_scene,
    query,
    query_and_gradient,
    rasterize,
    read_sdf_csv,
    scene_from_dict,
    write_sdf_csv,
)


@pytest.fixture(scope="module")
def disk_field():
    scene = Scene2D((-1.0, -1.0), (1.0, 1.0), (Disk((0.05, 0.05), 0.32),))
    return scene, build_sdf(rasterize(scene, 0.1))


def brute_force(occ, cs):
    h, w = occ.shape
    ys, xs = np.mgrid[0:h, 0:w]
    pts = np.stack([xs.ravel(), ys.ravel()], -1) * cs
    o = occ.ravel()
    D = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
    out = np.where(o, -np.min(np.where(~o[None], D, np.inf), axis=1),
                   np.min(np.where(o[None], D, np.inf), axis=1))
    return out.reshape(h, w)


def test_rasterize_marks_centres_inside():
    scene = Scene2D((0.0, 0.0), (1.0, 1.0), (Box((0.5, 0.5), (0.2, 0.1)),))
    grid = rasterize(scene, 0.1)
    assert grid.occupied.shape == (10, 10)
    expected = Box((0.5, 0.5), (0.2, 0.1)).contains(grid.cell_centers())
    np.testing.assert_array_equal(grid.occupied, expected)
    assert grid.occupied.sum() == 4 * 2


def test_rasterize_rejects_huge_cells():
    scene = Scene2D((0.0, 0.0), (1.0, 1.0))
    with pytest.raises(InvalidArgumentError):
        rasterize(scene, 2.0)
    with pytest.raises(InvalidArgumentError):
        rasterize(scene, 0.0)


def test_scene_validation():
    with pytest.raises(InvalidArgumentError):
        Scene2D((0.0, 0.0), (0.0, 1.0))
    with pytest.raises(InvalidArgumentError):
        Scene2D((0.0, 0.0), (1.0, 1.0), (Disk((5.0, 5.0), 0.1),))


def test_sdf_frozen_brute_force_values(disk_field):
    # frozen from a brute-force nearest-cell search on the same rasterization
    _, sdf = disk_field
    expected = {(10, 10): -0.36055512754639896, (10, 14): 0.1, (0, 0): 1.1313708498984762,
                (12, 3): 0.41231056256176596, (19, 10): 0.6}
    for (j, i), v in expected.items():
        assert sdf.values[j, i] == pytest.approx(v, abs=1e-12)


def test_disk_centre_is_minus_radius(disk_field):
    _, sdf = disk_field
    assert query(sdf, [0.05, 0.05]) == pytest.approx(-0.32, abs=0.1)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31), density=st.floats(0.05, 0.6))
def test_edt_exact_on_random_grids(seed, density):
    rng = np.random.default_rng(seed)
    occ = rng.random((12, 15)) < density
    occ[0, 0], occ[-1, -1] = True, False
    sdf = build_sdf(OccupancyGrid(np.zeros(2), 0.25, occ))
    np.testing.assert_allclose(sdf.values, brute_force(occ, 0.25), atol=1e-12)


def test_all_free_grid_is_capped():
    grid = OccupancyGrid(np.zeros(2), 0.5, np.zeros((4, 6), dtype=bool))
    sdf = build_sdf(grid)
    np.testing.assert_allclose(sdf.values, 0.5 * np.hypot(4, 6))


def test_single_cell_distance():
    occ = np.zeros((9, 9), dtype=bool)
    occ[4, 4] = True
    sdf = build_sdf(OccupancyGrid(np.zeros(2), 0.1, occ))
    assert sdf.values[4, 7] == pytest.approx(0.3, abs=1e-12)


def test_query_interpolation():
    # a dyadic cell size keeps cell-centre coordinates exact
    scene = Scene2D((-1.0, -1.0), (1.0, 1.0), (Disk((0.1, 0.0), 0.3),))
    sdf = build_sdf(rasterize(scene, 0.125))
    c = sdf.origin + (np.array([3, 5]) + 0.5) * sdf.cell_size
    assert query(sdf, c) == sdf.values[5, 3]
    mid = c + [0.5 * sdf.cell_size, 0.0]
    assert query(sdf, mid) == pytest.approx(0.5 * (sdf.values[5, 3] + sdf.values[5, 4]), abs=1e-15)


def test_query_vs_brute_force_distance(disk_field):
    scene, sdf = disk_field
    grid = rasterize(scene, sdf.cell_size)
    occ_pts = grid.cell_centers()[grid.occupied]
    rng = np.random.default_rng(4)
    pts = rng.uniform(-0.95, 0.95, size=(200, 2))
    d = np.min(np.linalg.norm(pts[:, None] - occ_pts[None], axis=-1), axis=1)
    free = ~grid.occupied[((pts[:, 1] + 1) / 0.1).astype(int), ((pts[:, 0] + 1) / 0.1).astype(int)]
    assert np.all(np.abs(query(sdf, pts)[free] - d[free]) <= 2 * sdf.cell_size)


def test_sign_correctness(disk_field):
    _, sdf = disk_field
    assert query(sdf, [0.05, 0.05]) < 0
    assert query(sdf, [-0.95, 0.95]) > 0 and query(sdf, [0.95, -0.95]) > 0


def test_out_of_bounds_adds_distance(disk_field):
    _, sdf = disk_field
    inner = query(sdf, [0.95, 0.0])
    assert query(sdf, [1.45, 0.0]) == pytest.approx(inner + 0.5, abs=1e-12)
    g = gradient(sdf, [1.45, 0.0])
    assert g[0] == pytest.approx(1.0, abs=1e-12)


def test_gradient_next_to_wall():
    scene = Scene2D((0.0, 0.0), (4.0, 2.0), (Box((0.1, 1.0), (0.1, 1.0)),))
    sdf = build_sdf(rasterize(scene, 0.02))
    g = gradient(sdf, [1.5, 1.0])
    np.testing.assert_allclose(g, [1.0, 0.0], atol=0.1)


def test_gradient_symmetry():
    scene = Scene2D((-2.0, -1.0), (2.0, 1.0), (Disk((-1.0, 0.0), 0.3), Disk((1.0, 0.0), 0.3)))
    sdf = build_sdf(rasterize(scene, 0.05))
    assert abs(gradient(sdf, [0.0, 0.3])[0]) <= 1e-9


def test_gradient_bounded_and_continuity(disk_field):
    _, sdf = disk_field
    rng = np.random.default_rng(5)
    # inside the bounds: outside them the clamped value plus the outward distance
    # can have a gradient norm of up to sqrt(2)
    pts = rng.uniform(-1.0, 1.0, size=(300, 2))
    # centre-sampled values jump by up to two cells across the obstacle boundary
    away = np.abs(query(sdf, pts)) > 2 * sdf.cell_size
    assert away.sum() > 200
    assert np.all(np.linalg.norm(gradient(sdf, pts[away]), axis=-1) <= 1.2)
    delta = rng.normal(size=(300, 2)) * 0.05
    change = np.abs(query(sdf, pts) - query(sdf, pts + delta))
    assert np.all(change <= np.linalg.norm(delta, axis=-1) + 2 * sdf.cell_size)


def test_exact_gradient_matches_finite_differences(disk_field):
    _, sdf = disk_field
    rng = np.random.default_rng(6)
    h = 1e-7
    for p in rng.uniform(-1.3, 1.3, size=(50, 2)):
        _, g = query_and_gradient(sdf, p)
        fd = [(query(sdf, p + h * e) - query(sdf, p - h * e)) / (2 * h) for e in np.eye(2)]
        np.testing.assert_allclose(g, fd, atol=1e-6)


def test_neighbour_lipschitz(disk_field):
    _, sdf = disk_field
    v = sdf.values
    cs = sdf.cell_size
    pairs = [(v[1:], v[:-1]), (v[:, 1:], v[:, :-1]), (v[1:, 1:], v[:-1, :-1]), (v[1:, :-1], v[:-1, 1:])]
    for a, b in pairs:
        same = np.sign(a) == np.sign(b)
        assert np.all(np.abs(a - b)[same] <= np.sqrt(2) * cs + 1e-12)
        # across the boundary both sides are measured centre to centre
        assert np.all(np.abs(a - b)[~same] <= 2 * np.sqrt(2) * cs + 1e-12)


def test_scene_json_and_csv_round_trip(tmp_path, disk_field):
    scene, sdf = disk_field
    path = tmp_path / "scene.json"
    path.write_text(json.dumps(scene.to_dict(0.1)))
    loaded, cs = load_scene(path)
    assert loaded == scene and cs == 0.1
    csv = tmp_path / "sdf.csv"
    write_sdf_csv(sdf, csv)
    assert csv.read_text().splitlines()[0] == "20,20,0.1,-1.0,-1.0"
    back = read_sdf_csv(csv)
    np.testing.assert_array_equal(back.values, sdf.values)
    with pytest.raises(InvalidArgumentError):
        scene_from_dict({"bounds": {"min": [0, 0], "max": [1, 1]}, "obstacles": [{"type": "star"}]})
