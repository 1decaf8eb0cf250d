from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from du_doa.array import (
    ArrayGeometry,
    ArrayKind,
    Direction,
    build_grid,
    grid_delays,
    load_geometry,
    propagation_delays,
    steering_table,
    steering_vector,
    unit_vector,
)
from du_doa.errors import ConfigurationError

from conftest import random_psd

angles = st.tuples(st.floats(-180, 180), st.floats(-90, 90))
freqs = st.floats(0, 24000)


def _geom(seed: int, m: int = 4) -> ArrayGeometry:
    return ArrayGeometry(np.random.default_rng(seed).uniform(-0.1, 0.1, (m, 3)))


# -- geometry ------------------------------------------------------------


@pytest.mark.parametrize(
    "positions, c",
    [
        ([[0, 0, 0]], 343.0),
        ([[0, 0, 0], [0, 0, 0]], 343.0),
        ([[0, 0, 0], [np.nan, 0, 0]], 343.0),
        ([[0, 0, 0], [1, 0, 0]], 0.0),
        ([[0, 0], [1, 0]], 343.0),
    ],
)
def test_geometry_rejects_invalid(positions, c):
    with pytest.raises(ConfigurationError):
        ArrayGeometry(positions, c)


def test_linear_geometry_is_canonicalized_to_x_axis():
    g = ArrayGeometry([[0, 0, 0], [0, 0.1, 0], [0, 0.2, 0]], kind="linear")
    np.testing.assert_allclose(g.positions[:, 0], [0, 0.1, 0.2])
    assert np.all(g.positions[:, 1:] == 0)
    with pytest.raises(ConfigurationError):
        ArrayGeometry([[0, 0, 0], [0.1, 0, 0], [0, 0.1, 0]], kind="linear")


def test_bundled_geometries(linear7, robot12, sphere32):
    assert linear7.n_mics == 7 and linear7.kind is ArrayKind.LINEAR
    assert robot12.n_mics == 12
    assert sphere32.n_mics == 32 and sphere32.kind is ArrayKind.FULL_SPHERE
    np.testing.assert_allclose(np.linalg.norm(sphere32.positions, axis=1), 0.042, rtol=1e-12)
    assert len({tuple(p) for p in np.round(sphere32.positions, 9)}) == 32


def test_geometry_json_roundtrip(tmp_path, robot12):
    p = tmp_path / "g.json"
    p.write_text(json.dumps(robot12.to_json()))
    g = load_geometry(p)
    np.testing.assert_array_equal(g.positions, robot12.positions)
    assert g.speed_of_sound == robot12.speed_of_sound and g.kind is robot12.kind


def test_speed_of_sound_defaults_to_343(tmp_path):
    p = tmp_path / "g.json"
    p.write_text(json.dumps({"positions": [[0, 0, 0], [0.1, 0, 0]]}))
    assert load_geometry(p).speed_of_sound == 343.0


# -- grids ---------------------------------------------------------------


def test_grid_cardinalities():
    lin = build_grid("linear", 1.0)
    assert len(lin) == 181
    np.testing.assert_array_equal(lin.azimuth_deg, np.arange(181.0))
    assert np.all(lin.elevation_deg == 0)
    sph = build_grid("full-sphere", 5.0)
    assert len(sph) == 2701
    assert np.unique(sph.elevation_deg).size == 37
    assert np.unique(sph.azimuth_deg).size == 73


def test_coarse_linear_grid():
    g = build_grid("linear", 90.0)
    assert [d.azimuth_deg for d in g.directions] == [0.0, 90.0, 180.0]


def test_sphere_grid_is_elevation_major_and_unique():
    g = build_grid("full-sphere", 10.0)
    keys = list(zip(g.elevation_deg, g.azimuth_deg))
    assert keys == sorted(keys)
    assert len(set(keys)) == len(keys)


@pytest.mark.parametrize("kind, res", [("linear", 7.0), ("full-sphere", 7.0), ("linear", 0.0), ("linear", -1.0)])
def test_grid_rejects_non_divisible_resolution(kind, res):
    with pytest.raises(ConfigurationError):
        build_grid(kind, res)


def test_direction_ranges():
    with pytest.raises(ConfigurationError):
        Direction(181.0, 0.0)
    with pytest.raises(ConfigurationError):
        Direction(0.0, 91.0)


# -- delays and steering -------------------------------------------------


def test_broadside_delays_are_zero():
    g = ArrayGeometry([[0, 0, 0], [0.1, 0, 0]], kind="linear")
    np.testing.assert_allclose(propagation_delays(g, Direction(90.0)), [0, 0], atol=1e-18)


def test_endfire_delay_is_spacing_over_c():
    g = ArrayGeometry([[0, 0, 0], [0.343, 0, 0]], 343.0, "linear")
    np.testing.assert_allclose(propagation_delays(g, Direction(0.0)), [0.0, -0.001], atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), ang=angles)
def test_delays_match_per_mic_dot_products(seed, ang):
    g = _geom(seed, 5)
    az, el = np.radians(ang)
    u = [np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)]
    expected = [-(p[0] * u[0] + p[1] * u[1] + p[2] * u[2]) / g.speed_of_sound for p in g.positions]
    np.testing.assert_allclose(propagation_delays(g, Direction(*ang)), expected, rtol=1e-12, atol=1e-18)


def test_steering_zero_frequency_is_all_ones():
    np.testing.assert_array_equal(steering_vector(_geom(0), 0.0, Direction(33.0, 12.0)), np.ones(4))


def test_steering_half_wavelength_endfire():
    g = ArrayGeometry([[0, 0, 0], [0.343, 0, 0]], 343.0, "linear")
    np.testing.assert_allclose(steering_vector(g, 500.0, Direction(0.0)), [1, -1], atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), f=freqs, ang=angles)
def test_steering_properties(seed, f, ang):
    g = _geom(seed)
    d = Direction(*ang)
    a = steering_vector(g, f, d)
    np.testing.assert_allclose(np.abs(a), 1.0, atol=1e-12)
    np.testing.assert_allclose(a, np.exp(-2j * np.pi * f * propagation_delays(g, d)), rtol=1e-12)
    np.testing.assert_allclose(np.conj(a), steering_vector(g, -f, d), rtol=1e-12)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), f=freqs, ang=angles, offset=st.lists(st.floats(-1, 1), min_size=3, max_size=3))
def test_translation_is_a_common_phase(seed, f, ang, offset):
    g = _geom(seed)
    d = Direction(*ang)
    a = steering_vector(g, f, d)
    b = steering_vector(g.translated(offset), f, d)
    ratio = b / a
    np.testing.assert_allclose(ratio, ratio[0], atol=1e-9)
    # the data CPSD picks up the same phase, so the unloaded quadratic form is unchanged
    phi = random_psd(np.random.default_rng(seed), 4)
    t = np.trace(phi).real * np.eye(4) - phi
    phi2 = np.outer(ratio, ratio.conj()) * phi
    t2 = np.trace(phi2).real * np.eye(4) - phi2
    q1 = np.vdot(a, t @ a).real
    q2 = np.vdot(b, t2 @ b).real
    assert q2 == pytest.approx(q1, rel=1e-9, abs=1e-12)


def test_steering_table_matches_pointwise_vectors(robot12):
    grid = build_grid("full-sphere", 30.0)
    f = np.array([100.0, 1234.5, 7900.0])
    tab = steering_table(robot12, grid, f)
    assert tab.shape == (3, len(grid), 12)
    for b in range(3):
        vecs = tab.vectors(b)
        for i in (0, 17, len(grid) - 1):
            np.testing.assert_allclose(vecs[i], steering_vector(robot12, f[b], grid[i]), rtol=1e-12)
    tab32 = steering_table(robot12, grid, f, dtype=np.float32)
    assert tab32.cs.dtype == np.float32
    np.testing.assert_allclose(tab32.cs, tab.cs, atol=1e-6)


def test_grid_delays_shape(linear7):
    grid = build_grid("linear", 1.0)
    tau = grid_delays(linear7, grid)
    assert tau.shape == (181, 7)
    np.testing.assert_allclose(tau[90], 0.0, atol=1e-15)


def test_unit_vector_is_unit():
    az = np.linspace(-180, 180, 13)
    el = np.linspace(-90, 90, 13)
    np.testing.assert_allclose(np.linalg.norm(unit_vector(az, el), axis=-1), 1.0)


def test_sphere_seam_columns_share_steering():
    grid = build_grid("full-sphere", 5.0)
    u = grid.unit_vectors()
    assert np.array_equal(u[::73], u[72::73])
