"""Sobol' sequences, maximin Latin hypercubes and grids."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial import cKDTree
from scipy.spatial.distance import pdist
from scipy.stats import qmc

from quasireal.designs import (Design, DesignKind, UnsupportedDimensionError, grid, grid_index,
                               grid_multi_index, maximin_lhs, read_design_csv, sobol,
                               write_design_csv)


class TestSobol:
    def test_first_points_1d(self):
        np.testing.assert_array_equal(sobol(1, 3, skip=1).points.ravel(), [0.5, 0.75, 0.25])

    def test_origin_convention(self):
        # unshifted sequence: the first point is the origin
        np.testing.assert_array_equal(sobol(2, 1, skip=0).points, [[0.0, 0.0]])

    def test_first_points_2d(self):
        # published first eight points of the 2-D sequence
        ref = [[0, 0], [0.5, 0.5], [0.75, 0.25], [0.25, 0.75], [0.375, 0.375],
               [0.875, 0.875], [0.625, 0.125], [0.125, 0.625]]
        np.testing.assert_array_equal(sobol(2, 8).points, ref)

    def test_dyadic_stratification(self):
        # the first 16 points put one point in each 1/4 x 1/4 cell
        pts = sobol(2, 16).points
        cells = np.floor(pts * 4).astype(int)
        assert len({tuple(c) for c in cells}) == 16

    def test_skip_is_a_suffix(self):
        full = sobol(3, 40).points
        np.testing.assert_array_equal(sobol(3, 30, skip=10).points, full[10:])

    def test_more_uniform_than_random(self):
        pts = sobol(6, 10000, skip=1).points
        rnd = np.random.default_rng(0).uniform(size=(10000, 6))
        nn_sobol = cKDTree(pts).query(pts, k=2)[0][:, 1]
        nn_rand = cKDTree(rnd).query(rnd, k=2)[0][:, 1]
        assert nn_sobol.mean() > nn_rand.mean()
        assert qmc.discrepancy(pts[:2048]) < qmc.discrepancy(rnd[:2048])

    def test_reproducible(self):
        a, b = sobol(5, 500), sobol(5, 500)
        assert a.points.tobytes() == b.points.tobytes()

    def test_bad_arguments(self):
        with pytest.raises(UnsupportedDimensionError):
            sobol(21202, 4)
        with pytest.raises(ValueError):
            sobol(2, 0)
        with pytest.raises(ValueError):
            sobol(2, 4, skip=-1)


def _is_latin(points):
    r = points.shape[0]
    strata = np.floor(points * r).astype(int)
    return all(sorted(col) == list(range(r)) for col in strata.T)


class TestMaximinLhs:
    def test_one_point_per_stratum_1d(self):
        pts = np.sort(maximin_lhs(1, 4, seed=3).points.ravel())
        for i, p in enumerate(pts):
            assert i / 4 <= p < (i + 1) / 4

    @settings(max_examples=25, deadline=None)
    @given(d=st.integers(1, 4), r=st.integers(2, 15), seed=st.integers(0, 2**32 - 1))
    def test_latin_property(self, d, r, seed):
        design = maximin_lhs(d, r, seed=seed, restarts=2)
        assert design.points.shape == (r, d)
        assert _is_latin(design.points)

    def test_exchange_never_degrades(self):
        design = maximin_lhs(2, 20, seed=1)
        assert design.meta["maximin"] >= design.meta["start_maximin"]
        assert np.isclose(pdist(design.points).min(), design.meta["maximin"])

    def test_near_brute_force_optimum(self):
        rng = np.random.default_rng(123)
        r, draws = 5, 100_000
        perms = np.argsort(rng.random((draws, 2, r)), axis=2)
        pts = (perms.transpose(0, 2, 1) + 0.5) / r
        diff = pts[:, :, None, :] - pts[:, None, :, :]
        dist = np.sqrt((diff**2).sum(-1))
        dist[:, np.arange(r), np.arange(r)] = np.inf
        best = dist.min(axis=(1, 2)).max()
        got = maximin_lhs(2, r, seed=0, restarts=50).meta["maximin"]
        assert got >= 0.9 * best

    def test_deterministic(self):
        a = maximin_lhs(3, 12, seed=9)
        b = maximin_lhs(3, 12, seed=9)
        np.testing.assert_array_equal(a.points, b.points)

    def test_needs_two_points(self):
        with pytest.raises(ValueError):
            maximin_lhs(2, 1)


class TestGrid:
    def test_1d(self):
        np.testing.assert_array_equal(grid(1, 2).points.ravel(), [0.25, 0.75])

    @pytest.mark.parametrize("q", [50, 80])
    def test_experiment_sizes(self, q):
        g = grid(2, q)
        assert g.r == q * q and g.kind is DesignKind.GRID and g.q == q

    def test_row_major(self):
        pts = grid(2, 3).points
        # last coordinate varies fastest
        np.testing.assert_allclose(pts[:3, 0], 1 / 6)
        np.testing.assert_allclose(pts[:3, 1], [1 / 6, 0.5, 5 / 6])

    @settings(max_examples=30, deadline=None)
    @given(d=st.integers(1, 4), q=st.integers(2, 6), data=st.data())
    def test_index_round_trip(self, d, q, data):
        g = grid(d, q)
        assert g.r == q**d
        idx = data.draw(st.integers(0, q**d - 1))
        multi = grid_multi_index(idx, q, d)
        assert grid_index(multi, q) == idx
        np.testing.assert_allclose(g.points[idx], (np.array(multi) + 0.5) / q)

    def test_cap(self):
        with pytest.raises(MemoryError):
            grid(3, 200, max_points=10**6)
        with pytest.raises(ValueError):
            grid(2, 1)


def test_design_rejects_points_outside_cube():
    with pytest.raises(ValueError):
        Design.explicit([[0.2, 1.5]])


def test_csv_round_trip(tmp_path):
    d = sobol(3, 17, skip=1)
    write_design_csv(d, tmp_path / "d.csv")
    assert (tmp_path / "d.csv").read_text().splitlines()[0] == "x1,x2,x3"
    np.testing.assert_array_equal(read_design_csv(tmp_path / "d.csv").points, d.points)


def test_csv_round_trip_with_comment(tmp_path):
    d = sobol(2, 9, skip=1)
    write_design_csv(d, tmp_path / "d.csv", "quasireal 0 config abc")
    lines = (tmp_path / "d.csv").read_text().splitlines()
    assert lines[:2] == ["# quasireal 0 config abc", "x1,x2"]
    np.testing.assert_array_equal(read_design_csv(tmp_path / "d.csv").points, d.points)
