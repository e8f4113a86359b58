import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quasireal.designs import grid, sobol
from quasireal.randomsets import (CoverageField, EmptyEnsembleError, coverage, dav,
                                  distance_average, distance_transform, distance_transforms,
                                  vorobev, vorobev_deviation, write_heat_csv)
from quasireal.simulate import ExcursionEnsemble

from oracles import brute_edt


def _ens(masks, q=None):
    masks = np.asarray(masks, dtype=bool)
    r = masks.shape[1]
    if q is None:
        return ExcursionEnsemble(grid(1, r), masks)
    return ExcursionEnsemble(grid(2, q), masks)


class TestCoverage:
    def test_all_true(self):
        assert np.all(coverage(_ens(np.ones((4, 10)))).p == 1.0)

    def test_single_realization_binary(self):
        m = np.random.default_rng(0).random((1, 20)) < 0.5
        np.testing.assert_array_equal(coverage(_ens(m)).p, m[0].astype(float))

    def test_validation(self):
        with pytest.raises(ValueError):
            CoverageField(grid(1, 4), [0.1, 0.2, 1.3, 0.0])


class TestVorobev:
    def test_constant_coverage(self):
        cov = CoverageField(grid(1, 10), np.full(10, 0.7))
        alpha, mask = vorobev(cov, 0.7)
        assert alpha == 0.7 and mask.all()

    def test_single_realization(self):
        m = np.zeros((1, 16), bool)
        m[0, 3:9] = True
        _, mask = vorobev(coverage(_ens(m)))
        np.testing.assert_array_equal(mask, m[0])

    @pytest.mark.parametrize("seed", range(5))
    def test_exhaustive_optimality_on_12_nodes(self, seed):
        rng = np.random.default_rng(seed)
        masks = rng.random((7, 12)) < rng.uniform(0.2, 0.8, size=12)
        ens = _ens(masks)
        _, q = vorobev(coverage(ens))
        k = int(q.sum())
        dev_q = vorobev_deviation(ens, q)
        for idx in itertools.combinations(range(12), k):
            m = np.zeros(12, bool)
            m[list(idx)] = True
            assert dev_q <= vorobev_deviation(ens, m) + 1e-15

    @settings(max_examples=50, deadline=None)
    @given(p=st.lists(st.floats(0, 1), min_size=2, max_size=40))
    def test_bracketing(self, p):
        p = np.array(p)
        cov = CoverageField(grid(1, len(p)), p)
        alpha, mask = vorobev(cov)
        expected = p.mean()
        w = 1.0 / len(p)
        if expected <= 0:
            return
        assert mask.sum() * w >= expected * (1 - 1e-12)
        higher = p[p > alpha]
        if higher.size:
            # the next level up falls strictly below the expected volume
            assert (p >= higher.min()).sum() * w < expected

    def test_deviation_basics(self):
        m = np.random.default_rng(1).random(30) < 0.4
        ens = _ens(np.repeat(m[None, :], 5, axis=0))
        assert vorobev_deviation(ens, m) == 0.0
        masks = np.random.default_rng(2).random((6, 30)) < 0.4
        assert vorobev_deviation(_ens(masks), np.zeros(30, bool)) == pytest.approx(masks.mean())
        with pytest.raises(ValueError):
            vorobev_deviation(_ens(masks), np.zeros(29, bool))

    def test_beats_random_equal_volume_masks(self):
        rng = np.random.default_rng(3)
        masks = rng.random((40, 64)) < np.linspace(0.05, 0.95, 64)
        ens = _ens(masks)
        _, q = vorobev(coverage(ens))
        dq = vorobev_deviation(ens, q)
        for _ in range(50):
            m = np.zeros(64, bool)
            m[rng.choice(64, size=int(q.sum()), replace=False)] = True
            assert dq <= vorobev_deviation(ens, m)


class TestDistanceTransform:
    def test_full_mask(self):
        g = grid(2, 10)
        assert np.all(distance_transform(g, np.ones(100, bool)).dist == 0)

    def test_single_node(self):
        g = grid(2, 50)
        mask = np.zeros(2500, bool)
        mask[1234] = True
        dist = distance_transform(g, mask).dist
        expect = np.linalg.norm(g.points - g.points[1234], axis=1)
        np.testing.assert_allclose(dist, expect, rtol=0, atol=1e-15)

    @pytest.mark.parametrize("seed", range(3))
    def test_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        mask = rng.random((50, 50)) < rng.uniform(0.005, 0.3)
        mask[0, 0] = True
        got = distance_transforms(grid(2, 50), mask.ravel()[None, :])[0]
        np.testing.assert_array_equal(got, np.sqrt(brute_edt(mask)).ravel() / 50)

    def test_3d_single_node(self):
        g = grid(3, 7)
        mask = np.zeros(g.r, bool)
        mask[100] = True
        dist = distance_transform(g, mask).dist
        np.testing.assert_allclose(dist, np.linalg.norm(g.points - g.points[100], axis=1),
                                   atol=1e-15)

    def test_axis_symmetry(self):
        rng = np.random.default_rng(4)
        a = rng.random((20, 20)) < 0.1
        sym = a | a.T
        d = distance_transform(grid(2, 20), sym.ravel()).dist.reshape(20, 20)
        np.testing.assert_array_equal(d, d.T)

    def test_zero_exactly_on_set(self):
        mask = np.random.default_rng(5).random(400) < 0.2
        d = distance_transform(grid(2, 20), mask).dist
        assert np.all(d[mask] == 0) and np.all(d[~mask] > 0)

    def test_empty_mask_convention(self):
        d = distance_transform(grid(2, 5), np.zeros(25, bool)).dist
        np.testing.assert_allclose(d, np.sqrt(2))

    def test_needs_grid(self):
        with pytest.raises(ValueError):
            distance_transforms(sobol(2, 16), np.ones((1, 16), bool))


class TestDistanceAverage:
    def test_identical_masks(self):
        m = np.zeros((10, 10), bool)
        m[2:5, 3:8] = True
        ens = _ens(np.repeat(m.reshape(1, -1), 6, axis=0), q=10)
        mask, u = distance_average(ens)
        np.testing.assert_array_equal(mask, m.ravel())
        assert u == 0.0
        assert dav(ens) == pytest.approx(0.0, abs=1e-25)

    def test_1d_exhaustive(self):
        q = 30
        masks = np.zeros((2, q), bool)
        masks[0, 3:9] = True
        masks[1, 15:24] = True
        ens = _ens(masks)
        # independent re-implementation with brute-force 1-D distances
        x = np.arange(q)
        dist = np.array([np.min(np.abs(x[:, None] - np.flatnonzero(m)[None, :]), axis=1)
                         for m in masks]) / q
        dbar = dist.mean(0)
        best = None
        for u in np.unique(dbar):
            sel = np.flatnonzero(dbar <= u)
            du = np.min(np.abs(x[:, None] - sel[None, :]), axis=1) / q
            err = np.sum((du - dbar) ** 2)
            if best is None or err < best[0] - 1e-15:
                best = (err, u, dbar <= u)
        mask, u = distance_average(ens)
        assert u == pytest.approx(best[1])
        np.testing.assert_array_equal(mask, best[2])

    def test_vorobev_and_distance_average_both_defined(self):
        rng = np.random.default_rng(6)
        masks = np.zeros((20, 400), bool)
        g = grid(2, 20).points
        for i in range(20):
            c = rng.uniform(0.3, 0.7, size=2)
            masks[i] = np.linalg.norm(g - c, axis=1) < rng.uniform(0.1, 0.3)
        ens = ExcursionEnsemble(grid(2, 20), masks)
        da, _ = distance_average(ens)
        _, vq = vorobev(coverage(ens))
        assert da.any() and vq.any()

    def test_all_empty(self):
        with pytest.raises(EmptyEnsembleError):
            dav(_ens(np.zeros((3, 16), bool), q=4))


class TestDav:
    def test_two_realizations(self):
        rng = np.random.default_rng(7)
        masks = rng.random((2, 100)) < 0.2
        ens = _ens(masks, q=10)
        d = distance_transforms(ens.design, masks)
        expect = 0.25 * np.sum((d[0] - d[1]) ** 2) / 100
        assert dav(ens) == pytest.approx(expect, rel=1e-12)

    def test_permutation_invariant(self):
        rng = np.random.default_rng(8)
        masks = rng.random((9, 144)) < 0.15
        a = dav(_ens(masks, q=12))
        b = dav(_ens(masks[rng.permutation(9)], q=12))
        assert a == pytest.approx(b, rel=1e-12)


def test_heat_csv(tmp_path):
    g = grid(2, 3)
    write_heat_csv(g, np.arange(9) / 8, tmp_path / "h.csv")
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "x1,x2,value" and len(lines) == 10
    with pytest.raises(ValueError):
        write_heat_csv(g, np.zeros(4), tmp_path / "x.csv")
