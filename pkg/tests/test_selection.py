import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from blockmix import selection
from blockmix.aecm import FitConfig
from blockmix.errors import FitFailureError, InvalidParameterError, SelectionFailureError
from blockmix.model import ModelVariant, parameter_count
from blockmix.selection import CellRecord, GridSpec, aic, bic, grid_search
from blockmix.synth import sample, scenario_a


class TestCriteria:
    def test_aic_values(self):
        assert aic(-100.0, 10) == 220.0
        assert aic(0.0, 1) == 2.0

    def test_aic_rejects_zero_parameters(self):
        with pytest.raises(InvalidParameterError):
            aic(0.0, 0)

    @given(st.floats(-1e6, 1e6), st.integers(1, 10_000))
    def test_aic_linear_in_parameters(self, ll, k):
        assert aic(ll, k + 1) - aic(ll, k) == pytest.approx(2.0, abs=1e-9)

    def test_bic_value(self):
        assert bic(-100.0, 10, 55) == pytest.approx(240.0733, abs=1e-4)
        assert bic(-100.0, 10, 55) == 200.0 + 10 * math.log(55)

    def test_bic_heavier_than_aic(self):
        assert math.log(8) > 2
        for n in range(8, 200):
            assert bic(-50.0, 7, n) > aic(-50.0, 7)
        assert bic(-50.0, 7, 7) < aic(-50.0, 7)

    def test_bic_needs_two_units(self):
        with pytest.raises(InvalidParameterError):
            bic(-1.0, 1, 1)


class TestGridSpec:
    def test_shared_cells(self):
        cells = GridSpec(variants=("CC", "UU"), K_range=(1, 3), L_range=(1, 2)).cells(J=5)
        assert len(cells) == 2 * 3 * 2
        assert cells[0][0] == ModelVariant.CC and cells[0][1].L == (1,)

    def test_per_component_only_for_free_membership(self):
        grid = GridSpec(variants=("CU", "UC", "UU"), K_range=(2, 2), L_range=(1, 3), L_mode="per-component-L")
        cells = grid.cells(J=6)
        by_variant = {}
        for v, d in cells:
            by_variant.setdefault(v.value, []).append(d.L)
        assert all(len(set(L)) == 1 for L in by_variant["CU"])
        # multisets of size 2 from {1,2,3}
        assert len(by_variant["UU"]) == 6
        assert len(by_variant["UC"]) == 6

    def test_per_component_capped_at_k4(self):
        grid = GridSpec(variants=("UU",), K_range=(5, 5), L_range=(1, 3), L_mode="per-component-L")
        assert [d.L for _, d in grid.cells(J=6)] == [(1,) * 5, (2,) * 5, (3,) * 5]

    def test_l_range_clipped_to_j(self):
        cells = GridSpec(variants=("UU",), K_range=(1, 1), L_range=(1, 6)).cells(J=3)
        assert [d.L for _, d in cells] == [(1,), (2,), (3,)]

    def test_max_cells(self):
        grid = GridSpec(variants=("UU",), K_range=(1, 10), L_range=(1, 6), L_mode="per-component-L", max_cells=50)
        with pytest.raises(InvalidParameterError, match="max_cells"):
            grid.cells(J=10)

    def test_validation(self):
        with pytest.raises(InvalidParameterError):
            GridSpec(criterion="ICL")
        with pytest.raises(InvalidParameterError):
            GridSpec(K_range=(3, 2))
        with pytest.raises(InvalidParameterError):
            GridSpec(variants=("XX",))


@pytest.fixture(scope="module")
def small_data():
    data, _, _ = sample(scenario_a(n=200, seed=11))
    return data


class TestGridSearch:
    def test_single_cell(self, small_data):
        best, table = grid_search(small_data, GridSpec(variants=("UU",), K_range=(1, 1), L_range=(1, 1)))
        assert len(table) == 1
        assert table.best.fit is best

    def test_table_consistency(self, small_data):
        grid = GridSpec(variants=("CC", "UU"), K_range=(1, 2), L_range=(1, 2), criterion="AIC")
        best, table = grid_search(small_data, grid, FitConfig(n_restarts=2))
        assert len(table) == len(grid.cells(small_data.J))
        seen = {(r.variant, r.K, r.L) for r in table}
        assert seen == {(v, d.K, d.L) for v, d in grid.cells(small_data.J)}
        for r in table:
            assert r.n_par == parameter_count(r.variant, r.K, small_data.J)
            assert r.aic == aic(r.loglik, r.n_par)
            assert r.bic == bic(r.loglik, r.n_par, small_data.n)
        values = [r.aic for r in table]
        assert values == sorted(values)
        assert best is table.best.fit

    def test_failed_cells_kept(self, small_data, monkeypatch):
        real_fit = selection.fit

        def flaky(Y, variant, dims, config, extra_starts=()):
            if dims.K == 2:
                raise FitFailureError("forced failure")
            return real_fit(Y, variant, dims, config, extra_starts)

        monkeypatch.setattr(selection, "fit", flaky)
        grid = GridSpec(variants=("UU",), K_range=(1, 2), L_range=(1, 2))
        best, table = grid_search(small_data, grid, FitConfig(n_restarts=1))
        assert len(table) == 4
        failed = [r for r in table if r.failed]
        assert [r.K for r in failed] == [2, 2]
        assert table.records[-2:] == tuple(failed)
        assert all("fit-failure" in r.warnings[0] for r in failed)
        assert best.dims.K == 1

    def test_all_failed(self, small_data, monkeypatch):
        def broken(*args, **kwargs):
            raise FitFailureError("nope")

        monkeypatch.setattr(selection, "fit", broken)
        with pytest.raises(SelectionFailureError):
            grid_search(small_data, GridSpec(variants=("UU",), K_range=(1, 2), L_range=(1, 1)))

    def test_tie_breaking(self):
        def rec(n_par, K, L, value):
            return CellRecord(ModelVariant.UU, K, L, 0.0, n_par, value, value, True)

        records = [rec(20, 2, (3, 3), 100.0), rec(10, 2, (2, 2), 100.0 + 1e-10), rec(10, 1, (2,), 100.0), rec(5, 1, (1,), 99.0)]
        records.sort(key=selection._compare("BIC"))
        assert [(r.n_par, r.K, r.L) for r in records] == [(5, 1, (1,)), (10, 1, (2,)), (10, 2, (2, 2)), (20, 2, (3, 3))]

    def test_threads_do_not_change_results(self, small_data):
        grid = GridSpec(variants=("UC", "UU"), K_range=(1, 2), L_range=(1, 2))
        cfg = FitConfig(n_restarts=2, seed=5)
        _, t1 = grid_search(small_data, grid, cfg, threads=1)
        _, t2 = grid_search(small_data, grid, cfg, threads=3)
        assert [(r.label, r.loglik) for r in t1] == [(r.label, r.loglik) for r in t2]

    def test_warm_start_nested_fit(self, small_data):
        grid = GridSpec(variants=("UU",), K_range=(1, 3), L_range=(2, 2), warm_start=True)
        _, table = grid_search(small_data, grid, FitConfig(n_restarts=1, seed=2))
        ll = {r.K: r.loglik for r in table}
        assert ll[2] >= ll[1] - 1e-6
        assert ll[3] >= ll[2] - 1e-6

    def test_picks_two_components(self, small_data):
        grid = GridSpec(variants=("UU",), K_range=(1, 3), L_range=(2, 2))
        best, _ = grid_search(small_data, grid, FitConfig(n_restarts=3))
        assert best.dims.K == 2
