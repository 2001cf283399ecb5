import itertools

import numpy as np
import pytest

from femtoslice import experiment
from femtoslice.channel import CELLS, Cell, SystemParams, snr_to_noise
from femtoslice.experiment import (SimulationTable, omfc_baseline, omfc_split, omfc_trial, resolve_workers,
                                   run_trial, sample_scenario, simulate, std_err, sweep, tradeoff_curve)
from femtoslice.numerics import SingularMatrixError

TINY = SystemParams(trials=3, snr_db_grid=(10.0, 80.0))


def test_std_err():
    assert std_err([1.0]) == 0.0
    x = np.arange(10.0)
    assert std_err(x) == pytest.approx(np.std(x, ddof=1) / np.sqrt(10))


class TestRunTrial:
    def test_pure_ora_has_no_ia(self, params):
        r = run_trial(params, 0.1, 6, "mmse", 0)
        assert r.ia_part == 0.0 and r.sum_rate == r.ora_part > 0

    def test_a_equals_k_skips_ia(self, params):
        r = run_trial(params, 0.1, 5, "mmse_iterated", 1)
        assert r.ia_part == 0.0

    @pytest.mark.parametrize("mode", ["zf", "mmse", "mmse_iterated"])
    def test_deterministic(self, params, mode):
        a = run_trial(params, 1e-4, 2, mode, 7)
        b = run_trial(params, 1e-4, 2, mode, 7)
        assert a == b
        assert a.sum_rate == pytest.approx(a.ora_part + a.ia_part, rel=1e-15)

    def test_pure_ia_has_no_ora(self, params):
        r = run_trial(params, 1e-4, 0, "zf", 3)
        assert r.ora_part == 0.0 and r.ia_part > 0

    def test_unknown_mode(self, params):
        with pytest.raises(ValueError):
            run_trial(params, 0.1, 0, "svd", 0)

    def test_resample_on_singular(self, params, monkeypatch):
        real = experiment._pipeline
        calls = []

        def flaky(*args, **kw):
            calls.append(1)
            if len(calls) == 1:
                raise SingularMatrixError("forced")
            return real(*args, **kw)

        monkeypatch.setattr(experiment, "_pipeline", flaky)
        r = run_trial(params, 0.1, 1, "mmse", 4)
        assert r.resamples == 1
        topo, fad, _ = sample_scenario(params, 4, 1)
        monkeypatch.setattr(experiment, "_pipeline", real)
        ora, ia = real(topo, fad, params, 0.1, 1, "mmse")
        assert r.sum_rate == ora + ia


class TestScenario:
    def test_streams_independent_of_order(self, params):
        a = sample_scenario(params, 5)
        sample_scenario(params, 2)
        b = sample_scenario(params, 5)
        assert a[1].h[0][0].tobytes() == b[1].h[0][0].tobytes()

    def test_seed_changes_draw(self):
        a = sample_scenario(SystemParams(master_seed=1), 0)
        b = sample_scenario(SystemParams(master_seed=2), 0)
        assert not np.array_equal(a[1].h[0][0], b[1].h[0][0])

    def test_gives_up(self):
        with pytest.raises(RuntimeError):
            sample_scenario(SystemParams(macro_radius=115.0), 0)


class TestOmfc:
    def test_split(self):
        assert omfc_split(6) == 3 and omfc_split(3) == 2 and omfc_split(2) == 1

    def test_huge_noise(self, params):
        topo, fad, _ = sample_scenario(params, 0)
        assert omfc_trial(topo, fad, params, 1e30) < 1e-20

    def test_single_user_cells(self):
        p = SystemParams(num_macro_users=1, num_femto_users=1, num_subchannels=2)
        topo, fad, _ = sample_scenario(p, 0)
        s2 = 0.01
        want = (np.log2(1 + abs(fad.h[0][0][0, 0]) ** 2 / s2) + np.log2(1 + abs(fad.h[1][1][0, 1]) ** 2 / s2)
                + np.log2(1 + abs(fad.h[2][2][0, 1]) ** 2 / s2))
        assert omfc_trial(topo, fad, p, s2) == pytest.approx(want, rel=1e-12)

    @pytest.mark.parametrize("N", [3, 4])
    def test_brute_force(self, N):
        p = SystemParams(num_macro_users=2, num_femto_users=2, num_subchannels=N)
        s2 = snr_to_noise(20.0, 1.0)
        macro_ch = range(N - N // 2)
        femto_ch = range(N - N // 2, N)
        for t in range(20):
            topo, fad, _ = sample_scenario(p, t)
            def cell_best(cell, chans):
                best = -1.0
                for users in itertools.product(range(2), repeat=len(chans)):
                    best = max(best, sum(np.log2(1 + p.tx_power(cell) * abs(fad.h[cell][cell][u, n]) ** 2 / s2)
                                         for u, n in zip(users, chans)))
                return best
            want = cell_best(Cell.MACRO, macro_ch) + sum(cell_best(c, femto_ch) for c in CELLS[1:])
            assert omfc_trial(topo, fad, p, s2) == pytest.approx(want, rel=1e-12)

    def test_baseline_mean(self):
        p = SystemParams(trials=5)
        s2 = 0.1
        want = np.mean([omfc_trial(*sample_scenario(p, t)[:2], p, s2) for t in range(5)])
        assert omfc_baseline(p, s2) == pytest.approx(want, rel=1e-14)

    def test_baseline_odd(self):
        with pytest.raises(ValueError):
            omfc_baseline(SystemParams(num_subchannels=7, trials=2), 0.1)


@pytest.fixture(scope="module")
def tiny_table():
    return simulate(TINY, ("zf", "mmse", "mmse_iterated"), workers=1)


class TestSimulate:
    def test_shapes(self, tiny_table):
        assert tiny_table.values.shape == (3, 2, 7, 3, 3)
        assert tiny_table.omfc.shape == (2, 3)

    def test_matches_run_trial(self, tiny_table):
        for mi, mode in enumerate(tiny_table.modes):
            for si, snr in enumerate(TINY.snr_db_grid):
                s2 = snr_to_noise(snr, 1.0)
                for A in (0, 2, 5, 6):
                    for t in range(TINY.trials):
                        r = run_trial(TINY, s2, A, mode, t)
                        assert tuple(tiny_table.values[mi, si, A, :, t]) == (r.sum_rate, r.ora_part, r.ia_part)

    def test_totals(self, tiny_table):
        v = tiny_table.values
        assert np.allclose(v[..., 0, :], v[..., 1, :] + v[..., 2, :], rtol=1e-12, atol=1e-12)
        for rec in tiny_table.records("mmse"):
            assert abs(rec.mean_sum_rate - rec.mean_ora_part - rec.mean_ia_part) < 1e-9
            assert rec.trial_count == 3

    def test_iteration_only_changes_ia(self, tiny_table):
        v = tiny_table.values
        assert np.array_equal(v[1, :, :, 1], v[2, :, :, 1])
        assert np.array_equal(v[1, :, 5:], v[2, :, 5:])

    def test_omfc_matches(self, tiny_table):
        for si, snr in enumerate(TINY.snr_db_grid):
            assert tiny_table.omfc_mean(snr) == pytest.approx(omfc_baseline(TINY, snr_to_noise(snr, 1.0)), rel=1e-14)

    def test_prefix_stable(self):
        p4 = SystemParams(trials=4, snr_db_grid=(30.0,))
        p2 = SystemParams(trials=2, snr_db_grid=(30.0,))
        a = simulate(p4, ("mmse",), workers=1, chunk_size=3)
        b = simulate(p2, ("mmse",), workers=1)
        assert np.array_equal(a.values[..., :2], b.values)

    def test_workers_do_not_matter(self):
        p = SystemParams(trials=4, snr_db_grid=(20.0, 70.0))
        a = simulate(p, ("mmse",), workers=1)
        b = simulate(p, ("mmse",), workers=2, chunk_size=1)
        assert a.values.tobytes() == b.values.tobytes()
        assert a.omfc.tobytes() == b.omfc.tobytes()

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            simulate(TINY, ("svd",))


class TestSweep:
    def test_single_trial(self):
        p = SystemParams(trials=1, snr_db_grid=(40.0,))
        recs = sweep(p, "mmse", workers=1)
        assert [r.trade_off_A for r in recs] == list(range(7))
        for r in recs:
            t = run_trial(p, snr_to_noise(40.0, 1.0), r.trade_off_A, "mmse", 0)
            assert r.mean_sum_rate == t.sum_rate and r.std_err == 0.0

    def test_curve(self):
        p = SystemParams(trials=2, snr_db_grid=(10.0, 80.0))
        a = tradeoff_curve(p, "mmse", workers=1)
        b = tradeoff_curve(p, "mmse", workers=1)
        assert a == b
        assert all(0 <= c.optimal_A <= 6 for c in a)

    def test_curve_tie_goes_to_larger_a(self):
        p = SystemParams(trials=1, snr_db_grid=(10.0,))
        values = np.zeros((1, 1, 7, 3, 1))
        values[0, 0, [1, 4], 0, 0] = 5.0
        table = SimulationTable(params=p, modes=("mmse",), values=values,
                                resamples=np.zeros((1, 1, 7, 1), dtype=int), omfc=np.zeros((1, 1)))
        assert table.curve("mmse")[0].optimal_A == 4


class TestWorkers:
    def test_explicit(self, monkeypatch):
        monkeypatch.setenv("FEMTOSLICE_THREADS", "3")
        assert resolve_workers(2) == 2

    def test_env(self, monkeypatch):
        monkeypatch.setenv("FEMTOSLICE_THREADS", "3")
        assert resolve_workers() == 3

    def test_floor(self, monkeypatch):
        monkeypatch.setenv("FEMTOSLICE_THREADS", "0")
        assert resolve_workers() == 1

    def test_default(self, monkeypatch):
        monkeypatch.delenv("FEMTOSLICE_THREADS", raising=False)
        assert resolve_workers() >= 1
