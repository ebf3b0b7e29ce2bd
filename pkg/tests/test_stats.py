import math

import numpy as np
import pytest

from collapse_sim.core import SimParams, derive_seed, init_weighted
from collapse_sim.stats import (
    BoundCheckReport,
    CollapseStats,
    FitResult,
    SweepTable,
    correlation_bound_check,
    fit_lnln,
    initial_step_experiment,
    run_ensemble,
    scaling_sweep,
)


def make_stats(n, mean, stderr=0.01, m=100, exceeded=0):
    hist = np.zeros(n, dtype=np.int64)
    hist[0] = m - exceeded
    return CollapseStats(
        n_sites=n,
        realizations=m,
        mean_time=mean,
        stderr_time=stderr,
        winner_histogram=hist,
        horizon_exceeded=exceeded,
    )


class TestTypes:
    def test_histogram_must_account_for_runs(self):
        with pytest.raises(ValueError):
            CollapseStats(
                n_sites=2,
                realizations=10,
                mean_time=1.0,
                stderr_time=0.1,
                winner_histogram=np.array([4, 4]),
                horizon_exceeded=0,
            )

    def test_fit_valid_flag(self):
        assert make_stats(4, 1.0, m=1000, exceeded=10).fit_valid
        assert not make_stats(4, 1.0, m=1000, exceeded=11).fit_valid

    def test_sweep_table_ordering(self):
        with pytest.raises(ValueError):
            SweepTable(rows=(make_stats(8, 1.0), make_stats(4, 1.1)))
        with pytest.raises(ValueError):
            SweepTable(rows=(make_stats(4, 1.0), make_stats(4, 1.1)))
        with pytest.raises(ValueError):
            SweepTable(rows=())

    def test_fit_result_range(self):
        with pytest.raises(ValueError):
            FitResult(a=1.0, b=0.0, r_squared=1.5, slope_stderr=0.1)


class TestRunEnsemble:
    def test_single_site(self):
        st = run_ensemble(SimParams(n_sites=1, dt=0.04, master_seed=1), 50)
        assert st.mean_time == 0.0
        assert st.stderr_time == 0.0
        assert np.array_equal(st.winner_histogram, [50])
        assert st.horizon_exceeded == 0

    def test_deterministic_and_worker_independent(self):
        p = SimParams(n_sites=3, dt=0.04, master_seed=42)
        a = run_ensemble(p, 300)
        b = run_ensemble(p, 300)
        c = run_ensemble(p, 300, workers=2)
        for other in (b, c):
            assert a.mean_time == other.mean_time
            assert a.stderr_time == other.stderr_time
            assert np.array_equal(a.winner_histogram, other.winner_histogram)

    def test_exceedances_counted(self):
        p = SimParams(n_sites=4, dt=0.04, delta=1e-9, t_max=0.2, master_seed=2)
        st = run_ensemble(p, 40)
        assert st.horizon_exceeded == 40
        assert math.isnan(st.mean_time)
        assert st.winner_histogram.sum() == 0

    def test_weighted_start_histogram_shape(self):
        p = SimParams(n_sites=3, dt=0.04, master_seed=7)
        st = run_ensemble(p, 200, initial=init_weighted([0.5, 0.3, 0.2]))
        assert st.winner_histogram.shape == (3,)
        assert st.winner_histogram.sum() + st.horizon_exceeded == 200

    def test_rejects_bad_args(self):
        p = SimParams(n_sites=2, dt=0.04)
        with pytest.raises(ValueError):
            run_ensemble(p, 0)
        with pytest.raises(ValueError):
            run_ensemble(p, 10, workers=0)


class TestScalingSweep:
    def test_single_row_matches_direct_run(self):
        template = SimParams(n_sites=2, dt=0.04, master_seed=11)
        table = scaling_sweep([4], template, 120)
        direct = run_ensemble(
            SimParams(n_sites=4, dt=0.04, master_seed=derive_seed(11, 4)), 120
        )
        row = table.rows[0]
        assert row.mean_time == direct.mean_time
        assert np.array_equal(row.winner_histogram, direct.winner_histogram)

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            scaling_sweep([], SimParams(n_sites=2), 10)

    def test_rows_sorted_requirement(self):
        with pytest.raises(ValueError):
            scaling_sweep([8, 4], SimParams(n_sites=2, dt=0.04), 30)


class TestFit:
    def test_exact_linear_data(self):
        rows = tuple(
            make_stats(n, 2.0 * math.log(math.log(n)) + 0.5)
            for n in (4, 16, 64, 256)
        )
        fit = fit_lnln(SweepTable(rows=rows))
        assert fit.a == pytest.approx(2.0, abs=1e-12)
        assert fit.b == pytest.approx(0.5, abs=1e-12)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-12)

    def test_constant_rows_convention(self):
        rows = tuple(make_stats(n, 1.5) for n in (4, 16, 64))
        fit = fit_lnln(SweepTable(rows=rows))
        assert fit.a == 0.0
        assert fit.b == 1.5
        assert fit.r_squared == 0.0

    def test_too_few_rows(self):
        rows = tuple(make_stats(n, 1.0) for n in (4, 16))
        with pytest.raises(ValueError):
            fit_lnln(SweepTable(rows=rows))

    def test_small_n_excluded(self):
        rows = tuple(
            make_stats(n, 2.0 * math.log(math.log(n)) + 0.5) for n in (2, 3, 4, 16, 64)
        )
        fit = fit_lnln(SweepTable(rows=rows))
        assert fit.a == pytest.approx(2.0, abs=1e-12)

    def test_invalid_rows_excluded(self):
        good = [make_stats(n, 2.0 * math.log(math.log(n)) + 0.5) for n in (4, 16, 64)]
        bad = make_stats(256, 50.0, m=100, exceeded=5)  # 5% exceeded
        fit = fit_lnln(SweepTable(rows=tuple(good + [bad])))
        assert fit.a == pytest.approx(2.0, abs=1e-12)

    def test_n_min_floor(self):
        rows = tuple(make_stats(n, 1.0) for n in (4, 16, 64))
        with pytest.raises(ValueError):
            fit_lnln(SweepTable(rows=rows), n_min=3)


class TestBoundCheck:
    def test_time_zero_exact(self):
        p = SimParams(n_sites=8, dt=0.04, master_seed=3)
        rep = correlation_bound_check(p, 10, [0.0])
        assert rep.mean_pair[0] == pytest.approx(4.0 / 64.0, abs=1e-15)
        assert rep.stderr_mean[0] == 0.0
        assert rep.bound[0] == pytest.approx(4.0 / 49.0)

    def test_bound_formula(self):
        p = SimParams(n_sites=5, dt=0.04, master_seed=3)
        rep = correlation_bound_check(p, 10, [0.0, 1.0, 2.0])
        assert np.allclose(rep.bound, 4.0 / (4.0 * rep.times + 16.0))

    def test_two_sites_bound_loose(self):
        # Pathwise V1 V2 <= 1 while the bound at t = 0 is 4.
        p = SimParams(n_sites=2, dt=0.04, master_seed=5)
        rep = correlation_bound_check(p, 200, [0.0, 0.5])
        assert rep.bound[0] == pytest.approx(4.0)
        assert rep.max_pair.max() <= 1.0 + 1e-9
        assert rep.satisfied()

    def test_determinism(self):
        p = SimParams(n_sites=6, dt=0.04, master_seed=9)
        a = correlation_bound_check(p, 150, [0.0, 0.5, 1.0])
        b = correlation_bound_check(p, 150, [0.0, 0.5, 1.0])
        assert np.array_equal(a.mean_pair, b.mean_pair)
        assert np.array_equal(a.max_pair, b.max_pair)

    def test_validation(self):
        p = SimParams(n_sites=4, dt=0.04)
        with pytest.raises(ValueError):
            correlation_bound_check(p, 1, [0.0])
        with pytest.raises(ValueError):
            correlation_bound_check(p, 10, [])
        with pytest.raises(ValueError):
            correlation_bound_check(p, 10, [-1.0])
        with pytest.raises(ValueError):
            correlation_bound_check(SimParams(n_sites=1, dt=0.04), 10, [0.0])


class TestStepExperiment:
    def test_horizon_validation(self):
        p = SimParams(n_sites=2, dt=0.5)
        with pytest.raises(ValueError):
            initial_step_experiment([2, 4], p, horizon=0.2)

    def test_rise_shrinks_with_n(self):
        p = SimParams(n_sites=2, dt=0.04, master_seed=13)
        rep = initial_step_experiment([2, 64], p, horizon=1.0, m=48)
        assert rep.mean_rise[0] > rep.mean_rise[1]
        assert rep.mean_rise[0] > 0.3

    def test_deterministic(self):
        p = SimParams(n_sites=2, dt=0.04, master_seed=14)
        a = initial_step_experiment([2, 8], p, horizon=0.5, m=16)
        b = initial_step_experiment([2, 8], p, horizon=0.5, m=16)
        assert np.array_equal(a.mean_rise, b.mean_rise)

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            initial_step_experiment([], SimParams(n_sites=2, dt=0.04), 1.0, 8)
