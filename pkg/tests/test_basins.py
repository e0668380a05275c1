from __future__ import annotations

import numpy as np
import pytest
import scipy.optimize
import scipy.stats

from skcycle.basins import (BasinCurve, BasinEnsemble, count_crossings,
                            critical_field, default_eps_gs, fit_exponents,
                            gaussian_minima_energies, phase_boundary,
                            ratio_sweep, read_sweep_csv, reference_level,
                            sample_ensemble, self_energy,
                            synthetic_ratio_table, write_fit_json,
                            write_sweep_csv)
from skcycle.errors import FitWindowError


def oracle_crossings(ens: BasinEnsemble, chi: float, bz_hi: float) -> list[float]:
    """Independent root finder: brentq on a fine scan of the level difference."""
    n, j = ens.n, ens.j_scale
    r = ens.reference

    def sigma(m, f, bz):
        return n * j * (f - np.sqrt((f + m * bz / j) ** 2 + (chi * bz / j) ** 2))

    roots = []
    for e, m, f in zip(ens.energies, ens.slopes, ens.repulsions):
        def diff(bz):
            return (e + sigma(m, f, bz)) - (r.e_l + sigma(r.m_l, r.f_l, bz))

        grid = np.linspace(0.0, bz_hi, 20001)
        vals = np.array([diff(b) for b in grid])
        sign = np.where(vals >= 0, 1, -1)
        for cell in np.flatnonzero(sign[:-1] * sign[1:] < 0):
            roots.append(scipy.optimize.brentq(diff, grid[cell], grid[cell + 1],
                                               xtol=1e-13))
    return sorted(roots)


class TestSelfEnergy:
    def test_zero_fields(self):
        c = BasinCurve(-10.0, 0.3, 0.5)
        assert self_energy(c, 50, 1.0, 0.0, 0.0) == 0.0

    def test_pure_zeeman_limit(self):
        c = BasinCurve(-10.0, 0.3, 0.5)
        assert self_energy(c, 50, 1.0, 0.8, 0.0) == pytest.approx(-0.3 * 50 * 0.8)

    def test_weak_transverse_field_quadratic(self):
        c = BasinCurve(-10.0, 0.0, 0.5)
        n, j, bx = 50, 1.0, 0.01
        got = self_energy(c, n, j, 0.0, bx)
        assert got == pytest.approx(-n * bx ** 2 / (2 * 0.5 * j), rel=0.01)

    def test_strong_transverse_field_polarized(self):
        c = BasinCurve(-10.0, 0.0, 0.5)
        n, j, bx = 50, 1.0, 100.0
        assert self_energy(c, n, j, 0.0, bx) == pytest.approx(-n * bx, rel=0.01)

    def test_limit_property_suite(self, rng):
        n, j = 120, 1.0
        m = 1 - 2 * rng.integers(0, n + 1, size=10_000) / n
        f = rng.uniform(0.25, 0.75, size=10_000)
        for mi, fi in zip(m[:200], f[:200]):
            c = BasinCurve(0.0, float(mi), float(fi))
            bz = 0.3
            if fi + mi * bz / j > 0:
                assert self_energy(c, n, j, bz, 0.0) == pytest.approx(
                    -mi * n * bz, abs=1e-9)
            assert self_energy(c, n, j, 0.0, 0.01) == pytest.approx(
                -n * 1e-4 / (2 * fi * j), rel=0.01)
            assert self_energy(c, n, j, 0.0, 100.0) == pytest.approx(
                -n * 100.0, rel=0.01)

    def test_reference_level_strictly_decreasing(self, rng):
        for _ in range(10):
            ens = sample_ensemble(60, 1, seed=int(rng.integers(1 << 30)),
                                  eps_r=-1.0)
            chi = float(rng.uniform(0.0, 6.0))
            bz = np.linspace(0.0, 8.0, 400)
            ref = reference_level(ens, chi, bz)
            assert np.all(np.diff(ref) < 0)

    def test_rejects_negative_fields(self):
        c = BasinCurve(0.0, 0.5, 0.5)
        with pytest.raises(ValueError):
            self_energy(c, 10, 1.0, -0.1, 0.0)


class TestSampling:
    def test_slope_mean_near_zero(self):
        ens = sample_ensemble(64, 100_000, seed=3, eps_r=-1.0)
        sigma = 1.0 / np.sqrt(64)
        assert abs(ens.slopes.mean()) < 3 * sigma / np.sqrt(100_000)

    def test_slopes_are_quantized(self):
        ens = sample_ensemble(30, 5000, seed=1, eps_r=-1.0)
        d = (1.0 - ens.slopes) * 30 / 2
        assert np.max(np.abs(d - np.round(d))) < 1e-12

    def test_repulsions_uniform_ks(self):
        ens = sample_ensemble(50, 50_000, seed=9, eps_r=-1.0)
        stat = scipy.stats.kstest(ens.repulsions,
                                  scipy.stats.uniform(0.25, 0.5).cdf)
        assert stat.pvalue > 0.001

    def test_deterministic(self):
        a = sample_ensemble(40, 100, seed=5, eps_r=-1.0)
        b = sample_ensemble(40, 100, seed=5, eps_r=-1.0)
        assert np.array_equal(a.energies, b.energies)
        assert np.array_equal(a.slopes, b.slopes)
        assert a.reference == b.reference

    def test_custom_energy_sampler(self):
        def flat(rng, n, j, size):
            return np.full(size, -0.5 * n * j)

        ens = sample_ensemble(20, 7, energy_sampler=flat, seed=0, eps_r=-1.0)
        assert np.all(ens.energies == -10.0)

    def test_reference_conditioning(self):
        ens = sample_ensemble(40, 10, seed=2, eps_r=-1.23)
        assert ens.reference.e_l == pytest.approx(-1.23 * 40)
        assert ens.reference.m_l == 1.0

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            sample_ensemble(40, 0, seed=0)
        with pytest.raises(ValueError):
            sample_ensemble(1, 5, seed=0)


class TestCountCrossings:
    def test_chi_zero_censors_higher_energy_curves(self):
        for seed in range(1000):
            ens = sample_ensemble(80, 25, seed=seed, eps_r=-1.05)
            cc = count_crossings(ens, 0.0, 4.0, grid=256)
            assert cc.n_above == 0

    def test_identical_curve_never_crosses(self):
        ens = sample_ensemble(50, 1, seed=1, eps_r=-1.0)
        r = ens.reference
        twin = BasinEnsemble(50, 1.0, r, np.array([r.e_l]), np.array([1.0]),
                             np.array([r.f_l]), 1)
        cc = count_crossings(twin, 2.0, 5.0)
        assert cc.n_above == 0 and cc.n_below == 0

    def test_matches_independent_root_finder(self):
        ens = sample_ensemble(50, 1, seed=1, eps_r=-1.0)
        e_r = ens.reference.e_l
        hand = BasinEnsemble(
            50, 1.0, ens.reference,
            np.array([e_r - 4.0, e_r - 2.0, e_r + 3.0]),
            np.array([0.2, -0.4, 0.6]),
            np.array([0.3, 0.6, 0.45]), 1)
        for chi in (0.0, 1.5, 4.0):
            cc = count_crossings(hand, chi, 20.0, grid=4096)
            got = sorted(np.concatenate([cc.above_fields, cc.below_fields]))
            expected = oracle_crossings(hand, chi, 20.0)
            assert len(got) == len(expected)
            assert np.allclose(got, expected, atol=1e-6)

    def test_counts_equal_list_lengths(self):
        ens = sample_ensemble(60, 500, seed=4, eps_r=-1.0)
        cc = count_crossings(ens, 4.5, 4.0)
        assert cc.n_above == len(cc.above_fields)
        assert cc.n_below == len(cc.below_fields)

    def test_validation(self):
        ens = sample_ensemble(40, 5, seed=0, eps_r=-1.0)
        with pytest.raises(ValueError):
            count_crossings(ens, -1.0, 4.0)
        with pytest.raises(ValueError):
            count_crossings(ens, 1.0, 0.0)
        with pytest.raises(ValueError):
            count_crossings(ens, 1.0, 4.0, grid=1)


class TestCriticalField:
    def test_ground_state_reference_has_no_crossings(self):
        def deep(rng, n, j, size):
            return np.full(size, -0.9 * n * j)

        ens = sample_ensemble(50, 40, energy_sampler=deep, seed=3, eps_r=-1.4)
        assert critical_field(ens, 0.0) == 0.0

    def test_two_curve_closed_form_at_chi_zero(self):
        ens = sample_ensemble(50, 1, seed=1, eps_r=-1.0)
        e_r = ens.reference.e_l
        m = 0.6
        below = BasinEnsemble(50, 1.0, ens.reference, np.array([e_r - 5.0]),
                              np.array([m]), np.array([0.5]), 1)
        expected = 5.0 / (50 * (1 - m))
        assert critical_field(below, 0.0) == pytest.approx(expected, abs=1e-7)

    def test_equals_max_of_crossing_fields(self):
        ens = sample_ensemble(70, 300, seed=8, eps_r=-1.0)
        bc = critical_field(ens, 2.0)
        cc = count_crossings(ens, 2.0, 1.1 * bc, grid=4096)
        fields = np.concatenate([cc.above_fields, cc.below_fields])
        assert bc == pytest.approx(float(fields.max()), abs=1e-6)


@pytest.fixture(scope="module")
def sweep():
    def factory(eps_r, seed):
        return sample_ensemble(100, 1500, seed=seed, eps_r=eps_r)

    chis = [2.0, 3.0, 4.0, 5.0, 6.5, 8.0]
    eps_rs = [-0.95, -1.10]
    return ratio_sweep(factory, chis, eps_rs, reps=6, bz_hi=4.0,
                       grid=512, seed=77)


class TestRatioSweep:
    def test_ratio_monotone_beyond_knee(self, sweep):
        for eps_r in (-0.95, -1.10):
            ratios = [r["ratio"] for r in sweep
                      if r["eps_r"] == eps_r and r["chi"] >= 4.0]
            assert all(np.isfinite(ratios))
            assert all(a < b for a, b in zip(ratios, ratios[1:]))

    def test_deeper_reference_has_larger_ratio(self, sweep):
        shallow = {r["chi"]: r["ratio"] for r in sweep if r["eps_r"] == -0.95}
        deep = {r["chi"]: r["ratio"] for r in sweep if r["eps_r"] == -1.10}
        for chi in (4.0, 5.0, 6.5, 8.0):
            assert deep[chi] > shallow[chi]

    def test_estimator_consistent_across_reps(self):
        def factory(eps_r, seed):
            return sample_ensemble(100, 1500, seed=seed, eps_r=eps_r)

        one = ratio_sweep(factory, [5.0], [-1.05], reps=2, bz_hi=4.0,
                          grid=512, seed=5)
        many = ratio_sweep(factory, [5.0], [-1.05], reps=40, bz_hi=4.0,
                           grid=512, seed=5)
        spread = many[0]["stderr"] * np.sqrt(40 / 2)
        assert abs(one[0]["ratio"] - many[0]["ratio"]) < 5 * spread

    def test_zero_below_marks_undefined(self):
        def lonely(rng, n, j, size):
            return np.full(size, 0.5 * n * j)  # everything far above

        def factory(eps_r, seed):
            return sample_ensemble(40, 10, energy_sampler=lonely, seed=seed,
                                   eps_r=eps_r)

        rows = ratio_sweep(factory, [0.5], [-1.0], reps=2, bz_hi=2.0, grid=128,
                           seed=0)
        assert np.isnan(rows[0]["ratio"])

    def test_validation(self):
        with pytest.raises(ValueError):
            ratio_sweep(lambda e, s: None, [], [-1.0], reps=1, bz_hi=1.0)
        with pytest.raises(ValueError):
            ratio_sweep(lambda e, s: None, [1.0], [-1.0], reps=0, bz_hi=1.0)


class TestFitExponents:
    def test_noiseless_round_trip(self):
        chis = list(3.6 + np.logspace(-2, 0.9, 24))
        table = synthetic_ratio_table(chis, [-0.9, -1.0, -1.1, -1.2],
                                      1.2, 2.0, 3.6, -1.45)
        fit = fit_exponents(table, -1.45)
        assert fit.gamma == pytest.approx(1.2, rel=0.02)
        assert fit.delta == pytest.approx(2.0, rel=0.02)
        assert fit.chi_c == pytest.approx(3.6, rel=0.02)

    def test_noisy_round_trip(self):
        chis = list(3.6 + np.logspace(-2, 0.9, 24))
        table = synthetic_ratio_table(chis, [-0.9, -1.0, -1.1, -1.2],
                                      1.2, 2.0, 3.6, -1.45, noise=0.05, seed=8)
        fit = fit_exponents(table, -1.45)
        assert fit.gamma == pytest.approx(1.2, rel=0.10)
        assert fit.delta == pytest.approx(2.0, rel=0.10)
        assert fit.chi_c == pytest.approx(3.6, rel=0.10)

    def test_single_chi_is_fit_window_error(self):
        table = synthetic_ratio_table([4.0], [-0.9, -1.0], 1.2, 2.0, 3.6, -1.45)
        with pytest.raises(FitWindowError):
            fit_exponents(table, -1.45)

    def test_single_eps_r_is_fit_window_error(self):
        chis = list(3.6 + np.logspace(-2, 0.9, 12))
        table = synthetic_ratio_table(chis, [-1.0], 1.2, 2.0, 3.6, -1.45)
        with pytest.raises(FitWindowError):
            fit_exponents(table, -1.45)

    def test_narrow_span_is_fit_window_error(self):
        chis = list(3.6 + np.linspace(1.0, 1.5, 8))
        table = synthetic_ratio_table(chis, [-0.9, -1.1], 1.2, 2.0, 3.6, -1.45)
        with pytest.raises(FitWindowError):
            fit_exponents(table, -1.45)

    def test_residuals_small_on_clean_data(self):
        chis = list(3.6 + np.logspace(-2, 0.9, 20))
        table = synthetic_ratio_table(chis, [-0.9, -1.1], 1.2, 2.0, 3.6, -1.45)
        fit = fit_exponents(table, -1.45)
        assert np.sqrt(np.mean(fit.residuals ** 2)) < 1e-6


class TestPhaseBoundary:
    def test_geometry_and_shape(self):
        ens = sample_ensemble(80, 400, seed=6, eps_r=-1.05)
        chis = [0.0, 0.5, 1.0, 2.0, 3.0, 4.0]
        pts = phase_boundary(ens, chis)
        assert len(pts) == len(chis)
        for chi, (bz, bx) in zip(chis, pts):
            assert bx == pytest.approx(chi * bz, abs=1e-12)
        # for this self-energy family the last intersection moves outward
        # with chi (the reference's slope advantage shrinks along the ray)
        bzs = [bz for bz, _ in pts]
        assert all(b2 >= b1 - 1e-9 for b1, b2 in zip(bzs, bzs[1:]))
        assert bzs[-1] > bzs[0]

    def test_empty_chis_rejected(self):
        ens = sample_ensemble(40, 10, seed=0, eps_r=-1.0)
        with pytest.raises(ValueError):
            phase_boundary(ens, [])


class TestTableFormats:
    def test_sweep_csv_roundtrip(self, tmp_path):
        rows = synthetic_ratio_table([4.0, 5.0], [-1.0], 1.2, 2.0, 3.6, -1.45,
                                     seed=1)
        path = tmp_path / "sweep.csv"
        write_sweep_csv(rows, path, metadata={"seed": 1})
        back = read_sweep_csv(path)
        assert len(back) == len(rows)
        for a, b in zip(rows, back):
            assert a["chi"] == b["chi"]
            assert a["ratio"] == pytest.approx(b["ratio"], rel=1e-15)

    def test_fit_json_fields(self, tmp_path):
        import json
        chis = list(3.6 + np.logspace(-2, 0.9, 16))
        table = synthetic_ratio_table(chis, [-0.9, -1.1], 1.2, 2.0, 3.6, -1.45)
        fit = fit_exponents(table, -1.45)
        path = tmp_path / "fit.json"
        write_fit_json(fit, path, metadata={"source": "test"})
        doc = json.loads(path.read_text())
        assert set(doc) >= {"gamma", "delta", "chi_c", "eps_gs", "residuals",
                            "chi_min", "chi_max"}
        assert doc["meta"]["source"] == "test"


def test_default_eps_gs_below_sampler_mean():
    mean = gaussian_minima_energies(np.random.default_rng(0), 100, 1.0,
                                    20000).mean() / 100
    assert default_eps_gs(100, 5000) < mean
