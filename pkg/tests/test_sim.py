import numpy as np
import pytest
from scipy import stats

from survmi import rng as rngmod
from survmi.datamodel import MISSING
from survmi.sim import (ALL_METHODS, CATALOG_BETAS, COMPLETE_CASE, FULL_DATA,
                        IMPUTE_SPECS, MULTIPLE_IMPUTATION, POISSON_METHODS,
                        MarLogistic, McarQ1, Mnar, SimScenario, WithQ0Missing,
                        Y1_QUARTILES, apply_missingness, generate_cohort,
                        imputation_model_spec, mechanism_from_dict,
                        mechanism_to_dict, run_method, run_replicate,
                        run_scenario, scenario_catalog, working_dataset)


def _scenario(**kw):
    base = dict(beta_true=-1.5, n=400, n_reps=5, seed=11,
                methods=(FULL_DATA, COMPLETE_CASE, MULTIPLE_IMPUTATION),
                m=5)
    base.update(kw)
    return SimScenario(**base)


# ---------------------------------------------------------------------------
# data generation

def test_censoring_fractions_match_design():
    # unit-hazard failures against exponential(mean 5) censoring produce
    # roughly 35% / 75% / 90% censoring at the three coefficient values
    targets = {-0.5: 0.35, -1.5: 0.75, -3.0: 0.90}
    for beta, target in targets.items():
        sc = _scenario(beta_true=beta, n=20000)
        cohort = generate_cohort(sc, np.random.default_rng(1))
        frac = 1 - cohort.delta_true.mean()
        assert abs(frac - target) < 0.03, (beta, frac)


def test_failure_times_unit_exponential_at_zero_coefficient():
    sc = _scenario(beta_true=0.0, n=5000)
    cohort = generate_cohort(sc, np.random.default_rng(3))
    # with beta = 0 the latent failure time is Exp(1) regardless of y1
    stat, p = stats.kstest(cohort.failure_time, "expon")
    assert p > 0.01


def test_censor_times_exponential_mean_five():
    sc = _scenario(n=5000)
    cohort = generate_cohort(sc, np.random.default_rng(4))
    stat, p = stats.kstest(cohort.censor_time / 5.0, "expon")
    assert p > 0.01


def test_screener_tracks_true_indicator():
    sc = _scenario(beta_true=-0.5, n=20000)
    cohort = generate_cohort(sc, np.random.default_rng(5))
    for d in (0, 1):
        sel = cohort.delta_true == d
        assert abs(cohort.y2[sel].mean() - d) < 0.02
        assert abs(cohort.y2[sel].std() - 0.3) < 0.02
    # screen threshold at 0.5: roughly Phi(0.5/0.3) of failures screen
    # positive and the same fraction of censored screen negative
    expected = stats.norm.cdf(0.5 / 0.3)
    assert abs(cohort.screen[cohort.delta_true == 1].mean() - expected) < 0.02
    assert abs((~cohort.screen[cohort.delta_true == 0]).mean() - expected) < 0.02


def test_working_indicator_zero_on_negative_screen():
    sc = _scenario(n=2000)
    cohort = generate_cohort(sc, np.random.default_rng(6))
    assert np.all(cohort.delta_work[~cohort.screen] == 0)
    np.testing.assert_array_equal(cohort.delta_work[cohort.screen],
                                  cohort.delta_true[cohort.screen])


# ---------------------------------------------------------------------------
# missingness mechanisms

def _cohort(n=20000, beta=-1.5, seed=7):
    return generate_cohort(_scenario(beta_true=beta, n=n),
                           np.random.default_rng(seed))


def test_mar_missingness_confined_to_positive_screens():
    cohort = apply_missingness(_cohort(), MarLogistic(),
                               np.random.default_rng(8))
    assert np.all(cohort.xi[~cohort.screen] == 1)
    assert 0.2 < (cohort.xi[cohort.screen] == 0).mean() < 0.6


def test_mcar_rate_among_positive_screens():
    cohort = apply_missingness(_cohort(), McarQ1(0.4),
                               np.random.default_rng(9))
    assert np.all(cohort.xi[~cohort.screen] == 1)
    rate = (cohort.xi[cohort.screen] == 0).mean()
    assert abs(rate - 0.4) < 0.02


def test_mnar_rates_split_by_true_indicator():
    # censored subjects rarely screen positive, so oversample to pin
    # down the censored-group rate
    cohort = apply_missingness(_cohort(n=200000, beta=-0.5), Mnar(0.3, 0.5),
                               np.random.default_rng(10))
    pos = cohort.screen
    fail = pos & (cohort.delta_true == 1)
    cens = pos & (cohort.delta_true == 0)
    assert abs((cohort.xi[fail] == 0).mean() - 0.5) < 0.03
    assert abs((cohort.xi[cens] == 0).mean() - 0.3) < 0.03
    assert np.all(cohort.xi[~pos] == 1)


def test_q0_mechanism_hits_negative_screens_too():
    cohort = apply_missingness(_cohort(), WithQ0Missing(0.4),
                               np.random.default_rng(11))
    q0_rate = (cohort.xi[~cohort.screen] == 0).mean()
    assert abs(q0_rate - 0.4) < 0.02
    assert (cohort.xi[cohort.screen] == 0).mean() > 0.2


def test_zero_probability_mechanism_leaves_everything_observed():
    cohort = apply_missingness(_cohort(n=3000), McarQ1(0.0),
                               np.random.default_rng(12))
    assert np.all(cohort.xi == 1)
    assert working_dataset(cohort).n_missing == 0


def test_working_dataset_marks_unexamined_rows_missing():
    cohort = apply_missingness(_cohort(n=3000), MarLogistic(),
                               np.random.default_rng(13))
    ds = working_dataset(cohort)
    np.testing.assert_array_equal(ds.status == MISSING, cohort.xi == 0)
    np.testing.assert_array_equal(ds.baseline[:, 0], cohort.y1)
    np.testing.assert_array_equal(ds.screencov[:, 0], cohort.y2)
    np.testing.assert_array_equal(ds.screencov[:, 1], cohort.y3)


def test_mechanism_dict_round_trip():
    for mech in (MarLogistic(-0.1, 0.2, 0.05), McarQ1(0.25), Mnar(0.2, 0.6),
                 WithQ0Missing(0.3, MarLogistic(0.0, -1.0, 0.5))):
        assert mechanism_from_dict(mechanism_to_dict(mech)) == mech


# ---------------------------------------------------------------------------
# imputation model specs

def test_impute_spec_variants_design_widths():
    cohort = apply_missingness(_cohort(n=500), MarLogistic(),
                               np.random.default_rng(14))
    ds = working_dataset(cohort)
    rows = np.arange(10)
    # intercept + terms + time
    widths = {"correct": 4, "extra": 5, "omit": 3}
    for name in IMPUTE_SPECS:
        spec = imputation_model_spec(name)
        assert spec.design(ds, rows).shape == (10, widths[name])


# ---------------------------------------------------------------------------
# replicates and scenarios

def test_full_data_method_ignores_missingness():
    sc = _scenario(methods=ALL_METHODS, bootstrap_B=100)
    cohort = generate_cohort(sc, np.random.default_rng(15))
    a = apply_missingness(cohort, McarQ1(0.1), np.random.default_rng(1))
    b = apply_missingness(cohort, McarQ1(0.7), np.random.default_rng(2))
    ra = run_method(FULL_DATA, a, sc, np.random.default_rng(0))
    rb = run_method(FULL_DATA, b, sc, np.random.default_rng(0))
    assert ra.estimate == rb.estimate and ra.lo == rb.lo and ra.hi == rb.hi


def test_replicate_is_pure_function_of_scenario_and_index():
    sc = _scenario()
    r1 = run_replicate(sc, 3)
    r2 = run_replicate(sc, 3)
    for method in sc.methods:
        assert r1[method].estimate == r2[method].estimate
        assert r1[method].lo == r2[method].lo
        assert r1[method].hi == r2[method].hi


def test_replicates_differ_across_indices_and_seeds():
    sc = _scenario()
    assert (run_replicate(sc, 0)[FULL_DATA].estimate
            != run_replicate(sc, 1)[FULL_DATA].estimate)
    other = _scenario(seed=999)
    assert (run_replicate(sc, 0)[FULL_DATA].estimate
            != run_replicate(other, 0)[FULL_DATA].estimate)


def test_substreams_are_distinct():
    a = rngmod.substream(1, 0, rngmod.GENERATE).random(4)
    b = rngmod.substream(1, 0, rngmod.MISSINGNESS).random(4)
    c = rngmod.substream(1, 1, rngmod.GENERATE).random(4)
    assert not np.allclose(a, b) and not np.allclose(a, c)
    np.testing.assert_array_equal(
        a, rngmod.substream(1, 0, rngmod.GENERATE).random(4))


def test_run_scenario_summary_shape_and_determinism():
    sc = _scenario(n_reps=4)
    s1 = run_scenario(sc)
    s2 = run_scenario(sc)
    assert set(s1.methods) == set(sc.methods)
    for method in sc.methods:
        m1, m2 = s1.methods[method], s2.methods[method]
        assert m1.bias == m2.bias
        assert m1.mean_width == m2.mean_width
        assert m1.coverage == m2.coverage
        assert m1.n_used == 4 and m1.n_failed == 0
        assert 0.0 <= m1.coverage <= 1.0
        assert m1.mean_width > 0


def test_parallel_jobs_match_serial():
    sc = _scenario(n_reps=6)
    serial = run_scenario(sc, jobs=1)
    parallel = run_scenario(sc, jobs=2)
    for method in sc.methods:
        a, b = serial.methods[method], parallel.methods[method]
        assert a.bias == b.bias
        assert a.mean_width == b.mean_width
        assert a.coverage == b.coverage
        assert a.se_bias == b.se_bias


def test_poisson_scenario_reports_incidence():
    sc = _scenario(analysis="poisson", methods=POISSON_METHODS, n_reps=3,
                   bootstrap_B=100)
    summary = run_scenario(sc)
    for method in POISSON_METHODS:
        inc = summary.methods[method].incidence
        assert set(inc) == set(Y1_QUARTILES)
        for rate, se in inc.values():
            assert 0 < rate < 1.5


def test_scenario_validation_errors():
    with pytest.raises(ValueError):
        _scenario(imputation_spec="bogus")
    with pytest.raises(ValueError):
        _scenario(analysis="logistic")
    with pytest.raises(ValueError):
        _scenario(level=1.5)
    with pytest.raises(ValueError):
        _scenario(methods=("nope",))


def test_scenario_dict_round_trip():
    sc = _scenario(mechanism=Mnar(0.2, 0.6), imputation_spec="extra",
                   name="mnar_cell")
    assert SimScenario.from_dict(sc.to_dict()) == sc


# ---------------------------------------------------------------------------
# catalog

def test_catalog_has_thirty_cells():
    catalog = scenario_catalog()
    assert len(catalog) == 30
    betas = {sc.beta_true for sc in catalog.values()}
    assert betas == set(CATALOG_BETAS)
    for name, sc in catalog.items():
        assert sc.name == name
        assert sc.n == 1000 and sc.n_reps == 1000 and sc.bootstrap_B == 1000


def test_catalog_desk_scale_only_changes_replication():
    full = scenario_catalog(desk_scale=False, seed=5)
    desk = scenario_catalog(desk_scale=True, seed=5)
    assert set(full) == set(desk)
    for name in full:
        f, d = full[name].to_dict(), desk[name].to_dict()
        assert d.pop("n_reps") == 200 and f.pop("n_reps") == 1000
        assert d.pop("bootstrap_B") == 300 and f.pop("bootstrap_B") == 1000
        assert f == d


def test_catalog_poisson_cells_skip_weighted_comparator():
    catalog = scenario_catalog()
    for name, sc in catalog.items():
        if sc.analysis == "poisson":
            assert sc.methods == POISSON_METHODS
        else:
            assert sc.methods == ALL_METHODS
