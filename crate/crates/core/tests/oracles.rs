//! Simulation oracles for the estimators: every expected value here comes from
//! the simulator's closed forms or from brute-force moments computed in the test.

use chrono::NaiveDate;
use spotvol_core::linalg::{self, Mat};
use spotvol_core::rcv::{self, differences, long_span_average, rcv_adjusted, rcv_naive};
use spotvol_core::semigroup::{estimate_semigroup, propagation_residuals, RidgePolicy, SemigroupSchedule};
use spotvol_core::sim::{population_moments, simulate_heat_spde, simulate_ou_1d, SimConfig};
use spotvol_core::{DeliveryPartition, DAY};

fn fixture(days: usize, seed: u64) -> SimConfig {
    SimConfig::stationary(3, 20.0, 30.0, vec![4.0, 3.0, 2.0, 1.5], DeliveryPartition::uniform(6).unwrap(), days, seed)
}

fn scalar_rows(x: &[f64]) -> Mat {
    Mat::from_column_slice(x.len(), 1, x)
}

fn dates(n: usize) -> Vec<NaiveDate> {
    let start = NaiveDate::from_ymd_opt(2000, 1, 1).unwrap();
    (0..n).map(|i| start + chrono::Days::new(i as u64)).collect()
}

fn full_sample_residuals(rows: &Mat, ds: &[NaiveDate]) -> spotvol_core::semigroup::ResidualPanel {
    let est = estimate_semigroup(rows, RidgePolicy::exact()).unwrap();
    propagation_residuals(rows, ds, &SemigroupSchedule::constant(est)).unwrap()
}

/// `Ĉ Γ̂⁻¹` by explicit sums, independent of the library estimator.
fn brute_force_predictor(rows: &Mat) -> Mat {
    let (t, d) = (rows.nrows(), rows.ncols());
    let mut c = Mat::zeros(d, d);
    let mut g = Mat::zeros(d, d);
    for n in 1..t {
        for i in 0..d {
            for j in 0..d {
                c[(i, j)] += rows[(n, i)] * rows[(n - 1, j)];
                g[(i, j)] += rows[(n - 1, i)] * rows[(n - 1, j)];
            }
        }
    }
    c * g.try_inverse().unwrap()
}

#[test]
fn ou_semigroup_recovers_ar_coefficient() {
    let lambda = 0.8f64.ln() / DAY;
    let mut est = Vec::new();
    for seed in 0..5 {
        let sim = simulate_ou_1d(lambda, &[1.0], DAY, 200_000, None, seed).unwrap();
        est.push(estimate_semigroup(&scalar_rows(&sim.x), RidgePolicy::exact()).unwrap().s[(0, 0)]);
    }
    assert!((linalg::median(&est) - 0.8).abs() < 0.01, "{est:?}");
}

#[test]
fn ou_iid_rows_give_small_predictor() {
    // λ → -∞ makes consecutive observations independent.
    let sim = simulate_ou_1d(-1e9, &[1.0], DAY, 100_000, None, 3).unwrap();
    let s = estimate_semigroup(&scalar_rows(&sim.x), RidgePolicy::exact()).unwrap().s[(0, 0)];
    assert!(s.abs() < 0.02, "{s}");
}

#[test]
fn ou_adjusted_limit() {
    let lambda = 0.8f64.ln() / DAY;
    let mut errs = Vec::new();
    for seed in 0..5 {
        let sim = simulate_ou_1d(lambda, &[1.3], DAY, 200_000, None, 100 + seed).unwrap();
        let ds = dates(sim.x.len());
        let res = full_sample_residuals(&scalar_rows(&sim.x), &ds);
        let avg = long_span_average(&rcv_adjusted(&res, 7, DAY, false).unwrap()).unwrap()[(0, 0)];
        errs.push((avg / sim.adjusted_limit - 1.0).abs());
        // Propagation share of a scalar AR(1): (1 - a)/2.
        let ps = rcv::propagation_share(&res, DAY).unwrap().ps_total;
        assert!((ps - 0.1).abs() < 0.01, "{ps}");
    }
    assert!(linalg::median(&errs) < 0.02, "{errs:?}");
}

#[test]
fn random_walk_naive_rcv_is_sigma_squared() {
    let sim = simulate_ou_1d(0.0, &[1.0], DAY, 200_001, Some(0.0), 8).unwrap();
    let (ds, diffs) = differences(&scalar_rows(&sim.x), &dates(sim.x.len()));
    let avg = long_span_average(&rcv_naive(&diffs, &ds, 7, DAY, false).unwrap()).unwrap()[(0, 0)];
    assert!((avg - 1.0).abs() < 0.02, "{avg}");
}

#[test]
fn zero_volatility_ou_has_zero_adjusted_rcv() {
    let sim = simulate_ou_1d(-40.0, &[0.0], DAY, 500, Some(2.0), 1).unwrap();
    let ds = dates(sim.x.len());
    let res = full_sample_residuals(&scalar_rows(&sim.x), &ds);
    let series = rcv_adjusted(&res, 7, DAY, true).unwrap();
    let scale = sim.x[0] * sim.x[0] / DAY;
    assert!(series.mats.iter().all(|m| m[(0, 0)].abs() < 1e-20 * scale));
}

#[test]
fn population_predictor_matches_monte_carlo() {
    let cfg = fixture(1_000_000, 5);
    let truth = simulate_heat_spde(&cfg).unwrap();
    let mc = brute_force_predictor(truth.panel.values());
    let s = population_moments(&cfg).unwrap().s;
    assert!(linalg::rel_frobenius(&s, &mc) < 0.01);
    assert_eq!(truth.true_predictor.as_ref(), Some(&s));
}

#[test]
fn semigroup_error_shrinks_with_sample_size() {
    let pop = population_moments(&fixture(10, 0)).unwrap().s;
    let mut medians = Vec::new();
    for n in [1_000, 10_000, 100_000] {
        let errs: Vec<f64> = (0..20)
            .map(|seed| {
                let truth = simulate_heat_spde(&fixture(n, 1000 + seed)).unwrap();
                let est = estimate_semigroup(truth.panel.values(), RidgePolicy::exact()).unwrap();
                linalg::rel_frobenius(&est.s, &pop)
            })
            .collect();
        medians.push(linalg::median(&errs));
    }
    assert!(medians[0] > medians[1] && medians[1] > medians[2], "{medians:?}");
    let est = estimate_semigroup(simulate_heat_spde(&fixture(100_000, 3)).unwrap().panel.values(), RidgePolicy::exact()).unwrap();
    let spec = spotvol_core::semigroup::spectrum(&est.s);
    assert!(spec.eigenvalues.iter().all(|z| spotvol_core::semigroup::modulus(z) < 1.0));
}

#[test]
fn adjusted_long_span_matches_population_limit() {
    let cfg = fixture(100_001, 21);
    let truth = simulate_heat_spde(&cfg).unwrap();
    let pm = population_moments(&cfg).unwrap();
    let res = full_sample_residuals(truth.panel.values(), truth.panel.dates());
    let series = rcv_adjusted(&res, 7, DAY, false).unwrap();
    let avg = long_span_average(&series).unwrap();
    assert!(linalg::rel_frobenius(&avg, &pm.adjusted) < 0.03);
    for m in &series.mats {
        assert!(linalg::min_sym_eigenvalue(m) >= -1e-10 * linalg::trace(m));
    }
}

#[test]
fn naive_long_span_decomposes_into_adjusted_propagation_and_cross_terms() {
    let cfg = fixture(20_001, 4);
    let truth = simulate_heat_spde(&cfg).unwrap();
    let rows = truth.panel.values();
    let res = full_sample_residuals(rows, truth.panel.dates());
    let n = res.len();
    // Disjoint windows covering every residual so the identity is exact.
    let w = 7;
    let usable = n - n % w;
    let trim = |m: &Mat| m.rows(0, usable).into_owned();
    let sub = spotvol_core::semigroup::ResidualPanel { dates: res.dates[..usable].to_vec(), eps: trim(&res.eps), bhat: trim(&res.bhat), first_row: res.first_row };
    let naive = long_span_average(&rcv_naive(&sub.increments(), &sub.dates, w, DAY, false).unwrap()).unwrap();
    let adjusted = long_span_average(&rcv_adjusted(&sub, w, DAY, false).unwrap()).unwrap();
    let (bb, cross) = rcv::propagation_moments(&sub, DAY);
    let assembled = &adjusted + &bb + &cross;
    assert!(linalg::rel_frobenius(&assembled, &naive) < 1e-12);
    // Orthogonality of ε̂ and X̃_{n-1} makes the cross term vanish on the full sample.
    let (_, full_cross) = rcv::propagation_moments(&res, DAY);
    assert!(linalg::max_abs(&full_cross) < 1e-8 * linalg::max_abs(&naive));
}

#[test]
fn normal_equations_hold_for_full_sample_estimate() {
    let truth = simulate_heat_spde(&fixture(5_000, 9)).unwrap();
    let rows = truth.panel.values();
    let res = full_sample_residuals(rows, truth.panel.dates());
    let d = rows.ncols();
    let mut m = Mat::zeros(d, d);
    for (k, n) in (res.first_row..rows.nrows()).enumerate() {
        for i in 0..d {
            for j in 0..d {
                m[(i, j)] += res.eps[(k, i)] * rows[(n - 1, j)];
            }
        }
    }
    let scale: f64 = rows.iter().map(|v| v * v).sum();
    assert!(linalg::max_abs(&m) < 1e-10 * scale);
}

#[test]
fn naive_long_span_matches_longer_simulation() {
    let short = simulate_heat_spde(&fixture(20_001, 31)).unwrap();
    let long = simulate_heat_spde(&fixture(200_001, 32)).unwrap();
    let moment = |t: &spotvol_core::sim::SimTruth| {
        let (_, diffs) = differences(t.panel.values(), t.panel.dates());
        (diffs.transpose() * &diffs) / (diffs.nrows() as f64 * DAY)
    };
    let (ds, diffs) = differences(short.panel.values(), short.panel.dates());
    let avg = long_span_average(&rcv_naive(&diffs, &ds, 7, DAY, true).unwrap()).unwrap();
    assert!(linalg::rel_frobenius(&avg, &moment(&long)) < 0.02);
}

#[test]
fn average_price_variance_matches_zero_mode() {
    // Random-walk zero mode: the heat semigroup leaves the daily average untouched,
    // so its realized variance is the zero mode's injected variance σ₀²/(2π).
    let mut rel = Vec::new();
    for seed in 0..20 {
        let mut cfg = fixture(20_001, 500 + seed);
        cfg.zero_mode_rate = 0.0;
        let truth = simulate_heat_spde(&cfg).unwrap();
        let (ds, diffs) = differences(truth.panel.values(), truth.panel.dates());
        let series = rcv_naive(&diffs, &ds, 7, DAY, false).unwrap();
        let rv = rcv::rv_average_price(&series, &cfg.partition.average_weights()).unwrap();
        let target = 16.0 / (2.0 * std::f64::consts::PI);
        rel.push((linalg::mean(&rv) / target - 1.0).abs());
    }
    assert!(linalg::median(&rel) < 0.02, "{rel:?}");
}

#[test]
fn window_truth_tracks_naive_innovation() {
    // Rolling truth windows are PSD and average to the expected weighted variance.
    let cfg = fixture(2_001, 8);
    let truth = simulate_heat_spde(&cfg).unwrap();
    let series = truth.true_iv_series(7).unwrap();
    let pm = population_moments(&cfg).unwrap();
    let mut avg = Mat::zeros(6, 6);
    for m in &series {
        assert!(linalg::min_sym_eigenvalue(m) >= -1e-10 * linalg::trace(m));
        avg += m;
    }
    avg /= series.len() as f64;
    assert!(linalg::rel_frobenius(&avg, &pm.weighted_iv) < 1e-9);
}
