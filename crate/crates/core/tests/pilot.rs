//! Small Monte Carlo checks on the error-correction DGP where the first
//! `p − s` coordinates are stationary and the last `s` are random walks.

use kltrend::basis::{default_k, k_grid, kl_design};
use kltrend::limit_law::{build_table, Norm, StripeCenter, TableConfig};
use kltrend::loadings::{icc, lrv, IdentificationPair, DEFAULT_MAX_ITER, DEFAULT_TOL};
use kltrend::mc::{simulate_sample, GridPoint};
use kltrend::trend_count::{identification_check_at, misspec_diagnostic, CountMethod};

const SEED: u64 = 2024;

fn pair(p: usize, s: usize) -> IdentificationPair {
    let walks: Vec<usize> = (p - s..p).collect();
    IdentificationPair::coordinates(p, &walks).unwrap()
}

/// Largest absolute entry of the free block of `β̂`, whose true value is 0.
fn beta_error(point: &GridPoint, rep: u64) -> (f64, bool) {
    let sample = simulate_sample(point, SEED, rep);
    let d = kl_design(default_k(point.t), point.t).unwrap();
    let est = icc(&sample, &d, point.s, &pair(point.p, point.s), DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    let r = point.p - point.s;
    let free = est.beta_hat.view((r, 0), (point.s, r));
    (free.amax(), est.converged)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn icc_converges_and_beta_is_superconsistent() {
    let reps = 30;
    let mut errs = Vec::new();
    for t in [200, 800] {
        let point = GridPoint::new(4, 2, 0.5, t);
        let (e, conv): (Vec<f64>, Vec<bool>) = (0..reps).map(|r| beta_error(&point, r)).unzip();
        let rate = conv.iter().filter(|&&c| c).count() as f64 / reps as f64;
        assert!(rate >= 0.95, "T={t}: convergence rate {rate}");
        errs.push(mean(&e));
    }
    let ratio = errs[0] / errs[1];
    assert!(ratio > 2.5, "error ratio {ratio} for a fourfold increase in T");
}

#[test]
fn lrv_recovers_innovation_variances() {
    let (p, s, a, t) = (4, 2, 0.9, 1000);
    let point = GridPoint::new(p, s, a, t);
    let d = kl_design(default_k(t), t).unwrap();
    let mut diag11 = Vec::new();
    let mut diag22 = Vec::new();
    for rep in 0..30 {
        let sample = simulate_sample(&point, SEED, 100 + rep);
        let est = icc(&sample, &d, s, &pair(p, s), DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let l = lrv(&sample, &d, &est.psi_hat, &est.beta_hat).unwrap();
        let o = &l.omega;
        diag11.extend((0..s).map(|i| o[(i, i)]));
        diag22.extend((s..p).map(|i| o[(i, i)]));
    }
    // Unit-variance walk increments, and AR(1−a) levels with long-run
    // variance 1/a².
    let (m11, m22) = (mean(&diag11), mean(&diag22));
    assert!((m11 - 1.0).abs() < 0.1, "Ω11 {m11}");
    assert!((m22 * a * a - 1.0).abs() < 0.15, "Ω22 {m22}");
}

fn identification_rates(t: usize) -> (f64, f64) {
    let (p, s) = (4, 2);
    let point = GridPoint::new(p, s, 0.5, t);
    let d = kl_design(default_k(t), t).unwrap();
    let good = pair(p, s).b;
    let bad = IdentificationPair::coordinates(p, &[0, p - 1]).unwrap().b;
    let reps = 40;
    let (mut accept_good, mut reject_bad) = (0, 0);
    for rep in 0..reps {
        let sample = simulate_sample(&point, SEED, 200 + rep);
        let g = identification_check_at(&sample, &good, &d, CountMethod::MaxGap, None, s).unwrap();
        let b = identification_check_at(&sample, &bad, &d, CountMethod::MaxGap, None, s).unwrap();
        accept_good += usize::from(g.accept);
        reject_bad += usize::from(!b.accept);
    }
    (accept_good as f64 / reps as f64, reject_bad as f64 / reps as f64)
}

#[test]
fn identification_rule_with_known_count() {
    let (good_small, bad_small) = identification_rates(400);
    let (good_large, bad_large) = identification_rates(1600);
    assert!(good_small >= 0.9 && good_large >= 0.9, "good b accepted {good_small} / {good_large}");
    assert!(bad_large > bad_small, "bad b rejected {bad_small} at T=400, {bad_large} at T=1600");
    assert!(bad_large >= 0.9, "bad b rejected {bad_large} at T=1600");
}

#[test]
fn misspec_slope_and_stripe_coverage_under_correct_specification() {
    let (p, s, t) = (4, 2, 1000);
    let point = GridPoint::new(p, s, 0.5, t);
    let tables = build_table(&TableConfig {
        s_max: s,
        etas: vec![0.05],
        n_steps: 1000,
        n_reps: 5000,
        seed: 8,
    })
    .unwrap();
    let grid = k_grid(60, 1, 3).unwrap();
    let reps = 40;
    let mut slopes = Vec::new();
    let mut inside = 0;
    for rep in 0..reps {
        let sample = simulate_sample(&point, SEED, 300 + rep);
        let diag = misspec_diagnostic(&sample, s, &grid, Norm::One, &tables, 0.05, StripeCenter::Mean).unwrap();
        slopes.push(diag.fitted_slope.unwrap());
        inside += usize::from(diag.inside_stripe);
    }
    let slope = mean(&slopes);
    let coverage = inside as f64 / reps as f64;
    assert!((slope + 1.0).abs() < 0.2, "mean slope {slope}");
    assert!(coverage >= 0.8, "stripe coverage {coverage}");
}
