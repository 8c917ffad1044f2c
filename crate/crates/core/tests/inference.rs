mod common;

use common::*;
use nalgebra::DMatrix;
use qmlbreaks::asymptotics::{confint, sandwich_cov};
use qmlbreaks::estimate::{fit_segment, FitOptions, PreparedSeries};
use qmlbreaks::likelihood::{segment_contrast, SegmentRef};

/// Mean |contrast with zero past − contrast with the true past| / m over
/// segments starting after `k` observations.
fn truncation_gap(name: &str, theta: &[f64], k: usize, reps: u64) -> f64 {
    let f = family(name);
    let (pre, m) = (300, 100);
    let mut total = 0.0;
    for seed in 0..reps {
        let y = stationary_path(f, theta, pre + k + m, seed);
        let x = &y[pre..];
        let zero = segment_contrast(f, theta, x, SegmentRef { lo: k, hi: k + m }).unwrap();
        let full = segment_contrast(f, theta, &y, SegmentRef { lo: pre + k, hi: pre + k + m }).unwrap();
        total += (zero - full).abs() / m as f64;
    }
    total / reps as f64
}

#[test]
fn zero_padding_error_fades_with_distance_from_the_start() {
    let ar = [0.0, 50.0, 200.0].map(|k| truncation_gap("ar(1)", &[0.6], k as usize, 50));
    assert!(ar[0] > 0.0 && ar[1] <= ar[0] && ar[2] <= ar[1], "{ar:?}");
    let garch = [0.0, 50.0, 200.0].map(|k| truncation_gap("garch(1,1)", &[0.3, 0.1, 0.8], k as usize, 50));
    assert!(garch[0] > garch[1] && garch[1] > garch[2], "{garch:?}");
}

#[test]
fn gaussian_ar_information_identity() {
    let f = family("ar(1)");
    let x = stationary_path(f, &[0.5], 10_000, 1);
    let prepared = PreparedSeries::new(f, &x).unwrap();
    let seg = SegmentRef { lo: 0, hi: x.len() };
    let fit = fit_segment(&prepared, &domain(f), seg, None, &FitOptions::default()).unwrap();
    let est = sandwich_cov(f, &fit.theta, &x, seg).unwrap();
    let m = |v: &Vec<Vec<f64>>| DMatrix::from_fn(v.len(), v.len(), |i, j| v[i][j]);
    let spectral = |a: DMatrix<f64>| a.singular_values().max();
    let (fm, gm) = (m(&est.f_hat), m(&est.g_hat));
    let gap = spectral(&fm - &gm * 0.5) / spectral(fm);
    assert!(gap < 0.1, "‖F − G/2‖ / ‖F‖ = {gap}");
}

fn mean_cov(name: &str, theta: &[f64], n: usize, reps: u64) -> Vec<f64> {
    let f = family(name);
    let dom = domain(f);
    let mut acc = vec![0.0; theta.len()];
    for seed in 0..reps {
        let x = stationary_path(f, theta, n, seed);
        let prepared = PreparedSeries::new(f, &x).unwrap();
        let seg = SegmentRef { lo: 0, hi: n };
        let fit = fit_segment(&prepared, &dom, seg, None, &FitOptions::default()).unwrap();
        let est = sandwich_cov(f, &fit.theta, &x, seg).unwrap();
        for (a, row) in acc.iter_mut().zip(&est.cov).enumerate().map(|(i, (a, row))| (a, row[i])) {
            *a += row;
        }
    }
    acc.iter().map(|v| v / reps as f64).collect()
}

#[test]
fn standardized_covariance_settles() {
    let small = mean_cov("ar(1)", &[0.5], 2000, 100);
    let large = mean_cov("ar(1)", &[0.5], 8000, 100);
    for (a, b) in small.iter().zip(&large) {
        assert!((a - b).abs() / b < 0.2, "{small:?} vs {large:?}");
    }
    assert!((large[0] - 0.75).abs() < 0.05, "{large:?}");
}

#[test]
fn intervals_widen_with_the_level() {
    let f = family("arch(1)");
    let x = stationary_path(f, &[0.5, 0.3], 3000, 2);
    let prepared = PreparedSeries::new(f, &x).unwrap();
    let seg = SegmentRef { lo: 0, hi: x.len() };
    let fit = fit_segment(&prepared, &domain(f), seg, None, &FitOptions::default()).unwrap();
    let est = sandwich_cov(f, &fit.theta, &x, seg).unwrap();
    let narrow = confint(&est, &fit.theta, 0.8).unwrap();
    let wide = confint(&est, &fit.theta, 0.99).unwrap();
    for ((a, b), t) in narrow.iter().zip(&wide).zip(fit.theta.iter()) {
        assert!(b.0 < a.0 && a.0 < *t && *t < a.1 && a.1 < b.1);
    }
    // true θ inside the 99% band on this seed
    assert!(wide[0].0 < 0.5 && 0.5 < wide[0].1 && wide[1].0 < 0.3 && 0.3 < wide[1].1, "{wide:?}");
}
