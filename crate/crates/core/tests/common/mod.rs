//! Oracles and invariant checks shared by the integration suites.
//!
//! Each `check_*` function returns `Err` with a diagnostic instead of
//! panicking, so the same code backs proptest cases and the acceptance runner.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use qmlbreaks::estimate::{
    build_cost_table, dp_segment_beta, fit_segment, FitOptions, PreparedSeries, SegmentCostTable, TableOptions,
};
use qmlbreaks::exec::Exec;
use qmlbreaks::likelihood::{qhat_values, segment_contrast, segment_score, SegmentRef};
use qmlbreaks::simulate::{simulate_stationary, SimulationSpec};
use qmlbreaks::{simulate_piecewise, BreakModel, InnovationLaw, ModelFamily, ParamDomain, SimOptions};

pub type Check = Result<(), String>;

pub const FAMILIES: [&str; 5] = ["ar(2)", "rar(10)", "arch(2)", "garch(1,1)", "tarch(1)"];

pub fn family(name: &str) -> ModelFamily {
    name.parse().unwrap()
}

pub fn domain(f: ModelFamily) -> ParamDomain {
    ParamDomain::new(f, 2.0, InnovationLaw::Gaussian).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A point well inside the box with contraction coefficient at most `target`.
pub fn interior_theta(dom: &ParamDomain, rng: &mut ChaCha8Rng, target: f64) -> Vec<f64> {
    loop {
        let mut theta: Vec<f64> = dom
            .lower
            .iter()
            .zip(&dom.upper)
            .map(|(l, u)| {
                // keep the variance constants in a moderate range
                let u = if *u > 5.0 { 2.0 } else { *u };
                l + (u - l) * rng.gen_range(0.05..0.95)
            })
            .collect();
        dom.shrink_to(&mut theta, target);
        if dom.contains(&theta) && !dom.on_boundary(&theta) {
            return theta;
        }
    }
}

pub fn stationary_path(f: ModelFamily, theta: &[f64], n: usize, seed: u64) -> Vec<f64> {
    simulate_stationary(&SimulationSpec::new(f, theta.to_vec(), n, seed)).unwrap()
}

/// A path for `f` drawn from a random in-domain parameter.
pub fn random_path(f: ModelFamily, n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let dom = domain(f);
    let theta = interior_theta(&dom, &mut rng(seed ^ 0x5eed), 0.7);
    (stationary_path(f, &theta, n, seed), theta)
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = b.iter().map(|v| v.abs()).fold(0.0, f64::max);
    diff / scale.max(1e-12)
}

// ---------------------------------------------------------------- DP oracle

/// Every composition of `n` into `k` parts of length ≥ `min_len`, listed in
/// lexicographic order of the break vector.
pub fn compositions(n: usize, k: usize, min_len: usize) -> Vec<Vec<usize>> {
    fn rec(lo: usize, n: usize, k: usize, min_len: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k == 1 {
            if n >= lo + min_len {
                out.push(cur.clone());
            }
            return;
        }
        for b in lo + min_len..n {
            cur.push(b);
            rec(b, n, k - 1, min_len, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, min_len, &mut Vec::new(), &mut out);
    out
}

/// Exhaustive minimizer of contrast + β·K with the same tie rules as the DP.
pub fn brute_force(table: &SegmentCostTable, k_max: usize, beta: f64) -> Option<(usize, Vec<usize>, f64)> {
    let n = table.n;
    let mut best: Option<(usize, Vec<usize>, f64)> = None;
    for k in 1..=k_max {
        for breaks in compositions(n, k, table.min_len) {
            let mut ends = vec![0];
            ends.extend(&breaks);
            ends.push(n);
            let costs: Vec<f64> = ends.windows(2).map(|w| table.get(w[0], w[1]).unwrap().cost).collect();
            // right fold, matching the suffix recursion of the DP
            let total = costs.iter().rev().fold(0.0, |acc, c| c + acc) + beta * k as f64;
            if best.as_ref().map_or(true, |b| total < b.2) {
                best = Some((k, breaks, total));
            }
        }
    }
    best
}

/// One random table with n ≤ 30, compared against enumeration for every
/// K_max ≤ 4 and a few penalties.
pub fn check_dp_exact(seed: u64) -> Check {
    let mut r = rng(seed);
    let n = r.gen_range(8..=30);
    let min_len = r.gen_range(1..=4);
    let table = SegmentCostTable::from_costs(n, min_len, 1, |lo, hi| {
        // random costs with a length trend so that both few and many segments win
        (hi - lo) as f64 * r.gen_range(0.5..1.5) + r.gen_range(-3.0..3.0)
    });
    for k_max in 1..=4 {
        for beta in [0.0, 0.5, 2.0, 10.0] {
            let dp = dp_segment_beta(&table, k_max, beta).map_err(|e| e.to_string())?;
            let (k, breaks, total) = brute_force(&table, k_max, beta).ok_or("enumeration found nothing")?;
            if (dp.k_hat, &dp.breaks) != (k, &breaks) || dp.penalized != total {
                return Err(format!(
                    "seed {seed} n {n} min_len {min_len} K_max {k_max} β {beta}: dp ({}, {:?}, {}) vs exhaustive ({k}, {breaks:?}, {total})",
                    dp.k_hat, dp.breaks, dp.penalized
                ));
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------- QMLE oracle

/// Least-squares slope Σ X_s X_{s−1} / Σ X_{s−1}² over the segment, with a
/// zero before the first observation.
pub fn ls_slope(x: &[f64], seg: SegmentRef) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for s in seg.lo..seg.hi {
        let prev = if s == 0 { 0.0 } else { x[s - 1] };
        num += x[s] * prev;
        den += prev * prev;
    }
    num / den
}

/// Returns |φ̂ − φ_LS| on one random segment.
pub fn ar1_fit_error(seed: u64) -> Result<f64, String> {
    let f = family("ar(1)");
    let dom = domain(f);
    let mut r = rng(seed);
    let phi: f64 = r.gen_range(-0.7..0.7);
    let x = stationary_path(f, &[phi], 1000, seed);
    let len = r.gen_range(50..=500);
    let lo = r.gen_range(0..=1000 - len);
    let seg = SegmentRef { lo, hi: lo + len };
    let prepared = PreparedSeries::new(f, &x).map_err(|e| e.to_string())?;
    let fit = fit_segment(&prepared, &dom, seg, None, &FitOptions::default()).map_err(|e| e.to_string())?;
    Ok((fit.theta[0] - ls_slope(&x, seg)).abs())
}

// ------------------------------------------------------------ derivatives

/// Worst relative errors (gradient, Hessian) of the analytic segment
/// derivatives against central differences at one random interior θ.
pub fn derivative_errors(f: ModelFamily, seed: u64) -> Result<(f64, f64), String> {
    let dom = domain(f);
    let mut r = rng(seed);
    let (x, _) = random_path(f, 400, seed / 8);
    let theta = interior_theta(&dom, &mut r, 0.9);
    let seg = SegmentRef { lo: r.gen_range(0..100), hi: r.gen_range(250..=400) };
    let at = segment_score(f, &theta, &x, seg).map_err(|e| e.to_string())?;
    let d = theta.len();
    let mut fd_grad = vec![0.0; d];
    let mut fd_hess = vec![0.0; d * d];
    for i in 0..d {
        let h = 1e-5 * theta[i].abs().max(0.1);
        let mut up = theta.clone();
        let mut dn = theta.clone();
        up[i] += h;
        dn[i] -= h;
        let cu = segment_contrast(f, &up, &x, seg).map_err(|e| e.to_string())?;
        let cd = segment_contrast(f, &dn, &x, seg).map_err(|e| e.to_string())?;
        fd_grad[i] = (cu - cd) / (2.0 * h);
        let gu = segment_score(f, &up, &x, seg).map_err(|e| e.to_string())?.gradient;
        let gd = segment_score(f, &dn, &x, seg).map_err(|e| e.to_string())?.gradient;
        for j in 0..d {
            fd_hess[j * d + i] = (gu[j] - gd[j]) / (2.0 * h);
        }
    }
    Ok((rel_err(&at.gradient, &fd_grad), rel_err(&at.hessian, &fd_hess)))
}

// ------------------------------------------------------------ invariants

/// Segment contrasts over a random partition add up to the full contrast.
pub fn check_additivity(f: ModelFamily, seed: u64) -> Check {
    let n = 300;
    let (x, theta) = random_path(f, n, seed);
    let mut r = rng(seed);
    let mut cuts: Vec<usize> = (0..r.gen_range(1..6)).map(|_| r.gen_range(1..n)).collect();
    cuts.push(0);
    cuts.push(n);
    cuts.sort();
    cuts.dedup();
    let parts: f64 = cuts
        .windows(2)
        .map(|w| segment_contrast(f, &theta, &x, SegmentRef { lo: w[0], hi: w[1] }).unwrap())
        .sum();
    let full = segment_contrast(f, &theta, &x, SegmentRef { lo: 0, hi: n }).unwrap();
    if (parts - full).abs() > 1e-12 * full.abs().max(1.0) {
        return Err(format!("{f} seed {seed}: Σ parts {parts} vs full {full}"));
    }
    // the per-observation terms themselves do not depend on the partition
    let all = qhat_values(f, &theta, &x, SegmentRef { lo: 0, hi: n }).unwrap();
    for w in cuts.windows(2) {
        let part = qhat_values(f, &theta, &x, SegmentRef { lo: w[0], hi: w[1] }).unwrap();
        if part[..] != all[w[0]..w[1]] {
            return Err(format!("{f} seed {seed}: q̂ terms on ({}, {}] differ from the full sweep", w[0], w[1]));
        }
    }
    Ok(())
}

/// K̂(β) is non-increasing along an increasing β grid.
pub fn check_penalty_monotone(table: &SegmentCostTable, k_max: usize) -> Check {
    let mut last = usize::MAX;
    for i in 0..=80 {
        let beta = 0.25 * i as f64 * i as f64;
        let k = dp_segment_beta(table, k_max, beta).map_err(|e| e.to_string())?.k_hat;
        if k > last {
            return Err(format!("K̂ rose from {last} to {k} at β = {beta}"));
        }
        last = k;
    }
    Ok(())
}

pub fn random_cost_table(seed: u64) -> SegmentCostTable {
    let mut r = rng(seed);
    let n = r.gen_range(20..=60);
    SegmentCostTable::from_costs(n, r.gen_range(2..=5), 1, |lo, hi| (hi - lo) as f64 * r.gen_range(-1.0..2.0))
}

/// A fitted AR(1) cost table on a path with one break.
pub fn fitted_ar_table(seed: u64) -> SegmentCostTable {
    let f = family("ar(1)");
    let model = BreakModel::new(f, vec![vec![0.1], vec![0.6]], vec![0.5], InnovationLaw::Gaussian, 2.0).unwrap();
    let x = simulate_piecewise(&model, 200, SimOptions::default(), seed).unwrap().x;
    let prepared = PreparedSeries::new(f, &x).unwrap();
    let opts = TableOptions { min_len: 10, grid: 1, fit: FitOptions::default(), warm_start: true, exec: Exec::Sequential };
    build_cost_table(&prepared, &domain(f), &opts).unwrap()
}

/// cost(lo, hi) ≥ cost(lo, m) + cost(m, hi) for minimized costs.
pub fn check_split(f: ModelFamily, seed: u64) -> Check {
    let n = 400;
    let (x, _) = random_path(f, n, seed);
    let dom = domain(f);
    let prepared = PreparedSeries::new(f, &x).unwrap();
    let opts = FitOptions::default();
    let mut r = rng(seed);
    let lo = r.gen_range(0..100);
    let hi = r.gen_range(300..=n);
    let fit = |a, b| fit_segment(&prepared, &dom, SegmentRef { lo: a, hi: b }, None, &opts).unwrap().cost;
    let whole = fit(lo, hi);
    for _ in 0..3 {
        let m = r.gen_range(lo + 60..hi - 60);
        let split = fit(lo, m) + fit(m, hi);
        if whole < split - 1e-8 * whole.abs().max(1.0) {
            return Err(format!("{f} seed {seed}: cost({lo},{hi}) = {whole} < cost({lo},{m}) + cost({m},{hi}) = {split}"));
        }
    }
    Ok(())
}

/// Cost tables built with and without warm starts agree cell by cell.
fn warm_and_cold_tables(f: ModelFamily, seed: u64) -> Result<(SegmentCostTable, SegmentCostTable), String> {
    let (x, _) = random_path(f, 200, seed);
    let prepared = PreparedSeries::new(f, &x).unwrap();
    let dom = domain(f);
    let base = TableOptions { min_len: 40, grid: 20, fit: FitOptions::default(), warm_start: true, exec: Exec::Sequential };
    let warm = build_cost_table(&prepared, &dom, &base).map_err(|e| e.to_string())?;
    let cold = build_cost_table(&prepared, &dom, &TableOptions { warm_start: false, ..base }).map_err(|e| e.to_string())?;
    Ok((warm, cold))
}

/// Warm-started and cold cost tables agree cell by cell to 1e-6 relative.
pub fn check_warm_start(f: ModelFamily, seed: u64) -> Check {
    let (warm, cold) = warm_and_cold_tables(f, seed)?;
    for (a, b) in warm.cells().zip(cold.cells()) {
        if (a.cost - b.cost).abs() > 1e-6 * b.cost.abs().max(1.0) {
            return Err(format!("{f} seed {seed}: cell {:?} warm {} cold {}", a.seg, a.cost, b.cost));
        }
    }
    Ok(())
}

/// Weaker form for multimodal contrasts: a warm-started cell is never worse
/// than the cold one.
pub fn check_warm_never_worse(f: ModelFamily, seed: u64) -> Check {
    let (warm, cold) = warm_and_cold_tables(f, seed)?;
    for (a, b) in warm.cells().zip(cold.cells()) {
        if a.cost > b.cost + 1e-6 * b.cost.abs().max(1.0) {
            return Err(format!("{f} seed {seed}: cell {:?} warm {} is above cold {}", a.seg, a.cost, b.cost));
        }
    }
    Ok(())
}

/// Same seed, same bytes; different seed, different path.
pub fn check_sim_determinism(seed: u64) -> Check {
    let f = family("garch(1,1)");
    let model =
        BreakModel::new(f, vec![vec![0.4, 0.1, 0.3], vec![0.4, 0.1, 0.8]], vec![0.5], InnovationLaw::Gaussian, 2.0).unwrap();
    let a = simulate_piecewise(&model, 500, SimOptions::default(), seed).unwrap();
    let b = simulate_piecewise(&model, 500, SimOptions::default(), seed).unwrap();
    let c = simulate_piecewise(&model, 500, SimOptions::default(), seed.wrapping_add(1)).unwrap();
    if a != b {
        return Err(format!("seed {seed}: two runs differ"));
    }
    if a.x == c.x {
        return Err(format!("seeds {seed} and {} give the same path", seed.wrapping_add(1)));
    }
    Ok(())
}

/// ARCH(∞) weights of a GARCH(p, q) parameter, from the power series of
/// A(z) / (1 − B(z)) computed term by term.
pub fn nelson_cao_weights(p: usize, q: usize, theta: &[f64], len: usize) -> (f64, Vec<f64>) {
    let a = &theta[1..=q];
    let b = &theta[1 + q..1 + q + p];
    // c_k: coefficients of 1 / (1 − B(z))
    let mut c = vec![0.0; len + 1];
    c[0] = 1.0;
    for k in 1..=len {
        c[k] = (1..=p.min(k)).map(|i| b[i - 1] * c[k - i]).sum();
    }
    let psi: Vec<f64> = (1..=len).map(|k| (1..=q.min(k)).map(|i| a[i - 1] * c[k - i]).sum()).collect();
    (theta[0] / (1.0 - b.iter().sum::<f64>()), psi)
}

/// Forward GARCH recursion on a zero-initialized past against the truncated
/// ARCH(∞) expansion.
pub fn check_garch_expansion(seed: u64) -> Check {
    let mut r = rng(seed);
    let (p, q) = [(1, 1), (1, 2), (2, 1), (2, 2)][r.gen_range(0..4)];
    let f = ModelFamily::Garch { p, q };
    let theta = interior_theta(&domain(f), &mut r, 0.95);
    let m = r.gen_range(1..=200);
    let past: Vec<f64> = (0..m).map(|_| r.sample::<f64, _>(StandardNormal) * 1.5).collect();
    let rec = f.conditional_variance(&theta, &past).map_err(|e| e.to_string())?;
    let (psi0, psi) = nelson_cao_weights(p, q, &theta, m);
    let expansion = psi0 + psi.iter().zip(&past).map(|(w, v)| w * v * v).sum::<f64>();
    if (rec - expansion).abs() > 1e-10 * expansion.abs() {
        return Err(format!("{f} θ {theta:?} m {m}: recursion {rec} vs expansion {expansion}"));
    }
    Ok(())
}

fn window_moments(x: &[f64], r: f64, width: usize) -> Vec<f64> {
    x.chunks(width).filter(|c| c.len() == width).map(|c| c.iter().map(|v| v.abs().powf(r)).sum::<f64>() / width as f64).collect()
}

/// Random in-domain break model with one to three regimes.
pub fn random_model(seed: u64) -> BreakModel {
    let mut r = rng(seed);
    let f = family(FAMILIES[r.gen_range(0..FAMILIES.len())]);
    let dom = domain(f);
    let k = r.gen_range(1..=3);
    let tau: Vec<f64> = match k {
        1 => vec![],
        2 => vec![r.gen_range(0.3..0.7)],
        _ => vec![r.gen_range(0.2..0.45), r.gen_range(0.55..0.8)],
    };
    let thetas = (0..k).map(|_| interior_theta(&dom, &mut r, 0.8)).collect();
    BreakModel::new(f, thetas, tau, InnovationLaw::Gaussian, 2.0).unwrap()
}

/// Windowed second moments of a piecewise path stay within a fixed multiple
/// of the largest windowed moment of the stationary regimes.
pub fn check_moment_envelope(seed: u64) -> Check {
    let model = random_model(seed);
    let n = 4000;
    let x = simulate_piecewise(&model, n, SimOptions::default(), seed).map_err(|e| e.to_string())?.x;
    let path_max = window_moments(&x, 2.0, 200).into_iter().fold(0.0, f64::max);
    let regime_max = model
        .thetas
        .iter()
        .map(|t| window_moments(&stationary_path(model.family, t, n, seed), 2.0, 200).into_iter().fold(0.0, f64::max))
        .fold(0.0, f64::max);
    if !(path_max.is_finite() && path_max <= 10.0 * regime_max) {
        return Err(format!("{} seed {seed}: window moment {path_max} vs stationary envelope {regime_max}", model.family));
    }
    Ok(())
}

/// Values beyond the finite lag horizon are ignored, and a short past is
/// read as zero-padded.
pub fn check_zero_padding(f: ModelFamily, seed: u64) -> Check {
    let Some(lag) = f.max_lag() else { return Ok(()) };
    let mut r = rng(seed);
    let theta = interior_theta(&domain(f), &mut r, 0.9);
    let past: Vec<f64> = (0..lag).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
    let mut long = past.clone();
    long.extend((0..r.gen_range(1..20)).map(|_| r.gen_range(-50.0..50.0)));
    let short = &past[..r.gen_range(0..lag)];
    let mut padded = short.to_vec();
    padded.resize(lag, 0.0);
    let eval = |p: &[f64]| (f.conditional_mean(&theta, p).unwrap(), f.conditional_variance(&theta, p).unwrap());
    if eval(&past) != eval(&long) {
        return Err(format!("{f} seed {seed}: values beyond lag {lag} changed the moments"));
    }
    if eval(short) != eval(&padded) {
        return Err(format!("{f} seed {seed}: short past differs from its zero padding"));
    }
    Ok(())
}

/// h_θ never drops below the floor for admissible θ.
pub fn check_variance_floor(f: ModelFamily, seed: u64) -> Check {
    let dom = domain(f);
    let mut r = rng(seed);
    let mut theta: Vec<f64> = dom.lower.iter().zip(&dom.upper).map(|(l, u)| r.gen_range(*l..=*u)).collect();
    dom.shrink_to(&mut theta, 0.99);
    if !dom.contains(&theta) {
        return Ok(());
    }
    let past: Vec<f64> = (0..60).map(|_| r.sample::<f64, _>(StandardNormal) * r.gen_range(0.0..10.0)).collect();
    let h = f.conditional_variance(&theta, &past).map_err(|e| e.to_string())?;
    if !(h >= dom.variance_floor) {
        return Err(format!("{f} θ {theta:?}: h = {h} below the floor"));
    }
    Ok(())
}

/// Making any lag weight larger in magnitude never lowers beta0.
pub fn check_contraction_monotone(f: ModelFamily, seed: u64) -> Check {
    let dom = domain(f);
    let mut r = rng(seed);
    let theta = interior_theta(&dom, &mut r, 0.9);
    let base = f.beta0(&theta, dom.moment_norm);
    let step = r.gen_range(1e-3..0.1);
    let mut bumps = Vec::new();
    match f {
        ModelFamily::RiemannianAr { .. } => {
            let mut t = theta.clone();
            t[0] += step * theta[0].signum();
            bumps.push(t);
            let mut t = theta.clone();
            t[1] -= step;
            bumps.push(t);
        }
        _ => {
            for i in f.lag_coordinates() {
                let mut t = theta.clone();
                t[i] += if theta[i] < 0.0 { -step } else { step };
                bumps.push(t);
            }
        }
    }
    for t in bumps {
        let b = f.beta0(&t, dom.moment_norm);
        if b < base {
            return Err(format!("{f}: beta0 fell from {base} to {b} going from {theta:?} to {t:?}"));
        }
    }
    Ok(())
}
