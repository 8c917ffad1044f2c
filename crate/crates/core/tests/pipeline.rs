use qmlbreaks::estimate::FitOptions;
use qmlbreaks::exec::Exec;
use qmlbreaks::harness::{oracle_result, score};
use qmlbreaks::{detect, simulate_piecewise, BreakModel, DetectOptions, InnovationLaw, ModelFamily, ParamDomain, SimOptions};

fn run(family: &str, thetas: Vec<Vec<f64>>, n: usize, opts: DetectOptions, seed: u64) -> (usize, Vec<usize>, usize) {
    let f: ModelFamily = family.parse().unwrap();
    let model = BreakModel::new(f, thetas, vec![0.5], InnovationLaw::Gaussian, 2.0).unwrap();
    let x = simulate_piecewise(&model, n, SimOptions::default(), seed).unwrap().x;
    let dom = ParamDomain::new(f, 2.0, InnovationLaw::Gaussian).unwrap();
    let result = detect(&x, &dom, &opts).unwrap();
    let s = score(&result, &model, n).unwrap();
    assert_eq!(s.k_hat, result.k_hat);
    (result.k_hat, result.t_hat, s.distance)
}

fn coarse() -> DetectOptions {
    DetectOptions { grid: Some(10), min_len: Some(60), fit: FitOptions { restarts: 1, ..Default::default() }, ..Default::default() }
}

#[test]
fn mean_breaks_are_found() {
    let (k, t, dist) = run("ar(2)", vec![vec![0.5, -0.2], vec![-0.4, 0.2]], 800, DetectOptions::default(), 3);
    assert_eq!(k, 2, "{t:?}");
    assert!(dist <= 20, "{t:?}");
    let (k, t, dist) = run("rar(20)", vec![vec![-0.3, 2.0], vec![0.5, 2.0]], 800, coarse(), 3);
    assert_eq!(k, 2, "{t:?}");
    assert!(dist <= 40, "{t:?}");
}

#[test]
fn volatility_breaks_are_found() {
    let cases = [
        ("arch(1)", vec![vec![0.2, 0.1], vec![1.5, 0.4]]),
        ("garch(1,1)", vec![vec![0.2, 0.1, 0.3], vec![1.0, 0.1, 0.7]]),
        ("tarch(1)", vec![vec![0.3, 0.1, 0.1], vec![1.2, 0.2, 0.5]]),
    ];
    for (family, thetas) in cases {
        let (k, t, dist) = run(family, thetas, 1000, coarse(), 5);
        assert_eq!(k, 2, "{family}: {t:?}");
        assert!(dist <= 60, "{family}: {t:?}");
    }
}

#[test]
fn no_break_gives_one_segment() {
    let f: ModelFamily = "arch(1)".parse().unwrap();
    let model = BreakModel::new(f, vec![vec![0.5, 0.3]], vec![], InnovationLaw::Gaussian, 2.0).unwrap();
    let x = simulate_piecewise(&model, 1000, SimOptions::default(), 8).unwrap().x;
    let dom = ParamDomain::new(f, 2.0, InnovationLaw::Gaussian).unwrap();
    let r = detect(&x, &dom, &coarse()).unwrap();
    assert_eq!(r.k_hat, 1);
    assert!(r.segments[0].conf_int.is_some());
    let s = score(&r, &model, 1000).unwrap();
    assert_eq!((s.distance, s.distance_flagged), (0, false));
}

#[test]
fn exec_mode_does_not_change_the_answer() {
    let f: ModelFamily = "garch(1,1)".parse().unwrap();
    let model =
        BreakModel::new(f, vec![vec![0.4, 0.1, 0.3], vec![0.4, 0.1, 0.8]], vec![0.5], InnovationLaw::Gaussian, 2.0).unwrap();
    let x = simulate_piecewise(&model, 600, SimOptions::default(), 2).unwrap().x;
    let dom = ParamDomain::new(f, 2.0, InnovationLaw::Gaussian).unwrap();
    let par = detect(&x, &dom, &DetectOptions { exec: Exec::Parallel, ..coarse() }).unwrap();
    let seq = detect(&x, &dom, &DetectOptions { exec: Exec::Sequential, ..coarse() }).unwrap();
    assert_eq!(par, seq);
}

#[test]
fn truth_scores_zero_against_itself() {
    let f: ModelFamily = "tarch(1)".parse().unwrap();
    let model =
        BreakModel::new(f, vec![vec![0.3, 0.1, 0.1], vec![1.2, 0.2, 0.5]], vec![0.5], InnovationLaw::Gaussian, 2.0).unwrap();
    let s = score(&oracle_result(&model, 500).unwrap(), &model, 500).unwrap();
    assert!(s.k_correct && s.distance == 0 && s.theta_error.iter().flatten().all(|e| *e == 0.0));
}
