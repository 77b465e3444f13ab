//! Acceptance suite. Prints one PASS/FAIL/SKIP line per criterion. Exits
//! non-zero on a crash, or on any FAIL when `ACCEPTANCE_STRICT=1`.
//!
//! Optional external data: `KFPLS_CONCRETE_CSV` (response in the last
//! column) and `KFPLS_SOIL_CSV` (response in the last column).

#[path = "../../core/tests/common/mod.rs"]
mod oracle;

use std::time::{Duration, Instant};

use kfpls::datasets::{destandardize, gen_circles, gen_peaks, standardize, ColumnStats};
use kfpls::flows::{averaged_loss, kf_gradient, kf_loss, run_kernel_flows, FlowConfig, Minibatch};
use kfpls::kernels::{center_train, cross_gram, gram_train, KernelFamily, KernelSpec};
use kfpls::pls::fit_pls;
use kfpls_cli::commands::{run_sweep, tail_std, SweepAxis};
use kfpls_cli::config::{preset, resolve, FileConfig, Settings};
use kfpls_cli::pipeline::{evaluate_pls, load_data, run_pipeline};
use ndarray::Axis;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const RUNTIME_LIMIT: Duration = Duration::from_secs(120);

struct Outcome {
    id: &'static str,
    pass: Option<bool>,
    detail: String,
}

fn settings(case: u8, overrides: FileConfig) -> Settings {
    let merged = preset(Some(case)).unwrap().merge(overrides);
    resolve(FileConfig { case: Some(case), ..merged }).unwrap()
}

fn check(id: &'static str, pass: bool, detail: String) -> Outcome {
    Outcome { id, pass: Some(pass), detail }
}

fn case1() -> Outcome {
    let s = settings(1, FileConfig::default());
    let start = Instant::now();
    let data = load_data(&s).unwrap();
    let r = run_pipeline(&s, &data, true).unwrap();
    let elapsed = start.elapsed();
    let truth = r.kf_pls.report_true.as_ref().unwrap();
    let pls_q2 = r.pls_baseline.as_ref().unwrap().report.q2;
    let checks = [
        truth.q2 >= 0.95,
        truth.nrmse_percent <= 2.5,
        (0.75..=0.92).contains(&pls_q2),
        elapsed <= RUNTIME_LIMIT,
    ];
    check(
        "1 case 1 regression",
        checks.iter().all(|&c| c),
        format!(
            "Q2 vs noiseless {:.4} (>= 0.95: {}), NRMSE {:.3}% (<= 2.5: {}), PLS baseline Q2 {:.4} at {} LV (in [0.75, 0.92]: {}), runtime {:.1}s (<= 120: {}); KF-PLS {} LV, sigma {:.4}, delta {:.4}",
            truth.q2,
            checks[0],
            truth.nrmse_percent,
            checks[1],
            pls_q2,
            r.pls_baseline.as_ref().unwrap().n_lv,
            checks[2],
            elapsed.as_secs_f64(),
            checks[3],
            r.kf_pls.n_lv,
            r.spec.sigma(0),
            r.spec.delta(),
        ),
    )
}

fn noise_sweep() -> Outcome {
    let s = settings(1, FileConfig::default());
    let grid = [0.05, 0.1, 0.15, 0.2];
    let rows = run_sweep(&s, SweepAxis::Noise, &grid).unwrap();
    let to_true: Vec<f64> = rows.iter().map(|r| r.rmse_true.unwrap()).collect();
    let to_noisy: Vec<f64> = rows.iter().map(|r| r.rmse).collect();
    let lo = to_true.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = to_true.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let flat = hi - lo < 0.5 * to_true[0];
    let increasing = to_noisy.windows(2).all(|w| w[1] > w[0]);
    check(
        "2 de-noising",
        flat && increasing,
        format!(
            "RMSE to true {to_true:.4?} range {:.4} (< {:.4}: {flat}); RMSE to noisy {to_noisy:.4?} (increasing: {increasing})",
            hi - lo,
            0.5 * to_true[0]
        ),
    )
}

fn lv_sweep() -> Outcome {
    let s = settings(1, FileConfig::default());
    let grid: Vec<f64> = (1..=8).map(f64::from).collect();
    let rows = run_sweep(&s, SweepAxis::NLv, &grid).unwrap();
    let q2: Vec<f64> = rows.iter().map(|r| r.q2).collect();
    let (best_i, best) = q2
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |b, (i, &q)| if q > b.1 { (i, q) } else { b });
    let best_lv = best_i + 1;
    let data = load_data(&s).unwrap();
    let pls2 = evaluate_pls(&data, 2).unwrap().report.q2;
    let at_optimum = (3..=5).contains(&best_lv);
    let margin = best - pls2 >= 0.07;
    check(
        "3 latent-variable sweep",
        at_optimum && margin,
        format!(
            "test Q2 by LV {q2:.4?}; best at {best_lv} (in 3..=5: {at_optimum}); best {best:.4} vs 2-LV PLS {pls2:.4}, gain {:.4} (>= 0.07: {margin})",
            best - pls2
        ),
    )
}

fn case2() -> Outcome {
    let s = settings(2, FileConfig::default());
    let start = Instant::now();
    let data = load_data(&s).unwrap();
    let r = run_pipeline(&s, &data, true).unwrap();
    let elapsed = start.elapsed();
    let acc = r.kf_pls.report.accuracy.unwrap();
    let pls = r.pls_baseline.as_ref().unwrap();
    let un = r.unoptimized.as_ref().unwrap();
    let (pls_acc, un_acc) = (pls.report.accuracy.unwrap(), un.report.accuracy.unwrap());
    let checks = [acc == 1.0, pls_acc <= 0.75, un_acc <= 0.75, elapsed <= RUNTIME_LIMIT];
    check(
        "4 case 2 classification",
        checks.iter().all(|&c| c),
        format!(
            "KF-PLS-DA accuracy {acc:.4} at {} LV (= 1: {}), PLS-DA {pls_acc:.4} at {} LV (<= 0.75: {}), un-optimized {un_acc:.4} at {} LV (<= 0.75: {}), runtime {:.1}s (<= 120: {}); sigma {:.4}, delta {:.4}",
            r.kf_pls.n_lv,
            checks[0],
            pls.n_lv,
            checks[1],
            un.n_lv,
            checks[2],
            elapsed.as_secs_f64(),
            checks[3],
            r.spec.sigma(0),
            r.spec.delta(),
        ),
    )
}

fn init_robustness() -> Outcome {
    let mut sigmas = Vec::new();
    let mut accs = Vec::new();
    for init in [0.8, 1.0, 2.0, 5.0] {
        let s = settings(
            2,
            FileConfig { sigma: Some(init), delta: Some(init), iterations: Some(500), ..FileConfig::default() },
        );
        let data = load_data(&s).unwrap();
        match run_pipeline(&s, &data, false) {
            Ok(r) => {
                sigmas.push(r.spec.sigma(0));
                accs.push(r.kf_pls.report.accuracy.unwrap());
            }
            Err(e) => {
                return check("5 initialization robustness", false, format!("init {init}: {e}"));
            }
        }
    }
    let lo = sigmas.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = sigmas.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mean = sigmas.iter().sum::<f64>() / sigmas.len() as f64;
    let spread = (hi - lo) / mean;
    let accurate = accs.iter().all(|&a| a >= 0.95);
    let agree = spread <= 0.25;
    check(
        "5 initialization robustness",
        accurate && agree,
        format!(
            "inits 0.8/1/2/5: accuracy {accs:.4?} (all >= 0.95: {accurate}); sigma {sigmas:.4?}, relative spread {spread:.3} (<= 0.25: {agree})"
        ),
    )
}

fn subsampling_stability() -> Outcome {
    let tail = |n_s: usize| {
        let s = settings(1, FileConfig { n_subsamples: Some(n_s), ..FileConfig::default() });
        let data = load_data(&s).unwrap();
        let spec = s.initial_spec().unwrap();
        let (_, trace) = run_kernel_flows(data.x_cal.view(), data.y_cal.view(), &s.flow, &spec).unwrap();
        (tail_std(&trace.losses()), trace.records.len())
    };
    let (many, n_many) = tail(20);
    let (one, n_one) = tail(1);
    check(
        "6 sub-sampling stability",
        many < one,
        format!("tail loss std n_s=20 {many:.5} ({n_many} records) vs n_s=1 {one:.5} ({n_one} records)"),
    )
}

fn oracle_equivalences() -> Outcome {
    // (a) full-rank SIMPLS against the normal equations.
    let x = oracle::center_columns(oracle::seeded_normal(20, 3, 7).view());
    let y = oracle::center_columns(oracle::seeded_normal(20, 2, 8).view());
    let b = fit_pls(x.view(), y.view(), 3).unwrap();
    let ls = oracle::normal_equations(x.view(), y.view());
    let rel_a = oracle::frobenius((b.coefficients() - &ls).view()) / oracle::frobenius(ls.view());

    // (b) loss against a literal execution on a 16/8 batch pair.
    let peaks = gen_peaks(60, 0.05, 41).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let batch = rand::seq::index::sample(&mut rng, peaks.x_cal.nrows(), 16).into_vec();
    let sub = rand::seq::index::sample(&mut rng, 16, 8).into_vec();
    let (xb, yb) = (peaks.x_cal.select(Axis(0), &batch), peaks.y_cal.select(Axis(0), &batch));
    let (xs, ys) = (xb.select(Axis(0), &sub), yb.select(Axis(0), &sub));
    let spec = KernelSpec::single(KernelFamily::Gaussian, 1.0, 0.01).unwrap();
    let ours = kf_loss(xb.view(), yb.view(), xs.view(), ys.view(), 3, &spec).unwrap();
    let lit = oracle::kf_loss_literal(xb.view(), yb.view(), xs.view(), ys.view(), 1.0, 0.01, 3);
    let err_b = (ours - lit).abs();

    // (c) finite-difference gradient against Richardson extrapolation.
    let circles = gen_circles(20, 3, 0.1, 52).unwrap();
    let config = FlowConfig {
        n_subsamples: 4,
        batch_fraction: 0.5,
        sub_fraction: 0.5,
        n_lv: 3,
        seed: 53,
        ..FlowConfig::default()
    };
    let problems = [
        (&peaks, KernelSpec::single(KernelFamily::Gaussian, 0.7, 0.1).unwrap()),
        (&peaks, KernelSpec::single(KernelFamily::Matern52, 1.2, 0.05).unwrap()),
        (
            &circles,
            KernelSpec::with_params(
                vec![KernelFamily::Gaussian, KernelFamily::Cauchy],
                &[0.5, 1.5],
                &[0.6, 0.4],
                0.1,
            )
            .unwrap(),
        ),
    ];
    let mut rel_c = Vec::new();
    for (data, spec) in &problems {
        let (x, y) = (data.x_cal.view(), data.y_cal.view());
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mb = Minibatch::sample(&mut rng, x.nrows(), &config, None);
        let g = kf_gradient(x, y, &mb, config.n_lv, spec, 1e-4).unwrap();
        let f = |t: &[f64]| averaged_loss(x, y, &mb, config.n_lv, &spec.with_theta(t).unwrap()).unwrap();
        let r = oracle::richardson(f, &spec.theta(), 1e-2);
        let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        let diff = g.iter().zip(&r).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        rel_c.push(diff / norm);
    }
    let pass = rel_a < 1e-8 && err_b < 1e-10 && rel_c.iter().all(|&r| r < 1e-3);
    check(
        "7 oracle equivalences",
        pass,
        format!("SIMPLS vs normal equations {rel_a:.2e} (< 1e-8); loss vs literal {err_b:.2e} (< 1e-10); gradient vs Richardson {rel_c:?} (< 1e-3)"),
    )
}

fn invariant_suites() -> Outcome {
    let mut min_eig = f64::INFINITY;
    let mut ridge_gap = f64::INFINITY;
    let mut centering = 0.0f64;
    let mut round_trip = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(81);
    for case in 0..40u64 {
        let n = 2 + (case as usize % 19);
        let x = oracle::seeded_normal(n, 1 + case as usize % 4, 100 + case) * 1.5;
        let family = KernelFamily::ALL[case as usize % 5];
        let sigma = rand::Rng::random_range(&mut rng, 0.2..3.0);
        let delta = rand::Rng::random_range(&mut rng, 1e-3..1.0);
        let spec = KernelSpec::single(family, sigma, delta).unwrap();
        let k = cross_gram(&spec, x.view(), x.view()).unwrap();
        let (eig, _) = oracle::jacobi_eigen(k.view());
        min_eig = min_eig.min(eig[n - 1]);
        let kr = gram_train(&spec, x.view()).unwrap();
        let (eig, _) = oracle::jacobi_eigen(kr.view());
        ridge_gap = ridge_gap.min(eig[n - 1] - delta);
        let scale = oracle::frobenius(kr.view());
        let (kc, _) = center_train(kr.view()).unwrap();
        let (kcc, _) = center_train(kc.view()).unwrap();
        centering = centering.max(oracle::max_abs((&kcc - &kc).view()) / scale);
        for row in kc.rows() {
            centering = centering.max(row.sum().abs() / scale);
        }
        let raw = x.mapv(|v| v * 37.0 - 12.0);
        let names: Vec<String> = (0..raw.ncols()).map(|j| format!("c{j}")).collect();
        if let Ok(stats) = ColumnStats::fit(raw.view(), &names) {
            let back = destandardize(standardize(raw.view(), &stats).unwrap().view(), &stats).unwrap();
            let top = raw.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            round_trip = round_trip.max(oracle::max_abs((&back - &raw).view()) / top);
        }
    }
    let data = gen_peaks(100, 0.05, 3).unwrap();
    let spec = KernelSpec::single(KernelFamily::Gaussian, 1.0, 1.0).unwrap();
    let config = FlowConfig { n_iter: 20, n_lv: 4, seed: 5, ..FlowConfig::default() };
    let run = || {
        let (_, trace) = run_kernel_flows(data.x_cal.view(), data.y_cal.view(), &config, &spec).unwrap();
        let mut out = Vec::new();
        trace.write_csv(&mut out).unwrap();
        (trace.losses().iter().map(|v| v.to_bits()).collect::<Vec<_>>(), out)
    };
    let deterministic = run() == run();
    let pass = min_eig >= -1e-10 && ridge_gap >= -1e-10 && centering <= 1e-10 && round_trip < 1e-12 && deterministic;
    check(
        "8 invariant suites",
        pass,
        format!(
            "min eigenvalue {min_eig:.2e} (>= -1e-10); ridge gap {ridge_gap:.2e} (>= -1e-10); centering {centering:.2e} (<= 1e-10); round trip {round_trip:.2e} (< 1e-12); bitwise-equal traces {deterministic}"
        ),
    )
}

fn external(id: &'static str, var: &str, case: u8, threshold: f64) -> Outcome {
    let Some(path) = std::env::var_os(var) else {
        return Outcome { id, pass: None, detail: format!("{var} not set") };
    };
    let s = settings(case, FileConfig { csv: Some(path.into()), ..FileConfig::default() });
    match load_data(&s).and_then(|d| run_pipeline(&s, &d, false)) {
        Ok(r) => check(
            id,
            r.kf_pls.report.q2 >= threshold,
            format!("test Q2 {:.4} (>= {threshold}) at {} LV", r.kf_pls.report.q2, r.kf_pls.n_lv),
        ),
        Err(e) => check(id, false, e.to_string()),
    }
}

fn main() {
    // Keep the test harness's filter arguments from being misread.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let criteria: [fn() -> Outcome; 10] = [
        case1,
        noise_sweep,
        lv_sweep,
        case2,
        init_robustness,
        subsampling_stability,
        oracle_equivalences,
        invariant_suites,
        || external("9a concrete (external)", "KFPLS_CONCRETE_CSV", 3, 0.93),
        || external("9b soil moisture (external)", "KFPLS_SOIL_CSV", 4, 0.95),
    ];
    let mut failed = 0;
    for criterion in criteria {
        let o = criterion();
        let tag = match o.pass {
            Some(true) => "PASS",
            Some(false) => {
                failed += 1;
                "FAIL"
            }
            None => "SKIP",
        };
        println!("{tag} [{}] {}", o.id, o.detail);
    }
    println!("acceptance: {failed} criteria failed");
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict && failed > 0 {
        std::process::exit(1);
    }
}
