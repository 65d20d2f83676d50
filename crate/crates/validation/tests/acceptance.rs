//! One pass/fail line per acceptance criterion, written straight to stderr so
//! it shows even when the harness captures output.
//!
//! Run with `cargo test -p stare-validation --test acceptance --
//! --test-threads 1` for readable ordering.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stare_cli::{
    cmd_calibrate, cmd_eval, cmd_select, cmd_simulate, cmd_sweep, CalibrateArgs, CommonArgs, DataArgs, EvalArgs,
    FamilyName, SimulateArgs, SweepArgs,
};
use stare_core::divergence::{kl_knn, knn_radii, mmd_weighted, Correction, KnnConfig, DEFAULT_MIN_RADIUS};
use stare_core::evaluation::f_measure;
use stare_core::inference::{fit_em, EmConfig};
use stare_core::model::{ComponentFamily, GeneratorSpec, ScalarOrVec, Scenario};
use stare_core::selection::{
    penalized_loss, structurally_aware_loss, ComponentDivergenceProfile, Estimator, LossCurve,
};

/// Candidate range used by every scenario run.
const K_MAX: usize = 4;
const SEEDS: u64 = 10;

fn report(id: &str, pass: bool, detail: &str) {
    let line = format!("{id} {}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn simulate(dir: &Path, alias: &str, seed: u64) -> PathBuf {
    let path = dir.join(format!("{alias}-{seed}.csv"));
    let args = SimulateArgs {
        spec: Some(alias.into()),
        print_spec: false,
        list: false,
        seed: Some(seed),
        n: None,
        out: Some(path.clone()),
    };
    cmd_simulate(&args, &mut Vec::new()).unwrap();
    path
}

fn sweep_args(data: PathBuf, seed: u64, family: FamilyName, estimator: Option<Estimator>) -> SweepArgs {
    SweepArgs {
        data,
        common: CommonArgs {
            seed: Some(seed),
            k_max: Some(K_MAX),
            lambda: Some(0.01),
            family: Some(family),
            estimator,
            ..Default::default()
        },
        csv: None,
    }
}

/// Verdict and BIC choice on `SEEDS` fresh datasets.
fn scenario_runs(alias: &str, family: FamilyName, estimator: Option<Estimator>) -> (Vec<usize>, Vec<usize>, f64) {
    let dir = tempfile::tempdir().unwrap();
    let t = Instant::now();
    let mut verdicts = Vec::new();
    let mut bic = Vec::new();
    for seed in 0..SEEDS {
        let data = simulate(dir.path(), alias, seed);
        let out = cmd_sweep(&sweep_args(data, seed, family, estimator), &mut Vec::new()).unwrap();
        verdicts.push(out.sweep.verdict.chosen_k);
        bic.push(out.sweep.bic_k);
    }
    (verdicts, bic, t.elapsed().as_secs_f64())
}

fn count(v: &[usize], pred: impl Fn(usize) -> bool) -> usize {
    v.iter().filter(|&&k| pred(k)).count()
}

#[test]
fn ac1_skew_normal_scenarios() {
    let mut all = true;
    for alias in [
        "skewnorm-same",
        "skewnorm-different",
        "skewnorm-large-small",
        "skewnorm-small-large",
        "skewnorm-large-large",
    ] {
        let (verdicts, bic, secs) = scenario_runs(alias, FamilyName::Gaussian1d, None);
        let hits = count(&verdicts, |k| k == 2);
        let mut pass = hits >= 9 && secs <= 120.0;
        let mut detail = format!("{alias}: K=2 in {hits}/{SEEDS} {verdicts:?}, {secs:.0}s for {SEEDS} seeds");
        if matches!(alias, "skewnorm-same" | "skewnorm-different") {
            let over = count(&bic, |k| k > 2);
            pass &= over >= 9;
            detail.push_str(&format!(", BIC K>2 in {over}/{SEEDS} {bic:?}"));
        }
        report("AC1", pass, &detail);
        all &= pass;
    }
    assert!(all);
}

#[test]
fn ac2_negbin_counts() {
    let (verdicts, _, secs) = scenario_runs("negbin3", FamilyName::Poisson, Some(Estimator::Plugin));
    let hits = count(&verdicts, |k| k == 3);
    let pass = hits >= 9;
    report("AC2", pass, &format!("negbin3 plugin: K=3 in {hits}/{SEEDS} {verdicts:?}, {secs:.0}s"));
    assert!(pass);
}

#[test]
fn ac3_high_dimensional() {
    let (verdicts, _, secs) = scenario_runs("mvskewnorm-d50", FamilyName::GaussianNd, Some(Estimator::KnnIndependent));
    let hits = count(&verdicts, |k| k == 3);
    let pass = hits >= 8;
    report("AC3", pass, &format!("D=50 knn-independent: K=3 in {hits}/{SEEDS} {verdicts:?}, {secs:.0}s"));
    assert!(pass);
}

/// `det` by Gaussian elimination with partial pivoting.
fn det(mut a: Vec<Vec<f64>>) -> f64 {
    let n = a.len();
    let mut d = 1.0;
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        if p != c {
            a.swap(p, c);
            d = -d;
        }
        d *= a[c][c];
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
        }
    }
    d
}

#[test]
fn ac4_kl_estimator_accuracy() {
    let dim = 4;
    let sigma: f64 = 0.6;
    let corr: Vec<Vec<f64>> = (0..dim)
        .map(|i| (0..dim).map(|j| (-((i as f64 - j as f64).powi(2)) / (sigma * sigma)).exp()).collect())
        .collect();
    // Unit diagonal and unit mean, so KL(N(1, C) || N(0, I)) = (D - log det C) / 2.
    let truth = 0.5 * (dim as f64 - det(corr).ln());
    let log_q = |x: &[f64]| -0.5 * x.iter().map(|v| v * v).sum::<f64>() - 0.5 * dim as f64 * (2.0 * std::f64::consts::PI).ln();
    let mut maes = Vec::new();
    for n in [1000usize, 5000, 20_000] {
        let mut total = 0.0;
        for seed in 0..20 {
            let spec = GeneratorSpec {
                scenario: Scenario::GaussianMixture,
                weights: vec![1.0],
                locations: Some(vec![ScalarOrVec::Scalar(1.0)]),
                scales: Some(vec![ScalarOrVec::Scalar(1.0)]),
                skewness: None,
                negbin_m: None,
                negbin_p: None,
                corr_sigma: Some(sigma),
                dim: Some(dim),
                n,
                seed,
            };
            let (data, _) = spec.sample().unwrap();
            let est = kl_knn(data.values(), dim, log_q, &KnnConfig::adaptive()).unwrap();
            total += (est.value - truth).abs();
        }
        maes.push(total / 20.0);
    }
    let pass = maes[2] <= 0.05 && maes[0] >= maes[1] && maes[1] >= maes[2];
    report(
        "AC4",
        pass,
        &format!(
            "true KL {truth:.5}; mean abs error N=1000: {:.4}, N=5000: {:.4}, N=20000: {:.4}",
            maes[0], maes[1], maes[2]
        ),
    );
    assert!(pass);
}

fn random_profile(rng: &mut ChaCha8Rng) -> Vec<(usize, f64)> {
    (0..rng.random_range(1..8))
        .map(|_| (rng.random_range(0..500), rng.random_range(-0.5..3.0)))
        .collect()
}

fn brute_radius(points: &[f64], dim: usize, i: usize, k: usize) -> f64 {
    let n = points.len() / dim;
    let mut d: Vec<f64> = (0..n)
        .filter(|&j| j != i)
        .map(|j| {
            (0..dim)
                .map(|c| (points[i * dim + c] - points[j * dim + c]).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    d.sort_by(f64::total_cmp);
    d[k - 1]
}

#[test]
fn ac5_exact_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);

    // Corrected minus biased fixed-k estimate is psi(k) - log k, with psi(k)
    // from the harmonic number H_{k-1} - gamma.
    const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
    let mut worst_bias: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(50..300);
        let k = rng.random_range(1..n.min(40));
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let log_q = |v: &[f64]| -0.5 * v[0] * v[0];
        let b = kl_knn(&x, 1, log_q, &KnnConfig::fixed(k, Correction::Biased)).unwrap().value;
        let c = kl_knn(&x, 1, log_q, &KnnConfig::fixed(k, Correction::BiasCorrected)).unwrap().value;
        let psi = (1..k).map(|j| 1.0 / j as f64).sum::<f64>() - EULER_GAMMA;
        worst_bias = worst_bias.max((c - b - (psi - (k as f64).ln())).abs());
    }
    let bias_ok = worst_bias <= 1e-12;
    report("AC5", bias_ok, &format!("bias-correction identity, worst error {worst_bias:.2e} (tol 1e-12)"));

    let mut worst_curve: f64 = 0.0;
    for _ in 0..100 {
        let p = ComponentDivergenceProfile::from_pairs(&random_profile(&mut rng));
        let lambda = rng.random_range(0.001..1.0);
        let curve = LossCurve::new(&p, lambda).unwrap();
        for _ in 0..1000 {
            let rho = rng.random_range(0.0..4.0);
            let direct = penalized_loss(&p, rho, lambda).unwrap();
            let via = curve.evaluate(rho).unwrap();
            worst_curve = worst_curve.max((direct - via).abs() / direct.abs().max(1.0));
        }
    }
    let curve_ok = worst_curve <= 1e-9;
    report(
        "AC5",
        curve_ok,
        &format!("loss curve vs direct loss at 1000 rho x 100 profiles, worst relative error {worst_curve:.2e} (tol 1e-9)"),
    );

    let mut mismatches = 0;
    for _ in 0..100 {
        let dim = rng.random_range(1..5);
        let n = rng.random_range(2..=500);
        let k = rng.random_range(1..n.min(12));
        // Coarse grid coordinates force exact distance ties.
        let pts: Vec<f64> = (0..n * dim).map(|_| rng.random_range(0..6) as f64 * 0.5).collect();
        let got = knn_radii(&pts, dim, k, DEFAULT_MIN_RADIUS).unwrap();
        mismatches += (0..n)
            .filter(|&i| got[i] != brute_radius(&pts, dim, i, k).max(DEFAULT_MIN_RADIUS))
            .count();
    }
    let knn_ok = mismatches == 0;
    report("AC5", knn_ok, &format!("knn_radii vs brute force on 100 instances, {mismatches} mismatched radii"));
    assert!(bias_ok && curve_ok && knn_ok);
}

#[test]
fn ac6_property_suites() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);

    let mut loss_fail = 0;
    for _ in 0..1000 {
        let pairs = random_profile(&mut rng);
        let p = ComponentDivergenceProfile::from_pairs(&pairs);
        let mut shuffled = pairs.clone();
        shuffled.reverse();
        let q = ComponentDivergenceProfile::from_pairs(&shuffled);
        let (r1, r2) = {
            let a = rng.random_range(0.0..3.0);
            let b = rng.random_range(0.0..3.0);
            if a <= b { (a, b) } else { (b, a) }
        };
        let l1 = structurally_aware_loss(&p, r1).unwrap();
        let l2 = structurally_aware_loss(&p, r2).unwrap();
        let perm = structurally_aware_loss(&q, r1).unwrap();
        if l1 < 0.0 || l2 > l1 || (l1 - perm).abs() > 1e-9 * l1.max(1.0) {
            loss_fail += 1;
        }
    }
    let loss_ok = loss_fail == 0;
    report("AC6", loss_ok, &format!("loss nonnegative, monotone, permutation invariant: {loss_fail}/1000 violations"));

    let mut worst_mmd = f64::NEG_INFINITY;
    for _ in 0..200 {
        let dim = 2;
        let set = |rng: &mut ChaCha8Rng| {
            let m = rng.random_range(1..8);
            let pts: Vec<f64> = (0..m * dim).map(|_| rng.random_range(-3.0..3.0)).collect();
            let mut w: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..1.0)).collect();
            let s: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= s);
            (pts, w)
        };
        let (p, wp) = set(&mut rng);
        let (p2, wp2) = set(&mut rng);
        let (q, wq) = set(&mut rng);
        let (q2, wq2) = set(&mut rng);
        let h = rng.random_range(0.2..3.0);
        let t = rng.random_range(0.0..1.0);
        let mix = |a: &[f64], wa: &[f64], b: &[f64], wb: &[f64]| {
            let pts: Vec<f64> = a.iter().chain(b).copied().collect();
            let w: Vec<f64> = wa.iter().map(|v| t * v).chain(wb.iter().map(|v| (1.0 - t) * v)).collect();
            (pts, w)
        };
        let (mp, wmp) = mix(&p, &wp, &p2, &wp2);
        let (mq, wmq) = mix(&q, &wq, &q2, &wq2);
        let lhs = mmd_weighted(&mp, &wmp, &mq, &wmq, dim, h).unwrap();
        let rhs = t * mmd_weighted(&p, &wp, &q, &wq, dim, h).unwrap()
            + (1.0 - t) * mmd_weighted(&p2, &wp2, &q2, &wq2, dim, h).unwrap();
        worst_mmd = worst_mmd.max(lhs - rhs);
    }
    let mmd_ok = worst_mmd <= 1e-10;
    report("AC6", mmd_ok, &format!("MMD joint convexity on 200 quadruples, worst excess {worst_mmd:.2e} (tol 1e-10)"));

    let mut em_fail = Vec::new();
    let mut fits = 0;
    for alias in stare_core::model::SCENARIO_ALIASES {
        let spec = GeneratorSpec::alias(alias).unwrap();
        let (data, _) = spec.sample().unwrap();
        let family = match spec.scenario {
            Scenario::NegbinMixture => ComponentFamily::Poisson,
            _ if data.dim() > 1 => ComponentFamily::GaussianMultivariate { dim: data.dim() },
            _ => ComponentFamily::Gaussian1d,
        };
        for k in 1..=K_MAX {
            let m = fit_em(&data, family, k, &EmConfig::default()).unwrap();
            fits += 1;
            let ok = m.trace.windows(2).all(|w| w[1] >= w[0] - 1e-8 * (w[0].abs() + 1.0));
            if !ok {
                em_fail.push(format!("{alias}/K={k}"));
            }
        }
    }
    let em_ok = em_fail.is_empty();
    report("AC6", em_ok, &format!("EM log-likelihood monotone on {fits} scenario fits, failures: {em_fail:?}"));

    let mut f_fail = 0;
    for _ in 0..200 {
        let n = rng.random_range(1..200);
        let pred: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let truth: Vec<i64> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let perm = [2usize, 0, 3, 1];
        let relabeled: Vec<usize> = pred.iter().map(|&c| perm[c]).collect();
        let a = f_measure(&pred, &truth).unwrap();
        let b = f_measure(&relabeled, &truth).unwrap();
        let perfect: Vec<usize> = truth.iter().map(|&t| perm[t as usize]).collect();
        if (a - b).abs() > 1e-12 || f_measure(&perfect, &truth).unwrap() != 1.0 {
            f_fail += 1;
        }
    }
    let even: Vec<usize> = (0..100).map(|i| i % 2).collect();
    let even_f = f_measure(&even, &[0; 100]).unwrap();
    let f_ok = f_fail == 0 && (even_f - 2.0 / 3.0).abs() < 1e-12;
    report("AC6", f_ok, &format!("f_measure metamorphic: {f_fail}/200 violations, even split {even_f:.12}"));
    assert!(loss_ok && mmd_ok && em_ok && f_ok);
}

#[test]
fn ac7_end_to_end_calibration() {
    let dir = tempfile::tempdir().unwrap();
    let suite: Vec<PathBuf> = ["skewnorm-same", "skewnorm-different", "skewnorm-large-small"]
        .iter()
        .map(|a| simulate(dir.path(), a, 1000))
        .collect();
    let common = CommonArgs {
        seed: Some(1000),
        k_max: Some(K_MAX),
        lambda: Some(0.01),
        ..Default::default()
    };
    let cal = cmd_calibrate(&CalibrateArgs { data: suite, common: common.clone() }, &mut Vec::new()).unwrap();
    let c = &cal.calibration;
    let all_true: Vec<f64> = (0..c.grid.len())
        .filter(|&i| c.per_dataset.iter().all(|d| d.chosen_k[i] == 2))
        .map(|i| c.grid[i])
        .collect();
    let star = c.rho_star;
    let inside = !all_true.is_empty() && all_true.contains(&star);
    let lo = all_true.first().copied().unwrap_or(f64::NAN);
    let hi = all_true.last().copied().unwrap_or(f64::NAN);
    report(
        "AC7",
        inside,
        &format!("rho* = {star:.4}; all three datasets pick K=2 on grid points in [{lo:.4}, {hi:.4}]"),
    );

    let data = simulate(dir.path(), "skewnorm-same", 2000);
    let sel = dir.path().join("same-selection.json");
    let args = DataArgs {
        data: data.clone(),
        common: CommonArgs {
            rho: Some(star),
            out: Some(sel.clone()),
            ..common
        },
    };
    cmd_select(&args, &mut Vec::new()).unwrap();
    let ev = cmd_eval(&EvalArgs { data, selection: sel, out: None }, &mut Vec::new()).unwrap();
    let bic_f = ev.bic_f_measure.unwrap();
    let better = ev.f_measure >= bic_f;
    report(
        "AC7",
        better,
        &format!(
            "same: structurally aware K={} F={:.4} vs BIC K={} F={bic_f:.4}",
            ev.chosen_k, ev.f_measure, ev.bic_k
        ),
    );
    assert!(inside && better);
}
