use stare_core::evaluation::{calibrate_rho, uniform_grid, LabeledRun};
use stare_core::inference::{fit_em, sample_assignments, AssignMode, EmConfig, FittedModel};
use stare_core::model::{Assignments, ComponentFamily, ComponentParams, Dataset, MixtureParams};
use stare_core::selection::{
    component_divergences, select_k, CandidateSet, DivergenceStatus, Estimator, EstimatorConfig, SelectConfig,
    SweepOptions,
};
use stare_core::Error;

fn normal_mixture(weights: &[f64], means: &[f64], n: usize, seed: u64) -> (Dataset, Assignments) {
    MixtureParams::new(
        ComponentFamily::Gaussian1d,
        weights.to_vec(),
        means.iter().map(|&m| ComponentParams::Gaussian1d { mean: m, sd: 1.0 }).collect(),
    )
    .unwrap()
    .sample(n, seed)
    .unwrap()
}

fn fixed_model(params: MixtureParams) -> FittedModel {
    FittedModel {
        k: params.k(),
        params,
        log_likelihood: 0.0,
        iterations_used: 0,
        converged: true,
        seed: 0,
        restart: 0,
        trace: Vec::new(),
    }
}

fn standard_normal_model() -> FittedModel {
    fixed_model(
        MixtureParams::new(
            ComponentFamily::Gaussian1d,
            vec![1.0],
            vec![ComponentParams::Gaussian1d { mean: 0.0, sd: 1.0 }],
        )
        .unwrap(),
    )
}

#[test]
fn divergences_against_known_components() {
    let est = EstimatorConfig::new(Estimator::KnnAdaptive);
    let model = standard_normal_model();

    let (null, _) = normal_mixture(&[1.0], &[0.0], 20_000, 1);
    let z = Assignments(vec![0; null.len()]);
    let p = component_divergences(&model, &z, &null, &est, 0).unwrap();
    assert_eq!(p.k, 1);
    assert_eq!(p.per_component[0].n_k, 20_000);
    assert!(p.per_component[0].divergence.abs() < 0.05);

    let (shifted, _) = normal_mixture(&[1.0], &[1.0], 20_000, 2);
    let p = component_divergences(&model, &z, &shifted, &est, 0).unwrap();
    assert!((p.per_component[0].divergence - 0.5).abs() < 0.05);
}

#[test]
fn tiny_and_empty_components_are_flagged() {
    let model = fixed_model(
        MixtureParams::new(
            ComponentFamily::Gaussian1d,
            vec![0.5, 0.3, 0.2],
            vec![
                ComponentParams::Gaussian1d { mean: 0.0, sd: 1.0 },
                ComponentParams::Gaussian1d { mean: 5.0, sd: 1.0 },
                ComponentParams::Gaussian1d { mean: 9.0, sd: 1.0 },
            ],
        )
        .unwrap(),
    );
    let (data, _) = normal_mixture(&[1.0], &[0.0], 50, 3);
    let mut z = vec![0; 50];
    z[7] = 1;
    let p = component_divergences(&model, &Assignments(z), &data, &EstimatorConfig::default(), 0).unwrap();
    assert_eq!(p.per_component[1].status, DivergenceStatus::BelowMinimum);
    assert_eq!(p.per_component[1].divergence, f64::INFINITY);
    assert_eq!(p.per_component[2].status, DivergenceStatus::Empty);
    assert_eq!(p.per_component[2].divergence, 0.0);
    assert_eq!(p.total_n, 50);
}

#[test]
fn estimator_family_mismatch_is_reported() {
    let model = standard_normal_model();
    let (data, _) = normal_mixture(&[1.0], &[0.0], 20, 3);
    let z = Assignments(vec![0; 20]);
    let r = component_divergences(&model, &z, &data, &EstimatorConfig::new(Estimator::Plugin), 0);
    assert!(matches!(r, Err(Error::UnsupportedEstimator { .. })));
}

#[test]
fn relabeling_components_leaves_the_loss_unchanged() {
    let (data, _) = normal_mixture(&[0.3, 0.7], &[-2.0, 2.5], 3000, 4);
    let model = fit_em(&data, ComponentFamily::Gaussian1d, 2, &EmConfig::default()).unwrap();
    let z = sample_assignments(&model, &data, AssignMode::Sample, 5).unwrap();
    let est = EstimatorConfig::default();
    let p = component_divergences(&model, &z, &data, &est, 0).unwrap();

    let mut swapped = model.clone();
    swapped.params.weights.reverse();
    swapped.params.components.reverse();
    let z2 = Assignments(z.as_slice().iter().map(|&j| 1 - j).collect());
    let q = component_divergences(&swapped, &z2, &data, &est, 0).unwrap();
    for rho in [0.0, 0.01, 0.05, 0.2] {
        let a = stare_core::selection::penalized_loss(&p, rho, 0.01).unwrap();
        let b = stare_core::selection::penalized_loss(&q, rho, 0.01).unwrap();
        assert!((a - b).abs() < 1e-9 * a.max(1.0));
    }
    for x in [-3.0, 0.0, 1.7] {
        let a = model.params.log_density(&[x]).unwrap();
        let b = swapped.params.log_density(&[x]).unwrap();
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn single_component_data_selects_one() {
    let (data, _) = normal_mixture(&[1.0], &[0.0], 2000, 6);
    let mut cfg = SelectConfig::new(ComponentFamily::Gaussian1d);
    cfg.k_max = 3;
    let r = select_k(&data, &cfg, 0.3).unwrap();
    assert_eq!(r.chosen_k, 1);
    assert_eq!(r.per_k.len(), 3);
    cfg.k_max = 1;
    assert_eq!(select_k(&data, &cfg, 0.0).unwrap().chosen_k, 1);
}

#[test]
fn selection_is_deterministic() {
    let (data, _) = normal_mixture(&[0.5, 0.5], &[-3.0, 3.0], 1500, 7);
    let mut cfg = SelectConfig::new(ComponentFamily::Gaussian1d);
    cfg.k_max = 3;
    cfg.seed = 11;
    let a = serde_json::to_string(&select_k(&data, &cfg, 0.1).unwrap()).unwrap();
    let b = serde_json::to_string(&select_k(&data, &cfg, 0.1).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn replicated_assignments_average_the_loss() {
    let (data, _) = normal_mixture(&[0.5, 0.5], &[-1.0, 1.0], 1500, 8);
    let mut cfg = SelectConfig::new(ComponentFamily::Gaussian1d);
    cfg.k_max = 2;
    cfg.z_replicates = 3;
    let set = CandidateSet::fit(&data, &cfg).unwrap();
    let c = set.candidate(2).unwrap();
    assert_eq!(c.profiles.len(), 3);
    let curve = c.curve(cfg.lambda).unwrap();
    for rho in [0.0, 0.02, 0.1] {
        assert!((curve.evaluate(rho).unwrap() - c.loss(rho, cfg.lambda).unwrap()).abs() < 1e-9);
    }
    let sd = c.loss_sd(0.0, cfg.lambda).unwrap().unwrap();
    assert!(sd.is_finite() && sd >= 0.0);
    let r = set.select(0.0).unwrap();
    assert_eq!(r.per_k[1].loss_sd, Some(sd));
}

#[test]
fn poisson_pipeline_with_plugin() {
    let params = MixtureParams::new(
        ComponentFamily::Poisson,
        vec![0.5, 0.5],
        vec![ComponentParams::Poisson { rate: 5.0 }, ComponentParams::Poisson { rate: 40.0 }],
    )
    .unwrap();
    let (data, _) = params.sample(4000, 9).unwrap();
    let mut cfg = SelectConfig::new(ComponentFamily::Poisson);
    cfg.k_max = 3;
    assert_eq!(cfg.estimator.estimator, Estimator::Plugin);
    let set = CandidateSet::fit(&data, &cfg).unwrap();
    let sweep = set.sweep(&SweepOptions::default()).unwrap();
    assert_eq!(sweep.verdict.chosen_k, 2, "{:?}", sweep.verdict);
}

#[test]
fn calibration_on_a_well_fit_mixture() {
    let (data, z) = normal_mixture(&[0.4, 0.6], &[-4.0, 4.0], 3000, 10);
    let data = data.with_labels(z.to_labels()).unwrap();
    let mut cfg = SelectConfig::new(ComponentFamily::Gaussian1d);
    cfg.k_max = 3;
    let run = LabeledRun::new(&data, CandidateSet::fit(&data, &cfg).unwrap()).unwrap();
    let grid = uniform_grid(3.0, 300);
    let cal = calibrate_rho(&[run], &grid).unwrap();
    let i = cal.grid.iter().position(|&g| g == cal.rho_star).unwrap();
    assert_eq!(cal.per_dataset[0].chosen_k[i], 2);
    assert!(cal.averaged[i] > 0.99);
    assert!(cal.averaged.iter().all(|&f| f <= cal.averaged[i]));

    let unlabeled = Dataset::new("u", 1, vec![0.0, 1.0, 2.0], None).unwrap();
    let set = CandidateSet::fit(&unlabeled, &SelectConfig { k_max: 1, ..cfg }).unwrap();
    assert!(matches!(LabeledRun::new(&unlabeled, set), Err(Error::MissingLabels(_))));
    assert!(calibrate_rho(&[], &grid).is_err());
}

#[test]
fn adaptive_knn_error_shrinks_with_n() {
    use stare_core::divergence::{kl_knn, KnnConfig};
    use stare_core::model::{GeneratorSpec, ScalarOrVec, Scenario};

    let dim = 4;
    let log_q = |x: &[f64]| {
        -0.5 * x.iter().map(|v| v * v).sum::<f64>() - 0.5 * dim as f64 * (2.0 * std::f64::consts::PI).ln()
    };
    let mae: Vec<f64> = [1000usize, 5000, 20_000]
        .iter()
        .map(|&n| {
            (0..20)
                .map(|seed| {
                    let spec = GeneratorSpec {
                        scenario: Scenario::GaussianMixture,
                        weights: vec![1.0],
                        locations: Some(vec![ScalarOrVec::Scalar(0.0)]),
                        scales: Some(vec![ScalarOrVec::Scalar(1.0)]),
                        skewness: None,
                        negbin_m: None,
                        negbin_p: None,
                        corr_sigma: None,
                        dim: Some(dim),
                        n,
                        seed,
                    };
                    let (data, _) = spec.sample().unwrap();
                    kl_knn(data.values(), dim, log_q, &KnnConfig::adaptive()).unwrap().value.abs()
                })
                .sum::<f64>()
                / 20.0
        })
        .collect();
    assert!(mae[0] >= mae[1] && mae[1] >= mae[2], "{mae:?}");
}
