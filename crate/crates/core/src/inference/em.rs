//! Expectation-maximization for the supported component families.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::mixture::sample_categorical;
use crate::model::{log_sum_exp, ComponentFamily, ComponentParams, Dataset, MixtureParams};
use crate::rng::{self, StreamRng};

/// A component whose weight falls below this discards the restart.
pub const DEGENERATE_WEIGHT: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Init {
    KmeansPlusPlus,
    RandomResponsibility,
    Quantile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmConfig {
    pub max_iterations: usize,
    /// Threshold on `|delta ll| / (|ll| + 1)`.
    pub tol: f64,
    pub restarts: usize,
    pub init: Init,
    /// Adds `ridge * trace(S) / D` to the covariance diagonal after each M-step.
    pub covariance_ridge: f64,
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            tol: 1e-7,
            restarts: 5,
            init: Init::KmeansPlusPlus,
            covariance_ridge: 1e-6,
            seed: 0,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be at least 1"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid("tol must be positive"));
        }
        if self.restarts == 0 {
            return Err(Error::invalid("restarts must be at least 1"));
        }
        if !(self.covariance_ridge >= 0.0 && self.covariance_ridge.is_finite()) {
            return Err(Error::invalid("covariance_ridge must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub params: MixtureParams,
    pub log_likelihood: f64,
    pub iterations_used: usize,
    pub converged: bool,
    pub k: usize,
    pub seed: u64,
    /// Index of the restart that won.
    pub restart: usize,
    /// Log-likelihood after each E-step of the winning restart.
    #[serde(skip)]
    pub trace: Vec<f64>,
}

impl FittedModel {
    pub fn family(&self) -> ComponentFamily {
        self.params.family
    }
}

fn check_data(data: &Dataset, family: ComponentFamily, k: usize) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if data.dim() != family.dim() {
        return Err(Error::DimensionMismatch {
            expected: family.dim(),
            got: data.dim(),
        });
    }
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if k > data.len() {
        return Err(Error::TooFewObservations { k, n: data.len() });
    }
    if family.is_discrete() {
        if let Some(x) = data.values().iter().find(|x| x.fract() != 0.0 || **x < 0.0) {
            return Err(Error::InvalidData(format!(
                "poisson data must be nonnegative integers, found {x}"
            )));
        }
    }
    Ok(())
}

/// Per-component log joint `log pi_k + log f_k(x_n)`, one vector per
/// component, and the observed-data log-likelihood.
pub(crate) fn log_joint(params: &MixtureParams, data: &Dataset) -> Result<(Vec<Vec<f64>>, f64)> {
    let prepared = params.prepare()?;
    let cols = prepared
        .components
        .iter()
        .zip(&prepared.log_weights)
        .map(|(c, lw)| {
            let mut v = c.log_density_rows(data.values())?;
            v.iter_mut().for_each(|x| *x += lw);
            Ok(v)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut ll = 0.0;
    let mut buf = vec![0.0; cols.len()];
    for i in 0..data.len() {
        for (b, c) in buf.iter_mut().zip(&cols) {
            *b = c[i];
        }
        ll += log_sum_exp(&buf);
    }
    Ok((cols, ll))
}

/// Turn log joints into responsibilities in place, one vector per component.
pub(crate) fn normalize(cols: &mut [Vec<f64>]) {
    let n = cols.first().map_or(0, Vec::len);
    let mut buf = vec![0.0; cols.len()];
    for i in 0..n {
        for (b, c) in buf.iter_mut().zip(cols.iter()) {
            *b = c[i];
        }
        let lse = log_sum_exp(&buf);
        for c in cols.iter_mut() {
            c[i] = (c[i] - lse).exp();
        }
    }
}

enum Step {
    Ok(MixtureParams),
    Degenerate,
}

fn m_step(data: &Dataset, family: ComponentFamily, resp: &[Vec<f64>], ridge: f64) -> Result<Step> {
    let n = data.len() as f64;
    let mut weights = Vec::with_capacity(resp.len());
    let mut components = Vec::with_capacity(resp.len());
    let xs = data.values();
    for r in resp {
        let nk: f64 = r.iter().sum();
        let w = nk / n;
        if !(w >= DEGENERATE_WEIGHT) {
            return Ok(Step::Degenerate);
        }
        weights.push(w);
        let comp = match family {
            ComponentFamily::Gaussian1d => {
                let mean = r.iter().zip(xs).map(|(a, x)| a * x).sum::<f64>() / nk;
                let var = r.iter().zip(xs).map(|(a, x)| a * (x - mean) * (x - mean)).sum::<f64>() / nk;
                let var = var * (1.0 + ridge);
                if !(var > 0.0 && var.is_finite()) {
                    return Ok(Step::Degenerate);
                }
                ComponentParams::Gaussian1d { mean, sd: var.sqrt() }
            }
            ComponentFamily::Poisson => {
                let rate = r.iter().zip(xs).map(|(a, x)| a * x).sum::<f64>() / nk;
                if !(rate > 0.0 && rate.is_finite()) {
                    return Ok(Step::Degenerate);
                }
                ComponentParams::Poisson { rate }
            }
            ComponentFamily::GaussianMultivariate { dim } => {
                let x = DMatrix::from_column_slice(dim, data.len(), xs);
                let rv = DVector::from_column_slice(r);
                let mean = &x * &rv / nk;
                let mut centered = x;
                for (mut col, a) in centered.column_iter_mut().zip(r) {
                    col -= &mean;
                    col *= a.sqrt();
                }
                let cov = weighted_cov(&centered, nk, ridge);
                if cov.iter().any(|v| !v.is_finite()) || cov.clone().cholesky().is_none() {
                    return Ok(Step::Degenerate);
                }
                ComponentParams::GaussianMultivariate {
                    mean: mean.iter().copied().collect(),
                    cov,
                }
            }
        };
        components.push(comp);
    }
    // renormalise against rounding in the responsibility sums
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(Step::Ok(MixtureParams {
        family,
        weights,
        components,
    }))
}

/// `A A^T / nk`, symmetrised, plus the trace-scaled ridge.
fn weighted_cov(a: &DMatrix<f64>, nk: f64, ridge: f64) -> DMatrix<f64> {
    let dim = a.nrows();
    let mut s = a * a.transpose() / nk;
    for i in 0..dim {
        for j in 0..i {
            let v = 0.5 * (s[(i, j)] + s[(j, i)]);
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    let bump = ridge * s.trace() / dim as f64;
    for i in 0..dim {
        s[(i, i)] += bump;
    }
    s
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(x: &[f64], centers: &[Vec<f64>]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.iter().enumerate() {
        let d = dist2(x, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best.0
}

fn kmeans_pp_init(
    data: &Dataset,
    family: ComponentFamily,
    k: usize,
    ridge: f64,
    rng: &mut StreamRng,
) -> Result<Step> {
    let n = data.len();
    let mut centers: Vec<Vec<f64>> = vec![data.row(rng.random_range(0..n)).to_vec()];
    let mut d2: Vec<f64> = data.rows().map(|x| dist2(x, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            sample_categorical(&d2, rng)
        } else {
            rng.random_range(0..n)
        };
        let c = data.row(idx).to_vec();
        for (d, x) in d2.iter_mut().zip(data.rows()) {
            *d = d.min(dist2(x, &c));
        }
        centers.push(c);
    }
    let weights = vec![1.0 / k as f64; k];
    let components = match family {
        ComponentFamily::Poisson => centers
            .iter()
            .map(|c| ComponentParams::Poisson { rate: c[0].max(1e-3) })
            .collect(),
        _ => {
            let dim = data.dim();
            let labels: Vec<usize> = data.rows().map(|x| nearest(x, &centers)).collect();
            let mut means = vec![vec![0.0; dim]; k];
            let mut counts = vec![0usize; k];
            for (x, &l) in data.rows().zip(&labels) {
                counts[l] += 1;
                means[l].iter_mut().zip(x).for_each(|(m, v)| *m += v);
            }
            for (m, &c) in means.iter_mut().zip(&counts) {
                m.iter_mut().for_each(|v| *v /= c.max(1) as f64);
            }
            let mut centered = DMatrix::zeros(dim, n);
            for (i, (x, &l)) in data.rows().zip(&labels).enumerate() {
                for d in 0..dim {
                    centered[(d, i)] = x[d] - means[l][d];
                }
            }
            let mut pooled = weighted_cov(&centered, n as f64, ridge);
            if pooled.trace() <= 0.0 {
                // every cluster is a single repeated point; fall back to the total spread
                let mean = data.rows().fold(vec![0.0; dim], |mut acc, x| {
                    acc.iter_mut().zip(x).for_each(|(a, v)| *a += v / n as f64);
                    acc
                });
                for (i, x) in data.rows().enumerate() {
                    for d in 0..dim {
                        centered[(d, i)] = x[d] - mean[d];
                    }
                }
                pooled = weighted_cov(&centered, n as f64, ridge);
            }
            match family {
                ComponentFamily::Gaussian1d => {
                    let var = pooled[(0, 0)];
                    if !(var > 0.0) {
                        return Ok(Step::Degenerate);
                    }
                    centers
                        .iter()
                        .map(|c| ComponentParams::Gaussian1d { mean: c[0], sd: var.sqrt() })
                        .collect()
                }
                _ => {
                    if pooled.clone().cholesky().is_none() {
                        return Ok(Step::Degenerate);
                    }
                    centers
                        .iter()
                        .map(|c| ComponentParams::GaussianMultivariate {
                            mean: c.clone(),
                            cov: pooled.clone(),
                        })
                        .collect()
                }
            }
        }
    };
    Ok(Step::Ok(MixtureParams {
        family,
        weights,
        components,
    }))
}

fn initial_params(
    data: &Dataset,
    family: ComponentFamily,
    k: usize,
    config: &EmConfig,
    rng: &mut StreamRng,
) -> Result<Step> {
    let n = data.len();
    match config.init {
        Init::KmeansPlusPlus => kmeans_pp_init(data, family, k, config.covariance_ridge, rng),
        Init::RandomResponsibility => {
            let mut resp = vec![vec![0.0; n]; k];
            for i in 0..n {
                let row: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 1e-12).collect();
                let s: f64 = row.iter().sum();
                for (c, v) in resp.iter_mut().zip(row) {
                    c[i] = v / s;
                }
            }
            m_step(data, family, &resp, config.covariance_ridge)
        }
        Init::Quantile => {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| data.row(a)[0].total_cmp(&data.row(b)[0]));
            let mut resp = vec![vec![0.0; n]; k];
            for (rank, &i) in order.iter().enumerate() {
                resp[rank * k / n][i] = 1.0;
            }
            m_step(data, family, &resp, config.covariance_ridge)
        }
    }
}

struct RestartOutcome {
    params: MixtureParams,
    ll: f64,
    iterations: usize,
    converged: bool,
    trace: Vec<f64>,
}

fn run_restart(
    data: &Dataset,
    family: ComponentFamily,
    k: usize,
    config: &EmConfig,
    restart: usize,
) -> Result<Option<RestartOutcome>> {
    let mut rng = rng::stream(config.seed, &[rng::tag::FIT, k as u64, restart as u64]);
    let mut params = match initial_params(data, family, k, config, &mut rng)? {
        Step::Ok(p) => p,
        Step::Degenerate => return Ok(None),
    };
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    loop {
        let (mut cols, ll) = log_joint(&params, data)?;
        if !ll.is_finite() {
            return Ok(None);
        }
        if let Some(&prev) = trace.last() {
            let prev: f64 = prev;
            debug_assert!(
                ll >= prev - 1e-8 * (prev.abs() + 1.0),
                "log-likelihood decreased from {prev} to {ll}"
            );
            if (ll - prev).abs() / (ll.abs() + 1.0) < config.tol {
                converged = true;
            }
        }
        trace.push(ll);
        if converged || iterations >= config.max_iterations {
            return Ok(Some(RestartOutcome {
                params,
                ll,
                iterations,
                converged,
                trace,
            }));
        }
        normalize(&mut cols);
        params = match m_step(data, family, &cols, config.covariance_ridge)? {
            Step::Ok(p) => p,
            Step::Degenerate => return Ok(None),
        };
        iterations += 1;
    }
}

/// Best-of-restarts maximum-likelihood fit of a `k`-component mixture.
pub fn fit_em(data: &Dataset, family: ComponentFamily, k: usize, config: &EmConfig) -> Result<FittedModel> {
    config.validate()?;
    check_data(data, family, k)?;
    let run = |r: usize| run_restart(data, family, k, config, r);
    #[cfg(feature = "parallel")]
    let outcomes: Vec<Result<Option<RestartOutcome>>> = {
        use rayon::prelude::*;
        (0..config.restarts).into_par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let outcomes: Vec<Result<Option<RestartOutcome>>> = (0..config.restarts).map(run).collect();

    let mut best: Option<(usize, RestartOutcome)> = None;
    for (r, outcome) in outcomes.into_iter().enumerate() {
        let Some(o) = outcome? else { continue };
        if best.as_ref().is_none_or(|(_, b)| o.ll > b.ll) {
            best = Some((r, o));
        }
    }
    let (restart, o) = best.ok_or(Error::DegenerateFit { k })?;
    Ok(FittedModel {
        params: o.params,
        log_likelihood: o.ll,
        iterations_used: o.iterations,
        converged: o.converged,
        k,
        seed: config.seed,
        restart,
        trace: o.trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{correlation_matrix, ComponentParams};

    fn mixture_1d(means: &[f64], n: usize, seed: u64) -> Dataset {
        let k = means.len();
        MixtureParams::new(
            ComponentFamily::Gaussian1d,
            vec![1.0 / k as f64; k],
            means.iter().map(|&m| ComponentParams::Gaussian1d { mean: m, sd: 1.0 }).collect(),
        )
        .unwrap()
        .sample(n, seed)
        .unwrap()
        .0
    }

    fn assert_monotone(trace: &[f64]) {
        for w in trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-8 * (w[0].abs() + 1.0), "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn single_gaussian_is_the_mle() {
        let data = mixture_1d(&[2.0], 500, 1);
        let xs = data.values();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64).sqrt();
        let cfg = EmConfig { covariance_ridge: 0.0, ..Default::default() };
        let fit = fit_em(&data, ComponentFamily::Gaussian1d, 1, &cfg).unwrap();
        let ComponentParams::Gaussian1d { mean: m, sd: s } = fit.params.components[0] else { panic!() };
        assert!((m - mean).abs() < 1e-12 && (s - sd).abs() < 1e-12, "{m} {s}");
        assert!(fit.converged);
        let fit = fit_em(&data, ComponentFamily::Gaussian1d, 1, &EmConfig::default()).unwrap();
        let ComponentParams::Gaussian1d { sd: s, .. } = fit.params.components[0] else { panic!() };
        assert!((s / sd - 1.0).abs() < 1e-6);
    }

    #[test]
    fn single_poisson_rate_is_sample_mean() {
        let data = Dataset::new("c", 1, vec![0.0, 3.0, 4.0, 1.0, 7.0], None).unwrap();
        let fit = fit_em(&data, ComponentFamily::Poisson, 1, &EmConfig::default()).unwrap();
        let ComponentParams::Poisson { rate } = fit.params.components[0] else { panic!() };
        assert!((rate - 3.0).abs() < 1e-12);
    }

    #[test]
    fn separated_pair_recovered() {
        let data = mixture_1d(&[-3.0, 3.0], 5000, 2);
        let fit = fit_em(&data, ComponentFamily::Gaussian1d, 2, &EmConfig::default()).unwrap();
        let mut means: Vec<f64> = fit.params.components.iter().map(|c| c.mean()[0]).collect();
        means.sort_by(f64::total_cmp);
        assert!((means[0] + 3.0).abs() < 0.1 && (means[1] - 3.0).abs() < 0.1, "{means:?}");
        assert_monotone(&fit.trace);
    }

    #[test]
    fn every_init_is_monotone_and_deterministic() {
        let data = mixture_1d(&[-2.0, 0.5, 3.0], 2000, 3);
        for init in [Init::KmeansPlusPlus, Init::RandomResponsibility, Init::Quantile] {
            let cfg = EmConfig { init, seed: 5, ..Default::default() };
            let a = fit_em(&data, ComponentFamily::Gaussian1d, 3, &cfg).unwrap();
            let b = fit_em(&data, ComponentFamily::Gaussian1d, 3, &cfg).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.trace.len(), a.iterations_used + 1);
            assert_eq!(*a.trace.last().unwrap(), a.log_likelihood);
            assert_monotone(&a.trace);
        }
    }

    #[test]
    fn multivariate_fit() {
        let dim = 3;
        let cov = correlation_matrix(dim, 0.6).unwrap();
        let params = MixtureParams::new(
            ComponentFamily::GaussianMultivariate { dim },
            vec![0.4, 0.6],
            vec![
                ComponentParams::GaussianMultivariate { mean: vec![-2.0; dim], cov: cov.clone() },
                ComponentParams::GaussianMultivariate { mean: vec![2.0; dim], cov: cov.clone() },
            ],
        )
        .unwrap();
        let (data, _) = params.sample(3000, 4).unwrap();
        let fit = fit_em(&data, params.family, 2, &EmConfig::default()).unwrap();
        assert_monotone(&fit.trace);
        let mut w = fit.params.weights.clone();
        w.sort_by(f64::total_cmp);
        assert!((w[0] - 0.4).abs() < 0.03, "{w:?}");
        let ComponentParams::GaussianMultivariate { cov: c, .. } = &fit.params.components[0] else { panic!() };
        assert!((c - &cov).amax() < 0.15);
    }

    #[test]
    fn structured_failures() {
        let data = Dataset::new("d", 1, vec![1.0, 2.0], None).unwrap();
        assert!(matches!(
            fit_em(&data, ComponentFamily::Gaussian1d, 3, &EmConfig::default()),
            Err(Error::TooFewObservations { k: 3, n: 2 })
        ));
        let frac = Dataset::new("d", 1, vec![1.5, 2.0], None).unwrap();
        assert!(matches!(
            fit_em(&frac, ComponentFamily::Poisson, 1, &EmConfig::default()),
            Err(Error::InvalidData(_))
        ));
        let flat = Dataset::new("d", 1, vec![4.0; 10], None).unwrap();
        assert!(matches!(
            fit_em(&flat, ComponentFamily::Gaussian1d, 2, &EmConfig::default()),
            Err(Error::DegenerateFit { k: 2 })
        ));
        assert!(fit_em(&data, ComponentFamily::Gaussian1d, 1, &EmConfig { restarts: 0, ..Default::default() }).is_err());
    }
}
