//! Posterior component probabilities and assignment draws.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::em::{log_joint, normalize, FittedModel};
use crate::error::{Error, Result};
use crate::model::{Assignments, Dataset};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AssignMode {
    #[default]
    Sample,
    Map,
}

/// Row-major `n x k` matrix of `p(z_n = k | x_n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    k: usize,
    values: Vec<f64>,
}

impl Responsibilities {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.k
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.k..(i + 1) * self.k]
    }

    pub fn rows(&self) -> std::slice::Chunks<'_, f64> {
        self.values.chunks(self.k)
    }
}

pub fn responsibilities(model: &FittedModel, data: &Dataset) -> Result<Responsibilities> {
    if data.dim() != model.params.family.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.params.family.dim(),
            got: data.dim(),
        });
    }
    let (mut cols, _) = log_joint(&model.params, data)?;
    normalize(&mut cols);
    let k = cols.len();
    let mut values = vec![0.0; data.len() * k];
    for (j, c) in cols.iter().enumerate() {
        for (i, v) in c.iter().enumerate() {
            values[i * k + j] = *v;
        }
    }
    Ok(Responsibilities { k, values })
}

/// Index of the largest entry, first one on ties.
fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = j;
        }
    }
    best
}

pub fn assignments_from(resp: &Responsibilities, mode: AssignMode, seed: u64) -> Assignments {
    let z = match mode {
        AssignMode::Map => resp.rows().map(argmax).collect(),
        AssignMode::Sample => {
            let mut r = rng::stream(seed, &[rng::tag::ASSIGN, resp.k as u64]);
            resp.rows()
                .map(|row| {
                    let u: f64 = r.random();
                    let mut acc = 0.0;
                    for (j, p) in row.iter().enumerate() {
                        acc += p;
                        if u < acc {
                            return j;
                        }
                    }
                    row.iter().rposition(|&p| p > 0.0).unwrap_or(0)
                })
                .collect()
        }
    };
    Assignments(z)
}

pub fn sample_assignments(
    model: &FittedModel,
    data: &Dataset,
    mode: AssignMode,
    seed: u64,
) -> Result<Assignments> {
    Ok(assignments_from(&responsibilities(model, data)?, mode, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ComponentFamily, ComponentParams, MixtureParams};

    fn model(params: MixtureParams) -> FittedModel {
        FittedModel {
            k: params.k(),
            params,
            log_likelihood: 0.0,
            iterations_used: 0,
            converged: true,
            seed: 0,
            restart: 0,
            trace: vec![],
        }
    }

    fn two_normals(w: f64) -> FittedModel {
        model(
            MixtureParams::new(
                ComponentFamily::Gaussian1d,
                vec![w, 1.0 - w],
                vec![
                    ComponentParams::Gaussian1d { mean: -1.0, sd: 1.0 },
                    ComponentParams::Gaussian1d { mean: 1.0, sd: 1.0 },
                ],
            )
            .unwrap(),
        )
    }

    #[test]
    fn single_component_is_certain() {
        let m = model(
            MixtureParams::new(
                ComponentFamily::Gaussian1d,
                vec![1.0],
                vec![ComponentParams::Gaussian1d { mean: 0.0, sd: 2.0 }],
            )
            .unwrap(),
        );
        let d = Dataset::new("d", 1, vec![-5.0, 0.0, 9.0], None).unwrap();
        let r = responsibilities(&m, &d).unwrap();
        assert!(r.rows().all(|row| row == [1.0]));
        let z = sample_assignments(&m, &d, AssignMode::Sample, 1).unwrap();
        assert_eq!(z.as_slice(), &[0, 0, 0]);
    }

    #[test]
    fn symmetric_midpoint_and_direct_ratio() {
        let m = two_normals(0.5);
        let d = Dataset::new("d", 1, vec![0.0, 0.7], None).unwrap();
        let r = responsibilities(&m, &d).unwrap();
        assert!((r.row(0)[0] - 0.5).abs() < 1e-15);
        let m = two_normals(0.3);
        let r = responsibilities(&m, &d).unwrap();
        let phi = |x: f64, mu: f64| (-0.5 * (x - mu) * (x - mu)).exp();
        let (a, b) = (0.3 * phi(0.7, -1.0), 0.7 * phi(0.7, 1.0));
        assert!((r.row(1)[0] - a / (a + b)).abs() < 1e-14);
        assert!((r.row(1).iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn map_ties_go_low() {
        let resp = Responsibilities {
            k: 2,
            values: vec![0.9, 0.1, 0.5, 0.5, 0.2, 0.8],
        };
        assert_eq!(assignments_from(&resp, AssignMode::Map, 0).as_slice(), &[0, 0, 1]);
    }

    #[test]
    fn sampled_frequencies_track_responsibilities() {
        let m = two_normals(0.5);
        let n = 20_000;
        let d = Dataset::new("d", 1, vec![0.4; n], None).unwrap();
        let p = responsibilities(&m, &d).unwrap().row(0)[1];
        let z = sample_assignments(&m, &d, AssignMode::Sample, 9).unwrap();
        let again = sample_assignments(&m, &d, AssignMode::Sample, 9).unwrap();
        assert_eq!(z, again);
        let freq = z.as_slice().iter().filter(|&&j| j == 1).count() as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((freq - p).abs() < 4.0 * se, "{freq} vs {p}");
    }
}
