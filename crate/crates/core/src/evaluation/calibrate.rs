//! Calibration of `rho` on labeled datasets, and the matching rule for new
//! datasets.

use serde::{Deserialize, Serialize};

use super::fmeasure::f_measure;
use crate::error::{Error, Result};
use crate::inference::{sample_assignments, AssignMode};
use crate::model::Dataset;
use crate::selection::{minimizing_regions, CandidateSet, LossCurve, Region};

/// A labeled dataset with its fitted candidates and the F-measure of each
/// candidate's MAP partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledRun {
    pub name: String,
    pub candidates: CandidateSet,
    /// `(k, F-measure)` per fitted candidate.
    pub f_by_k: Vec<(usize, f64)>,
}

impl LabeledRun {
    pub fn new(data: &Dataset, candidates: CandidateSet) -> Result<Self> {
        let truth = data
            .labels()
            .ok_or_else(|| Error::MissingLabels(data.name().to_string()))?;
        let f_by_k = candidates
            .candidates
            .iter()
            .map(|c| {
                let z = sample_assignments(&c.model, data, AssignMode::Map, 0)?;
                Ok((c.k, f_measure(z.as_slice(), truth)?))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            name: data.name().to_string(),
            candidates,
            f_by_k,
        })
    }

    fn f_for(&self, k: usize) -> f64 {
        self.f_by_k
            .iter()
            .find(|(kk, _)| *kk == k)
            .map(|p| p.1)
            .unwrap_or(0.0)
    }

    /// Selected `K` at `rho` and its F-measure.
    pub fn at(&self, rho: f64) -> Result<(usize, f64)> {
        let k = self.candidates.choose(rho)?;
        Ok((k, self.f_for(k)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetCurve {
    pub name: String,
    pub chosen_k: Vec<usize>,
    pub f_measure: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub rho_star: f64,
    pub grid: Vec<f64>,
    pub per_dataset: Vec<DatasetCurve>,
    pub averaged: Vec<f64>,
}

/// `n + 1` evenly spaced points on `[0, rho_max]`.
pub fn uniform_grid(rho_max: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| rho_max * i as f64 / n as f64).collect()
}

/// For every `rho` on the grid, pick `K` on each dataset and score its MAP
/// partition; `rho_star` maximizes the across-dataset mean, smallest `rho`
/// on ties.
pub fn calibrate_rho(runs: &[LabeledRun], grid: &[f64]) -> Result<CalibrationResult> {
    if runs.is_empty() {
        return Err(Error::invalid("calibration needs at least one labeled dataset"));
    }
    if grid.is_empty() {
        return Err(Error::invalid("rho grid is empty"));
    }
    let per_dataset = runs
        .iter()
        .map(|run| {
            let picks = grid.iter().map(|&rho| run.at(rho)).collect::<Result<Vec<_>>>()?;
            Ok(DatasetCurve {
                name: run.name.clone(),
                chosen_k: picks.iter().map(|p| p.0).collect(),
                f_measure: picks.iter().map(|p| p.1).collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let averaged: Vec<f64> = (0..grid.len())
        .map(|i| per_dataset.iter().map(|d| d.f_measure[i]).sum::<f64>() / runs.len() as f64)
        .collect();
    let mut best = 0;
    for (i, v) in averaged.iter().enumerate() {
        if *v > averaged[best] {
            best = i;
        }
    }
    Ok(CalibrationResult {
        rho_star: grid[best],
        grid: grid.to_vec(),
        per_dataset,
        averaged,
    })
}

/// The region whose `K` should be reported for a new dataset given a
/// calibrated `rho_star`: the one containing it, else the one with the
/// nearest boundary.
pub fn region_near_rho(curves: &[LossCurve], rho_star: f64, rho_max: f64) -> Result<Region> {
    let regions = minimizing_regions(curves, rho_max.max(rho_star * 1.5).max(f64::MIN_POSITIVE))?;
    if let Some(r) = regions.iter().find(|r| r.contains(rho_star)) {
        return Ok(*r);
    }
    let gap = |r: &Region| (r.rho_lo - rho_star).abs().min((r.rho_hi - rho_star).abs());
    let mut best = regions[0];
    for r in &regions[1..] {
        if gap(r) < gap(&best) {
            best = *r;
        }
    }
    Ok(best)
}
