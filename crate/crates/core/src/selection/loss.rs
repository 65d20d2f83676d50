//! The structurally aware loss and its exact representation as a function of
//! `rho`.

use serde::{Deserialize, Serialize};

use super::profile::ComponentDivergenceProfile;
use crate::error::{Error, Result};

fn check_rho(rho: f64) -> Result<()> {
    if !(rho >= 0.0) {
        return Err(Error::invalid(format!("rho must be nonnegative, got {rho}")));
    }
    Ok(())
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("lambda must be positive, got {lambda}")));
    }
    Ok(())
}

/// `sum_k n_k max(0, d_k - rho)`; empty components contribute nothing.
pub fn structurally_aware_loss(profile: &ComponentDivergenceProfile, rho: f64) -> Result<f64> {
    check_rho(rho)?;
    Ok(profile
        .per_component
        .iter()
        .filter(|c| c.n_k > 0)
        .map(|c| c.n_k as f64 * (c.divergence - rho).max(0.0))
        .sum())
}

/// Structurally aware loss plus `lambda * K`.
pub fn penalized_loss(profile: &ComponentDivergenceProfile, rho: f64, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    Ok(structurally_aware_loss(profile, rho)? + lambda * profile.k as f64)
}

/// Linear piece `intercept + slope * rho` on `[rho_lo, rho_hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub rho_lo: f64,
    #[serde(with = "crate::serde_ext")]
    pub rho_hi: f64,
    pub slope: f64,
    pub intercept: f64,
}

impl Segment {
    pub fn at(&self, rho: f64) -> f64 {
        self.intercept + self.slope * rho
    }
}

/// Penalized loss of one candidate `K` as a piecewise linear function of
/// `rho >= 0`. A profile with an infinite divergence on a nonempty component
/// gives a curve that is `+inf` everywhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossCurve {
    pub k: usize,
    pub breakpoints: Vec<f64>,
    pub segments: Vec<Segment>,
    pub lambda: f64,
    pub infinite: bool,
}

impl LossCurve {
    pub fn new(profile: &ComponentDivergenceProfile, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        let penalty = lambda * profile.k as f64;
        if profile.has_infinite() {
            return Ok(Self {
                k: profile.k,
                breakpoints: Vec::new(),
                segments: Vec::new(),
                lambda,
                infinite: true,
            });
        }
        let active: Vec<(f64, f64)> = profile
            .per_component
            .iter()
            .filter(|c| c.n_k > 0 && c.divergence > 0.0)
            .map(|c| (c.divergence, c.n_k as f64))
            .collect();
        let mut breakpoints: Vec<f64> = active.iter().map(|a| a.0).collect();
        breakpoints.sort_by(f64::total_cmp);
        breakpoints.dedup();
        let mut segments = Vec::with_capacity(breakpoints.len() + 1);
        let mut lo = 0.0;
        for &hi in breakpoints.iter().chain(std::iter::once(&f64::INFINITY)) {
            let (mut slope, mut intercept) = (0.0, penalty);
            for &(d, n) in &active {
                if d >= hi {
                    slope -= n;
                    intercept += n * d;
                }
            }
            segments.push(Segment {
                rho_lo: lo,
                rho_hi: hi,
                slope,
                intercept,
            });
            lo = hi;
        }
        Ok(Self {
            k: profile.k,
            breakpoints,
            segments,
            lambda,
            infinite: false,
        })
    }

    /// Pointwise mean of curves sharing `k` and `lambda`.
    pub fn average(curves: &[LossCurve]) -> Result<Self> {
        let first = curves.first().ok_or(Error::NoCandidates)?;
        if curves.iter().any(|c| c.k != first.k || c.lambda != first.lambda) {
            return Err(Error::invalid("averaged curves must share k and lambda"));
        }
        if curves.len() == 1 {
            return Ok(first.clone());
        }
        if curves.iter().any(|c| c.infinite) {
            return Ok(Self {
                breakpoints: Vec::new(),
                segments: Vec::new(),
                infinite: true,
                ..first.clone()
            });
        }
        let mut breakpoints: Vec<f64> = curves.iter().flat_map(|c| c.breakpoints.iter().copied()).collect();
        breakpoints.sort_by(f64::total_cmp);
        breakpoints.dedup();
        let m = curves.len() as f64;
        let mut segments = Vec::with_capacity(breakpoints.len() + 1);
        let mut lo = 0.0;
        for &hi in breakpoints.iter().chain(std::iter::once(&f64::INFINITY)) {
            let (mut slope, mut intercept) = (0.0, 0.0);
            for c in curves {
                let s = c.segment_at(lo);
                slope += s.slope / m;
                intercept += s.intercept / m;
            }
            segments.push(Segment {
                rho_lo: lo,
                rho_hi: hi,
                slope,
                intercept,
            });
            lo = hi;
        }
        Ok(Self {
            k: first.k,
            breakpoints,
            segments,
            lambda: first.lambda,
            infinite: false,
        })
    }

    fn segment_at(&self, rho: f64) -> &Segment {
        let i = self.segments.partition_point(|s| s.rho_hi <= rho);
        &self.segments[i.min(self.segments.len() - 1)]
    }

    pub fn evaluate(&self, rho: f64) -> Result<f64> {
        check_rho(rho)?;
        if self.infinite {
            return Ok(f64::INFINITY);
        }
        Ok(self.segment_at(rho).at(rho))
    }

    pub fn evaluate_grid(&self, grid: &[f64]) -> Result<Vec<f64>> {
        grid.iter().map(|&r| self.evaluate(r)).collect()
    }
}

pub fn loss_curve(profile: &ComponentDivergenceProfile, lambda: f64) -> Result<LossCurve> {
    LossCurve::new(profile, lambda)
}
