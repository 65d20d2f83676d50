//! Partition of `[0, rho_max]` by the minimizing `K`, and the "first wide
//! region" rule.

use serde::{Deserialize, Serialize};

use super::loss::LossCurve;
use crate::error::{Error, Result};

pub const DEFAULT_WIDTH_FRACTION: f64 = 0.2;
pub const DEFAULT_RHO_MAX_FACTOR: f64 = 1.5;

/// How the width of a minimizing region is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StabilityRule {
    /// Only the part of the region where the winning curve has flattened to
    /// `lambda * K`, i.e. raising `rho` no longer lowers its loss.
    #[default]
    Flat,
    /// The whole region on which `K` is the argmin.
    Argmin,
}

/// A maximal `rho` interval on which `k` attains the smallest loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub k: usize,
    pub rho_lo: f64,
    pub rho_hi: f64,
    /// Start of the part of the region where the loss of `k` is constant.
    pub flat_lo: f64,
}

impl Region {
    pub fn width(&self) -> f64 {
        self.rho_hi - self.rho_lo
    }

    pub fn flat_width(&self) -> f64 {
        (self.rho_hi - self.flat_lo).max(0.0)
    }

    pub fn stable_width(&self, rule: StabilityRule) -> f64 {
        match rule {
            StabilityRule::Flat => self.flat_width(),
            StabilityRule::Argmin => self.width(),
        }
    }

    pub fn contains(&self, rho: f64) -> bool {
        self.rho_lo <= rho && rho <= self.rho_hi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StableRegion {
    pub chosen_k: usize,
    pub rho_lo: f64,
    pub rho_hi: f64,
    /// No region reached the width threshold; the widest one was returned.
    pub low_confidence: bool,
    pub rho_max: f64,
    pub width_fraction: f64,
    pub rule: StabilityRule,
    pub regions: Vec<Region>,
}

/// `1.5 x` the largest finite breakpoint over all curves, or 1 when every
/// curve is flat.
pub fn default_rho_max(curves: &[LossCurve]) -> f64 {
    let largest = curves
        .iter()
        .flat_map(|c| c.breakpoints.iter().copied())
        .filter(|b| b.is_finite())
        .fold(0.0_f64, f64::max);
    if largest > 0.0 {
        DEFAULT_RHO_MAX_FACTOR * largest
    } else {
        1.0
    }
}

/// Piece of a curve valid on one elementary interval.
#[derive(Clone, Copy)]
struct Line {
    k: usize,
    slope: f64,
    intercept: f64,
}

impl Line {
    fn at(&self, rho: f64) -> f64 {
        self.intercept + self.slope * rho
    }
}

/// Lower envelope of the curves over `[0, rho_max]`, as maximal regions.
/// Identical losses go to the smaller `K`.
pub fn minimizing_regions(curves: &[LossCurve], rho_max: f64) -> Result<Vec<Region>> {
    if !(rho_max > 0.0 && rho_max.is_finite()) {
        return Err(Error::invalid("rho_max must be positive and finite"));
    }
    let finite: Vec<&LossCurve> = curves.iter().filter(|c| !c.infinite).collect();
    if finite.is_empty() {
        return Err(Error::NoCandidates);
    }
    let mut cuts: Vec<f64> = finite
        .iter()
        .flat_map(|c| c.breakpoints.iter().copied())
        .filter(|&b| b > 0.0 && b < rho_max)
        .collect();
    cuts.push(0.0);
    cuts.push(rho_max);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let mut regions: Vec<Region> = Vec::new();
    let mut push = |k: usize, lo: f64, hi: f64| {
        if hi <= lo {
            return;
        }
        match regions.last_mut() {
            Some(last) if last.k == k => last.rho_hi = hi,
            _ => regions.push(Region {
                k,
                rho_lo: lo,
                rho_hi: hi,
                flat_lo: lo,
            }),
        }
    };
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let mid = 0.5 * (a + b);
        let lines: Vec<Line> = finite
            .iter()
            .map(|c| {
                let i = c.segments.partition_point(|s| s.rho_hi <= mid);
                let s = &c.segments[i.min(c.segments.len() - 1)];
                Line {
                    k: c.k,
                    slope: s.slope,
                    intercept: s.intercept,
                }
            })
            .collect();
        // the line lowest just to the right of `a`
        let better = |x: &Line, y: &Line, at: f64| {
            let (vx, vy) = (x.at(at), y.at(at));
            vx < vy || (vx == vy && (x.slope < y.slope || (x.slope == y.slope && x.k < y.k)))
        };
        let mut cur = lines[0];
        for l in &lines[1..] {
            if better(l, &cur, a) {
                cur = *l;
            }
        }
        let mut pos = a;
        loop {
            // earliest point after `pos` where a steeper line undercuts `cur`
            let mut next: Option<(f64, Line)> = None;
            for l in &lines {
                if l.slope >= cur.slope {
                    continue;
                }
                let x = (l.intercept - cur.intercept) / (cur.slope - l.slope);
                if !(x > pos && x < b) {
                    continue;
                }
                let take = match next {
                    None => true,
                    Some((nx, nl)) => x < nx || (x == nx && better(l, &nl, x)),
                };
                if take {
                    next = Some((x, *l));
                }
            }
            match next {
                Some((x, l)) => {
                    push(cur.k, pos, x);
                    pos = x;
                    cur = l;
                }
                None => {
                    push(cur.k, pos, b);
                    break;
                }
            }
        }
    }
    for r in &mut regions {
        let curve = finite.iter().find(|c| c.k == r.k).expect("region of a finite curve");
        let last = curve.breakpoints.last().copied().unwrap_or(0.0);
        r.flat_lo = last.clamp(r.rho_lo, r.rho_hi);
    }
    Ok(regions)
}

/// Smallest-`rho` region at least `width_fraction * rho_max` wide under the
/// default [`StabilityRule`], else the widest region flagged low-confidence.
pub fn stable_region_select(curves: &[LossCurve], rho_max: f64, width_fraction: f64) -> Result<StableRegion> {
    stable_region_select_with(curves, rho_max, width_fraction, StabilityRule::default())
}

pub fn stable_region_select_with(
    curves: &[LossCurve],
    rho_max: f64,
    width_fraction: f64,
    rule: StabilityRule,
) -> Result<StableRegion> {
    if curves.is_empty() {
        return Err(Error::NoCandidates);
    }
    if !(width_fraction > 0.0 && width_fraction < 1.0) {
        return Err(Error::invalid("width_fraction must lie in (0, 1)"));
    }
    let regions = minimizing_regions(curves, rho_max)?;
    let threshold = width_fraction * rho_max;
    let (pick, low_confidence) = match regions.iter().find(|r| r.stable_width(rule) >= threshold) {
        Some(r) => (*r, false),
        None => {
            let mut widest = regions[0];
            for r in &regions[1..] {
                if r.stable_width(rule) > widest.stable_width(rule) {
                    widest = *r;
                }
            }
            (widest, true)
        }
    };
    Ok(StableRegion {
        chosen_k: pick.k,
        rho_lo: pick.rho_lo,
        rho_hi: pick.rho_hi,
        low_confidence,
        rho_max,
        width_fraction,
        rule,
        regions,
    })
}
