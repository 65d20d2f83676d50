//! WebAssembly bindings for the browser demo in `www/`.
//!
//! A [`Session`] holds one simulated dataset and its fitted candidates. The
//! page drives three operations: draw a scenario, sweep the loss over `rho`,
//! and pick `K` at a chosen `rho`. Results cross the boundary as JSON strings.

use serde::Serialize;
use stare_core::model::{ComponentFamily, Dataset, GeneratorSpec, Scenario, SCENARIO_ALIASES};
use stare_core::selection::{CandidateSet, EstimatorConfig, SelectConfig, SweepOptions};
use wasm_bindgen::prelude::*;

type Result<T> = std::result::Result<T, String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string(v).map_err(err)
}

/// Names of the built-in scenarios, as a JSON array.
#[wasm_bindgen]
pub fn scenarios() -> String {
    serde_json::to_string(SCENARIO_ALIASES).unwrap()
}

#[derive(Serialize)]
struct Histogram {
    lo: f64,
    width: f64,
    /// counts[label][bin]
    counts: Vec<Vec<u32>>,
}

#[derive(Serialize)]
struct SweepView {
    rho_max: f64,
    chosen_k: usize,
    rho_lo: f64,
    rho_hi: f64,
    low_confidence: bool,
    bic_k: usize,
    regions: Vec<(usize, f64, f64)>,
    /// One `(rho, loss)` polyline per candidate, breakpoints included.
    curves: Vec<(usize, Vec<(f64, f64)>)>,
}

#[derive(Serialize)]
struct Choice {
    rho: f64,
    chosen_k: usize,
    losses: Vec<(usize, f64)>,
    /// Size of each fitted component under its sampled assignment.
    sizes: Vec<usize>,
}

pub struct Session {
    data: Dataset,
    family: ComponentFamily,
    seed: u64,
    candidates: Option<CandidateSet>,
}

impl Session {
    /// Draw `n` points from a built-in one-dimensional scenario.
    pub fn new(scenario: &str, n: usize, seed: u64) -> Result<Session> {
        let spec = GeneratorSpec::alias(scenario)
            .ok_or_else(|| err(format!("unknown scenario {scenario}")))?
            .with_n(n)
            .with_seed(seed);
        if spec.dim() != 1 {
            return Err(err("the demo only plots one-dimensional scenarios"));
        }
        let family = match spec.scenario {
            Scenario::NegbinMixture => ComponentFamily::Poisson,
            _ => ComponentFamily::Gaussian1d,
        };
        let (data, _) = spec.sample().map_err(err)?;
        Ok(Session {
            data,
            family,
            seed,
            candidates: None,
        })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Per-label histogram of the data with `bins` equal bins.
    pub fn histogram(&self, bins: usize) -> Result<String> {
        let bins = bins.max(1);
        let v = self.data.values();
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let width = ((hi - lo) / bins as f64).max(f64::MIN_POSITIVE);
        let labels = self.data.labels().unwrap_or(&[]);
        let groups = self.data.label_count().unwrap_or(1).max(1);
        let mut counts = vec![vec![0u32; bins]; groups];
        for (i, x) in v.iter().enumerate() {
            let b = (((x - lo) / width) as usize).min(bins - 1);
            let g = labels.get(i).copied().unwrap_or(0).max(0) as usize;
            counts[g][b] += 1;
        }
        json(&Histogram { lo, width, counts })
    }

    /// Fit `K = 1..k_max` and return the exact loss curves with the
    /// stable-region verdict.
    pub fn sweep(&mut self, k_max: usize, lambda: f64) -> Result<String> {
        let cfg = SelectConfig {
            k_max,
            lambda,
            seed: self.seed,
            estimator: EstimatorConfig::default_for(self.family),
            ..SelectConfig::new(self.family)
        };
        let set = CandidateSet::fit(&self.data, &cfg).map_err(err)?;
        let sweep = set.sweep(&SweepOptions::default()).map_err(err)?;
        let v = &sweep.verdict;
        let curves = sweep
            .curves
            .iter()
            .map(|c| {
                let mut xs = vec![0.0];
                xs.extend(c.breakpoints.iter().copied().filter(|&b| b < v.rho_max));
                xs.push(v.rho_max);
                let pts = xs.iter().map(|&x| (x, c.evaluate(x).unwrap_or(f64::MAX))).collect();
                (c.k, pts)
            })
            .collect();
        let view = SweepView {
            rho_max: v.rho_max,
            chosen_k: v.chosen_k,
            rho_lo: v.rho_lo,
            rho_hi: v.rho_hi,
            low_confidence: v.low_confidence,
            bic_k: sweep.bic_k,
            regions: v.regions.iter().map(|r| (r.k, r.rho_lo, r.rho_hi)).collect(),
            curves,
        };
        self.candidates = Some(set);
        json(&view)
    }

    /// `K` minimizing the penalized loss at `rho`; needs a prior sweep.
    pub fn choose(&self, rho: f64) -> Result<String> {
        let set = self
            .candidates
            .as_ref()
            .ok_or_else(|| err("run a sweep first"))?;
        let chosen_k = set.choose(rho).map_err(err)?;
        let losses = set
            .candidates
            .iter()
            .map(|c| c.loss(rho, set.lambda).map(|l| (c.k, l)))
            .collect::<stare_core::Result<Vec<_>>>()
            .map_err(err)?;
        let sizes = set
            .candidate(chosen_k)
            .map(|c| c.profiles[0].per_component.iter().map(|p| p.n_k).collect())
            .unwrap_or_default();
        json(&Choice {
            rho,
            chosen_k,
            losses,
            sizes,
        })
    }
}

/// JavaScript face of [`Session`]; errors become thrown `Error`s.
#[wasm_bindgen(js_name = Session)]
pub struct WasmSession(Session);

#[wasm_bindgen(js_class = Session)]
impl WasmSession {
    #[wasm_bindgen(constructor)]
    pub fn new(scenario: &str, n: usize, seed: u32) -> std::result::Result<WasmSession, JsError> {
        Session::new(scenario, n, seed.into()).map(WasmSession).map_err(|e| JsError::new(&e))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn histogram(&self, bins: usize) -> std::result::Result<String, JsError> {
        self.0.histogram(bins).map_err(|e| JsError::new(&e))
    }

    pub fn sweep(&mut self, k_max: usize, lambda: f64) -> std::result::Result<String, JsError> {
        self.0.sweep(k_max, lambda).map_err(|e| JsError::new(&e))
    }

    pub fn choose(&self, rho: f64) -> std::result::Result<String, JsError> {
        self.0.choose(rho).map_err(|e| JsError::new(&e))
    }
}
