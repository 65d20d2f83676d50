use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stare_core::evaluation::{calibrate_rho, f_measure, region_near_rho, uniform_grid, CalibrationResult, LabeledRun};
use stare_core::inference::{assignments_from, responsibilities, AssignMode};
use stare_core::model::{Dataset, GeneratorSpec, SCENARIO_ALIASES};
use stare_core::selection::{default_rho_max, CandidateSet, LossCurve, Region, SelectionResult, Sweep};
use stare_core::Error;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::io::{read_dataset, read_json, to_json, write_atomic};
use crate::{CalibrateArgs, DataArgs, EvalArgs, SimulateArgs, SweepArgs};

/// JSON goes to `path` when given, otherwise to `out`; the summary goes to
/// whichever of `out` and stderr is not carrying the JSON.
fn emit(path: Option<&Path>, json: &[u8], summary: &str, out: &mut dyn Write) -> CliResult<()> {
    match path {
        Some(p) => {
            write_atomic(p, json)?;
            writeln!(out, "{summary}")?;
        }
        None => {
            out.write_all(json)?;
            eprintln!("{summary}");
        }
    }
    Ok(())
}

fn load_spec(spec: &str) -> CliResult<GeneratorSpec> {
    if let Some(s) = GeneratorSpec::alias(spec) {
        return Ok(s);
    }
    let path = Path::new(spec);
    if !path.exists() {
        return Err(CliError::usage(format!(
            "`{spec}` is neither a scenario alias ({}) nor a file",
            SCENARIO_ALIASES.join(", ")
        )));
    }
    let text = std::fs::read(path)?;
    serde_json::from_slice(&text).map_err(|e| CliError::usage(format!("generator spec {spec}: {e}")))
}

pub fn cmd_simulate(args: &SimulateArgs, out: &mut dyn Write) -> CliResult<()> {
    if args.list {
        for a in SCENARIO_ALIASES {
            writeln!(out, "{a}")?;
        }
        return Ok(());
    }
    let name = args.spec.as_deref().ok_or_else(|| CliError::usage("--spec is required"))?;
    let mut spec = load_spec(name)?;
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    if let Some(n) = args.n {
        spec.n = n;
    }
    spec.validate()?;
    if args.print_spec {
        out.write_all(&to_json(&spec)?)?;
        return Ok(());
    }
    let path = args.out.as_deref().ok_or_else(|| CliError::usage("--out is required"))?;
    let (data, _) = spec.sample()?;
    let mut buf = Vec::new();
    data.write_csv(&mut buf)?;
    write_atomic(path, &buf)?;
    writeln!(
        out,
        "wrote {}: N = {}, D = {}, true K = {}",
        path.display(),
        data.len(),
        data.dim(),
        spec.k()
    )?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectOutput {
    pub config: RunConfig,
    pub selection: SelectionResult,
}

fn prepare(data_path: &Path, common: &crate::CommonArgs) -> CliResult<(RunConfig, Dataset)> {
    let mut cfg = RunConfig::from_args(common)?;
    let data = read_dataset(data_path)?;
    cfg.inputs = vec![data_path.display().to_string()];
    Ok((cfg, data))
}

fn fmt_loss(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.6}")
    } else {
        "inf".into()
    }
}

pub fn cmd_select(args: &DataArgs, out: &mut dyn Write) -> CliResult<SelectOutput> {
    let (mut cfg, data) = prepare(&args.data, &args.common)?;
    let rho = cfg.rho.ok_or_else(|| CliError::usage("--rho is required for select"))?;
    let select_cfg = cfg.resolve(&data)?;
    let selection = CandidateSet::fit(&data, &select_cfg)?.select(rho)?;
    let mut summary = format!(
        "chosen K = {} at rho = {rho}, lambda = {} (BIC picks K = {})",
        selection.chosen_k, selection.lambda, selection.bic_k
    );
    for r in &selection.per_k {
        summary.push_str(&format!("\n  K = {}  loss = {}  bic = {:.3}", r.k, fmt_loss(r.loss), r.bic));
    }
    for f in &selection.failures {
        summary.push_str(&format!("\n  K = {} failed: {}", f.k, f.error));
    }
    let output = SelectOutput { config: cfg, selection };
    emit(args.common.out.as_deref(), &to_json(&output)?, &summary, out)?;
    Ok(output)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutput {
    pub config: RunConfig,
    pub sweep: Sweep,
}

/// `rho` followed by one loss column per `K`.
fn grid_csv(curves: &[LossCurve], grid: &[f64]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["rho".to_string()];
    header.extend(curves.iter().map(|c| format!("loss_k{}", c.k)));
    w.write_record(&header).map_err(Error::from)?;
    let columns = curves
        .iter()
        .map(|c| c.evaluate_grid(grid))
        .collect::<stare_core::Result<Vec<_>>>()?;
    for (i, rho) in grid.iter().enumerate() {
        let mut row = vec![format!("{rho}")];
        row.extend(columns.iter().map(|col| {
            if col[i].is_finite() {
                format!("{}", col[i])
            } else {
                "inf".into()
            }
        }));
        w.write_record(&row).map_err(Error::from)?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.into_error()))
}

pub fn cmd_sweep(args: &SweepArgs, out: &mut dyn Write) -> CliResult<SweepOutput> {
    let (mut cfg, data) = prepare(&args.data, &args.common)?;
    let select_cfg = cfg.resolve(&data)?;
    let sweep = CandidateSet::fit(&data, &select_cfg)?.sweep(&cfg.sweep_options())?;
    let v = &sweep.verdict;
    let mut summary = format!(
        "stable region: K = {} on rho in [{:.4}, {:.4}] of [0, {:.4}]{} (BIC picks K = {})",
        v.chosen_k,
        v.rho_lo,
        v.rho_hi,
        v.rho_max,
        if v.low_confidence { ", low confidence: no region is wide enough" } else { "" },
        sweep.bic_k
    );
    for r in &v.regions {
        summary.push_str(&format!(
            "\n  K = {} minimizes on [{:.4}, {:.4}], flat from {:.4}",
            r.k, r.rho_lo, r.rho_hi, r.flat_lo
        ));
    }
    let csv_path: Option<PathBuf> = args
        .csv
        .clone()
        .or_else(|| args.common.out.as_ref().map(|p| p.with_extension("csv")));
    if let Some(p) = &csv_path {
        let grid = uniform_grid(v.rho_max, cfg.grid_points.max(1));
        write_atomic(p, &grid_csv(&sweep.curves, &grid)?)?;
    }
    let output = SweepOutput { config: cfg, sweep };
    emit(args.common.out.as_deref(), &to_json(&output)?, &summary, out)?;
    Ok(output)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRegion {
    pub name: String,
    /// Minimizing region at (or nearest to) `rho_star` on this dataset.
    pub region: Region,
    pub f_measure: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrateOutput {
    pub config: RunConfig,
    pub calibration: CalibrationResult,
    pub regions: Vec<DatasetRegion>,
}

pub fn cmd_calibrate(args: &CalibrateArgs, out: &mut dyn Write) -> CliResult<CalibrateOutput> {
    if args.data.is_empty() {
        return Err(CliError::usage("calibrate needs at least one labeled dataset"));
    }
    let mut cfg = RunConfig::from_args(&args.common)?;
    cfg.inputs = args.data.iter().map(|p| p.display().to_string()).collect();
    let mut runs = Vec::with_capacity(args.data.len());
    for path in &args.data {
        let data = read_dataset(path)?;
        if data.labels().is_none() {
            return Err(Error::MissingLabels(data.name().to_string()).into());
        }
        let select_cfg = cfg.resolve(&data)?;
        runs.push(LabeledRun::new(&data, CandidateSet::fit(&data, &select_cfg)?)?);
    }
    let curves = runs
        .iter()
        .map(|r| r.candidates.curves())
        .collect::<stare_core::Result<Vec<_>>>()?;
    let rho_max = match cfg.rho_max {
        Some(r) => r,
        None => curves.iter().map(|c| default_rho_max(c)).fold(0.0, f64::max),
    };
    let grid = uniform_grid(rho_max, cfg.grid_points.max(1));
    let calibration = calibrate_rho(&runs, &grid)?;
    let star = calibration.grid.iter().position(|&g| g == calibration.rho_star).unwrap_or(0);
    let mut summary = format!(
        "rho* = {:.4}, mean F-measure {:.4}",
        calibration.rho_star, calibration.averaged[star]
    );
    let mut regions = Vec::with_capacity(runs.len());
    for (i, run) in runs.iter().enumerate() {
        let region = region_near_rho(&curves[i], calibration.rho_star, rho_max)?;
        let f = calibration.per_dataset[i].f_measure[star];
        summary.push_str(&format!(
            "\n  {}: K = {} (region [{:.4}, {:.4}]), F = {f:.4}",
            run.name, region.k, region.rho_lo, region.rho_hi
        ));
        regions.push(DatasetRegion {
            name: run.name.clone(),
            region,
            f_measure: f,
        });
    }
    let output = CalibrateOutput {
        config: cfg,
        calibration,
        regions,
    };
    emit(args.common.out.as_deref(), &to_json(&output)?, &summary, out)?;
    Ok(output)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KScore {
    pub k: usize,
    pub f_measure: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    /// Number of labeled groups in the data.
    pub true_k: usize,
    /// Scores of the fits with `true_k` and `true_k - 1` components, both of
    /// which can be reasonable references when one group is a catch-all.
    pub true_k_f_measure: Option<f64>,
    pub true_k_minus_one_f_measure: Option<f64>,
    pub chosen_k: usize,
    pub f_measure: f64,
    pub bic_k: usize,
    pub bic_f_measure: Option<f64>,
    pub per_k: Vec<KScore>,
}

pub fn cmd_eval(args: &EvalArgs, out: &mut dyn Write) -> CliResult<EvalReport> {
    let data = read_dataset(&args.data)?;
    let truth = data
        .labels()
        .ok_or_else(|| Error::MissingLabels(data.name().to_string()))?;
    let saved: SelectOutput = read_json(&args.selection)?;
    let sel = &saved.selection;
    if sel.provenance.data_digest != data.digest() {
        return Err(Error::InvalidData(format!(
            "{} was not produced from {}",
            args.selection.display(),
            args.data.display()
        ))
        .into());
    }
    let mut per_k = Vec::with_capacity(sel.per_k.len());
    for r in &sel.per_k {
        let resp = responsibilities(&r.model, &data)?;
        let z = assignments_from(&resp, AssignMode::Map, 0);
        per_k.push(KScore {
            k: r.k,
            f_measure: f_measure(z.as_slice(), truth)?,
        });
    }
    let score = |k: usize| per_k.iter().find(|s| s.k == k).map(|s| s.f_measure);
    let true_k = data.label_count().unwrap_or(0);
    let report = EvalReport {
        dataset: data.name().to_string(),
        true_k,
        true_k_f_measure: score(true_k),
        true_k_minus_one_f_measure: true_k.checked_sub(1).and_then(score),
        chosen_k: sel.chosen_k,
        f_measure: score(sel.chosen_k).ok_or(Error::NoCandidates)?,
        bic_k: sel.bic_k,
        bic_f_measure: score(sel.bic_k),
        per_k,
    };
    let mut summary = format!(
        "structurally aware: K = {}, F = {:.4}",
        report.chosen_k, report.f_measure
    );
    if let Some(f) = report.bic_f_measure {
        summary.push_str(&format!(" | BIC: K = {}, F = {f:.4}", report.bic_k));
    }
    summary.push_str(&format!(" | labeled groups: {}", report.true_k));
    for (k, f) in [
        (report.true_k, report.true_k_f_measure),
        (report.true_k.saturating_sub(1), report.true_k_minus_one_f_measure),
    ] {
        if let Some(f) = f {
            let verdict = if report.chosen_k == k { "matches" } else { "differs from" };
            summary.push_str(&format!("\n  choice {verdict} K = {k} (F = {f:.4})"));
        }
    }
    emit(args.out.as_deref(), &to_json(&report)?, &summary, out)?;
    Ok(report)
}
