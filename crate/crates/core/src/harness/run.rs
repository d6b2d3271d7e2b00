use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::filter::{
    error_metrics, grid_l1, predict, predictive_grid, run_filter, Cloud, FilterConfig, FilterTrace,
};
use crate::mixture::DualMixture;
use crate::model::{CirModel, DualModel, WfModel};
use crate::observation::ObservationRecord;
use crate::resample::Resampling;

use super::{
    derive_seed, simulate_dataset, Dataset, ExperimentSpec, MethodSpec, ModelSpec, DATA_CELL,
};

pub const CSV_HEADER: [&str; 8] = [
    "scenario",
    "method",
    "dual",
    "N",
    "replicate",
    "time_index",
    "metric",
    "value",
];

/// `time_index` of rows that summarize a whole filtering run.
const SUMMARY_INDEX: i64 = -1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub scenario: String,
    pub method: String,
    pub dual: String,
    pub n: usize,
    pub replicate: usize,
    pub time_index: i64,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellRecord {
    pub cell: usize,
    pub method: MethodSpec,
    pub n: usize,
    pub replicate: usize,
    pub seed: u64,
    pub wall_seconds: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub spec: ExperimentSpec,
    pub version: String,
    pub threads: usize,
    pub data_seeds: Vec<u64>,
    pub reference_wall_seconds: f64,
    pub cells: Vec<CellRecord>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub rows: Vec<ResultRow>,
    pub manifest: Manifest,
}

impl RunReport {
    pub fn failed_cells(&self) -> usize {
        self.manifest
            .cells
            .iter()
            .filter(|c| c.error.is_some())
            .count()
    }
}

fn build_model(spec: &ModelSpec) -> Box<dyn DualModel> {
    match spec {
        ModelSpec::Cir(p) => Box::new(CirModel::new(p.clone())),
        ModelSpec::Wf(p) => Box::new(WfModel::new(p.clone())),
    }
}

/// `(method, particle count)` pairs in output order; deterministic methods
/// appear once with `N = 0`.
fn cell_configs(spec: &ExperimentSpec) -> Vec<(MethodSpec, usize)> {
    let mut out = Vec::new();
    for &m in &spec.methods {
        if m.is_particle() {
            out.extend(spec.particles.iter().map(|&n| (m, n)));
        } else {
            out.push((m, 0));
        }
    }
    out
}

fn git_version() -> String {
    let described = std::process::Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .unwrap_or_else(|| "unknown".into());
    format!("{} ({described})", env!("CARGO_PKG_VERSION"))
}

struct CellOutcome {
    rows: Vec<ResultRow>,
    record: CellRecord,
}

/// Shared per-replicate inputs of a filtering scenario.
struct Reference {
    data: Dataset,
    exact: FilterTrace,
}

/// Runs every method × particle count × replicate cell of `spec`.
/// Results are independent of `threads`.
pub fn run_scenario(spec: &ExperimentSpec, threads: Option<usize>) -> Result<RunReport> {
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidParams(format!("thread pool: {e}")))?;
    let threads_used = pool.current_num_threads();
    pool.install(|| run_in_pool(spec, threads_used))
}

fn run_in_pool(spec: &ExperimentSpec, threads: usize) -> Result<RunReport> {
    let model = build_model(&spec.model);
    let model = model.as_ref();
    let configs = cell_configs(spec);
    let jobs: Vec<(usize, usize)> = (0..configs.len())
        .flat_map(|c| (0..spec.replicates).map(move |r| (c, r)))
        .collect();
    let data_seeds: Vec<u64> = (0..spec.replicates)
        .map(|r| derive_seed(spec.seed, spec.scenario, DATA_CELL, r as u64))
        .collect();
    let started = Instant::now();
    let outcomes: Vec<CellOutcome> = if spec.scenario.is_predictive() {
        let start = start_mixture(model, spec)?;
        let exact = predict(
            model,
            &start,
            spec.horizon,
            &crate::filter::Method::Exact,
            Resampling::Systematic,
            &mut ChaCha8Rng::seed_from_u64(0),
        )?;
        let reference_seconds = started.elapsed().as_secs_f64();
        log::info!(
            "{}: exact predictive ready in {reference_seconds:.2}s",
            spec.scenario
        );
        jobs.par_iter()
            .map(|&(c, r)| {
                run_cell(spec, &configs, c, r, |method, seed| {
                    predictive_cell(model, &start, &exact, spec, method, seed)
                })
            })
            .collect()
    } else {
        let references: Vec<std::result::Result<Reference, String>> = data_seeds
            .par_iter()
            .map(|&seed| reference_run(model, spec, seed).map_err(|e| e.to_string()))
            .collect();
        log::info!(
            "{}: {} references ready in {:.2}s",
            spec.scenario,
            references.len(),
            started.elapsed().as_secs_f64()
        );
        jobs.par_iter()
            .map(|&(c, r)| {
                run_cell(spec, &configs, c, r, |method, seed| match &references[r] {
                    Ok(reference) => filtering_cell(model, reference, method, seed),
                    Err(e) => Err(Error::DomainError(format!("reference run failed: {e}"))),
                })
            })
            .collect()
    };
    let reference_wall_seconds = started.elapsed().as_secs_f64()
        - outcomes.iter().map(|o| o.record.wall_seconds).sum::<f64>() / threads.max(1) as f64;
    let mut rows = Vec::new();
    let mut cells = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        rows.extend(o.rows);
        cells.push(o.record);
    }
    Ok(RunReport {
        rows,
        manifest: Manifest {
            spec: spec.clone(),
            version: git_version(),
            threads,
            data_seeds,
            reference_wall_seconds: reference_wall_seconds.max(0.0),
            cells,
        },
    })
}

fn run_cell<F>(
    spec: &ExperimentSpec,
    configs: &[(MethodSpec, usize)],
    c: usize,
    r: usize,
    body: F,
) -> CellOutcome
where
    F: FnOnce(crate::filter::Method, u64) -> Result<Vec<(i64, &'static str, f64)>>,
{
    let (method_spec, n) = configs[c];
    let method = method_spec.method(n, spec.prune_eps);
    let seed = derive_seed(spec.seed, spec.scenario, c as u64, r as u64);
    let t0 = Instant::now();
    let result = body(method, seed);
    let wall_seconds = t0.elapsed().as_secs_f64();
    let row = |time_index, metric: &str, value| ResultRow {
        scenario: spec.scenario.tag().to_string(),
        method: method.tag().to_string(),
        dual: method.dual_tag().to_string(),
        n,
        replicate: r,
        time_index,
        metric: metric.to_string(),
        value,
    };
    let (rows, error) = match result {
        Ok(values) => (
            values.into_iter().map(|(i, m, v)| row(i, m, v)).collect(),
            None,
        ),
        Err(e) => {
            log::warn!(
                "{} cell {c} ({method_spec:?}, N={n}) replicate {r} failed: {e}",
                spec.scenario
            );
            (
                vec![row(SUMMARY_INDEX, "error", f64::NAN)],
                Some(e.to_string()),
            )
        }
    };
    log::info!(
        "{} cell {c} ({method_spec:?}, N={n}) replicate {r}: {wall_seconds:.3}s",
        spec.scenario
    );
    CellOutcome {
        rows,
        record: CellRecord {
            cell: c,
            method: method_spec,
            n,
            replicate: r,
            seed,
            wall_seconds,
            error,
        },
    }
}

/// Filtering law after the last observed batch, from the stationary prior.
fn start_mixture(model: &dyn DualModel, spec: &ExperimentSpec) -> Result<DualMixture> {
    let y = ObservationRecord::new(0.0, spec.start_counts.clone());
    Ok(model
        .prior()
        .update(
            &y,
            |m, p, y| model.ln_marginal(m, p, y),
            |m, y| model.shift_index(m, y),
            |p, y| model.shift_param(p, y),
        )?
        .mixture)
}

fn predictive_cell(
    model: &dyn DualModel,
    start: &DualMixture,
    exact: &Cloud,
    spec: &ExperimentSpec,
    method: crate::filter::Method,
    seed: u64,
) -> Result<Vec<(i64, &'static str, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cloud = predict(
        model,
        start,
        spec.horizon,
        &method,
        Resampling::Systematic,
        &mut rng,
    )?;
    let reference = exact.as_mixture().expect("exact prediction is a mixture");
    let grid = predictive_grid(reference);
    let (a, e) = (cloud.moments(), exact.moments());
    Ok(vec![
        (0, "predictive_l1", grid_l1(&cloud, exact, &grid)?),
        (0, "mean_error", (a.mean[0] - e.mean[0]).abs()),
        (0, "sd_error", (a.sd[0] - e.sd[0]).abs()),
    ])
}

fn reference_run(
    model: &dyn DualModel,
    spec: &ExperimentSpec,
    data_seed: u64,
) -> Result<Reference> {
    let mut rng = ChaCha8Rng::seed_from_u64(data_seed);
    let data = simulate_dataset(model, spec.n_times, spec.spacing, spec.batch_size, &mut rng)?;
    let exact = run_filter(
        model,
        &data.observations,
        &FilterConfig::new(crate::filter::Method::Exact, 0),
    )?;
    Ok(Reference { data, exact })
}

fn filtering_cell(
    model: &dyn DualModel,
    reference: &Reference,
    method: crate::filter::Method,
    seed: u64,
) -> Result<Vec<(i64, &'static str, f64)>> {
    let trace = run_filter(
        model,
        &reference.data.observations,
        &FilterConfig::new(method, seed),
    )?;
    let table = error_metrics(&trace, &reference.exact, Some(&reference.data.signal))?;
    let s = table.summary;
    Ok(vec![
        (SUMMARY_INDEX, "mean_error", s.mean_error),
        (SUMMARY_INDEX, "sd_error", s.sd_error),
        (
            SUMMARY_INDEX,
            "signal_error",
            s.signal_error.unwrap_or(f64::NAN),
        ),
        (SUMMARY_INDEX, "predictive_l1", s.predictive_l1),
    ])
}

/// Writes `<scenario>.csv` and `<scenario>_manifest.json` into `out_dir`.
pub fn write_results(report: &RunReport, out_dir: &Path) -> Result<(PathBuf, PathBuf)> {
    let io = |e: std::io::Error| Error::DomainError(format!("cannot write results: {e}"));
    fs::create_dir_all(out_dir).map_err(io)?;
    let tag = report.manifest.spec.scenario.tag();
    let csv_path = out_dir.join(format!("{tag}.csv"));
    let json_path = out_dir.join(format!("{tag}_manifest.json"));
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| Error::DomainError(e.to_string()))?;
    w.write_record(CSV_HEADER)
        .map_err(|e| Error::DomainError(e.to_string()))?;
    for r in &report.rows {
        w.write_record([
            r.scenario.as_str(),
            r.method.as_str(),
            r.dual.as_str(),
            &r.n.to_string(),
            &r.replicate.to_string(),
            &r.time_index.to_string(),
            r.metric.as_str(),
            &r.value.to_string(),
        ])
        .map_err(|e| Error::DomainError(e.to_string()))?;
    }
    w.flush().map_err(io)?;
    let json = serde_json::to_string_pretty(&report.manifest)
        .map_err(|e| Error::DomainError(e.to_string()))?;
    fs::write(&json_path, json).map_err(io)?;
    Ok((csv_path, json_path))
}

/// Header of the per-cell aggregate table.
pub const SUMMARY_HEADER: [&str; 10] = [
    "scenario",
    "method",
    "dual",
    "N",
    "time_index",
    "metric",
    "replicates",
    "mean",
    "ci_low",
    "ci_high",
];

/// Across-replicate aggregate of one metric; the interval is mean ± 2·sd/√R.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: String,
    pub dual: String,
    pub n: usize,
    pub time_index: i64,
    pub metric: String,
    pub replicates: usize,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Aggregates finite metric values over replicates, in row order of first appearance.
pub fn summarize(report: &RunReport) -> Vec<SummaryRow> {
    let mut order: Vec<(String, String, usize, i64, String)> = Vec::new();
    let mut values: std::collections::HashMap<(String, String, usize, i64, String), Vec<f64>> =
        Default::default();
    for r in report.rows.iter().filter(|r| r.value.is_finite()) {
        let key = (
            r.method.clone(),
            r.dual.clone(),
            r.n,
            r.time_index,
            r.metric.clone(),
        );
        let slot = values.entry(key.clone()).or_default();
        if slot.is_empty() {
            order.push(key);
        }
        slot.push(r.value);
    }
    order
        .into_iter()
        .map(|key| {
            let v = &values[&key];
            let k = v.len() as f64;
            let mean = v.iter().sum::<f64>() / k;
            let sd = if v.len() > 1 {
                (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
            } else {
                0.0
            };
            let half = 2.0 * sd / k.sqrt();
            let (method, dual, n, time_index, metric) = key;
            SummaryRow {
                method,
                dual,
                n,
                time_index,
                metric,
                replicates: v.len(),
                mean,
                ci_low: mean - half,
                ci_high: mean + half,
            }
        })
        .collect()
}

/// Writes `<tag>_summary.csv` with the across-replicate aggregates.
pub fn write_summary(report: &RunReport, out_dir: &Path) -> Result<PathBuf> {
    let io = |e: std::io::Error| Error::DomainError(format!("cannot write results: {e}"));
    fs::create_dir_all(out_dir).map_err(io)?;
    let scenario = report.manifest.spec.scenario.tag();
    let path = out_dir.join(format!("{scenario}_summary.csv"));
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::DomainError(e.to_string()))?;
    w.write_record(SUMMARY_HEADER)
        .map_err(|e| Error::DomainError(e.to_string()))?;
    for r in summarize(report) {
        w.write_record([
            scenario,
            r.method.as_str(),
            r.dual.as_str(),
            &r.n.to_string(),
            &r.time_index.to_string(),
            r.metric.as_str(),
            &r.replicates.to_string(),
            &r.mean.to_string(),
            &r.ci_low.to_string(),
            &r.ci_high.to_string(),
        ])
        .map_err(|e| Error::DomainError(e.to_string()))?;
    }
    w.flush().map_err(io)?;
    Ok(path)
}
