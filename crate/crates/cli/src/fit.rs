use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use cns_core::data::{load_csv, preprocess, Preprocessed};
use cns_core::graph::build_knn_graph;
use cns_core::select::{grid_search, CandidateSummary, GridSearchOutput, GridSpec};
use cns_core::{CriterionReport, CriterionRow, DataMatrix, DistanceMetric, ModelConfig, PreprocessOptions};
use serde::Serialize;

use crate::{CliError, FitArgs, ModelArgs};

#[derive(Debug, Serialize)]
pub struct Timings {
    pub load_seconds: f64,
    pub preprocess_seconds: f64,
    pub knn_seconds: f64,
    pub search_seconds: f64,
    pub total_seconds: f64,
}

#[derive(Debug, Serialize)]
pub struct Preprocessing {
    pub standardize: bool,
    pub center: bool,
    pub pca: bool,
    pub max_pcs: Option<usize>,
    pub input_dims: usize,
    pub standardized_dims: usize,
    pub output_dims: usize,
}

/// What ran: grids are recorded after clamping.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub input: String,
    pub label_column: Option<String>,
    pub n: usize,
    pub metric: DistanceMetric,
    pub preprocessing: Preprocessing,
    pub k_grid: Vec<usize>,
    pub lambda_grid: Vec<f64>,
    pub k_max: usize,
    pub cap: usize,
    pub tol: f64,
    pub candidates: Vec<CandidateSummary>,
    pub version: &'static str,
    pub timings: Timings,
}

#[derive(Debug, Serialize)]
pub struct Report<'a> {
    pub config: &'a ModelConfig,
    pub criterion: &'a CriterionReport,
    pub effective_clusters: usize,
    pub warnings: &'a [String],
    pub manifest: Manifest,
    pub table: &'a [CriterionRow],
}

pub struct Fitted {
    pub prepared: Preprocessed,
    pub search: GridSearchOutput,
    pub preprocess_seconds: f64,
    pub warnings: Vec<String>,
}

pub fn options(model: &ModelArgs) -> PreprocessOptions {
    PreprocessOptions {
        max_pcs: (!model.no_pca).then_some(model.max_pcs),
        center: !model.no_center,
    }
}

/// Preprocessing followed by the grid search.
pub fn fit_data(raw: &DataMatrix, metric: DistanceMetric, model: &ModelArgs) -> Result<Fitted, CliError> {
    let started = Instant::now();
    let prepared = preprocess(raw, options(model))?;
    let preprocess_seconds = started.elapsed().as_secs_f64();
    let spec = GridSpec {
        k_grid: model.k_grid.clone().values(),
        lambda_grid: model.lambda_grid.clone().values(),
        k_max: model.kmax,
        cap: model.cap,
        tol: model.tol,
    };
    let search = grid_search(&prepared.data, metric, &spec)?;
    let mut warnings = prepared.warnings.clone();
    warnings.extend(search.warnings.iter().cloned());
    warnings.extend(search.result.warnings.iter().cloned());
    Ok(Fitted {
        prepared,
        search,
        preprocess_seconds,
        warnings,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(CliError::output(path))
}

fn write_labels(path: &Path, labels: &[usize]) -> Result<(), CliError> {
    let mut out = create(path)?;
    let io = CliError::output(path);
    (|| {
        writeln!(out, "row,label")?;
        for (i, l) in labels.iter().enumerate() {
            writeln!(out, "{i},{l}")?;
        }
        out.flush()
    })()
    .map_err(io)
}

fn write_soft(path: &Path, soft: &cns_core::SoftAssignment) -> Result<(), CliError> {
    let mut out = create(path)?;
    let io = CliError::output(path);
    (|| {
        let header: Vec<String> = (1..=soft.k()).map(|c| format!("p{c}")).collect();
        writeln!(out, "row,{}", header.join(","))?;
        for (i, row) in soft.values().rows().into_iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            writeln!(out, "{i},{}", cells.join(","))?;
        }
        out.flush()
    })()
    .map_err(io)
}

pub fn run(args: &FitArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let (raw, _) = load_csv(&args.input, args.label_column.as_ref(), !args.no_header)?;
    let load_seconds = started.elapsed().as_secs_f64();
    let fitted = fit_data(&raw, args.metric, &args.model)?;
    for w in &fitted.warnings {
        eprintln!("warning: {w}");
    }
    let search = &fitted.search;
    let result = &search.result;

    if let Some(path) = &args.labels_out {
        write_labels(path, result.labels.labels())?;
    }
    if let Some(path) = &args.soft_out {
        write_soft(path, &result.soft)?;
    }
    if let Some(path) = &args.graph_out {
        let w = build_knn_graph(&fitted.prepared.data, search.best.k, args.metric)?;
        let mut out = create(path)?;
        w.write_triplets(&mut out)
            .and_then(|_| out.flush())
            .map_err(CliError::output(path))?;
    }
    let options = options(&args.model);
    let report = Report {
        config: &search.best,
        criterion: &result.report,
        effective_clusters: result.effective_clusters,
        warnings: &fitted.warnings,
        manifest: Manifest {
            input: args.input.display().to_string(),
            label_column: args.label_column.as_ref().map(ToString::to_string),
            n: raw.n(),
            metric: args.metric,
            preprocessing: Preprocessing {
                standardize: true,
                center: options.center,
                pca: fitted.prepared.pca_applied,
                max_pcs: options.max_pcs,
                input_dims: fitted.prepared.input_dims,
                standardized_dims: fitted.prepared.standardized_dims,
                output_dims: fitted.prepared.data.d(),
            },
            k_grid: search.k_grid.clone(),
            lambda_grid: search.lambda_grid.clone(),
            k_max: args.model.kmax,
            cap: args.model.cap,
            tol: args.model.tol,
            candidates: search.candidates.clone(),
            version: env!("CARGO_PKG_VERSION"),
            timings: Timings {
                load_seconds,
                preprocess_seconds: fitted.preprocess_seconds,
                knn_seconds: search.knn_seconds,
                search_seconds: search.search_seconds,
                total_seconds: started.elapsed().as_secs_f64(),
            },
        },
        table: &search.table,
    };
    if let Some(path) = &args.report_out {
        let mut out = create(path)?;
        serde_json::to_writer_pretty(&mut out, &report)
            .map_err(std::io::Error::from)
            .and_then(|_| writeln!(out))
            .and_then(|_| out.flush())
            .map_err(CliError::output(path))?;
    }
    println!(
        "k = {}, lambda = {}, K = {} ({} non-empty), C/R = {:.4}",
        search.best.k, search.best.lambda, search.best.clusters, result.effective_clusters, result.report.score
    );
    Ok(())
}
