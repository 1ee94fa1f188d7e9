use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use cns_core::data::load_csv;
use cns_core::eval::evaluate;
use cns_core::{DistanceMetric, MetricReport};

use crate::fit::fit_data;
use crate::{CliError, SweepArgs};

const METRICS: [(DistanceMetric, &str); 2] = [(DistanceMetric::Euclidean, "CNSe"), (DistanceMetric::Cosine, "CNSc")];

struct Row {
    dataset: String,
    n: Option<usize>,
    /// One entry per metric, in `METRICS` order.
    cells: Vec<Result<MetricReport, String>>,
}

fn run_dataset(path: &Path, args: &SweepArgs) -> Row {
    let dataset = path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    let loaded = load_csv(path, Some(&args.label_column), true).and_then(|(data, labels)| {
        labels
            .map(|l| (data, l))
            .ok_or_else(|| cns_core::CnsError::MissingLabelColumn(args.label_column.to_string()))
    });
    let (data, truth) = match loaded {
        Ok(v) => v,
        Err(e) => {
            log::warn!("{dataset}: {e}");
            let msg = e.to_string();
            return Row {
                dataset,
                n: None,
                cells: METRICS.iter().map(|_| Err(msg.clone())).collect(),
            };
        }
    };
    let cells = METRICS
        .iter()
        .map(|&(metric, _)| {
            fit_data(&data, metric, &args.model)
                .map_err(|e| e.to_string())
                .and_then(|f| evaluate(&truth, &f.search.result.labels).map_err(|e| e.to_string()))
                .inspect_err(|e| log::warn!("{dataset} ({metric}): {e}"))
        })
        .collect();
    Row {
        dataset,
        n: Some(data.n()),
        cells,
    }
}

fn csv_files(args: &SweepArgs) -> Result<Vec<PathBuf>, CliError> {
    let entries = std::fs::read_dir(&args.dir).map_err(|source| cns_core::CnsError::Io {
        path: args.dir.clone(),
        source,
    })?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")))
        .collect();
    files.sort();
    Ok(files)
}

fn header() -> Vec<String> {
    let mut cols = vec!["dataset".to_string(), "n".to_string()];
    for (_, name) in METRICS {
        for m in ["AMI", "ARI", "ACC"] {
            cols.push(format!("{name}_{m}"));
        }
    }
    cols.push("error".into());
    cols
}

fn write_csv(rows: &[Row], out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "{}", header().join(","))?;
    for row in rows {
        let mut cells = vec![row.dataset.clone(), row.n.map_or(String::new(), |n| n.to_string())];
        let mut errors = Vec::new();
        for cell in &row.cells {
            match cell {
                Ok(m) => cells.extend([m.ami, m.ari, m.accuracy].iter().map(|v| format!("{v:?}"))),
                Err(e) => {
                    cells.extend(["", "", ""].map(String::from));
                    if !errors.contains(e) {
                        errors.push(e.clone());
                    }
                }
            }
        }
        let joined = errors.join("; ").replace('"', "'");
        cells.push(if joined.is_empty() { joined } else { format!("\"{joined}\"") });
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

fn print_table(rows: &[Row]) {
    let width = rows.iter().map(|r| r.dataset.len()).max().unwrap_or(0).max(7);
    let mut line = format!("{:<width$} {:>6}", "dataset", "n");
    for col in &header()[2..header().len() - 1] {
        line.push_str(&format!(" {col:>9}"));
    }
    println!("{line}");
    for row in rows {
        let mut line = format!("{:<width$} {:>6}", row.dataset, row.n.map_or("-".into(), |n| n.to_string()));
        for cell in &row.cells {
            match cell {
                Ok(m) => {
                    for v in [m.ami, m.ari, m.accuracy] {
                        line.push_str(&format!(" {:>9.2}", 100.0 * v));
                    }
                }
                Err(_) => line.push_str(&format!(" {:>9} {:>9} {:>9}", "ERR", "ERR", "ERR")),
            }
        }
        println!("{line}");
    }
}

pub fn run(args: &SweepArgs) -> Result<(), CliError> {
    let files = csv_files(args)?;
    if files.is_empty() {
        eprintln!("warning: no CSV files in {}", args.dir.display());
    }
    let rows: Vec<Row> = files.iter().map(|p| run_dataset(p, args)).collect();
    for row in &rows {
        for (cell, (_, name)) in row.cells.iter().zip(METRICS) {
            if let Err(e) = cell {
                eprintln!("warning: {} ({name}) failed: {e}", row.dataset);
            }
        }
    }
    print_table(&rows);
    if let Some(path) = &args.out {
        let mut out = BufWriter::new(File::create(path).map_err(CliError::output(path))?);
        write_csv(&rows, &mut out)
            .and_then(|_| out.flush())
            .map_err(CliError::output(path))?;
    }
    Ok(())
}
