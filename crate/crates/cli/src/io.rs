//! CSV datasets, model files and report output.

use std::collections::HashSet;
use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};
use setvalued::gaussian::ModelState;
use setvalued::{GaussianCategoryModel, LabelMap, LabeledRow};

use crate::error::{CliError, CliResult};

const LABEL: &str = "label";
const BLOCK: &str = "block";

/// A CSV file split into feature columns and optional label/block columns.
pub struct Table {
    pub features: Vec<String>,
    pub rows: Vec<TableRow>,
}

pub struct TableRow {
    pub line: u64,
    pub label: Option<String>,
    pub block: Option<String>,
    pub values: Vec<f64>,
}

fn reader(path: &Path) -> CliResult<csv::Reader<File>> {
    let file = File::open(path).map_err(CliError::io(format!("opening {}", path.display())))?;
    Ok(csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn schema(path: &Path, line: u64, message: impl std::fmt::Display) -> CliError {
    CliError::Schema(format!("{}:{line}: {message}", path.display()))
}

/// Reads a headered CSV. Every column other than `label` and `block` must be
/// numeric.
pub fn read_table(path: &Path) -> CliResult<Table> {
    let mut rdr = reader(path)?;
    let header_line = rdr.position().line().max(1);
    let headers = rdr
        .headers()
        .map_err(|e| schema(path, header_line, format!("unreadable header: {e}")))?
        .clone();
    let header_line = headers.position().map_or(1, |p| p.line());
    let mut seen = HashSet::new();
    for name in &headers {
        if name.is_empty() {
            return Err(schema(path, header_line, "empty column name"));
        }
        if !seen.insert(name) {
            return Err(schema(path, header_line, format!("duplicate column {name:?}")));
        }
    }
    let label_col = headers.iter().position(|h| h == LABEL);
    let block_col = headers.iter().position(|h| h == BLOCK);
    let feature_cols: Vec<usize> = (0..headers.len())
        .filter(|&j| Some(j) != label_col && Some(j) != block_col)
        .collect();
    if feature_cols.is_empty() {
        return Err(schema(path, header_line, "no feature columns"));
    }

    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            schema(path, line, e)
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let text = |col: Option<usize>| -> CliResult<Option<String>> {
            match col {
                None => Ok(None),
                Some(j) if record[j].is_empty() => Err(schema(path, line, format!("empty {:?}", &headers[j]))),
                Some(j) => Ok(Some(record[j].to_string())),
            }
        };
        let values = feature_cols
            .iter()
            .map(|&j| match record[j].parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(schema(
                    path,
                    line,
                    format!("column {:?}: {:?} is not a finite number", &headers[j], &record[j]),
                )),
            })
            .collect::<CliResult<Vec<f64>>>()?;
        rows.push(TableRow {
            line,
            label: text(label_col)?,
            block: text(block_col)?,
            values,
        });
    }
    if rows.is_empty() {
        return Err(schema(path, header_line, "no data rows"));
    }
    Ok(Table {
        features: feature_cols.iter().map(|&j| headers[j].to_string()).collect(),
        rows,
    })
}

/// Reads a labeled training set; the `label` column is required.
pub fn read_training(path: &Path) -> CliResult<(Vec<String>, Vec<LabeledRow>)> {
    let table = read_table(path)?;
    let mut rows = Vec::with_capacity(table.rows.len());
    for row in table.rows {
        let label = row
            .label
            .ok_or_else(|| schema(path, row.line, format!("missing required column {LABEL:?}")))?;
        rows.push(LabeledRow {
            label,
            block: row.block,
            features: row.values,
        });
    }
    Ok((table.features, rows))
}

/// Fitted model plus everything needed to interpret it.
#[derive(Serialize, Deserialize)]
pub struct ModelFile {
    pub config: serde_json::Value,
    pub features: Vec<String>,
    pub labels: LabelMap,
    pub model: ModelState,
}

impl ModelFile {
    pub fn load(path: &Path) -> CliResult<(Self, GaussianCategoryModel)> {
        let file = File::open(path).map_err(CliError::io(format!("opening {}", path.display())))?;
        let parsed: Self = serde_json::from_reader(std::io::BufReader::new(file))
            .map_err(|e| CliError::Schema(format!("{}: invalid model file: {e}", path.display())))?;
        if parsed.labels.labels.len() != parsed.model.posteriors.len() {
            return Err(CliError::Schema(format!(
                "{}: label map does not match the model",
                path.display()
            )));
        }
        let model = GaussianCategoryModel::from_state(parsed.model.clone())?;
        Ok((parsed, model))
    }
}

/// `# config: {...}` comment line embedded at the top of CSV outputs.
pub fn config_comment(config: &serde_json::Value) -> String {
    format!("# config: {config}\n")
}

pub fn write_text(path: &Path, body: &str) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(CliError::io(format!("creating {}", parent.display())))?;
    }
    std::fs::write(path, body).map_err(CliError::io(format!("writing {}", path.display())))
}

/// Renders rows of string cells as CSV.
pub fn csv_string(header: &[String], rows: &[Vec<String>]) -> CliResult<String> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| CliError::Other(format!("formatting CSV: {e}"));
    wtr.write_record(header).map_err(fail)?;
    for row in rows {
        wtr.write_record(row).map_err(fail)?;
    }
    let bytes = wtr
        .into_inner()
        .map_err(|e| CliError::Other(format!("formatting CSV: {e}")))?;
    String::from_utf8(bytes).map_err(|e| CliError::Other(e.to_string()))
}
