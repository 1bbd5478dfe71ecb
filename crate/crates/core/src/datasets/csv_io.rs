use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, Sample};
use crate::error::{CoreError, Result};

/// Which columns of a CSV file hold features, the target and (optionally) the category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    pub feature_columns: Vec<String>,
    pub target_column: String,
    #[serde(default)]
    pub category_column: Option<String>,
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| CoreError::Ingestion {
            row: 1,
            column: name.to_string(),
            message: "column missing from header".into(),
        })
}

/// Reads one sample per data row; ids follow file order starting at 0.
///
/// Row numbers in errors are file line numbers (the header is line 1).
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    let path = path.as_ref();
    if schema.feature_columns.is_empty() {
        return Err(CoreError::Config("schema lists no feature columns".into()));
    }
    let file = std::fs::File::open(path).map_err(|e| CoreError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| CoreError::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?
        .clone();
    let feature_idx = schema
        .feature_columns
        .iter()
        .map(|c| column_index(&headers, c))
        .collect::<Result<Vec<_>>>()?;
    let target_idx = column_index(&headers, &schema.target_column)?;
    let category_idx = schema
        .category_column
        .as_deref()
        .map(|c| column_index(&headers, c))
        .transpose()?;

    let parse = |record: &csv::StringRecord, idx: usize, name: &str, row: usize| -> Result<f64> {
        let cell = record.get(idx).unwrap_or("").trim();
        match cell.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(CoreError::Ingestion {
                row,
                column: name.to_string(),
                message: format!("cannot parse `{cell}` as a finite real"),
            }),
        }
    };

    let mut samples = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CoreError::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let row = record.position().map_or(i + 2, |p| p.line() as usize);
        if record.len() != headers.len() {
            return Err(CoreError::Ingestion {
                row,
                column: String::new(),
                message: format!(
                    "row has {} cells, header has {}",
                    record.len(),
                    headers.len()
                ),
            });
        }
        let features = feature_idx
            .iter()
            .zip(&schema.feature_columns)
            .map(|(&idx, name)| parse(&record, idx, name, row))
            .collect::<Result<Vec<_>>>()?;
        let target = parse(&record, target_idx, &schema.target_column, row)?;
        let category = category_idx.map(|idx| record[idx].to_string());
        samples.push(Sample {
            id: i as u64,
            features,
            target,
            category,
        });
    }
    if samples.is_empty() {
        return Err(CoreError::Ingestion {
            row: 2,
            column: String::new(),
            message: "file has no data rows".into(),
        });
    }
    let name = path.file_stem().map_or_else(
        || "dataset".to_string(),
        |s| s.to_string_lossy().into_owned(),
    );
    Dataset::new(name, schema.feature_columns.clone(), samples)
}

/// Writes `dataset` with its feature names, a `target` column and, when every
/// sample is labelled, a `category` column. Returns the schema that reads it back.
pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<CsvSchema> {
    let path = path.as_ref();
    let with_category = dataset.has_categories();
    let mut writer = csv::Writer::from_path(path).map_err(|e| CoreError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut header: Vec<String> = dataset.feature_names().to_vec();
    header.push("target".into());
    if with_category {
        header.push("category".into());
    }
    let to_err = |e: csv::Error| CoreError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    writer.write_record(&header).map_err(to_err)?;
    for s in dataset.samples() {
        // `Display` for f64 is the shortest string that parses back to the same value.
        let mut row: Vec<String> = s.features.iter().map(|v| v.to_string()).collect();
        row.push(s.target.to_string());
        if with_category {
            row.push(s.category.clone().unwrap_or_default());
        }
        writer.write_record(&row).map_err(to_err)?;
    }
    writer.flush().map_err(|e| CoreError::io(path, e))?;
    Ok(CsvSchema {
        feature_columns: dataset.feature_names().to_vec(),
        target_column: "target".into(),
        category_column: with_category.then(|| "category".into()),
    })
}
