//! CSV ingestion and export. One recording per file; the header row names
//! the channels and the schema picks out input/output columns.

use std::path::Path;

use crate::error::{Error, Result};
use crate::numkit::Matrix;
use crate::scalar::{lit, to_f64, Scalar};

use super::SequenceDataset;

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize, PartialEq)]
pub struct CsvSchema {
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    #[serde(default = "default_period")]
    pub sample_period: f64,
}

fn default_period() -> f64 {
    1.0
}

/// Loads one recording per file, in path order.
pub fn load_csv<T: Scalar>(paths: &[impl AsRef<Path>], schema: &CsvSchema) -> Result<SequenceDataset<T>> {
    let mut recordings = Vec::with_capacity(paths.len());
    for path in paths {
        recordings.push(load_one(path.as_ref(), schema)?);
    }
    Ok(SequenceDataset {
        input_names: schema.inputs.clone(),
        output_names: schema.outputs.clone(),
        sample_period: schema.sample_period,
        recordings,
    })
}

fn load_one<T: Scalar>(path: &Path, schema: &CsvSchema) -> Result<Matrix<T>> {
    let file_label = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::data(&file_label, None, format!("cannot open: {e}")))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::data(&file_label, None, format!("cannot read header: {e}")))?
        .clone();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::data(&file_label, None, format!("missing column '{name}'")))
    };
    let mut columns = Vec::with_capacity(schema.inputs.len() + schema.outputs.len());
    for name in schema.inputs.iter().chain(&schema.outputs) {
        columns.push((name.clone(), find(name)?));
    }
    let mut data: Vec<T> = Vec::new();
    let mut rows = 0usize;
    for (idx, record) in reader.records().enumerate() {
        let row_label = idx + 2; // 1-based, after the header line
        let record =
            record.map_err(|e| Error::data(&file_label, Some(row_label), format!("{e}")))?;
        for (name, col) in &columns {
            let cell = record.get(*col).ok_or_else(|| {
                Error::data(&file_label, Some(row_label), format!("missing cell for '{name}'"))
            })?;
            let v: f64 = cell.parse().map_err(|_| {
                Error::data(
                    &file_label,
                    Some(row_label),
                    format!("cannot parse '{cell}' in column '{name}' as a number"),
                )
            })?;
            if !v.is_finite() {
                return Err(Error::data(
                    &file_label,
                    Some(row_label),
                    format!("non-finite value in column '{name}'"),
                ));
            }
            data.push(lit::<T>(v));
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::data(&file_label, None, "file has no data rows"));
    }
    Matrix::from_vec(rows, columns.len(), data)
}

/// Writes one recording with a header row; round-trips through `load_csv`.
pub fn write_recording_csv<T: Scalar>(
    path: &Path,
    input_names: &[String],
    output_names: &[String],
    recording: &Matrix<T>,
) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| Error::data(path.display().to_string(), None, format!("cannot create: {e}")))?;
    let header: Vec<&str> = input_names
        .iter()
        .chain(output_names)
        .map(|s| s.as_str())
        .collect();
    writer
        .write_record(&header)
        .map_err(|e| Error::data(path.display().to_string(), None, format!("{e}")))?;
    for i in 0..recording.rows() {
        let row: Vec<String> = recording
            .row(i)
            .iter()
            .map(|v| format!("{:?}", to_f64(*v)))
            .collect();
        writer
            .write_record(&row)
            .map_err(|e| Error::data(path.display().to_string(), Some(i + 2), format!("{e}")))?;
    }
    writer
        .flush()
        .map_err(|e| Error::data(path.display().to_string(), None, format!("{e}")))?;
    Ok(())
}
