//! CSV layout: `id,label,true_label,f0,f1,...,f{D-1}`.
//!
//! The `true_label` column may be omitted entirely, or left empty on every
//! row. Floats are written in shortest round-trip form, so a save/load cycle
//! reproduces features bit for bit.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Dataset, FeatureMatrix};
use crate::error::{Error, Result};

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_dataset(dataset, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_dataset<W: Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    let mut header = vec!["id".to_string(), "label".to_string(), "true_label".to_string()];
    header.extend((0..dataset.dim()).map(|j| format!("f{j}")));
    w.write_record(&header)?;
    let mut record: Vec<String> = Vec::with_capacity(header.len());
    for i in 0..dataset.len() {
        record.clear();
        record.push(dataset.ids()[i].clone());
        record.push(dataset.noisy_labels()[i].to_string());
        record.push(dataset.true_labels().map_or_else(String::new, |t| t[i].to_string()));
        record.extend(dataset.features().row(i).iter().map(|v| v.to_string()));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// Loads a dataset. With `k = None` the class count is inferred as one more
/// than the largest label seen (at least 2).
pub fn load_dataset(path: impl AsRef<Path>, k: Option<usize>) -> Result<Dataset> {
    read_dataset(BufReader::new(File::open(path)?), k)
}

pub fn read_dataset<R: Read>(reader: R, k: Option<usize>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let layout = Layout::from_header(&header)?;

    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut truth: Vec<Option<usize>> = Vec::new();
    let mut data = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        // header is line 1
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Parse {
            row: line,
            column: String::from("*"),
            message: e.to_string(),
        })?;
        if rec.len() != header.len() {
            return Err(Error::Parse {
                row: line,
                column: String::from("*"),
                message: format!("expected {} cells, found {}", header.len(), rec.len()),
            });
        }
        ids.push(rec[0].to_string());
        labels.push(parse_label(&rec[1], line, "label", k)?);
        truth.push(match layout.true_label {
            Some(col) if !rec[col].trim().is_empty() => {
                Some(parse_label(&rec[col], line, "true_label", k)?)
            }
            _ => None,
        });
        for (j, cell) in rec.iter().skip(layout.first_feature).enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                row: line,
                column: format!("f{j}"),
                message: format!("`{cell}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row: line,
                    column: format!("f{j}"),
                    message: format!("non-finite value `{cell}`"),
                });
            }
            data.push(v);
        }
    }

    let present = truth.iter().filter(|t| t.is_some()).count();
    let true_labels = if present == 0 {
        None
    } else if present == truth.len() {
        Some(truth.into_iter().flatten().collect::<Vec<_>>())
    } else {
        let row = truth.iter().position(Option::is_none).unwrap_or(0) + 2;
        return Err(Error::Parse {
            row,
            column: "true_label".into(),
            message: "true_label must be filled on every row or on none".into(),
        });
    };

    let k = k.unwrap_or_else(|| {
        let max = labels
            .iter()
            .chain(true_labels.iter().flatten())
            .copied()
            .max()
            .unwrap_or(0);
        (max + 1).max(2)
    });
    let features = FeatureMatrix::new(labels.len(), layout.dim, data)?;
    Dataset::new(features, labels, true_labels, k, ids)
}

struct Layout {
    true_label: Option<usize>,
    first_feature: usize,
    dim: usize,
}

impl Layout {
    fn from_header(header: &[String]) -> Result<Self> {
        let bad = |col: usize, msg: String| Error::Parse {
            row: 1,
            column: header.get(col).cloned().unwrap_or_default(),
            message: msg,
        };
        if header.first().map(String::as_str) != Some("id") {
            return Err(bad(0, "first column must be `id`".into()));
        }
        if header.get(1).map(String::as_str) != Some("label") {
            return Err(bad(1, "second column must be `label`".into()));
        }
        let (true_label, first_feature) = if header.get(2).map(String::as_str) == Some("true_label") {
            (Some(2), 3)
        } else {
            (None, 2)
        };
        for (j, name) in header.iter().skip(first_feature).enumerate() {
            if *name != format!("f{j}") {
                return Err(bad(first_feature + j, format!("expected feature column `f{j}`")));
            }
        }
        Ok(Self {
            true_label,
            first_feature,
            dim: header.len() - first_feature,
        })
    }
}

fn parse_label(cell: &str, row: usize, column: &str, k: Option<usize>) -> Result<usize> {
    let label: usize = cell.trim().parse().map_err(|_| Error::Parse {
        row,
        column: column.into(),
        message: format!("`{cell}` is not a class id"),
    })?;
    if let Some(k) = k {
        if label >= k {
            return Err(Error::Parse {
                row,
                column: column.into(),
                message: format!("label {label} outside [0, {k})"),
            });
        }
    }
    Ok(label)
}
