//! Per-sample class probabilities: `id,p0,p1,...,p{k-1}`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::selection::check_distribution;

pub fn write_predictions<W: Write>(ids: &[String], predictions: &[Vec<f64>], writer: W) -> Result<()> {
    if ids.len() != predictions.len() {
        return Err(Error::validation(format!(
            "{} ids for {} prediction rows",
            ids.len(),
            predictions.len()
        )));
    }
    let k = predictions.first().map_or(0, Vec::len);
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    let mut header = vec!["id".to_string()];
    header.extend((0..k).map(|c| format!("p{c}")));
    w.write_record(&header)?;
    for (id, p) in ids.iter().zip(predictions) {
        if p.len() != k {
            return Err(Error::validation(format!("prediction for `{id}` has {} entries, expected {k}", p.len())));
        }
        let mut rec = vec![id.clone()];
        rec.extend(p.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_predictions(ids: &[String], predictions: &[Vec<f64>], path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_predictions(ids, predictions, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Reads predictions and orders them like `ids`. Every id must appear once,
/// and every row must be a distribution over `k` classes.
pub fn read_predictions<R: Read>(reader: R, ids: &[String], k: usize) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    let expected: Vec<String> = std::iter::once("id".to_string())
        .chain((0..k).map(|c| format!("p{c}")))
        .collect();
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::Parse {
            row: 1,
            column: "*".into(),
            message: format!("expected header `{}`", expected.join(",")),
        });
    }
    let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut out: Vec<Option<Vec<f64>>> = vec![None; ids.len()];
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Parse {
            row: line,
            column: "*".into(),
            message: e.to_string(),
        })?;
        let slot = *index.get(&rec[0]).ok_or_else(|| Error::Parse {
            row: line,
            column: "id".into(),
            message: format!("unknown id `{}`", &rec[0]),
        })?;
        if out[slot].is_some() {
            return Err(Error::Parse {
                row: line,
                column: "id".into(),
                message: format!("duplicate id `{}`", &rec[0]),
            });
        }
        let p = rec
            .iter()
            .skip(1)
            .enumerate()
            .map(|(c, cell)| {
                cell.trim().parse::<f64>().map_err(|_| Error::Parse {
                    row: line,
                    column: format!("p{c}"),
                    message: format!("`{cell}` is not a number"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        check_distribution(&p, &format!("prediction on line {line}"))?;
        out[slot] = Some(p);
    }
    out.into_iter()
        .zip(ids)
        .map(|(p, id)| p.ok_or_else(|| Error::validation(format!("no prediction for id `{id}`"))))
        .collect()
}

pub fn load_predictions(path: impl AsRef<Path>, ids: &[String], k: usize) -> Result<Vec<Vec<f64>>> {
    read_predictions(BufReader::new(File::open(path)?), ids, k)
}
