//! Per-class grouping, cosine affinity matrices and their row sums.

use std::io::Write;

use crate::dataset::FeatureMatrix;
use crate::error::{Error, Result};

/// Sample indices sharing one observed label, in dataset order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassGroup {
    pub class_id: usize,
    pub members: Vec<usize>,
}

/// Partitions sample indices by label. Classes with no samples are omitted;
/// groups come out in ascending class order.
pub fn group_by_label(labels: &[usize]) -> Vec<ClassGroup> {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut members = vec![Vec::new(); k];
    for (i, &y) in labels.iter().enumerate() {
        members[y].push(i);
    }
    members
        .into_iter()
        .enumerate()
        .filter(|(_, m)| !m.is_empty())
        .map(|(class_id, members)| ClassGroup { class_id, members })
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// Cosine similarity clamped to `[-1, 1]`.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::validation(format!(
            "cosine of vectors with lengths {} and {}",
            u.len(),
            v.len()
        )));
    }
    let nu = norm(u);
    if nu == 0.0 {
        return Err(Error::domain("cosine: first argument has zero norm"));
    }
    let nv = norm(v);
    if nv == 0.0 {
        return Err(Error::domain("cosine: second argument has zero norm"));
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Unit-normalized copy of each listed row. Fails on the first zero row.
pub(crate) fn normalized_rows(
    features: &FeatureMatrix,
    members: &[usize],
    ids: Option<&[String]>,
) -> Result<Vec<Vec<f64>>> {
    members
        .iter()
        .map(|&i| {
            let row = features.row(i);
            let n = norm(row);
            if n == 0.0 || !n.is_finite() {
                let who = ids.map_or_else(|| format!("index {i}"), |ids| format!("`{}`", ids[i]));
                return Err(Error::domain(format!("sample {who} has a zero feature vector")));
            }
            Ok(row.iter().map(|x| x / n).collect())
        })
        .collect()
}

/// Affinity matrix of one label group and its row sums.
///
/// Row sums include the diagonal self-similarity; the shift is the same for
/// every row and does not affect which mixture component has the higher mean.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityGroup {
    pub class_id: usize,
    pub member_indices: Vec<usize>,
    /// Row-major `n x n`.
    pub matrix: Vec<f64>,
    pub row_sums: Vec<f64>,
}

impl AffinityGroup {
    pub fn len(&self) -> usize {
        self.member_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.member_indices.is_empty()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.matrix[row * self.len() + col]
    }

    /// Writes the matrix as CSV with sample ids on both axes.
    pub fn write_csv<W: Write>(&self, ids: &[String], mut w: W) -> Result<()> {
        let names: Vec<&str> = self.member_indices.iter().map(|&i| ids[i].as_str()).collect();
        writeln!(w, "id,{}", names.join(","))?;
        let n = self.len();
        for (r, name) in names.iter().enumerate() {
            let cells: Vec<String> = self.matrix[r * n..(r + 1) * n].iter().map(f64::to_string).collect();
            writeln!(w, "{name},{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// Builds the cosine affinity matrix for `members` (global row indices into
/// `features`). `ids`, when given, is used to name offending samples.
pub fn affinity_group(
    features: &FeatureMatrix,
    ids: Option<&[String]>,
    class_id: usize,
    members: &[usize],
) -> Result<AffinityGroup> {
    let n = members.len();
    if n < 2 {
        return Err(Error::GroupTooSmall { class_id, size: n });
    }
    let unit = normalized_rows(features, members, ids)?;
    let mut matrix = vec![0.0; n * n];
    for j in 0..n {
        for z in j..n {
            let c = dot(&unit[j], &unit[z]).clamp(-1.0, 1.0);
            matrix[j * n + z] = c;
            matrix[z * n + j] = c;
        }
    }
    let row_sums = matrix.chunks_exact(n).map(|r| r.iter().sum()).collect();
    Ok(AffinityGroup {
        class_id,
        member_indices: members.to_vec(),
        matrix,
        row_sums,
    })
}
