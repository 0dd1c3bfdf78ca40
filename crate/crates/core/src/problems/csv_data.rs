use std::path::Path;

use rand::seq::SliceRandom;

use super::{AgentDataset, Shard};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::{stream, DATA};
use crate::Real;

/// Reads a numeric CSV (last column is the label) and deals the first
/// `samples_total` rows round-robin into `agents` equal shards.
///
/// An optional header is detected by a non-numeric first row. Labels may be
/// `{0, 1}` or `{−1, +1}` and are mapped to `{−1, +1}`. With `shuffle_seed`
/// set, rows are shuffled on the seeded data stream before the cut. Feature
/// columns are standardized over the retained rows.
pub fn load_csv_partitioned<T: Real>(
    path: impl AsRef<Path>,
    agents: usize,
    samples_total: usize,
    shuffle_seed: Option<u64>,
) -> Result<AgentDataset<T>> {
    if agents == 0 || samples_total == 0 {
        return Err(Error::param("partition", "agents and samples_total must be positive"));
    }
    if !samples_total.is_multiple_of(agents) {
        return Err(Error::param(
            "samples_total",
            format!("{samples_total} samples are not divisible by {agents} agents"),
        ));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (k, record) in reader.records().enumerate() {
        let record = record?;
        let line = record.position().map_or(k + 1, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if k == 0 => continue,
            Err(e) => return Err(Error::Data { line, reason: format!("non-numeric field ({e})") }),
        };
        if values.len() < 2 {
            return Err(Error::Data { line, reason: "need at least one feature and a label".into() });
        }
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(Error::Data { line, reason: format!("expected {w} fields, found {}", values.len()) })
            }
            _ => {}
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data { line, reason: "non-finite value".into() });
        }
        rows.push(values);
    }
    if rows.len() < samples_total {
        return Err(Error::param(
            "samples_total",
            format!("requested {samples_total} samples but the file has {}", rows.len()),
        ));
    }
    if let Some(seed) = shuffle_seed {
        rows.shuffle(&mut stream(seed, DATA));
    }
    rows.truncate(samples_total);

    let dim = rows[0].len() - 1;
    let raw_labels: Vec<f64> = rows.iter().map(|r| r[dim]).collect();
    let zero_one = raw_labels.iter().all(|&y| y == 0.0 || y == 1.0);
    let signed = raw_labels.iter().all(|&y| y == -1.0 || y == 1.0);
    if !zero_one && !signed {
        return Err(Error::param("labels", "labels must be all in {0, 1} or all in {-1, +1}"));
    }
    let labels: Vec<f64> = raw_labels.iter().map(|&y| if y == 1.0 { 1.0 } else { -1.0 }).collect();

    let count = rows.len() as f64;
    for col in 0..dim {
        let mean = rows.iter().map(|r| r[col]).sum::<f64>() / count;
        let var = rows.iter().map(|r| (r[col] - mean).powi(2)).sum::<f64>() / count;
        let scale = if var > 0.0 { 1.0 / var.sqrt() } else { 1.0 };
        for r in &mut rows {
            r[col] = (r[col] - mean) * scale;
        }
    }

    let per_agent = samples_total / agents;
    let mut shard_rows: Vec<Vec<T>> = vec![Vec::with_capacity(per_agent * dim); agents];
    let mut shard_labels: Vec<Vec<T>> = vec![Vec::with_capacity(per_agent); agents];
    for (k, (row, y)) in rows.iter().zip(&labels).enumerate() {
        let a = k % agents;
        shard_rows[a].extend(row[..dim].iter().map(|&v| T::lit(v)));
        shard_labels[a].push(T::lit(*y));
    }
    let shards = shard_rows
        .into_iter()
        .zip(shard_labels)
        .map(|(data, labels)| Shard { features: Matrix::from_vec(per_agent, dim, data), labels })
        .collect();
    AgentDataset::new(shards, true)
}
