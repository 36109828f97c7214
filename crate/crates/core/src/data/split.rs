use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Rng;

use super::Dataset;

/// Rng stream id for query/database splitting.
const STREAM_SPLIT: u64 = 102;

/// Disjoint query/database partition of a dataset, by item id.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub database: Vec<u64>,
    pub queries: Vec<u64>,
    pub seed: u64,
}

impl Split {
    pub fn validate(&self, dataset_len: usize) -> Result<()> {
        if self.database.is_empty() || self.queries.is_empty() {
            return Err(Error::Config("split sides must both be nonempty".into()));
        }
        let mut seen = vec![false; dataset_len];
        for &id in self.database.iter().chain(&self.queries) {
            let idx = id as usize;
            if idx >= dataset_len {
                return Err(Error::data(format!("split id {id} out of range")));
            }
            if seen[idx] {
                return Err(Error::data(format!("split repeats id {id}")));
            }
            seen[idx] = true;
        }
        Ok(())
    }

    /// Text format: "seed=<u64>" then one "role,id" line per item, database
    /// first, ids ascending; canonical bytes for a given split.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "seed={}", self.seed)?;
        for id in &self.database {
            writeln!(w, "db,{id}")?;
        }
        for id in &self.queries {
            writeln!(w, "query,{id}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Split> {
        let reader = BufReader::new(File::open(path)?);
        let mut lines = reader.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::data("split file is empty"))?;
        let header = header?;
        let seed: u64 = header
            .strip_prefix("seed=")
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| Error::data_at(1, "expected 'seed=<u64>' header"))?;
        let mut database = Vec::new();
        let mut queries = Vec::new();
        for (idx, line) in lines {
            let line_no = idx + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let (role, id) = line
                .split_once(',')
                .ok_or_else(|| Error::data_at(line_no, "expected 'role,id'"))?;
            let id: u64 = id
                .trim()
                .parse()
                .map_err(|_| Error::data_at(line_no, format!("bad id '{id}'")))?;
            match role.trim() {
                "db" => database.push(id),
                "query" => queries.push(id),
                other => {
                    return Err(Error::data_at(
                        line_no,
                        format!("unknown split role '{other}'"),
                    ))
                }
            }
        }
        if database.is_empty() || queries.is_empty() {
            return Err(Error::data("split file must list both roles"));
        }
        Ok(Split {
            database,
            queries,
            seed,
        })
    }
}

/// Uniform random disjoint split; `query_fraction` of items (rounded down,
/// at least one, never all) become queries. Reproducible per seed; both
/// sides are emitted in ascending id order.
pub fn split(dataset: &Dataset, query_fraction: f64, seed: u64) -> Result<Split> {
    if !(query_fraction > 0.0 && query_fraction < 1.0) {
        return Err(Error::Config(format!(
            "query_fraction must lie strictly between 0 and 1, got {query_fraction}"
        )));
    }
    let n = dataset.len();
    let n_query = (query_fraction * n as f64).floor() as usize;
    if n_query == 0 || n_query >= n {
        return Err(Error::Config(format!(
            "query_fraction {query_fraction} leaves an empty side for {n} items"
        )));
    }
    let mut rng = Rng::with_stream(seed, STREAM_SPLIT);
    let mut ids: Vec<u64> = dataset.ids.clone();
    rng.shuffle(&mut ids);
    let mut queries: Vec<u64> = ids[..n_query].to_vec();
    let mut database: Vec<u64> = ids[n_query..].to_vec();
    queries.sort_unstable();
    database.sort_unstable();
    Ok(Split {
        database,
        queries,
        seed,
    })
}
