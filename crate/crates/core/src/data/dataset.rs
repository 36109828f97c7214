use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Feature vectors, multi-hot labels, and stable item identifiers.
///
/// Identifiers are the row indices 0..N-1; every derived artifact (splits,
/// code files, rankings) refers to items by these ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Matrix,
    pub ids: Vec<u64>,
    pub name: String,
}

const FEATURE_BINARY_MAGIC: &[u8; 4] = b"STBF";

impl Dataset {
    pub fn new(features: Matrix, labels: Matrix, name: impl Into<String>) -> Result<Dataset> {
        let ds = Dataset {
            ids: (0..features.rows() as u64).collect(),
            features,
            labels,
            name: name.into(),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.rows() != self.labels.rows() {
            return Err(Error::data(format!(
                "feature rows {} do not match label rows {}",
                self.features.rows(),
                self.labels.rows()
            )));
        }
        if self.ids.len() != self.features.rows() {
            return Err(Error::data("id count does not match row count"));
        }
        if self.features.cols() == 0 {
            return Err(Error::data("feature dimension must be >= 1"));
        }
        if self.labels.cols() == 0 {
            return Err(Error::data("class count must be >= 1"));
        }
        if self.labels.data().iter().any(|&b| b != 0.0 && b != 1.0) {
            return Err(Error::data("labels must be 0/1"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn class_count(&self) -> usize {
        self.labels.cols()
    }

    /// New dataset from the given rows, re-identified 0..n-1.
    pub fn select(&self, rows: &[usize], name: impl Into<String>) -> Result<Dataset> {
        Dataset::new(
            self.features.select_rows(rows),
            self.labels.select_rows(rows),
            name,
        )
    }

    pub fn save_features_text(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "D={}", self.feature_dim())?;
        for i in 0..self.len() {
            let row: Vec<String> = self.features.row(i).iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_labels_text(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "C={}", self.class_count())?;
        for i in 0..self.len() {
            let bits: String = self
                .labels
                .row(i)
                .iter()
                .map(|&b| if b == 1.0 { '1' } else { '0' })
                .collect();
            writeln!(w, "{bits}")?;
        }
        w.flush()?;
        Ok(())
    }

    /// Binary feature container: magic "STBF", u64 n, u32 D, little-endian
    /// f64 values row-major.
    pub fn save_features_binary(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(FEATURE_BINARY_MAGIC)?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        w.write_all(&(self.feature_dim() as u32).to_le_bytes())?;
        for v in self.features.data() {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Load a dataset from a feature file and a label file. The feature file may
/// be the text format ("D=<int>" header) or the binary container (sniffed by
/// magic).
pub fn load(features_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let features = load_features(features_path)?;
    let labels = load_labels(labels_path)?;
    if features.rows() != labels.rows() {
        return Err(Error::data(format!(
            "feature file has {} rows but label file has {}",
            features.rows(),
            labels.rows()
        )));
    }
    let name = features_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    Dataset::new(features, labels, name)
}

pub fn load_features(path: &Path) -> Result<Matrix> {
    let mut file = File::open(path)?;
    let mut magic = [0u8; 4];
    let n_read = file.read(&mut magic)?;
    if n_read == 4 && &magic == FEATURE_BINARY_MAGIC {
        return load_features_binary(file);
    }
    drop(file);
    load_features_text(path)
}

fn load_features_binary(mut file: File) -> Result<Matrix> {
    let mut header = [0u8; 12];
    file.read_exact(&mut header)
        .map_err(|_| Error::Format("binary feature file truncated".into()))?;
    let n = u64::from_le_bytes(header[0..8].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let mut raw = vec![0u8; n * d * 8];
    file.read_exact(&mut raw)
        .map_err(|_| Error::Format("binary feature file truncated".into()))?;
    let data: Vec<f64> = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Matrix::from_vec(n, d, data)
        .map_err(|e| Error::data(format!("binary feature file invalid: {e}")))
}

fn load_features_text(path: &Path) -> Result<Matrix> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::data("feature file is empty"))?;
    let header = header?;
    let dim: usize = header
        .strip_prefix("D=")
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| Error::data_at(1, format!("expected 'D=<int>' header, got '{header}'")))?;
    if dim == 0 {
        return Err(Error::data_at(1, "feature dimension must be >= 1"));
    }
    let mut data = Vec::new();
    let mut rows = 0;
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut count = 0;
        for tok in line.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| {
                Error::data_at(line_no, format!("unparseable feature value '{tok}'"))
            })?;
            if !v.is_finite() {
                return Err(Error::data_at(line_no, "non-finite feature value"));
            }
            data.push(v);
            count += 1;
        }
        if count != dim {
            return Err(Error::data_at(
                line_no,
                format!("expected {dim} values, found {count}"),
            ));
        }
        rows += 1;
    }
    Matrix::from_vec(rows, dim, data)
}

pub fn load_labels(path: &Path) -> Result<Matrix> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::data("label file is empty"))?;
    let header = header?;
    let classes: usize = header
        .strip_prefix("C=")
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| Error::data_at(1, format!("expected 'C=<int>' header, got '{header}'")))?;
    if classes == 0 {
        return Err(Error::data_at(1, "class count must be >= 1"));
    }
    let mut data = Vec::new();
    let mut rows = 0;
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line?;
        let bits = line.trim();
        if bits.is_empty() {
            continue;
        }
        if bits.len() != classes {
            return Err(Error::data_at(
                line_no,
                format!("expected {classes} label bits, found {}", bits.len()),
            ));
        }
        for ch in bits.chars() {
            match ch {
                '0' => data.push(0.0),
                '1' => data.push(1.0),
                other => {
                    return Err(Error::data_at(
                        line_no,
                        format!("label bits must be 0/1, found '{other}'"),
                    ))
                }
            }
        }
        rows += 1;
    }
    Matrix::from_vec(rows, classes, data)
}
