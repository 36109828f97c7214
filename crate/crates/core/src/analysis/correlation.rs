use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::retrieval::{BinaryCodeSet, GroundTruth};

/// Pearson correlations between class code centroids.
///
/// Each class's centroid is the mean bit vector of its member codes; entry
/// (i, j) correlates centroids i and j across the bit positions. Classes
/// whose centroid is constant across positions have undefined correlations;
/// their rows and columns are reported as 0 and the class ids are flagged.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelCorrelation {
    pub matrix: Matrix,
    pub flagged: Vec<usize>,
    /// Median of absolute off-diagonal values.
    pub median_abs: f64,
    /// Mean of absolute off-diagonal values.
    pub mean_abs: f64,
    /// Population standard deviation of absolute off-diagonal values.
    pub std_abs: f64,
}

impl LabelCorrelation {
    pub fn write_matrix_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        let c = self.matrix.rows();
        let header: Vec<String> = (0..c).map(|j| format!("class_{j}")).collect();
        writeln!(w, "{}", header.join(","))?;
        for i in 0..c {
            let row: Vec<String> = self.matrix.row(i).iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn label_correlation(codes: &BinaryCodeSet, gt: &GroundTruth) -> Result<LabelCorrelation> {
    let classes = gt.classes();
    let bits = codes.code_bits();
    // class membership by code-set row, via item ids
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for row in 0..codes.len() {
        let id = codes.id(row) as usize;
        if id >= gt.items() {
            return Err(Error::data(format!(
                "code item id {id} outside ground truth with {} items",
                gt.items()
            )));
        }
        for (c, &bit) in gt.labels().row(id).iter().enumerate() {
            if bit == 1.0 {
                members[c].push(row);
            }
        }
    }
    for (c, m) in members.iter().enumerate() {
        if m.len() < 2 {
            return Err(Error::Degenerate(format!(
                "class {c} has {} member items; correlations need at least 2 per class",
                m.len()
            )));
        }
    }

    // centroids: mean bit vector per class
    let mut centroids = Matrix::zeros(classes, bits);
    for (c, rows) in members.iter().enumerate() {
        for &row in rows {
            for (k, bit) in codes.unpack(row).into_iter().enumerate() {
                centroids[(c, k)] += bit;
            }
        }
        let n = rows.len() as f64;
        for k in 0..bits {
            centroids[(c, k)] /= n;
        }
    }

    // center each centroid across bit positions
    let mut centered = centroids.clone();
    let mut norms = vec![0.0; classes];
    let mut flagged = Vec::new();
    for c in 0..classes {
        let mean = centroids.row(c).iter().sum::<f64>() / bits as f64;
        for k in 0..bits {
            centered[(c, k)] -= mean;
        }
        norms[c] = centered.row(c).iter().map(|v| v * v).sum::<f64>().sqrt();
        if norms[c] == 0.0 {
            flagged.push(c);
        }
    }

    let mut matrix = Matrix::zeros(classes, classes);
    for i in 0..classes {
        for j in 0..classes {
            if norms[i] == 0.0 || norms[j] == 0.0 {
                continue; // stays 0, class is flagged
            }
            if i == j {
                matrix[(i, j)] = 1.0;
                continue;
            }
            let dot: f64 = centered
                .row(i)
                .iter()
                .zip(centered.row(j))
                .map(|(a, b)| a * b)
                .sum();
            matrix[(i, j)] = dot / (norms[i] * norms[j]);
        }
    }

    let mut off_diag: Vec<f64> = Vec::with_capacity(classes * (classes - 1) / 2);
    for i in 0..classes {
        for j in (i + 1)..classes {
            off_diag.push(matrix[(i, j)].abs());
        }
    }
    let (median_abs, mean_abs, std_abs) = if off_diag.is_empty() {
        (0.0, 0.0, 0.0)
    } else {
        let mut sorted = off_diag.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mid = sorted.len() / 2;
        let median = if sorted.len() % 2 == 1 {
            sorted[mid]
        } else {
            0.5 * (sorted[mid - 1] + sorted[mid])
        };
        let mean = off_diag.iter().sum::<f64>() / off_diag.len() as f64;
        let var =
            off_diag.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / off_diag.len() as f64;
        (median, mean, var.sqrt())
    };

    Ok(LabelCorrelation {
        matrix,
        flagged,
        median_abs,
        mean_abs,
        std_abs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    fn gt_rows(rows: &[Vec<f64>]) -> GroundTruth {
        GroundTruth::new(Matrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn identical_member_sets_correlate_fully() {
        // two classes sharing the same items -> identical centroids
        let bits = Matrix::from_rows(&[
            vec![1.0, 0.0, 1.0, 0.0],
            vec![1.0, 1.0, 0.0, 0.0],
        ])
        .unwrap();
        let codes = BinaryCodeSet::from_bit_matrix(&bits).unwrap();
        let gt = gt_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        let corr = label_correlation(&codes, &gt).unwrap();
        assert!((corr.matrix[(0, 1)] - 1.0).abs() < 1e-12);
        assert_eq!(corr.matrix[(0, 0)], 1.0);
    }

    #[test]
    fn complementary_centroids_anticorrelate() {
        // class 0 members all 1010, class 1 members all 0101
        let bits = Matrix::from_rows(&[
            vec![1.0, 0.0, 1.0, 0.0],
            vec![1.0, 0.0, 1.0, 0.0],
            vec![0.0, 1.0, 0.0, 1.0],
            vec![0.0, 1.0, 0.0, 1.0],
        ])
        .unwrap();
        let codes = BinaryCodeSet::from_bit_matrix(&bits).unwrap();
        let gt = gt_rows(&[
            vec![1.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, 1.0],
        ]);
        let corr = label_correlation(&codes, &gt).unwrap();
        assert!((corr.matrix[(0, 1)] + 1.0).abs() < 1e-12);
    }

    /// Textbook Pearson oracle via raw moments.
    fn pearson_oracle(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let ex = x.iter().sum::<f64>() / n;
        let ey = y.iter().sum::<f64>() / n;
        let exy = x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / n;
        let exx = x.iter().map(|a| a * a).sum::<f64>() / n;
        let eyy = y.iter().map(|b| b * b).sum::<f64>() / n;
        (exy - ex * ey) / ((exx - ex * ex).sqrt() * (eyy - ey * ey).sqrt())
    }

    #[test]
    fn random_instance_matches_covariance_oracle() {
        let mut rng = Rng::new(55);
        let n = 40;
        let classes = 4;
        let bits = rng.coin_matrix(n, 12);
        let codes = BinaryCodeSet::from_bit_matrix(&bits).unwrap();
        let label_rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut row = vec![0.0; classes];
                row[i % classes] = 1.0;
                if rng.uniform01() < 0.3 {
                    row[(i + 1) % classes] = 1.0;
                }
                row
            })
            .collect();
        let gt = gt_rows(&label_rows);
        let corr = label_correlation(&codes, &gt).unwrap();

        // rebuild centroids independently and compare entry-wise
        for i in 0..classes {
            for j in 0..classes {
                let centroid = |c: usize| -> Vec<f64> {
                    let rows: Vec<usize> =
                        (0..n).filter(|&r| label_rows[r][c] == 1.0).collect();
                    let mut acc = vec![0.0; 12];
                    for &r in &rows {
                        for (k, b) in codes.unpack(r).into_iter().enumerate() {
                            acc[k] += b;
                        }
                    }
                    acc.into_iter().map(|v| v / rows.len() as f64).collect()
                };
                let want = if i == j {
                    1.0
                } else {
                    pearson_oracle(&centroid(i), &centroid(j))
                };
                assert!(
                    (corr.matrix[(i, j)] - want).abs() < 1e-10,
                    "({i},{j}): {} vs {want}",
                    corr.matrix[(i, j)]
                );
            }
        }
        // symmetry
        assert!(corr.matrix.max_abs_diff(&corr.matrix.transpose()) < 1e-15);
    }

    #[test]
    fn constant_centroid_is_flagged_zero() {
        let bits = Matrix::from_rows(&[
            vec![1.0, 1.0, 1.0, 1.0],
            vec![1.0, 1.0, 1.0, 1.0],
            vec![1.0, 0.0, 0.0, 1.0],
            vec![1.0, 1.0, 0.0, 0.0],
        ])
        .unwrap();
        let codes = BinaryCodeSet::from_bit_matrix(&bits).unwrap();
        let gt = gt_rows(&[
            vec![1.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, 1.0],
        ]);
        let corr = label_correlation(&codes, &gt).unwrap();
        assert_eq!(corr.flagged, vec![0]);
        assert_eq!(corr.matrix[(0, 1)], 0.0);
        assert_eq!(corr.matrix[(0, 0)], 0.0);
        assert_eq!(corr.matrix[(1, 1)], 1.0);
    }

    #[test]
    fn undersized_classes_are_rejected() {
        let bits = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let codes = BinaryCodeSet::from_bit_matrix(&bits).unwrap();
        let gt = gt_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!(matches!(
            label_correlation(&codes, &gt).unwrap_err(),
            Error::Degenerate(_)
        ));
    }
}
