use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::retrieval::GroundTruth;

/// Per-class label counts and skew indicators. In multi-label data an item
/// counts once for every label it carries.
#[derive(Debug, Clone, PartialEq)]
pub struct ImbalanceReport {
    pub per_class: Vec<u64>,
    /// max count / min nonzero count; `None` when no class has any member.
    pub imbalance_ratio: Option<f64>,
    /// Class with the largest count, when any count is nonzero.
    pub dominant_class: Option<usize>,
    /// Fraction of items carrying the dominant class's label.
    pub dominant_share: f64,
    /// Set when the dominant class covers more than half of the items.
    pub dominant_flag: bool,
    /// Set when the label matrix is entirely zero.
    pub empty: bool,
}

impl ImbalanceReport {
    /// Histogram CSV: one row per class id.
    pub fn write_histogram_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "class_id,count")?;
        for (c, count) in self.per_class.iter().enumerate() {
            writeln!(w, "{c},{count}")?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn imbalance_report(gt: &GroundTruth) -> ImbalanceReport {
    let labels = gt.labels();
    let items = labels.rows();
    let classes = labels.cols();
    let mut per_class = vec![0u64; classes];
    for i in 0..items {
        for (c, &bit) in labels.row(i).iter().enumerate() {
            if bit == 1.0 {
                per_class[c] += 1;
            }
        }
    }
    let max = per_class.iter().copied().max().unwrap_or(0);
    let min_nonzero = per_class.iter().copied().filter(|&c| c > 0).min();
    let empty = max == 0;
    let dominant_class = if empty {
        None
    } else {
        per_class.iter().position(|&c| c == max)
    };
    let dominant_share = if items == 0 {
        0.0
    } else {
        max as f64 / items as f64
    };
    ImbalanceReport {
        per_class,
        imbalance_ratio: min_nonzero.map(|m| max as f64 / m as f64),
        dominant_class,
        dominant_share,
        dominant_flag: dominant_share > 0.5,
        empty,
    }
}

/// Remove one class column and every item tagged with it.
pub fn filter_dominant_label(dataset: &Dataset, class_id: usize) -> Result<Dataset> {
    if class_id >= dataset.class_count() {
        return Err(Error::Dimension(format!(
            "class id {class_id} outside {} classes",
            dataset.class_count()
        )));
    }
    let keep_rows: Vec<usize> = (0..dataset.len())
        .filter(|&i| dataset.labels[(i, class_id)] == 0.0)
        .collect();
    if keep_rows.is_empty() {
        return Err(Error::data(format!(
            "removing class {class_id} empties the dataset"
        )));
    }
    let filtered = dataset.select(
        &keep_rows,
        format!("{}-minus-class{class_id}", dataset.name),
    )?;
    let keep_cols: Vec<usize> = (0..dataset.class_count())
        .filter(|&c| c != class_id)
        .collect();
    let mut labels = crate::numerics::Matrix::zeros(filtered.len(), keep_cols.len());
    for i in 0..filtered.len() {
        for (new_c, &old_c) in keep_cols.iter().enumerate() {
            labels[(i, new_c)] = filtered.labels[(i, old_c)];
        }
    }
    Dataset::new(filtered.features, labels, filtered.name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Matrix;

    fn gt(rows: &[Vec<f64>]) -> GroundTruth {
        GroundTruth::new(Matrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn balanced_single_label_has_unit_ratio() {
        let mut rows = Vec::new();
        for c in 0..10 {
            for _ in 0..7 {
                let mut row = vec![0.0; 10];
                row[c] = 1.0;
                rows.push(row);
            }
        }
        let report = imbalance_report(&gt(&rows));
        assert_eq!(report.imbalance_ratio, Some(1.0));
        assert!(!report.dominant_flag);
        assert!((report.dominant_share - 0.1).abs() < 1e-12);
    }

    #[test]
    fn majority_class_is_flagged_dominant() {
        let mut rows = Vec::new();
        for _ in 0..60 {
            rows.push(vec![1.0, 0.0]);
        }
        for _ in 0..40 {
            rows.push(vec![0.0, 1.0]);
        }
        let report = imbalance_report(&gt(&rows));
        assert_eq!(report.dominant_class, Some(0));
        assert!(report.dominant_flag);
        assert_eq!(report.per_class, vec![60, 40]);
        assert_eq!(report.imbalance_ratio, Some(1.5));
    }

    #[test]
    fn multi_label_toy_counts_match_manual_tally() {
        let rows = vec![
            vec![1.0, 1.0, 0.0],
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 1.0],
            vec![1.0, 0.0, 1.0],
        ];
        let report = imbalance_report(&gt(&rows));
        assert_eq!(report.per_class, vec![3, 2, 2]);
        assert_eq!(report.imbalance_ratio, Some(1.5));
        assert_eq!(report.dominant_class, Some(0));
        assert!(report.dominant_flag); // 3 of 4 items
    }

    #[test]
    fn all_zero_labels_flag_empty() {
        let report = imbalance_report(&gt(&[vec![0.0, 0.0], vec![0.0, 0.0]]));
        assert!(report.empty);
        assert_eq!(report.imbalance_ratio, None);
        assert_eq!(report.dominant_class, None);
    }

    fn toy_dataset(labels: &[Vec<f64>]) -> Dataset {
        let n = labels.len();
        let features = Matrix::from_rows(
            &(0..n).map(|i| vec![i as f64, 1.0]).collect::<Vec<_>>(),
        )
        .unwrap();
        Dataset::new(features, Matrix::from_rows(labels).unwrap(), "toy").unwrap()
    }

    #[test]
    fn filter_drops_items_and_column() {
        let ds = toy_dataset(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let filtered = filter_dominant_label(&ds, 0).unwrap();
        assert_eq!(filtered.len(), 1);
        assert_eq!(filtered.class_count(), 1);
        assert_eq!(filtered.labels.data(), &[1.0]);
        assert_eq!(filtered.features.row(0), &[1.0, 1.0]);
        assert_eq!(filtered.ids, vec![0]);
    }

    #[test]
    fn filtering_unused_class_drops_no_items() {
        let ds = toy_dataset(&[vec![1.0, 0.0], vec![1.0, 0.0]]);
        let filtered = filter_dominant_label(&ds, 1).unwrap();
        assert_eq!(filtered.len(), 2);
        assert_eq!(filtered.class_count(), 1);
    }

    #[test]
    fn emptying_removal_is_an_error() {
        let ds = toy_dataset(&[vec![1.0, 0.0], vec![1.0, 1.0]]);
        assert!(filter_dominant_label(&ds, 0).is_err());
    }

    #[test]
    fn out_of_range_class_is_an_error() {
        let ds = toy_dataset(&[vec![1.0, 0.0]]);
        assert!(matches!(
            filter_dominant_label(&ds, 5).unwrap_err(),
            Error::Dimension(_)
        ));
    }
}
