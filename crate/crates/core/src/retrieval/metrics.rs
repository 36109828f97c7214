use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

use super::codes::{rank, BinaryCodeSet};

/// Relevance labels for every item in the corpus; two items are similar when
/// they share at least one label.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    labels: Matrix,
}

impl GroundTruth {
    pub fn new(labels: Matrix) -> Result<GroundTruth> {
        if labels.data().iter().any(|&b| b != 0.0 && b != 1.0) {
            return Err(Error::data("ground-truth labels must be 0/1"));
        }
        Ok(GroundTruth { labels })
    }

    pub fn items(&self) -> usize {
        self.labels.rows()
    }

    pub fn classes(&self) -> usize {
        self.labels.cols()
    }

    pub fn labels(&self) -> &Matrix {
        &self.labels
    }

    pub fn similar(&self, a: u64, b: u64) -> bool {
        let ra = self.labels.row(a as usize);
        let rb = self.labels.row(b as usize);
        ra.iter().zip(rb).any(|(&x, &y)| x == 1.0 && y == 1.0)
    }

    fn check_id(&self, id: u64) -> Result<()> {
        if (id as usize) < self.items() {
            Ok(())
        } else {
            Err(Error::data(format!(
                "item id {id} outside ground truth with {} items",
                self.items()
            )))
        }
    }
}

/// Fraction of similar items among the top min(k, len) of the ranking.
pub fn precision_at_k(ranking: &[u64], gt: &GroundTruth, query_id: u64, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::Config("precision_at_k needs k >= 1".into()));
    }
    if ranking.is_empty() {
        return Err(Error::Config("precision_at_k needs a nonempty ranking".into()));
    }
    gt.check_id(query_id)?;
    let depth = k.min(ranking.len());
    let mut hits = 0usize;
    for &id in &ranking[..depth] {
        gt.check_id(id)?;
        if gt.similar(query_id, id) {
            hits += 1;
        }
    }
    Ok(hits as f64 / depth as f64)
}

/// Average precision: mean of precision at each similar rank, normalized by
/// min(#similar in the ranking, cutoff). `None` when the ranking holds no
/// similar item at all, so the caller can exclude the query and report it.
pub fn average_precision(
    ranking: &[u64],
    gt: &GroundTruth,
    query_id: u64,
    cutoff: Option<usize>,
) -> Result<Option<f64>> {
    gt.check_id(query_id)?;
    let mut total_relevant = 0usize;
    for &id in ranking {
        gt.check_id(id)?;
        if gt.similar(query_id, id) {
            total_relevant += 1;
        }
    }
    if total_relevant == 0 {
        return Ok(None);
    }
    let depth = cutoff.unwrap_or(ranking.len()).min(ranking.len());
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (pos, &id) in ranking[..depth].iter().enumerate() {
        if gt.similar(query_id, id) {
            hits += 1;
            sum += hits as f64 / (pos + 1) as f64;
        }
    }
    let denom = total_relevant.min(depth);
    Ok(Some(sum / denom as f64))
}

/// Macro-averaged precision-recall points over every rank threshold,
/// downsampled to at most `max_points` thresholds (the last threshold is
/// always kept). Queries without a single similar item are skipped.
pub fn pr_curve_capped(
    rankings: &[(u64, Vec<u64>)],
    gt: &GroundTruth,
    max_points: usize,
) -> Result<Vec<(f64, f64)>> {
    let depth = rankings.iter().map(|(_, r)| r.len()).max().unwrap_or(0);
    if depth == 0 {
        return Ok(Vec::new());
    }
    // per query: cumulative hit counts by threshold, plus total relevant
    let mut per_query: Vec<(Vec<usize>, usize)> = Vec::new();
    for (query_id, ranking) in rankings {
        gt.check_id(*query_id)?;
        let mut cumulative = Vec::with_capacity(ranking.len());
        let mut hits = 0usize;
        for &id in ranking {
            gt.check_id(id)?;
            if gt.similar(*query_id, id) {
                hits += 1;
            }
            cumulative.push(hits);
        }
        if hits > 0 {
            per_query.push((cumulative, hits));
        }
    }
    if per_query.is_empty() {
        return Ok(Vec::new());
    }

    let stride = depth.div_ceil(max_points).max(1);
    let mut points = Vec::new();
    let mut t = stride;
    loop {
        let threshold = t.min(depth);
        let mut precision_sum = 0.0;
        let mut recall_sum = 0.0;
        for (cumulative, total) in &per_query {
            let idx = threshold.min(cumulative.len());
            let hits = if idx == 0 { 0 } else { cumulative[idx - 1] };
            precision_sum += hits as f64 / threshold as f64;
            recall_sum += hits as f64 / *total as f64;
        }
        let nq = per_query.len() as f64;
        points.push((recall_sum / nq, precision_sum / nq));
        if threshold == depth {
            break;
        }
        t += stride;
    }
    Ok(points)
}

/// Macro-averaged precision-recall curve at the default emission cap.
pub fn pr_curve(rankings: &[(u64, Vec<u64>)], gt: &GroundTruth) -> Result<Vec<(f64, f64)>> {
    pr_curve_capped(rankings, gt, 200)
}

/// Per-query diagnostics carried in the evaluation report.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct QueryDiag {
    pub id: u64,
    pub relevant_in_db: usize,
    pub p_at_k: f64,
    pub average_precision: Option<f64>,
}

/// Retrieval quality over a query set against a database.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EvalReport {
    /// Requested precision depth.
    pub k: usize,
    /// Depth actually used (clamped to the database size).
    pub k_effective: usize,
    pub k_clamped: bool,
    pub p_at_k: f64,
    pub map: f64,
    pub pr_points: Vec<(f64, f64)>,
    pub queries_evaluated: usize,
    /// Queries with zero similar items; excluded from the mAP denominator.
    pub queries_excluded: usize,
    pub per_query: Vec<QueryDiag>,
}

impl EvalReport {
    pub fn save_json(&self, path: &Path) -> Result<()> {
        let file = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(file, self)
            .map_err(|e| Error::Format(format!("cannot serialize report: {e}")))?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<EvalReport> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("bad report file: {e}")))
    }

    pub fn save_pr_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "recall,precision")?;
        for (r, p) in &self.pr_points {
            writeln!(w, "{r},{p}")?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Rank every query against the database and aggregate the paper-style
/// metrics: macro P@K, mAP over queries with at least one similar item, and
/// the macro precision-recall curve.
pub fn evaluate(
    queries: &BinaryCodeSet,
    db: &BinaryCodeSet,
    gt: &GroundTruth,
    k: usize,
) -> Result<EvalReport> {
    if queries.code_bits() != db.code_bits() {
        return Err(Error::Dimension(format!(
            "query codes have {} bits, database codes {}",
            queries.code_bits(),
            db.code_bits()
        )));
    }
    if k == 0 {
        return Err(Error::Config("precision depth k must be >= 1".into()));
    }
    if db.is_empty() {
        return Err(Error::Config("evaluation needs a nonempty database".into()));
    }
    let k_effective = k.min(db.len());
    let k_clamped = k_effective != k;

    let mut rankings: Vec<(u64, Vec<u64>)> = Vec::with_capacity(queries.len());
    for qi in 0..queries.len() {
        rankings.push((queries.id(qi), rank(queries.code(qi), db)?));
    }

    let mut per_query = Vec::with_capacity(queries.len());
    let mut p_sum = 0.0;
    let mut ap_sum = 0.0;
    let mut evaluated = 0usize;
    let mut excluded = 0usize;
    for (query_id, ranking) in &rankings {
        let p = precision_at_k(ranking, gt, *query_id, k_effective)?;
        let ap = average_precision(ranking, gt, *query_id, None)?;
        let relevant = ranking
            .iter()
            .filter(|&&id| gt.similar(*query_id, id))
            .count();
        match ap {
            Some(v) => {
                ap_sum += v;
                evaluated += 1;
            }
            None => excluded += 1,
        }
        p_sum += p;
        per_query.push(QueryDiag {
            id: *query_id,
            relevant_in_db: relevant,
            p_at_k: p,
            average_precision: ap,
        });
    }
    let pr_points = pr_curve(&rankings, gt)?;
    let total = queries.len().max(1) as f64;
    Ok(EvalReport {
        k,
        k_effective,
        k_clamped,
        p_at_k: p_sum / total,
        map: if evaluated > 0 {
            ap_sum / evaluated as f64
        } else {
            0.0
        },
        pr_points,
        queries_evaluated: evaluated,
        queries_excluded: excluded,
        per_query,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    fn gt_from_rows(rows: &[Vec<f64>]) -> GroundTruth {
        GroundTruth::new(Matrix::from_rows(rows).unwrap()).unwrap()
    }

    /// Single-label ground truth where item i belongs to class classes[i].
    fn single_label_gt(classes: &[usize], n_classes: usize) -> GroundTruth {
        let rows: Vec<Vec<f64>> = classes
            .iter()
            .map(|&c| {
                let mut row = vec![0.0; n_classes];
                row[c] = 1.0;
                row
            })
            .collect();
        gt_from_rows(&rows)
    }

    #[test]
    fn precision_hand_cases() {
        // items: query 0 in class 0; db items 1..=4 with pattern [1,0,1,1]
        let gt = single_label_gt(&[0, 0, 1, 0, 0], 2);
        let ranking = vec![1, 2, 3, 4];
        assert_eq!(precision_at_k(&ranking, &gt, 0, 4).unwrap(), 0.75);
        // all relevant in top-k
        let gt_all = single_label_gt(&[0, 0, 0], 1);
        assert_eq!(precision_at_k(&[1, 2], &gt_all, 0, 2).unwrap(), 1.0);
        // none relevant
        let gt_none = single_label_gt(&[0, 1, 1], 2);
        assert_eq!(precision_at_k(&[1, 2], &gt_none, 0, 2).unwrap(), 0.0);
        // k beyond ranking length clamps to the length
        assert_eq!(precision_at_k(&[1, 2], &gt_none, 0, 10).unwrap(), 0.0);
    }

    #[test]
    fn average_precision_hand_cases() {
        // relevant at ranks 1 and 3 of 4 -> (1/1 + 2/3)/2
        let gt = single_label_gt(&[0, 0, 1, 0, 1], 2);
        let ap = average_precision(&[1, 2, 3, 4], &gt, 0, None)
            .unwrap()
            .unwrap();
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);

        // all relevant -> 1.0
        let gt_all = single_label_gt(&[0, 0, 0, 0], 1);
        assert_eq!(
            average_precision(&[1, 2, 3], &gt_all, 0, None).unwrap(),
            Some(1.0)
        );

        // single relevant at rank 1 -> 1.0
        let gt_one = single_label_gt(&[0, 0, 1, 1], 2);
        assert_eq!(
            average_precision(&[1, 2, 3], &gt_one, 0, None).unwrap(),
            Some(1.0)
        );

        // zero relevant -> excluded
        let gt_none = single_label_gt(&[0, 1, 1], 2);
        assert_eq!(average_precision(&[1, 2], &gt_none, 0, None).unwrap(), None);
    }

    #[test]
    fn ap_cutoff_limits_depth_and_denominator() {
        // relevant at ranks 1, 2, 4; cutoff 2 -> (1 + 1)/2
        let gt = single_label_gt(&[0, 0, 0, 1, 0], 2);
        let ap = average_precision(&[1, 2, 3, 4], &gt, 0, Some(2))
            .unwrap()
            .unwrap();
        assert_eq!(ap, 1.0);
    }

    #[test]
    fn pr_curve_perfect_ranking_has_unit_precision() {
        // 3 relevant then 2 irrelevant
        let gt = single_label_gt(&[0, 0, 0, 0, 1, 1], 2);
        let rankings = vec![(0u64, vec![1u64, 2, 3, 4, 5])];
        let points = pr_curve(&rankings, &gt).unwrap();
        assert_eq!(points.len(), 5);
        for (i, (recall, precision)) in points.iter().enumerate() {
            let t = i + 1;
            let hits = t.min(3);
            assert!((precision - hits as f64 / t as f64).abs() < 1e-15);
            assert!((recall - hits as f64 / 3.0).abs() < 1e-15);
            if t <= 3 {
                assert_eq!(*precision, 1.0);
            }
        }
        // recall nondecreasing
        for pair in points.windows(2) {
            assert!(pair[1].0 >= pair[0].0);
        }
    }

    #[test]
    fn pr_curve_downsamples_to_cap() {
        let n_db = 1000;
        let mut classes = vec![0usize];
        classes.extend(std::iter::repeat_n(0usize, n_db / 2));
        classes.extend(std::iter::repeat_n(1usize, n_db / 2));
        let gt = single_label_gt(&classes, 2);
        let ranking: Vec<u64> = (1..=n_db as u64).collect();
        let points = pr_curve(&[(0, ranking)], &gt).unwrap();
        assert!(points.len() <= 200);
        // the last threshold is the full database: recall 1
        let last = points.last().unwrap();
        assert!((last.0 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn random_codes_approach_class_prior_at_high_recall() {
        // balanced two-class db with random ranking: precision at full depth
        // equals the class prior exactly, and near it along the way
        let mut rng = Rng::new(40);
        let n_per = 100;
        let mut classes = vec![0usize];
        classes.extend(std::iter::repeat_n(0usize, n_per));
        classes.extend(std::iter::repeat_n(1usize, n_per));
        let gt = single_label_gt(&classes, 2);
        let mut ranking: Vec<u64> = (1..=2 * n_per as u64).collect();
        rng.shuffle(&mut ranking);
        let points = pr_curve(&[(0, ranking)], &gt).unwrap();
        let last = points.last().unwrap();
        assert!((last.1 - 0.5).abs() < 1e-12);
        // high-recall tail stays near the prior
        for (r, p) in points.iter().filter(|(r, _)| *r > 0.8) {
            assert!((p - 0.5).abs() < 0.05, "recall {r} precision {p}");
        }
    }

    #[test]
    fn map_is_invariant_under_database_permutation_with_distinct_distances() {
        // db codes at distinct distances from the query
        let bits = Matrix::from_rows(&[
            vec![1.0, 1.0, 1.0, 1.0], // query
            vec![1.0, 1.0, 1.0, 0.0],
            vec![1.0, 1.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 0.0],
        ])
        .unwrap();
        let gt = single_label_gt(&[0, 0, 1, 0, 1], 2);
        let all = BinaryCodeSet::from_bit_matrix(&bits).unwrap();
        let query = all.select_ids(&[0]).unwrap();

        let db_a = all.select_ids(&[1, 2, 3, 4]).unwrap();
        let db_b = all.select_ids(&[4, 2, 1, 3]).unwrap();
        let report_a = evaluate(&query, &db_a, &gt, 4).unwrap();
        let report_b = evaluate(&query, &db_b, &gt, 4).unwrap();
        assert_eq!(report_a.map, report_b.map);
        assert_eq!(report_a.p_at_k, report_b.p_at_k);
    }

    #[test]
    fn evaluate_flags_clamped_k_and_excluded_queries() {
        let bits = Matrix::from_rows(&[
            vec![1.0, 1.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
        ])
        .unwrap();
        let gt = gt_from_rows(&[
            vec![1.0, 0.0],
            vec![0.0, 1.0], // no overlap with query 0
            vec![0.0, 1.0],
        ]);
        let all = BinaryCodeSet::from_bit_matrix(&bits).unwrap();
        let queries = all.select_ids(&[0]).unwrap();
        let db = all.select_ids(&[1, 2]).unwrap();
        let report = evaluate(&queries, &db, &gt, 1000).unwrap();
        assert!(report.k_clamped);
        assert_eq!(report.k_effective, 2);
        assert_eq!(report.queries_excluded, 1);
        assert_eq!(report.queries_evaluated, 0);
        assert_eq!(report.map, 0.0);
    }

    #[test]
    fn report_json_round_trip() {
        let report = EvalReport {
            k: 10,
            k_effective: 10,
            k_clamped: false,
            p_at_k: 0.75,
            map: 0.8125,
            pr_points: vec![(0.5, 1.0), (1.0, 0.75)],
            queries_evaluated: 4,
            queries_excluded: 1,
            per_query: vec![QueryDiag {
                id: 3,
                relevant_in_db: 2,
                p_at_k: 0.5,
                average_precision: Some(0.75),
            }],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        report.save_json(&path).unwrap();
        let back = EvalReport::load_json(&path).unwrap();
        assert_eq!(back, report);
    }
}
