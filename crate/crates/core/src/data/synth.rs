use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};

use super::Dataset;

/// Rng stream id for the synthetic generator.
const STREAM_SYNTH: u64 = 101;

/// Parameters of the synthetic multi-label benchmark.
#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub classes: usize,
    pub per_class: usize,
    pub feature_dim: usize,
    /// Probability that an item additionally takes its nearest other class's
    /// label and is drawn around the midpoint of the two centroids.
    pub multi_label_rate: f64,
    /// Standard deviation of the isotropic noise around a centroid.
    pub noise: f64,
    pub seed: u64,
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::Config("synthesize needs classes >= 2".into()));
        }
        if self.per_class < 2 {
            return Err(Error::Config("synthesize needs per_class >= 2".into()));
        }
        if self.feature_dim == 0 {
            return Err(Error::Config("feature_dim must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.multi_label_rate) {
            return Err(Error::Config(
                "multi_label_rate must lie in [0, 1)".into(),
            ));
        }
        if self.noise < 0.0 || !self.noise.is_finite() {
            return Err(Error::Config("noise must be a finite value >= 0".into()));
        }
        Ok(())
    }
}

/// Gaussian class clusters with controlled separation.
///
/// Centroids are standard-normal draws rescaled so every pairwise distance is
/// at least 6 * noise; items scatter around their class centroid with
/// isotropic `noise`. Multi-label items land at the midpoint between their
/// class and its nearest neighbour class and carry both labels. Deterministic
/// per seed.
pub fn synthesize(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = Rng::with_stream(cfg.seed, STREAM_SYNTH);
    let mut centroids = rng.normal_matrix(cfg.classes, cfg.feature_dim);

    let mut min_dist = f64::INFINITY;
    for i in 0..cfg.classes {
        for j in (i + 1)..cfg.classes {
            min_dist = min_dist.min(centroid_distance(&centroids, i, j));
        }
    }
    if min_dist == 0.0 {
        return Err(Error::Degenerate(format!(
            "infeasible geometry: coincident class centroids in dimension {}",
            cfg.feature_dim
        )));
    }
    let target = 6.0 * cfg.noise;
    if target > 0.0 && min_dist < target {
        centroids = centroids.scale(target / min_dist);
    }

    // nearest other class per class, ties to the lower id
    let nearest: Vec<usize> = (0..cfg.classes)
        .map(|i| {
            (0..cfg.classes)
                .filter(|&j| j != i)
                .min_by(|&a, &b| {
                    centroid_distance(&centroids, i, a)
                        .partial_cmp(&centroid_distance(&centroids, i, b))
                        .unwrap()
                        .then(a.cmp(&b))
                })
                .unwrap()
        })
        .collect();

    let n = cfg.classes * cfg.per_class;
    let mut features = Matrix::zeros(n, cfg.feature_dim);
    let mut labels = Matrix::zeros(n, cfg.classes);
    let mut row = 0;
    for class in 0..cfg.classes {
        for _ in 0..cfg.per_class {
            let multi = rng.uniform01() < cfg.multi_label_rate;
            labels[(row, class)] = 1.0;
            for d in 0..cfg.feature_dim {
                let base = if multi {
                    0.5 * (centroids[(class, d)] + centroids[(nearest[class], d)])
                } else {
                    centroids[(class, d)]
                };
                features[(row, d)] = base + cfg.noise * rng.standard_normal();
            }
            if multi {
                labels[(row, nearest[class])] = 1.0;
            }
            row += 1;
        }
    }

    Dataset::new(
        features,
        labels,
        format!(
            "synthetic-c{}-p{}-d{}-seed{}",
            cfg.classes, cfg.per_class, cfg.feature_dim, cfg.seed
        ),
    )
}

fn centroid_distance(centroids: &Matrix, i: usize, j: usize) -> f64 {
    centroids
        .row(i)
        .iter()
        .zip(centroids.row(j))
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}
