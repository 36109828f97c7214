use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::Result;
use crate::model::ModelParams;

/// Exact trainable scalar counts per parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamCountReport {
    pub groups: Vec<(String, usize)>,
    pub total: usize,
}

impl ParamCountReport {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "group,count")?;
        for (name, count) in &self.groups {
            writeln!(w, "{name},{count}")?;
        }
        writeln!(w, "total,{}", self.total)?;
        w.flush()?;
        Ok(())
    }
}

pub fn count_params(params: &ModelParams) -> ParamCountReport {
    let groups: Vec<(String, usize)> = params
        .group_counts()
        .into_iter()
        .map(|(name, count)| (name.to_string(), count))
        .collect();
    let total = groups.iter().map(|(_, c)| c).sum();
    ParamCountReport { groups, total }
}

/// Scalars added by a classification head of `classes` outputs over
/// `code_bits` inputs: the projection plus one bias per class.
pub fn classifier_param_count(classes: usize, code_bits: usize) -> usize {
    classes * code_bits + classes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::numerics::Rng;

    #[test]
    fn classifier_counts_match_published_deltas() {
        assert_eq!(classifier_param_count(10, 32), 330);
        assert_eq!(classifier_param_count(21, 32), 693);
        assert_eq!(classifier_param_count(79, 32), 2607);
    }

    #[test]
    fn report_matches_live_model() {
        let cfg = ModelConfig {
            feature_dim: 8,
            code_bits: 32,
            latent_dim: 4,
            classes: 10,
            encoder_hidden: vec![6],
            decoder_hidden: vec![6],
            discriminator_hidden: vec![5],
        };
        let params = ModelParams::init(&cfg, &mut Rng::new(1)).unwrap();
        let report = count_params(&params);
        let classifier = report
            .groups
            .iter()
            .find(|(name, _)| name == "theta5_classifier")
            .unwrap();
        assert_eq!(classifier.1, classifier_param_count(10, 32));
        assert_eq!(report.total, params.total_param_count());
        // hand count of f1: 8*6 + 6 + 6*32 + 32
        let f1 = report
            .groups
            .iter()
            .find(|(name, _)| name == "theta1_encoder_code")
            .unwrap();
        assert_eq!(f1.1, 8 * 6 + 6 + 6 * 32 + 32);
    }
}
