use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{encode_code_path, ModelParams, ModelVars, NeuronMode};
use crate::numerics::{Matrix, Tape};

const CODE_MAGIC: &[u8; 4] = b"STBC";
const CODE_VERSION: u32 = 1;

/// Packed binary codes: one row of 64-bit words per item, bit `k` of the
/// code stored in word `k / 64` at position `k % 64`. Bits beyond the code
/// length stay zero, so word-wise popcounts equal Hamming distances.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryCodeSet {
    n: usize,
    code_bits: usize,
    words_per_code: usize,
    words: Vec<u64>,
    ids: Vec<u64>,
}

impl BinaryCodeSet {
    /// Pack a 0/1 matrix, one code per row; ids default to row indices.
    pub fn from_bit_matrix(bits: &Matrix) -> Result<BinaryCodeSet> {
        if bits.cols() == 0 {
            return Err(Error::Dimension("codes need at least one bit".into()));
        }
        if bits.data().iter().any(|&b| b != 0.0 && b != 1.0) {
            return Err(Error::data("code matrix entries must be 0/1"));
        }
        let n = bits.rows();
        let code_bits = bits.cols();
        let words_per_code = code_bits.div_ceil(64);
        let mut words = vec![0u64; n * words_per_code];
        for i in 0..n {
            for (k, &b) in bits.row(i).iter().enumerate() {
                if b == 1.0 {
                    words[i * words_per_code + k / 64] |= 1u64 << (k % 64);
                }
            }
        }
        Ok(BinaryCodeSet {
            n,
            code_bits,
            words_per_code,
            words,
            ids: (0..n as u64).collect(),
        })
    }

    pub fn with_ids(mut self, ids: Vec<u64>) -> Result<BinaryCodeSet> {
        if ids.len() != self.n {
            return Err(Error::Dimension(format!(
                "{} ids for {} codes",
                ids.len(),
                self.n
            )));
        }
        self.ids = ids;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn code_bits(&self) -> usize {
        self.code_bits
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn code(&self, idx: usize) -> &[u64] {
        &self.words[idx * self.words_per_code..(idx + 1) * self.words_per_code]
    }

    pub fn id(&self, idx: usize) -> u64 {
        self.ids[idx]
    }

    /// Row index of an item id, when present.
    pub fn index_of(&self, id: u64) -> Option<usize> {
        // ids are usually sorted (split order); fall back to linear scan
        match self.ids.binary_search(&id) {
            Ok(i) => Some(i),
            Err(_) => self.ids.iter().position(|&x| x == id),
        }
    }

    /// Unpack one code back to a 0/1 row.
    pub fn unpack(&self, idx: usize) -> Vec<f64> {
        let words = self.code(idx);
        (0..self.code_bits)
            .map(|k| ((words[k / 64] >> (k % 64)) & 1) as f64)
            .collect()
    }

    /// Subset in the order of `ids`; unknown ids are an error.
    pub fn select_ids(&self, ids: &[u64]) -> Result<BinaryCodeSet> {
        let mut words = Vec::with_capacity(ids.len() * self.words_per_code);
        for &id in ids {
            let idx = self
                .index_of(id)
                .ok_or_else(|| Error::data(format!("code set has no item id {id}")))?;
            words.extend_from_slice(self.code(idx));
        }
        Ok(BinaryCodeSet {
            n: ids.len(),
            code_bits: self.code_bits,
            words_per_code: self.words_per_code,
            words,
            ids: ids.to_vec(),
        })
    }

    /// File format: magic "STBC", u32 version, u64 n, u32 code_bits, then
    /// n * words_per_code little-endian u64 words. Item ids are implicit row
    /// indices.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(CODE_MAGIC)?;
        w.write_all(&CODE_VERSION.to_le_bytes())?;
        w.write_all(&(self.n as u64).to_le_bytes())?;
        w.write_all(&(self.code_bits as u32).to_le_bytes())?;
        for word in &self.words {
            w.write_all(&word.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<BinaryCodeSet> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|_| Error::Format("code file truncated".into()))?;
        if &magic != CODE_MAGIC {
            return Err(Error::Format(format!(
                "bad code file magic {magic:?}, expected {CODE_MAGIC:?}"
            )));
        }
        let mut buf4 = [0u8; 4];
        let mut buf8 = [0u8; 8];
        r.read_exact(&mut buf4)
            .map_err(|_| Error::Format("code file truncated".into()))?;
        let version = u32::from_le_bytes(buf4);
        if version != CODE_VERSION {
            return Err(Error::Format(format!(
                "unsupported code file version {version}"
            )));
        }
        r.read_exact(&mut buf8)
            .map_err(|_| Error::Format("code file truncated".into()))?;
        let n = u64::from_le_bytes(buf8) as usize;
        r.read_exact(&mut buf4)
            .map_err(|_| Error::Format("code file truncated".into()))?;
        let code_bits = u32::from_le_bytes(buf4) as usize;
        if code_bits == 0 {
            return Err(Error::Format("code file declares zero bits".into()));
        }
        let words_per_code = code_bits.div_ceil(64);
        let mut words = vec![0u64; n * words_per_code];
        for word in &mut words {
            r.read_exact(&mut buf8)
                .map_err(|_| Error::Format("code file truncated".into()))?;
            *word = u64::from_le_bytes(buf8);
        }
        // canonical padding: bits beyond code_bits must be zero
        let tail_bits = code_bits % 64;
        if tail_bits != 0 {
            let mask = !0u64 << tail_bits;
            for i in 0..n {
                if words[i * words_per_code + words_per_code - 1] & mask != 0 {
                    return Err(Error::Format(format!(
                        "code {i} has nonzero padding bits"
                    )));
                }
            }
        }
        Ok(BinaryCodeSet {
            n,
            code_bits,
            words_per_code,
            words,
            ids: (0..n as u64).collect(),
        })
    }
}

/// Number of differing bits between two packed codes of equal width.
pub fn hamming(a: &[u64], b: &[u64]) -> Result<u32> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "hamming on codes of different word lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| (x ^ y).count_ones())
        .sum())
}

/// Database ids by ascending Hamming distance to the query; ties break by
/// ascending id so rankings are reproducible.
pub fn rank(query: &[u64], db: &BinaryCodeSet) -> Result<Vec<u64>> {
    let mut order: Vec<(u32, u64)> = Vec::with_capacity(db.len());
    for i in 0..db.len() {
        order.push((hamming(query, db.code(i))?, db.id(i)));
    }
    order.sort_unstable();
    Ok(order.into_iter().map(|(_, id)| id).collect())
}

/// Deterministic out-of-sample codes for a matrix of feature rows: threshold
/// the relaxed activations at 0.5 (tie maps to 1).
pub fn encode_rows(features: &Matrix, params: &ModelParams) -> Result<BinaryCodeSet> {
    if features.cols() != params.config.feature_dim {
        return Err(Error::Dimension(format!(
            "feature width {} does not match model feature_dim {}",
            features.cols(),
            params.config.feature_dim
        )));
    }
    features.check_finite("encode input")?;
    let tape = Tape::new();
    let vars = ModelVars::new(&tape, params);
    let xv = tape.leaf(features.clone());
    let (_, code) = encode_code_path(&vars, xv, NeuronMode::Thresholded);
    BinaryCodeSet::from_bit_matrix(&code.value())
}

/// Codes for every row of a dataset-sized feature matrix, carrying the given
/// item ids.
pub fn encode_dataset(features: &Matrix, ids: &[u64], params: &ModelParams) -> Result<BinaryCodeSet> {
    encode_rows(features, params)?.with_ids(ids.to_vec())
}

/// Single-row convenience wrapper around the deterministic encoder.
pub fn encode_query(x: &Matrix, params: &ModelParams) -> Result<Vec<u64>> {
    if x.rows() != 1 {
        return Err(Error::Dimension(format!(
            "encode_query expects one row, got {}",
            x.rows()
        )));
    }
    let set = encode_rows(x, params)?;
    Ok(set.code(0).to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{encode_twin, stochastic_binarize, ModelConfig};
    use crate::numerics::Rng;

    fn tiny_params(seed: u64) -> ModelParams {
        let cfg = ModelConfig {
            feature_dim: 5,
            code_bits: 70, // exercises multi-word packing
            latent_dim: 3,
            classes: 2,
            encoder_hidden: vec![6],
            decoder_hidden: vec![6],
            discriminator_hidden: vec![4],
        };
        ModelParams::init(&cfg, &mut Rng::new(seed)).unwrap()
    }

    #[test]
    fn hamming_hand_cases() {
        let a = BinaryCodeSet::from_bit_matrix(
            &Matrix::from_rows(&[vec![1.0, 0.0, 1.0, 0.0], vec![0.0, 1.0, 1.0, 0.0]]).unwrap(),
        )
        .unwrap();
        assert_eq!(hamming(a.code(0), a.code(0)).unwrap(), 0);
        assert_eq!(hamming(a.code(0), a.code(1)).unwrap(), 2);
    }

    #[test]
    fn hamming_matches_bit_loop_oracle_on_256_bits() {
        let mut rng = Rng::new(8);
        let bits = rng.coin_matrix(2, 256);
        let set = BinaryCodeSet::from_bit_matrix(&bits).unwrap();
        let oracle: u32 = bits
            .row(0)
            .iter()
            .zip(bits.row(1))
            .filter(|(x, y)| x != y)
            .count() as u32;
        assert_eq!(hamming(set.code(0), set.code(1)).unwrap(), oracle);
    }

    #[test]
    fn hamming_rejects_mismatched_lengths() {
        let a = BinaryCodeSet::from_bit_matrix(&Matrix::ones(1, 64)).unwrap();
        let b = BinaryCodeSet::from_bit_matrix(&Matrix::ones(1, 65)).unwrap();
        assert!(matches!(
            hamming(a.code(0), b.code(0)).unwrap_err(),
            Error::Dimension(_)
        ));
    }

    #[test]
    fn padding_is_canonical() {
        let bits = Matrix::ones(3, 70);
        let set = BinaryCodeSet::from_bit_matrix(&bits).unwrap();
        for i in 0..3 {
            let last = set.code(i)[1];
            assert_eq!(last >> 6, 0, "padding bits must stay zero");
        }
        // popcount over words equals the bit count
        assert_eq!(hamming(set.code(0), &vec![0u64; 2]).unwrap(), 70);
    }

    #[test]
    fn rank_orders_by_distance_then_id() {
        let bits = Matrix::from_rows(&[
            vec![1.0, 1.0, 1.0, 1.0],
            vec![1.0, 1.0, 1.0, 0.0],
            vec![0.0, 0.0, 0.0, 0.0],
            vec![1.0, 1.0, 0.0, 1.0],
        ])
        .unwrap();
        let db = BinaryCodeSet::from_bit_matrix(&bits).unwrap();
        let query = db.code(0).to_vec();
        let order = rank(&query, &db).unwrap();
        // distances: 0, 1, 4, 1 -> ids 0, then tie (1,3) by id, then 2
        assert_eq!(order, vec![0, 1, 3, 2]);
    }

    #[test]
    fn rank_matches_naive_sort_oracle() {
        let mut rng = Rng::new(19);
        let bits = rng.coin_matrix(20, 48);
        let db = BinaryCodeSet::from_bit_matrix(&bits).unwrap();
        let query_bits = rng.coin_matrix(1, 48);
        let query = BinaryCodeSet::from_bit_matrix(&query_bits).unwrap();
        let got = rank(query.code(0), &db).unwrap();

        let mut oracle: Vec<(u32, u64)> = (0..20)
            .map(|i| {
                let d = bits
                    .row(i)
                    .iter()
                    .zip(query_bits.row(0))
                    .filter(|(x, y)| x != y)
                    .count() as u32;
                (d, i as u64)
            })
            .collect();
        oracle.sort();
        let want: Vec<u64> = oracle.into_iter().map(|(_, id)| id).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn empty_database_ranks_empty() {
        let db = BinaryCodeSet {
            n: 0,
            code_bits: 8,
            words_per_code: 1,
            words: vec![],
            ids: vec![],
        };
        assert!(rank(&[0u64], &db).unwrap().is_empty());
    }

    #[test]
    fn code_file_round_trip() {
        let mut rng = Rng::new(3);
        let set = BinaryCodeSet::from_bit_matrix(&rng.coin_matrix(9, 70)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("codes.stbc");
        set.save(&path).unwrap();
        let back = BinaryCodeSet::load(&path).unwrap();
        assert_eq!(back, set);
        // byte-identical on re-save
        let path2 = dir.path().join("codes2.stbc");
        back.save(&path2).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    #[test]
    fn encode_rows_is_deterministic_and_matches_half_threshold() {
        let params = tiny_params(4);
        let mut rng = Rng::new(10);
        let x = rng.uniform_matrix(6, 5);
        let a = encode_rows(&x, &params).unwrap();
        let b = encode_rows(&x, &params).unwrap();
        assert_eq!(a, b);
        // cross-check against the training-path encoder with eps forced to 0.5
        let (codes, _) = encode_twin(&x, &params, &mut Rng::new(1)).unwrap();
        let half = Matrix::filled(6, 70, 0.5);
        let want = stochastic_binarize(&codes.relaxed, &half);
        let got_bits = Matrix::from_rows(
            &(0..6).map(|i| a.unpack(i)).collect::<Vec<_>>(),
        )
        .unwrap();
        assert_eq!(got_bits, want);
    }

    #[test]
    fn encode_query_equals_row_of_encode_rows() {
        let params = tiny_params(5);
        let mut rng = Rng::new(11);
        let x = rng.uniform_matrix(3, 5);
        let all = encode_rows(&x, &params).unwrap();
        for i in 0..3 {
            let q = encode_query(&x.row_matrix(i), &params).unwrap();
            assert_eq!(q.as_slice(), all.code(i));
        }
    }

    #[test]
    fn encode_rejects_wrong_width() {
        let params = tiny_params(6);
        let x = Matrix::ones(1, 4);
        assert!(matches!(
            encode_query(&x, &params).unwrap_err(),
            Error::Dimension(_)
        ));
    }
}
