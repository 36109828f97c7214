//! Self-describing binary checkpoint container.
//!
//! Layout (little-endian):
//!   magic "STBH1"
//!   u32 feature_dim, u32 code_bits, u32 latent_dim, u32 classes
//!   u8 group_count, then per group:
//!       u8 name_len, name bytes,
//!       u32 matrix_count, per matrix: u32 rows, u32 cols, rows*cols f64
//!   u64 config_len, config bytes (the creation config, key=value text)

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

use super::{
    ClassifierParams, DecoderParams, Dense, DiscriminatorParams, EncoderParams, GcnParams,
    HeadKind, Mlp, ModelConfig, ModelParams,
};

const MAGIC: &[u8; 5] = b"STBH1";

const GROUP_NAMES: [&str; 7] = [
    "theta1_encoder_code",
    "theta2_encoder_latent",
    "theta3_gcn",
    "theta4_decoder",
    "theta5_classifier",
    "psi1_discriminator_code",
    "psi2_discriminator_latent",
];

pub fn save_checkpoint(path: &Path, params: &ModelParams, config_text: &str) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    for dim in [
        params.config.feature_dim,
        params.config.code_bits,
        params.config.latent_dim,
        params.config.classes,
    ] {
        w.write_all(&(dim as u32).to_le_bytes())?;
    }
    let groups: [Vec<&Matrix>; 7] = [
        params.encoder.code_head.matrices(),
        params.encoder.latent_head.matrices(),
        vec![&params.gcn.weight],
        params.decoder.net.matrices(),
        vec![&params.classifier.weight, &params.classifier.bias],
        params.discriminators.code.matrices(),
        params.discriminators.latent.matrices(),
    ];
    w.write_all(&[groups.len() as u8])?;
    for (name, matrices) in GROUP_NAMES.iter().zip(&groups) {
        w.write_all(&[name.len() as u8])?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(matrices.len() as u32).to_le_bytes())?;
        for m in matrices {
            w.write_all(&(m.rows() as u32).to_le_bytes())?;
            w.write_all(&(m.cols() as u32).to_le_bytes())?;
            for v in m.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    w.write_all(&(config_text.len() as u64).to_le_bytes())?;
    w.write_all(config_text.as_bytes())?;
    w.flush()?;
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| Error::Format("checkpoint truncated".into()))?;
        Ok(buf)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }

    fn matrix(&mut self) -> Result<Matrix> {
        let rows = self.u32()? as usize;
        let cols = self.u32()? as usize;
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Format("matrix shape overflow".into()))?;
        let raw = self.bytes(n * 8)?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Matrix::from_vec(rows, cols, data)
            .map_err(|e| Error::Format(format!("checkpoint holds invalid matrix: {e}")))
    }
}

/// Load a checkpoint; returns the parameters and the creation config text.
pub fn load_checkpoint(path: &Path) -> Result<(ModelParams, String)> {
    let mut r = Reader {
        inner: BufReader::new(File::open(path)?),
    };
    let magic = r.bytes(5)?;
    if magic != MAGIC {
        return Err(Error::Format(format!(
            "bad checkpoint magic {:?}, expected {:?}",
            magic, MAGIC
        )));
    }
    let feature_dim = r.u32()? as usize;
    let code_bits = r.u32()? as usize;
    let latent_dim = r.u32()? as usize;
    let classes = r.u32()? as usize;
    let group_count = r.u8()? as usize;
    if group_count != GROUP_NAMES.len() {
        return Err(Error::Format(format!(
            "expected {} parameter groups, found {group_count}",
            GROUP_NAMES.len()
        )));
    }
    let mut groups: Vec<Vec<Matrix>> = Vec::with_capacity(group_count);
    for expected_name in GROUP_NAMES {
        let name_len = r.u8()? as usize;
        let name = String::from_utf8(r.bytes(name_len)?)
            .map_err(|_| Error::Format("group name is not UTF-8".into()))?;
        if name != expected_name {
            return Err(Error::Format(format!(
                "unexpected group '{name}', expected '{expected_name}'"
            )));
        }
        let count = r.u32()? as usize;
        let mut ms = Vec::with_capacity(count);
        for _ in 0..count {
            ms.push(r.matrix()?);
        }
        groups.push(ms);
    }
    let config_len = r.u64()? as usize;
    let config_text = String::from_utf8(r.bytes(config_len)?)
        .map_err(|_| Error::Format("config blob is not UTF-8".into()))?;

    let mut it = groups.into_iter();
    let code_head = mlp_from_matrices(it.next().unwrap(), HeadKind::Sigmoid, "theta1")?;
    let latent_head = mlp_from_matrices(it.next().unwrap(), HeadKind::Linear, "theta2")?;
    let gcn_group = it.next().unwrap();
    if gcn_group.len() != 1 {
        return Err(Error::Format("theta3 must hold exactly one matrix".into()));
    }
    let gcn_weight = gcn_group.into_iter().next().unwrap();
    let decoder = mlp_from_matrices(it.next().unwrap(), HeadKind::Linear, "theta4")?;
    let mut cls = it.next().unwrap();
    if cls.len() != 2 {
        return Err(Error::Format("theta5 must hold weight and bias".into()));
    }
    let cls_bias = cls.pop().unwrap();
    let cls_weight = cls.pop().unwrap();
    let disc_code = mlp_from_matrices(it.next().unwrap(), HeadKind::Linear, "psi1")?;
    let disc_latent = mlp_from_matrices(it.next().unwrap(), HeadKind::Linear, "psi2")?;

    let config = ModelConfig {
        feature_dim,
        code_bits,
        latent_dim,
        classes,
        encoder_hidden: hidden_widths(&code_head),
        decoder_hidden: hidden_widths(&decoder),
        discriminator_hidden: hidden_widths(&disc_code),
    };
    let params = ModelParams {
        config,
        encoder: EncoderParams {
            code_head,
            latent_head,
        },
        gcn: GcnParams { weight: gcn_weight },
        decoder: DecoderParams { net: decoder },
        classifier: ClassifierParams {
            weight: cls_weight,
            bias: cls_bias,
        },
        discriminators: DiscriminatorParams {
            code: disc_code,
            latent: disc_latent,
        },
    };
    validate_loaded(&params)?;
    Ok((params, config_text))
}

fn mlp_from_matrices(ms: Vec<Matrix>, head: HeadKind, group: &str) -> Result<Mlp> {
    if ms.len() < 2 || ms.len() % 2 != 0 {
        return Err(Error::Format(format!(
            "{group} must hold weight/bias pairs, found {} matrices",
            ms.len()
        )));
    }
    let mut layers = Vec::with_capacity(ms.len() / 2);
    let mut it = ms.into_iter();
    while let (Some(weight), Some(bias)) = (it.next(), it.next()) {
        if bias.rows() != 1 || bias.cols() != weight.cols() {
            return Err(Error::Format(format!(
                "{group}: bias {:?} does not match weight {:?}",
                bias.shape(),
                weight.shape()
            )));
        }
        layers.push(Dense { weight, bias });
    }
    for pair in layers.windows(2) {
        if pair[0].weight.cols() != pair[1].weight.rows() {
            return Err(Error::Format(format!(
                "{group}: layer widths do not chain ({} vs {})",
                pair[0].weight.cols(),
                pair[1].weight.rows()
            )));
        }
    }
    Ok(Mlp { layers, head })
}

fn hidden_widths(mlp: &Mlp) -> Vec<usize> {
    mlp.layers
        .iter()
        .take(mlp.layers.len() - 1)
        .map(|l| l.weight.cols())
        .collect()
}

fn validate_loaded(params: &ModelParams) -> Result<()> {
    let c = &params.config;
    let checks = [
        (params.encoder.code_head.input_width() == c.feature_dim, "f1 input"),
        (params.encoder.code_head.output_width() == c.code_bits, "f1 output"),
        (params.encoder.latent_head.input_width() == c.feature_dim, "f2 input"),
        (params.encoder.latent_head.output_width() == c.latent_dim, "f2 output"),
        (params.gcn.weight.shape() == (c.latent_dim, c.latent_dim), "gcn weight"),
        (params.decoder.net.input_width() == c.latent_dim, "decoder input"),
        (params.decoder.net.output_width() == c.feature_dim, "decoder output"),
        (params.classifier.weight.shape() == (c.classes, c.code_bits), "classifier weight"),
        (params.classifier.bias.shape() == (1, c.classes), "classifier bias"),
        (params.discriminators.code.input_width() == c.code_bits, "d1 input"),
        (params.discriminators.code.output_width() == 1, "d1 output"),
        (params.discriminators.latent.input_width() == c.latent_dim, "d2 input"),
        (params.discriminators.latent.output_width() == 1, "d2 output"),
    ];
    for (ok, what) in checks {
        if !ok {
            return Err(Error::Format(format!(
                "checkpoint dimensions inconsistent at {what}"
            )));
        }
    }
    Ok(())
}
