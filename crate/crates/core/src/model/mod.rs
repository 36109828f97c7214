//! The twin-bottleneck network: two encoder heads producing a binary code
//! and a continuous latent, a similarity graph built from the batch codes,
//! one graph-convolution step, a decoder, two discriminators that pull the
//! latents toward fixed priors, and an optional classification head on the
//! binary code.

mod checkpoint;
mod forward;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use forward::{
    adjacency, adjacency_from_codes, classify, classify_codes, decode, discriminate,
    discriminator_logits, encode_code_path, encode_twin, forward_autoencoder, gcn_forward,
    gcn_propagate, sample_priors, stochastic_binarize, BatchCodes, ForwardPass, MlpVars,
    ModelVars, NeuronMode,
};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};

/// Logits fed to a logarithm are clamped to this symmetric range first, so
/// adversarial terms stay finite no matter how far a discriminator drifts.
pub const LOGIT_CLAMP: f64 = 40.0;

/// Widths of every sub-network. The trunk dimensions come from the task
/// (feature size, code length, latent width, class count); hidden widths
/// default to the scale of the lineage this model follows but stay
/// configurable.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub feature_dim: usize,
    pub code_bits: usize,
    pub latent_dim: usize,
    pub classes: usize,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub discriminator_hidden: Vec<usize>,
}

impl ModelConfig {
    pub fn new(feature_dim: usize, code_bits: usize, latent_dim: usize, classes: usize) -> Self {
        ModelConfig {
            feature_dim,
            code_bits,
            latent_dim,
            classes,
            encoder_hidden: vec![1024],
            decoder_hidden: vec![1024],
            discriminator_hidden: vec![512],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("feature_dim", self.feature_dim),
            ("code_bits", self.code_bits),
            ("latent_dim", self.latent_dim),
            ("classes", self.classes),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        if self
            .encoder_hidden
            .iter()
            .chain(&self.decoder_hidden)
            .chain(&self.discriminator_hidden)
            .any(|&w| w == 0)
        {
            return Err(Error::Config("hidden layer widths must be >= 1".into()));
        }
        Ok(())
    }

    fn f1_dims(&self) -> Vec<usize> {
        dims(self.feature_dim, &self.encoder_hidden, self.code_bits)
    }

    fn f2_dims(&self) -> Vec<usize> {
        dims(self.feature_dim, &self.encoder_hidden, self.latent_dim)
    }

    fn decoder_dims(&self) -> Vec<usize> {
        dims(self.latent_dim, &self.decoder_hidden, self.feature_dim)
    }

    fn d1_dims(&self) -> Vec<usize> {
        dims(self.code_bits, &self.discriminator_hidden, 1)
    }

    fn d2_dims(&self) -> Vec<usize> {
        dims(self.latent_dim, &self.discriminator_hidden, 1)
    }
}

fn dims(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut d = Vec::with_capacity(hidden.len() + 2);
    d.push(input);
    d.extend_from_slice(hidden);
    d.push(output);
    d
}

/// Activation applied by an MLP's final layer. Hidden layers are ReLU.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadKind {
    Linear,
    Sigmoid,
}

/// One fully connected layer: `x W + b` with `W` of shape in x out.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Matrix,
}

impl Dense {
    fn init(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Dense {
        let half_width = 1.0 / (fan_in as f64).sqrt();
        let mut weight = Matrix::zeros(fan_in, fan_out);
        for v in weight.data_mut() {
            *v = rng.uniform_symmetric(half_width);
        }
        Dense {
            weight,
            bias: Matrix::zeros(1, fan_out),
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

/// Dense stack with ReLU hidden activations and a configurable head.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub head: HeadKind,
}

impl Mlp {
    pub fn init(dims: &[usize], head: HeadKind, rng: &mut Rng) -> Mlp {
        assert!(dims.len() >= 2, "an MLP needs at least input and output widths");
        let layers = dims
            .windows(2)
            .map(|w| Dense::init(w[0], w[1], rng))
            .collect();
        Mlp { layers, head }
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].weight.rows()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().unwrap().weight.cols()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    pub fn matrices(&self) -> Vec<&Matrix> {
        self.layers
            .iter()
            .flat_map(|l| [&l.weight, &l.bias])
            .collect()
    }

    pub fn matrices_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }
}

/// θ1 and θ2: the two encoding heads.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    /// f1: feature -> (0,1)^M relaxed code, sigmoid head.
    pub code_head: Mlp,
    /// f2: feature -> R^L continuous latent, linear head.
    pub latent_head: Mlp,
}

/// θ3: the L x L graph-convolution weight.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnParams {
    pub weight: Matrix,
}

/// θ4: decoder from the propagated latent back to feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderParams {
    pub net: Mlp,
}

/// θ5: classification head on the binary code. The projection is C x M and
/// the bias has width C, so the group contributes C*M + C parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierParams {
    pub weight: Matrix,
    pub bias: Matrix,
}

impl ClassifierParams {
    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

/// ψ1 and ψ2: discriminators on codes and propagated latents. Both end in a
/// linear logit layer; probabilities are produced by a clamped sigmoid so
/// their logarithms stay finite.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorParams {
    pub code: Mlp,
    pub latent: Mlp,
}

/// Every trainable group plus the widths that created them.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub encoder: EncoderParams,
    pub gcn: GcnParams,
    pub decoder: DecoderParams,
    pub classifier: ClassifierParams,
    pub discriminators: DiscriminatorParams,
}

impl ModelParams {
    /// Deterministic initialization: symmetric uniform fan-in scaling for
    /// weights, zero biases. The draw order is fixed, so one seed pins the
    /// whole parameter set.
    pub fn init(config: &ModelConfig, rng: &mut Rng) -> Result<ModelParams> {
        config.validate()?;
        let code_head = Mlp::init(&config.f1_dims(), HeadKind::Sigmoid, rng);
        let latent_head = Mlp::init(&config.f2_dims(), HeadKind::Linear, rng);
        let gcn_layer = Dense::init(config.latent_dim, config.latent_dim, rng);
        let decoder = Mlp::init(&config.decoder_dims(), HeadKind::Linear, rng);
        let half = 1.0 / (config.code_bits as f64).sqrt();
        let mut cls_weight = Matrix::zeros(config.classes, config.code_bits);
        for v in cls_weight.data_mut() {
            *v = rng.uniform_symmetric(half);
        }
        let disc_code = Mlp::init(&config.d1_dims(), HeadKind::Linear, rng);
        let disc_latent = Mlp::init(&config.d2_dims(), HeadKind::Linear, rng);
        Ok(ModelParams {
            config: config.clone(),
            encoder: EncoderParams {
                code_head,
                latent_head,
            },
            gcn: GcnParams {
                weight: gcn_layer.weight,
            },
            decoder: DecoderParams { net: decoder },
            classifier: ClassifierParams {
                weight: cls_weight,
                bias: Matrix::zeros(1, config.classes),
            },
            discriminators: DiscriminatorParams {
                code: disc_code,
                latent: disc_latent,
            },
        })
    }

    /// Auto-encoder side {θ1..θ5} in canonical order.
    pub fn theta(&self) -> Vec<&Matrix> {
        let mut out = self.encoder.code_head.matrices();
        out.extend(self.encoder.latent_head.matrices());
        out.push(&self.gcn.weight);
        out.extend(self.decoder.net.matrices());
        out.push(&self.classifier.weight);
        out.push(&self.classifier.bias);
        out
    }

    pub fn theta_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = self.encoder.code_head.matrices_mut();
        out.extend(self.encoder.latent_head.matrices_mut());
        out.push(&mut self.gcn.weight);
        out.extend(self.decoder.net.matrices_mut());
        out.push(&mut self.classifier.weight);
        out.push(&mut self.classifier.bias);
        out
    }

    /// Discriminator side {ψ1, ψ2} in canonical order.
    pub fn psi(&self) -> Vec<&Matrix> {
        let mut out = self.discriminators.code.matrices();
        out.extend(self.discriminators.latent.matrices());
        out
    }

    pub fn psi_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = self.discriminators.code.matrices_mut();
        out.extend(self.discriminators.latent.matrices_mut());
        out
    }

    /// Trainable scalar counts per parameter group.
    pub fn group_counts(&self) -> Vec<(&'static str, usize)> {
        vec![
            ("theta1_encoder_code", self.encoder.code_head.param_count()),
            (
                "theta2_encoder_latent",
                self.encoder.latent_head.param_count(),
            ),
            ("theta3_gcn", self.gcn.weight.len()),
            ("theta4_decoder", self.decoder.net.param_count()),
            ("theta5_classifier", self.classifier.param_count()),
            (
                "psi1_discriminator_code",
                self.discriminators.code.param_count(),
            ),
            (
                "psi2_discriminator_latent",
                self.discriminators.latent.param_count(),
            ),
        ]
    }

    pub fn total_param_count(&self) -> usize {
        self.group_counts().iter().map(|(_, n)| n).sum()
    }

    pub fn theta_digest(&self) -> u64 {
        digest_matrices(&self.theta())
    }

    pub fn psi_digest(&self) -> u64 {
        digest_matrices(&self.psi())
    }
}

/// FNV-1a over shapes and value bits; stable across platforms.
pub fn digest_matrices(ms: &[&Matrix]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    for m in ms {
        eat(&(m.rows() as u64).to_le_bytes());
        eat(&(m.cols() as u64).to_le_bytes());
        for v in m.data() {
            eat(&v.to_bits().to_le_bytes());
        }
    }
    h
}
