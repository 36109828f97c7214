use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng, Tape, Var};

use super::{
    ClassifierParams, DecoderParams, GcnParams, HeadKind, Mlp, ModelParams, LOGIT_CLAMP,
};

/// How the binary bottleneck is produced from the relaxed (0,1) activations.
#[derive(Debug)]
pub enum NeuronMode<'r> {
    /// Compare against fresh uniform thresholds; one Monte Carlo sample of
    /// the code per row. Gradients pass through the straight-through
    /// surrogate.
    Stochastic(&'r mut Rng),
    /// Thresholds fixed at 0.5; the deterministic out-of-sample rule.
    Thresholded,
    /// Skip binarization entirely and use the relaxed activations as the
    /// code. The network becomes smooth end to end, which is what
    /// finite-difference gradient checks need.
    Relaxed,
}

/// One batch worth of binary codes plus the relaxed activations behind them.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchCodes {
    /// N x M entries in {0,1}.
    pub bits: Matrix,
    /// N x M pre-threshold sigmoid outputs in (0,1).
    pub relaxed: Matrix,
}

impl BatchCodes {
    pub fn validate(&self) -> Result<()> {
        if self.bits.shape() != self.relaxed.shape() {
            return Err(Error::Dimension(format!(
                "bits shape {:?} does not match relaxed shape {:?}",
                self.bits.shape(),
                self.relaxed.shape()
            )));
        }
        if self.bits.data().iter().any(|&b| b != 0.0 && b != 1.0) {
            return Err(Error::data("batch codes must be 0/1"));
        }
        if self.relaxed.data().iter().any(|&r| !(0.0..=1.0).contains(&r)) {
            return Err(Error::data("relaxed activations must lie in [0,1]"));
        }
        Ok(())
    }

    pub fn batch_size(&self) -> usize {
        self.bits.rows()
    }

    pub fn code_bits(&self) -> usize {
        self.bits.cols()
    }
}

/// b^i = 1 iff relaxed^i >= eps^i. Ties map to 1, matching the training rule.
pub fn stochastic_binarize(relaxed: &Matrix, eps: &Matrix) -> Matrix {
    debug_assert_eq!(relaxed.shape(), eps.shape());
    relaxed.zip_unchecked(eps, |r, e| if r >= e { 1.0 } else { 0.0 })
}

/// An MLP's parameters recorded on a tape.
pub struct MlpVars<'t> {
    layers: Vec<(Var<'t>, Var<'t>)>,
    head: HeadKind,
}

impl<'t> MlpVars<'t> {
    pub fn new(tape: &'t Tape, mlp: &Mlp) -> Self {
        MlpVars {
            layers: mlp
                .layers
                .iter()
                .map(|l| (tape.leaf(l.weight.clone()), tape.leaf(l.bias.clone())))
                .collect(),
            head: mlp.head,
        }
    }

    pub fn forward(&self, x: Var<'t>) -> Var<'t> {
        let last = self.layers.len() - 1;
        let mut h = x;
        for (i, (w, b)) in self.layers.iter().enumerate() {
            h = h.matmul(*w).add_row(*b);
            if i < last {
                h = h.relu();
            } else if self.head == HeadKind::Sigmoid {
                h = h.sigmoid();
            }
        }
        h
    }

    pub fn param_vars(&self) -> Vec<Var<'t>> {
        self.layers.iter().flat_map(|&(w, b)| [w, b]).collect()
    }
}

/// Every parameter group recorded on one tape, in the same canonical order
/// as `ModelParams::theta` / `ModelParams::psi`.
pub struct ModelVars<'t> {
    pub enc_code: MlpVars<'t>,
    pub enc_latent: MlpVars<'t>,
    pub gcn_weight: Var<'t>,
    pub decoder: MlpVars<'t>,
    pub cls_weight: Var<'t>,
    pub cls_bias: Var<'t>,
    pub disc_code: MlpVars<'t>,
    pub disc_latent: MlpVars<'t>,
}

impl<'t> ModelVars<'t> {
    pub fn new(tape: &'t Tape, params: &ModelParams) -> Self {
        ModelVars {
            enc_code: MlpVars::new(tape, &params.encoder.code_head),
            enc_latent: MlpVars::new(tape, &params.encoder.latent_head),
            gcn_weight: tape.leaf(params.gcn.weight.clone()),
            decoder: MlpVars::new(tape, &params.decoder.net),
            cls_weight: tape.leaf(params.classifier.weight.clone()),
            cls_bias: tape.leaf(params.classifier.bias.clone()),
            disc_code: MlpVars::new(tape, &params.discriminators.code),
            disc_latent: MlpVars::new(tape, &params.discriminators.latent),
        }
    }

    pub fn theta_vars(&self) -> Vec<Var<'t>> {
        let mut out = self.enc_code.param_vars();
        out.extend(self.enc_latent.param_vars());
        out.push(self.gcn_weight);
        out.extend(self.decoder.param_vars());
        out.push(self.cls_weight);
        out.push(self.cls_bias);
        out
    }

    pub fn psi_vars(&self) -> Vec<Var<'t>> {
        let mut out = self.disc_code.param_vars();
        out.extend(self.disc_latent.param_vars());
        out
    }
}

/// f1 plus the binarization step. Returns (relaxed, code).
pub fn encode_code_path<'t>(
    vars: &ModelVars<'t>,
    x: Var<'t>,
    mode: NeuronMode<'_>,
) -> (Var<'t>, Var<'t>) {
    let relaxed = vars.enc_code.forward(x);
    let code = match mode {
        NeuronMode::Stochastic(rng) => {
            let value = relaxed.value();
            let eps = rng.uniform_matrix(value.rows(), value.cols());
            relaxed.straight_through(stochastic_binarize(&value, &eps))
        }
        NeuronMode::Thresholded => {
            let value = relaxed.value();
            let half = Matrix::filled(value.rows(), value.cols(), 0.5);
            relaxed.straight_through(stochastic_binarize(&value, &half))
        }
        NeuronMode::Relaxed => relaxed,
    };
    (relaxed, code)
}

/// Batch similarity graph from codes: all-ones plus the symmetrized cross
/// terms divided by the code length. For 0/1 codes this equals
/// 1 - hamming/M entry-wise, with unit diagonal.
pub fn adjacency_from_codes<'t>(tape: &'t Tape, code: Var<'t>) -> Var<'t> {
    let (n, m) = code.shape();
    let ones_nm = tape.leaf(Matrix::ones(n, m));
    let ones_nn = tape.leaf(Matrix::ones(n, n));
    let shifted = code.sub(ones_nm);
    let cross = code.matmul(shifted.t()).add(shifted.matmul(code.t()));
    ones_nn.add(cross.div_scalar(m as f64))
}

/// Symmetric-normalized propagation: sigmoid(D^{-1/2} A D^{-1/2} Z W) with
/// D the diagonal of row sums of A.
pub fn gcn_propagate<'t>(z: Var<'t>, a: Var<'t>, w: Var<'t>) -> Var<'t> {
    let row_sums = a.row_sum();
    {
        let v = row_sums.value();
        assert!(
            v.data().iter().all(|&d| d > 0.0),
            "graph degree matrix is singular: zero row sum"
        );
    }
    let inv_sqrt = row_sums.powf(-0.5);
    let outer = inv_sqrt.matmul(inv_sqrt.t());
    let normalized = a.mul(outer);
    normalized.matmul(z).matmul(w).sigmoid()
}

/// Classification head: sigmoid(code W^T + bias), rows of codes to rows of
/// per-class probabilities.
pub fn classify_codes<'t>(code: Var<'t>, weight: Var<'t>, bias: Var<'t>) -> Var<'t> {
    code.matmul(weight.t()).add_row(bias).sigmoid()
}

/// Discriminator logits, clamped so downstream logarithms stay finite.
pub fn discriminator_logits<'t>(disc: &MlpVars<'t>, v: Var<'t>) -> Var<'t> {
    disc.forward(v).clamp(-LOGIT_CLAMP, LOGIT_CLAMP)
}

/// Everything the auto-encoding objective needs from one forward pass.
pub struct ForwardPass<'t> {
    pub relaxed: Var<'t>,
    pub code: Var<'t>,
    pub latent: Var<'t>,
    pub adjacency: Var<'t>,
    pub propagated: Var<'t>,
    pub reconstruction: Var<'t>,
}

/// Single forward implementation shared by training and evaluation.
pub fn forward_autoencoder<'t>(
    tape: &'t Tape,
    vars: &ModelVars<'t>,
    x: &Matrix,
    mode: NeuronMode<'_>,
) -> ForwardPass<'t> {
    let xv = tape.leaf(x.clone());
    let (relaxed, code) = encode_code_path(vars, xv, mode);
    let latent = vars.enc_latent.forward(xv);
    let adjacency = adjacency_from_codes(tape, code);
    let propagated = gcn_propagate(latent, adjacency, vars.gcn_weight);
    let reconstruction = vars.decoder.forward(propagated);
    ForwardPass {
        relaxed,
        code,
        latent,
        adjacency,
        propagated,
        reconstruction,
    }
}

fn check_feature_width(params: &ModelParams, x: &Matrix) -> Result<()> {
    if x.cols() != params.config.feature_dim {
        return Err(Error::Dimension(format!(
            "input width {} does not match model feature_dim {}",
            x.cols(),
            params.config.feature_dim
        )));
    }
    Ok(())
}

/// Encode a batch: stochastic binary codes plus the continuous latent.
pub fn encode_twin(
    x: &Matrix,
    params: &ModelParams,
    rng: &mut Rng,
) -> Result<(BatchCodes, Matrix)> {
    check_feature_width(params, x)?;
    x.check_finite("encode_twin input")?;
    let tape = Tape::new();
    let vars = ModelVars::new(&tape, params);
    let xv = tape.leaf(x.clone());
    let (relaxed, code) = encode_code_path(&vars, xv, NeuronMode::Stochastic(rng));
    let latent = vars.enc_latent.forward(xv);
    let relaxed_value = relaxed.value();
    relaxed_value.check_finite("encode_twin relaxed")?;
    let latent_value = latent.value();
    latent_value.check_finite("encode_twin latent")?;
    Ok((
        BatchCodes {
            bits: code.value(),
            relaxed: relaxed_value,
        },
        latent_value,
    ))
}

/// Batch adjacency from binary codes (plain-value route).
pub fn adjacency(codes: &BatchCodes) -> Result<Matrix> {
    codes.validate()?;
    if codes.batch_size() == 0 || codes.code_bits() == 0 {
        return Err(Error::Dimension(
            "adjacency needs at least one row and one bit".into(),
        ));
    }
    let tape = Tape::new();
    let code = tape.leaf(codes.bits.clone());
    Ok(adjacency_from_codes(&tape, code).value())
}

/// Graph propagation on plain values.
pub fn gcn_forward(z: &Matrix, a: &Matrix, gcn: &GcnParams) -> Result<Matrix> {
    if a.rows() != a.cols() || a.rows() != z.rows() {
        return Err(Error::Dimension(format!(
            "adjacency {:?} incompatible with latent {:?}",
            a.shape(),
            z.shape()
        )));
    }
    if z.cols() != gcn.weight.rows() {
        return Err(Error::Dimension(format!(
            "latent width {} does not match GCN weight {:?}",
            z.cols(),
            gcn.weight.shape()
        )));
    }
    for i in 0..a.rows() {
        let degree: f64 = a.row(i).iter().sum();
        if degree <= 0.0 {
            return Err(Error::Degenerate(format!(
                "zero row sum at graph node {i}"
            )));
        }
    }
    let tape = Tape::new();
    let zv = tape.leaf(z.clone());
    let av = tape.leaf(a.clone());
    let wv = tape.leaf(gcn.weight.clone());
    Ok(gcn_propagate(zv, av, wv).value())
}

/// Decode propagated latents back to feature space.
pub fn decode(z_prime: &Matrix, decoder: &DecoderParams) -> Result<Matrix> {
    if z_prime.cols() != decoder.net.input_width() {
        return Err(Error::Dimension(format!(
            "latent width {} does not match decoder input {}",
            z_prime.cols(),
            decoder.net.input_width()
        )));
    }
    let tape = Tape::new();
    let vars = MlpVars::new(&tape, &decoder.net);
    let out = vars.forward(tape.leaf(z_prime.clone())).value();
    out.check_finite("decode")?;
    Ok(out)
}

/// Probability that `v` comes from the target prior, according to one
/// discriminator half. `v` is a single row.
pub fn discriminate(disc: &Mlp, v: &Matrix) -> Result<f64> {
    if v.rows() != 1 || v.cols() != disc.input_width() {
        return Err(Error::Dimension(format!(
            "discriminator expects a 1x{} row, got {:?}",
            disc.input_width(),
            v.shape()
        )));
    }
    let tape = Tape::new();
    let vars = MlpVars::new(&tape, disc);
    let logit = discriminator_logits(&vars, tape.leaf(v.clone()));
    Ok(crate::numerics::sigmoid(&logit.value())[(0, 0)])
}

/// Per-class probabilities for one binary code row.
pub fn classify(cls: &ClassifierParams, code_row: &Matrix) -> Result<Matrix> {
    if code_row.rows() != 1 || code_row.cols() != cls.weight.cols() {
        return Err(Error::Dimension(format!(
            "classifier expects a 1x{} code row, got {:?}",
            cls.weight.cols(),
            code_row.shape()
        )));
    }
    if code_row.data().iter().any(|&b| b != 0.0 && b != 1.0) {
        return Err(Error::data("classifier input must be a 0/1 code row"));
    }
    let tape = Tape::new();
    let w = tape.leaf(cls.weight.clone());
    let b = tape.leaf(cls.bias.clone());
    Ok(classify_codes(tape.leaf(code_row.clone()), w, b).value())
}

/// Prior draws for the two discriminators: fair-coin bit rows and uniform
/// (0,1) latent rows.
pub fn sample_priors(rng: &mut Rng, n: usize, code_bits: usize, latent_dim: usize) -> (Matrix, Matrix) {
    let bits = rng.coin_matrix(n, code_bits);
    let latents = rng.uniform_matrix(n, latent_dim);
    (bits, latents)
}
