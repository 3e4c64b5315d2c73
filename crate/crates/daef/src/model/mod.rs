//! The autoencoder itself: non-iterative training, prediction, and the
//! knowledge matrices that make trained models mergeable.
//!
//! Training runs in three closed-form stages:
//! 1. the encoder is the rank-m₁ truncation of the (distributable) thin SVD
//!    of the inputs, applied without bias;
//! 2. each hidden decoder layer comes from an auxiliary single-hidden-layer
//!    autoencoder — fixed Glorot weights and normal bias into the hidden
//!    layer, a regularized closed-form solve back out, and the solved output
//!    weights transposed become the forward layer;
//! 3. the last layer is solved directly against the original inputs with a
//!    linear activation.
//!
//! Weight matrices are stored (inputs × outputs) and applied as
//! `Wᵀ·H + b·1ᵀ`, matching the stage that produced them.

pub mod init;
mod io;

pub use io::{load, save, ModelIoError, MODEL_FORMAT_VERSION};

use crate::anomaly::FittedThreshold;
use crate::linalg::{dsvd_merge, svd_thin, truncate, LinalgError, Matrix, SvdThin};
use crate::rng::SplitMix64;
use crate::rolann::{self, Activation, RolannError, RolannPartial};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("insufficient samples: latent dimension {needed} needs at least that many, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("decoder layer {layer}: {source}")]
    Layer {
        layer: usize,
        #[source]
        source: RolannError,
    },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

fn default_clamp_eps() -> f64 {
    1e-3
}

/// Network shape and training hyperparameters. `layer_sizes` runs input →
/// latent → … → output, so an autoencoder always has equal first and last
/// entries and at least three of them.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Architecture {
    pub layer_sizes: Vec<usize>,
    pub hidden_activation: Activation,
    pub lambda_hidden: f64,
    pub lambda_last: f64,
    #[serde(default = "default_clamp_eps")]
    pub clamp_eps: f64,
    #[serde(default)]
    pub init_seed: u64,
}

impl Architecture {
    pub fn validate(&self) -> Result<(), ModelError> {
        let err = |msg: String| Err(ModelError::InvalidArchitecture(msg));
        let sizes = &self.layer_sizes;
        if sizes.len() < 3 {
            return err(format!(
                "need at least [input, latent, output], got {} layers",
                sizes.len()
            ));
        }
        if sizes.contains(&0) {
            return err("layer sizes must be positive".into());
        }
        if sizes.first() != sizes.last() {
            return err(format!(
                "an autoencoder reproduces its input: first layer {} != last layer {}",
                sizes[0],
                sizes[sizes.len() - 1]
            ));
        }
        if sizes[1] > sizes[0] {
            return err(format!(
                "latent dimension {} exceeds input dimension {}",
                sizes[1], sizes[0]
            ));
        }
        if !(self.lambda_hidden > 0.0 && self.lambda_hidden.is_finite()) {
            return err(format!(
                "lambda_hidden must be positive, got {}",
                self.lambda_hidden
            ));
        }
        if !(self.lambda_last > 0.0 && self.lambda_last.is_finite()) {
            return err(format!(
                "lambda_last must be positive, got {}",
                self.lambda_last
            ));
        }
        if !(self.clamp_eps > 0.0 && self.clamp_eps <= 0.1) {
            return err(format!(
                "clamp_eps must lie in (0, 0.1], got {}",
                self.clamp_eps
            ));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn latent_dim(&self) -> usize {
        self.layer_sizes[1]
    }

    /// Widths of the decoder's hidden layers (everything strictly between the
    /// latent layer and the output layer).
    pub fn decoder_hidden_sizes(&self) -> &[usize] {
        &self.layer_sizes[2..self.layer_sizes.len() - 1]
    }

    /// Number of decoder layers, the last of which is the linear output layer.
    pub fn decoder_layer_count(&self) -> usize {
        self.layer_sizes.len() - 2
    }
}

/// A trained network plus the accumulated knowledge needed to merge it with
/// other models: the encoder's truncated factorization and one solver partial
/// per output neuron of every decoder layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DaefModel {
    pub arch: Architecture,
    /// m₀ × m₁, orthonormal columns, no bias.
    pub encoder_weights: Matrix,
    pub decoder_weights: Vec<Matrix>,
    pub decoder_biases: Vec<Vec<f64>>,
    pub encoder_knowledge: SvdThin,
    pub layer_knowledge: Vec<Vec<RolannPartial>>,
    pub threshold: Option<FittedThreshold>,
}

/// Mergeable knowledge exported from a trained model: everything another node
/// needs to fold this model into its own, none of it sample-sized.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelKnowledge {
    pub arch: Architecture,
    pub encoder: SvdThin,
    pub layers: Vec<Vec<RolannPartial>>,
}

/// Result of fitting one decoder layer through its auxiliary network.
#[derive(Debug, Clone)]
pub struct DecoderLayerFit {
    /// Forward weights (m_l × m_{l+1}).
    pub weights: Matrix,
    /// Forward bias (length m_{l+1}) — the auxiliary hidden bias, which every
    /// node reproduces from the shared seed.
    pub bias: Vec<f64>,
    /// Layer output on the training data (m_{l+1} × n).
    pub output: Matrix,
    /// One partial per auxiliary output neuron (m_l of them).
    pub partials: Vec<RolannPartial>,
}

/// Contiguous near-equal column ranges covering 0..n.
fn contiguous_blocks(n: usize, parts: usize) -> Vec<std::ops::Range<usize>> {
    let base = n / parts;
    let extra = n % parts;
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for p in 0..parts {
        let width = base + usize::from(p < extra);
        out.push(start..start + width);
        start += width;
    }
    out
}

/// Trains the full network. The input is split into `partitions` column
/// blocks whose local factorizations merge exactly, so any partition count
/// gives the same model up to rounding; `workers` parallelizes the per-neuron
/// solves without changing a single bit of the result.
pub fn train(
    x: &Matrix,
    arch: &Architecture,
    partitions: usize,
    workers: usize,
) -> Result<DaefModel, ModelError> {
    arch.validate()?;
    if x.rows() != arch.input_dim() {
        return Err(ModelError::ShapeMismatch(format!(
            "data has {} features but the architecture expects {}",
            x.rows(),
            arch.input_dim()
        )));
    }
    if x.cols() < arch.latent_dim() {
        return Err(ModelError::InsufficientSamples {
            needed: arch.latent_dim(),
            got: x.cols(),
        });
    }
    if partitions == 0 || partitions > x.cols() {
        return Err(ModelError::InvalidParameter(format!(
            "partitions must lie in 1..={}, got {partitions}",
            x.cols()
        )));
    }
    if workers == 0 {
        return Err(ModelError::InvalidParameter(
            "workers must be at least 1".into(),
        ));
    }

    // Encoder: per-block thin SVDs merged, truncated to the latent width.
    let mut parts = Vec::with_capacity(partitions);
    for range in contiguous_blocks(x.cols(), partitions) {
        let idx: Vec<usize> = range.collect();
        parts.push(svd_thin(&x.select_columns(&idx)?)?);
    }
    let merged = dsvd_merge(&parts)?;
    let encoder_knowledge = truncate(&merged, arch.latent_dim())?;
    let encoder_weights = encoder_knowledge.u.clone();

    let act = arch.hidden_activation;
    let mut h = encoder_weights.transpose_matmul(x)?.map(|z| act.value(z));

    let mut decoder_weights = Vec::new();
    let mut decoder_biases = Vec::new();
    let mut layer_knowledge = Vec::new();
    let mut stream = SplitMix64::new(arch.init_seed);
    for (layer, &m_next) in arch.decoder_hidden_sizes().iter().enumerate() {
        let fit = train_decoder_layer(
            &h,
            m_next,
            arch.lambda_hidden,
            act,
            arch.clamp_eps,
            &mut stream,
            workers,
        )
        .map_err(|e| match e {
            ModelError::Layer { source, .. } => ModelError::Layer { layer, source },
            other => other,
        })?;
        h = fit.output;
        decoder_weights.push(fit.weights);
        decoder_biases.push(fit.bias);
        layer_knowledge.push(fit.partials);
    }

    // Last layer: direct supervised solve against the original inputs,
    // linear so the output can take any real value.
    let last_layer = arch.decoder_layer_count() - 1;
    let fit = rolann::fit_layer(
        &h,
        x,
        Activation::Linear,
        arch.lambda_last,
        arch.clamp_eps,
        workers,
    )
    .map_err(|source| ModelError::Layer {
        layer: last_layer,
        source,
    })?;
    decoder_weights.push(fit.weights);
    decoder_biases.push(fit.bias);
    layer_knowledge.push(fit.partials);

    Ok(DaefModel {
        arch: arch.clone(),
        encoder_weights,
        decoder_weights,
        decoder_biases,
        encoder_knowledge,
        layer_knowledge,
        threshold: None,
    })
}

/// Trains one hidden decoder layer via its auxiliary autoencoder.
///
/// The auxiliary net projects `h_prev` through fixed seeded weights into an
/// m_next-wide hidden layer, solves the reconstruction back to `h_prev` in
/// closed form, and the solved output weights transposed become the forward
/// layer. The seeded hidden bias doubles as the forward bias. The stream is
/// consumed in a fixed order (weights row-major, then bias), so equal seeds
/// give bitwise-equal layers.
pub fn train_decoder_layer(
    h_prev: &Matrix,
    m_next: usize,
    lambda: f64,
    act: Activation,
    clamp_eps: f64,
    seed_stream: &mut SplitMix64,
    workers: usize,
) -> Result<DecoderLayerFit, ModelError> {
    if m_next == 0 {
        return Err(ModelError::InvalidParameter(
            "layer width must be positive".into(),
        ));
    }
    let aux_weights = init::xavier_uniform(seed_stream, h_prev.rows(), m_next);
    let aux_bias = init::normal_bias(seed_stream, m_next);
    let hidden = aux_weights
        .transpose_matmul(h_prev)?
        .add_col_vector(&aux_bias)?
        .map(|z| act.value(z));
    let solved = rolann::fit_layer(&hidden, h_prev, act, lambda, clamp_eps, workers)
        .map_err(|source| ModelError::Layer { layer: 0, source })?;
    let weights = solved.weights.transpose();
    let output = weights
        .transpose_matmul(h_prev)?
        .add_col_vector(&aux_bias)?
        .map(|z| act.value(z));
    Ok(DecoderLayerFit {
        weights,
        bias: aux_bias,
        output,
        partials: solved.partials,
    })
}

/// Reconstructs inputs: encoder, hidden decoder layers with the hidden
/// activation, then the linear output layer.
pub fn predict(model: &DaefModel, x: &Matrix) -> Result<Matrix, ModelError> {
    if x.rows() != model.arch.input_dim() {
        return Err(ModelError::ShapeMismatch(format!(
            "data has {} features but the model expects {}",
            x.rows(),
            model.arch.input_dim()
        )));
    }
    let act = model.arch.hidden_activation;
    let mut h = model
        .encoder_weights
        .transpose_matmul(x)?
        .map(|z| act.value(z));
    let last = model.decoder_weights.len() - 1;
    for (i, (w, b)) in model
        .decoder_weights
        .iter()
        .zip(&model.decoder_biases)
        .enumerate()
    {
        let pre = w.transpose_matmul(&h)?.add_col_vector(b)?;
        h = if i == last {
            pre
        } else {
            pre.map(|z| act.value(z))
        };
    }
    Ok(h)
}

/// Latent representation, m₁ × n.
pub fn encode(model: &DaefModel, x: &Matrix) -> Result<Matrix, ModelError> {
    if x.rows() != model.arch.input_dim() {
        return Err(ModelError::ShapeMismatch(format!(
            "data has {} features but the model expects {}",
            x.rows(),
            model.arch.input_dim()
        )));
    }
    let act = model.arch.hidden_activation;
    Ok(model
        .encoder_weights
        .transpose_matmul(x)?
        .map(|z| act.value(z)))
}

impl DaefModel {
    /// Largest absolute difference across encoder weights, decoder weights,
    /// and biases. Infinite when the shapes do not line up.
    pub fn max_weight_delta(&self, other: &DaefModel) -> f64 {
        if self.arch.layer_sizes != other.arch.layer_sizes
            || self.decoder_weights.len() != other.decoder_weights.len()
        {
            return f64::INFINITY;
        }
        let mut worst = self.encoder_weights.max_abs_diff(&other.encoder_weights);
        for (a, b) in self.decoder_weights.iter().zip(&other.decoder_weights) {
            worst = worst.max(a.max_abs_diff(b));
        }
        for (a, b) in self.decoder_biases.iter().zip(&other.decoder_biases) {
            for (x, y) in a.iter().zip(b) {
                worst = worst.max((x - y).abs());
            }
        }
        worst
    }

    /// The shareable knowledge: architecture, encoder factorization, and the
    /// per-neuron solver partials of every decoder layer.
    pub fn export_knowledge(&self) -> ModelKnowledge {
        ModelKnowledge {
            arch: self.arch.clone(),
            encoder: self.encoder_knowledge.clone(),
            layers: self.layer_knowledge.clone(),
        }
    }

    /// Re-derives every decoder weight (and the last-layer bias) from the
    /// stored knowledge alone. Hidden-layer biases are seeded values carried
    /// over unchanged. Used after knowledge merges and as the invariant that
    /// the stored partials fully determine the decoder.
    pub fn resolve_decoder_from_knowledge(
        &self,
        knowledge: &[Vec<RolannPartial>],
    ) -> Result<(Vec<Matrix>, Vec<Vec<f64>>), ModelError> {
        let sizes = &self.arch.layer_sizes;
        let layers = self.arch.decoder_layer_count();
        if knowledge.len() != layers {
            return Err(ModelError::ShapeMismatch(format!(
                "{} knowledge layers for {} decoder layers",
                knowledge.len(),
                layers
            )));
        }
        let mut weights = Vec::with_capacity(layers);
        let mut biases = Vec::with_capacity(layers);
        for (d, partials) in knowledge.iter().enumerate() {
            let tag = |source| ModelError::Layer { layer: d, source };
            let in_dim = sizes[d + 1];
            let out_dim = sizes[d + 2];
            if d + 1 < layers {
                // Hidden layer: one partial per auxiliary output neuron; the
                // solved vector's first out_dim entries form a row of W, the
                // trailing auxiliary bias is dropped.
                if partials.len() != in_dim {
                    return Err(ModelError::ShapeMismatch(format!(
                        "layer {d}: {} partials for {} auxiliary outputs",
                        partials.len(),
                        in_dim
                    )));
                }
                let mut w = Matrix::zeros(in_dim, out_dim);
                for (j, partial) in partials.iter().enumerate() {
                    let solved =
                        rolann::solve_weights(partial, self.arch.lambda_hidden).map_err(tag)?;
                    if solved.len() != out_dim + 1 {
                        return Err(ModelError::ShapeMismatch(format!(
                            "layer {d}: partial solves to length {}, expected {}",
                            solved.len(),
                            out_dim + 1
                        )));
                    }
                    for k in 0..out_dim {
                        w[(j, k)] = solved[k];
                    }
                }
                weights.push(w);
                biases.push(self.decoder_biases[d].clone());
            } else {
                // Output layer: solved weights and bias both used directly.
                if partials.len() != out_dim {
                    return Err(ModelError::ShapeMismatch(format!(
                        "last layer: {} partials for {} outputs",
                        partials.len(),
                        out_dim
                    )));
                }
                let mut w = Matrix::zeros(in_dim, out_dim);
                let mut b = vec![0.0; out_dim];
                for (j, partial) in partials.iter().enumerate() {
                    let solved =
                        rolann::solve_weights(partial, self.arch.lambda_last).map_err(tag)?;
                    if solved.len() != in_dim + 1 {
                        return Err(ModelError::ShapeMismatch(format!(
                            "last layer: partial solves to length {}, expected {}",
                            solved.len(),
                            in_dim + 1
                        )));
                    }
                    for i in 0..in_dim {
                        w[(i, j)] = solved[i];
                    }
                    b[j] = solved[in_dim];
                }
                weights.push(w);
                biases.push(b);
            }
        }
        Ok((weights, biases))
    }
}

#[cfg(test)]
pub(crate) mod tests_support {
    use super::*;

    /// A small full-rank training problem shared by serialization tests.
    pub(crate) fn small_problem(seed: u64) -> (Matrix, Architecture) {
        let mut rng = SplitMix64::new(seed);
        let data: Vec<f64> = (0..4 * 30).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let arch = Architecture {
            layer_sizes: vec![4, 2, 3, 4],
            hidden_activation: Activation::Sigmoid,
            lambda_hidden: 0.2,
            lambda_last: 0.2,
            clamp_eps: 1e-3,
            init_seed: seed,
        };
        (Matrix::from_parts(4, 30, data), arch)
    }
}
