//! Seeded weight initialization for the decoder's auxiliary networks.
//!
//! Every federation node must derive the same auxiliary weights and biases
//! from the broadcast seed, so the draw order is fixed: per layer, the weight
//! matrix row-major first, then the bias vector.

use crate::linalg::Matrix;
use crate::rng::SplitMix64;

/// Glorot uniform: entries drawn from [−√(6/(fan_in+fan_out)), +√(6/(fan_in+fan_out))],
/// filled row-major into a (fan_in × fan_out) matrix.
pub fn xavier_uniform(rng: &mut SplitMix64, fan_in: usize, fan_out: usize) -> Matrix {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data: Vec<f64> = (0..fan_in * fan_out)
        .map(|_| rng.uniform(-limit, limit))
        .collect();
    Matrix::from_parts(fan_in, fan_out, data)
}

/// Standard-normal bias vector, drawn after the layer's weights.
pub fn normal_bias(rng: &mut SplitMix64, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.standard_normal()).collect()
}
