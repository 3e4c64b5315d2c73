//! Closed-form regularized one-layer training.
//!
//! For one output neuron with desired outputs `d`, the solve minimizes the
//! pre-activation mean squared error with an L2 penalty. Writing `d̄ = f⁻¹(d)`
//! and `F = diag(f′(d̄))`, the optimum is
//!
//! ```text
//!   w = (X F² Xᵀ + λI)⁻¹ · X F² d̄
//! ```
//!
//! computed here through the thin SVD of X·F so that the per-neuron knowledge
//! `(M, U, S)` with `M = X F² d̄` can be merged exactly across sample chunks:
//! M adds, and the U·S factors merge through one more SVD. Folding chunk
//! partials and solving reproduces the whole-data solution, which is what
//! makes distributed and incremental training exact rather than approximate.
//!
//! Inputs are augmented with a constant-one row, so a solved weight vector
//! carries the bias as its last component.

use crate::linalg::{dsvd_merge, svd_thin, LinalgError, Matrix, SvdThin};

#[derive(Debug, thiserror::Error)]
pub enum RolannError {
    #[error("input contains non-finite values")]
    NonFiniteInput,
    #[error("activation domain error: {0}")]
    DomainError(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("singular system: lambda = 0 with singular value {value:.3e} below 1e-10")]
    SingularSystem { value: f64 },
    #[error("neuron {neuron}: {source}")]
    Neuron {
        neuron: usize,
        #[source]
        source: Box<RolannError>,
    },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Neural activation with the value/derivative/inverse triple needed by the
/// pre-activation formulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Linear,
    #[serde(alias = "logistic-sigmoid", alias = "logistic_sigmoid")]
    Sigmoid,
    Tanh,
}

impl Activation {
    pub fn value(self, z: f64) -> f64 {
        match self {
            Activation::Linear => z,
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Tanh => z.tanh(),
        }
    }

    /// f′ evaluated at the pre-activation point z.
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Sigmoid => {
                let y = self.value(z);
                y * (1.0 - y)
            }
            Activation::Tanh => {
                let y = z.tanh();
                1.0 - y * y
            }
        }
    }

    pub fn inverse(self, y: f64) -> Result<f64, RolannError> {
        let z = match self {
            Activation::Linear => y,
            Activation::Sigmoid => (y / (1.0 - y)).ln(),
            Activation::Tanh => 0.5 * ((1.0 + y) / (1.0 - y)).ln(),
        };
        if z.is_finite() {
            Ok(z)
        } else {
            Err(RolannError::DomainError(format!(
                "{self:?} has no finite inverse at {y}"
            )))
        }
    }

    /// Clamps a target into the invertible range shrunk by `eps` from each
    /// open endpoint. Linear passes through.
    pub fn clamp_target(self, y: f64, eps: f64) -> f64 {
        match self {
            Activation::Linear => y,
            Activation::Sigmoid => y.clamp(eps, 1.0 - eps),
            Activation::Tanh => y.clamp(-1.0 + eps, 1.0 - eps),
        }
    }
}

/// Preprocessed quantities for one output neuron: inverse-mapped targets,
/// derivative weights, and bias-augmented inputs.
#[derive(Debug, Clone)]
pub struct RolannWorkset {
    pub d_bar: Vec<f64>,
    pub f_prime: Vec<f64>,
    pub inputs_aug: Matrix,
}

/// Per-neuron federated knowledge. `m` accumulates additively; `u`/`s` merge
/// through the distributed SVD. `count` tracks absorbed samples (metadata
/// only — the solve never needs it).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RolannPartial {
    pub m: Vec<f64>,
    pub u: Matrix,
    pub s: Vec<f64>,
    pub count: usize,
}

pub fn make_workset(
    inputs: &Matrix,
    desired: &[f64],
    act: Activation,
    clamp_eps: f64,
) -> Result<RolannWorkset, RolannError> {
    if !(clamp_eps > 0.0 && clamp_eps <= 0.1) {
        return Err(RolannError::DomainError(format!(
            "clamp_eps must lie in (0, 0.1], got {clamp_eps}"
        )));
    }
    if desired.len() != inputs.cols() {
        return Err(RolannError::ShapeMismatch(format!(
            "{} desired values for {} samples",
            desired.len(),
            inputs.cols()
        )));
    }
    if !inputs.is_finite() || !desired.iter().all(|v| v.is_finite()) {
        return Err(RolannError::NonFiniteInput);
    }
    let mut d_bar = Vec::with_capacity(desired.len());
    let mut f_prime = Vec::with_capacity(desired.len());
    for &d in desired {
        let z = act.inverse(act.clamp_target(d, clamp_eps))?;
        d_bar.push(z);
        f_prime.push(act.derivative(z));
    }
    Ok(RolannWorkset {
        d_bar,
        f_prime,
        inputs_aug: inputs.with_ones_row(),
    })
}

/// Condenses a workset into its knowledge partial:
/// `u,s` from the thin SVD of X·diag(f′) and `m = X (f′ ⊙ f′ ⊙ d̄)`.
pub fn compute_partial(ws: &RolannWorkset) -> Result<RolannPartial, RolannError> {
    let weighted = ws.inputs_aug.scale_columns(&ws.f_prime)?;
    let svd = svd_thin(&weighted)?;
    let rhs: Vec<f64> = ws
        .f_prime
        .iter()
        .zip(&ws.d_bar)
        .map(|(f, d)| f * f * d)
        .collect();
    let m = ws.inputs_aug.matvec(&rhs)?;
    Ok(RolannPartial {
        m,
        u: svd.u,
        s: svd.s,
        count: ws.inputs_aug.cols(),
    })
}

/// Exact knowledge merge: M adds, U·S factors merge through one more SVD.
/// Commutative and associative in the solved weights.
pub fn merge_partials(a: &RolannPartial, b: &RolannPartial) -> Result<RolannPartial, RolannError> {
    if a.m.len() != b.m.len() {
        return Err(RolannError::ShapeMismatch(format!(
            "partials have incompatible sizes ({} vs {})",
            a.m.len(),
            b.m.len()
        )));
    }
    let merged = dsvd_merge(&[
        SvdThin {
            u: a.u.clone(),
            s: a.s.clone(),
        },
        SvdThin {
            u: b.u.clone(),
            s: b.s.clone(),
        },
    ])?;
    let m = a.m.iter().zip(&b.m).map(|(x, y)| x + y).collect();
    Ok(RolannPartial {
        m,
        u: merged.u,
        s: merged.s,
        count: a.count + b.count,
    })
}

/// `w = U · diag(1/(s² + λ)) · Uᵀ · m`. The last component is the bias.
pub fn solve_weights(p: &RolannPartial, lambda: f64) -> Result<Vec<f64>, RolannError> {
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(RolannError::DomainError(format!(
            "lambda must be finite and non-negative, got {lambda}"
        )));
    }
    if lambda == 0.0 {
        if let Some(&bad) = p.s.iter().find(|&&s| s <= 1e-10) {
            return Err(RolannError::SingularSystem { value: bad });
        }
    }
    let utm = p.u.transpose().matvec(&p.m)?;
    let scaled: Vec<f64> = utm
        .iter()
        .zip(&p.s)
        .map(|(v, s)| v / (s * s + lambda))
        .collect();
    Ok(p.u.matvec(&scaled)?)
}

/// One layer fitted neuron-by-neuron: weights are (inputs × outputs), applied
/// as `weightsᵀ · X + bias·1ᵀ`. The per-neuron partials are retained so the
/// layer can be re-solved after knowledge merges.
#[derive(Debug, Clone)]
pub struct LayerFit {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub partials: Vec<RolannPartial>,
}

/// Fits every output neuron independently. Results are written to
/// pre-assigned slots, so any `workers` count yields bitwise-equal output.
type NeuronFit = (Vec<f64>, RolannPartial);

pub fn fit_layer(
    inputs: &Matrix,
    targets: &Matrix,
    act: Activation,
    lambda: f64,
    clamp_eps: f64,
    workers: usize,
) -> Result<LayerFit, RolannError> {
    if inputs.cols() != targets.cols() {
        return Err(RolannError::ShapeMismatch(format!(
            "{} input samples vs {} target samples",
            inputs.cols(),
            targets.cols()
        )));
    }
    if workers == 0 {
        return Err(RolannError::DomainError(
            "workers must be at least 1".into(),
        ));
    }
    let m_out = targets.rows();

    let solve_neuron = |neuron: usize| -> Result<NeuronFit, RolannError> {
        let tag = |e: RolannError| RolannError::Neuron {
            neuron,
            source: Box::new(e),
        };
        let ws = make_workset(inputs, targets.row(neuron), act, clamp_eps).map_err(tag)?;
        let partial = compute_partial(&ws).map_err(tag)?;
        let w = solve_weights(&partial, lambda).map_err(tag)?;
        Ok((w, partial))
    };

    let mut solved: Vec<Option<NeuronFit>> = (0..m_out).map(|_| None).collect();
    if workers == 1 || m_out == 1 {
        for (neuron, slot) in solved.iter_mut().enumerate() {
            *slot = Some(solve_neuron(neuron)?);
        }
    } else {
        let chunk = m_out.div_ceil(workers.min(m_out));
        let results: Vec<Result<Vec<(usize, NeuronFit)>, RolannError>> =
            std::thread::scope(|scope| {
                let handles: Vec<_> = (0..m_out)
                    .collect::<Vec<_>>()
                    .chunks(chunk)
                    .map(|neurons| {
                        let neurons = neurons.to_vec();
                        let solve = &solve_neuron;
                        scope.spawn(move || {
                            neurons
                                .into_iter()
                                .map(|n| solve(n).map(|r| (n, r)))
                                .collect()
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("worker panicked"))
                    .collect()
            });
        for res in results {
            for (neuron, fit) in res? {
                solved[neuron] = Some(fit);
            }
        }
    }

    let m_in = inputs.rows();
    let mut weights = Matrix::zeros(m_in, m_out);
    let mut bias = vec![0.0; m_out];
    let mut partials = Vec::with_capacity(m_out);
    for (neuron, slot) in solved.into_iter().enumerate() {
        let (w, partial) = slot.expect("every neuron solved");
        for i in 0..m_in {
            weights[(i, neuron)] = w[i];
        }
        bias[neuron] = w[m_in];
        partials.push(partial);
    }
    Ok(LayerFit {
        weights,
        bias,
        partials,
    })
}
