//! Helpers shared by the integration suites.

use daef::federation::{BroadcastPayload, KnowledgePacket, PacketBody};
use daef::linalg::{svd_thin, Matrix};
use daef::rng::SplitMix64;
use daef::rolann::RolannPartial;

pub fn random_matrix(rng: &mut SplitMix64, rows: usize, cols: usize) -> Matrix {
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.uniform(-1.0, 1.0)).collect();
    Matrix::from_vec(rows, cols, data).expect("finite random data")
}

/// Largest principal angle between the column spans of two orthonormal
/// factors, via the sine of the projector residual (accurate for small
/// angles, where the cosine route loses everything to rounding).
pub fn max_principal_angle(a: &Matrix, b: &Matrix) -> f64 {
    let ab = a.transpose_matmul(b).expect("compatible spans");
    let proj = a.matmul(&ab).expect("projection");
    let mut resid = b.clone();
    for i in 0..resid.rows() {
        for j in 0..resid.cols() {
            resid[(i, j)] -= proj[(i, j)];
        }
    }
    let sines = svd_thin(&resid).expect("residual factorizes").s;
    sines.first().copied().unwrap_or(0.0).min(1.0).asin()
}

/// Random but schema-valid packet of a rotating kind, for codec fuzzing.
pub fn random_packet(rng: &mut SplitMix64, which: usize) -> KnowledgePacket {
    let dim = 2 + rng.uniform_usize(6);
    let rank = 1 + rng.uniform_usize(dim);
    let random_partial = |rng: &mut SplitMix64| RolannPartial {
        m: (0..dim).map(|_| rng.uniform(-2.0, 2.0)).collect(),
        u: random_matrix(rng, dim, rank),
        s: (0..rank).map(|_| rng.uniform(0.0, 3.0)).collect(),
        count: rng.uniform_usize(1000),
    };
    let body = match which % 3 {
        0 => PacketBody::EncoderStats {
            us_product: random_matrix(rng, dim, rank),
            sample_count: rng.uniform_usize(10_000),
        },
        1 => PacketBody::LayerPartials {
            layer_index: rng.uniform_usize(5),
            partials: (0..1 + rng.uniform_usize(4))
                .map(|_| random_partial(rng))
                .collect(),
        },
        _ => PacketBody::ModelBroadcast {
            payload: BroadcastPayload::Layer {
                layer_index: rng.uniform_usize(5),
                weights: random_matrix(rng, dim, rank),
                bias: (0..rank).map(|_| rng.uniform(-1.0, 1.0)).collect(),
            },
        },
    };
    KnowledgePacket::new(
        "session",
        &format!("node-{}", which % 4),
        which as u64,
        body,
    )
}

/// Splits columns into `parts` contiguous blocks with deliberately uneven
/// widths (the last block absorbs the remainder).
pub fn uneven_blocks(x: &Matrix, parts: usize) -> Vec<Matrix> {
    let mut blocks = Vec::with_capacity(parts);
    let mut start = 0;
    for p in 0..parts {
        let width = if p + 1 == parts {
            x.cols() - start
        } else {
            ((x.cols() / parts).max(1) + p % 2).min(x.cols() - start - (parts - p - 1))
        };
        let idx: Vec<usize> = (start..start + width).collect();
        blocks.push(x.select_columns(&idx).expect("valid block"));
        start += width;
    }
    blocks
}
