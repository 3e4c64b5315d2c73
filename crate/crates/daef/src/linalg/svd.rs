use super::{LinalgError, Matrix};

/// Thin SVD holding only the left factor and the singular values.
///
/// Right singular vectors are never stored: the factorization is shared
/// between nodes and U·S is the only payload that may leave a node, since
/// the sample-side factor would expose the raw data.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SvdThin {
    /// Left singular vectors, orthonormal columns.
    pub u: Matrix,
    /// Singular values, non-increasing and non-negative. `s.len() == u.cols()`.
    pub s: Vec<f64>,
}

impl SvdThin {
    pub fn rank_above(&self, tol: f64) -> usize {
        self.s.iter().filter(|&&v| v > tol).count()
    }

    /// U·diag(s), the shareable product.
    pub fn us_product(&self) -> Matrix {
        self.u
            .scale_columns(&self.s)
            .expect("s length matches u columns")
    }
}

const JACOBI_TOL: f64 = 1e-14;
const MAX_SWEEPS: usize = 128;
/// Rows whose norm falls below this fraction of the (rotation-invariant)
/// Frobenius norm are rounding residue of rank-deficient input. They are
/// frozen rather than rotated — their mutual cosines are noise and would
/// never pass the relative convergence test — and their directions are
/// rebuilt by orthonormal completion. Their norms are still reported, so
/// numerically null singular values are kept, not zeroed.
const DEFLATION_FLOOR: f64 = 1e-14;

/// Thin SVD via one-sided Jacobi, returning U (rows × r) and s (r = min(rows, cols)).
///
/// The rotations orthogonalize the vector set directly, so singular values
/// retain high relative accuracy and U is orthonormal to working precision.
/// Columns are sign-canonicalized (largest-magnitude entry positive) so that
/// independently computed factorizations of the same data are comparable.
pub fn svd_thin(x: &Matrix) -> Result<SvdThin, LinalgError> {
    if !x.is_finite() {
        return Err(LinalgError::NonFiniteInput);
    }
    let (m, n) = (x.rows(), x.cols());
    let svd = if m <= n {
        // Orthogonalize the m rows of x, accumulating the applied rotations;
        // the accumulated factor transposed is U.
        let mut work = x.clone();
        let mut rot = Matrix::identity(m);
        jacobi_orthogonalize_rows(&mut work, Some(&mut rot))?;
        let norms: Vec<f64> = (0..m).map(|i| l2_norm(work.row(i))).collect();
        let order = sort_order_desc(&norms);
        let mut u = Matrix::zeros(m, m);
        let mut s = Vec::with_capacity(m);
        for (out_col, &src) in order.iter().enumerate() {
            s.push(norms[src]);
            let coeffs = rot.row(src);
            for i in 0..m {
                u[(i, out_col)] = coeffs[i];
            }
        }
        SvdThin { u, s }
    } else {
        // Tall: orthogonalize the n rows of xᵀ; normalized rows are the
        // columns of U, no rotation accumulation needed.
        let mut work = x.transpose();
        jacobi_orthogonalize_rows(&mut work, None)?;
        let floor = work.frobenius_norm() * DEFLATION_FLOOR;
        let norms: Vec<f64> = (0..n).map(|i| l2_norm(work.row(i))).collect();
        let order = sort_order_desc(&norms);
        let mut u = Matrix::zeros(m, n);
        let mut s = Vec::with_capacity(n);
        let mut completed: Vec<usize> = Vec::new();
        for (out_col, &src) in order.iter().enumerate() {
            let norm = norms[src];
            s.push(norm);
            if norm > floor {
                let row = work.row(src);
                for i in 0..m {
                    u[(i, out_col)] = row[i] / norm;
                }
            } else {
                completed.push(out_col);
            }
        }
        // Null directions still need orthonormal columns so UᵀU stays the
        // identity; fill them from the best-conditioned unit vectors.
        for &col in &completed {
            fill_orthonormal_column(&mut u, col);
        }
        SvdThin { u, s }
    };
    Ok(canonical_sign(&svd))
}

/// One-sided Jacobi: repeatedly rotate row pairs until all pairs are
/// orthogonal relative to their norms. `rot`, when given, receives the same
/// rotations starting from the identity.
fn jacobi_orthogonalize_rows(
    work: &mut Matrix,
    mut rot: Option<&mut Matrix>,
) -> Result<(), LinalgError> {
    let k = work.rows();
    if k < 2 {
        return Ok(());
    }
    let floor2 = {
        let f = work.frobenius_norm() * DEFLATION_FLOOR;
        f * f
    };
    for _ in 0..MAX_SWEEPS {
        let mut rotated = 0usize;
        for p in 0..k - 1 {
            for q in p + 1..k {
                let (a, b, c) = row_pair_moments(work, p, q);
                if a <= floor2 || b <= floor2 || c.abs() <= JACOBI_TOL * (a * b).sqrt() {
                    continue;
                }
                let zeta = (b - a) / (2.0 * c);
                let t = if zeta >= 0.0 {
                    1.0 / (zeta + (1.0 + zeta * zeta).sqrt())
                } else {
                    -1.0 / (-zeta + (1.0 + zeta * zeta).sqrt())
                };
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                rotate_rows(work, p, q, cs, sn);
                if let Some(r) = rot.as_deref_mut() {
                    rotate_rows(r, p, q, cs, sn);
                }
                rotated += 1;
            }
        }
        if rotated == 0 {
            return Ok(());
        }
    }
    Err(LinalgError::NoConvergence(MAX_SWEEPS))
}

fn row_pair_moments(m: &Matrix, p: usize, q: usize) -> (f64, f64, f64) {
    let rp = m.row(p);
    let rq = m.row(q);
    let mut a = 0.0;
    let mut b = 0.0;
    let mut c = 0.0;
    for (x, y) in rp.iter().zip(rq) {
        a += x * x;
        b += y * y;
        c += x * y;
    }
    (a, b, c)
}

fn rotate_rows(m: &mut Matrix, p: usize, q: usize, cs: f64, sn: f64) {
    debug_assert!(p < q);
    let cols = m.cols();
    for j in 0..cols {
        let vp = m[(p, j)];
        let vq = m[(q, j)];
        m[(p, j)] = cs * vp - sn * vq;
        m[(q, j)] = sn * vp + cs * vq;
    }
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Indices sorted by value descending; ties keep the lower index first.
fn sort_order_desc(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap());
    order
}

/// Writes into `col` a unit vector orthogonal to every other nonzero column.
fn fill_orthonormal_column(u: &mut Matrix, col: usize) {
    let m = u.rows();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for k in 0..m {
        let mut cand = vec![0.0; m];
        cand[k] = 1.0;
        // Two Gram-Schmidt passes against the already-populated columns.
        for _ in 0..2 {
            for j in 0..u.cols() {
                if j == col {
                    continue;
                }
                let dot: f64 = (0..m).map(|i| cand[i] * u[(i, j)]).sum();
                for i in 0..m {
                    cand[i] -= dot * u[(i, j)];
                }
            }
        }
        let norm = l2_norm(&cand);
        if best.as_ref().is_none_or(|(bn, _)| norm > *bn) {
            best = Some((norm, cand));
        }
    }
    let (norm, cand) = best.expect("at least one candidate");
    debug_assert!(norm > 1e-8, "no orthogonal direction left");
    for i in 0..m {
        u[(i, col)] = cand[i] / norm;
    }
}

/// Flips each column of U so its largest-magnitude entry is positive, ties
/// resolved toward the lowest row index. Idempotent; makes factorizations
/// computed on different nodes bit-comparable.
pub fn canonical_sign(svd: &SvdThin) -> SvdThin {
    let mut u = svd.u.clone();
    for j in 0..u.cols() {
        let mut lead = 0usize;
        let mut lead_abs = u[(0, j)].abs();
        for i in 1..u.rows() {
            let a = u[(i, j)].abs();
            if a > lead_abs {
                lead_abs = a;
                lead = i;
            }
        }
        if u[(lead, j)] < 0.0 {
            for i in 0..u.rows() {
                u[(i, j)] = -u[(i, j)];
            }
        }
    }
    SvdThin {
        u,
        s: svd.s.clone(),
    }
}

/// First `rank` singular directions.
pub fn truncate(svd: &SvdThin, rank: usize) -> Result<SvdThin, LinalgError> {
    if rank == 0 || rank > svd.s.len() {
        return Err(LinalgError::RankOutOfRange {
            rank,
            max: svd.s.len(),
        });
    }
    let cols: Vec<usize> = (0..rank).collect();
    Ok(SvdThin {
        u: svd.u.select_columns(&cols).expect("rank validated"),
        s: svd.s[..rank].to_vec(),
    })
}

/// Distributed SVD merge: the factorization of horizontally concatenated data
/// blocks equals the SVD of the concatenated per-block U·S products, so local
/// factorizations combine without ever exchanging samples.
pub fn dsvd_merge(parts: &[SvdThin]) -> Result<SvdThin, LinalgError> {
    if parts.is_empty() {
        return Err(LinalgError::EmptyInput);
    }
    let rows = parts[0].u.rows();
    for p in parts {
        if p.u.rows() != rows {
            return Err(LinalgError::ShapeMismatch(format!(
                "merge parts have differing row counts ({} vs {})",
                rows,
                p.u.rows()
            )));
        }
        if p.u.cols() != p.s.len() {
            return Err(LinalgError::ShapeMismatch(format!(
                "part has {} singular values for {} columns",
                p.s.len(),
                p.u.cols()
            )));
        }
    }
    let products: Vec<Matrix> = parts.iter().map(|p| p.us_product()).collect();
    let refs: Vec<&Matrix> = products.iter().collect();
    svd_thin(&Matrix::hconcat(&refs)?)
}
