//! Small bidiagonal factors, Givens rotations and the projected GSVD of {B_k, B̄_k}.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Largest tolerated ‖BᵀB + B̄ᵀB̄ − I‖_F and |s − √(1−c²)| before extraction refuses.
pub const IDENTITY_TOL: f64 = 1e-8;

/// B_k ∈ R^{(k+1)×k} with diagonal α_1..α_k and subdiagonal β_2..β_{k+1}.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerBidiagonal {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
}

impl LowerBidiagonal {
    pub fn new(alphas: Vec<f64>, betas: Vec<f64>) -> Result<Self> {
        if alphas.len() != betas.len() {
            return Err(Error::DimensionMismatch(format!(
                "lower bidiagonal needs k alphas and k betas, got {} and {}",
                alphas.len(),
                betas.len()
            )));
        }
        if alphas.iter().chain(&betas).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite bidiagonal entry".into()));
        }
        Ok(LowerBidiagonal { alphas, betas })
    }

    pub fn k(&self) -> usize {
        self.alphas.len()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let k = self.k();
        let mut b = DMatrix::zeros(k + 1, k);
        for i in 0..k {
            b[(i, i)] = self.alphas[i];
            b[(i + 1, i)] = self.betas[i];
        }
        b
    }

    /// Reads the bidiagonal part of a dense (k+1)×k matrix, failing if anything else is nonzero.
    pub fn from_dense(b: &DMatrix<f64>) -> Result<Self> {
        let k = b.ncols();
        if b.nrows() != k + 1 {
            return Err(Error::DimensionMismatch(format!(
                "expected {}x{k}, got {}x{k}",
                k + 1,
                b.nrows()
            )));
        }
        for c in 0..k {
            for r in 0..=k {
                if r != c && r != c + 1 && b[(r, c)] != 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "entry ({r}, {c}) is outside the lower bidiagonal pattern"
                    )));
                }
            }
        }
        Ok(LowerBidiagonal {
            alphas: (0..k).map(|i| b[(i, i)]).collect(),
            betas: (0..k).map(|i| b[(i + 1, i)]).collect(),
        })
    }
}

/// B̂_k ∈ R^{k×k} with diagonal α̂_1..α̂_k and superdiagonal β̂_1..β̂_{k−1}.
#[derive(Debug, Clone, PartialEq)]
pub struct UpperBidiagonal {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
}

impl UpperBidiagonal {
    pub fn new(alphas: Vec<f64>, betas: Vec<f64>) -> Result<Self> {
        if betas.len() + 1 != alphas.len().max(1) || (alphas.is_empty() && !betas.is_empty()) {
            return Err(Error::DimensionMismatch(format!(
                "upper bidiagonal needs k alphas and k-1 betas, got {} and {}",
                alphas.len(),
                betas.len()
            )));
        }
        if alphas.iter().chain(&betas).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite bidiagonal entry".into()));
        }
        Ok(UpperBidiagonal { alphas, betas })
    }

    pub fn k(&self) -> usize {
        self.alphas.len()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let k = self.k();
        let mut b = DMatrix::zeros(k, k);
        for i in 0..k {
            b[(i, i)] = self.alphas[i];
            if i + 1 < k {
                b[(i, i + 1)] = self.betas[i];
            }
        }
        b
    }

    /// The signed factor B̄ = B̂·D with D = diag(1, −1, 1, ...).
    pub fn signed_dense(&self) -> DMatrix<f64> {
        let mut b = self.to_dense();
        for j in (1..self.k()).step_by(2) {
            b.column_mut(j).neg_mut();
        }
        b
    }

    /// Recovers B̂ from a dense signed B̄, failing outside the upper bidiagonal pattern.
    pub fn from_signed_dense(bbar: &DMatrix<f64>) -> Result<Self> {
        let k = bbar.ncols();
        if bbar.nrows() != k {
            return Err(Error::DimensionMismatch(format!(
                "expected square, got {}x{k}",
                bbar.nrows()
            )));
        }
        for c in 0..k {
            for r in 0..k {
                if r != c && r + 1 != c && bbar[(r, c)] != 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "entry ({r}, {c}) is outside the upper bidiagonal pattern"
                    )));
                }
            }
        }
        let sign = |j: usize| if j.is_multiple_of(2) { 1.0 } else { -1.0 };
        Ok(UpperBidiagonal {
            alphas: (0..k).map(|i| sign(i) * bbar[(i, i)]).collect(),
            betas: (0..k.saturating_sub(1))
                .map(|i| sign(i + 1) * bbar[(i, i + 1)])
                .collect(),
        })
    }
}

/// Returns (c, s, r) with r ≥ 0 and [c s; −s c]·(a, b)ᵀ = (r, 0)ᵀ.
pub fn givens(a: f64, b: f64) -> (f64, f64, f64) {
    if b == 0.0 {
        if a >= 0.0 {
            (1.0, 0.0, a)
        } else {
            (-1.0, 0.0, -a)
        }
    } else if a == 0.0 {
        (0.0, b.signum(), b.abs())
    } else {
        let r = a.hypot(b);
        (a / r, b / r, r)
    }
}

/// Rows i, j ← [c s; −s c]·(row i; row j).
pub fn rotate_rows(m: &mut DMatrix<f64>, i: usize, j: usize, c: f64, s: f64) {
    for col in 0..m.ncols() {
        let (x, y) = (m[(i, col)], m[(j, col)]);
        m[(i, col)] = c * x + s * y;
        m[(j, col)] = -s * x + c * y;
    }
}

/// Columns i, j ← (c·col i + s·col j, −s·col i + c·col j).
pub fn rotate_cols(m: &mut DMatrix<f64>, i: usize, j: usize, c: f64, s: f64) {
    for row in 0..m.nrows() {
        let (x, y) = (m[(row, i)], m[(row, j)]);
        m[(row, i)] = c * x + s * y;
        m[(row, j)] = -s * x + c * y;
    }
}

/// Thin SVD M = U·diag(σ)·Vᵀ by one-sided Jacobi, σ descending. Requires nrows ≥ ncols.
pub fn jacobi_svd(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>, DMatrix<f64>) {
    let (rows, k) = m.shape();
    assert!(rows >= k, "jacobi_svd needs a tall matrix");
    let mut a = m.clone();
    let mut v = DMatrix::identity(k, k);
    for _sweep in 0..80 {
        let mut rotated = false;
        for i in 0..k {
            for j in i + 1..k {
                let alpha = a.column(i).norm_squared();
                let beta = a.column(j).norm_squared();
                let gamma = a.column(i).dot(&a.column(j));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                // (a_i, a_j) ← (c a_i − s a_j, s a_i + c a_j)
                rotate_cols(&mut a, i, j, c, -s);
                rotate_cols(&mut v, i, j, c, -s);
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..k).map(|i| a.column(i).norm()).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]).then(x.cmp(&y)));

    let sigma = DVector::from_iterator(k, order.iter().map(|&i| norms[i]));
    let mut u = DMatrix::zeros(rows, k);
    let mut vs = DMatrix::zeros(k, k);
    let scale = norms.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut missing = Vec::new();
    for (dst, &src) in order.iter().enumerate() {
        vs.set_column(dst, &v.column(src));
        if norms[src] > f64::EPSILON * scale * k as f64 {
            u.set_column(dst, &(a.column(src) / norms[src]));
        } else {
            missing.push(dst);
        }
    }
    for dst in missing {
        let col = orthonormal_complement_vector(&u, dst);
        u.set_column(dst, &col);
    }
    (sigma, u, vs)
}

/// A unit vector orthogonal to every unit column of `basis` other than `skip`.
fn orthonormal_complement_vector(basis: &DMatrix<f64>, skip: usize) -> DVector<f64> {
    let rows = basis.nrows();
    let cols: Vec<usize> = (0..basis.ncols())
        .filter(|&j| j != skip && basis.column(j).norm() > 0.5)
        .collect();
    let mut best: Option<DVector<f64>> = None;
    let mut best_norm = -1.0;
    for e in 0..rows {
        let mut v = DVector::zeros(rows);
        v[e] = 1.0;
        for _ in 0..2 {
            for &j in &cols {
                let d = basis.column(j).dot(&v);
                v.axpy(-d, &basis.column(j), 1.0);
            }
        }
        let nv = v.norm();
        if nv > best_norm {
            best_norm = nv;
            best = Some(v);
        }
    }
    let v = best.expect("rows > 0");
    v / best_norm
}

/// Ritz data from the small GSVD B = P·diag(c)·Wᵀ, B̄ = P̄·diag(s)·Wᵀ.
#[derive(Debug, Clone)]
pub struct SmallGsvd {
    /// Descending.
    pub c: DVector<f64>,
    /// Ascending, s_i = ‖B̄w_i‖.
    pub s: DVector<f64>,
    /// k×k.
    pub w: DMatrix<f64>,
    /// (k+1)×k.
    pub p: DMatrix<f64>,
    /// k×k.
    pub pbar: DMatrix<f64>,
    /// Unit vector completing P to an orthogonal (k+1)×(k+1) matrix.
    pub p_next: DVector<f64>,
    /// ‖BᵀB + B̄ᵀB̄ − I‖_F.
    pub identity_defect: f64,
}

impl SmallGsvd {
    pub fn k(&self) -> usize {
        self.c.len()
    }
}

/// Projected GSVD of a bidiagonal pair.
pub fn small_gsvd(b: &LowerBidiagonal, bhat: &UpperBidiagonal) -> Result<SmallGsvd> {
    if b.k() != bhat.k() {
        return Err(Error::DimensionMismatch(format!(
            "B has k = {}, B̂ has k = {}",
            b.k(),
            bhat.k()
        )));
    }
    small_gsvd_dense(&b.to_dense(), &bhat.signed_dense())
}

/// Projected GSVD of dense factors B ((k+1)×k) and signed B̄ (k×k).
pub fn small_gsvd_dense(b: &DMatrix<f64>, bbar: &DMatrix<f64>) -> Result<SmallGsvd> {
    let k = b.ncols();
    if b.nrows() != k + 1 || bbar.shape() != (k, k) {
        return Err(Error::DimensionMismatch(format!(
            "expected ({}x{k}, {k}x{k}), got ({}x{}, {}x{})",
            k + 1,
            b.nrows(),
            b.ncols(),
            bbar.nrows(),
            bbar.ncols()
        )));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("empty projected pair".into()));
    }
    let gram = b.transpose() * b + bbar.transpose() * bbar;
    let identity_defect = (gram - DMatrix::<f64>::identity(k, k)).norm();
    if identity_defect > IDENTITY_TOL {
        return Err(Error::IdentityDefect {
            defect: identity_defect,
            tolerance: IDENTITY_TOL,
        });
    }

    let (c, mut p, mut w) = jacobi_svd(b);
    for i in 0..k {
        let imax = w.column(i).iamax();
        if w[(imax, i)] < 0.0 {
            w.column_mut(i).neg_mut();
            p.column_mut(i).neg_mut();
        }
    }

    let bw = bbar * &w;
    let mut s = DVector::zeros(k);
    let mut pbar = DMatrix::zeros(k, k);
    let mut missing = Vec::new();
    for i in 0..k {
        let si = bw.column(i).norm();
        let cross = (1.0 - c[i] * c[i]).max(0.0).sqrt();
        if (si - cross).abs() > IDENTITY_TOL {
            return Err(Error::IdentityDefect {
                defect: (si - cross).abs(),
                tolerance: IDENTITY_TOL,
            });
        }
        s[i] = si;
        if si > 0.0 {
            pbar.set_column(i, &(bw.column(i) / si));
        } else {
            missing.push(i);
        }
    }
    for i in missing {
        let col = orthonormal_complement_vector(&pbar, i);
        pbar.set_column(i, &col);
    }

    let mut padded = DMatrix::zeros(k + 1, k + 1);
    padded.view_mut((0, 0), (k + 1, k)).copy_from(&p);
    let mut p_next = orthonormal_complement_vector(&padded, k);
    let imax = p_next.iamax();
    if p_next[imax] < 0.0 {
        p_next.neg_mut();
    }

    Ok(SmallGsvd {
        c,
        s,
        w,
        p,
        pbar,
        p_next,
        identity_defect,
    })
}

/// (‖B̲_k⁻¹‖₂, ‖B̂_k⁻¹‖₂) with B̲_k the leading k×k block of B_k; +∞ for a singular block.
pub fn inverse_norm_estimates(b: &LowerBidiagonal, bhat: &UpperBidiagonal) -> (f64, f64) {
    let k = b.k();
    let lead = b.to_dense().view((0, 0), (k, k)).into_owned();
    (
        inverse_norm(&lead),
        inverse_norm(&bhat.to_dense()),
    )
}

/// ‖M⁻¹‖₂ of a square matrix via its smallest singular value.
pub fn inverse_norm(m: &DMatrix<f64>) -> f64 {
    if m.ncols() == 0 {
        return 1.0;
    }
    let (sigma, _, _) = jacobi_svd(m);
    let smin = sigma[sigma.len() - 1];
    if smin == 0.0 {
        f64::INFINITY
    } else {
        1.0 / smin
    }
}
