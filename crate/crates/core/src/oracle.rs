//! Dense reference computations for testing: GSVD via QR and the CS
//! decomposition, explicit joint Lanczos bidiagonalization, and explicit
//! shifted QR. Sizes are limited to a few hundred.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::error::{Coefficient, Error, Result};

/// Largest max(m+p, n) accepted by the dense routines.
pub const ORACLE_LIMIT: usize = 500;

/// Values of c or s below this classify a component as trivial.
pub const TRIVIAL_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct DenseGsvd {
    /// Nontrivial c, descending.
    pub c: DVector<f64>,
    pub s: DVector<f64>,
    /// n×n, columns ordered (nontrivial, zero, infinite).
    pub x: DMatrix<f64>,
    pub pa: DMatrix<f64>,
    pub pl: DMatrix<f64>,
    pub q: usize,
    pub q1: usize,
    pub q2: usize,
    pub l1: usize,
    pub l2: usize,
}

impl DenseGsvd {
    /// Generalized singular values c/s, descending.
    pub fn values(&self) -> Vec<f64> {
        self.c.iter().zip(self.s.iter()).map(|(c, s)| c / s).collect()
    }

    /// Expected P_AᵀAX and P_LᵀLX block patterns.
    pub fn structure(&self, m: usize, p: usize) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.q + self.q1 + self.q2;
        let mut ca = DMatrix::zeros(m, n);
        let mut sl = DMatrix::zeros(p, n);
        for i in 0..self.q {
            ca[(i, i)] = self.c[i];
            sl[(i, i)] = self.s[i];
        }
        for j in 0..self.q1 {
            sl[(self.q + j, self.q + j)] = 1.0;
        }
        for j in 0..self.q2 {
            ca[(self.q + self.l1 + j, self.q + self.q1 + j)] = 1.0;
        }
        (ca, sl)
    }

    /// max(‖P_AᵀAX − C_A‖, ‖P_LᵀLX − S_L‖).
    pub fn reconstruction_defect(&self, a: &DMatrix<f64>, l: &DMatrix<f64>) -> f64 {
        let (ca, sl) = self.structure(a.nrows(), l.nrows());
        let da = (self.pa.transpose() * a * &self.x - ca).norm();
        let dl = (self.pl.transpose() * l * &self.x - sl).norm();
        da.max(dl)
    }
}

fn check_size(m: usize, p: usize, n: usize) -> Result<()> {
    if (m + p).max(n) > ORACLE_LIMIT {
        return Err(Error::InvalidArgument(format!(
            "dense oracle limited to size {ORACLE_LIMIT}"
        )));
    }
    Ok(())
}

/// Thin QR of the stack: returns (Q_A, Q_L, R).
pub fn stacked_qr(
    a: &DMatrix<f64>,
    l: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let (m, p, n) = (a.nrows(), l.nrows(), a.ncols());
    if l.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "A has {n} columns but L has {}",
            l.ncols()
        )));
    }
    if m + p < n {
        return Err(Error::RankDeficient);
    }
    check_size(m, p, n)?;
    let mut s = DMatrix::zeros(m + p, n);
    s.rows_mut(0, m).copy_from(a);
    s.rows_mut(m, p).copy_from(l);
    let sv = s.clone().singular_values();
    let smax = sv.max();
    if smax == 0.0 || sv.min() <= 1e-13 * smax * n as f64 {
        return Err(Error::RankDeficient);
    }
    let qr = s.qr();
    let q = qr.q();
    let r = qr.r();
    Ok((q.rows(0, m).into_owned(), q.rows(m, p).into_owned(), r))
}

/// Orthonormal columns completing `known` (r×j, orthonormal) to an r×r orthogonal matrix.
pub fn complete_basis(known: &DMatrix<f64>) -> DMatrix<f64> {
    let (r, j) = known.shape();
    if j >= r {
        return DMatrix::zeros(r, 0);
    }
    let mut cols: Vec<DVector<f64>> = (0..j).map(|c| known.column(c).into_owned()).collect();
    let mut extra = Vec::new();
    for e in 0..r {
        if extra.len() == r - j {
            break;
        }
        let mut v = DVector::zeros(r);
        v[e] = 1.0;
        for _ in 0..2 {
            for c in &cols {
                let d = c.dot(&v);
                v.axpy(-d, c, 1.0);
            }
        }
        let nv = v.norm();
        if nv > 1e-8 {
            let v = v / nv;
            cols.push(v.clone());
            extra.push(v);
        }
    }
    DMatrix::from_columns(&extra)
}

/// Full GSVD of a dense regular pair by QR of the stack and SVD of Q_A.
pub fn dense_gsvd(a: &DMatrix<f64>, l: &DMatrix<f64>) -> Result<DenseGsvd> {
    let (m, p, n) = (a.nrows(), l.nrows(), a.ncols());
    let (qa, ql, r) = stacked_qr(a, l)?;

    let mut padded = DMatrix::zeros(m.max(n), n);
    padded.rows_mut(0, m).copy_from(&qa);
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("requested");
    let mut order: Vec<usize> = (0..n).collect();
    let sv = svd.singular_values;
    order.sort_by(|&x, &y| sv[y].total_cmp(&sv[x]));
    let w_all = DMatrix::from_columns(
        &order
            .iter()
            .map(|&i| vt.row(i).transpose())
            .collect::<Vec<_>>(),
    );
    let c_all: Vec<f64> = order.iter().map(|&i| sv[i].min(1.0)).collect();
    let s_all: Vec<f64> = (0..n).map(|i| (&ql * w_all.column(i)).norm()).collect();

    let mut nontrivial = Vec::new();
    let mut zero = Vec::new();
    let mut infinite = Vec::new();
    for i in 0..n {
        if c_all[i] < TRIVIAL_TOL {
            zero.push(i);
        } else if s_all[i] < TRIVIAL_TOL {
            infinite.push(i);
        } else {
            nontrivial.push(i);
        }
    }
    let (q, q1, q2) = (nontrivial.len(), zero.len(), infinite.len());
    if m < q + q2 || p < q + q1 {
        return Err(Error::RankDeficient);
    }
    let (l1, l2) = (m - q - q2, p - q - q1);
    let col_order: Vec<usize> = nontrivial
        .iter()
        .chain(&zero)
        .chain(&infinite)
        .cloned()
        .collect();
    let w = DMatrix::from_columns(
        &col_order
            .iter()
            .map(|&i| w_all.column(i).into_owned())
            .collect::<Vec<_>>(),
    );

    let a_left: Vec<DVector<f64>> = nontrivial
        .iter()
        .map(|&i| &qa * w_all.column(i) / c_all[i])
        .collect();
    let a_inf: Vec<DVector<f64>> = infinite
        .iter()
        .map(|&i| (&qa * w_all.column(i)).normalize())
        .collect();
    let mut known_a = a_left.clone();
    known_a.extend(a_inf.iter().cloned());
    let comp_a = complete_basis(&if known_a.is_empty() {
        DMatrix::zeros(m, 0)
    } else {
        DMatrix::from_columns(&known_a)
    });
    let mut pa_cols = a_left.clone();
    pa_cols.extend(comp_a.column_iter().map(|c| c.into_owned()));
    pa_cols.extend(a_inf);
    let pa = DMatrix::from_columns(&pa_cols);

    let l_left: Vec<DVector<f64>> = nontrivial
        .iter()
        .map(|&i| &ql * w_all.column(i) / s_all[i])
        .collect();
    let l_zero: Vec<DVector<f64>> = zero
        .iter()
        .map(|&i| (&ql * w_all.column(i)).normalize())
        .collect();
    let mut known_l = l_left.clone();
    known_l.extend(l_zero.iter().cloned());
    let comp_l = complete_basis(&if known_l.is_empty() {
        DMatrix::zeros(p, 0)
    } else {
        DMatrix::from_columns(&known_l)
    });
    let mut pl_cols = l_left;
    pl_cols.extend(l_zero);
    pl_cols.extend(comp_l.column_iter().map(|c| c.into_owned()));
    let pl = DMatrix::from_columns(&pl_cols);

    let x = r
        .solve_upper_triangular(&w)
        .ok_or(Error::RankDeficient)?;
    Ok(DenseGsvd {
        c: DVector::from_iterator(q, nontrivial.iter().map(|&i| c_all[i])),
        s: DVector::from_iterator(q, nontrivial.iter().map(|&i| s_all[i])),
        x,
        pa,
        pl,
        q,
        q1,
        q2,
        l1,
        l2,
    })
}

/// Generalized singular values σ = c/s as square roots of the eigenvalues of
/// (LᵀL)⁻¹AᵀA, descending. Requires L of full column rank.
pub fn generalized_values_by_eigen(a: &DMatrix<f64>, l: &DMatrix<f64>) -> Result<Vec<f64>> {
    let chol = (l.transpose() * l).cholesky().ok_or(Error::RankDeficient)?;
    let cl = chol.l();
    let ata = a.transpose() * a;
    let y = cl.solve_lower_triangular(&ata).ok_or(Error::RankDeficient)?;
    let m = cl
        .solve_lower_triangular(&y.transpose())
        .ok_or(Error::RankDeficient)?;
    let sym = (&m + m.transpose()) * 0.5;
    let mut vals: Vec<f64> = sym
        .symmetric_eigenvalues()
        .iter()
        .map(|&e| e.max(0.0).sqrt())
        .collect();
    vals.sort_by(|a, b| b.total_cmp(a));
    Ok(vals)
}

/// Factors of the two explicit Lanczos processes on Q_A (lower) and Q_L (upper).
#[derive(Debug, Clone)]
pub struct JointLanczos {
    /// (k+1)×k lower bidiagonal.
    pub b: DMatrix<f64>,
    /// k×k upper bidiagonal with positive entries.
    pub bhat: DMatrix<f64>,
    /// m×(k+1).
    pub u: DMatrix<f64>,
    /// p×k.
    pub uhat: DMatrix<f64>,
    /// n×(k+1); the last column is v_{k+1}.
    pub v: DMatrix<f64>,
    /// n×k.
    pub vhat: DMatrix<f64>,
    pub alpha_next: f64,
}

impl JointLanczos {
    /// The signed factor B̂D.
    pub fn bbar(&self) -> DMatrix<f64> {
        let mut b = self.bhat.clone();
        for j in (1..b.ncols()).step_by(2) {
            b.column_mut(j).neg_mut();
        }
        b
    }
}

fn orth_against(basis: &[DVector<f64>], w: &mut DVector<f64>) {
    for _ in 0..2 {
        for q in basis {
            let d = q.dot(w);
            w.axpy(-d, q, 1.0);
        }
    }
}

/// k steps of lower Lanczos bidiagonalization of Q_A from u₁ and upper Lanczos
/// bidiagonalization of Q_L from v̂₁ = v₁, both with full reorthogonalization.
pub fn dense_joint_lanczos(
    qa: &DMatrix<f64>,
    ql: &DMatrix<f64>,
    u1: &DVector<f64>,
    k: usize,
) -> Result<JointLanczos> {
    let (m, n) = qa.shape();
    let p = ql.nrows();
    check_size(m, p, n)?;
    let tiny = 1e-14;
    let breakdown = |index, coefficient, value| Error::Breakdown {
        index,
        coefficient,
        value,
        threshold: tiny,
    };

    let mut us = vec![u1.normalize()];
    let mut vs: Vec<DVector<f64>> = Vec::new();
    let mut alphas = Vec::new();
    let mut betas = Vec::new();
    let mut w = qa.transpose() * &us[0];
    let mut alpha = w.norm();
    if alpha <= tiny {
        return Err(breakdown(1, Coefficient::Alpha, alpha));
    }
    vs.push(w / alpha);
    alphas.push(alpha);
    for i in 0..k {
        let mut r = qa * &vs[i] - &us[i] * alphas[i];
        orth_against(&us, &mut r);
        let beta = r.norm();
        if beta <= tiny {
            return Err(breakdown(i + 2, Coefficient::Beta, beta));
        }
        us.push(r / beta);
        betas.push(beta);
        w = qa.transpose() * &us[i + 1] - &vs[i] * beta;
        orth_against(&vs, &mut w);
        alpha = w.norm();
        if alpha <= tiny {
            return Err(breakdown(i + 2, Coefficient::Alpha, alpha));
        }
        vs.push(w / alpha);
        alphas.push(alpha);
    }

    let mut vhs = vec![vs[0].clone()];
    let mut uhs: Vec<DVector<f64>> = Vec::new();
    let mut ahat = Vec::new();
    let mut bhat = Vec::new();
    let mut r = ql * &vhs[0];
    for i in 0..k {
        let a = r.norm();
        if a <= tiny {
            return Err(breakdown(i + 1, Coefficient::AlphaHat, a));
        }
        uhs.push(r / a);
        ahat.push(a);
        if i + 1 == k {
            break;
        }
        let mut w = ql.transpose() * &uhs[i] - &vhs[i] * a;
        orth_against(&vhs, &mut w);
        let b = w.norm();
        if b <= tiny {
            return Err(breakdown(i + 1, Coefficient::Beta, b));
        }
        vhs.push(w / b);
        bhat.push(b);
        r = ql * &vhs[i + 1] - &uhs[i] * b;
        orth_against(&uhs, &mut r);
    }

    let mut bm = DMatrix::zeros(k + 1, k);
    let mut bh = DMatrix::zeros(k, k);
    for i in 0..k {
        bm[(i, i)] = alphas[i];
        bm[(i + 1, i)] = betas[i];
        bh[(i, i)] = ahat[i];
        if i + 1 < k {
            bh[(i, i + 1)] = bhat[i];
        }
    }
    Ok(JointLanczos {
        b: bm,
        bhat: bh,
        u: DMatrix::from_columns(&us),
        uhat: DMatrix::from_columns(&uhs),
        v: DMatrix::from_columns(&vs),
        vhat: DMatrix::from_columns(&vhs),
        alpha_next: alphas[k],
    })
}

/// Householder QR of BBᵀ − shift·I.
pub fn explicit_shifted_qr(bbt: &DMatrix<f64>, shift: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = bbt.nrows();
    let shifted = bbt - DMatrix::<f64>::identity(n, n) * shift;
    let qr = shifted.qr();
    (qr.q(), qr.r())
}

/// Random dense pair with prescribed singular value ranges: A has singular
/// values log-spaced in [1/cond_a, 1], L in [1/cond_l, 1], with independent
/// random singular vectors. Both have full column rank when m, p ≥ n.
pub fn random_dense_pair(
    seed: u64,
    m: usize,
    p: usize,
    n: usize,
    cond_a: f64,
    cond_l: f64,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut build = |rows: usize, cond: f64| {
        let g = DMatrix::<f64>::from_fn(rows, rows, |_, _| StandardNormal.sample(&mut rng));
        let left = g.qr().q();
        let h = DMatrix::<f64>::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
        let right = h.qr().q();
        let r = rows.min(n);
        let jitter = Uniform::new(0.0, 1.0).expect("valid range");
        let mut sig: Vec<f64> = (0..r)
            .map(|i| {
                let t = if r == 1 {
                    0.0
                } else {
                    (i as f64 + 0.5 * jitter.sample(&mut rng)) / (r as f64 - 0.5)
                };
                cond.powf(-t.min(1.0))
            })
            .collect();
        sig.sort_by(|a, b| b.total_cmp(a));
        let mut d = DMatrix::zeros(rows, n);
        for i in 0..r {
            d[(i, i)] = sig[i];
        }
        left * d * right.transpose()
    };
    let a = build(m, cond_a);
    let l = build(p, cond_l);
    (a, l)
}
