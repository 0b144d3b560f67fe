//! Joint bidiagonalization of the pair {A, L} with full reorthogonalization.
//!
//! The state keeps B_k and the signed factor B̄_k = B̂_k D_k as small dense
//! matrices. After a thick restart they are not bidiagonal, and the next column
//! of each is carried explicitly in `b_next` / `bbar_next`; in the plain
//! process these are α_{k+1}e_{k+1} and β̄_k e_k.

use nalgebra::{DMatrix, DVector};

use crate::bidiag::{LowerBidiagonal, UpperBidiagonal};
use crate::driver::estimate_r_norm;
use crate::error::{Coefficient, Error, Result};
use crate::stackedls::{project_stacked, LsqrConfig, StackedOperator};

/// When α falls below this fraction of ‖proj(u)‖ the range error inherited
/// from v′_k through β would be amplified, so the new direction is projected again.
const REPROJECT_RATIO: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Where and why the process stopped producing new vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BreakdownInfo {
    /// 1-based index of the vanishing coefficient.
    pub index: usize,
    pub coefficient: Coefficient,
    pub value: f64,
    pub threshold: f64,
}

impl BreakdownInfo {
    fn to_error(self) -> Error {
        Error::Breakdown {
            index: self.index,
            coefficient: self.coefficient,
            value: self.value,
            threshold: self.threshold,
        }
    }
}

#[derive(Debug, Clone)]
pub struct JbdState {
    pub(crate) m: usize,
    pub(crate) p: usize,
    pub(crate) n: usize,
    pub(crate) k: usize,
    /// m×cap, first k+1 columns used.
    pub(crate) u: DMatrix<f64>,
    /// p×cap, first k columns used.
    pub(crate) uhat: DMatrix<f64>,
    /// (m+p)×cap, first k columns used.
    pub(crate) vprime: DMatrix<f64>,
    /// (k+1)×k.
    pub(crate) b: DMatrix<f64>,
    /// k×k, signed.
    pub(crate) bbar: DMatrix<f64>,
    pub(crate) vprime_next: DVector<f64>,
    /// Length k+1: column k+1 of B without its new subdiagonal entry.
    pub(crate) b_next: DVector<f64>,
    /// Length k: column k+1 of B̄ above the diagonal.
    pub(crate) bbar_next: DVector<f64>,
    pub(crate) rnorm: f64,
    pub(crate) threshold: f64,
    pub(crate) breakdown: Option<BreakdownInfo>,
    pub(crate) lsqr_iterations: usize,
    pub(crate) lsqr_failures: usize,
}

impl JbdState {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn u(&self) -> DMatrix<f64> {
        self.u.columns(0, self.k + 1).into_owned()
    }

    pub fn uhat(&self) -> DMatrix<f64> {
        self.uhat.columns(0, self.k).into_owned()
    }

    pub fn vprime(&self) -> DMatrix<f64> {
        self.vprime.columns(0, self.k).into_owned()
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    /// The signed factor B̄_k.
    pub fn bbar(&self) -> &DMatrix<f64> {
        &self.bbar
    }

    /// B_k as a bidiagonal, if it currently is one.
    pub fn lower_bidiagonal(&self) -> Option<LowerBidiagonal> {
        LowerBidiagonal::from_dense(&self.b).ok()
    }

    /// B̂_k = B̄_k D_k as a bidiagonal, if it currently is one.
    pub fn upper_bidiagonal(&self) -> Option<UpperBidiagonal> {
        UpperBidiagonal::from_signed_dense(&self.bbar).ok()
    }

    pub fn vprime_next(&self) -> &DVector<f64> {
        &self.vprime_next
    }

    pub fn b_next(&self) -> &DVector<f64> {
        &self.b_next
    }

    pub fn bbar_next(&self) -> &DVector<f64> {
        &self.bbar_next
    }

    /// α_{k+1} for a state in plain bidiagonal form.
    pub fn alpha_next(&self) -> f64 {
        self.b_next[self.k]
    }

    /// β_{k+1}, the last subdiagonal entry of B_k.
    pub fn beta_last(&self) -> f64 {
        if self.k == 0 {
            0.0
        } else {
            self.b[(self.k, self.k - 1)]
        }
    }

    /// β̄_k, the coupling entry of the next B̄ column.
    pub fn betabar_next(&self) -> f64 {
        if self.k == 0 {
            0.0
        } else {
            self.bbar_next[self.k - 1]
        }
    }

    pub fn rnorm(&self) -> f64 {
        self.rnorm
    }

    pub fn breakdown(&self) -> Option<BreakdownInfo> {
        self.breakdown
    }

    pub fn lsqr_iterations(&self) -> usize {
        self.lsqr_iterations
    }

    /// Number of inner solves that stopped on the iteration cap.
    pub fn lsqr_failures(&self) -> usize {
        self.lsqr_failures
    }

    pub(crate) fn ensure_capacity(&mut self, cols: usize) {
        if self.u.ncols() < cols + 1 {
            let cap = (cols + 1).max(2 * self.u.ncols());
            self.u.resize_horizontally_mut(cap, 0.0);
            self.uhat.resize_horizontally_mut(cap, 0.0);
            self.vprime.resize_horizontally_mut(cap, 0.0);
        }
    }

    fn project(
        &mut self,
        op: &StackedOperator,
        u: &DVector<f64>,
        cfg: &LsqrConfig,
    ) -> Result<DVector<f64>> {
        let mut rhs = DVector::zeros(self.m + self.p);
        rhs.rows_mut(0, self.m).copy_from(u);
        self.project_stacked(op, &rhs, cfg)
    }

    fn project_stacked(
        &mut self,
        op: &StackedOperator,
        rhs: &DVector<f64>,
        cfg: &LsqrConfig,
    ) -> Result<DVector<f64>> {
        let pr = project_stacked(op, rhs, cfg)?;
        self.lsqr_iterations += pr.iterations;
        if !pr.converged {
            self.lsqr_failures += 1;
            log::warn!(
                "inner LSQR stopped after {} iterations without converging",
                pr.iterations
            );
        }
        Ok(pr.vector)
    }

    /// Zeroes the next-vector carriers after a vanishing α or β.
    fn stop(&mut self, info: BreakdownInfo) {
        self.vprime_next = DVector::zeros(self.m + self.p);
        self.b_next = DVector::zeros(self.k + 1);
        self.bbar_next = DVector::zeros(self.k);
        self.breakdown = Some(info);
    }

    /// One step k → k+1.
    fn step(&mut self, op: &StackedOperator, cfg: &LsqrConfig) -> Result<()> {
        let (m, k) = (self.m, self.k);
        self.ensure_capacity(k + 1);
        let v = self.vprime_next.clone();

        // New û from the lower block of v′_{k+1}.
        let mut w = v.rows(m, self.p).into_owned();
        if k > 0 {
            w -= self.uhat.columns(0, k) * &self.bbar_next;
        }
        cgs2(&self.uhat.columns(0, k).into_owned(), &mut w);
        let ahat = w.norm();
        if ahat <= self.threshold || k + 1 > self.p {
            return Err(Error::Breakdown {
                index: k + 1,
                coefficient: Coefficient::AlphaHat,
                value: ahat,
                threshold: self.threshold,
            });
        }
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        self.uhat.set_column(k, &(&w * (sign / ahat)));
        self.vprime.set_column(k, &v);

        let mut b = DMatrix::zeros(k + 2, k + 1);
        b.view_mut((0, 0), (k + 1, k)).copy_from(&self.b);
        b.view_mut((0, k), (k + 1, 1)).copy_from(&self.b_next);
        let mut bbar = DMatrix::zeros(k + 1, k + 1);
        bbar.view_mut((0, 0), (k, k)).copy_from(&self.bbar);
        bbar.view_mut((0, k), (k, 1)).copy_from(&self.bbar_next);
        bbar[(k, k)] = sign * ahat;

        // New u from the upper block.
        let mut w = v.rows(0, m) - self.u.columns(0, k + 1) * &self.b_next;
        cgs2(&self.u.columns(0, k + 1).into_owned(), &mut w);
        let beta = w.norm();
        self.b = b;
        self.bbar = bbar;
        self.k = k + 1;
        if beta <= self.threshold || k + 2 > m {
            self.u.column_mut(k + 1).fill(0.0);
            self.stop(BreakdownInfo {
                index: k + 2,
                coefficient: Coefficient::Beta,
                value: beta,
                threshold: self.threshold,
            });
            return Ok(());
        }
        let unew = w / beta;
        self.u.set_column(k + 1, &unew);
        self.b[(k + 1, k)] = beta;

        // New v′ from the projection of (u; 0).
        let mut w = self.project(op, &unew, cfg)?;
        let scale = w.norm();
        w.axpy(-beta, &v, 1.0);
        let basis = self.vprime.columns(0, k + 1).into_owned();
        cgs2(&basis, &mut w);
        let mut alpha = w.norm();
        if alpha > self.threshold && alpha < REPROJECT_RATIO * scale {
            let mut w2 = self.project_stacked(op, &(&w / alpha), cfg)?;
            cgs2(&basis, &mut w2);
            let nu = w2.norm();
            w = w2 * alpha;
            alpha *= nu;
        }
        if alpha <= self.threshold || k + 1 >= self.n {
            self.stop(BreakdownInfo {
                index: k + 2,
                coefficient: Coefficient::Alpha,
                value: alpha,
                threshold: self.threshold,
            });
            return Ok(());
        }
        self.vprime_next = w / alpha;
        self.b_next = DVector::zeros(k + 2);
        self.b_next[k + 1] = alpha;
        self.bbar_next = DVector::zeros(k + 1);
        self.bbar_next[k] = -alpha * beta / self.bbar[(k, k)];
        Ok(())
    }
}

/// Two passes of classical Gram–Schmidt of `w` against the columns of `basis`.
pub(crate) fn cgs2(basis: &DMatrix<f64>, w: &mut DVector<f64>) {
    if basis.ncols() == 0 {
        return;
    }
    for _ in 0..2 {
        let h = basis.tr_mul(w);
        w.gemv(-1.0, basis, &h, 1.0);
    }
}

/// Starts the process from a unit vector u₁ (size k = 0).
pub fn jbd_init(
    op: &StackedOperator,
    u1: &DVector<f64>,
    cfg: &LsqrConfig,
    capacity: usize,
) -> Result<JbdState> {
    let (m, p, n) = (op.m(), op.p(), op.n());
    if u1.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "starting vector has length {}, A has {m} rows",
            u1.len()
        )));
    }
    if (u1.norm() - 1.0).abs() > 1e-14 {
        return Err(Error::InvalidArgument(format!(
            "starting vector must have unit norm, has {}",
            u1.norm()
        )));
    }
    let rnorm = estimate_r_norm(op.a(), op.l())?;
    let threshold = n as f64 * f64::EPSILON * rnorm.max(1.0);
    let cap = capacity.max(1);
    let mut state = JbdState {
        m,
        p,
        n,
        k: 0,
        u: DMatrix::zeros(m, cap + 1),
        uhat: DMatrix::zeros(p, cap + 1),
        vprime: DMatrix::zeros(m + p, cap + 1),
        b: DMatrix::zeros(1, 0),
        bbar: DMatrix::zeros(0, 0),
        vprime_next: DVector::zeros(m + p),
        b_next: DVector::zeros(1),
        bbar_next: DVector::zeros(0),
        rnorm,
        threshold,
        breakdown: None,
        lsqr_iterations: 0,
        lsqr_failures: 0,
    };
    state.u.set_column(0, u1);
    let proj = state.project(op, u1, cfg)?;
    let alpha = proj.norm();
    if alpha <= threshold {
        return Err(Error::Breakdown {
            index: 1,
            coefficient: Coefficient::Alpha,
            value: alpha,
            threshold,
        });
    }
    let v = proj / alpha;
    let ahat = v.rows(m, p).norm();
    if ahat <= threshold {
        return Err(Error::Breakdown {
            index: 1,
            coefficient: Coefficient::AlphaHat,
            value: ahat,
            threshold,
        });
    }
    state.vprime_next = v;
    state.b_next[0] = alpha;
    Ok(state)
}

/// Extends the state to `to_k` columns. A vanishing α or β stops the process:
/// the state stays valid at the size reached and the breakdown is returned as an error.
pub fn jbd_expand(
    state: &mut JbdState,
    op: &StackedOperator,
    to_k: usize,
    cfg: &LsqrConfig,
) -> Result<()> {
    if op.m() != state.m || op.p() != state.p || op.n() != state.n {
        return Err(Error::DimensionMismatch(
            "operator does not match the state".into(),
        ));
    }
    while state.k < to_k {
        if let Some(info) = state.breakdown {
            return Err(info.to_error());
        }
        state.step(op, cfg)?;
    }
    Ok(())
}

/// Largest defect of each state invariant (Frobenius norms).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DefectReport {
    pub u_orthonormality: f64,
    pub uhat_orthonormality: f64,
    pub vprime_orthonormality: f64,
    /// ‖(I, 0)V′ − U B‖.
    pub upper_relation: f64,
    /// ‖(0, I)V′ − Û B̄‖.
    pub lower_relation: f64,
    /// ‖BᵀB + B̄ᵀB̄ − I‖.
    pub identity: f64,
    /// ‖V′ − proj(V′)‖ over range([A; L]).
    pub range: f64,
}

impl DefectReport {
    pub fn max(&self) -> f64 {
        [
            self.u_orthonormality,
            self.uhat_orthonormality,
            self.vprime_orthonormality,
            self.upper_relation,
            self.lower_relation,
            self.identity,
            self.range,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

fn orthonormality_defect(q: &DMatrix<f64>) -> f64 {
    let k = q.ncols();
    (q.tr_mul(q) - DMatrix::<f64>::identity(k, k)).norm()
}

/// Checks the state invariants without modifying the state.
pub fn verify_state(state: &JbdState, op: &StackedOperator, cfg: &LsqrConfig) -> DefectReport {
    let (m, p, k) = (state.m, state.p, state.k);
    let u = state.u();
    // A β-breakdown leaves a zero trailing column in U.
    let u_live = if u.column(k).norm() == 0.0 {
        u.columns(0, k).into_owned()
    } else {
        u.clone()
    };
    let uhat = state.uhat();
    let vp = state.vprime();
    let upper = (vp.rows(0, m) - &u * &state.b).norm();
    let lower = (vp.rows(m, p) - &uhat * &state.bbar).norm();
    let identity = (state.b.tr_mul(&state.b) + state.bbar.tr_mul(&state.bbar)
        - DMatrix::<f64>::identity(k, k))
    .norm();
    let mut range = 0.0f64;
    for j in 0..k {
        let col = vp.column(j).into_owned();
        range = match project_stacked(op, &col, cfg) {
            Ok(pr) => range.max((pr.vector - col).norm()),
            Err(_) => f64::INFINITY,
        };
    }
    DefectReport {
        u_orthonormality: orthonormality_defect(&u_live),
        uhat_orthonormality: orthonormality_defect(&uhat),
        vprime_orthonormality: orthonormality_defect(&vp),
        upper_relation: upper,
        lower_relation: lower,
        identity,
        range,
    }
}
