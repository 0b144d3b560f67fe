//! The stacked operator [A; L] and an LSQR solver on it.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::sparsemat::SparseMatrix;

/// The pair {A, L} viewed as the (m+p)×n operator [A; L]. The stack is never formed.
#[derive(Debug, Clone, Copy)]
pub struct StackedOperator<'a> {
    a: &'a SparseMatrix,
    l: &'a SparseMatrix,
}

impl<'a> StackedOperator<'a> {
    pub fn new(a: &'a SparseMatrix, l: &'a SparseMatrix) -> Result<Self> {
        if a.ncols() != l.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "A has {} columns but L has {}",
                a.ncols(),
                l.ncols()
            )));
        }
        if a.nrows() + l.nrows() < a.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "stack of {}+{} rows cannot have rank {}",
                a.nrows(),
                l.nrows(),
                a.ncols()
            )));
        }
        Ok(StackedOperator { a, l })
    }

    pub fn a(&self) -> &'a SparseMatrix {
        self.a
    }

    pub fn l(&self) -> &'a SparseMatrix {
        self.l
    }

    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    pub fn p(&self) -> usize {
        self.l.nrows()
    }

    pub fn n(&self) -> usize {
        self.a.ncols()
    }

    /// (Ax; Lx).
    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let m = self.m();
        let mut out = DVector::zeros(m + self.p());
        let (top, bottom) = out.as_mut_slice().split_at_mut(m);
        self.a.matvec_into(x.as_slice(), top)?;
        self.l.matvec_into(x.as_slice(), bottom)?;
        Ok(out)
    }

    /// Aᵀy₁ + Lᵀy₂ for y = (y₁; y₂).
    pub fn apply_transpose(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        let m = self.m();
        if y.len() != m + self.p() {
            return Err(Error::DimensionMismatch(format!(
                "stacked transpose expects length {}, got {}",
                m + self.p(),
                y.len()
            )));
        }
        let n = self.n();
        let mut out = vec![0.0; n];
        let mut tmp = vec![0.0; n];
        self.a.matvec_transpose_into(&y.as_slice()[..m], &mut out)?;
        self.l.matvec_transpose_into(&y.as_slice()[m..], &mut tmp)?;
        for (o, t) in out.iter_mut().zip(&tmp) {
            *o += t;
        }
        Ok(DVector::from_vec(out))
    }
}

/// Stopping parameters for LSQR.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsqrConfig {
    pub tol: f64,
    pub maxit: usize,
}

impl LsqrConfig {
    /// 10ε and 10n iterations.
    pub fn default_for(n: usize) -> Self {
        LsqrConfig {
            tol: 10.0 * f64::EPSILON,
            maxit: 10 * n.max(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsqrOutcome {
    pub solution: DVector<f64>,
    /// ‖rhs − [A;L]x‖ / ‖rhs‖ as tracked by the recurrence.
    pub relative_residual_estimate: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes ‖[A;L]x − rhs‖ by LSQR with atol = btol = `tol`.
pub fn lsqr_solve(
    op: &StackedOperator,
    rhs: &DVector<f64>,
    tol: f64,
    maxit: usize,
) -> Result<LsqrOutcome> {
    let n = op.n();
    if rhs.len() != op.m() + op.p() {
        return Err(Error::DimensionMismatch(format!(
            "rhs has length {}, stack has {} rows",
            rhs.len(),
            op.m() + op.p()
        )));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "lsqr tolerance must be positive, got {tol}"
        )));
    }
    let mut x = DVector::zeros(n);
    let bnorm = rhs.norm();
    if bnorm == 0.0 {
        return Ok(LsqrOutcome {
            solution: x,
            relative_residual_estimate: 0.0,
            iterations: 0,
            converged: true,
        });
    }
    let mut u = rhs / bnorm;
    let mut beta = bnorm;
    let mut v = op.apply_transpose(&u)?;
    let mut alpha = v.norm();
    if alpha == 0.0 {
        // rhs is orthogonal to the range; x = 0 is the minimizer.
        return Ok(LsqrOutcome {
            solution: x,
            relative_residual_estimate: 1.0,
            iterations: 0,
            converged: true,
        });
    }
    v /= alpha;
    let mut w = v.clone();
    let mut phibar = beta;
    let mut rhobar = alpha;
    let mut anorm2 = 0.0f64;
    let (atol, btol) = (tol, tol);

    let mut iterations = 0;
    let mut converged = false;
    while iterations < maxit {
        iterations += 1;

        let mut unew = op.apply(&v)?;
        unew.axpy(-alpha, &u, 1.0);
        beta = unew.norm();
        anorm2 += alpha * alpha + beta * beta;
        if beta > 0.0 {
            u = unew / beta;
            let mut vnew = op.apply_transpose(&u)?;
            vnew.axpy(-beta, &v, 1.0);
            alpha = vnew.norm();
            if alpha > 0.0 {
                v = vnew / alpha;
            }
        } else {
            alpha = 0.0;
        }

        let rho = rhobar.hypot(beta);
        let c = rhobar / rho;
        let s = beta / rho;
        let theta = s * alpha;
        rhobar = -c * alpha;
        let phi = c * phibar;
        phibar *= s;

        x.axpy(phi / rho, &w, 1.0);
        let mut wnew = v.clone();
        wnew.axpy(-theta / rho, &w, 1.0);
        w = wnew;

        let rnorm = phibar;
        let arnorm = phibar * alpha * c.abs();
        let anorm = anorm2.sqrt();
        let xnorm = x.norm();
        let test1 = rnorm / bnorm;
        let test2 = if rnorm > 0.0 && anorm > 0.0 {
            arnorm / (anorm * rnorm)
        } else {
            0.0
        };
        let rtol = btol + atol * anorm * xnorm / bnorm;
        if test1 <= rtol || test2 <= atol || alpha == 0.0 || beta == 0.0 {
            converged = true;
            break;
        }
    }
    Ok(LsqrOutcome {
        solution: x,
        relative_residual_estimate: phibar / bnorm,
        iterations,
        converged,
    })
}

/// Orthogonal projection of (u; 0) onto range([A;L]), computed as [A;L]·x̃.
#[derive(Debug, Clone)]
pub struct Projection {
    pub vector: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub fn project_onto_range(
    op: &StackedOperator,
    u: &DVector<f64>,
    cfg: &LsqrConfig,
) -> Result<Projection> {
    if u.len() != op.m() {
        return Err(Error::DimensionMismatch(format!(
            "u has length {}, A has {} rows",
            u.len(),
            op.m()
        )));
    }
    let mut rhs = DVector::zeros(op.m() + op.p());
    rhs.rows_mut(0, op.m()).copy_from(u);
    project_stacked(op, &rhs, cfg)
}

/// Orthogonal projection of an arbitrary length-(m+p) vector onto range([A;L]).
pub fn project_stacked(
    op: &StackedOperator,
    rhs: &DVector<f64>,
    cfg: &LsqrConfig,
) -> Result<Projection> {
    let out = lsqr_solve(op, rhs, cfg.tol, cfg.maxit)?;
    Ok(Projection {
        vector: op.apply(&out.solution)?,
        iterations: out.iterations,
        converged: out.converged,
    })
}
