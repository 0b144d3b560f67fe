//! Implicit and thick restarting of a joint bidiagonalization state.

use nalgebra::{DMatrix, DVector};

use crate::bidiag::{givens, rotate_cols, rotate_rows, LowerBidiagonal, SmallGsvd};
use crate::error::{Coefficient, Error, Result};
use crate::jbd::{cgs2, BreakdownInfo, JbdState};

/// Entries spilled outside the upper bidiagonal pattern of B̄ are dropped below
/// this multiple of ε‖B̄‖_F.
pub const ZEROING_FACTOR: f64 = 64.0;

/// Accumulated rotations of one or more coupled sweeps: B ← GᵀBP, B̄ ← ḠᵀB̄P.
#[derive(Debug, Clone)]
pub struct SweepRotations {
    pub g: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub gbar: DMatrix<f64>,
}

/// Result of one implicit shifted QR step on B.
#[derive(Debug, Clone)]
pub struct LowerStep {
    pub b: LowerBidiagonal,
    pub g: DMatrix<f64>,
    pub p: DMatrix<f64>,
    /// Right rotations (c, s) in the order applied; rotation i acts on columns i, i+1.
    pub right: Vec<(f64, f64)>,
}

/// Bulge-chasing sweep on a dense lower bidiagonal (k+1)×k matrix, in place.
/// Left rotations are accumulated into `g`, right ones into `p` and returned.
fn sweep_lower(
    b: &mut DMatrix<f64>,
    lambda: f64,
    g: &mut DMatrix<f64>,
    p: &mut DMatrix<f64>,
) -> Vec<(f64, f64)> {
    let k = b.ncols();
    let mut right = Vec::with_capacity(k.saturating_sub(1));
    if k == 0 {
        return right;
    }
    // First column of BBᵀ − λ²I is (α₁² − λ², α₁β₂, 0, ...).
    let a1 = b[(0, 0)];
    let (c, s, _) = givens(a1 * a1 - lambda * lambda, a1 * b[(1, 0)]);
    rotate_rows(b, 0, 1, c, s);
    rotate_cols(g, 0, 1, c, s);
    for i in 0..k - 1 {
        let (c, s, _) = givens(b[(i, i)], b[(i, i + 1)]);
        rotate_cols(b, i, i + 1, c, s);
        rotate_cols(p, i, i + 1, c, s);
        b[(i, i + 1)] = 0.0;
        right.push((c, s));

        let (c, s, _) = givens(b[(i + 1, i)], b[(i + 2, i)]);
        rotate_rows(b, i + 1, i + 2, c, s);
        rotate_cols(g, i + 1, i + 2, c, s);
        b[(i + 2, i)] = 0.0;
    }
    right
}

/// Applies the right rotations of a lower sweep to the signed B̄ and restores
/// upper triangular form with left rotations accumulated into `gbar`. Spilled
/// entries above the superdiagonal are zeroed when tiny; larger ones are an
/// error when `strict`, and are otherwise kept, leaving B̄ upper triangular.
fn sweep_upper(
    bbar: &mut DMatrix<f64>,
    right: &[(f64, f64)],
    gbar: &mut DMatrix<f64>,
    strict: bool,
) -> Result<()> {
    let threshold = ZEROING_FACTOR * f64::EPSILON * bbar.norm();
    for (i, &(c, s)) in right.iter().enumerate() {
        rotate_cols(bbar, i, i + 1, c, s);
        if i > 0 {
            let spill = bbar[(i - 1, i + 1)];
            if spill.abs() <= threshold {
                bbar[(i - 1, i + 1)] = 0.0;
            } else if strict {
                return Err(Error::CouplingDefect {
                    row: i - 1,
                    col: i + 1,
                    value: spill,
                    threshold,
                });
            } else {
                log::debug!("keeping spilled entry {spill:e} at ({}, {})", i - 1, i + 1);
            }
        }
        let (c, s, _) = givens(bbar[(i, i)], bbar[(i + 1, i)]);
        rotate_rows(bbar, i, i + 1, c, s);
        rotate_cols(gbar, i, i + 1, c, s);
        bbar[(i + 1, i)] = 0.0;
    }
    Ok(())
}

/// One implicit QR step on B with shift λ: B′ = GᵀBP, with B′B′ᵀ the shifted QR iterate of BBᵀ.
pub fn implicit_qr_step_lower(b: &LowerBidiagonal, lambda: f64) -> Result<LowerStep> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!(
            "shift must lie in [0, 1], got {lambda}"
        )));
    }
    let k = b.k();
    let dense = b.to_dense();
    let tiny = f64::EPSILON * dense.norm();
    for i in 0..k {
        if b.alphas[i].abs() <= tiny {
            return Err(Error::Reduced { index: i });
        }
        if b.betas[i].abs() <= tiny {
            return Err(Error::Reduced { index: i + 1 });
        }
    }
    let mut bm = dense;
    let mut g = DMatrix::identity(k + 1, k + 1);
    let mut p = DMatrix::identity(k, k);
    let right = sweep_lower(&mut bm, lambda, &mut g, &mut p);
    Ok(LowerStep {
        b: LowerBidiagonal::from_dense(&bm)?,
        g,
        p,
        right,
    })
}

/// Companion sweep on the signed B̄ sharing the right rotations of a lower step.
/// Returns (Ḡᵀ B̄ P, Ḡ) with the result stored exactly upper bidiagonal.
pub fn coupled_sweep_upper(
    bbar: &DMatrix<f64>,
    right: &[(f64, f64)],
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let k = bbar.ncols();
    if bbar.nrows() != k || right.len() + 1 != k.max(1) {
        return Err(Error::DimensionMismatch(format!(
            "B̄ is {}x{k} but {} right rotations were given",
            bbar.nrows(),
            right.len()
        )));
    }
    let mut out = bbar.clone();
    let mut gbar = DMatrix::identity(k, k);
    sweep_upper(&mut out, right, &mut gbar, true)?;
    Ok((out, gbar))
}

/// Applies one coupled sweep per shift to a state of size k with B lower
/// bidiagonal and B̄ upper triangular, and truncates it to size l.
pub fn multi_step_implicit_restart(
    state: &mut JbdState,
    shifts: &[f64],
    l: usize,
) -> Result<SweepRotations> {
    let k = state.k;
    if l == 0 || l >= k {
        return Err(Error::InvalidArgument(format!(
            "restart size must satisfy 1 <= l < k = {k}, got {l}"
        )));
    }
    if let Some(&bad) = shifts.iter().find(|&&x| !(0.0..=1.0).contains(&x)) {
        return Err(Error::InvalidArgument(format!(
            "shift must lie in [0, 1], got {bad}"
        )));
    }
    if shifts.is_empty() {
        log::warn!("implicit restart called without shifts; truncating only");
    }
    let mut b = state.b.clone();
    let mut bbar = state.bbar.clone();
    let mut g = DMatrix::identity(k + 1, k + 1);
    let mut p = DMatrix::identity(k, k);
    let mut gbar = DMatrix::identity(k, k);
    for &lambda in shifts {
        let right = sweep_lower(&mut b, lambda, &mut g, &mut p);
        sweep_upper(&mut bbar, &right, &mut gbar, false)?;
    }

    let (m, pp) = (state.m, state.p);
    let alpha_old = state.alpha_next();
    let u = state.u.columns(0, k + 1) * g.columns(0, l + 1);
    let vp = state.vprime.columns(0, k) * &p;
    let uhat = state.uhat.columns(0, k) * gbar.columns(0, l);

    // r′ = α_{k+1} g_{k+1,l+1} v′_{k+1} + α⁺_{l+1} (V′P) e_{l+1}.
    let mut r = &state.vprime_next * (alpha_old * g[(k, l)]);
    r.axpy(b[(l, l)], &vp.column(l), 1.0);

    state.u.columns_mut(0, l + 1).copy_from(&u);
    state.vprime.columns_mut(0, l).copy_from(&vp.columns(0, l));
    state.uhat.columns_mut(0, l).copy_from(&uhat);
    state.b = b.view((0, 0), (l + 1, l)).into_owned();
    state.bbar = bbar.view((0, 0), (l, l)).into_owned();
    state.k = l;
    state.breakdown = None;

    cgs2(&state.vprime.columns(0, l).into_owned(), &mut r);
    let alpha = r.norm();
    if alpha <= state.threshold {
        state.vprime_next = DVector::zeros(m + pp);
        state.b_next = DVector::zeros(l + 1);
        state.bbar_next = DVector::zeros(l);
        state.breakdown = Some(BreakdownInfo {
            index: l + 1,
            coefficient: Coefficient::Alpha,
            value: alpha,
            threshold: state.threshold,
        });
    } else {
        state.vprime_next = r / alpha;
        state.b_next = DVector::zeros(l + 1);
        state.b_next[l] = alpha;
        state.bbar_next = DVector::zeros(l);
        state.bbar_next[l - 1] = -alpha * state.b[(l, l - 1)] / state.bbar[(l - 1, l - 1)];
    }
    Ok(SweepRotations { g, p, gbar })
}

/// Rotates the bases onto the selected Ritz directions. `selected` indexes
/// columns of the Ritz data; the restarted factors are B = [diag c; 0], B̄ = diag s.
pub fn thick_restart(state: &mut JbdState, ritz: &SmallGsvd, selected: &[usize]) -> Result<()> {
    let k = state.k;
    let l = selected.len();
    if ritz.k() != k {
        return Err(Error::DimensionMismatch(format!(
            "Ritz data has k = {}, state has k = {k}",
            ritz.k()
        )));
    }
    if l == 0 || l >= k || selected.iter().any(|&i| i >= k) {
        return Err(Error::InvalidArgument(format!(
            "thick restart needs 1 <= l < k = {k} valid indices"
        )));
    }
    let mut psel = DMatrix::zeros(k + 1, l + 1);
    let mut wsel = DMatrix::zeros(k, l);
    let mut pbsel = DMatrix::zeros(k, l);
    for (dst, &src) in selected.iter().enumerate() {
        psel.set_column(dst, &ritz.p.column(src));
        wsel.set_column(dst, &ritz.w.column(src));
        pbsel.set_column(dst, &ritz.pbar.column(src));
    }
    psel.set_column(l, &ritz.p_next);

    let u = state.u.columns(0, k + 1) * &psel;
    let vp = state.vprime.columns(0, k) * &wsel;
    let uhat = state.uhat.columns(0, k) * &pbsel;
    state.u.columns_mut(0, l + 1).copy_from(&u);
    state.vprime.columns_mut(0, l).copy_from(&vp);
    state.uhat.columns_mut(0, l).copy_from(&uhat);

    let mut b = DMatrix::zeros(l + 1, l);
    let mut bbar = DMatrix::zeros(l, l);
    for (dst, &src) in selected.iter().enumerate() {
        b[(dst, dst)] = ritz.c[src];
        bbar[(dst, dst)] = ritz.s[src];
    }
    state.b_next = psel.tr_mul(&state.b_next);
    state.bbar_next = pbsel.tr_mul(&state.bbar_next);
    state.b = b;
    state.bbar = bbar;
    state.k = l;
    Ok(())
}
