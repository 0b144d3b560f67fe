//! Exact shifts and the adaptive bad-shift replacement rule.

use crate::bidiag::SmallGsvd;
use crate::error::{Error, Result};

/// Default relative-gap threshold below which a shift counts as bad.
pub const DEFAULT_RELGAP: f64 = 1e-3;

/// Which end of the generalized singular spectrum is wanted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    Largest,
    Smallest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftSet {
    pub lambdas: Vec<f64>,
    pub replaced: Vec<bool>,
}

impl ShiftSet {
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }
}

/// Unwanted Ritz values as shifts: the trailing `nshifts` values when the largest
/// are wanted, the leading `nshifts` when the smallest are.
pub fn select_exact_shifts(ritz: &SmallGsvd, which: Which, nshifts: usize) -> Result<ShiftSet> {
    select_exact_shifts_from(ritz.c.as_slice(), which, nshifts)
}

/// As [`select_exact_shifts`] on a descending list of Ritz values.
pub fn select_exact_shifts_from(c: &[f64], which: Which, nshifts: usize) -> Result<ShiftSet> {
    let k = c.len();
    if nshifts >= k.max(1) {
        return Err(Error::InvalidArgument(format!(
            "{nshifts} shifts requested from {k} Ritz values"
        )));
    }
    let lambdas = match which {
        Which::Largest => c[k - nshifts..].to_vec(),
        Which::Smallest => c[..nshifts].to_vec(),
    };
    Ok(ShiftSet {
        replaced: vec![false; lambdas.len()],
        lambdas,
    })
}

/// Replaces shifts too close to the boundary wanted value: by 0 when the largest
/// are wanted (gap against c_l), by 1 when the smallest are (gap against c_{k−l+1}).
pub fn apply_adaptive_rule(
    shifts: &ShiftSet,
    ritz: &SmallGsvd,
    which: Which,
    l: usize,
    relgap_tol: f64,
) -> ShiftSet {
    apply_adaptive_rule_from(shifts, ritz.c.as_slice(), which, l, relgap_tol)
}

pub fn apply_adaptive_rule_from(
    shifts: &ShiftSet,
    c: &[f64],
    which: Which,
    l: usize,
    relgap_tol: f64,
) -> ShiftSet {
    let k = c.len();
    let l = l.clamp(1, k.max(1));
    let (reference, replacement) = match which {
        Which::Largest => (c[l - 1], 0.0),
        Which::Smallest => (c[k - l], 1.0),
    };
    let mut out = shifts.clone();
    for (lam, flag) in out.lambdas.iter_mut().zip(out.replaced.iter_mut()) {
        if *lam == replacement {
            continue;
        }
        let relgap = ((reference - *lam) / reference).abs();
        if relgap < relgap_tol {
            *lam = replacement;
            *flag = true;
        }
    }
    out
}
