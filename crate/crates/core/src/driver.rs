//! The restarted outer loop, residual bounds, convergence tests and recovery of
//! GSVD components.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::bidiag::{inverse_norm, small_gsvd_dense, SmallGsvd};
use crate::error::{Coefficient, Error, Result};
use crate::jbd::{jbd_expand, jbd_init, JbdState};
use crate::restart::{multi_step_implicit_restart, thick_restart};
use crate::shifts::{apply_adaptive_rule, select_exact_shifts, Which, DEFAULT_RELGAP};
use crate::sparsemat::SparseMatrix;
use crate::stackedls::{lsqr_solve, LsqrConfig, StackedOperator};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    /// |s α e_{k+1}ᵀp − c β̄ e_kᵀp̄| < tol.
    BoundPq,
    /// |αβ/(cs) e_kᵀw| < tol.
    BoundW,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RestartMode {
    Implicit,
    Thick,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// |target| components; positive for the largest, negative for the smallest.
    pub target: i64,
    pub kmax: usize,
    pub adjust: usize,
    pub tol: f64,
    pub maxit: usize,
    /// Defaults to 10ε.
    pub lsqr_tol: Option<f64>,
    /// Defaults to 10n.
    pub lsqr_maxit: Option<usize>,
    pub seed: u64,
    pub criterion: Criterion,
    pub restart_mode: RestartMode,
    pub relgap_tol: f64,
}

impl SolverConfig {
    pub fn new(target: i64, kmax: usize) -> Self {
        SolverConfig {
            target,
            kmax,
            adjust: 3,
            tol: 1e-8,
            maxit: 1000,
            lsqr_tol: None,
            lsqr_maxit: None,
            seed: 0,
            criterion: Criterion::BoundPq,
            restart_mode: RestartMode::Implicit,
            relgap_tol: DEFAULT_RELGAP,
        }
    }

    pub fn l(&self) -> usize {
        self.target.unsigned_abs() as usize
    }

    pub fn which(&self) -> Which {
        if self.target < 0 {
            Which::Smallest
        } else {
            Which::Largest
        }
    }

    pub fn lsqr_config(&self, n: usize) -> LsqrConfig {
        let d = LsqrConfig::default_for(n);
        LsqrConfig {
            tol: self.lsqr_tol.unwrap_or(d.tol),
            maxit: self.lsqr_maxit.unwrap_or(d.maxit),
        }
    }

    /// Checks the parameters for a problem with n columns and returns the
    /// effective (kmax, adjust): kmax is capped at n and adjust at kmax − l − 1.
    pub fn validate(&self, n: usize) -> Result<(usize, usize)> {
        let l = self.l();
        if l == 0 {
            return Err(Error::InvalidConfig("target must be nonzero".into()));
        }
        if !(self.tol.is_finite() && self.tol >= f64::EPSILON) {
            return Err(Error::InvalidConfig(format!(
                "tol must be at least machine epsilon, got {}",
                self.tol
            )));
        }
        if let Some(t) = self.lsqr_tol {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::InvalidConfig(format!("lsqr_tol must be positive, got {t}")));
            }
        }
        if self.lsqr_maxit == Some(0) {
            return Err(Error::InvalidConfig("lsqr_maxit must be positive".into()));
        }
        if !(self.relgap_tol > 0.0 && self.relgap_tol < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "relgap threshold must lie in (0, 1), got {}",
                self.relgap_tol
            )));
        }
        let kmax = self.kmax.min(n);
        if kmax < l + 1 {
            return Err(Error::InvalidConfig(format!(
                "kmax = {} (capped at n = {n}) must exceed l = {l}",
                self.kmax
            )));
        }
        Ok((kmax, self.adjust.min(kmax - l - 1)))
    }
}

/// √(‖A‖₁‖A‖∞ + ‖L‖₁‖L‖∞), an upper bound on ‖[A; L]‖₂.
pub fn estimate_r_norm(a: &SparseMatrix, l: &SparseMatrix) -> Result<f64> {
    if a.ncols() != l.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "A has {} columns but L has {}",
            a.ncols(),
            l.ncols()
        )));
    }
    Ok((a.norm1() * a.norminf() + l.norm1() * l.norminf()).sqrt())
}

/// rnorm·|s α e_{k+1}ᵀp_i − c β̄_k e_kᵀp̄_i| for Ritz index i.
pub fn residual_bound_pq(
    ritz: &SmallGsvd,
    i: usize,
    alpha_next: f64,
    betabar_k: f64,
    rnorm: f64,
) -> f64 {
    let k = ritz.k();
    rnorm * (ritz.s[i] * alpha_next * ritz.p[(k, i)] - ritz.c[i] * betabar_k * ritz.pbar[(k - 1, i)]).abs()
}

/// The same bound with general coupling columns, as left by a thick restart.
pub fn residual_bound_coupled(
    ritz: &SmallGsvd,
    i: usize,
    b_next: &DVector<f64>,
    bbar_next: &DVector<f64>,
    rnorm: f64,
) -> f64 {
    let bp = b_next.dot(&ritz.p.column(i));
    let bq = bbar_next.dot(&ritz.pbar.column(i));
    rnorm * (ritz.s[i] * bp - ritz.c[i] * bq).abs()
}

/// rnorm·|α_{k+1}β_{k+1}/(c_i s_i) e_kᵀw_i|.
pub fn residual_bound_w(
    ritz: &SmallGsvd,
    i: usize,
    alpha_next: f64,
    beta_next: f64,
    rnorm: f64,
) -> f64 {
    let k = ritz.k();
    let wk = ritz.w[(k - 1, i)];
    if alpha_next * beta_next * wk == 0.0 {
        return 0.0;
    }
    rnorm * (alpha_next * beta_next / (ritz.c[i] * ritz.s[i]) * wk).abs()
}

/// Bounds and convergence flags for the wanted Ritz pairs.
#[derive(Debug, Clone)]
pub struct RitzSet {
    pub gsvd: SmallGsvd,
    /// Ritz indices of the wanted components, most extreme first.
    pub wanted: Vec<usize>,
    /// Bound of each wanted component, in the scale of the stopping test.
    pub bounds: Vec<f64>,
    pub converged: Vec<bool>,
    /// ‖B̲_k⁻¹‖‖B̂_k⁻¹‖.
    pub diag_product: f64,
    /// Set when diag_product·ε > tol: the bounds may not reflect true residuals.
    pub reliability_warning: bool,
}

impl RitzSet {
    pub fn all_converged(&self) -> bool {
        self.converged.iter().all(|&c| c)
    }

    pub fn max_bound(&self) -> f64 {
        self.bounds.iter().cloned().fold(0.0, f64::max)
    }
}

pub fn wanted_indices(k: usize, l: usize, which: Which) -> Vec<usize> {
    let l = l.min(k);
    match which {
        Which::Largest => (0..l).collect(),
        Which::Smallest => (k - l..k).rev().collect(),
    }
}

/// Evaluates the stopping test on the l wanted Ritz pairs of the current state.
pub fn check_convergence(
    state: &JbdState,
    ritz: SmallGsvd,
    which: Which,
    l: usize,
    tol: f64,
    criterion: Criterion,
) -> RitzSet {
    let k = ritz.k();
    let wanted = wanted_indices(k, l, which);
    let bounds: Vec<f64> = wanted
        .iter()
        .map(|&i| match criterion {
            Criterion::BoundPq => {
                residual_bound_coupled(&ritz, i, state.b_next(), state.bbar_next(), 1.0)
            }
            Criterion::BoundW => {
                residual_bound_w(&ritz, i, state.b_next()[k], state.beta_last(), 1.0)
            }
        })
        .collect();
    let converged = bounds.iter().map(|&b| b < tol).collect();
    let diag_product = diag_product(state);
    RitzSet {
        gsvd: ritz,
        wanted,
        bounds,
        converged,
        diag_product,
        reliability_warning: diag_product * f64::EPSILON > tol,
    }
}

/// ‖B̲_k⁻¹‖‖B̂_k⁻¹‖ from the leading k×k block of B_k and from B̄_k.
pub fn diag_product(state: &JbdState) -> f64 {
    let k = state.k();
    let lead = state.b().view((0, 0), (k, k)).into_owned();
    inverse_norm(&lead) * inverse_norm(state.bbar())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GsvdComponent {
    pub c: f64,
    pub s: f64,
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub z: DVector<f64>,
    pub residual_norm: f64,
    pub relative_residual: f64,
    /// Bound at the final extraction, in the scale of the stopping test.
    pub bound: f64,
    pub converged: bool,
    /// False when the component converged under an active reliability warning.
    pub reliable: bool,
    pub lsqr_converged: bool,
    pub lsqr_iterations: usize,
}

impl GsvdComponent {
    /// c/s, infinite when s = 0.
    pub fn value(&self) -> f64 {
        self.c / self.s
    }
}

/// Builds (c, s, x, y, z) for Ritz index i: x solves [A; L]x = V′w_i, y = Up_i, z = Ûp̄_i.
pub fn recover_component(
    state: &JbdState,
    op: &StackedOperator,
    ritz: &SmallGsvd,
    i: usize,
    cfg: &LsqrConfig,
) -> Result<GsvdComponent> {
    let k = state.k();
    let rhs = state.vprime() * ritz.w.column(i);
    let sol = lsqr_solve(op, &rhs, cfg.tol, cfg.maxit)?;
    let y = state.u() * ritz.p.column(i);
    let z = state.uhat() * ritz.pbar.column(i);
    debug_assert_eq!(ritz.k(), k);
    let mut comp = GsvdComponent {
        c: ritz.c[i],
        s: ritz.s[i],
        x: sol.solution,
        y,
        z,
        residual_norm: 0.0,
        relative_residual: 0.0,
        bound: f64::NAN,
        converged: false,
        reliable: true,
        lsqr_converged: sol.converged,
        lsqr_iterations: sol.iterations,
    };
    let (r, rel) = compute_residual(&comp, op.a(), op.l(), state.rnorm())?;
    comp.residual_norm = r;
    comp.relative_residual = rel;
    Ok(comp)
}

/// Norms of the three residual blocks Ax − cy, Lx − sz, sAᵀy − cLᵀz.
pub fn residual_blocks(
    comp: &GsvdComponent,
    a: &SparseMatrix,
    l: &SparseMatrix,
) -> Result<[f64; 3]> {
    let ax = DVector::from_vec(a.matvec(comp.x.as_slice())?);
    let lx = DVector::from_vec(l.matvec(comp.x.as_slice())?);
    let aty = DVector::from_vec(a.matvec_transpose(comp.y.as_slice())?);
    let ltz = DVector::from_vec(l.matvec_transpose(comp.z.as_slice())?);
    Ok([
        (ax - &comp.y * comp.c).norm(),
        (lx - &comp.z * comp.s).norm(),
        (aty * comp.s - ltz * comp.c).norm(),
    ])
}

/// (‖r‖, ‖r‖/rnorm) for the stacked three-block residual.
pub fn compute_residual(
    comp: &GsvdComponent,
    a: &SparseMatrix,
    l: &SparseMatrix,
    rnorm: f64,
) -> Result<(f64, f64)> {
    let [r1, r2, r3] = residual_blocks(comp, a, l)?;
    let r = (r1 * r1 + r2 * r2 + r3 * r3).sqrt();
    Ok((r, r / rnorm))
}

/// √(‖s²Aᵀy − cLᵀLx‖² + ‖c²Lᵀz − sAᵀAx‖²). Equals ‖sAᵀy − cLᵀz‖ whenever
/// Ax = cy and Lx = sz.
pub fn trjbd_residual(comp: &GsvdComponent, a: &SparseMatrix, l: &SparseMatrix) -> Result<f64> {
    let (c, s) = (comp.c, comp.s);
    let xs = comp.x.as_slice();
    let ata_x = DVector::from_vec(a.matvec_transpose(&a.matvec(xs)?)?);
    let ltl_x = DVector::from_vec(l.matvec_transpose(&l.matvec(xs)?)?);
    let aty = DVector::from_vec(a.matvec_transpose(comp.y.as_slice())?);
    let ltz = DVector::from_vec(l.matvec_transpose(comp.z.as_slice())?);
    let first = aty * (s * s) - ltl_x * c;
    let second = ltz * (c * c) - ata_x * s;
    Ok((first.norm_squared() + second.norm_squared()).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRecord {
    /// Number of restarts performed before this extraction.
    pub restart_index: usize,
    pub bounds: Vec<f64>,
    pub diag_product: f64,
    /// Shifts applied by the restart that produced this subspace.
    pub shifts_used: Vec<f64>,
    /// Cumulative LSQR iterations so far.
    pub lsqr_iters_total: usize,
    pub reliability_warning: bool,
}

impl ConvergenceRecord {
    pub fn max_bound(&self) -> f64 {
        self.bounds.iter().cloned().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    /// Every wanted component met the stopping test.
    Converged,
    /// The restart limit was reached first.
    MaxRestarts,
    /// Converged, but under the conditioning warning.
    Unreliable,
    /// The process broke down before l components converged.
    Breakdown,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Converged => "converged",
            Status::MaxRestarts => "max_restarts",
            Status::Unreliable => "unreliable",
            Status::Breakdown => "breakdown",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    /// Most extreme first.
    pub components: Vec<GsvdComponent>,
    pub history: Vec<ConvergenceRecord>,
    pub status: Status,
    pub restarts: usize,
    pub seed: u64,
    pub kmax: usize,
    pub adjust: usize,
    pub rnorm_estimate: f64,
    pub lsqr_iterations: usize,
    pub lsqr_failures: usize,
    /// Ritz values c of the final extraction, descending.
    pub ritz_values: Vec<f64>,
}

/// Normalized standard-normal starting vector from the seed.
pub fn starting_vector(m: usize, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let v = DVector::<f64>::from_fn(m, |_, _| StandardNormal.sample(&mut rng));
        let nv = v.norm();
        if nv > 0.0 {
            return v / nv;
        }
    }
}

/// Runs the restarted method from a seeded random starting vector.
pub fn irjbd_solve(a: &SparseMatrix, l: &SparseMatrix, cfg: &SolverConfig) -> Result<SolveOutcome> {
    let u1 = starting_vector(a.nrows(), cfg.seed);
    irjbd_solve_from(a, l, cfg, &u1)
}

/// Expands and absorbs α/β breakdowns, which leave a valid smaller state.
fn expand(
    state: &mut JbdState,
    op: &StackedOperator,
    to_k: usize,
    cfg: &LsqrConfig,
) -> Result<Option<Error>> {
    match jbd_expand(state, op, to_k, cfg) {
        Ok(()) => Ok(None),
        Err(e @ Error::Breakdown { coefficient, .. }) => {
            log::info!("{e}");
            if coefficient == Coefficient::AlphaHat {
                Ok(Some(e))
            } else {
                Ok(None)
            }
        }
        Err(e) => Err(e),
    }
}

/// Runs the restarted method from a given unit starting vector.
pub fn irjbd_solve_from(
    a: &SparseMatrix,
    lmat: &SparseMatrix,
    cfg: &SolverConfig,
    u1: &DVector<f64>,
) -> Result<SolveOutcome> {
    let op = StackedOperator::new(a, lmat)?;
    let n = op.n();
    let (kmax, adjust) = cfg.validate(n)?;
    let l = cfg.l();
    let which = cfg.which();
    let ls = cfg.lsqr_config(n);

    let mut state = jbd_init(&op, u1, &ls, kmax)?;
    let mut stalled = expand(&mut state, &op, kmax, &ls)?;
    let mut history = Vec::new();
    let mut restarts = 0;
    let mut last_shifts = Vec::new();

    let (ritz, status) = loop {
        let gsvd = small_gsvd_dense(state.b(), state.bbar())?;
        let ritz = check_convergence(&state, gsvd, which, l, cfg.tol, cfg.criterion);
        history.push(ConvergenceRecord {
            restart_index: restarts,
            bounds: ritz.bounds.clone(),
            diag_product: ritz.diag_product,
            shifts_used: std::mem::take(&mut last_shifts),
            lsqr_iters_total: state.lsqr_iterations(),
            reliability_warning: ritz.reliability_warning,
        });
        log::debug!(
            "restart {restarts}: k = {}, max bound {:e}, diag product {:e}",
            state.k(),
            ritz.max_bound(),
            ritz.diag_product
        );
        let enough = ritz.wanted.len() == l;
        if ritz.all_converged() && enough {
            let status = if ritz.reliability_warning {
                Status::Unreliable
            } else {
                Status::Converged
            };
            break (ritz, status);
        }
        if stalled.is_some() || state.breakdown().is_some() {
            break (ritz, Status::Breakdown);
        }
        if restarts >= cfg.maxit {
            break (ritz, Status::MaxRestarts);
        }
        restarts += 1;

        let k = state.k();
        let keep = (l + adjust).min(k - 1);
        match cfg.restart_mode {
            RestartMode::Implicit => {
                let shifts = select_exact_shifts(&ritz.gsvd, which, k - keep)?;
                let shifts = apply_adaptive_rule(&shifts, &ritz.gsvd, which, l, cfg.relgap_tol);
                multi_step_implicit_restart(&mut state, &shifts.lambdas, keep)?;
                last_shifts = shifts.lambdas;
            }
            RestartMode::Thick => {
                let selected = wanted_indices(k, keep, which);
                thick_restart(&mut state, &ritz.gsvd, &selected)?;
            }
        }
        stalled = expand(&mut state, &op, kmax, &ls)?;
    };

    if ritz.reliability_warning {
        log::warn!(
            "conditioning product {:e} times machine epsilon exceeds tol {:e}; residual bounds may be unreliable",
            ritz.diag_product,
            cfg.tol
        );
    }
    let mut components = Vec::with_capacity(ritz.wanted.len());
    for (j, &i) in ritz.wanted.iter().enumerate() {
        let mut comp = recover_component(&state, &op, &ritz.gsvd, i, &ls)?;
        comp.bound = ritz.bounds[j];
        comp.converged = ritz.converged[j];
        comp.reliable = !(comp.converged && ritz.reliability_warning);
        components.push(comp);
    }
    Ok(SolveOutcome {
        components,
        history,
        status,
        restarts,
        seed: cfg.seed,
        kmax,
        adjust,
        rnorm_estimate: state.rnorm(),
        lsqr_iterations: state.lsqr_iterations(),
        lsqr_failures: state.lsqr_failures(),
        ritz_values: ritz.gsvd.c.iter().cloned().collect(),
    })
}
