#![allow(dead_code)]

use std::path::PathBuf;
use std::time::Instant;

use irjbd::bidiag::{small_gsvd_dense, LowerBidiagonal};
use irjbd::driver::{
    residual_blocks, residual_bound_pq, residual_bound_w, starting_vector, trjbd_residual,
};
use irjbd::jbd::{jbd_expand, jbd_init, verify_state, JbdState};
use irjbd::oracle::{
    dense_gsvd, dense_joint_lanczos, explicit_shifted_qr, random_dense_pair, stacked_qr, DenseGsvd,
};
use irjbd::restart::{
    coupled_sweep_upper, implicit_qr_step_lower, multi_step_implicit_restart, thick_restart,
};
use irjbd::shifts::{apply_adaptive_rule, select_exact_shifts, DEFAULT_RELGAP};
use irjbd::sparsemat::{read_matrix_market, second_order_l};
use irjbd::stackedls::LsqrConfig;
use irjbd::{
    irjbd_solve, GsvdComponent, RestartMode, SolverConfig, SparseMatrix, StackedOperator, Status,
    Which,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Pair {
    pub a: SparseMatrix,
    pub l: SparseMatrix,
    pub ad: DMatrix<f64>,
    pub ld: DMatrix<f64>,
}

impl Pair {
    pub fn from_dense(ad: DMatrix<f64>, ld: DMatrix<f64>) -> Self {
        Pair {
            a: SparseMatrix::from_dense(&ad),
            l: SparseMatrix::from_dense(&ld),
            ad,
            ld,
        }
    }

    pub fn gsvd(&self) -> DenseGsvd {
        dense_gsvd(&self.ad, &self.ld).expect("oracle gsvd")
    }

    pub fn op(&self) -> StackedOperator<'_> {
        StackedOperator::new(&self.a, &self.l).expect("conformable")
    }

    /// Stacked orthonormal factor [Q_A; Q_L].
    pub fn q(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let (qa, ql, _) = stacked_qr(&self.ad, &self.ld).expect("full rank");
        (qa, ql)
    }
}

/// Random small pair with m, p ∈ [6,30], n ∈ [4, min(m,p,20)] and conditions ≤ 1e3.
pub fn small_pair(seed: u64) -> Pair {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let m = rng.random_range(6..=30);
    let p = rng.random_range(6..=30);
    let n = rng.random_range(4..=m.min(p).min(20));
    let cond_a = 10f64.powf(rng.random_range(0.5..3.0));
    let cond_l = 10f64.powf(rng.random_range(0.0..1.5));
    let (ad, ld) = random_dense_pair(seed, m, p, n, cond_a, cond_l);
    Pair::from_dense(ad, ld)
}

/// Sparse m×n matrix with about `per_row` normal entries per row, and L the
/// tridiagonal second-order matrix.
pub fn sparse_pair(seed: u64, m: usize, n: usize, per_row: usize) -> (SparseMatrix, SparseMatrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Vec::with_capacity(m * per_row);
    for i in 0..m {
        for _ in 0..per_row {
            let j = rng.random_range(0..n);
            let v: f64 = rng.sample(rand_distr::StandardNormal);
            t.push((i, j, v));
        }
    }
    let a = SparseMatrix::from_triplets(m, n, &t).expect("valid triplets");
    (a, second_order_l(n).expect("n >= 2"))
}

pub fn sign_distance(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm().min((a + b).norm())
}

/// Columnwise sign-insensitive distance between two matrices of equal shape.
pub fn column_sign_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (0..a.ncols())
        .map(|j| sign_distance(&a.column(j).into_owned(), &b.column(j).into_owned()))
        .fold(0.0, f64::max)
}

pub fn abs_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a.abs() - b.abs()).abs().max()
}

/// Sine of the largest principal angle between two column spans.
pub fn subspace_sine(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let qa = a.clone().qr().q();
    let qb = b.clone().qr().q();
    let proj = &qa * (qa.transpose() * &qb);
    (qb - proj).norm()
}

/// Oracle index nearest to c, and every oracle index in its cluster.
pub fn oracle_match(g: &DenseGsvd, c: f64) -> (usize, Vec<usize>) {
    let best = (0..g.q)
        .min_by(|&i, &j| (g.c[i] - c).abs().total_cmp(&(g.c[j] - c).abs()))
        .expect("nonempty");
    let cluster = (0..g.q)
        .filter(|&j| (g.c[j] - g.c[best]).abs() < 1e-6 * g.c[best])
        .collect();
    (best, cluster)
}

/// Discrepancy of (x, y, z) against the oracle, up to sign; a subspace sine of
/// x inside a cluster of nearly equal values.
pub fn vector_error(g: &DenseGsvd, comp: &GsvdComponent) -> f64 {
    let (i, cluster) = oracle_match(g, comp.c);
    if cluster.len() == 1 {
        let xo = g.x.column(i).into_owned();
        let ex = sign_distance(&comp.x, &xo) / xo.norm();
        ex.max(sign_distance(&comp.y, &g.pa.column(i).into_owned()))
            .max(sign_distance(&comp.z, &g.pl.column(i).into_owned()))
    } else {
        let xs = DMatrix::from_columns(
            &cluster
                .iter()
                .map(|&j| g.x.column(j).into_owned())
                .collect::<Vec<_>>(),
        );
        subspace_sine(&xs, &DMatrix::from_columns(std::slice::from_ref(&comp.x)))
    }
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Result of one acceptance check.
pub struct Check {
    pub pass: bool,
    pub skipped: bool,
    pub detail: String,
}

impl Check {
    fn new(pass: bool, detail: String) -> Self {
        Check {
            pass,
            skipped: false,
            detail,
        }
    }

    pub fn assert(&self) {
        println!("{}", self.detail);
        assert!(self.pass, "{}", self.detail);
    }
}

/// JBD state of size k on a pair, from the seeded starting vector.
pub fn jbd_state(pair: &Pair, seed: u64, k: usize) -> (JbdState, DVector<f64>) {
    let op = pair.op();
    let ls = LsqrConfig::default_for(pair.a.ncols());
    let u1 = starting_vector(pair.a.nrows(), seed);
    let mut st = jbd_init(&op, &u1, &ls, k).expect("init");
    jbd_expand(&mut st, &op, k, &ls).expect("expand");
    (st, u1)
}

pub fn check_oracle_equivalence(npairs: u64) -> Check {
    let start = Instant::now();
    let mut val = 0f64;
    let mut vec = 0f64;
    let mut failures = Vec::new();
    let mut restarts = Vec::new();
    for mode in [RestartMode::Implicit, RestartMode::Thick] {
        for seed in 0..npairs {
            let pair = small_pair(seed);
            let g = pair.gsvd();
            let n = pair.a.ncols();
            for target in [3i64, -3] {
                let mut cfg = SolverConfig::new(target, n.min(12));
                cfg.seed = seed;
                cfg.restart_mode = mode;
                let out = match irjbd_solve(&pair.a, &pair.l, &cfg) {
                    Ok(o) => o,
                    Err(e) => {
                        failures.push(format!("seed {seed} {target} {mode:?}: {e}"));
                        continue;
                    }
                };
                if out.status != Status::Converged {
                    failures.push(format!("seed {seed} {target} {mode:?}: {:?}", out.status));
                }
                restarts.push(out.restarts as f64);
                for (j, comp) in out.components.iter().enumerate() {
                    let idx = if target > 0 { j } else { g.q - 1 - j };
                    val = val.max(rel_diff(comp.value(), g.c[idx] / g.s[idx]));
                    vec = vec.max(vector_error(&g, comp));
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = failures.is_empty() && val < 1e-6 && vec < 1e-5 && secs < 30.0;
    Check::new(
        pass,
        format!(
            "{npairs} pairs x 2 targets x 2 modes: max value error {val:.2e}, max vector error {vec:.2e}, \
             {} of {} runs restarted (max {}), {secs:.2}s{}",
            restarts.iter().filter(|&&r| r > 0.0).count(),
            restarts.len(),
            restarts.iter().cloned().fold(0.0, f64::max),
            if failures.is_empty() {
                String::new()
            } else {
                format!(", failures: {}", failures.join("; "))
            }
        ),
    )
}

pub fn check_jbd_equivalence(npairs: u64) -> Check {
    let mut entry = 0f64;
    let mut relation = 0f64;
    for seed in 0..npairs {
        let pair = small_pair(1000 + seed);
        let n = pair.a.ncols();
        let k = (n - 1).min(8);
        let (st, u1) = jbd_state(&pair, seed, k);
        let (qa, ql) = pair.q();
        let j = dense_joint_lanczos(&qa, &ql, &u1, k).expect("dense lanczos");
        entry = entry
            .max((st.b() - &j.b).abs().max())
            .max((st.bbar() - j.bbar()).abs().max());
        let vk = j.v.columns(0, k).into_owned();
        let m = pair.a.nrows();
        let vp = st.vprime();
        entry = entry
            .max((vp.rows(0, m) - &qa * &vk).abs().max())
            .max((vp.rows(m, ql.nrows()) - &ql * &vk).abs().max());
        relation = relation
            .max((&qa * &vk - &j.u * &j.b).norm())
            .max((&ql * &j.vhat - &j.uhat * &j.bhat).norm());
        for i in 0..k {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            relation = relation.max((j.vhat.column(i) - j.v.column(i) * sign).norm());
        }
        let rep = verify_state(&st, &pair.op(), &LsqrConfig::default_for(n));
        relation = relation.max(rep.upper_relation).max(rep.lower_relation);
    }
    Check::new(
        entry < 1e-8 && relation < 1e-10,
        format!("{npairs} pairs: max factor discrepancy {entry:.2e}, max relation defect {relation:.2e}"),
    )
}

/// Worst invariant defect over plain, implicitly restarted and thick restarted states.
pub fn check_invariants(npairs: u64) -> Check {
    let mut worst = 0f64;
    let mut states = 0usize;
    for seed in 0..npairs {
        let pair = small_pair(2000 + seed);
        let n = pair.a.ncols();
        let op = pair.op();
        let ls = LsqrConfig::default_for(n);
        let kmax = n.min(12);
        if kmax < 5 {
            continue;
        }
        let l = 3;
        for mode in [RestartMode::Implicit, RestartMode::Thick] {
            let (mut st, _) = jbd_state(&pair, seed, kmax);
            worst = worst.max(verify_state(&st, &op, &ls).max());
            states += 1;
            for _ in 0..3 {
                if st.k() < kmax {
                    break;
                }
                let ritz = small_gsvd_dense(st.b(), st.bbar()).expect("small gsvd");
                match mode {
                    RestartMode::Implicit => {
                        let sh = select_exact_shifts(&ritz, Which::Largest, kmax - l).unwrap();
                        let sh = apply_adaptive_rule(&sh, &ritz, Which::Largest, l, DEFAULT_RELGAP);
                        multi_step_implicit_restart(&mut st, &sh.lambdas, l).expect("restart");
                    }
                    RestartMode::Thick => {
                        thick_restart(&mut st, &ritz, &[0, 1, 2]).expect("thick restart");
                    }
                }
                worst = worst.max(verify_state(&st, &op, &ls).max());
                let _ = jbd_expand(&mut st, &op, kmax, &ls);
                worst = worst.max(verify_state(&st, &op, &ls).max());
                states += 2;
            }
        }
    }
    Check::new(
        worst < 1e-9,
        format!("{states} states: max invariant defect {worst:.2e}"),
    )
}

/// Accumulated G of one implicit step against the explicit shifted QR factor.
pub fn check_restart_a() -> Check {
    let mut worst = 0f64;
    for k in 2..=8usize {
        for seed in 0..5u64 {
            let pair = small_pair(3000 + 10 * k as u64 + seed);
            if pair.a.ncols() <= k {
                continue;
            }
            let (qa, ql) = pair.q();
            let u1 = starting_vector(pair.a.nrows(), seed);
            let j = dense_joint_lanczos(&qa, &ql, &u1, k).expect("dense lanczos");
            let lb = LowerBidiagonal::from_dense(&j.b).expect("bidiagonal");
            let sv = j.b.clone().singular_values();
            let mut sv: Vec<f64> = sv.iter().cloned().collect();
            sv.sort_by(f64::total_cmp);
            let lambda = 0.5 * (sv[0] + sv[1]);
            let step = implicit_qr_step_lower(&lb, lambda).expect("step");
            let (q, _) = explicit_shifted_qr(&(&j.b * j.b.transpose()), lambda * lambda);
            worst = worst.max(column_sign_distance(&step.g, &q));
        }
    }
    Check::new(worst < 1e-12, format!("k = 2..8: max |G - Q·D| {worst:.2e}"))
}

/// Restarted u₁ against the explicitly filtered starting vector, and the
/// restarted factors against a fresh process from it.
type RestartCase = (Pair, JbdState, DVector<f64>, Vec<f64>, usize);

fn restart_case(seed: u64) -> Option<RestartCase> {
    let pair = small_pair(4000 + seed);
    let n = pair.a.ncols();
    if n < 9 {
        return None;
    }
    let (k, l) = (8, 4);
    let (mut st, u1) = jbd_state(&pair, seed, k);
    let ritz = small_gsvd_dense(st.b(), st.bbar()).expect("small gsvd");
    let which = if seed.is_multiple_of(2) { Which::Largest } else { Which::Smallest };
    let mut shifts = select_exact_shifts(&ritz, which, k - l).unwrap().lambdas;
    if seed.is_multiple_of(3) {
        shifts[0] = 0.0;
    }
    multi_step_implicit_restart(&mut st, &shifts, l).expect("restart");
    Some((pair, st, u1, shifts, l))
}

/// Filtered-start collinearity after a multi-step implicit restart.
pub fn check_restart_b() -> Check {
    let mut collinear = 0f64;
    let mut cases = 0;
    for seed in 0..60u64 {
        let Some((pair, st, u1, shifts, _)) = restart_case(seed) else {
            continue;
        };
        let (qa, _) = pair.q();
        let qq = &qa * qa.transpose();
        let m = qq.nrows();
        let mut w = u1.clone();
        for &lam in &shifts {
            w = (&qq - DMatrix::<f64>::identity(m, m) * (lam * lam)) * w;
        }
        let w = w.normalize();
        collinear = collinear.max(sign_distance(&st.u().column(0).into_owned(), &w));
        cases += 1;
        if cases == 10 {
            break;
        }
    }
    Check::new(
        cases > 0 && collinear < 1e-8,
        format!("{cases} restarts: filtered-start distance {collinear:.2e}"),
    )
}

/// Restarted state against a fresh l-step process from u₁⁺.
///
/// An instance only counts when the fresh sparse process and the dense
/// Lanczos recurrence from the same u₁⁺ agree to 1e-8; otherwise the reference
/// subspaces are themselves not determined to the tolerance.
pub fn check_restart_equivalence() -> Check {
    let mut worst = 0f64;
    let mut cases = 0;
    let mut excluded = 0;
    for seed in 0..60u64 {
        let Some((pair, st, _, _, l)) = restart_case(seed) else {
            continue;
        };
        let n = pair.a.ncols();
        let u1p = st.u().column(0).into_owned();
        let op = pair.op();
        let ls = LsqrConfig::default_for(n);
        let mut fresh = jbd_init(&op, &u1p, &ls, l).expect("init");
        jbd_expand(&mut fresh, &op, l, &ls).expect("expand");
        let (qa, ql) = pair.q();
        let dense = dense_joint_lanczos(&qa, &ql, &u1p, l).expect("dense lanczos");
        let reference = subspace_sine(&fresh.u(), &dense.u.columns(0, l + 1).into_owned())
            .max(abs_distance(fresh.b(), &dense.b));
        if reference > 1e-8 {
            excluded += 1;
            continue;
        }
        worst = worst
            .max(abs_distance(st.b(), fresh.b()))
            .max(abs_distance(st.bbar(), fresh.bbar()))
            .max(subspace_sine(&st.u(), &fresh.u()))
            .max(subspace_sine(&st.vprime(), &fresh.vprime()));
        cases += 1;
    }
    Check::new(
        cases >= 5 && worst < 1e-6,
        format!("{cases} restarts ({excluded} ill-determined excluded): distance {worst:.2e}"),
    )
}

pub fn check_restart_c() -> Check {
    check_invariants(10)
}

/// The coupled upper sweep against an independent shifted QR of B̄ᵀB̄.
pub fn check_restart_d() -> Check {
    let mut worst_p = 0f64;
    let mut worst_r = 0f64;
    for seed in 0..10u64 {
        let pair = small_pair(5000 + seed);
        let n = pair.a.ncols();
        let k = (n - 1).min(8);
        let (st, _) = jbd_state(&pair, seed, k);
        let lb = st.lower_bidiagonal().expect("bidiagonal");
        let sv: Vec<f64> = {
            let mut v: Vec<f64> = st.b().clone().singular_values().iter().cloned().collect();
            v.sort_by(f64::total_cmp);
            v
        };
        let lambda = 0.5 * (sv[0] + sv[1]);
        let step = implicit_qr_step_lower(&lb, lambda).expect("step");
        let (bbar2, _) = coupled_sweep_upper(st.bbar(), &step.right).expect("coupled");
        let btb = st.bbar().transpose() * st.bbar();
        let (qp, _) = explicit_shifted_qr(&btb, 1.0 - lambda * lambda);
        worst_p = worst_p.max(column_sign_distance(&step.p, &qp));
        let r = (st.bbar() * &step.p).qr().r();
        worst_r = worst_r.max(abs_distance(&bbar2, &r));
    }
    Check::new(
        worst_p < 1e-10 && worst_r < 1e-10,
        format!("10 sweeps: right factor {worst_p:.2e}, upper factor {worst_r:.2e}"),
    )
}

pub fn check_bounds(npairs: u64) -> Check {
    let mut worst_ratio = f64::NEG_INFINITY;
    let mut ratio = 0f64;
    let mut agree = 0f64;
    let mut trjbd = 0f64;
    let mut blocks12 = 0f64;
    let mut comps = 0usize;
    for seed in 0..npairs {
        let pair = small_pair(6000 + seed);
        let n = pair.a.ncols();
        for target in [2i64, -2] {
            let mut cfg = SolverConfig::new(target, n.min(10));
            cfg.seed = seed;
            let out = irjbd_solve(&pair.a, &pair.l, &cfg).expect("solve");
            let diag = out.history.last().map(|h| h.diag_product).unwrap_or(0.0);
            if diag >= 1e4 {
                continue;
            }
            for c in &out.components {
                worst_ratio = worst_ratio.max(c.relative_residual - (c.bound * 1.01 + 1e-12));
                if c.bound > 0.0 {
                    ratio = ratio.max(c.relative_residual / c.bound);
                }
                let [r1, r2, r3] = residual_blocks(c, &pair.a, &pair.l).unwrap();
                blocks12 = blocks12.max(r1).max(r2);
                trjbd = trjbd.max((trjbd_residual(c, &pair.a, &pair.l).unwrap() - r3).abs());
                comps += 1;
            }
        }
        let (st, _) = jbd_state(&pair, seed, (n - 1).min(8));
        let ritz = small_gsvd_dense(st.b(), st.bbar()).unwrap();
        for i in 0..ritz.k() {
            let pq = residual_bound_pq(&ritz, i, st.alpha_next(), st.betabar_next(), 1.0);
            let w = residual_bound_w(&ritz, i, st.alpha_next(), st.beta_last(), 1.0);
            agree = agree.max((pq - w).abs());
        }
    }
    Check::new(
        comps > 0 && worst_ratio <= 0.0 && agree < 1e-12 && trjbd < 1e-12,
        format!(
            "{comps} components: max residual/bound {ratio:.3}, bound forms differ by {agree:.2e}, \
             TRJBD identity defect {trjbd:.2e}, first two blocks {blocks12:.2e}"
        ),
    )
}

/// A square pair whose A has a one-dimensional null space.
pub fn null_space_pair(seed: u64, n: usize) -> (Pair, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::<f64>::from_fn(n, n, |_, _| rng.sample(rand_distr::StandardNormal));
    let h = DMatrix::<f64>::from_fn(n, n, |_, _| rng.sample(rand_distr::StandardNormal));
    let uu = g.qr().q();
    let vv = h.qr().q();
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n - 1 {
        d[(i, i)] = 1.0 + i as f64 / n as f64;
    }
    let ad = &uu * d * vv.transpose();
    let (_, ld) = random_dense_pair(seed + 1, n, n, n, 2.0, 10.0);
    let p0 = uu.column(n - 1).into_owned();
    (Pair::from_dense(ad, ld), p0)
}

/// Sines of the angle between p₀ and span(U_{k+1}) for k = 1..10: from the
/// sparse process, from dense Lanczos, and from the closed form
/// √(1 − γ²/τ_k²) with γ = u₁ᵀp₀ and τ_k the distance from u₁ to Q_AQ_Aᵀspan(U_k).
pub struct ZeroValueRun {
    pub measured: Vec<f64>,
    pub oracle: Vec<f64>,
    pub closed_form: Vec<f64>,
    pub first: f64,
    pub smallest_nonzero: f64,
    pub status: Status,
    pub value: f64,
    pub converged: bool,
    pub reliable: bool,
}

impl ZeroValueRun {
    pub fn spread(&self) -> f64 {
        self.measured
            .iter()
            .map(|s| (s - self.first).abs())
            .fold(0.0, f64::max)
    }

    pub fn oracle_gap(&self) -> f64 {
        self.measured
            .iter()
            .zip(&self.oracle)
            .chain(self.measured.iter().zip(&self.closed_form))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// A zero approximation reported as converged and reliable.
    pub fn spurious(&self) -> bool {
        self.converged && self.reliable && self.value < 0.5 * self.smallest_nonzero
    }

    /// A converged result must be the smallest nonzero value.
    pub fn genuine(&self) -> bool {
        !self.converged || !self.reliable || rel_diff(self.value, self.smallest_nonzero) < 1e-6
    }
}

fn sine_to(basis: &DMatrix<f64>, p0: &DVector<f64>) -> f64 {
    (1.0 - basis.tr_mul(p0).norm_squared()).max(0.0).sqrt()
}

pub fn zero_value_run() -> ZeroValueRun {
    let n = 14;
    let (pair, p0) = null_space_pair(7, n);
    let op = pair.op();
    let ls = LsqrConfig::default_for(n);
    // u₁ = γp₀ + √(1−γ²)q with q ⊥ p₀ and γ = 1/2.
    let mut q = starting_vector(n, 7);
    q.axpy(-q.dot(&p0), &p0, 1.0);
    let u1 = &p0 * 0.5 + q.normalize() * 0.75f64.sqrt();
    let gamma = u1.dot(&p0);
    let (qa, ql) = pair.q();
    let qq = &qa * qa.transpose();
    let dense = dense_joint_lanczos(&qa, &ql, &u1, 10).expect("dense lanczos");
    let mut st = jbd_init(&op, &u1, &ls, 10).expect("init");
    let (mut measured, mut oracle, mut closed_form) = (Vec::new(), Vec::new(), Vec::new());
    for k in 1..=10 {
        jbd_expand(&mut st, &op, k, &ls).expect("expand");
        measured.push(sine_to(&st.u(), &p0));
        oracle.push(sine_to(&dense.u.columns(0, k + 1).into_owned(), &p0));
        let kq = (&qq * dense.u.columns(0, k)).qr().q();
        let tau = (&u1 - &kq * kq.tr_mul(&u1)).norm();
        closed_form.push((1.0 - (gamma / tau).powi(2)).max(0.0).sqrt());
    }

    let g = pair.gsvd();
    let mut cfg = SolverConfig::new(-1, 8);
    cfg.seed = 7;
    cfg.maxit = 60;
    let out = irjbd_solve(&pair.a, &pair.l, &cfg).expect("solve");
    let comp = &out.components[0];
    ZeroValueRun {
        first: (1.0 - gamma * gamma).sqrt(),
        measured,
        oracle,
        closed_form,
        smallest_nonzero: g.c[g.q - 1] / g.s[g.q - 1],
        status: out.status,
        value: comp.value(),
        converged: comp.converged,
        reliable: comp.reliable,
    }
}

pub fn check_zero_value() -> Check {
    let r = zero_value_run();
    Check::new(
        r.spread() < 1e-10 && !r.spurious() && r.genuine(),
        format!(
            "sin∠(p0, span U) varies by {:.2e} over k = 1..10 (from {:.6} to {:.6}); \
             agrees with dense Lanczos and with sqrt(1 - γ²/τ²) to {:.2e}; \
             smallest run {}: value {:.4e}, converged {}, reliable {}, smallest nonzero {:.4e}",
            r.spread(),
            r.first,
            r.measured.last().copied().unwrap_or(f64::NAN),
            r.oracle_gap(),
            r.status.as_str(),
            r.value,
            r.converged,
            r.reliable,
            r.smallest_nonzero
        ),
    )
}

pub fn check_reliability() -> Check {
    let (pair, _) = null_space_pair(7, 30);
    let mut cfg = SolverConfig::new(-2, 15);
    cfg.seed = 7;
    cfg.maxit = 100;
    let out = irjbd_solve(&pair.a, &pair.l, &cfg).expect("solve");
    let last = out.history.last().expect("history");
    let warned = last.reliability_warning && last.diag_product * f64::EPSILON > cfg.tol;
    let flagged = out.components.iter().all(|c| !c.converged || !c.reliable);
    let status_ok = out.status != Status::Converged;
    let (bound, res) = out
        .components
        .iter()
        .fold((0f64, 0f64), |(b, r), c| (b.max(c.bound), r.max(c.relative_residual)));
    Check::new(
        warned && flagged && status_ok,
        format!(
            "status {}, diag product {:.2e} (tol/eps = {:.2e}), warning {}, max bound {bound:.2e}, \
             max actual residual {res:.2e} (not compared)",
            out.status.as_str(),
            last.diag_product,
            cfg.tol / f64::EPSILON,
            last.reliability_warning
        ),
    )
}

pub fn check_modes(npairs: u64) -> Check {
    let start = Instant::now();
    let mut ri = Vec::new();
    let mut rt = Vec::new();
    let mut worst = 0f64;
    let mut failures = Vec::new();
    for seed in 0..npairs {
        let (a, l) = sparse_pair(9000 + seed, 180, 200, 4);
        let mut vals = Vec::new();
        for mode in [RestartMode::Implicit, RestartMode::Thick] {
            let mut cfg = SolverConfig::new(5, 25);
            cfg.seed = seed;
            cfg.restart_mode = mode;
            match irjbd_solve(&a, &l, &cfg) {
                Ok(out) => {
                    if out.status != Status::Converged {
                        failures.push(format!("seed {seed} {mode:?}: {}", out.status.as_str()));
                    }
                    match mode {
                        RestartMode::Implicit => ri.push(out.restarts as f64),
                        RestartMode::Thick => rt.push(out.restarts as f64),
                    }
                    vals.push(out.components.iter().map(|c| c.value()).collect::<Vec<_>>());
                }
                Err(e) => failures.push(format!("seed {seed} {mode:?}: {e}")),
            }
        }
        if vals.len() == 2 {
            for (x, y) in vals[0].iter().zip(&vals[1]) {
                worst = worst.max(rel_diff(*x, *y));
            }
        }
    }
    let (mi, mt) = (median(ri), median(rt));
    Check::new(
        failures.is_empty() && worst < 1e-6,
        format!(
            "{npairs} pairs: median restarts implicit {mi} vs thick {mt} ({}), value agreement {worst:.2e}, {:.1}s{}",
            if mi <= mt { "implicit not slower" } else { "implicit slower" },
            start.elapsed().as_secs_f64(),
            if failures.is_empty() {
                String::new()
            } else {
                format!(", failures: {}", failures.join("; "))
            }
        ),
    )
}

/// Location of flower_5_4.mtx: $IRJBD_DATA_DIR or the workspace data/ directory.
pub fn suitesparse_path() -> Option<PathBuf> {
    let dirs = [
        std::env::var_os("IRJBD_DATA_DIR").map(PathBuf::from),
        Some(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")),
    ];
    dirs.into_iter()
        .flatten()
        .map(|d| d.join("flower_5_4.mtx"))
        .find(|p| p.exists())
}

pub fn check_suitesparse() -> Check {
    let Some(path) = suitesparse_path() else {
        return Check {
            pass: true,
            skipped: true,
            detail: "flower_5_4.mtx not found (set IRJBD_DATA_DIR)".into(),
        };
    };
    let mut a = match read_matrix_market(&path) {
        Ok(a) => a,
        Err(e) => return Check::new(false, format!("{}: {e}", path.display())),
    };
    if a.nrows() > a.ncols() {
        let t: Vec<_> = a.triplets().map(|(i, j, v)| (j, i, v)).collect();
        a = SparseMatrix::from_triplets(a.ncols(), a.nrows(), &t).expect("transpose");
    }
    let l = second_order_l(a.ncols()).expect("n >= 2");
    let mut cfg = SolverConfig::new(5, 25);
    cfg.seed = 1;
    let out = match irjbd_solve(&a, &l, &cfg) {
        Ok(o) => o,
        Err(e) => return Check::new(false, format!("solve failed: {e}")),
    };
    let resb = out.history.last().map(|h| h.max_bound()).unwrap_or(f64::NAN);
    let iter = out.restarts as f64;
    Check::new(
        out.status == Status::Converged && resb < 1e-8 && (8.5..=25.5).contains(&iter),
        format!("status {}, restarts {}, Res_b {resb:.2e}", out.status.as_str(), out.restarts),
    )
}
