//! Primal–dual interior-point method for the relaxation.
//!
//! The primal is put in standard form over one Hermitian PSD block of order
//! `n` and `ell` nonnegative scalar blocks (one slack per inequality):
//!
//! ```text
//! minimize C • X   s.t.  A_k • X        = b_k   (k in E)
//!                        A_k • X + s_k  = b_k   (k in I),   X ⪰ 0, s ≥ 0
//! ```
//!
//! whose dual is `maximize -bᵀy` with `Z = C + Σ y_k A_k ⪰ 0` and
//! `z = y_I ≥ 0`. The iteration is infeasible-start path following with
//! Nesterov–Todd scaling and a Mehrotra predictor–corrector, using dense
//! Schur-complement factorisation.

use std::io::Write;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::SolverError;
use crate::hermitian::{c, independent_columns, CMatrix, HermitianMatrix, C64};
use crate::relaxation::SdpProblem;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StartPoint {
    /// `X = Z = τI`, `s = z = τ`, `y = 0` with `τ = 1 + max|b_k|`.
    Standard,
    /// The standard point multiplied by a random positive definite factor.
    Perturbed { seed: u64, magnitude: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub gap_tol: f64,
    pub feas_tol: f64,
    pub max_iters: usize,
    pub step_fraction: f64,
    pub start: StartPoint,
    /// Record one [`IterationRecord`] per iteration.
    pub log_iterations: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            gap_tol: 1e-8,
            feas_tol: 1e-8,
            max_iters: 200,
            step_fraction: 0.99,
            start: StartPoint::Standard,
            log_iterations: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.gap_tol > 0.0 && self.feas_tol > 0.0) {
            return Err(SolverError::Config("tolerances must be positive".into()));
        }
        if !(self.step_fraction > 0.0 && self.step_fraction < 1.0) {
            return Err(SolverError::Config("step_fraction must lie in (0, 1)".into()));
        }
        if self.max_iters == 0 {
            return Err(SolverError::Config("max_iters must be positive".into()));
        }
        if let StartPoint::Perturbed { magnitude, .. } = self.start {
            if !(0.0..1.0).contains(&magnitude) {
                return Err(SolverError::Config("perturbation magnitude must lie in [0, 1)".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    MaxIters,
    PrimalInfeasibleSuspected,
    DualInfeasibleSuspected,
    NumericalFailure,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Optimal => "optimal",
            Self::MaxIters => "max_iters",
            Self::PrimalInfeasibleSuspected => "primal_infeasible_suspected",
            Self::DualInfeasibleSuspected => "dual_infeasible_suspected",
            Self::NumericalFailure => "numerical_failure",
        }
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// `max_k |b_k - A_k • X - s_k| / (1 + |b_k|)`.
    pub primal_feas: f64,
    /// `‖C + Σ y_k A_k - Z‖_F / (1 + ‖C‖_F)`.
    pub dual_feas: f64,
    /// `|p - d| / (max(1, ‖C‖_F) + |p| + |d|)`.
    pub rel_gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub mu: f64,
    pub primal_res: f64,
    pub dual_res: f64,
    pub gap: f64,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub x: HermitianMatrix,
    /// One multiplier per constraint row (equalities first).
    pub y: Vec<f64>,
    /// `Z(y) = C + Σ y_k A_k`.
    pub z: HermitianMatrix,
    /// `s_k = b_k - A_k • X` for the inequality rows.
    pub slacks: Vec<f64>,
    pub status: SolveStatus,
    pub primal_obj: f64,
    pub dual_obj: f64,
    pub residuals: Residuals,
    pub iterations: usize,
    pub log: Vec<IterationRecord>,
    pub diagnostics: Option<String>,
}

impl SdpSolution {
    /// `X • Z`, the matrix part of the duality gap.
    pub fn complementarity(&self) -> f64 {
        self.x.inner(&self.z).unwrap_or(f64::NAN)
    }
}

/// Writes the iteration log as CSV (`iter,mu,primal_res,dual_res,gap`).
pub fn write_iteration_log<W: Write>(log: &[IterationRecord], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for rec in log {
        w.serialize(rec)?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Constraint storage

/// Nonzero entries of a Hermitian matrix, both triangles.
struct SparseHerm {
    entries: Vec<(usize, usize, C64)>,
    dense: Option<CMatrix>,
}

impl SparseHerm {
    fn new(m: &HermitianMatrix, scale: f64) -> Self {
        let n = m.order();
        let mut entries = Vec::new();
        for j in 0..n {
            for i in 0..n {
                let v = m.get(i, j);
                if v.re != 0.0 || v.im != 0.0 {
                    entries.push((i, j, v * scale));
                }
            }
        }
        let dense = (entries.len() * 4 >= n * n).then(|| m.as_matrix() * c(scale, 0.0));
        Self { entries, dense }
    }

    /// `A • X`.
    fn dot(&self, x: &CMatrix) -> f64 {
        self.entries
            .iter()
            .map(|&(p, q, v)| {
                let w = x[(p, q)];
                v.re * w.re + v.im * w.im
            })
            .sum()
    }

    fn add_to(&self, alpha: f64, target: &mut CMatrix) {
        for &(p, q, v) in &self.entries {
            target[(p, q)] += v * alpha;
        }
    }

    /// `W A W` for Hermitian `W`.
    fn sandwich(&self, w: &CMatrix) -> CMatrix {
        if let Some(d) = &self.dense {
            return w * d * w;
        }
        let n = w.nrows();
        let mut out = CMatrix::zeros(n, n);
        for &(p, q, v) in &self.entries {
            for b in 0..n {
                let t = v * w[(q, b)];
                if t.re == 0.0 && t.im == 0.0 {
                    continue;
                }
                let mut col = out.column_mut(b);
                let wp = w.column(p);
                for a in 0..n {
                    col[a] += wp[a] * t;
                }
            }
        }
        out
    }
}

fn hdot(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

fn hermitize(m: &mut CMatrix) {
    let n = m.nrows();
    for j in 0..n {
        m[(j, j)] = c(m[(j, j)].re, 0.0);
        for i in (j + 1)..n {
            let avg = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
    }
}

fn fro(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest `α` (capped at `f64::INFINITY`) with `L L* + α Δ ⪰ 0`.
/// Largest `a` with `D + a Δ ⪰ 0` for the diagonal scaled point `D`.
fn max_step_psd(d: &[f64], delta: &CMatrix) -> Result<f64, SolverError> {
    let r: Vec<f64> = d.iter().map(|v| 1.0 / v.sqrt()).collect();
    let t = CMatrix::from_fn(d.len(), d.len(), |i, j| delta[(i, j)] * (r[i] * r[j]));
    let lmin = HermitianMatrix::symmetrized(t).eig()?.values.last().copied().unwrap_or(0.0);
    Ok(if lmin < 0.0 { -1.0 / lmin } else { f64::INFINITY })
}

fn max_step_lp(v: &[f64], dv: &[f64]) -> f64 {
    v.iter()
        .zip(dv)
        .filter(|(_, &d)| d < 0.0)
        .map(|(&x, &d)| -x / d)
        .fold(f64::INFINITY, f64::min)
}

fn chol_lower(m: &CMatrix) -> Option<(CMatrix, CMatrix)> {
    let n = m.nrows();
    let ch = Cholesky::new(m.clone())?;
    let l = ch.l();
    let linv = l.solve_lower_triangular(&CMatrix::identity(n, n))?;
    Some((l, linv))
}

// ---------------------------------------------------------------------------

const REFINE_ROUNDS: usize = 5;
/// Iterations without improvement of the termination merit before giving up.
const STALL_ITERS: usize = 15;

struct Scaled {
    n: usize,
    ell: usize,
    /// Dropped dependent equality rows have no entry here.
    rows: Vec<usize>,
    a: Vec<SparseHerm>,
    b: Vec<f64>,
    row_scale: Vec<f64>,
    is_ineq: Vec<bool>,
    /// Position of each retained inequality row in the slack vector.
    slack_of: Vec<Option<usize>>,
    c: CMatrix,
    c_scale: f64,
}

impl Scaled {
    fn p(&self) -> usize {
        self.rows.len()
    }

    fn apply(&self, x: &CMatrix) -> Vec<f64> {
        self.a.iter().map(|a| a.dot(x)).collect()
    }

    fn adjoint(&self, y: &[f64]) -> CMatrix {
        let mut out = CMatrix::zeros(self.n, self.n);
        for (a, &yk) in self.a.iter().zip(y) {
            if yk != 0.0 {
                a.add_to(yk, &mut out);
            }
        }
        out
    }
}

/// Outcome of the equality pre-check: indices of retained equality rows, or
/// the index of a row contradicting the others.
fn reduce_equalities(problem: &SdpProblem) -> Result<Vec<usize>, usize> {
    let m = problem.m();
    if m == 0 {
        return Ok(Vec::new());
    }
    let cols: Vec<Vec<f64>> = problem.equalities().iter().map(|c| c.matrix.vec()).collect();
    let indep = independent_columns(&cols, 1e-10);
    if indep.basis.len() == m {
        return Ok(indep.basis);
    }
    let len = problem.n * problem.n;
    let basis = DMatrix::from_fn(len, indep.basis.len(), |r, j| cols[indep.basis[j]][r]);
    let rhs = DVector::from_iterator(indep.basis.len(), indep.basis.iter().map(|&k| problem.constraints[k].rhs));
    let svd = basis.svd(true, true);
    for k in 0..m {
        if indep.basis.contains(&k) {
            continue;
        }
        let target = DVector::from_column_slice(&cols[k]);
        let predicted = if indep.basis.is_empty() {
            0.0
        } else {
            svd.solve(&target, 1e-12).map(|coef| coef.dot(&rhs)).unwrap_or(f64::NAN)
        };
        let b = problem.constraints[k].rhs;
        let scale = 1.0 + b.abs() + rhs.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if !((predicted - b).abs() <= 1e-9 * scale) {
            return Err(k);
        }
    }
    Ok(indep.basis)
}

fn scale_problem(problem: &SdpProblem, eq_rows: &[usize]) -> Scaled {
    let n = problem.n;
    let m = problem.m();
    let mut rows: Vec<usize> = eq_rows.to_vec();
    rows.extend(m..problem.constraints.len());
    let mut a = Vec::with_capacity(rows.len());
    let mut b = Vec::with_capacity(rows.len());
    let mut row_scale = Vec::with_capacity(rows.len());
    let mut is_ineq = Vec::with_capacity(rows.len());
    let mut slack_of = Vec::with_capacity(rows.len());
    let mut next_slack = 0;
    for &k in &rows {
        let con = &problem.constraints[k];
        let norm = con.matrix.frobenius_norm();
        let nu = if norm > 0.0 { norm } else { 1.0 };
        a.push(SparseHerm::new(&con.matrix, 1.0 / nu));
        b.push(con.rhs / nu);
        row_scale.push(nu);
        let ineq = k >= m;
        is_ineq.push(ineq);
        slack_of.push(ineq.then(|| {
            next_slack += 1;
            next_slack - 1
        }));
    }
    let cnorm = problem.objective.frobenius_norm();
    let c_scale = cnorm.max(1.0);
    Scaled {
        n,
        ell: problem.ell(),
        rows,
        a,
        b,
        row_scale,
        is_ineq,
        slack_of,
        c: problem.objective.as_matrix() / c(c_scale, 0.0),
        c_scale,
    }
}

#[derive(Clone)]
struct Iterate {
    x: CMatrix,
    s: Vec<f64>,
    y: Vec<f64>,
    z: CMatrix,
    zs: Vec<f64>,
}

fn random_pd_factor(n: usize, magnitude: f64, rng: &mut ChaCha8Rng) -> CMatrix {
    let mut r = CMatrix::from_fn(n, n, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    hermitize(&mut r);
    let norm = fro(&r).max(1e-300);
    CMatrix::identity(n, n) + r * c(0.5 * magnitude / norm, 0.0)
}

fn starting_point(sc: &Scaled, start: StartPoint) -> Iterate {
    let n = sc.n;
    let tau = 1.0 + sc.b.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let mut it = Iterate {
        x: CMatrix::identity(n, n) * c(tau, 0.0),
        s: vec![tau; sc.ell],
        y: vec![0.0; sc.p()],
        z: CMatrix::identity(n, n) * c(tau, 0.0),
        zs: vec![tau; sc.ell],
    };
    if let StartPoint::Perturbed { seed, magnitude } = start {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        it.x = random_pd_factor(n, magnitude, &mut rng) * c(tau, 0.0);
        it.z = random_pd_factor(n, magnitude, &mut rng) * c(tau, 0.0);
        for v in it.s.iter_mut().chain(it.zs.iter_mut()) {
            *v *= 1.0 + magnitude * rng.gen_range(-0.5..0.5);
        }
    }
    it
}

struct Direction {
    dx: CMatrix,
    /// `dx` and `dz` in the scaled frame where X and Z are both `D`.
    dxt: CMatrix,
    dzt: CMatrix,
    ds: Vec<f64>,
    dy: Vec<f64>,
    dz: CMatrix,
    dzs: Vec<f64>,
}

/// Solves the relaxation to the tolerances in `config`.
pub fn solve(problem: &SdpProblem, config: &SolverConfig) -> Result<SdpSolution, SolverError> {
    config.validate()?;
    let n = problem.n;
    if n == 0 {
        return Err(SolverError::EmptyProblem);
    }
    if let Some((k, con)) = problem.constraints.iter().enumerate().find(|(_, c)| c.matrix.order() != n) {
        return Err(SolverError::ConstraintOrder {
            index: k,
            found: con.matrix.order(),
            expected: n,
        });
    }
    if problem.objective.order() != n {
        return Err(SolverError::ConstraintOrder {
            index: usize::MAX,
            found: problem.objective.order(),
            expected: n,
        });
    }

    let eq_rows = match reduce_equalities(problem) {
        Ok(rows) => rows,
        Err(k) => {
            return Ok(blank_solution(
                problem,
                SolveStatus::PrimalInfeasibleSuspected,
                format!(
                    "equality row {k} ({}) contradicts a combination of the other equalities",
                    problem.constraints[k].label
                ),
            ))
        }
    };
    let sc = scale_problem(problem, &eq_rows);
    let mut it = starting_point(&sc, config.start);
    let mut log = Vec::new();
    let mut stalls = 0usize;
    let mut best: Option<(f64, usize, Iterate)> = None;
    let mut status = SolveStatus::MaxIters;
    let mut diagnostics = None;
    let mut iterations = 0;

    let b_norm_orig: Vec<f64> = sc.b.iter().zip(&sc.row_scale).map(|(b, nu)| b * nu).collect();
    let c_norm_orig = problem.objective.frobenius_norm();
    let denom = (n + sc.ell) as f64;

    let true_primal = |ax: &[f64]| {
        (0..sc.p())
            .map(|k| {
                let r = sc.b[k] - ax[k];
                let v = if sc.slack_of[k].is_some() { (-r).max(0.0) } else { r.abs() };
                v * sc.row_scale[k] / (1.0 + b_norm_orig[k].abs())
            })
            .fold(0.0, f64::max)
    };

    for iter in 0..=config.max_iters {
        iterations = iter;
        // residuals
        let ax = sc.apply(&it.x);
        let rp: Vec<f64> = (0..sc.p())
            .map(|k| sc.b[k] - ax[k] - sc.slack_of[k].map_or(0.0, |j| it.s[j]))
            .collect();
        let mut rd = &sc.c + sc.adjoint(&it.y) - &it.z;
        hermitize(&mut rd);
        let rd_lp: Vec<f64> = (0..sc.p())
            .filter_map(|k| sc.slack_of[k].map(|j| it.y[k] - it.zs[j]))
            .collect();

        let pobj = hdot(&sc.c, &it.x) * sc.c_scale;
        let dobj = -sc.b.iter().zip(&it.y).map(|(b, y)| b * y).sum::<f64>() * sc.c_scale;
        let xz = hdot(&it.x, &it.z);
        let sz: f64 = it.s.iter().zip(&it.zs).map(|(a, b)| a * b).sum();
        let mu = (xz + sz) / denom;
        let compl = (xz + sz) * sc.c_scale;

        // Measured on X alone (equality residual, inequality violation): the
        // slack iterate may drift from b - A•X without affecting the gap.
        let primal_feas = true_primal(&ax);
        let lp_res: f64 = rd_lp
            .iter()
            .enumerate()
            .map(|(j, r)| {
                let k = sc.m_index_of_slack(j);
                (r * sc.c_scale / sc.row_scale[k]).powi(2)
            })
            .sum();
        let dual_feas = ((fro(&rd) * sc.c_scale).powi(2) + lp_res).sqrt() / (1.0 + c_norm_orig);
        let gap_denom = sc.c_scale + pobj.abs() + dobj.abs();
        let rel_gap = (pobj - dobj).abs() / gap_denom;
        // Complementarity is held to the objective's own size so that a large
        // ‖C‖ cannot hide mass left in the null space of Z.
        let compl_rel = compl / (n as f64 * (1.0 + pobj.abs() + dobj.abs()));

        if config.log_iterations {
            log.push(IterationRecord {
                iter,
                mu,
                primal_res: primal_feas,
                dual_res: dual_feas,
                gap: rel_gap,
            });
        }

        if primal_feas <= config.feas_tol
            && dual_feas <= config.feas_tol
            && rel_gap <= config.gap_tol
            && compl_rel <= config.gap_tol
        {
            status = SolveStatus::Optimal;
            break;
        }
        let merit = (primal_feas / config.feas_tol)
            .max(dual_feas / config.feas_tol)
            .max(rel_gap / config.gap_tol)
            .max(compl_rel / config.gap_tol);
        match &best {
            Some((b, at, _)) if merit >= *b => {
                if iter - at >= STALL_ITERS {
                    status = SolveStatus::NumericalFailure;
                    diagnostics = Some(format!(
                        "no progress for {STALL_ITERS} iterations: primal {primal_feas:.2e}, dual {dual_feas:.2e}, gap {rel_gap:.2e}"
                    ));
                    break;
                }
            }
            _ => best = Some((merit, iter, it.clone())),
        }

        // divergence heuristics
        let ynorm = it.y.iter().map(|v| v * v).sum::<f64>().sqrt();
        let xtrace: f64 = (0..n).map(|i| it.x[(i, i)].re).sum::<f64>() + it.s.iter().sum::<f64>();
        let by: f64 = -sc.b.iter().zip(&it.y).map(|(b, y)| b * y).sum::<f64>();
        if ynorm > 1e8 && by / ynorm > 1e-8 {
            status = SolveStatus::PrimalInfeasibleSuspected;
            diagnostics = Some(format!("dual iterate norm {ynorm:.3e} with growing dual objective"));
            break;
        }
        let cx = hdot(&sc.c, &it.x);
        if xtrace > 1e8 && -cx / xtrace > 1e-8 {
            status = SolveStatus::DualInfeasibleSuspected;
            diagnostics = Some(format!("primal iterate trace {xtrace:.3e} with decreasing objective"));
            break;
        }
        if iter == config.max_iters {
            diagnostics = Some(format!(
                "iteration cap reached: primal {primal_feas:.2e}, dual {dual_feas:.2e}, gap {rel_gap:.2e}"
            ));
            break;
        }

        // NT scaling point
        let Some((lx, _)) = chol_lower(&it.x) else {
            status = SolveStatus::NumericalFailure;
            diagnostics = Some(format!("iteration {iter}: X lost positive definiteness"));
            break;
        };
        let Some((lz, _)) = chol_lower(&it.z) else {
            status = SolveStatus::NumericalFailure;
            diagnostics = Some(format!("iteration {iter}: Z lost positive definiteness"));
            break;
        };
        // singular values of Lz* Lx are the scaled point's eigenvalues
        let svd = (lz.adjoint() * &lx).svd(false, true);
        let Some(v_t) = svd.v_t else {
            status = SolveStatus::NumericalFailure;
            diagnostics = Some(format!("iteration {iter}: scaling SVD failed"));
            break;
        };
        let d: Vec<f64> = svd.singular_values.iter().copied().collect();
        if d.iter().any(|&v| !(v > 0.0)) {
            status = SolveStatus::NumericalFailure;
            diagnostics = Some(format!("iteration {iter}: scaling matrix is singular"));
            break;
        }
        // X = G D G* and Z = G^-* D G^-1
        let mut g = &lx * v_t.adjoint();
        for (j, &dj) in d.iter().enumerate() {
            g.column_mut(j).scale_mut(1.0 / dj.sqrt());
        }
        let dmat = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(n, d.iter().map(|&v| c(v, 0.0))));
        let mut w = &g * g.adjoint();
        hermitize(&mut w);

        // Schur complement
        let p = sc.p();
        let waw: Vec<CMatrix> = sc.a.iter().map(|a| a.sandwich(&w)).collect();
        let mut schur = DMatrix::<f64>::zeros(p, p);
        for j in 0..p {
            for i in j..p {
                let v = sc.a[i].dot(&waw[j]);
                schur[(i, j)] = v;
                schur[(j, i)] = v;
            }
        }
        let wlp: Vec<f64> = it.s.iter().zip(&it.zs).map(|(s, z)| s / z).collect();
        for k in 0..p {
            if let Some(j) = sc.slack_of[k] {
                schur[(k, k)] += wlp[j];
            }
        }
        let Some(factor) = factor_schur(&schur) else {
            status = SolveStatus::NumericalFailure;
            diagnostics = Some(format!(
                "iteration {iter}: Schur complement singular beyond regularisation (condition estimate {:.2e})",
                condition_estimate(&schur)
            ));
            break;
        };

        // Directions are formed in the scaled frame and mapped back once, so
        // that roundoff stays proportional to D rather than to ‖W‖².
        let mut rdt = g.adjoint() * &rd * &g;
        hermitize(&mut rdt);
        let to_x = |m: &CMatrix| {
            let mut out = &g * m * g.adjoint();
            hermitize(&mut out);
            out
        };
        let solve_dir = |rct: &CMatrix, rc_lp: &[f64]| -> Direction {
            let tt = rct - &rdt;
            let t = to_x(&tt);
            let at = sc.apply(&t);
            let mut rhs = DVector::<f64>::zeros(p);
            for k in 0..p {
                let mut v = at[k] - rp[k];
                if let Some(j) = sc.slack_of[k] {
                    v += rc_lp[j] - wlp[j] * rd_lp[j];
                }
                rhs[k] = v;
            }
            let assemble = |dy: Vec<f64>| -> Direction {
                let mut dz = rd.clone() + sc.adjoint(&dy);
                hermitize(&mut dz);
                let mut dzt = g.adjoint() * &dz * &g;
                hermitize(&mut dzt);
                let dxt = &tt - &dzt;
                let dx = to_x(&dxt);
                let mut dzs = vec![0.0; sc.ell];
                let mut ds = vec![0.0; sc.ell];
                for k in 0..p {
                    if let Some(j) = sc.slack_of[k] {
                        dzs[j] = rd_lp[j] + dy[k];
                        ds[j] = rc_lp[j] - wlp[j] * dzs[j];
                    }
                }
                Direction { dx, dxt, dzt, ds, dy, dz, dzs }
            };
            let mut dir = assemble(refined_solve(&factor, &schur, &rhs).iter().copied().collect());
            // Refine against the primal equations as they hold for the
            // assembled direction; W is badly conditioned near the boundary.
            let primal_error = |dir: &Direction| {
                let adx = sc.apply(&dir.dx);
                DVector::from_iterator(
                    p,
                    (0..p).map(|k| adx[k] + sc.slack_of[k].map_or(0.0, |j| dir.ds[j]) - rp[k]),
                )
            };
            let mut r = primal_error(&dir);
            for _ in 0..REFINE_ROUNDS {
                if r.amax() <= 1e-15 * (1.0 + rhs.amax()) {
                    break;
                }
                let delta = factor.solve(&r);
                let dy: Vec<f64> = dir.dy.iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
                let cand = assemble(dy);
                let cand_r = primal_error(&cand);
                if cand_r.amax() >= r.amax() {
                    break;
                }
                dir = cand;
                r = cand_r;
            }
            dir
        };

        let step = |dir: &Direction| -> Result<(f64, f64), SolverError> {
            let ap = max_step_psd(&d, &dir.dxt)?.min(max_step_lp(&it.s, &dir.ds));
            let ad = max_step_psd(&d, &dir.dzt)?.min(max_step_lp(&it.zs, &dir.dzs));
            Ok((ap, ad))
        };

        // predictor
        let rc_aff = -&dmat;
        let rc_lp_aff: Vec<f64> = it.s.iter().map(|s| -s).collect();
        let aff = solve_dir(&rc_aff, &rc_lp_aff);
        let (ap_max, ad_max) = step(&aff)?;
        let ap = ap_max.min(1.0);
        let ad = ad_max.min(1.0);
        let x_aff = &dmat + &aff.dxt * c(ap, 0.0);
        let z_aff = &dmat + &aff.dzt * c(ad, 0.0);
        let sz_aff: f64 = (0..sc.ell)
            .map(|j| (it.s[j] + ap * aff.ds[j]) * (it.zs[j] + ad * aff.dzs[j]))
            .sum();
        let mu_aff = (hdot(&x_aff, &z_aff) + sz_aff) / denom;
        let expon = (3.0 * ap.min(ad).powi(2)).max(1.0);
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powf(expon);

        // corrector
        let prod = &aff.dxt * &aff.dzt + &aff.dzt * &aff.dxt;
        let mut e = CMatrix::zeros(n, n);
        for j in 0..n {
            for i in 0..n {
                e[(i, j)] = prod[(i, j)] / (d[i] + d[j]);
            }
        }
        let mut rc = -e;
        for (j, &dj) in d.iter().enumerate() {
            rc[(j, j)] += c(sigma * mu / dj - dj, 0.0);
        }
        hermitize(&mut rc);
        let rc_lp: Vec<f64> = (0..sc.ell)
            .map(|j| (sigma * mu - it.s[j] * it.zs[j] - aff.ds[j] * aff.dzs[j]) / it.zs[j])
            .collect();
        let dir = solve_dir(&rc, &rc_lp);
        let (ap_max, ad_max) = step(&dir)?;
        let frac = config.step_fraction.min(0.9 + 0.09 * ap_max.min(ad_max).min(1.0));
        let mut ap = (frac * ap_max).min(1.0);
        let ad = (frac * ad_max).min(1.0);
        // Near the end the direction's own primal error can undo a feasible
        // iterate; shorten the primal step until it no longer does.
        {
            let adx = sc.apply(&dir.dx);
            let limit = (0.5 * config.feas_tol).max(2.0 * primal_feas);
            for _ in 0..8 {
                let ax_new: Vec<f64> = ax.iter().zip(&adx).map(|(a, d)| a + ap * d).collect();
                if true_primal(&ax_new) <= limit {
                    break;
                }
                ap *= 0.5;
            }
        }
        log::debug!(
            "iter {iter}: mu {mu:.3e} sigma {sigma:.3e} steps ({ap:.3}, {ad:.3}) pfeas {primal_feas:.2e} dfeas {dual_feas:.2e} gap {rel_gap:.2e} compl {compl_rel:.2e}"
        );

        if ap < 1e-10 && ad < 1e-10 {
            stalls += 1;
            if stalls >= 3 {
                status = SolveStatus::NumericalFailure;
                diagnostics = Some(format!("iteration {iter}: step lengths collapsed"));
                break;
            }
        } else {
            stalls = 0;
        }

        it.x += &dir.dx * c(ap, 0.0);
        hermitize(&mut it.x);
        for j in 0..sc.ell {
            it.s[j] += ap * dir.ds[j];
            it.zs[j] += ad * dir.dzs[j];
        }
        for k in 0..p {
            it.y[k] += ad * dir.dy[k];
        }
        it.z += &dir.dz * c(ad, 0.0);
        hermitize(&mut it.z);
    }

    if status != SolveStatus::Optimal {
        // report the least-bad iterate rather than the last one
        if let Some((_, _, b)) = best {
            it = b;
        }
    }
    Ok(finish(problem, &sc, &it, status, iterations, log, diagnostics))
}

impl Scaled {
    /// Row index of slack `j` (inverse of `slack_of`).
    fn m_index_of_slack(&self, j: usize) -> usize {
        self.rows.len() - self.ell + j
    }
}

fn factor_schur(m: &DMatrix<f64>) -> Option<Cholesky<f64, nalgebra::Dyn>> {
    if m.nrows() == 0 {
        return Cholesky::new(m.clone());
    }
    if let Some(ch) = Cholesky::new(m.clone()) {
        return Some(ch);
    }
    let dmax = m.diagonal().iter().fold(0.0_f64, |a, b| a.max(b.abs())).max(1e-300);
    let mut reg = 1e-14 * dmax;
    while reg <= 1e-6 * dmax {
        let mut shifted = m.clone();
        for i in 0..m.nrows() {
            shifted[(i, i)] += reg;
        }
        if let Some(ch) = Cholesky::new(shifted) {
            return Some(ch);
        }
        reg *= 100.0;
    }
    None
}

/// Cholesky solve followed by a few steps of iterative refinement against
/// the unregularised matrix.
fn refined_solve(factor: &Cholesky<f64, nalgebra::Dyn>, m: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    let mut x = factor.solve(rhs);
    let mut res = rhs - m * &x;
    let mut norm = res.norm();
    for _ in 0..3 {
        if norm <= 1e-15 * rhs.norm() {
            break;
        }
        let cand = &x + factor.solve(&res);
        let cand_res = rhs - m * &cand;
        let cand_norm = cand_res.norm();
        if cand_norm >= norm {
            break;
        }
        x = cand;
        res = cand_res;
        norm = cand_norm;
    }
    x
}

fn condition_estimate(m: &DMatrix<f64>) -> f64 {
    let s = m.clone().singular_values();
    let max = s.iter().fold(0.0_f64, |a, &b| a.max(b));
    let min = s.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

fn blank_solution(problem: &SdpProblem, status: SolveStatus, diagnostics: String) -> SdpSolution {
    let n = problem.n;
    SdpSolution {
        x: HermitianMatrix::zeros(n),
        y: vec![0.0; problem.constraints.len()],
        z: problem.objective.clone(),
        slacks: problem.inequalities().iter().map(|c| c.rhs).collect(),
        status,
        primal_obj: f64::NAN,
        dual_obj: f64::NAN,
        residuals: Residuals {
            primal_feas: f64::NAN,
            dual_feas: f64::NAN,
            rel_gap: f64::NAN,
        },
        iterations: 0,
        log: Vec::new(),
        diagnostics: Some(diagnostics),
    }
}

/// Maps the scaled iterate back to the original problem.
fn finish(
    problem: &SdpProblem,
    sc: &Scaled,
    it: &Iterate,
    status: SolveStatus,
    iterations: usize,
    log: Vec<IterationRecord>,
    diagnostics: Option<String>,
) -> SdpSolution {
    let x = HermitianMatrix::symmetrized(it.x.clone());
    let mut y = vec![0.0; problem.constraints.len()];
    for (pos, &k) in sc.rows.iter().enumerate() {
        y[k] = it.y[pos] * sc.c_scale / sc.row_scale[pos];
    }
    let mut z = problem.objective.clone();
    for (con, &yk) in problem.constraints.iter().zip(&y) {
        if yk != 0.0 {
            z.axpy(yk, &con.matrix);
        }
    }
    let slacks: Vec<f64> = problem
        .inequalities()
        .iter()
        .map(|con| con.rhs - con.matrix.inner(&x).unwrap_or(f64::NAN))
        .collect();
    let primal_obj = problem.objective.inner(&x).unwrap_or(f64::NAN);
    let dual_obj = -problem.constraints.iter().zip(&y).map(|(c, y)| c.rhs * y).sum::<f64>();

    let m = problem.m();
    let primal_feas = problem
        .constraints
        .iter()
        .enumerate()
        .map(|(k, con)| {
            let ax = con.matrix.inner(&x).unwrap_or(f64::NAN);
            let r = if k < m { ax - con.rhs } else { (ax - con.rhs).max(0.0) };
            r.abs() / (1.0 + con.rhs.abs())
        })
        .fold(0.0, f64::max);
    let neg_y = y[m..].iter().map(|v| (-v).max(0.0)).fold(0.0, f64::max);
    let zmin = z.eig().map(|e| e.values.last().copied().unwrap_or(0.0)).unwrap_or(f64::NAN);
    let dual_feas = ((-zmin).max(0.0) + neg_y) / (1.0 + problem.objective.frobenius_norm());
    let rel_gap = (primal_obj - dual_obj).abs() / (sc.c_scale + primal_obj.abs() + dual_obj.abs());

    debug_assert_eq!(sc.is_ineq.iter().filter(|&&b| b).count(), sc.ell);
    SdpSolution {
        x,
        y,
        z,
        slacks,
        status,
        primal_obj,
        dual_obj,
        residuals: Residuals {
            primal_feas,
            dual_feas,
            rel_gap,
        },
        iterations,
        log,
        diagnostics,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::casefile::{parse_case, CaseFormat};
    use crate::relaxation::{build_sdp, BuildOptions, Constraint, ConstraintKind, RowLabel};

    fn row(matrix: HermitianMatrix, rhs: f64, kind: ConstraintKind) -> Constraint {
        Constraint {
            matrix,
            rhs,
            kind,
            label: RowLabel::custom(),
        }
    }

    fn random_herm(n: usize, rng: &mut ChaCha8Rng) -> HermitianMatrix {
        HermitianMatrix::from_lower_fn(n, |i, j| {
            if i == j {
                c(rng.gen_range(-1.0..1.0), 0.0)
            } else {
                c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            }
        })
    }

    fn check_invariants(p: &SdpProblem, sol: &SdpSolution, cfg: &SolverConfig) {
        assert_eq!(sol.status, SolveStatus::Optimal, "{:?}", sol.diagnostics);
        let xe = sol.x.eig().unwrap();
        let ze = sol.z.eig().unwrap();
        let xs = xe.values[0].abs().max(1.0);
        let zs = ze.values[0].abs().max(1.0);
        assert!(*xe.values.last().unwrap() >= -1e-9 * xs);
        assert!(*ze.values.last().unwrap() >= -1e-7 * zs);
        for (k, con) in p.constraints.iter().enumerate() {
            let ax = con.matrix.inner(&sol.x).unwrap();
            let tol = cfg.feas_tol * (1.0 + con.rhs.abs());
            if k < p.m() {
                assert!((ax - con.rhs).abs() <= tol, "row {k}: {ax} vs {}", con.rhs);
            } else {
                assert!(ax <= con.rhs + tol);
                assert!(sol.y[k] >= -1e-9);
            }
        }
        let gap = (sol.primal_obj - sol.dual_obj).abs();
        assert!(gap <= 1e-6 * (1.0 + sol.primal_obj.abs()), "gap {gap}");
        assert!(sol.complementarity() <= p.n as f64 * 1e-6 * (1.0 + sol.primal_obj.abs()));
    }

    #[test]
    fn one_bus_cost() {
        let text = r#"{"base_mva": 1, "buses": [
            {"id": 1, "pd": 0.5, "qd": 0.2, "vmin": 0.9, "vmax": 1.1, "vfixed": 1.0}],
            "generators": [{"bus": 1, "pmin": 0, "pmax": 2, "qmin": -1, "qmax": 1, "c1": 10, "c0": 0}]}"#;
        let case = parse_case(text, CaseFormat::Json).unwrap();
        let p = build_sdp(&case, BuildOptions::default()).unwrap();
        let cfg = SolverConfig::default();
        let sol = solve(&p, &cfg).unwrap();
        check_invariants(&p, &sol, &cfg);
        assert!((sol.primal_obj + p.cost_offset - 5.0).abs() < 1e-6);
        assert!((sol.x.get(0, 0).re - 1.0).abs() < 1e-8);
    }

    #[test]
    fn min_eigenvalue_problem() {
        // minimize C • X s.t. tr X = 1  ->  lambda_min(C)
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cmat = random_herm(4, &mut rng);
        let p = SdpProblem::new(
            cmat.clone(),
            vec![row(HermitianMatrix::identity(4), 1.0, ConstraintKind::Equality)],
        );
        let cfg = SolverConfig::default();
        let sol = solve(&p, &cfg).unwrap();
        check_invariants(&p, &sol, &cfg);
        let lmin = *cmat.eig().unwrap().values.last().unwrap();
        assert!((sol.primal_obj - lmin).abs() < 1e-7);
        assert!(sol.x.numerical_rank(1e-6).unwrap() == 1);
    }

    #[test]
    fn random_feasible_problems() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..6 {
            let n = 3 + trial % 3;
            let x0 = {
                let r = random_herm(n, &mut rng);
                HermitianMatrix::symmetrized(r.as_matrix() * r.as_matrix() + CMatrix::identity(n, n) * c(0.5, 0.0))
            };
            let mut cons = Vec::new();
            let mut cmat = HermitianMatrix::identity(n).scale(2.0 * n as f64);
            for k in 0..(n + 2) {
                let a = random_herm(n, &mut rng);
                let ax = a.inner(&x0).unwrap();
                if k % 2 == 0 {
                    cons.push(row(a.clone(), ax, ConstraintKind::Equality));
                } else {
                    cons.push(row(a.clone(), ax + 0.3, ConstraintKind::Inequality));
                }
                cmat.axpy(-0.2 * rng.gen_range(-1.0..1.0), &a);
            }
            let p = SdpProblem::new(cmat, cons);
            let cfg = SolverConfig::default();
            let sol = solve(&p, &cfg).unwrap();
            check_invariants(&p, &sol, &cfg);
        }
    }

    #[test]
    fn contradictory_equalities() {
        let a = HermitianMatrix::unit_diagonal(2, 0);
        let p = SdpProblem::new(
            HermitianMatrix::identity(2),
            vec![
                row(a.clone(), 1.0, ConstraintKind::Equality),
                row(a, 2.0, ConstraintKind::Equality),
            ],
        );
        let sol = solve(&p, &SolverConfig::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::PrimalInfeasibleSuspected);
        assert!(sol.diagnostics.unwrap().contains("row 1"));
    }

    #[test]
    fn infeasible_trace() {
        // tr X = -1 has no PSD solution
        let p = SdpProblem::new(
            HermitianMatrix::identity(2),
            vec![row(HermitianMatrix::identity(2), -1.0, ConstraintKind::Equality)],
        );
        let sol = solve(&p, &SolverConfig::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::PrimalInfeasibleSuspected);
    }

    #[test]
    fn unbounded_objective() {
        // minimize -X_11 with X_22 = 1: unbounded below
        let p = SdpProblem::new(
            HermitianMatrix::unit_diagonal(2, 0).scale(-1.0),
            vec![row(HermitianMatrix::unit_diagonal(2, 1), 1.0, ConstraintKind::Equality)],
        );
        let sol = solve(&p, &SolverConfig::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::DualInfeasibleSuspected);
    }

    #[test]
    fn perturbed_start_same_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cmat = random_herm(3, &mut rng);
        let p = SdpProblem::new(
            cmat,
            vec![row(HermitianMatrix::identity(3), 2.0, ConstraintKind::Equality)],
        );
        let base = solve(&p, &SolverConfig::default()).unwrap();
        let cfg = SolverConfig {
            start: StartPoint::Perturbed { seed: 5, magnitude: 0.5 },
            ..SolverConfig::default()
        };
        let pert = solve(&p, &cfg).unwrap();
        assert_eq!(pert.status, SolveStatus::Optimal);
        // the optimum is unique; X carries O(sqrt(mu)) off-diagonal noise
        assert!((&base.x - &pert.x).frobenius_norm() < 1e-4);
        assert!((base.primal_obj - pert.primal_obj).abs() < 1e-7);
    }

    #[test]
    fn iteration_log_csv() {
        let p = SdpProblem::new(
            HermitianMatrix::identity(2),
            vec![row(HermitianMatrix::identity(2), 1.0, ConstraintKind::Equality)],
        );
        let cfg = SolverConfig {
            log_iterations: true,
            ..SolverConfig::default()
        };
        let sol = solve(&p, &cfg).unwrap();
        assert_eq!(sol.log.len(), sol.iterations + 1);
        let mut buf = Vec::new();
        write_iteration_log(&sol.log, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("iter,mu,primal_res,dual_res,gap\n"));
    }

    #[test]
    fn config_rejected() {
        let cfg = SolverConfig {
            step_fraction: 1.5,
            ..SolverConfig::default()
        };
        let p = SdpProblem::new(HermitianMatrix::identity(1), Vec::new());
        assert!(matches!(solve(&p, &cfg), Err(SolverError::Config(_))));
    }
}
