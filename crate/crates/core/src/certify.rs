//! Certificates computed from a solved relaxation: active set, ranks,
//! strict complementarity, primal/dual nondegeneracy and the rank
//! conditions that rule out an exact relaxation.
//!
//! With `Q = [Q1 Q2]` the eigenvectors of `X` split at its numerical rank,
//! primal nondegeneracy asks that the matrices
//!
//! ```text
//! B_k^p = [ Q1* A_k Q1   Q1* A_k Q2 ]
//!         [ Q2* A_k Q1        0     ]        k in E ∪ A(X)
//! ```
//!
//! be linearly independent; dual nondegeneracy asks that `P1* A_k P1`, with
//! `P1` spanning the null space of `Z`, span all Hermitian matrices of order
//! `n - rank(Z)`.

use serde::{Deserialize, Serialize};

use crate::error::CertifyError;
use crate::hermitian::{independent_columns, CMatrix, EigenDecomposition, HermitianMatrix};
use crate::relaxation::SdpProblem;
use crate::solver::{SdpSolution, SolveStatus};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Eigenvalues at most `rank * max(1, λ_max)` count as zero.
    pub rank: f64,
    /// Row `k` is active when `b_k - A_k • X <= active * (1 + |b_k|)`.
    pub active: f64,
    /// Relative singular-value cutoff for independence and spanning.
    pub independence: f64,
    /// Bound on `‖Q1* P_Z‖` between the range of `X` and the range of `Z`.
    pub subspace: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rank: 1e-7,
            active: 1e-6,
            independence: 1e-8,
            subspace: 1e-5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    InexactCertified,
    NoVerdict,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::InexactCertified => "inexact_certified",
            Self::NoVerdict => "no_verdict",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NondegeneracyDiagnostics {
    /// Number of vec columns tested.
    pub dimension_tested: usize,
    /// Dimension the columns must reach to pass.
    pub dimension_required: usize,
    pub rank_found: usize,
    /// Smallest singular value counted in the rank, relative to the largest.
    pub smallest_retained_singular_value: f64,
    /// `log10(σ_decisive / (tol σ_max))`; positive means the test passed.
    pub margin: f64,
    /// Relative cutoff applied: the independence tolerance, raised to the
    /// eigenvalue ratio at the rank split when that is larger.
    pub cutoff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub case: Option<String>,
    pub n: usize,
    pub m: usize,
    pub ell: usize,
    pub objective: f64,
    pub rank_x: usize,
    pub rank_z: usize,
    pub active_set: Vec<usize>,
    pub a_x: usize,
    pub strict_complementarity: bool,
    pub primal_nondegenerate: bool,
    pub dual_nondegenerate: bool,
    pub unique_primal_inferred: bool,
    pub unique_dual_inferred: bool,
    pub lemma1_condition: bool,
    pub theorem2_verdict: Verdict,
    pub corollary1_condition: bool,
    /// `None` for problems that carry no network counts.
    pub corollary3_condition: Option<bool>,
    /// `m + a_X <= n² - (n - rank_X)²`, required whenever primal nondegenerate.
    pub dimension_bound_holds: bool,
    pub primal_diagnostics: NondegeneracyDiagnostics,
    pub dual_diagnostics: NondegeneracyDiagnostics,
    /// `‖Q1* P_Z‖_2` where `P_Z` spans the range of `Z`.
    pub subspace_residual: f64,
    pub x_eigenvalues: Vec<f64>,
    pub z_eigenvalues: Vec<f64>,
    pub tolerances_used: Tolerances,
    pub annotations: Vec<String>,
}

/// `m + a >= 2n`.
pub fn lemma1_condition(n: usize, m: usize, a: usize) -> bool {
    m + a >= 2 * n
}

/// `m >= 2n`.
pub fn corollary1_condition(n: usize, m: usize) -> bool {
    m >= 2 * n
}

/// `n_G <= (a + n_V) / 2`.
pub fn corollary3_condition(n_g: usize, a: usize, n_v: usize) -> bool {
    2 * n_g <= a + n_v
}

/// `m + a <= n² - (n - r)²`.
pub fn dimension_bound(n: usize, m: usize, a: usize, r: usize) -> bool {
    let r = r.min(n);
    m + a <= n * n - (n - r) * (n - r)
}

/// Inequality rows (indices into `problem.constraints`) that hold with
/// equality at `x`.
pub fn active_set(problem: &SdpProblem, x: &HermitianMatrix, tol_active: f64) -> (Vec<usize>, usize) {
    let m = problem.m();
    let idx: Vec<usize> = problem
        .constraints
        .iter()
        .enumerate()
        .skip(m)
        .filter(|(_, con)| {
            let slack = con.rhs - con.matrix.inner(x).unwrap_or(f64::NAN);
            slack <= tol_active * (1.0 + con.rhs.abs())
        })
        .map(|(k, _)| k)
        .collect();
    let a = idx.len();
    (idx, a)
}

fn rows_tested(problem: &SdpProblem, active: &[usize]) -> Vec<usize> {
    let mut rows: Vec<usize> = (0..problem.m()).collect();
    rows.extend(active.iter().copied().filter(|&k| k >= problem.m()));
    rows
}

fn diagnostics(columns: &[Vec<f64>], required: usize, tol: f64) -> (bool, NondegeneracyDiagnostics) {
    let ind = independent_columns(columns, tol);
    let smax = ind.singular_values.first().copied().unwrap_or(0.0);
    let rel = |k: usize| -> f64 {
        if smax > 0.0 {
            ind.singular_values.get(k).copied().unwrap_or(0.0) / smax
        } else {
            0.0
        }
    };
    let smallest = if ind.rank > 0 { rel(ind.rank - 1) } else { 0.0 };
    let margin = if required == 0 {
        f64::INFINITY
    } else {
        (rel(required - 1) / tol).log10()
    };
    let pass = ind.rank >= required;
    (
        pass,
        NondegeneracyDiagnostics {
            dimension_tested: columns.len(),
            dimension_required: required,
            rank_found: ind.rank,
            smallest_retained_singular_value: smallest,
            margin,
            cutoff: tol,
        },
    )
}

fn margin_warning(what: &str, eig: &EigenDecomposition, thr: f64) -> Option<String> {
    let close: Vec<f64> = eig
        .values
        .iter()
        .copied()
        .filter(|v| v.abs() > thr / 10.0 && v.abs() < thr * 10.0)
        .collect();
    (!close.is_empty()).then(|| {
        format!(
            "{what}: eigenvalue(s) {:?} within a factor 10 of the rank threshold {thr:.3e}",
            close
        )
    })
}

/// Definition of primal nondegeneracy with the numerical rank of `x`.
pub fn primal_nondegenerate(
    problem: &SdpProblem,
    x: &HermitianMatrix,
    active: &[usize],
    tol: &Tolerances,
) -> Result<(bool, NondegeneracyDiagnostics), CertifyError> {
    let eig = x.eig()?;
    Ok(primal_from_eig(problem, &eig, active, tol))
}

fn primal_from_eig(
    problem: &SdpProblem,
    eig: &EigenDecomposition,
    active: &[usize],
    tol: &Tolerances,
) -> (bool, NondegeneracyDiagnostics) {
    let n = eig.order();
    let r = eig.rank(tol.rank);
    let q = &eig.vectors;
    let columns: Vec<Vec<f64>> = rows_tested(problem, active)
        .into_iter()
        .map(|k| {
            let mut b = q.adjoint() * problem.constraints[k].matrix.as_matrix() * q;
            for j in r..n {
                for i in r..n {
                    b[(i, j)] = crate::hermitian::c(0.0, 0.0);
                }
            }
            HermitianMatrix::symmetrized(b).vec()
        })
        .collect();
    let d = columns.len();
    diagnostics(&columns, d, tol.independence.max(subspace_noise(eig, r)))
}

/// Definition of dual nondegeneracy with the numerical rank of `z`.
pub fn dual_nondegenerate(
    problem: &SdpProblem,
    z: &HermitianMatrix,
    active: &[usize],
    tol: &Tolerances,
) -> Result<(bool, NondegeneracyDiagnostics), CertifyError> {
    let eig = z.eig()?;
    let s = count_above(&eig, z_threshold(problem, &eig, tol.rank));
    Ok(dual_from_eig(problem, &eig, s, active, tol))
}

fn dual_from_eig(
    problem: &SdpProblem,
    eig: &EigenDecomposition,
    s: usize,
    active: &[usize],
    tol: &Tolerances,
) -> (bool, NondegeneracyDiagnostics) {
    let n = eig.order();
    let k = n - s;
    let p1 = eig.columns(s, k);
    let columns: Vec<Vec<f64>> = rows_tested(problem, active)
        .into_iter()
        .map(|row| HermitianMatrix::symmetrized(p1.adjoint() * problem.constraints[row].matrix.as_matrix() * &p1).vec())
        .collect();
    if k == 0 {
        return (
            true,
            NondegeneracyDiagnostics {
                dimension_tested: columns.len(),
                dimension_required: 0,
                rank_found: 0,
                smallest_retained_singular_value: 0.0,
                margin: f64::INFINITY,
                cutoff: tol.independence,
            },
        );
    }
    diagnostics(&columns, k * k, tol.independence.max(subspace_noise(eig, s)))
}

/// Relative error to expect in the split of `eig` after its `kept` largest
/// eigenvalues: the largest discarded magnitude over the smallest kept one.
/// Singular values below this cannot be told apart from zero.
fn subspace_noise(eig: &EigenDecomposition, kept: usize) -> f64 {
    let v = &eig.values;
    if kept == 0 || kept >= v.len() {
        return 0.0;
    }
    let dropped = v[kept..].iter().fold(0.0_f64, |a, b| a.max(b.abs()));
    let retained = v[..kept].iter().fold(f64::INFINITY, |a, b| a.min(b.abs()));
    if retained > 0.0 {
        dropped / retained
    } else {
        0.0
    }
}

fn count_above(eig: &EigenDecomposition, thr: f64) -> usize {
    eig.values.iter().filter(|v| v.abs() > thr).count()
}

/// Zero threshold for the dual slack. `Z = C + Σ y_k A_k` is measured
/// against the objective as well as its own spectrum, so that rescaling the
/// costs leaves the rank unchanged even when `Z` itself is nearly zero.
pub fn z_threshold(problem: &SdpProblem, eig: &EigenDecomposition, tol_rank: f64) -> f64 {
    eig.rank_threshold(tol_rank).max(tol_rank * problem.objective.frobenius_norm())
}

/// `rank(X) + rank(Z) = n`.
pub fn strict_complementarity(x: &HermitianMatrix, z: &HermitianMatrix, tol_rank: f64) -> Result<bool, CertifyError> {
    let rx = x.numerical_rank(tol_rank)?;
    let rz = z.numerical_rank(tol_rank)?;
    Ok(rx + rz == x.order())
}

fn spectral_norm(m: &CMatrix) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().singular_values().iter().fold(0.0_f64, |a, &b| a.max(b))
}

/// Fills in the condition flags and the verdict from ranks, active set and
/// nondegeneracy.
pub fn inexactness_verdict(problem: &SdpProblem, report: &mut CertificateReport) {
    let n = problem.n;
    let m = problem.m();
    report.lemma1_condition = lemma1_condition(n, m, report.a_x);
    report.corollary1_condition = corollary1_condition(n, m);
    report.corollary3_condition = problem
        .network
        .map(|net| corollary3_condition(net.n_g, report.a_x, net.n_v));
    report.unique_primal_inferred = report.dual_nondegenerate;
    report.unique_dual_inferred = report.primal_nondegenerate;
    report.dimension_bound_holds = dimension_bound(n, m, report.a_x, report.rank_x);
    let certified = report.primal_nondegenerate && report.lemma1_condition;
    report.theorem2_verdict = if certified && report.strict_complementarity {
        Verdict::InexactCertified
    } else {
        if certified {
            report
                .annotations
                .push("strict complementarity fails numerically; verdict downgraded".into());
        }
        Verdict::NoVerdict
    };
}

/// Full certificate for an optimal solution.
pub fn certify(problem: &SdpProblem, solution: &SdpSolution, tol: &Tolerances) -> Result<CertificateReport, CertifyError> {
    if solution.status != SolveStatus::Optimal {
        return Err(CertifyError::NotOptimal(solution.status.to_string()));
    }
    let n = problem.n;
    let ex = solution.x.eig()?;
    let ez = solution.z.eig()?;
    let x_thr = ex.rank_threshold(tol.rank);
    let z_thr = z_threshold(problem, &ez, tol.rank);
    let rank_x = ex.rank(tol.rank);
    let rank_z = count_above(&ez, z_thr);
    let (active, a_x) = active_set(problem, &solution.x, tol.active);
    let (pnd, pdiag) = primal_from_eig(problem, &ex, &active, tol);
    let (dnd, ddiag) = dual_from_eig(problem, &ez, rank_z, &active, tol);

    let mut annotations = Vec::new();
    annotations.extend(margin_warning("X", &ex, x_thr));
    annotations.extend(margin_warning("Z", &ez, z_thr));
    if rank_x + rank_z > n {
        annotations.push(format!(
            "rank(X) + rank(Z) = {} exceeds n = {n}: tolerance artifact",
            rank_x + rank_z
        ));
    }
    let q1 = ex.columns(0, rank_x);
    let pz = ez.columns(0, rank_z);
    let subspace_residual = spectral_norm(&(q1.adjoint() * pz));
    if subspace_residual > tol.subspace {
        annotations.push(format!(
            "range(X) and range(Z) not orthogonal: residual {subspace_residual:.3e}"
        ));
    }

    let mut report = CertificateReport {
        case: None,
        n,
        m: problem.m(),
        ell: problem.ell(),
        objective: solution.primal_obj + problem.cost_offset,
        rank_x,
        rank_z,
        active_set: active,
        a_x,
        strict_complementarity: rank_x + rank_z == n,
        primal_nondegenerate: pnd,
        dual_nondegenerate: dnd,
        unique_primal_inferred: false,
        unique_dual_inferred: false,
        lemma1_condition: false,
        theorem2_verdict: Verdict::NoVerdict,
        corollary1_condition: false,
        corollary3_condition: None,
        dimension_bound_holds: true,
        primal_diagnostics: pdiag,
        dual_diagnostics: ddiag,
        subspace_residual,
        x_eigenvalues: ex.values.clone(),
        z_eigenvalues: ez.values.clone(),
        tolerances_used: *tol,
        annotations,
    };
    inexactness_verdict(problem, &mut report);
    Ok(report)
}

fn mark(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

impl CertificateReport {
    pub fn table_header() -> String {
        format!(
            "{:<16} {:>5} {:>8} {:>8} {:>8} {:>5} {:>5} {:>18}",
            "case", "n", "rank(X)", "primal", "dual", "m", "a(X)", "verdict"
        )
    }

    /// One line in the layout of the rank/nondegeneracy comparison table.
    pub fn table_row(&self) -> String {
        format!(
            "{:<16} {:>5} {:>8} {:>8} {:>8} {:>5} {:>5} {:>18}",
            self.case.as_deref().unwrap_or("-"),
            self.n,
            self.rank_x,
            mark(self.primal_nondegenerate),
            mark(self.dual_nondegenerate),
            self.m,
            self.a_x,
            self.theorem2_verdict.as_str()
        )
    }
}
