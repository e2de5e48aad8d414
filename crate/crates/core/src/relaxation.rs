//! Semidefinite relaxation data `(C, {A_k}, b)` assembled from a case.
//!
//! Every quadratic OPF quantity is written as `A • X` with `X` standing in
//! for `V V*`. The complex injection `S_i = V_i conj((Y V)_i)` equals
//! `(Y* e_i e_iᵀ) • V V*`; its real and imaginary parts are linear in `X`
//! through the Hermitian matrices returned by [`injection_matrices`].

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::casefile::{build_admittance, CaseModel};
use crate::error::RelaxationError;
use crate::hermitian::{c, independent_columns, CMatrix, HermitianMatrix, C64};

/// Relative singular-value threshold used when reducing equality rows.
pub const EQUALITY_BASIS_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintKind {
    Equality,
    Inequality,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowKind {
    PBalance,
    QBalance,
    /// Oversatisfied real-power delivery (`delivered >= demanded`).
    PDelivery,
    QDelivery,
    VmagFixed,
    PgMax,
    PgMin,
    QgMax,
    QgMin,
    VmagMax,
    VmagMin,
    /// Reserved for branch flow limits; never emitted.
    Flow,
    Custom,
}

impl RowKind {
    fn tag(self) -> &'static str {
        match self {
            Self::PBalance => "P-balance",
            Self::QBalance => "Q-balance",
            Self::PDelivery => "P-delivery",
            Self::QDelivery => "Q-delivery",
            Self::VmagFixed => "Vmag-fixed",
            Self::PgMax => "Pg-max",
            Self::PgMin => "Pg-min",
            Self::QgMax => "Qg-max",
            Self::QgMin => "Qg-min",
            Self::VmagMax => "Vmag-max",
            Self::VmagMin => "Vmag-min",
            Self::Flow => "flow",
            Self::Custom => "custom",
        }
    }
}

/// Provenance of a constraint row. `bus` is the external bus number.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowLabel {
    pub kind: RowKind,
    pub bus: Option<usize>,
}

impl RowLabel {
    pub fn bus(kind: RowKind, bus: usize) -> Self {
        Self { kind, bus: Some(bus) }
    }

    pub fn custom() -> Self {
        Self {
            kind: RowKind::Custom,
            bus: None,
        }
    }
}

impl fmt::Display for RowLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.bus {
            Some(b) => write!(f, "{} bus {}", self.kind.tag(), b),
            None => f.write_str(self.kind.tag()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub matrix: HermitianMatrix,
    pub rhs: f64,
    pub kind: ConstraintKind,
    pub label: RowLabel,
}

/// Counts carried over from the network the problem was built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkCounts {
    pub n_g: usize,
    pub n_v: usize,
}

/// `minimize C • X` subject to `A_k • X = b_k` (k ∈ E), `A_k • X <= b_k`
/// (k ∈ I), `X ⪰ 0`. Equalities always precede inequalities.
#[derive(Debug, Clone)]
pub struct SdpProblem {
    pub n: usize,
    pub objective: HermitianMatrix,
    pub constraints: Vec<Constraint>,
    pub cost_offset: f64,
    pub network: Option<NetworkCounts>,
}

impl SdpProblem {
    /// Generic problem; rows are reordered so that equalities come first
    /// (stable within each kind).
    pub fn new(objective: HermitianMatrix, mut constraints: Vec<Constraint>) -> Self {
        constraints.sort_by_key(|c| c.kind == ConstraintKind::Inequality);
        Self {
            n: objective.order(),
            objective,
            constraints,
            cost_offset: 0.0,
            network: None,
        }
    }

    /// Number of equality rows (the index set E is `0..m`).
    pub fn m(&self) -> usize {
        self.constraints
            .iter()
            .take_while(|c| c.kind == ConstraintKind::Equality)
            .count()
    }

    /// Number of inequality rows (the index set I is `m..m+ell`).
    pub fn ell(&self) -> usize {
        self.constraints.len() - self.m()
    }

    pub fn rhs(&self) -> Vec<f64> {
        self.constraints.iter().map(|c| c.rhs).collect()
    }

    pub fn equalities(&self) -> &[Constraint] {
        &self.constraints[..self.m()]
    }

    pub fn inequalities(&self) -> &[Constraint] {
        &self.constraints[self.m()..]
    }

    /// JSON debug dump with every matrix written as its vec array.
    pub fn to_debug_json(&self) -> serde_json::Value {
        let rows: Vec<_> = self
            .constraints
            .iter()
            .enumerate()
            .map(|(k, c)| {
                serde_json::json!({
                    "index": k,
                    "label": c.label.to_string(),
                    "kind": c.kind,
                    "rhs": c.rhs,
                    "vec": c.matrix.vec(),
                })
            })
            .collect();
        serde_json::json!({
            "n": self.n,
            "m": self.m(),
            "ell": self.ell(),
            "cost_offset": self.cost_offset,
            "network": self.network,
            "objective": self.objective.vec(),
            "constraints": rows,
        })
    }

    /// Reads a dump written by [`SdpProblem::to_debug_json`].
    pub fn from_debug_json(value: &serde_json::Value) -> Result<Self, String> {
        #[derive(Deserialize)]
        struct Row {
            kind: ConstraintKind,
            rhs: f64,
            vec: Vec<f64>,
        }
        #[derive(Deserialize)]
        struct Dump {
            n: usize,
            cost_offset: f64,
            network: Option<NetworkCounts>,
            objective: Vec<f64>,
            constraints: Vec<Row>,
        }
        let dump: Dump = serde_json::from_value(value.clone()).map_err(|e| e.to_string())?;
        let objective = HermitianMatrix::from_vec(dump.n, &dump.objective).map_err(|e| e.to_string())?;
        let constraints = dump
            .constraints
            .into_iter()
            .map(|r| {
                Ok(Constraint {
                    matrix: HermitianMatrix::from_vec(dump.n, &r.vec).map_err(|e| e.to_string())?,
                    rhs: r.rhs,
                    kind: r.kind,
                    label: RowLabel::custom(),
                })
            })
            .collect::<Result<Vec<_>, String>>()?;
        let mut p = SdpProblem::new(objective, constraints);
        p.cost_offset = dump.cost_offset;
        p.network = dump.network;
        Ok(p)
    }
}

/// Hermitian matrices whose inner products with `V V*` give the real and
/// reactive injection and the squared voltage magnitude at one bus.
#[derive(Debug, Clone)]
pub struct InjectionMatrices {
    pub phi: HermitianMatrix,
    pub psi: HermitianMatrix,
    pub vmag: HermitianMatrix,
}

/// `Phi_i = (Y* e_i e_iᵀ + e_i e_iᵀ Y)/2`, `Psi_i = (Y* e_i e_iᵀ - e_i e_iᵀ Y)/(2j)`.
pub fn injection_matrices(y: &CMatrix, i: usize) -> Result<InjectionMatrices, RelaxationError> {
    let n = y.nrows();
    if i >= n {
        return Err(RelaxationError::BusOutOfRange { index: i, n });
    }
    // A = Y* e_i e_iᵀ has column i equal to conj(row i of Y), zeros elsewhere.
    let mut a = CMatrix::zeros(n, n);
    for k in 0..n {
        a[(k, i)] = y[(i, k)].conj();
    }
    let adj = a.adjoint();
    let phi = HermitianMatrix::symmetrized((&a + &adj) * c(0.5, 0.0));
    let psi = HermitianMatrix::symmetrized((&a - &adj) / c(0.0, 2.0));
    Ok(InjectionMatrices {
        phi,
        psi,
        vmag: HermitianMatrix::unit_diagonal(n, i),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildOptions {
    /// Relax load-bus balance to "delivered power at least the demand".
    pub oversatisfaction: bool,
    /// Emit `M_i • X = V̄_i²` for fixed-voltage buses (otherwise they get
    /// their `[v_min², v_max²]` range like every other bus).
    pub vfixed_as_equality: bool,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            oversatisfaction: false,
            vfixed_as_equality: true,
        }
    }
}

/// Assembles the relaxation in a fixed row order:
/// equalities: load-bus P/Q balance by bus, then fixed voltage magnitudes;
/// inequalities: oversatisfied deliveries (if enabled), generator bounds
/// by bus (Pmax, Pmin, Qmax, Qmin), then voltage ranges by bus (max, min).
pub fn build_sdp(case: &CaseModel, options: BuildOptions) -> Result<SdpProblem, RelaxationError> {
    let y = build_admittance(case)?;
    let n = case.n();
    let inj: Vec<InjectionMatrices> = (0..n)
        .map(|i| injection_matrices(&y, i))
        .collect::<Result<_, _>>()?;
    let id = |i: usize| case.buses[i].id;
    let row = |matrix: &HermitianMatrix, rhs: f64, kind, label| Constraint {
        matrix: matrix.clone(),
        rhs,
        kind,
        label,
    };
    use ConstraintKind::{Equality as Eq, Inequality as Ineq};

    let mut eqs = Vec::new();
    let mut ineqs = Vec::new();

    for i in case.load_buses() {
        let sd = case.demand(i);
        if options.oversatisfaction {
            // delivered = -injection >= demand  <=>  injection <= -demand
            ineqs.push(row(&inj[i].phi, -sd.re, Ineq, RowLabel::bus(RowKind::PDelivery, id(i))));
            ineqs.push(row(&inj[i].psi, -sd.im, Ineq, RowLabel::bus(RowKind::QDelivery, id(i))));
        } else {
            eqs.push(row(&inj[i].phi, -sd.re, Eq, RowLabel::bus(RowKind::PBalance, id(i))));
            eqs.push(row(&inj[i].psi, -sd.im, Eq, RowLabel::bus(RowKind::QBalance, id(i))));
        }
    }
    if options.vfixed_as_equality {
        for (i, bus) in case.buses.iter().enumerate() {
            if let Some(v) = bus.v_fixed {
                eqs.push(row(&inj[i].vmag, v * v, Eq, RowLabel::bus(RowKind::VmagFixed, id(i))));
            }
        }
    }
    for g in &case.generators {
        let i = g.bus;
        let sd = case.demand(i);
        ineqs.push(row(&inj[i].phi, g.p_max - sd.re, Ineq, RowLabel::bus(RowKind::PgMax, id(i))));
        ineqs.push(row(&-&inj[i].phi, sd.re - g.p_min, Ineq, RowLabel::bus(RowKind::PgMin, id(i))));
        ineqs.push(row(&inj[i].psi, g.q_max - sd.im, Ineq, RowLabel::bus(RowKind::QgMax, id(i))));
        ineqs.push(row(&-&inj[i].psi, sd.im - g.q_min, Ineq, RowLabel::bus(RowKind::QgMin, id(i))));
    }
    for (i, bus) in case.buses.iter().enumerate() {
        if bus.v_fixed.is_some() && options.vfixed_as_equality {
            continue;
        }
        let m = &inj[i].vmag;
        ineqs.push(row(m, bus.v_max * bus.v_max, Ineq, RowLabel::bus(RowKind::VmagMax, id(i))));
        ineqs.push(row(&-m, -bus.v_min * bus.v_min, Ineq, RowLabel::bus(RowKind::VmagMin, id(i))));
    }

    let mut objective = HermitianMatrix::zeros(n);
    let mut cost_offset = 0.0;
    for g in &case.generators {
        let c1 = g.c1 * case.base_mva;
        objective.axpy(c1, &inj[g.bus].phi);
        cost_offset += g.c0 + c1 * case.demand(g.bus).re;
    }

    eqs.extend(ineqs);
    Ok(SdpProblem {
        n,
        objective,
        constraints: eqs,
        cost_offset,
        network: Some(NetworkCounts {
            n_g: case.n_g(),
            n_v: case.n_v(),
        }),
    })
}

/// `2(n - n_G) + n_V`, the number of equality rows the balance and fixed
/// voltage constraints contribute.
pub fn balance_row_count(case: &CaseModel) -> usize {
    2 * (case.n() - case.n_g()) + case.n_v()
}

/// Drops equality rows that are linear combinations of earlier ones.
///
/// A dependent row is removed only if its right-hand side agrees with the
/// same combination of the retained right-hand sides; otherwise the
/// equalities are contradictory and an error is returned.
pub fn equality_basis(problem: &SdpProblem) -> Result<SdpProblem, RelaxationError> {
    let m = problem.m();
    let columns: Vec<Vec<f64>> = problem.equalities().iter().map(|c| c.matrix.vec()).collect();
    let indep = independent_columns(&columns, EQUALITY_BASIS_TOL);
    if indep.basis.len() == m {
        return Ok(problem.clone());
    }

    // Least squares on the retained columns for each dropped row.
    let len = problem.n * problem.n;
    let basis = nalgebra::DMatrix::from_fn(len, indep.basis.len(), |r, j| columns[indep.basis[j]][r]);
    let b_basis = nalgebra::DVector::from_iterator(
        indep.basis.len(),
        indep.basis.iter().map(|&k| problem.constraints[k].rhs),
    );
    let svd = basis.clone().svd(true, true);
    let mut keep = vec![false; problem.constraints.len()];
    for &k in &indep.basis {
        keep[k] = true;
    }
    for k in m..problem.constraints.len() {
        keep[k] = true;
    }
    for k in 0..m {
        if keep[k] {
            continue;
        }
        let target = nalgebra::DVector::from_column_slice(&columns[k]);
        let coef = svd
            .solve(&target, 1e-12)
            .map_err(|e| RelaxationError::Numerical(e.to_string()))?;
        let predicted = coef.dot(&b_basis);
        let rhs = problem.constraints[k].rhs;
        let scale = 1.0 + rhs.abs() + b_basis.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let mismatch = (predicted - rhs).abs();
        if mismatch > 1e-9 * scale {
            return Err(RelaxationError::InconsistentEquality {
                row: k,
                label: problem.constraints[k].label.to_string(),
                mismatch,
            });
        }
    }
    let mut out = problem.clone();
    out.constraints = problem
        .constraints
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|(c, _)| c.clone())
        .collect();
    Ok(out)
}

/// Complex injection `Phi_i • X + j Psi_i • X` at bus `i`.
pub fn injection(inj: &InjectionMatrices, x: &HermitianMatrix) -> C64 {
    let p = inj.phi.inner(x).unwrap_or(f64::NAN);
    let q = inj.psi.inner(x).unwrap_or(f64::NAN);
    c(p, q)
}
