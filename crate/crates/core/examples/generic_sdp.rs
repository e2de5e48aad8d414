//! The solver and certificates work on any real-valued Hermitian SDP, not
//! only power-flow relaxations. Here: minimise `C • X` over unit-trace
//! `X ⪰ 0` with one diagonal entry capped.

use sdpopf::certify::{certify, Tolerances};
use sdpopf::hermitian::{HermitianMatrix, C64};
use sdpopf::relaxation::{Constraint, ConstraintKind, RowLabel, SdpProblem};
use sdpopf::solver::{solve, SolverConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let c = HermitianMatrix::from_lower_fn(3, |i, j| match (i, j) {
        (0, 0) => C64::new(1.0, 0.0),
        (1, 1) => C64::new(2.0, 0.0),
        (2, 2) => C64::new(0.5, 0.0),
        (1, 0) => C64::new(0.3, -0.4),
        (2, 1) => C64::new(0.0, 0.2),
        _ => C64::new(0.0, 0.0),
    });
    let rows = vec![
        Constraint { matrix: HermitianMatrix::identity(3), rhs: 1.0, kind: ConstraintKind::Equality, label: RowLabel::custom() },
        Constraint { matrix: HermitianMatrix::unit_diagonal(3, 2), rhs: 0.4, kind: ConstraintKind::Inequality, label: RowLabel::custom() },
    ];
    let problem = SdpProblem::new(c, rows);
    let sol = solve(&problem, &SolverConfig::default())?;
    println!("{}: primal {:.8} dual {:.8}", sol.status, sol.primal_obj, sol.dual_obj);
    println!("y = {:.6?}, slack = {:.2?}", sol.y, sol.slacks);
    let report = certify(&problem, &sol, &Tolerances::default())?;
    println!("rank(X) {} rank(Z) {} active rows {:?}", report.rank_x, report.rank_z, report.active_set);
    println!("primal nondegenerate {} dual nondegenerate {}", report.primal_nondegenerate, report.dual_nondegenerate);
    Ok(())
}
