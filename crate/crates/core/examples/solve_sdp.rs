//! Solves the relaxation of a case and, when the solution has rank one,
//! recovers bus voltages from its leading eigenvector.

use std::path::PathBuf;

use sdpopf::casefile::read_case;
use sdpopf::relaxation::{build_sdp, BuildOptions};
use sdpopf::solver::{solve, SolverConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("cases/case3mesh.json"));
    let case = read_case(&path, None)?;
    let problem = build_sdp(&case, BuildOptions::default())?;
    let config = SolverConfig { log_iterations: true, ..SolverConfig::default() };
    let sol = solve(&problem, &config)?;
    for rec in &sol.log {
        println!("{:>3} mu {:.2e} primal {:.2e} dual {:.2e} gap {:.2e}", rec.iter, rec.mu, rec.primal_res, rec.dual_res, rec.gap);
    }
    println!(
        "{} after {} iterations, cost {:.4} $/h, X•Z {:.2e}",
        sol.status,
        sol.iterations,
        sol.primal_obj + problem.cost_offset,
        sol.complementarity()
    );
    let eig = sol.x.eig()?;
    let rank = eig.rank(1e-7);
    println!("rank(X) = {rank}");
    if rank == 1 {
        let scale = eig.values[0].sqrt();
        let v0 = eig.vectors[(0, 0)];
        let phase = v0 / v0.norm();
        for (i, bus) in case.buses.iter().enumerate() {
            let v = eig.vectors[(i, 0)] / phase * scale;
            println!("bus {:>3}  |V| {:.4}  angle {:+.4} rad", bus.id, v.norm(), v.arg());
        }
    }
    Ok(())
}
