//! A radial network with every voltage magnitude fixed and few generators:
//! the relaxation cannot be exact at a nondegenerate solution, and the
//! certificate says so.

use std::path::PathBuf;

use sdpopf::casefile::read_case;
use sdpopf::certify::{certify, Tolerances};
use sdpopf::relaxation::{build_sdp, BuildOptions};
use sdpopf::solver::{solve, SolverConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let case = read_case(&PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("cases/radial6v.json"), None)?;
    println!("n {} n_G {} n_V {} branches {}", case.n(), case.n_g(), case.n_v(), case.branches.len());
    let problem = build_sdp(&case, BuildOptions::default())?;
    let sol = solve(&problem, &SolverConfig::default())?;
    let report = certify(&problem, &sol, &Tolerances::default())?;
    println!("n_G <= n_V / 2 with a = 0 condition: {:?}", report.corollary3_condition);
    println!("rank(X) {}  eigenvalues {:.3?}", report.rank_x, &report.x_eigenvalues[..3]);
    println!(
        "primal nondegenerate {}  dual nondegenerate {}  strict complementarity {}",
        report.primal_nondegenerate, report.dual_nondegenerate, report.strict_complementarity
    );
    println!("verdict {}", report.theorem2_verdict.as_str());
    Ok(())
}
