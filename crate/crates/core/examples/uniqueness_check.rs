//! At a dual-nondegenerate solution the primal optimum is unique, so a
//! re-solve with shuffled rows and a perturbed start lands on the same X.

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sdpopf::casefile::read_case;
use sdpopf::certify::{certify, Tolerances};
use sdpopf::relaxation::{build_sdp, BuildOptions, SdpProblem};
use sdpopf::solver::{solve, SolverConfig, StartPoint};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let case = read_case(&PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("cases/case14c.json"), None)?;
    let problem = build_sdp(&case, BuildOptions::default())?;
    let tight = SolverConfig { gap_tol: 1e-9, feas_tol: 1e-9, ..SolverConfig::default() };
    let first = solve(&problem, &tight)?;
    let report = certify(&problem, &first, &Tolerances::default())?;
    println!("dual nondegenerate: {}", report.dual_nondegenerate);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for seed in 0..3 {
        let mut rows = problem.constraints.clone();
        rows.shuffle(&mut rng);
        let shuffled = SdpProblem::new(problem.objective.clone(), rows);
        let cfg = SolverConfig { start: StartPoint::Perturbed { seed, magnitude: 0.5 }, ..tight };
        let again = solve(&shuffled, &cfg)?;
        println!("seed {seed}: {} in {} iterations, ‖ΔX‖_F = {:.2e}", again.status, again.iterations, (&first.x - &again.x).frobenius_norm());
    }
    Ok(())
}
