//! Solves and certifies a case: rank, active set, primal and dual
//! nondegeneracy, and whether inexactness of the relaxation is certified.

use std::path::PathBuf;

use sdpopf::casefile::read_case;
use sdpopf::certify::{certify, CertificateReport, Tolerances};
use sdpopf::relaxation::{build_sdp, BuildOptions};
use sdpopf::solver::{solve, SolverConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("cases");
    let paths: Vec<PathBuf> = match std::env::args().skip(1).map(PathBuf::from).collect::<Vec<_>>() {
        p if p.is_empty() => ["case3mesh.json", "case14c.json", "radial6v.json"].iter().map(|n| dir.join(n)).collect(),
        p => p,
    };
    println!("{}", CertificateReport::table_header());
    for path in paths {
        let case = read_case(&path, None)?;
        let problem = build_sdp(&case, BuildOptions::default())?;
        let sol = solve(&problem, &SolverConfig::default())?;
        let mut report = certify(&problem, &sol, &Tolerances::default())?;
        report.case = case.name.clone();
        println!("{}", report.table_row());
        println!(
            "    rank(Z) {}  strict complementarity {}  m + a >= 2n {}  margins {:+.1} / {:+.1}",
            report.rank_z,
            report.strict_complementarity,
            report.lemma1_condition,
            report.primal_diagnostics.margin,
            report.dual_diagnostics.margin
        );
    }
    Ok(())
}
