//! Assembles the semidefinite relaxation of a case and lists its rows, with
//! and without load oversatisfaction.

use std::path::PathBuf;

use sdpopf::casefile::read_case;
use sdpopf::relaxation::{balance_row_count, build_sdp, BuildOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("cases/case3line.json"));
    let case = read_case(&path, None)?;
    let problem = build_sdp(&case, BuildOptions::default())?;
    println!(
        "n {}  m {} (lower bound {})  ell {}  cost offset {:.4}",
        problem.n,
        problem.m(),
        balance_row_count(&case),
        problem.ell(),
        problem.cost_offset
    );
    for (k, row) in problem.constraints.iter().enumerate() {
        println!("{k:>4} {:<12} {:?} rhs {:+.5}", row.label.to_string(), row.kind, row.rhs);
    }
    let over = build_sdp(&case, BuildOptions { oversatisfaction: true, ..BuildOptions::default() })?;
    println!("oversatisfied: m {} ell {}", over.m(), over.ell());
    Ok(())
}
