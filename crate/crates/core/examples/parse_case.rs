//! Reads a case file (JSON or MATPOWER) and prints its network counts and
//! admittance matrix.
//!
//! cargo run --example parse_case -- cases/ieee14.m

use std::path::PathBuf;

use sdpopf::casefile::{build_admittance, read_case};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("cases/case3mesh.json"));
    let case = read_case(&path, None)?;
    println!(
        "{}: n {} generators {} fixed-voltage buses {} branches {} base {} MVA",
        case.name.as_deref().unwrap_or("case"),
        case.n(),
        case.n_g(),
        case.n_v(),
        case.branches.len(),
        case.base_mva
    );
    println!("load buses: {:?}", case.load_buses().iter().map(|&i| case.buses[i].id).collect::<Vec<_>>());
    let y = build_admittance(&case)?;
    if case.n() <= 6 {
        for i in 0..case.n() {
            let row: Vec<String> = (0..case.n()).map(|j| format!("{:>8.3}{:+8.3}j", y[(i, j)].re, y[(i, j)].im)).collect();
            println!("{}", row.join(" "));
        }
    } else {
        let nnz = y.iter().filter(|z| z.norm() > 0.0).count();
        println!("admittance: {} nonzeros of {}", nnz, case.n() * case.n());
    }
    Ok(())
}
