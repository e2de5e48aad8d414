//! Grids the demand at two buses, classifies every instance, and compares
//! each against a re-solve with load oversatisfaction allowed.
//!
//! cargo run --release --example load_sweep -- [points]

use std::path::PathBuf;

use sdpopf::casefile::read_case;
use sdpopf::sweep::{run_sweep, write_records_csv, Classification, SweepSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let points = std::env::args().nth(1).map_or(Ok(4), |s| s.parse())?;
    let case = read_case(&PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("cases/mini4.json"), None)?;
    let mut spec = SweepSpec::new(case, vec![2, 3], 0.0, 3.0, points);
    spec.oversatisfaction_crosscheck = true;
    let result = run_sweep(&spec)?;
    let s = &result.summary;
    for class in Classification::ALL {
        let share = s.share(class);
        println!("{:<11} {:>6} {:>7.2}%", class.as_str(), share.count, 100.0 * share.fraction);
    }
    println!("invariant violations {}", s.invariant_violations);
    println!("oversatisfied residual: max over R1 {:?}, min over R2 {:?}", s.oversat_max_r1, s.oversat_min_r2);
    let path = std::env::temp_dir().join("sdpopf_load_sweep.csv");
    write_records_csv(&result, std::fs::File::create(&path)?)?;
    println!("records written to {}", path.display());
    Ok(())
}
