//! Prints two-dimensional slices of a sweep as character maps
//! (`1` exact, `2` certified inexact, `d` degenerate, `x` infeasible).

use std::path::PathBuf;

use sdpopf::casefile::read_case;
use sdpopf::sweep::{emit_region_sections, run_sweep, Classification, SweepSpec};

fn glyph(c: Classification) -> char {
    match c {
        Classification::R1 => '1',
        Classification::R2 => '2',
        Classification::Degenerate => 'd',
        Classification::Infeasible => 'x',
        Classification::Failed => '?',
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let case = read_case(&PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("cases/mini4.json"), None)?;
    let spec = SweepSpec::new(case, vec![2, 3], 0.0, 3.0, 6);
    let result = run_sweep(&spec)?;
    let names = spec.axis_names();
    let values = spec.axis_values();
    for pair in [(0, 2), (1, 3)] {
        let rows = emit_region_sections(&spec, &result.records, pair, None)?;
        println!("{} (down) vs {} (across)", names[pair.0], names[pair.1]);
        for &v1 in values.iter().rev() {
            let line: String = values
                .iter()
                .map(|&v2| {
                    rows.iter()
                        .find(|r| r.axis1_value == v1 && r.axis2_value == v2)
                        .map_or(' ', |r| glyph(r.classification))
                })
                .collect();
            println!("{v1:>6.2} {line}");
        }
    }
    Ok(())
}
