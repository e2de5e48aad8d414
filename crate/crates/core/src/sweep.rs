//! Load-profile sweeps: grid the demand at a few buses, solve and certify
//! every grid point, and sort the points into regions.
//!
//! Axes come in pairs per swept bus (real then reactive demand) and the grid
//! index is mixed-radix with the last axis varying fastest.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::casefile::CaseModel;
use crate::certify::{certify, dimension_bound, CertificateReport, Tolerances};
use crate::error::SweepError;
use crate::relaxation::{build_sdp, injection, injection_matrices, BuildOptions};
use crate::solver::{solve, SolveStatus, SolverConfig};

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub case: CaseModel,
    /// External bus numbers.
    pub swept_buses: Vec<usize>,
    /// Demand range in MW / MVAr, applied to both parts.
    pub range_low: f64,
    pub range_high: f64,
    pub points_per_axis: usize,
    pub oversatisfaction_crosscheck: bool,
    pub concurrency: usize,
    pub solver: SolverConfig,
    /// Used for the oversatisfied re-solve; falls back to `solver` when it
    /// does not reach optimality.
    pub crosscheck_solver: SolverConfig,
    pub tolerances: Tolerances,
    pub build: BuildOptions,
}

impl SweepSpec {
    pub fn new(case: CaseModel, swept_buses: Vec<usize>, range_low: f64, range_high: f64, points_per_axis: usize) -> Self {
        Self {
            case,
            swept_buses,
            range_low,
            range_high,
            points_per_axis,
            oversatisfaction_crosscheck: false,
            concurrency: 1,
            solver: SolverConfig::default(),
            crosscheck_solver: SolverConfig {
                gap_tol: 1e-10,
                feas_tol: 1e-10,
                ..SolverConfig::default()
            },
            tolerances: Tolerances::default(),
            build: BuildOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        let bad = |msg: String| Err(SweepError::InvalidSpec(msg));
        if self.points_per_axis < 2 {
            return bad(format!("points_per_axis must be at least 2, got {}", self.points_per_axis));
        }
        if !(self.range_low < self.range_high) || !self.range_low.is_finite() || !self.range_high.is_finite() {
            return bad(format!("range {}:{} is empty", self.range_low, self.range_high));
        }
        if self.swept_buses.is_empty() {
            return bad("no swept buses".into());
        }
        for (k, &id) in self.swept_buses.iter().enumerate() {
            if self.case.bus_index(id).is_none() {
                return bad(format!("bus {id} is not in the case"));
            }
            if self.swept_buses[..k].contains(&id) {
                return bad(format!("bus {id} listed twice"));
            }
        }
        if self.concurrency == 0 {
            return bad("concurrency must be positive".into());
        }
        if self.record_count().is_none() {
            return bad("grid too large".into());
        }
        self.solver.validate().map_err(|e| SweepError::InvalidSpec(e.to_string()))?;
        self.crosscheck_solver.validate().map_err(|e| SweepError::InvalidSpec(e.to_string()))
    }

    pub fn axis_count(&self) -> usize {
        2 * self.swept_buses.len()
    }

    pub fn record_count(&self) -> Option<usize> {
        u32::try_from(self.axis_count())
            .ok()
            .and_then(|k| self.points_per_axis.checked_pow(k))
    }

    /// Inclusive, equally spaced grid values.
    pub fn axis_values(&self) -> Vec<f64> {
        let k = self.points_per_axis;
        (0..k)
            .map(|i| {
                if i + 1 == k {
                    self.range_high
                } else {
                    self.range_low + (self.range_high - self.range_low) * i as f64 / (k - 1) as f64
                }
            })
            .collect()
    }

    pub fn axis_names(&self) -> Vec<String> {
        self.swept_buses
            .iter()
            .flat_map(|id| [format!("pd_{id}"), format!("qd_{id}")])
            .collect()
    }

    /// Per-axis grid positions of a grid index.
    pub fn grid_position(&self, mut index: usize) -> Vec<usize> {
        let k = self.points_per_axis;
        let mut pos = vec![0; self.axis_count()];
        for p in pos.iter_mut().rev() {
            *p = index % k;
            index /= k;
        }
        pos
    }

    /// Case with the swept demands of grid point `index` substituted.
    pub fn instance(&self, index: usize) -> CaseModel {
        let values = self.axis_values();
        let pos = self.grid_position(index);
        let mut case = self.case.clone();
        let base = case.base_mva;
        for (k, &id) in self.swept_buses.iter().enumerate() {
            let i = case.bus_index(id).expect("validated");
            case.buses[i].p_demand = values[pos[2 * k]] / base;
            case.buses[i].q_demand = values[pos[2 * k + 1]] / base;
        }
        case
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    R1,
    R2,
    Degenerate,
    Infeasible,
    Failed,
}

impl Classification {
    pub const ALL: [Classification; 5] = [Self::R1, Self::R2, Self::Degenerate, Self::Infeasible, Self::Failed];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::R1 => "R1",
            Self::R2 => "R2",
            Self::Degenerate => "degenerate",
            Self::Infeasible => "infeasible",
            Self::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub grid_index: usize,
    /// Swept `(Pd, Qd)` per bus in MW / MVAr.
    pub grid_point: Vec<(f64, f64)>,
    /// `None` when the solver returned an error.
    pub status: Option<SolveStatus>,
    pub classification: Classification,
    pub n: usize,
    pub m: usize,
    pub rank_x: usize,
    pub a_x: usize,
    pub lemma1_condition: bool,
    pub primal_nondegenerate: bool,
    pub dual_nondegenerate: bool,
    /// Primal nondegenerate while contradicting `m + a < 2n` at rank one or
    /// the dimension bound.
    pub invariant_violation: bool,
    pub oversat_balance_violation: Option<f64>,
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassShare {
    pub count: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub case: Option<String>,
    pub swept_buses: Vec<usize>,
    pub range: (f64, f64),
    pub points_per_axis: usize,
    pub records: usize,
    pub classes: std::collections::BTreeMap<String, ClassShare>,
    /// Fraction of R2 records with `m + a_X >= 2n`.
    pub r2_lemma1_fraction: Option<f64>,
    pub invariant_violations: usize,
    /// Largest cross-check residual among R1 records.
    pub oversat_max_r1: Option<f64>,
    /// Smallest cross-check residual among R2 records.
    pub oversat_min_r2: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub axis_names: Vec<String>,
    pub axis_values: Vec<f64>,
    pub records: Vec<SweepRecord>,
    pub summary: SweepSummary,
}

pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult, SweepError> {
    spec.validate()?;
    let total = spec.record_count().expect("validated");
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.concurrency)
        .build()
        .map_err(|e| SweepError::InvalidSpec(format!("cannot start worker pool: {e}")))?;
    let records: Vec<SweepRecord> = pool.install(|| (0..total).into_par_iter().map(|i| run_point(spec, i)).collect());
    let summary = summarize(spec, &records);
    Ok(SweepResult {
        axis_names: spec.axis_names(),
        axis_values: spec.axis_values(),
        records,
        summary,
    })
}

fn run_point(spec: &SweepSpec, index: usize) -> SweepRecord {
    let case = spec.instance(index);
    let base = case.base_mva;
    let grid_point = spec
        .swept_buses
        .iter()
        .map(|&id| {
            let b = &case.buses[case.bus_index(id).expect("validated")];
            (b.p_demand * base, b.q_demand * base)
        })
        .collect();
    let mut rec = SweepRecord {
        grid_index: index,
        grid_point,
        status: None,
        classification: Classification::Failed,
        n: case.n(),
        m: 0,
        rank_x: 0,
        a_x: 0,
        lemma1_condition: false,
        primal_nondegenerate: false,
        dual_nondegenerate: false,
        invariant_violation: false,
        oversat_balance_violation: None,
        message: None,
    };
    let problem = match build_sdp(&case, spec.build) {
        Ok(p) => p,
        Err(e) => {
            rec.message = Some(e.to_string());
            return rec;
        }
    };
    rec.m = problem.m();
    let solution = match solve(&problem, &spec.solver) {
        Ok(s) => s,
        Err(e) => {
            rec.message = Some(e.to_string());
            return rec;
        }
    };
    rec.status = Some(solution.status);
    match solution.status {
        SolveStatus::Optimal => {}
        SolveStatus::PrimalInfeasibleSuspected | SolveStatus::DualInfeasibleSuspected => {
            rec.classification = Classification::Infeasible;
            return rec;
        }
        _ => return rec,
    }
    let report = match certify(&problem, &solution, &spec.tolerances) {
        Ok(r) => r,
        Err(e) => {
            rec.message = Some(e.to_string());
            return rec;
        }
    };
    fill_from_report(&mut rec, &report);
    if spec.oversatisfaction_crosscheck
        && matches!(rec.classification, Classification::R1 | Classification::R2)
    {
        rec.oversat_balance_violation = oversatisfaction_crosscheck(&case, spec).ok().flatten();
    }
    rec
}

fn fill_from_report(rec: &mut SweepRecord, report: &CertificateReport) {
    rec.m = report.m;
    rec.rank_x = report.rank_x;
    rec.a_x = report.a_x;
    rec.lemma1_condition = report.lemma1_condition;
    rec.primal_nondegenerate = report.primal_nondegenerate;
    rec.dual_nondegenerate = report.dual_nondegenerate;
    rec.invariant_violation = report.primal_nondegenerate
        && ((report.lemma1_condition && report.rank_x == 1)
            || !dimension_bound(report.n, report.m, report.a_x, report.rank_x));
    rec.classification = match (report.dual_nondegenerate, report.rank_x) {
        (true, 1) => Classification::R1,
        (true, r) if r > 1 => Classification::R2,
        _ => Classification::Degenerate,
    };
}

/// Re-solves `case` with load-bus balance relaxed to oversatisfaction and
/// returns the largest per-bus balance residual `|S_Di + injection_i(X)|` in
/// per-unit. `Ok(None)` when the relaxed solve does not reach optimality.
///
/// The re-solve runs at the tighter `crosscheck_solver` tolerances first:
/// the residual of an exact instance shrinks only with the duality gap.
pub fn oversatisfaction_crosscheck(case: &CaseModel, spec: &SweepSpec) -> Result<Option<f64>, SweepError> {
    let options = BuildOptions {
        oversatisfaction: true,
        ..spec.build
    };
    let fail = |e: String| SweepError::InvalidSpec(e);
    let problem = build_sdp(case, options).map_err(|e| fail(e.to_string()))?;
    let mut solution = solve(&problem, &spec.crosscheck_solver).map_err(|e| fail(e.to_string()))?;
    if solution.status != SolveStatus::Optimal {
        solution = solve(&problem, &spec.solver).map_err(|e| fail(e.to_string()))?;
    }
    if solution.status != SolveStatus::Optimal {
        return Ok(None);
    }
    let y = crate::casefile::build_admittance(case).map_err(|e| fail(e.to_string()))?;
    let mut worst = 0.0f64;
    for i in case.load_buses() {
        let inj = injection_matrices(&y, i).map_err(|e| fail(e.to_string()))?;
        worst = worst.max((case.demand(i) + injection(&inj, &solution.x)).norm());
    }
    Ok(Some(worst))
}

fn summarize(spec: &SweepSpec, records: &[SweepRecord]) -> SweepSummary {
    let total = records.len();
    let frac = |k: usize| if total == 0 { 0.0 } else { k as f64 / total as f64 };
    let classes = Classification::ALL
        .iter()
        .map(|&c| {
            let count = records.iter().filter(|r| r.classification == c).count();
            (c.as_str().to_string(), ClassShare { count, fraction: frac(count) })
        })
        .collect();
    let r2: Vec<&SweepRecord> = records.iter().filter(|r| r.classification == Classification::R2).collect();
    let r2_lemma1_fraction =
        (!r2.is_empty()).then(|| r2.iter().filter(|r| r.lemma1_condition).count() as f64 / r2.len() as f64);
    let residuals = |c: Classification| {
        records
            .iter()
            .filter(move |r| r.classification == c)
            .filter_map(|r| r.oversat_balance_violation)
    };
    SweepSummary {
        case: spec.case.name.clone(),
        swept_buses: spec.swept_buses.clone(),
        range: (spec.range_low, spec.range_high),
        points_per_axis: spec.points_per_axis,
        records: total,
        classes,
        r2_lemma1_fraction,
        invariant_violations: records.iter().filter(|r| r.invariant_violation).count(),
        oversat_max_r1: residuals(Classification::R1).reduce(f64::max),
        oversat_min_r2: residuals(Classification::R2).reduce(f64::min),
    }
}

impl SweepSummary {
    pub fn share(&self, class: Classification) -> ClassShare {
        self.classes
            .get(class.as_str())
            .cloned()
            .unwrap_or(ClassShare { count: 0, fraction: 0.0 })
    }
}

fn sig9(x: f64) -> String {
    format!("{x:.8e}")
}

pub fn write_records_csv<W: Write>(result: &SweepResult, out: W) -> Result<(), SweepError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["grid_index".to_string()];
    header.extend(result.axis_names.iter().cloned());
    header.extend(
        ["status", "classification", "rank_X", "a_X", "m_plus_a_ge_2n", "oversat_residual"]
            .map(String::from),
    );
    w.write_record(&header)?;
    for r in &result.records {
        let mut row = vec![r.grid_index.to_string()];
        for &(p, q) in &r.grid_point {
            row.push(sig9(p));
            row.push(sig9(q));
        }
        row.push(r.status.map_or("error", |s| s.as_str()).to_string());
        row.push(r.classification.as_str().to_string());
        row.push(r.rank_x.to_string());
        row.push(r.a_x.to_string());
        row.push(r.lemma1_condition.to_string());
        row.push(r.oversat_balance_violation.map_or(String::new(), sig9));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SectionRow {
    pub axis1_value: f64,
    pub axis2_value: f64,
    pub classification: Classification,
}

/// Two-dimensional section through the grid on axes `pair`, with every other
/// axis held at the grid value nearest to `fixed[k]` (indexed by axis).
/// Without `fixed`, the remaining axes sit at the grid value nearest to the
/// case's nominal demand.
pub fn emit_region_sections(
    spec: &SweepSpec,
    records: &[SweepRecord],
    pair: (usize, usize),
    fixed: Option<&[f64]>,
) -> Result<Vec<SectionRow>, SweepError> {
    let k = spec.axis_count();
    let (a1, a2) = pair;
    if a1 >= k || a2 >= k || a1 == a2 {
        return Err(SweepError::UnknownAxisPair(a1, a2));
    }
    if records.is_empty() {
        return Ok(Vec::new());
    }
    let values = spec.axis_values();
    let targets: Vec<f64> = match fixed {
        Some(f) if f.len() == k => f.to_vec(),
        Some(f) => {
            return Err(SweepError::InvalidSpec(format!("{} fixed values for {k} axes", f.len())));
        }
        None => spec
            .swept_buses
            .iter()
            .flat_map(|&id| {
                let b = &spec.case.buses[spec.case.bus_index(id).expect("validated")];
                [b.p_demand * spec.case.base_mva, b.q_demand * spec.case.base_mva]
            })
            .collect(),
    };
    let nearest = |t: f64| {
        (0..values.len())
            .min_by(|&i, &j| (values[i] - t).abs().total_cmp(&(values[j] - t).abs()))
            .unwrap_or(0)
    };
    let anchor: Vec<usize> = targets.iter().map(|&t| nearest(t)).collect();
    let mut rows = Vec::new();
    for r in records {
        let pos = spec.grid_position(r.grid_index);
        let on_section = (0..k).all(|ax| ax == a1 || ax == a2 || pos[ax] == anchor[ax]);
        if on_section {
            rows.push(SectionRow {
                axis1_value: values[pos[a1]],
                axis2_value: values[pos[a2]],
                classification: r.classification,
            });
        }
    }
    Ok(rows)
}

pub fn write_section_csv<W: Write>(rows: &[SectionRow], out: W) -> Result<(), SweepError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["axis1_value", "axis2_value", "classification"])?;
    for r in rows {
        w.write_record([sig9(r.axis1_value), sig9(r.axis2_value), r.classification.as_str().to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::casefile::{parse_case, CaseFormat};

    fn two_bus() -> CaseModel {
        parse_case(
            r#"{"base_mva": 100, "buses": [
                {"id": 1, "pd": 0, "qd": 0, "vmin": 0.95, "vmax": 1.05},
                {"id": 2, "pd": 40, "qd": 10, "vmin": 0.95, "vmax": 1.05}],
              "branches": [{"from": 1, "to": 2, "r": 0.01, "x": 0.05}],
              "generators": [{"bus": 1, "pmin": 0, "pmax": 300, "qmin": -200, "qmax": 200, "c1": 10, "c0": 0}]}"#,
            CaseFormat::Json,
        )
        .unwrap()
    }

    #[test]
    fn grid_arithmetic() {
        let spec = SweepSpec::new(two_bus(), vec![2], 0.0, 3.0, 4);
        assert_eq!(spec.record_count(), Some(16));
        assert_eq!(spec.axis_values(), vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(spec.grid_position(7), vec![1, 3]);
        let case = spec.instance(7);
        assert!((case.buses[1].p_demand - 0.01).abs() < 1e-15);
        assert!((case.buses[1].q_demand - 0.03).abs() < 1e-15);
    }

    #[test]
    fn spec_rejected() {
        let mut spec = SweepSpec::new(two_bus(), vec![2], 0.0, 3.0, 1);
        assert!(spec.validate().is_err());
        spec.points_per_axis = 2;
        spec.range_high = 0.0;
        assert!(spec.validate().is_err());
        spec.range_high = 1.0;
        spec.swept_buses = vec![9];
        assert!(spec.validate().is_err());
        spec.swept_buses = vec![2];
        assert!(spec.validate().is_ok());
    }

    #[test]
    fn micro_sweep() {
        let mut spec = SweepSpec::new(two_bus(), vec![2], 10.0, 30.0, 2);
        spec.oversatisfaction_crosscheck = true;
        let res = run_sweep(&spec).unwrap();
        assert_eq!(res.records.len(), 4);
        for r in &res.records {
            assert_eq!(r.status, Some(SolveStatus::Optimal), "{r:?}");
            assert_eq!(r.classification, Classification::R1);
            assert!(r.oversat_balance_violation.unwrap() <= 1e-6);
        }
        assert_eq!(res.summary.invariant_violations, 0);
        assert_eq!(res.summary.share(Classification::R1).count, 4);

        let rows = emit_region_sections(&spec, &res.records, (0, 1), None).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(emit_region_sections(&spec, &res.records, (0, 2), None).is_err());
        assert!(emit_region_sections(&spec, &[], (0, 1), None).unwrap().is_empty());

        let mut buf = Vec::new();
        write_records_csv(&res, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("grid_index,pd_2,qd_2,status,classification,rank_X,a_X,m_plus_a_ge_2n,oversat_residual"));
        assert_eq!(text.lines().count(), 5);
    }

    #[test]
    fn zero_demand_crosscheck() {
        let mut case = two_bus();
        case.buses[1].p_demand = 0.0;
        case.buses[1].q_demand = 0.0;
        let mut g = case.generators[0].clone();
        g.bus = 1;
        case.generators.push(g);
        let spec = SweepSpec::new(case.clone(), vec![2], 0.0, 1.0, 2);
        let r = oversatisfaction_crosscheck(&case, &spec).unwrap().unwrap();
        assert!(r < 1e-6, "{r}");
    }
}
