#![allow(dead_code)]

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use sdpopf::casefile::{build_admittance, read_case, CaseModel};
use sdpopf::certify::{certify, CertificateReport, Tolerances};
use sdpopf::relaxation::{build_sdp, BuildOptions, SdpProblem};
use sdpopf::solver::{solve, SdpSolution, SolverConfig};

pub use sdpopf::hermitian::C64;

pub fn case_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("cases").join(name)
}

pub fn load(name: &str) -> CaseModel {
    read_case(&case_path(name), None).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Every case file shipped with the crate.
pub fn corpus() -> Vec<(String, CaseModel)> {
    let mut names: Vec<String> = std::fs::read_dir(case_path(""))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".json") || n.ends_with(".m"))
        .collect();
    names.sort();
    names.into_iter().map(|n| { let c = load(&n); (n, c) }).collect()
}

pub struct Run {
    pub problem: SdpProblem,
    pub solution: SdpSolution,
    pub report: Option<CertificateReport>,
}

pub fn run(case: &CaseModel) -> Run {
    let problem = build_sdp(case, BuildOptions::default()).unwrap();
    let solution = solve(&problem, &SolverConfig::default()).unwrap();
    let report = certify(&problem, &solution, &Tolerances::default()).ok();
    Run { problem, solution, report }
}

// Brute-force nonlinear OPF for tiny networks. Generator-bus magnitudes and
// non-reference generator outputs are gridded; angles and load-bus voltages
// then follow from the power-flow equations (Newton from a flat start) and
// the remaining limits are checked.

pub struct BruteForce {
    pub cost: f64,
    pub voltages: Vec<C64>,
    pub evaluated: usize,
}

struct Oracle<'a> {
    case: &'a CaseModel,
    y: DMatrix<C64>,
    gens: Vec<usize>,
    loads: Vec<usize>,
    reference: usize,
}

const LIMIT_SLACK: f64 = 1e-9;

impl<'a> Oracle<'a> {
    fn new(case: &'a CaseModel) -> Self {
        let y = build_admittance(case).unwrap();
        let gens: Vec<usize> = case.generators.iter().map(|g| g.bus).collect();
        let loads = case.load_buses();
        assert!(loads.iter().all(|&i| case.buses[i].v_fixed.is_none()), "fixed load-bus voltage unsupported");
        Self { case, y, reference: gens[0], gens, loads }
    }

    fn injections(&self, v: &[C64]) -> Vec<C64> {
        let vv = DVector::from_column_slice(v);
        let iv = &self.y * &vv;
        v.iter().zip(iv.iter()).map(|(a, b)| a * b.conj()).collect()
    }

    /// Variables: one magnitude per generator bus, then the real output of
    /// every non-reference generator. Newton solves for the remaining
    /// angles and the load-bus voltages.
    fn voltages(&self, params: &[f64]) -> Option<Vec<C64>> {
        let n = self.case.n();
        let ng = self.gens.len();
        let pv: Vec<usize> = self.gens.iter().copied().filter(|&g| g != self.reference).collect();
        let mags = &params[..ng];
        let mag_of = |g: usize| mags[self.gens.iter().position(|&x| x == g).unwrap()];
        // unknowns: one angle per PV bus, (re, im) per load bus
        let dim = pv.len() + 2 * self.loads.len();
        let assemble = |u: &DVector<f64>| -> Vec<C64> {
            let mut v = vec![C64::new(0.0, 0.0); n];
            v[self.reference] = C64::new(mag_of(self.reference), 0.0);
            for (k, &g) in pv.iter().enumerate() {
                v[g] = C64::from_polar(mag_of(g), u[k]);
            }
            for (k, &i) in self.loads.iter().enumerate() {
                v[i] = C64::new(u[pv.len() + 2 * k], u[pv.len() + 2 * k + 1]);
            }
            v
        };
        let residual = |u: &DVector<f64>| -> DVector<f64> {
            let s = self.injections(&assemble(u));
            let mut r = DVector::zeros(dim);
            for (k, &g) in pv.iter().enumerate() {
                r[k] = s[g].re + self.case.demand(g).re - params[ng + k];
            }
            for (k, &i) in self.loads.iter().enumerate() {
                let d = s[i] + self.case.demand(i);
                r[pv.len() + 2 * k] = d.re;
                r[pv.len() + 2 * k + 1] = d.im;
            }
            r
        };
        let mut u = DVector::zeros(dim);
        for k in 0..self.loads.len() {
            u[pv.len() + 2 * k] = mag_of(self.reference);
        }
        for _ in 0..40 {
            let r = residual(&u);
            if r.amax() < 1e-13 {
                break;
            }
            let mut jac = DMatrix::zeros(dim, dim);
            let h = 1e-7;
            for col in 0..dim {
                let mut w = u.clone();
                w[col] += h;
                jac.set_column(col, &((residual(&w) - &r) / h));
            }
            u += jac.lu().solve(&(-r))?;
        }
        (residual(&u).amax() < 1e-10).then(|| assemble(&u))
    }

    fn cost(&self, params: &[f64]) -> Option<(f64, Vec<C64>)> {
        let case = self.case;
        for (j, &g) in self.gens.iter().enumerate() {
            let b = &case.buses[g];
            let (lo, hi) = b.v_fixed.map_or((b.v_min, b.v_max), |f| (f, f));
            if params[j] < lo - 1e-15 || params[j] > hi + 1e-15 {
                return None;
            }
        }
        let v = self.voltages(params)?;
        for (i, b) in case.buses.iter().enumerate() {
            let m = v[i].norm();
            if m < b.v_min - LIMIT_SLACK || m > b.v_max + LIMIT_SLACK {
                return None;
            }
        }
        let s = self.injections(&v);
        let mut cost = 0.0;
        for g in &case.generators {
            let sg = s[g.bus] + case.demand(g.bus);
            let ok = sg.re >= g.p_min - LIMIT_SLACK
                && sg.re <= g.p_max + LIMIT_SLACK
                && sg.im >= g.q_min - LIMIT_SLACK
                && sg.im <= g.q_max + LIMIT_SLACK;
            if !ok {
                return None;
            }
            cost += g.c0 + g.c1 * case.base_mva * sg.re;
        }
        Some((cost, v))
    }

    fn axes(&self, coarse: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut axes = Vec::new();
        let mut steps = Vec::new();
        for &g in &self.gens {
            let b = &self.case.buses[g];
            match b.v_fixed {
                Some(f) => { axes.push(vec![f]); steps.push(0.0); }
                None => { axes.push(linspace(b.v_min, b.v_max, coarse)); steps.push(coarse); }
            }
        }
        for g in &self.case.generators {
            if g.bus != self.reference {
                let step = coarse * (g.p_max - g.p_min).max(coarse);
                axes.push(linspace(g.p_min, g.p_max, step));
                steps.push(step);
            }
        }
        (axes, steps)
    }
}

fn linspace(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let k = ((hi - lo) / step).round().max(1.0) as usize;
    (0..=k).map(|j| lo + (hi - lo) * j as f64 / k as f64).collect()
}

/// Coarse grid, then a compass search from the best grid points down to a
/// step far below `resolution`.
pub fn brute_force_opf(case: &CaseModel, resolution: f64) -> Option<BruteForce> {
    let oracle = Oracle::new(case);
    let (axes, steps) = oracle.axes(10.0 * resolution);
    let mut evaluated = 0;
    let mut seeds: Vec<(f64, Vec<f64>)> = Vec::new();
    let total: usize = axes.iter().map(Vec::len).product();
    for mut idx in 0..total {
        let p: Vec<f64> = axes.iter().map(|a| { let v = a[idx % a.len()]; idx /= a.len(); v }).collect();
        evaluated += 1;
        if let Some((c, _)) = oracle.cost(&p) {
            seeds.push((c, p));
        }
    }
    seeds.sort_by(|a, b| a.0.total_cmp(&b.0));
    seeds.truncate(8);
    let mut best: Option<BruteForce> = None;
    // Every direction in {-1, 0, 1}^d so the search can slide along an
    // active limit that is not axis-aligned.
    let d = steps.len();
    let dirs: Vec<Vec<f64>> = (1..3usize.pow(d as u32))
        .map(|mut c| (0..d).map(|_| { let s = (c % 3) as f64 - 1.0; c /= 3; s }).collect())
        .collect();
    for (mut fc, mut p) in seeds {
        let mut scale = 1.0;
        while scale > 1e-9 {
            let mut improved = false;
            for dir in &dirs {
                let q: Vec<f64> = (0..d).map(|k| p[k] + scale * steps[k] * dir[k]).collect();
                evaluated += 1;
                if let Some((c, _)) = oracle.cost(&q) {
                    if c < fc {
                        fc = c;
                        p = q;
                        improved = true;
                        break;
                    }
                }
            }
            if !improved {
                scale *= 0.5;
            }
        }
        let (cost, voltages) = oracle.cost(&p).unwrap();
        if best.as_ref().map_or(true, |b| cost < b.cost) {
            best = Some(BruteForce { cost, voltages, evaluated: 0 });
        }
    }
    best.map(|mut b| { b.evaluated = evaluated; b })
}
