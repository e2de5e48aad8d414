//! Network case data: parsing, validation, and the bus admittance matrix.
//!
//! Files carry power quantities in MW / MVAr; everything stored in a
//! [`CaseModel`] is per-unit on `base_mva`, except the cost coefficients,
//! which stay in $/MW and $.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::CaseError;
use crate::hermitian::{c, CMatrix, C64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    /// External (file) bus number.
    pub id: usize,
    pub p_demand: f64,
    pub q_demand: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub v_fixed: Option<f64>,
    /// Shunt conductance / susceptance in per-unit at 1 p.u. voltage.
    pub g_shunt: f64,
    pub b_shunt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    /// Internal 0-based bus indices.
    pub from_bus: usize,
    pub to_bus: usize,
    pub r: f64,
    pub x: f64,
    /// Total line charging susceptance.
    pub b: f64,
    pub tap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    /// Internal 0-based bus index.
    pub bus: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    /// Linear cost in $/MW.
    pub c1: f64,
    /// Fixed cost in $.
    pub c0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseModel {
    pub name: Option<String>,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    /// At most one generator per bus, sorted by bus index.
    pub generators: Vec<Generator>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseFormat {
    Json,
    Matpower,
}

impl FromStr for CaseFormat {
    type Err = CaseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Self::Json),
            "matpower" | "m" | "matpower-subset" => Ok(Self::Matpower),
            other => Err(CaseError::UnsupportedFormat(other.to_string())),
        }
    }
}

impl fmt::Display for CaseFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Json => f.write_str("json"),
            Self::Matpower => f.write_str("matpower"),
        }
    }
}

impl CaseFormat {
    /// Guesses the format from a file extension (`.m` is MATPOWER).
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("m") => Self::Matpower,
            _ => Self::Json,
        }
    }
}

impl CaseModel {
    /// Merges generators that share a bus, then validates.
    pub fn new(
        name: Option<String>,
        base_mva: f64,
        buses: Vec<Bus>,
        branches: Vec<Branch>,
        generators: Vec<Generator>,
    ) -> Result<Self, CaseError> {
        let case = Self {
            name,
            base_mva,
            buses,
            branches,
            generators: merge_generators(generators),
        };
        case.validate()?;
        Ok(case)
    }

    pub fn n(&self) -> usize {
        self.buses.len()
    }

    pub fn n_g(&self) -> usize {
        self.generators.len()
    }

    pub fn n_v(&self) -> usize {
        self.buses.iter().filter(|b| b.v_fixed.is_some()).count()
    }

    pub fn generator_at(&self, bus: usize) -> Option<&Generator> {
        self.generators.iter().find(|g| g.bus == bus)
    }

    pub fn is_generator_bus(&self, bus: usize) -> bool {
        self.generator_at(bus).is_some()
    }

    /// Internal indices of buses without a generator.
    pub fn load_buses(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| !self.is_generator_bus(i)).collect()
    }

    /// Internal index of the bus with external number `id`.
    pub fn bus_index(&self, id: usize) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn demand(&self, bus: usize) -> C64 {
        let b = &self.buses[bus];
        c(b.p_demand, b.q_demand)
    }

    pub fn validate(&self) -> Result<(), CaseError> {
        let sem = |msg: String| Err(CaseError::Semantic(msg));
        if !(self.base_mva > 0.0) {
            return sem(format!("base_mva must be positive, got {}", self.base_mva));
        }
        if self.buses.is_empty() {
            return sem("case has no buses".into());
        }
        let n = self.n();
        let mut seen = HashMap::new();
        for (i, b) in self.buses.iter().enumerate() {
            if let Some(prev) = seen.insert(b.id, i) {
                return sem(format!("bus {} defined twice (rows {} and {})", b.id, prev, i));
            }
            if !(b.v_min > 0.0 && b.v_max > 0.0) {
                return sem(format!("bus {}: voltage bounds must be positive", b.id));
            }
            if b.v_min > b.v_max {
                return sem(format!("bus {}: vmin {} exceeds vmax {}", b.id, b.v_min, b.v_max));
            }
            if let Some(v) = b.v_fixed {
                if !(v > 0.0) || v < b.v_min - 1e-12 || v > b.v_max + 1e-12 {
                    return sem(format!(
                        "bus {}: fixed voltage {} outside [{}, {}]",
                        b.id, v, b.v_min, b.v_max
                    ));
                }
            }
        }
        for (k, br) in self.branches.iter().enumerate() {
            if br.from_bus >= n || br.to_bus >= n {
                return sem(format!("branch {k} references a bus outside the network"));
            }
            if br.from_bus == br.to_bus {
                return sem(format!("branch {k} connects bus {} to itself", self.buses[br.from_bus].id));
            }
            if br.r == 0.0 && br.x == 0.0 {
                return Err(CaseError::ZeroImpedance {
                    index: k,
                    from: self.buses[br.from_bus].id,
                    to: self.buses[br.to_bus].id,
                });
            }
            if !(br.tap > 0.0) {
                return sem(format!("branch {k}: tap ratio must be positive"));
            }
        }
        let mut gen_buses = Vec::new();
        for g in &self.generators {
            if g.bus >= n {
                return sem("generator references a bus outside the network".into());
            }
            if gen_buses.contains(&g.bus) {
                return sem(format!("bus {} has more than one generator", self.buses[g.bus].id));
            }
            gen_buses.push(g.bus);
            let id = self.buses[g.bus].id;
            if g.p_min > g.p_max {
                return sem(format!("generator at bus {id}: pmin exceeds pmax"));
            }
            if g.q_min > g.q_max {
                return sem(format!("generator at bus {id}: qmin exceeds qmax"));
            }
            if g.c1 < 0.0 || g.c0 < 0.0 {
                return sem(format!("generator at bus {id}: cost coefficients must be non-negative"));
            }
        }
        Ok(())
    }
}

/// Sums bounds and fixed costs of generators on the same bus; the linear
/// cost is averaged with `p_max` weights (plain mean if all `p_max` are 0).
fn merge_generators(gens: Vec<Generator>) -> Vec<Generator> {
    let mut by_bus: BTreeMap<usize, Vec<Generator>> = BTreeMap::new();
    for g in gens {
        by_bus.entry(g.bus).or_default().push(g);
    }
    by_bus
        .into_iter()
        .map(|(bus, group)| {
            if group.len() == 1 {
                return group.into_iter().next().expect("non-empty group");
            }
            let weight: f64 = group.iter().map(|g| g.p_max.max(0.0)).sum();
            let c1 = if weight > 0.0 {
                group.iter().map(|g| g.c1 * g.p_max.max(0.0)).sum::<f64>() / weight
            } else {
                group.iter().map(|g| g.c1).sum::<f64>() / group.len() as f64
            };
            Generator {
                bus,
                p_min: group.iter().map(|g| g.p_min).sum(),
                p_max: group.iter().map(|g| g.p_max).sum(),
                q_min: group.iter().map(|g| g.q_min).sum(),
                q_max: group.iter().map(|g| g.q_max).sum(),
                c1,
                c0: group.iter().map(|g| g.c0).sum(),
            }
        })
        .collect()
}

/// Parses a case file; warnings are sent to the `log` facade.
pub fn parse_case(text: &str, format: CaseFormat) -> Result<CaseModel, CaseError> {
    let (case, warnings) = parse_case_with_warnings(text, format)?;
    for w in warnings {
        warn!("{w}");
    }
    Ok(case)
}

/// Like [`parse_case`] but returns the importer warnings to the caller.
pub fn parse_case_with_warnings(
    text: &str,
    format: CaseFormat,
) -> Result<(CaseModel, Vec<String>), CaseError> {
    match format {
        CaseFormat::Json => parse_json(text).map(|c| (c, Vec::new())),
        CaseFormat::Matpower => matpower::parse(text),
    }
}

pub fn read_case(path: &std::path::Path, format: Option<CaseFormat>) -> Result<CaseModel, CaseError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CaseError::Semantic(format!("cannot read {}: {e}", path.display())))?;
    parse_case(&text, format.unwrap_or_else(|| CaseFormat::from_path(path)))
}

// ---------------------------------------------------------------------------
// JSON

#[derive(Debug, Serialize, Deserialize)]
struct JsonCase {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    base_mva: f64,
    buses: Vec<JsonBus>,
    #[serde(default)]
    branches: Vec<JsonBranch>,
    #[serde(default)]
    generators: Vec<JsonGen>,
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonBus {
    id: usize,
    pd: f64,
    qd: f64,
    vmin: f64,
    vmax: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vfixed: Option<f64>,
    #[serde(default, skip_serializing_if = "is_zero")]
    gs: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    bs: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonBranch {
    from: usize,
    to: usize,
    r: f64,
    x: f64,
    #[serde(default)]
    b: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tap: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonGen {
    bus: usize,
    pmin: f64,
    pmax: f64,
    qmin: f64,
    qmax: f64,
    c1: f64,
    c0: f64,
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

fn parse_json(text: &str) -> Result<CaseModel, CaseError> {
    let raw: JsonCase = serde_json::from_str(text).map_err(|e| CaseError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    if !(raw.base_mva > 0.0) {
        return Err(CaseError::Semantic("base_mva must be positive".into()));
    }
    let base = raw.base_mva;
    let index = bus_lookup(raw.buses.iter().map(|b| b.id))?;
    let lookup = |id: usize, what: &str| {
        index
            .get(&id)
            .copied()
            .ok_or_else(|| CaseError::Semantic(format!("{what} references unknown bus {id}")))
    };
    let buses = raw
        .buses
        .iter()
        .map(|b| Bus {
            id: b.id,
            p_demand: b.pd / base,
            q_demand: b.qd / base,
            v_min: b.vmin,
            v_max: b.vmax,
            v_fixed: b.vfixed,
            g_shunt: b.gs / base,
            b_shunt: b.bs / base,
        })
        .collect();
    let mut branches = Vec::with_capacity(raw.branches.len());
    for br in &raw.branches {
        branches.push(Branch {
            from_bus: lookup(br.from, "branch")?,
            to_bus: lookup(br.to, "branch")?,
            r: br.r,
            x: br.x,
            b: br.b,
            tap: br.tap.unwrap_or(1.0),
        });
    }
    let mut gens = Vec::with_capacity(raw.generators.len());
    for g in &raw.generators {
        gens.push(Generator {
            bus: lookup(g.bus, "generator")?,
            p_min: g.pmin / base,
            p_max: g.pmax / base,
            q_min: g.qmin / base,
            q_max: g.qmax / base,
            c1: g.c1,
            c0: g.c0,
        });
    }
    CaseModel::new(raw.name, base, buses, branches, gens)
}

fn bus_lookup(ids: impl Iterator<Item = usize>) -> Result<HashMap<usize, usize>, CaseError> {
    let mut map = HashMap::new();
    for (i, id) in ids.enumerate() {
        if map.insert(id, i).is_some() {
            return Err(CaseError::Semantic(format!("bus {id} defined twice")));
        }
    }
    Ok(map)
}

/// Serialises to the native JSON format (MW / MVAr units).
pub fn to_json(case: &CaseModel) -> String {
    let base = case.base_mva;
    let ext = |i: usize| case.buses[i].id;
    let raw = JsonCase {
        name: case.name.clone(),
        base_mva: base,
        buses: case
            .buses
            .iter()
            .map(|b| JsonBus {
                id: b.id,
                pd: b.p_demand * base,
                qd: b.q_demand * base,
                vmin: b.v_min,
                vmax: b.v_max,
                vfixed: b.v_fixed,
                gs: b.g_shunt * base,
                bs: b.b_shunt * base,
            })
            .collect(),
        branches: case
            .branches
            .iter()
            .map(|br| JsonBranch {
                from: ext(br.from_bus),
                to: ext(br.to_bus),
                r: br.r,
                x: br.x,
                b: br.b,
                tap: (br.tap != 1.0).then_some(br.tap),
            })
            .collect(),
        generators: case
            .generators
            .iter()
            .map(|g| JsonGen {
                bus: ext(g.bus),
                pmin: g.p_min * base,
                pmax: g.p_max * base,
                qmin: g.q_min * base,
                qmax: g.q_max * base,
                c1: g.c1,
                c0: g.c0,
            })
            .collect(),
    };
    serde_json::to_string_pretty(&raw).expect("case serialisation cannot fail")
}

// ---------------------------------------------------------------------------
// MATPOWER subset

mod matpower {
    use super::*;

    const BUS_COLS: usize = 13;
    const GEN_COLS: usize = 10;
    const BRANCH_COLS: usize = 11;

    struct Matrix {
        rows: Vec<Vec<f64>>,
        line: usize,
    }

    struct Scanner<'a> {
        src: &'a [u8],
        pos: usize,
    }

    impl<'a> Scanner<'a> {
        fn location(&self, pos: usize) -> (usize, usize) {
            let upto = &self.src[..pos.min(self.src.len())];
            let line = upto.iter().filter(|&&b| b == b'\n').count() + 1;
            let col = pos - upto.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1) + 1;
            (line, col)
        }

        fn error(&self, pos: usize, message: impl Into<String>) -> CaseError {
            let (line, column) = self.location(pos);
            CaseError::Syntax {
                line,
                column,
                message: message.into(),
            }
        }

        fn peek(&self) -> Option<u8> {
            self.src.get(self.pos).copied()
        }

        /// Skips blanks and `%` comments; stops at newlines when `stop_nl`.
        fn skip_ws(&mut self, stop_nl: bool) {
            while let Some(b) = self.peek() {
                match b {
                    b'%' => {
                        while let Some(b) = self.peek() {
                            if b == b'\n' {
                                break;
                            }
                            self.pos += 1;
                        }
                    }
                    b'\n' if stop_nl => return,
                    b' ' | b'\t' | b'\r' | b'\n' => self.pos += 1,
                    b'.' if self.src[self.pos..].starts_with(b"...") => {
                        // line continuation
                        while let Some(b) = self.peek() {
                            self.pos += 1;
                            if b == b'\n' {
                                break;
                            }
                        }
                    }
                    _ => return,
                }
            }
        }

        fn skip_statement(&mut self) {
            let mut depth = 0i32;
            while let Some(b) = self.peek() {
                self.pos += 1;
                match b {
                    b'[' | b'{' => depth += 1,
                    b']' | b'}' => depth -= 1,
                    b'%' => {
                        while let Some(b) = self.peek() {
                            if b == b'\n' {
                                break;
                            }
                            self.pos += 1;
                        }
                    }
                    b';' | b'\n' if depth <= 0 => return,
                    _ => {}
                }
            }
        }

        fn ident(&mut self) -> String {
            let start = self.pos;
            while let Some(b) = self.peek() {
                if b.is_ascii_alphanumeric() || b == b'_' {
                    self.pos += 1;
                } else {
                    break;
                }
            }
            String::from_utf8_lossy(&self.src[start..self.pos]).into_owned()
        }

        fn number(&mut self) -> Result<f64, CaseError> {
            let start = self.pos;
            while let Some(b) = self.peek() {
                if b.is_ascii_alphanumeric() || matches!(b, b'.' | b'+' | b'-') {
                    self.pos += 1;
                } else {
                    break;
                }
            }
            let tok = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
            match tok {
                "Inf" | "inf" => Ok(f64::INFINITY),
                "-Inf" | "-inf" => Ok(f64::NEG_INFINITY),
                _ => tok
                    .parse::<f64>()
                    .map_err(|_| self.error(start, format!("invalid number `{tok}`"))),
            }
        }

        fn matrix(&mut self) -> Result<Matrix, CaseError> {
            let open = self.pos;
            let (line, _) = self.location(open);
            self.pos += 1; // '['
            let mut rows = Vec::new();
            let mut row = Vec::new();
            loop {
                self.skip_ws(true);
                match self.peek() {
                    None => return Err(self.error(open, "unterminated matrix")),
                    Some(b']') => {
                        self.pos += 1;
                        break;
                    }
                    Some(b';') | Some(b'\n') => {
                        self.pos += 1;
                        if !row.is_empty() {
                            rows.push(std::mem::take(&mut row));
                        }
                    }
                    Some(b',') => self.pos += 1,
                    Some(_) => row.push(self.number()?),
                }
            }
            if !row.is_empty() {
                rows.push(row);
            }
            if let Some(width) = rows.first().map(Vec::len) {
                if let Some(bad) = rows.iter().position(|r| r.len() != width) {
                    return Err(CaseError::Syntax {
                        line,
                        column: 1,
                        message: format!("matrix row {} has {} columns, expected {width}", bad + 1, rows[bad].len()),
                    });
                }
            }
            Ok(Matrix { rows, line })
        }
    }

    pub(super) fn parse(text: &str) -> Result<(CaseModel, Vec<String>), CaseError> {
        let mut sc = Scanner {
            src: text.as_bytes(),
            pos: 0,
        };
        let mut warnings = Vec::new();
        let mut base_mva = None;
        let mut tables: HashMap<String, Matrix> = HashMap::new();

        loop {
            sc.skip_ws(false);
            if sc.peek().is_none() {
                break;
            }
            if !sc.src[sc.pos..].starts_with(b"mpc.") {
                sc.skip_statement();
                continue;
            }
            sc.pos += 4;
            let name = sc.ident();
            sc.skip_ws(true);
            if sc.peek() != Some(b'=') {
                return Err(sc.error(sc.pos, format!("expected `=` after mpc.{name}")));
            }
            sc.pos += 1;
            sc.skip_ws(true);
            match name.as_str() {
                "baseMVA" => {
                    base_mva = Some(sc.number()?);
                    sc.skip_statement();
                }
                "bus" | "gen" | "branch" | "gencost" => {
                    if sc.peek() != Some(b'[') {
                        return Err(sc.error(sc.pos, format!("expected `[` for mpc.{name}")));
                    }
                    let m = sc.matrix()?;
                    tables.insert(name, m);
                    sc.skip_statement();
                }
                other => {
                    warnings.push(format!("ignoring unsupported field mpc.{other}"));
                    sc.skip_statement();
                }
            }
        }

        let base = base_mva.ok_or_else(|| CaseError::Semantic("missing mpc.baseMVA".into()))?;
        let bus_t = tables
            .remove("bus")
            .ok_or_else(|| CaseError::Semantic("missing mpc.bus".into()))?;
        let gen_t = tables.remove("gen").unwrap_or(Matrix { rows: vec![], line: 0 });
        let branch_t = tables.remove("branch").unwrap_or(Matrix { rows: vec![], line: 0 });
        let cost_t = tables.remove("gencost");

        check_width(&bus_t, "bus", BUS_COLS, &mut warnings)?;
        check_width(&gen_t, "gen", GEN_COLS, &mut warnings)?;
        check_width(&branch_t, "branch", BRANCH_COLS, &mut warnings)?;

        let index = bus_lookup(bus_t.rows.iter().map(|r| r[0] as usize))?;
        let lookup = |id: f64, what: &str| {
            index
                .get(&(id as usize))
                .copied()
                .ok_or_else(|| CaseError::Semantic(format!("{what} references unknown bus {id}")))
        };

        let buses = bus_t
            .rows
            .iter()
            .map(|r| {
                let (vmax, vmin) = (r[11], r[12]);
                Bus {
                    id: r[0] as usize,
                    p_demand: r[2] / base,
                    q_demand: r[3] / base,
                    v_min: vmin,
                    v_max: vmax,
                    v_fixed: ((vmax - vmin).abs() < 1e-9).then_some(vmin),
                    g_shunt: r[4] / base,
                    b_shunt: r[5] / base,
                }
            })
            .collect();

        let mut branches = Vec::new();
        for r in &branch_t.rows {
            if r[10] == 0.0 {
                continue;
            }
            if r.len() > 9 && r[9] != 0.0 {
                warnings.push(format!(
                    "branch {}-{}: phase shift {} ignored",
                    r[0], r[1], r[9]
                ));
            }
            branches.push(Branch {
                from_bus: lookup(r[0], "branch")?,
                to_bus: lookup(r[1], "branch")?,
                r: r[2],
                x: r[3],
                b: r[4],
                tap: if r[8] == 0.0 { 1.0 } else { r[8] },
            });
        }

        let costs = match &cost_t {
            Some(t) => {
                if t.rows.len() > gen_t.rows.len() {
                    warnings.push("ignoring reactive-power gencost rows".into());
                }
                if t.rows.len() < gen_t.rows.len() {
                    return Err(CaseError::Semantic(format!(
                        "mpc.gencost has {} rows for {} generators",
                        t.rows.len(),
                        gen_t.rows.len()
                    )));
                }
                t.rows
                    .iter()
                    .take(gen_t.rows.len())
                    .enumerate()
                    .map(|(k, row)| linear_cost(row, k, t.line))
                    .collect::<Result<Vec<_>, _>>()?
            }
            None => {
                if !gen_t.rows.is_empty() {
                    warnings.push("no mpc.gencost; generator costs set to zero".into());
                }
                vec![(0.0, 0.0); gen_t.rows.len()]
            }
        };

        let mut gens = Vec::new();
        for (r, &(c1, c0)) in gen_t.rows.iter().zip(&costs) {
            if r[7] <= 0.0 {
                continue;
            }
            gens.push(Generator {
                bus: lookup(r[0], "generator")?,
                p_min: r[9] / base,
                p_max: r[8] / base,
                q_min: r[4] / base,
                q_max: r[3] / base,
                c1,
                c0,
            });
        }
        let case = CaseModel::new(None, base, buses, branches, gens)?;
        Ok((case, warnings))
    }

    fn check_width(t: &Matrix, name: &str, used: usize, warnings: &mut Vec<String>) -> Result<(), CaseError> {
        let Some(w) = t.rows.first().map(Vec::len) else {
            return Ok(());
        };
        if w < used {
            return Err(CaseError::Syntax {
                line: t.line,
                column: 1,
                message: format!("mpc.{name} needs at least {used} columns, found {w}"),
            });
        }
        if w > used {
            warnings.push(format!("ignoring {} extra column(s) of mpc.{name}", w - used));
        }
        Ok(())
    }

    /// Returns `(c1, c0)` from a polynomial cost row (highest order first).
    fn linear_cost(row: &[f64], k: usize, line: usize) -> Result<(f64, f64), CaseError> {
        if row.len() < 4 {
            return Err(CaseError::Syntax {
                line,
                column: 1,
                message: format!("gencost row {} is too short", k + 1),
            });
        }
        if row[0] != 2.0 {
            return Err(CaseError::Semantic(format!(
                "gencost row {}: only polynomial costs (model 2) are supported",
                k + 1
            )));
        }
        let ncost = row[3] as usize;
        let coeffs = row.get(4..4 + ncost).ok_or_else(|| {
            CaseError::Semantic(format!("gencost row {}: expected {ncost} coefficients", k + 1))
        })?;
        let degree = coeffs.iter().position(|&v| v != 0.0).map_or(0, |p| ncost - 1 - p);
        if degree > 1 {
            return Err(CaseError::Semantic(format!(
                "gencost row {}: polynomial of degree {degree} not supported (linear costs only)",
                k + 1
            )));
        }
        let c0 = coeffs.last().copied().unwrap_or(0.0);
        let c1 = if ncost >= 2 { coeffs[ncost - 2] } else { 0.0 };
        Ok((c1, c0))
    }
}

// ---------------------------------------------------------------------------
// Admittance

/// Bus admittance matrix from branch π-models and bus shunts.
///
/// With series admittance `y = 1/(r + jx)`, charging `b` and off-nominal
/// tap `t` on the from side: `Y_ff += (y + jb/2)/t²`, `Y_tt += y + jb/2`,
/// `Y_ft = Y_tf -= y/t`. The result is complex symmetric.
pub fn build_admittance(case: &CaseModel) -> Result<CMatrix, CaseError> {
    let n = case.n();
    let mut y = CMatrix::zeros(n, n);
    for (k, br) in case.branches.iter().enumerate() {
        let z = c(br.r, br.x);
        if z.norm() == 0.0 {
            return Err(CaseError::ZeroImpedance {
                index: k,
                from: case.buses[br.from_bus].id,
                to: case.buses[br.to_bus].id,
            });
        }
        let ys = c(1.0, 0.0) / z;
        let half_b = c(0.0, br.b / 2.0);
        let t = br.tap;
        let (f, to) = (br.from_bus, br.to_bus);
        y[(f, f)] += (ys + half_b) / (t * t);
        y[(to, to)] += ys + half_b;
        y[(f, to)] -= ys / t;
        y[(to, f)] -= ys / t;
    }
    for (i, b) in case.buses.iter().enumerate() {
        y[(i, i)] += c(b.g_shunt, b.b_shunt);
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    const ONE_BUS: &str = r#"{
        "base_mva": 1.0,
        "buses": [{"id": 1, "pd": 0.0, "qd": 0.0, "vmin": 0.9, "vmax": 1.1, "vfixed": 1.0}],
        "generators": [{"bus": 1, "pmin": 0, "pmax": 1, "qmin": -1, "qmax": 1, "c1": 1, "c0": 0}]
    }"#;

    const THREE_BUS_M: &str = r#"
function mpc = case3
mpc.version = '2';
mpc.baseMVA = 100;
%% bus data
%	bus_i	type	Pd	Qd	Gs	Bs	area	Vm	Va	baseKV	zone	Vmax	Vmin
mpc.bus = [
	1	3	0	0	0	0	1	1	0	345	1	1.05	1.05;
	2	1	90	30	0	0	1	1	0	345	1	1.1	0.9;
	3	1	100	35	0	10	1	1	0	345	1	1.1	0.9;
];
%	bus	Pg	Qg	Qmax	Qmin	Vg	mBase	status	Pmax	Pmin
mpc.gen = [
	1	0	0	300	-300	1	100	1	250	10;
];
%	fbus	tbus	r	x	b	rateA	rateB	rateC	ratio	angle	status	angmin	angmax
mpc.branch = [
	1	2	0.01	0.085	0.176	250	250	250	0	0	1	-360	360;
	2	3	0.017	0.092	0.158	250	250	250	0	0	1	-360	360;
	1	3	0.0085	0.072	0.149	250	250	250	0.98	0	1	-360	360;
];
mpc.gencost = [
	2	0	0	2	20	5;
];
"#;

    #[test]
    fn minimal_json_case() {
        let case = parse_case(ONE_BUS, CaseFormat::Json).unwrap();
        assert_eq!(case.n(), 1);
        assert_eq!(case.n_g(), 1);
        assert_eq!(case.n_v(), 1);
    }

    #[test]
    fn matpower_table_maps_columns() {
        let (case, warnings) = parse_case_with_warnings(THREE_BUS_M, CaseFormat::Matpower).unwrap();
        assert_eq!(case.n(), 3);
        assert_eq!(case.n_g(), 1);
        assert_eq!(case.branches.len(), 3);
        assert!(warnings.iter().any(|w| w.contains("mpc.version")));
        // bus 1 has vmin == vmax and is therefore voltage-fixed
        assert_eq!(case.buses[0].v_fixed, Some(1.05));
        assert_eq!(case.buses[1].v_fixed, None);
        assert!((case.buses[1].p_demand - 0.9).abs() < 1e-15);
        assert!((case.buses[2].q_demand - 0.35).abs() < 1e-15);
        assert!((case.buses[2].b_shunt - 0.1).abs() < 1e-15);
        let g = &case.generators[0];
        assert!((g.p_max - 2.5).abs() < 1e-15 && (g.p_min - 0.1).abs() < 1e-15);
        assert!((g.q_max - 3.0).abs() < 1e-15 && (g.q_min + 3.0).abs() < 1e-15);
        assert_eq!((g.c1, g.c0), (20.0, 5.0));
        assert_eq!(case.branches[0].tap, 1.0);
        assert_eq!(case.branches[2].tap, 0.98);
        assert_eq!(case.branches[1].from_bus, 1);
        assert_eq!(case.branches[1].to_bus, 2);
    }

    #[test]
    fn matpower_rejects_quadratic_cost() {
        let text = THREE_BUS_M.replace("2\t0\t0\t2\t20\t5;", "2\t0\t0\t3\t0.1\t20\t5;");
        let err = parse_case(&text, CaseFormat::Matpower).unwrap_err();
        assert!(err.to_string().contains("degree 2"), "{err}");
        // a vanishing quadratic coefficient is still linear
        let text = THREE_BUS_M.replace("2\t0\t0\t2\t20\t5;", "2\t0\t0\t3\t0\t20\t5;");
        assert!(parse_case(&text, CaseFormat::Matpower).is_ok());
    }

    #[test]
    fn matpower_syntax_error_has_location() {
        let text = THREE_BUS_M.replace("0.085", "0.0x85");
        match parse_case(&text, CaseFormat::Matpower).unwrap_err() {
            CaseError::Syntax { line, column, .. } => {
                assert_eq!(line, 18);
                assert!(column > 1);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn dangling_branch_reference() {
        let text = r#"{"base_mva": 100, "buses": [
            {"id": 1, "pd": 0, "qd": 0, "vmin": 0.9, "vmax": 1.1},
            {"id": 2, "pd": 0, "qd": 0, "vmin": 0.9, "vmax": 1.1},
            {"id": 3, "pd": 0, "qd": 0, "vmin": 0.9, "vmax": 1.1}],
          "branches": [{"from": 1, "to": 99, "r": 0.01, "x": 0.1}]}"#;
        let err = parse_case(text, CaseFormat::Json).unwrap_err();
        assert!(matches!(err, CaseError::Semantic(ref m) if m.contains("99")));
    }

    #[test]
    fn semantic_errors() {
        let bad_v = ONE_BUS.replace("\"vmin\": 0.9", "\"vmin\": 1.2");
        assert!(matches!(parse_case(&bad_v, CaseFormat::Json), Err(CaseError::Semantic(_))));
        let syntax = ONE_BUS.replace("\"buses\"", "buses");
        assert!(matches!(
            parse_case(&syntax, CaseFormat::Json),
            Err(CaseError::Syntax { line: 3, .. })
        ));
        assert!(matches!(
            "csv".parse::<CaseFormat>(),
            Err(CaseError::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn duplicate_generators_are_merged() {
        let text = r#"{"base_mva": 1, "buses": [{"id": 1, "pd": 0, "qd": 0, "vmin": 0.9, "vmax": 1.1}],
          "generators": [
            {"bus": 1, "pmin": 0, "pmax": 1, "qmin": -1, "qmax": 1, "c1": 10, "c0": 1},
            {"bus": 1, "pmin": 0.5, "pmax": 3, "qmin": -2, "qmax": 2, "c1": 30, "c0": 2}]}"#;
        let case = parse_case(text, CaseFormat::Json).unwrap();
        assert_eq!(case.n_g(), 1);
        let g = &case.generators[0];
        assert_eq!((g.p_min, g.p_max, g.q_min, g.q_max), (0.5, 4.0, -3.0, 3.0));
        assert!((g.c1 - 25.0).abs() < 1e-12);
        assert_eq!(g.c0, 3.0);
    }

    fn two_bus(branches: &str) -> CaseModel {
        let text = format!(
            r#"{{"base_mva": 1, "buses": [
            {{"id": 1, "pd": 0, "qd": 0, "vmin": 0.9, "vmax": 1.1}},
            {{"id": 2, "pd": 0, "qd": 0, "vmin": 0.9, "vmax": 1.1}}],
            "branches": [{branches}]}}"#
        );
        parse_case(&text, CaseFormat::Json).unwrap()
    }

    #[test]
    fn admittance_single_lossless_line() {
        let y = build_admittance(&two_bus(r#"{"from": 1, "to": 2, "r": 0, "x": 0.1}"#)).unwrap();
        let expect = [[c(0.0, -10.0), c(0.0, 10.0)], [c(0.0, 10.0), c(0.0, -10.0)]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((y[(i, j)] - expect[i][j]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn admittance_empty_and_parallel() {
        let y0 = build_admittance(&two_bus("")).unwrap();
        assert!(y0.iter().all(|z| z.norm() == 0.0));
        let line = r#"{"from": 1, "to": 2, "r": 0.02, "x": 0.1, "b": 0.05}"#;
        let y1 = build_admittance(&two_bus(line)).unwrap();
        let y2 = build_admittance(&two_bus(&format!("{line},{line}"))).unwrap();
        assert!((y2 - y1 * c(2.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn admittance_rejects_zero_impedance() {
        let mut case = two_bus(r#"{"from": 1, "to": 2, "r": 0.01, "x": 0.1}"#);
        case.branches[0].r = 0.0;
        case.branches[0].x = 0.0;
        assert!(matches!(build_admittance(&case), Err(CaseError::ZeroImpedance { .. })));
    }

    #[test]
    fn per_unit_normalisation() {
        let mw = r#"{"base_mva": 100, "buses": [
            {"id": 1, "pd": 0, "qd": 0, "vmin": 0.95, "vmax": 1.05, "vfixed": 1.0},
            {"id": 2, "pd": 40, "qd": 12, "vmin": 0.9, "vmax": 1.1, "bs": 5}],
            "branches": [{"from": 1, "to": 2, "r": 0.01, "x": 0.1}],
            "generators": [{"bus": 1, "pmin": 10, "pmax": 200, "qmin": -50, "qmax": 50, "c1": 3, "c0": 0}]}"#;
        let pu = r#"{"base_mva": 1, "buses": [
            {"id": 1, "pd": 0, "qd": 0, "vmin": 0.95, "vmax": 1.05, "vfixed": 1.0},
            {"id": 2, "pd": 0.4, "qd": 0.12, "vmin": 0.9, "vmax": 1.1, "bs": 0.05}],
            "branches": [{"from": 1, "to": 2, "r": 0.01, "x": 0.1}],
            "generators": [{"bus": 1, "pmin": 0.1, "pmax": 2, "qmin": -0.5, "qmax": 0.5, "c1": 3, "c0": 0}]}"#;
        let a = parse_case(mw, CaseFormat::Json).unwrap();
        let b = parse_case(pu, CaseFormat::Json).unwrap();
        assert_eq!(a.branches, b.branches);
        for (x, y) in a.buses.iter().zip(&b.buses) {
            assert!((x.p_demand - y.p_demand).abs() < 1e-15);
            assert!((x.q_demand - y.q_demand).abs() < 1e-15);
            assert!((x.b_shunt - y.b_shunt).abs() < 1e-15);
        }
        let (g, h) = (&a.generators[0], &b.generators[0]);
        assert!((g.p_min - h.p_min).abs() < 1e-15 && (g.q_max - h.q_max).abs() < 1e-15);
        assert!((build_admittance(&a).unwrap() - build_admittance(&b).unwrap()).norm() < 1e-14);
    }
}
