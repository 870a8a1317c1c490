//! MATPOWER case-file parsing and the bundled test-case corpus.
//!
//! [`parse_case`] understands the subset of the MATPOWER script format used by
//! every public case archive: `mpc.baseMVA = …;` plus the `bus`, `gen`,
//! `branch` and `gencost` matrix blocks. Columns beyond the ones captured in
//! [`CaseData`] are read and ignored, `%` starts a comment, `;` terminates a
//! row.
//!
//! [`corpus_case`] serves the cases bundled with the crate (compiled in via
//! `include_str!`), optionally redirected to a directory of `.m` files through
//! the `POLYOPF_CASES` environment variable. Parameter sweeps are expressed as
//! [`Override`]s applied on top of a base case rather than as separate files.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use thiserror::Error;

/// Raw rows of a parsed case file, still bus-id addressed and in physical
/// units (MW / MVAr / p.u. on `base_mva`).
#[derive(Debug, Clone, PartialEq)]
pub struct CaseData {
    pub name: String,
    pub base_mva: f64,
    pub bus_rows: Vec<BusRow>,
    pub gen_rows: Vec<GenRow>,
    pub branch_rows: Vec<BranchRow>,
    pub gencost_rows: Vec<GencostRow>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BusRow {
    pub bus_id: usize,
    pub bus_type: i32,
    /// Active demand, MW.
    pub pd: f64,
    /// Reactive demand, MVAr.
    pub qd: f64,
    /// Shunt conductance, MW at V = 1 p.u.
    pub gs: f64,
    /// Shunt susceptance, MVAr at V = 1 p.u.
    pub bs: f64,
    /// Voltage magnitude bounds, p.u.
    pub vmax: f64,
    pub vmin: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenRow {
    pub bus_id: usize,
    pub pmax: f64,
    pub pmin: f64,
    pub qmax: f64,
    pub qmin: f64,
    pub in_service: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchRow {
    pub from_bus: usize,
    pub to_bus: usize,
    /// Series resistance, p.u.
    pub r: f64,
    /// Series reactance, p.u.
    pub x: f64,
    /// Total line-charging susceptance, p.u.
    pub b_total: f64,
    /// Apparent-power flow limit, MVA; 0 means unlimited.
    pub rate_a: f64,
    pub in_service: bool,
}

/// Cost c2·P² + c1·P + c0 with P in MW, value in $/h.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GencostRow {
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
}

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("case file has no `{0}` block")]
    MissingBlock(&'static str),
    #[error("{block} row {row}: expected at least {expected} columns, got {got}")]
    RowArity {
        block: &'static str,
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("{context} references bus {bus} which is not in the bus table")]
    UnknownBus { context: String, bus: usize },
    #[error("cannot parse `{token}` as a number ({block} row {row})")]
    NonNumericToken {
        block: &'static str,
        row: usize,
        token: String,
    },
    #[error("bus {bus}: Vmin {vmin} > Vmax {vmax}")]
    VoltageBounds { bus: usize, vmin: f64, vmax: f64 },
    #[error("generator at bus {bus}: {what} lower bound exceeds upper bound")]
    GenBounds { bus: usize, what: &'static str },
    #[error("branch ({from},{to}) has r = x = 0")]
    DegenerateBranch { from: usize, to: usize },
    #[error("gen table has {gens} in-service rows but gencost has {costs}")]
    GencostMismatch { gens: usize, costs: usize },
    #[error("gencost row {row}: unsupported cost model {model} (only polynomial model 2)")]
    CostModel { row: usize, model: i32 },
    #[error("gencost row {row}: polynomial degree above quadratic")]
    CostDegree { row: usize },
    #[error("duplicate bus id {0}")]
    DuplicateBus(usize),
    #[error("bus {bus} has {count} in-service generators; at most one is supported")]
    MultipleGens { bus: usize, count: usize },
    #[error("unknown case `{0}`")]
    UnknownCase(String),
    #[error("override `{key}` does not apply to case `{case}`")]
    BadOverride { key: String, case: String },
    #[error("cannot read case file: {0}")]
    Io(String),
}

/// One swept parameter applied on top of a bundled case.
#[derive(Debug, Clone, PartialEq)]
pub enum Override {
    /// `V<bus>max` — voltage upper bound at a bus, p.u.
    VMax { bus: usize, value: f64 },
    /// `V<bus>min` — voltage lower bound at a bus, p.u.
    VMin { bus: usize, value: f64 },
    /// `S<from><to>max` — rateA of the branch between two buses, MVA.
    RateA { from: usize, to: usize, value: f64 },
    /// `Q<bus>min` / `Q<bus>max` — reactive limit of the generator at a bus, MVAr.
    QMin { bus: usize, value: f64 },
    QMax { bus: usize, value: f64 },
    /// `P<bus>min` / `P<bus>max` — active limit of the generator at a bus, MW.
    PMin { bus: usize, value: f64 },
    PMax { bus: usize, value: f64 },
    /// `loadscale` — multiply every Pd/Qd by a factor.
    LoadScale(f64),
}

impl Override {
    /// Parses a `key=value` pair such as `V2max=1.022`, `S23max=28.35`,
    /// `Q5min=-20.51` or `loadscale=0.6`. Bus numbers in branch keys are
    /// single-digit (the swept corpus cases have at most 39 buses and all
    /// swept branches sit between single-digit buses).
    pub fn parse(key: &str, value: &str) -> Result<Override, String> {
        let value: f64 = value
            .parse()
            .map_err(|_| format!("`{value}` is not a number"))?;
        let key_lc = key.to_ascii_lowercase();
        if key_lc == "loadscale" {
            return Ok(Override::LoadScale(value));
        }
        let (head, tail) = key_lc.split_at(1);
        let parse_digits = |s: &str| -> Option<Vec<usize>> {
            s.chars()
                .map(|c| c.to_digit(10).map(|d| d as usize))
                .collect()
        };
        let bounds = if let Some(rest) = tail.strip_suffix("max") {
            parse_digits(rest).map(|d| (d, true))
        } else if let Some(rest) = tail.strip_suffix("min") {
            parse_digits(rest).map(|d| (d, false))
        } else {
            None
        };
        let Some((digits, is_max)) = bounds else {
            return Err(format!("unrecognized override key `{key}`"));
        };
        match (head, digits.as_slice(), is_max) {
            ("v", [b], true) => Ok(Override::VMax { bus: *b, value }),
            ("v", [b], false) => Ok(Override::VMin { bus: *b, value }),
            ("q", [b], true) => Ok(Override::QMax { bus: *b, value }),
            ("q", [b], false) => Ok(Override::QMin { bus: *b, value }),
            ("p", [b], true) => Ok(Override::PMax { bus: *b, value }),
            ("p", [b], false) => Ok(Override::PMin { bus: *b, value }),
            ("s", [f, t], true) => Ok(Override::RateA {
                from: *f,
                to: *t,
                value,
            }),
            _ => Err(format!("unrecognized override key `{key}`")),
        }
    }

    fn apply(&self, case: &mut CaseData) -> Result<(), CaseError> {
        let case_name = case.name.clone();
        let missing = |key: String| CaseError::BadOverride {
            key,
            case: case_name.clone(),
        };
        match *self {
            Override::VMax { bus, value } => {
                let row = case
                    .bus_rows
                    .iter_mut()
                    .find(|b| b.bus_id == bus)
                    .ok_or_else(|| missing(format!("V{bus}max")))?;
                row.vmax = value;
            }
            Override::VMin { bus, value } => {
                let row = case
                    .bus_rows
                    .iter_mut()
                    .find(|b| b.bus_id == bus)
                    .ok_or_else(|| missing(format!("V{bus}min")))?;
                row.vmin = value;
            }
            Override::RateA { from, to, value } => {
                let row = case
                    .branch_rows
                    .iter_mut()
                    .find(|br| {
                        (br.from_bus == from && br.to_bus == to)
                            || (br.from_bus == to && br.to_bus == from)
                    })
                    .ok_or_else(|| missing(format!("S{from}{to}max")))?;
                row.rate_a = value;
            }
            Override::QMin { bus, value } => {
                let row = case
                    .gen_rows
                    .iter_mut()
                    .find(|g| g.bus_id == bus)
                    .ok_or_else(|| missing(format!("Q{bus}min")))?;
                row.qmin = value;
            }
            Override::QMax { bus, value } => {
                let row = case
                    .gen_rows
                    .iter_mut()
                    .find(|g| g.bus_id == bus)
                    .ok_or_else(|| missing(format!("Q{bus}max")))?;
                row.qmax = value;
            }
            Override::PMin { bus, value } => {
                let row = case
                    .gen_rows
                    .iter_mut()
                    .find(|g| g.bus_id == bus)
                    .ok_or_else(|| missing(format!("P{bus}min")))?;
                row.pmin = value;
            }
            Override::PMax { bus, value } => {
                let row = case
                    .gen_rows
                    .iter_mut()
                    .find(|g| g.bus_id == bus)
                    .ok_or_else(|| missing(format!("P{bus}max")))?;
                row.pmax = value;
            }
            Override::LoadScale(f) => {
                for b in &mut case.bus_rows {
                    b.pd *= f;
                    b.qd *= f;
                }
            }
        }
        Ok(())
    }
}

/// Names of the bundled cases, in corpus order.
pub const CORPUS: &[&str] = &[
    "WB2", "LMBM3", "WB5", "case9mod", "case14", "case30", "case39",
];

const CORPUS_FILES: &[(&str, &str)] = &[
    ("WB2", include_str!("../cases/WB2.m")),
    ("LMBM3", include_str!("../cases/LMBM3.m")),
    ("WB5", include_str!("../cases/WB5.m")),
    ("case9mod", include_str!("../cases/case9mod.m")),
    ("case14", include_str!("../cases/case14.m")),
    ("case30", include_str!("../cases/case30.m")),
    ("case39", include_str!("../cases/case39.m")),
];

/// Returns a bundled case with overrides applied.
///
/// Lookup order: a file `<name>.m` under `$POLYOPF_CASES` if that variable is
/// set, then the compiled-in corpus. Arbitrary filesystem paths (containing a
/// path separator or `.m` suffix) are read directly.
pub fn corpus_case(name: &str, overrides: &[Override]) -> Result<CaseData, CaseError> {
    let mut case = load_base_case(name)?;
    for o in overrides {
        o.apply(&mut case)?;
    }
    validate(&case)?;
    Ok(case)
}

fn load_base_case(name: &str) -> Result<CaseData, CaseError> {
    if name.contains('/') || name.contains('\\') || name.ends_with(".m") {
        let text = std::fs::read_to_string(name).map_err(|e| CaseError::Io(e.to_string()))?;
        let stem = std::path::Path::new(name)
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or(name);
        return parse_case_named(&text, stem);
    }
    if let Ok(dir) = std::env::var("POLYOPF_CASES") {
        let path = std::path::Path::new(&dir).join(format!("{name}.m"));
        if path.exists() {
            let text =
                std::fs::read_to_string(&path).map_err(|e| CaseError::Io(e.to_string()))?;
            return parse_case_named(&text, name);
        }
    }
    let (_, text) = CORPUS_FILES
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| CaseError::UnknownCase(name.to_string()))?;
    parse_case_named(text, name)
}

/// Parses MATPOWER case text into raw rows and validates the result.
pub fn parse_case(text: &str) -> Result<CaseData, CaseError> {
    parse_case_named(text, "case")
}

fn parse_case_named(text: &str, name: &str) -> Result<CaseData, CaseError> {
    let stripped = strip_comments(text);
    let base_mva = parse_scalar(&stripped, "baseMVA").ok_or(CaseError::MissingBlock("baseMVA"))?;
    let bus = parse_block(&stripped, "bus")?;
    let gen = parse_block(&stripped, "gen")?;
    let branch = parse_block(&stripped, "branch")?;
    let gencost = parse_block(&stripped, "gencost")?;

    let mut bus_rows = Vec::with_capacity(bus.len());
    for (i, row) in bus.iter().enumerate() {
        if row.len() < 13 {
            return Err(CaseError::RowArity {
                block: "bus",
                row: i,
                expected: 13,
                got: row.len(),
            });
        }
        bus_rows.push(BusRow {
            bus_id: row[0] as usize,
            bus_type: row[1] as i32,
            pd: row[2],
            qd: row[3],
            gs: row[4],
            bs: row[5],
            vmax: row[11],
            vmin: row[12],
        });
    }

    let mut gen_rows = Vec::with_capacity(gen.len());
    for (i, row) in gen.iter().enumerate() {
        if row.len() < 10 {
            return Err(CaseError::RowArity {
                block: "gen",
                row: i,
                expected: 10,
                got: row.len(),
            });
        }
        gen_rows.push(GenRow {
            bus_id: row[0] as usize,
            qmax: row[3],
            qmin: row[4],
            in_service: row[7] > 0.0,
            pmax: row[8],
            pmin: row[9],
        });
    }

    let mut branch_rows = Vec::with_capacity(branch.len());
    for (i, row) in branch.iter().enumerate() {
        if row.len() < 11 {
            return Err(CaseError::RowArity {
                block: "branch",
                row: i,
                expected: 11,
                got: row.len(),
            });
        }
        branch_rows.push(BranchRow {
            from_bus: row[0] as usize,
            to_bus: row[1] as usize,
            r: row[2],
            x: row[3],
            b_total: row[4],
            rate_a: row[5],
            in_service: row[10] > 0.0,
        });
    }

    let mut gencost_rows = Vec::with_capacity(gencost.len());
    for (i, row) in gencost.iter().enumerate() {
        if row.len() < 4 {
            return Err(CaseError::RowArity {
                block: "gencost",
                row: i,
                expected: 4,
                got: row.len(),
            });
        }
        let model = row[0] as i32;
        if model != 2 {
            return Err(CaseError::CostModel { row: i, model });
        }
        let ncoef = row[3] as usize;
        if row.len() < 4 + ncoef {
            return Err(CaseError::RowArity {
                block: "gencost",
                row: i,
                expected: 4 + ncoef,
                got: row.len(),
            });
        }
        if ncoef > 3 {
            // Leading higher-degree coefficients must be exactly zero.
            if row[4..4 + ncoef - 3].iter().any(|&c| c != 0.0) {
                return Err(CaseError::CostDegree { row: i });
            }
        }
        let coefs = &row[4 + ncoef.saturating_sub(3)..4 + ncoef];
        let mut c = [0.0; 3];
        c[3 - coefs.len()..].copy_from_slice(coefs);
        gencost_rows.push(GencostRow {
            c2: c[0],
            c1: c[1],
            c0: c[2],
        });
    }

    let case = CaseData {
        name: name.to_string(),
        base_mva,
        bus_rows,
        gen_rows,
        branch_rows,
        gencost_rows,
    };
    validate(&case)?;
    Ok(case)
}

fn validate(case: &CaseData) -> Result<(), CaseError> {
    let mut seen = BTreeSet::new();
    for b in &case.bus_rows {
        if !seen.insert(b.bus_id) {
            return Err(CaseError::DuplicateBus(b.bus_id));
        }
        if b.vmin > b.vmax {
            return Err(CaseError::VoltageBounds {
                bus: b.bus_id,
                vmin: b.vmin,
                vmax: b.vmax,
            });
        }
    }
    let mut gen_buses = BTreeSet::new();
    for g in case.gen_rows.iter().filter(|g| g.in_service) {
        if !seen.contains(&g.bus_id) {
            return Err(CaseError::UnknownBus {
                context: "gen row".into(),
                bus: g.bus_id,
            });
        }
        if !gen_buses.insert(g.bus_id) {
            return Err(CaseError::MultipleGens {
                bus: g.bus_id,
                count: 2,
            });
        }
        if g.pmin > g.pmax {
            return Err(CaseError::GenBounds {
                bus: g.bus_id,
                what: "P",
            });
        }
        if g.qmin > g.qmax {
            return Err(CaseError::GenBounds {
                bus: g.bus_id,
                what: "Q",
            });
        }
    }
    for br in case.branch_rows.iter().filter(|br| br.in_service) {
        for bus in [br.from_bus, br.to_bus] {
            if !seen.contains(&bus) {
                return Err(CaseError::UnknownBus {
                    context: format!("branch ({},{})", br.from_bus, br.to_bus),
                    bus,
                });
            }
        }
        if br.r == 0.0 && br.x == 0.0 {
            return Err(CaseError::DegenerateBranch {
                from: br.from_bus,
                to: br.to_bus,
            });
        }
    }
    if case.gen_rows.len() != case.gencost_rows.len() {
        return Err(CaseError::GencostMismatch {
            gens: case.gen_rows.len(),
            costs: case.gencost_rows.len(),
        });
    }
    Ok(())
}

/// Renders CaseData back to MATPOWER text. `parse_case(serialize(c))` equals
/// `c` field-for-field; numbers are printed with 17 significant digits so the
/// round-trip is bit-exact.
pub fn serialize(case: &CaseData) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "function mpc = {}", case.name);
    let _ = writeln!(out, "mpc.version = '2';");
    let _ = writeln!(out, "mpc.baseMVA = {};", fmt(case.base_mva));
    let _ = writeln!(out, "mpc.bus = [");
    for b in &case.bus_rows {
        let _ = writeln!(
            out,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t1\t1\t0\t0\t1\t{}\t{};",
            b.bus_id,
            b.bus_type,
            fmt(b.pd),
            fmt(b.qd),
            fmt(b.gs),
            fmt(b.bs),
            fmt(b.vmax),
            fmt(b.vmin)
        );
    }
    let _ = writeln!(out, "];");
    let _ = writeln!(out, "mpc.gen = [");
    for g in &case.gen_rows {
        let _ = writeln!(
            out,
            "\t{}\t0\t0\t{}\t{}\t1\t0\t{}\t{}\t{};",
            g.bus_id,
            fmt(g.qmax),
            fmt(g.qmin),
            if g.in_service { 1 } else { 0 },
            fmt(g.pmax),
            fmt(g.pmin)
        );
    }
    let _ = writeln!(out, "];");
    let _ = writeln!(out, "mpc.branch = [");
    for br in &case.branch_rows {
        let _ = writeln!(
            out,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t0\t0\t0\t0\t{};",
            br.from_bus,
            br.to_bus,
            fmt(br.r),
            fmt(br.x),
            fmt(br.b_total),
            fmt(br.rate_a),
            if br.in_service { 1 } else { 0 }
        );
    }
    let _ = writeln!(out, "];");
    let _ = writeln!(out, "mpc.gencost = [");
    for c in &case.gencost_rows {
        let _ = writeln!(
            out,
            "\t2\t0\t0\t3\t{}\t{}\t{};",
            fmt(c.c2),
            fmt(c.c1),
            fmt(c.c0)
        );
    }
    let _ = writeln!(out, "];");
    out
}

fn fmt(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:.17e}")
    }
}

fn strip_comments(text: &str) -> String {
    text.lines()
        .map(|line| line.split('%').next().unwrap_or(""))
        .collect::<Vec<_>>()
        .join("\n")
}

fn parse_scalar(text: &str, field: &str) -> Option<f64> {
    let needle = format!("mpc.{field}");
    let pos = text.find(&needle)?;
    let rest = &text[pos + needle.len()..];
    let rest = rest.trim_start().strip_prefix('=')?;
    let end = rest.find(';')?;
    rest[..end].trim().parse().ok()
}

fn parse_block(text: &str, field: &'static str) -> Result<Vec<Vec<f64>>, CaseError> {
    let needle = format!("mpc.{field}");
    let mut pos = 0;
    // Skip matches that are longer field names (e.g. `mpc.gen` inside
    // `mpc.gencost`).
    let start = loop {
        let found = text[pos..].find(&needle).ok_or(CaseError::MissingBlock(field))? + pos;
        let after = text[found + needle.len()..].trim_start();
        if after.starts_with('=') {
            break found + needle.len();
        }
        pos = found + needle.len();
    };
    let rest = text[start..]
        .trim_start()
        .strip_prefix('=')
        .ok_or(CaseError::MissingBlock(field))?;
    let open = rest.find('[').ok_or(CaseError::MissingBlock(field))?;
    let close = rest.find(']').ok_or(CaseError::MissingBlock(field))?;
    let body = &rest[open + 1..close];
    let mut rows = Vec::new();
    for (i, raw) in body.split(';').enumerate() {
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for tok in raw.split([' ', '\t', ',', '\n']).filter(|t| !t.is_empty()) {
            let v: f64 = tok.parse().map_err(|_| CaseError::NonNumericToken {
                block: field,
                row: i,
                token: tok.to_string(),
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CaseError::MissingBlock(field));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\
        function mpc = tiny\n\
        mpc.baseMVA = 100;\n\
        mpc.bus = [\n\
        \t1\t3\t0\t0\t0\t0\t1\t1\t0\t0\t1\t1.05\t0.95;\n\
        \t2\t1\t50\t10\t0\t0\t1\t1\t0\t0\t1\t1.05\t0.95;\n\
        ];\n\
        mpc.gen = [\n\
        \t1\t0\t0\t100\t-100\t1\t0\t1\t200\t0;\n\
        ];\n\
        mpc.branch = [\n\
        \t1\t2\t0.01\t0.1\t0.02\t0\t0\t0\t0\t0\t1;\n\
        ];\n\
        mpc.gencost = [\n\
        \t2\t0\t0\t3\t0.1\t5\t0;\n\
        ];\n";

    #[test]
    fn parses_minimal_two_bus_case() {
        let case = parse_case(MINIMAL).unwrap();
        assert_eq!(case.bus_rows.len(), 2);
        assert_eq!(case.gen_rows.len(), 1);
        assert_eq!(case.branch_rows.len(), 1);
        assert_eq!(case.gencost_rows.len(), 1);
        assert_eq!(case.base_mva, 100.0);
        assert_eq!(case.bus_rows[1].pd, 50.0);
        assert_eq!(case.gencost_rows[0].c1, 5.0);
    }

    #[test]
    fn short_bus_row_is_arity_error() {
        let text = MINIMAL.replace("\t2\t1\t50\t10\t0\t0\t1\t1\t0\t0\t1\t1.05\t0.95;", "\t2\t1\t50\t10\t0\t0\t1\t1\t0\t0\t1\t1.05;");
        match parse_case(&text) {
            Err(CaseError::RowArity { block: "bus", row: 1, expected: 13, got: 12 }) => {}
            other => panic!("expected RowArity, got {other:?}"),
        }
    }

    #[test]
    fn wb2_override_sets_bus2_vmax() {
        for v in [0.976, 1.022, 1.028] {
            let case = corpus_case("WB2", &[Override::VMax { bus: 2, value: v }]).unwrap();
            assert_eq!(case.bus_rows[1].vmax, v);
        }
    }

    #[test]
    fn lmbm3_override_sets_branch_rate() {
        let case = corpus_case("LMBM3", &[Override::RateA { from: 2, to: 3, value: 53.60 }]).unwrap();
        let br = case
            .branch_rows
            .iter()
            .find(|b| (b.from_bus, b.to_bus) == (3, 2) || (b.from_bus, b.to_bus) == (2, 3))
            .unwrap();
        assert_eq!(br.rate_a, 53.60);
    }

    #[test]
    fn wb5_override_sets_gen_qmin() {
        let case = corpus_case("WB5", &[Override::QMin { bus: 5, value: -20.51 }]).unwrap();
        let g = case.gen_rows.iter().find(|g| g.bus_id == 5).unwrap();
        assert_eq!(g.qmin, -20.51);
    }

    #[test]
    fn override_key_parsing() {
        assert_eq!(
            Override::parse("V2max", "1.022").unwrap(),
            Override::VMax { bus: 2, value: 1.022 }
        );
        assert_eq!(
            Override::parse("S23max", "28.35").unwrap(),
            Override::RateA { from: 2, to: 3, value: 28.35 }
        );
        assert_eq!(
            Override::parse("Q5min", "-20.51").unwrap(),
            Override::QMin { bus: 5, value: -20.51 }
        );
        assert!(Override::parse("bogus", "1").is_err());
        assert!(Override::parse("V2max", "abc").is_err());
    }

    #[test]
    fn corpus_round_trips() {
        for name in CORPUS {
            let case = corpus_case(name, &[]).unwrap();
            let text = serialize(&case);
            let reparsed = parse_case_named(&text, name).unwrap();
            assert_eq!(case, reparsed, "round-trip mismatch for {name}");
        }
    }

    #[test]
    fn unknown_case_is_error() {
        assert!(matches!(
            corpus_case("case5000", &[]),
            Err(CaseError::UnknownCase(_))
        ));
    }

    #[test]
    fn parse_never_panics_on_garbage() {
        for garbage in [
            "",
            "mpc.baseMVA = ;",
            "mpc.bus = [1 2 3];",
            "function mpc = x\nmpc.baseMVA = 100;\nmpc.bus = [1;",
            "\u{0}\u{1}\u{2}",
            MINIMAL.trim_end_matches(";\n];\n"),
        ] {
            let _ = parse_case(garbage);
        }
    }
}
