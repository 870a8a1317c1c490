//! End-to-end pipeline plumbing shared by the CLI and the C API: run
//! configuration, phase timings, and renderers for table/JSON/CSV output.

use std::time::Instant;

use serde_json::json;
use thiserror::Error;

use crate::case_io::{corpus_case, Override};
use crate::digs::{digs_loop, DigsOptions};
use crate::network::{build_network, build_opf_matrices};
use crate::polyprog::{build_op2, build_op4, PolyProgram};
use crate::relax::chordal::{build_csp, chordal_cliques};
use crate::relax::dense::{build_lasserre, build_lavaei_low_dual};
use crate::relax::sparse::{build_sparse_lasserre, extract_solution};
use crate::report::{BoundReport, Formulation, Status};
use crate::sdp::{solve, SdpOptions, SdpStatus};

pub const JSON_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Dense,
    Sparse,
    Digs,
    LavaeiLow,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Dense => "dense",
            Method::Sparse => "sparse",
            Method::Digs => "digs",
            Method::LavaeiLow => "lavaei-low",
        }
    }

    pub fn parse(s: &str) -> Result<Method, RunError> {
        match s {
            "dense" => Ok(Method::Dense),
            "sparse" => Ok(Method::Sparse),
            "digs" => Ok(Method::Digs),
            "lavaei-low" => Ok(Method::LavaeiLow),
            other => Err(RunError::Config(format!(
                "unknown method `{other}` (expected dense, sparse, digs, or lavaei-low)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Table,
    Json,
    Csv,
}

impl OutputFormat {
    pub fn parse(s: &str) -> Result<OutputFormat, RunError> {
        match s {
            "table" => Ok(OutputFormat::Table),
            "json" => Ok(OutputFormat::Json),
            "csv" => Ok(OutputFormat::Csv),
            other => Err(RunError::Config(format!(
                "unknown output format `{other}` (expected table, json, or csv)"
            ))),
        }
    }
}

pub fn parse_formulation(s: &str) -> Result<Formulation, RunError> {
    match s {
        "op2" => Ok(Formulation::Op2),
        "op4" => Ok(Formulation::Op4),
        other => Err(RunError::Config(format!(
            "unknown formulation `{other}` (expected op2 or op4)"
        ))),
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub case: String,
    /// Raw `key=value` override strings, applied in order.
    pub overrides: Vec<(String, String)>,
    pub formulation: Formulation,
    pub method: Method,
    pub level: usize,
    /// Relative cut-generation tolerance (DIGS only); may be infinite.
    pub eps: f64,
    pub max_iter: usize,
    pub time_budget: f64,
    pub output: OutputFormat,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            case: String::new(),
            overrides: Vec::new(),
            formulation: Formulation::Op2,
            method: Method::Sparse,
            level: 1,
            eps: 1e-5,
            max_iter: 30,
            time_budget: 600.0,
            output: OutputFormat::Table,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), RunError> {
        if self.case.is_empty() {
            return Err(RunError::Config("no case specified".into()));
        }
        if self.level < 1 {
            return Err(RunError::Config("level must be ≥ 1".into()));
        }
        if self.method == Method::Digs && self.formulation != Formulation::Op2 {
            return Err(RunError::Config(
                "digs runs on the degree-2 formulation only (use --formulation op2)".into(),
            ));
        }
        if self.method == Method::LavaeiLow
            && (self.formulation != Formulation::Op2 || self.level != 1)
        {
            return Err(RunError::Config(
                "lavaei-low is the first-level dual of the degree-2 formulation \
                 (use --formulation op2 --level 1)"
                    .into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Pipeline(String),
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PhaseTimings {
    pub parse: f64,
    pub build: f64,
    pub solve: f64,
    pub extract: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: BoundReport,
    pub timings: PhaseTimings,
    /// DIGS iteration trace, when the method produces one.
    pub history_csv: Option<String>,
}

fn parse_overrides(raw: &[(String, String)]) -> Result<Vec<Override>, RunError> {
    raw.iter()
        .map(|(k, v)| Override::parse(k, v).map_err(RunError::Config))
        .collect()
}

fn build_program(
    net: &crate::network::PowerNetwork,
    mats: &crate::network::OpfMatrices,
    formulation: Formulation,
) -> PolyProgram {
    match formulation {
        Formulation::Op2 => build_op2(net, mats),
        Formulation::Op4 => build_op4(net, mats),
    }
}

/// Executes the configured pipeline: parse → build → solve → extract.
pub fn run(cfg: &RunConfig) -> Result<RunOutput, RunError> {
    cfg.validate()?;
    let mut timings = PhaseTimings::default();

    let t = Instant::now();
    let ovr = parse_overrides(&cfg.overrides)?;
    let case = corpus_case(&cfg.case, &ovr).map_err(|e| RunError::Config(e.to_string()))?;
    let net = build_network(&case).map_err(|e| RunError::Pipeline(e.to_string()))?;
    let mats = build_opf_matrices(&net);
    timings.parse = t.elapsed().as_secs_f64();

    let opts = SdpOptions {
        max_iter: cfg.max_iter.max(200),
        ..SdpOptions::default()
    };

    match cfg.method {
        Method::Digs => {
            let t = Instant::now();
            let pp = build_op2(&net, &mats);
            timings.build = t.elapsed().as_secs_f64();
            let t = Instant::now();
            let dopts = DigsOptions {
                max_iter: cfg.max_iter,
                eps_rel: cfg.eps,
                time_budget: cfg.time_budget,
            };
            let (report, pool) = digs_loop(&pp, &net, &mats, &dopts);
            timings.solve = t.elapsed().as_secs_f64();
            Ok(RunOutput {
                report,
                timings,
                history_csv: Some(pool.history_csv()),
            })
        }
        Method::LavaeiLow => {
            let t = Instant::now();
            let dual = build_lavaei_low_dual(&net, &mats);
            timings.build = t.elapsed().as_secs_f64();
            let t = Instant::now();
            let sol = solve(&dual.sdp, &opts).map_err(|e| RunError::Pipeline(e.to_string()))?;
            timings.solve = t.elapsed().as_secs_f64();
            let status = match sol.status {
                SdpStatus::Optimal => Status::BoundOnly,
                _ => Status::SolverFailure,
            };
            Ok(RunOutput {
                report: BoundReport {
                    method: "lavaei-low".into(),
                    lower_bound: sol.primal_obj,
                    status,
                    extracted_x: None,
                    rank_gap: f64::NAN,
                    iterations: sol.iterations,
                    wall_time: timings.solve,
                },
                timings,
                history_csv: None,
            })
        }
        Method::Dense | Method::Sparse => {
            let t = Instant::now();
            let pp = build_program(&net, &mats, cfg.formulation);
            let r = cfg.formulation.moment_degree(cfg.level);
            let rel = if cfg.method == Method::Dense {
                build_lasserre(&pp, r)
            } else {
                let g = build_csp(&pp);
                let cd = chordal_cliques(&g, &pp, r);
                build_sparse_lasserre(&pp, r, &cd)
            }
            .map_err(|e| RunError::Pipeline(e.to_string()))?;
            timings.build = t.elapsed().as_secs_f64();
            let t = Instant::now();
            let sol = rel.solve(&opts).map_err(|e| RunError::Pipeline(e.to_string()))?;
            timings.solve = t.elapsed().as_secs_f64();
            let t = Instant::now();
            let name = format!("{}-{}-{}", cfg.method.as_str(), cfg.formulation.as_str(), cfg.level);
            let mut report = extract_solution(&rel, &sol, &net, &mats, &name, timings.solve);
            if sol.status != SdpStatus::Optimal {
                report.status = Status::SolverFailure;
            }
            timings.extract = t.elapsed().as_secs_f64();
            Ok(RunOutput {
                report,
                timings,
                history_csv: None,
            })
        }
    }
}

/// Builds the configured relaxation and returns its SDPA sparse text.
pub fn export_sdpa(cfg: &RunConfig) -> Result<String, RunError> {
    cfg.validate()?;
    let ovr = parse_overrides(&cfg.overrides)?;
    let case = corpus_case(&cfg.case, &ovr).map_err(|e| RunError::Config(e.to_string()))?;
    let net = build_network(&case).map_err(|e| RunError::Pipeline(e.to_string()))?;
    let mats = build_opf_matrices(&net);
    let sdp = match cfg.method {
        Method::LavaeiLow => build_lavaei_low_dual(&net, &mats).sdp,
        Method::Dense | Method::Digs => {
            let pp = build_program(&net, &mats, cfg.formulation);
            let r = cfg.formulation.moment_degree(cfg.level);
            build_lasserre(&pp, r)
                .map_err(|e| RunError::Pipeline(e.to_string()))?
                .sdp
        }
        Method::Sparse => {
            let pp = build_program(&net, &mats, cfg.formulation);
            let r = cfg.formulation.moment_degree(cfg.level);
            let g = build_csp(&pp);
            let cd = chordal_cliques(&g, &pp, r);
            build_sparse_lasserre(&pp, r, &cd)
                .map_err(|e| RunError::Pipeline(e.to_string()))?
                .sdp
        }
    };
    Ok(crate::sdp::sdpa::write_sdpa(&sdp))
}

/// Renders the correlative-sparsity clique decomposition for the configured
/// case and formulation.
pub fn dump_cliques(cfg: &RunConfig) -> Result<String, RunError> {
    cfg.validate()?;
    let ovr = parse_overrides(&cfg.overrides)?;
    let case = corpus_case(&cfg.case, &ovr).map_err(|e| RunError::Config(e.to_string()))?;
    let net = build_network(&case).map_err(|e| RunError::Pipeline(e.to_string()))?;
    let mats = build_opf_matrices(&net);
    let pp = build_program(&net, &mats, cfg.formulation);
    let g = build_csp(&pp);
    let cd = chordal_cliques(&g, &pp, cfg.formulation.moment_degree(cfg.level));
    Ok(cd.dump())
}

pub fn render_json(cfg: &RunConfig, out: &RunOutput) -> String {
    let r = &out.report;
    let v = json!({
        "schema_version": JSON_SCHEMA_VERSION,
        "case": cfg.case,
        "overrides": cfg.overrides.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>(),
        "formulation": cfg.formulation.as_str(),
        "method": cfg.method.as_str(),
        "level": cfg.level,
        "bound": r.lower_bound,
        "status": r.status.to_string(),
        "rank_gap": if r.rank_gap.is_finite() { Some(r.rank_gap) } else { None },
        "iterations": r.iterations,
        "wall_time": r.wall_time,
        "timings": {
            "parse": out.timings.parse,
            "build": out.timings.build,
            "solve": out.timings.solve,
            "extract": out.timings.extract,
        },
        "extracted_x": r.extracted_x,
    });
    serde_json::to_string_pretty(&v).expect("report serializes")
}

pub fn render_table(cfg: &RunConfig, out: &RunOutput) -> String {
    let r = &out.report;
    let mut s = String::new();
    s.push_str(&format!(
        "case        {}{}\n",
        cfg.case,
        if cfg.overrides.is_empty() {
            String::new()
        } else {
            format!(
                "  ({})",
                cfg.overrides
                    .iter()
                    .map(|(k, v)| format!("{k}={v}"))
                    .collect::<Vec<_>>()
                    .join(", ")
            )
        }
    ));
    s.push_str(&format!(
        "method      {} ({}, level {})\n",
        cfg.method.as_str(),
        cfg.formulation.as_str(),
        cfg.level
    ));
    s.push_str(&format!("bound       {:.2} $/h\n", r.lower_bound));
    s.push_str(&format!("status      {}\n", r.status));
    if r.rank_gap.is_finite() {
        s.push_str(&format!("rank_gap    {:.3e}\n", r.rank_gap));
    }
    s.push_str(&format!("iterations  {}\n", r.iterations));
    s.push_str(&format!(
        "time        parse {:.3}s  build {:.3}s  solve {:.3}s  extract {:.3}s\n",
        out.timings.parse, out.timings.build, out.timings.solve, out.timings.extract
    ));
    s
}

pub fn render_csv(cfg: &RunConfig, out: &RunOutput) -> String {
    if let Some(h) = &out.history_csv {
        return h.clone();
    }
    let r = &out.report;
    format!(
        "case,method,formulation,level,bound,status,rank_gap,iterations,wall_time\n\
         {},{},{},{},{:.6},{},{:.6e},{},{:.3}\n",
        cfg.case,
        cfg.method.as_str(),
        cfg.formulation.as_str(),
        cfg.level,
        r.lower_bound,
        r.status,
        r.rank_gap,
        r.iterations,
        r.wall_time
    )
}

pub fn render(cfg: &RunConfig, out: &RunOutput) -> String {
    match cfg.output {
        OutputFormat::Table => render_table(cfg, out),
        OutputFormat::Json => render_json(cfg, out),
        OutputFormat::Csv => render_csv(cfg, out),
    }
}

/// Exit code contract: 0 certified/optimal, 2 bound only, 3 solver failure.
pub fn exit_code(status: Status) -> i32 {
    match status {
        Status::GlobalCertified => 0,
        Status::BoundOnly => 2,
        Status::SolverFailure => 3,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wb2_cfg() -> RunConfig {
        RunConfig {
            case: "WB2".into(),
            overrides: vec![("V2max".into(), "0.976".into())],
            method: Method::Sparse,
            ..Default::default()
        }
    }

    #[test]
    fn digs_requires_op2() {
        let cfg = RunConfig {
            method: Method::Digs,
            formulation: Formulation::Op4,
            ..wb2_cfg()
        };
        assert!(matches!(cfg.validate(), Err(RunError::Config(_))));
    }

    #[test]
    fn table_and_json_agree_on_the_numbers() {
        let cfg = wb2_cfg();
        let out = run(&cfg).unwrap();
        let table = render_table(&cfg, &out);
        let parsed: serde_json::Value = serde_json::from_str(&render_json(&cfg, &out)).unwrap();
        assert_eq!(parsed["schema_version"], JSON_SCHEMA_VERSION);
        let bound = parsed["bound"].as_f64().unwrap();
        assert!((bound - out.report.lower_bound).abs() < 1e-12);
        assert!(table.contains(&format!("{:.2}", out.report.lower_bound)));
        assert_eq!(parsed["status"], out.report.status.to_string());
    }

    #[test]
    fn exit_codes_follow_contract() {
        assert_eq!(exit_code(Status::GlobalCertified), 0);
        assert_eq!(exit_code(Status::BoundOnly), 2);
        assert_eq!(exit_code(Status::SolverFailure), 3);
    }

    #[test]
    fn unknown_case_is_a_config_error() {
        let cfg = RunConfig {
            case: "NOPE42".into(),
            ..Default::default()
        };
        assert!(matches!(run(&cfg), Err(RunError::Config(_))));
    }

    #[test]
    fn export_sdpa_round_trips() {
        let cfg = RunConfig {
            method: Method::Dense,
            ..wb2_cfg()
        };
        let text = export_sdpa(&cfg).unwrap();
        let back = crate::sdp::sdpa::read_sdpa(&text).unwrap();
        assert!(back.num_rows() > 0);
    }

    #[test]
    fn dump_cliques_lists_every_variable() {
        let cfg = wb2_cfg();
        let text = dump_cliques(&cfg).unwrap();
        assert!(text.contains('x') || text.contains('0'), "{text}");
    }
}
