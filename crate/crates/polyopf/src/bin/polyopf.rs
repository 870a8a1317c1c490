//! Command-line front end: solve one case, sweep a parameter, export SDPA
//! text, or dump the clique decomposition.

use std::process::ExitCode;
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};

use polyopf::report::Status;
use polyopf::run::{
    dump_cliques, exit_code, export_sdpa, parse_formulation, render, render_csv, render_json,
    run, Method, OutputFormat, RunConfig, RunError,
};

#[derive(Parser)]
#[command(name = "polyopf", version, about = "Polynomial-programming relaxations of AC optimal power flow")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// Case name from the bundled corpus, or a path to a MATPOWER .m file.
    case: Option<String>,
    /// Parameter override, e.g. --set V2max=1.022 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Polynomial formulation: op2 (lifted, degree 2) or op4 (voltage-only, degree 4).
    #[arg(long)]
    formulation: Option<String>,
    /// Relaxation method: dense, sparse, digs, or lavaei-low.
    #[arg(long)]
    method: Option<String>,
    /// Hierarchy level (≥ 1).
    #[arg(long)]
    level: Option<usize>,
    /// Cut-generation tolerance (digs); accepts `inf`.
    #[arg(long)]
    eps: Option<String>,
    /// Iteration cap (digs loop iterations; lower bound on solver iterations otherwise).
    #[arg(long)]
    max_iter: Option<usize>,
    /// Wall-clock budget in seconds.
    #[arg(long)]
    time_budget: Option<f64>,
    /// Output format: table, json, or csv.
    #[arg(long)]
    output: Option<String>,
    /// Key=value configuration file; command-line flags take precedence.
    #[arg(long)]
    config: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one case through the configured pipeline and print the bound.
    Solve(CommonOpts),
    /// Re-run one case over a list of values for a single override key.
    Sweep {
        #[command(flatten)]
        common: CommonOpts,
        /// Override key to sweep, e.g. V2max.
        #[arg(long)]
        param: String,
        /// Comma-separated values for the swept key.
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
        /// Extra columns as method:formulation:level triples (repeatable).
        #[arg(long = "column", value_name = "METHOD:FORM:LEVEL")]
        columns: Vec<String>,
        /// Parallel cells.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Print the configured relaxation in SDPA sparse format.
    ExportSdpa(CommonOpts),
    /// Print the correlative-sparsity clique decomposition.
    DumpCliques(CommonOpts),
}

fn parse_kv(s: &str) -> Result<(String, String), RunError> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| RunError::Config(format!("expected KEY=VALUE, got `{s}`")))
}

fn parse_eps(s: &str) -> Result<f64, RunError> {
    match s {
        "inf" | "Inf" | "INF" | "infinity" => Ok(f64::INFINITY),
        _ => s
            .parse::<f64>()
            .map_err(|_| RunError::Config(format!("bad eps value `{s}`"))),
    }
}

/// Builds a RunConfig from defaults, then the config file, then flags.
fn build_config(opts: &CommonOpts) -> Result<RunConfig, RunError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &opts.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::Config(format!("cannot read config {path}: {e}")))?;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                RunError::Config(format!("{path}:{}: expected key = value", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim().trim_matches('"'));
            match key {
                "case" => cfg.case = value.to_string(),
                "formulation" => cfg.formulation = parse_formulation(value)?,
                "method" => cfg.method = Method::parse(value)?,
                "level" => {
                    cfg.level = value
                        .parse()
                        .map_err(|_| RunError::Config(format!("bad level `{value}`")))?
                }
                "eps" => cfg.eps = parse_eps(value)?,
                "max_iter" => {
                    cfg.max_iter = value
                        .parse()
                        .map_err(|_| RunError::Config(format!("bad max_iter `{value}`")))?
                }
                "time_budget" => {
                    cfg.time_budget = value
                        .parse()
                        .map_err(|_| RunError::Config(format!("bad time_budget `{value}`")))?
                }
                "output" => cfg.output = OutputFormat::parse(value)?,
                "set" => cfg.overrides.push(parse_kv(value)?),
                other => {
                    return Err(RunError::Config(format!(
                        "{path}:{}: unknown key `{other}`",
                        lineno + 1
                    )))
                }
            }
        }
    }
    if let Some(case) = &opts.case {
        cfg.case = case.clone();
    }
    for s in &opts.set {
        cfg.overrides.push(parse_kv(s)?);
    }
    if let Some(f) = &opts.formulation {
        cfg.formulation = parse_formulation(f)?;
    }
    if let Some(m) = &opts.method {
        cfg.method = Method::parse(m)?;
    }
    if let Some(l) = opts.level {
        cfg.level = l;
    }
    if let Some(e) = &opts.eps {
        cfg.eps = parse_eps(e)?;
    }
    if let Some(mi) = opts.max_iter {
        cfg.max_iter = mi;
    }
    if let Some(tb) = opts.time_budget {
        cfg.time_budget = tb;
    }
    if let Some(o) = &opts.output {
        cfg.output = OutputFormat::parse(o)?;
    }
    Ok(cfg)
}

fn cmd_solve(opts: &CommonOpts) -> Result<i32, RunError> {
    let cfg = build_config(opts)?;
    let out = run(&cfg)?;
    print!("{}", render(&cfg, &out));
    Ok(exit_code(out.report.status))
}

#[derive(Clone)]
struct Column {
    method: Method,
    formulation: polyopf::report::Formulation,
    level: usize,
}

impl Column {
    fn label(&self) -> String {
        format!("{}-{}-{}", self.method.as_str(), self.formulation.as_str(), self.level)
    }
}

fn parse_column(s: &str) -> Result<Column, RunError> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(RunError::Config(format!(
            "bad column `{s}` (expected method:formulation:level)"
        )));
    }
    Ok(Column {
        method: Method::parse(parts[0])?,
        formulation: parse_formulation(parts[1])?,
        level: parts[2]
            .parse()
            .map_err(|_| RunError::Config(format!("bad level in column `{s}`")))?,
    })
}

fn cmd_sweep(
    common: &CommonOpts,
    param: &str,
    values: &[String],
    columns: &[String],
    jobs: usize,
) -> Result<i32, RunError> {
    let base = build_config(common)?;
    let cols: Vec<Column> = if columns.is_empty() {
        vec![Column {
            method: base.method,
            formulation: base.formulation,
            level: base.level,
        }]
    } else {
        columns.iter().map(|c| parse_column(c)).collect::<Result<_, _>>()?
    };

    // One cell per (value, column); run in parallel, render in order.
    let mut cells: Vec<(usize, usize, RunConfig)> = Vec::new();
    for (vi, v) in values.iter().enumerate() {
        for (ci, col) in cols.iter().enumerate() {
            let mut cfg = base.clone();
            cfg.overrides.push((param.to_string(), v.clone()));
            cfg.method = col.method;
            cfg.formulation = col.formulation;
            cfg.level = col.level;
            cells.push((vi, ci, cfg));
        }
    }
    for (_, _, cfg) in &cells {
        cfg.validate()?;
    }

    let results: Mutex<Vec<Option<Result<polyopf::run::RunOutput, String>>>> =
        Mutex::new(vec![None; cells.len()]);
    let next = std::sync::atomic::AtomicUsize::new(0);
    let workers = jobs.max(1).min(cells.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if i >= cells.len() {
                    break;
                }
                let r = run(&cells[i].2).map_err(|e| e.to_string());
                results.lock().unwrap()[i] = Some(r);
            });
        }
    });
    let results = results.into_inner().unwrap();

    let cell = |vi: usize, ci: usize| -> &Option<Result<polyopf::run::RunOutput, String>> {
        &results[vi * cols.len() + ci]
    };
    match base.output {
        OutputFormat::Json => {
            let rows: Vec<serde_json::Value> = values
                .iter()
                .enumerate()
                .map(|(vi, v)| {
                    let mut row = serde_json::Map::new();
                    row.insert(param.to_string(), serde_json::json!(v));
                    for (ci, col) in cols.iter().enumerate() {
                        let entry = match cell(vi, ci) {
                            Some(Ok(out)) => {
                                let (_, _, cfg) = &cells[vi * cols.len() + ci];
                                serde_json::from_str(&render_json(cfg, out)).unwrap()
                            }
                            Some(Err(e)) => serde_json::json!({ "error": e }),
                            None => serde_json::json!(null),
                        };
                        row.insert(col.label(), entry);
                    }
                    serde_json::Value::Object(row)
                })
                .collect();
            let doc = serde_json::json!({
                "schema_version": polyopf::run::JSON_SCHEMA_VERSION,
                "case": base.case,
                "param": param,
                "rows": rows,
            });
            println!("{}", serde_json::to_string_pretty(&doc).unwrap());
        }
        OutputFormat::Csv => {
            let mut header = vec![param.to_string()];
            for col in &cols {
                header.push(format!("{}_bound", col.label()));
                header.push(format!("{}_status", col.label()));
            }
            println!("{}", header.join(","));
            for (vi, v) in values.iter().enumerate() {
                let mut row = vec![v.clone()];
                for ci in 0..cols.len() {
                    match cell(vi, ci) {
                        Some(Ok(out)) => {
                            row.push(format!("{:.6}", out.report.lower_bound));
                            row.push(out.report.status.to_string());
                        }
                        Some(Err(e)) => {
                            row.push(String::new());
                            row.push(format!("error: {e}"));
                        }
                        None => {
                            row.push(String::new());
                            row.push(String::new());
                        }
                    }
                }
                println!("{}", row.join(","));
            }
        }
        OutputFormat::Table => {
            let mut widths = vec![param.len().max(8)];
            for col in &cols {
                widths.push(col.label().len().max(24));
            }
            let mut header = format!("{:>w$}", param, w = widths[0]);
            for (ci, col) in cols.iter().enumerate() {
                header.push_str(&format!("  {:>w$}", col.label(), w = widths[ci + 1]));
            }
            println!("{header}");
            for (vi, v) in values.iter().enumerate() {
                let mut line = format!("{:>w$}", v, w = widths[0]);
                for ci in 0..cols.len() {
                    let text = match cell(vi, ci) {
                        Some(Ok(out)) => {
                            let mark = match out.report.status {
                                Status::GlobalCertified => "*",
                                Status::BoundOnly => "",
                                Status::SolverFailure => "!",
                            };
                            format!("{:.2}{mark}", out.report.lower_bound)
                        }
                        Some(Err(_)) => "FAIL".to_string(),
                        None => String::new(),
                    };
                    line.push_str(&format!("  {:>w$}", text, w = widths[ci + 1]));
                }
                println!("{line}");
            }
            println!("(* = GlobalCertified, ! = SolverFailure, FAIL = error; bounds in $/h)");
        }
    }
    // Sweep succeeds as a whole if every cell ran; per-cell failures are
    // recorded in the table without aborting.
    Ok(0)
}

fn dispatch(cli: &Cli) -> Result<i32, RunError> {
    match &cli.command {
        Command::Solve(opts) => cmd_solve(opts),
        Command::Sweep {
            common,
            param,
            values,
            columns,
            jobs,
        } => cmd_sweep(common, param, values, columns, *jobs),
        Command::ExportSdpa(opts) => {
            let cfg = build_config(opts)?;
            print!("{}", export_sdpa(&cfg)?);
            Ok(0)
        }
        Command::DumpCliques(opts) => {
            let cfg = build_config(opts)?;
            print!("{}", dump_cliques(&cfg)?);
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(RunError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(RunError::Pipeline(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
