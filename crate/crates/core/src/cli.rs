//! Command dispatch for the `eshare` binary.
//!
//! Every command reads a scenario file and prints a [`RunReport`], as JSON by
//! default or as a CSV table with `--format csv`. Exit codes: 0 success,
//! 1 usage, file or validation error, 2 infeasible, 3 non-convergence.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::bidding::{self, BiddingConfig};
use crate::brlab::{self, ScanConfig};
use crate::equilibrium;
use crate::market::{self, Scenario};
use crate::scenario::{gen_scenario, GenStyle, ScenarioFile};
use crate::{Error, Result};

/// Directory used by `batch` when `--out-dir` is not given.
pub const OUT_DIR_ENV: &str = "ESHARE_OUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_NO_CONVERGENCE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "eshare", version, about = "Equilibria of networked prosumer energy-sharing markets")]
pub struct Cli {
    #[arg(long, value_enum, global = true, default_value_t = Format::Json)]
    pub format: Format,
    /// Write the report here instead of standard output.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a scenario file and report network facts.
    Validate { scenario: PathBuf },
    /// Clear the market for given bids.
    Clear {
        scenario: PathBuf,
        /// Comma-separated bids, one per prosumer.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
        bids: Vec<f64>,
    },
    /// Equilibrium of the price-regulated mechanism.
    Gne { scenario: PathBuf },
    /// Variational equilibrium of the unregulated game.
    Ve { scenario: PathBuf },
    /// Social optimum and price-taking benchmark.
    Social { scenario: PathBuf },
    /// Self-sufficiency costs.
    Selfsuff { scenario: PathBuf },
    /// Price of anarchy with its instance bound.
    Poa { scenario: PathBuf },
    /// Run the iterative bidding protocol.
    Bid(BidArgs),
    /// Best responses of the unregulated game.
    Brlab(BrlabArgs),
    /// Generate a random radial scenario.
    Gen(GenArgs),
    /// Compute the regulated equilibrium for every scenario in a directory.
    Batch {
        /// Directory scanned for `*.json` scenarios.
        #[arg(long)]
        dir: PathBuf,
        /// Report directory; defaults to `$ESHARE_OUT_DIR`, then `<dir>/reports`.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct BidArgs {
    pub scenario: PathBuf,
    /// Stop when the largest bid change is at most this (default scales with demand).
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    pub max_iter: usize,
    /// Write the per-iteration trace as CSV to this file.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("mode").required(true).args(["prosumer", "classify_2bus", "verify"])))]
pub struct BrlabArgs {
    pub scenario: PathBuf,
    /// Scan this prosumer's cost (1-based) against `--fix-bids`.
    #[arg(long, requires = "fix_bids")]
    pub prosumer: Option<usize>,
    /// Bids of all prosumers, comma-separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub fix_bids: Option<Vec<f64>>,
    /// Closed-form equilibria of the two-bus game.
    #[arg(long = "classify-2bus")]
    pub classify_2bus: bool,
    /// Check whether `--bids` is an equilibrium.
    #[arg(long, requires = "bids")]
    pub verify: bool,
    /// Candidate bids, comma-separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub bids: Option<Vec<f64>>,
    /// Largest accepted cost gain from a unilateral deviation.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Use regulated payments.
    #[arg(long)]
    pub regulated: bool,
    /// Bid interval to scan instead of the automatic one.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true)]
    pub interval: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub seed: u64,
    /// Number of buses, one prosumer each.
    #[arg(long)]
    pub size: usize,
    #[arg(long, default_value_t = 100.0, allow_negative_numbers = true)]
    pub demand_min: f64,
    #[arg(long, default_value_t = 300.0, allow_negative_numbers = true)]
    pub demand_max: f64,
    /// Price sensitivity; chosen above the convergence threshold when omitted.
    #[arg(long)]
    pub a: Option<f64>,
}

/// Machine-readable result of one command.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub command: String,
    /// SHA-256 of the scenario file bytes.
    pub scenario_digest: Option<String>,
    pub results: Value,
    pub residuals: Value,
    pub warnings: Vec<String>,
    pub elapsed_ms: f64,
    #[serde(skip)]
    pub table: Table,
    #[serde(skip)]
    pub exit_code: i32,
}

/// Tabular view used for `--format csv`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    fn per_prosumer(header: &[&str], columns: &[&[f64]]) -> Self {
        let mut table = Table::new(header);
        for i in 0..columns.first().map_or(0, |c| c.len()) {
            let mut row = vec![(i + 1).to_string()];
            row.extend(columns.iter().map(|c| c[i].to_string()));
            table.push(row);
        }
        table
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(&self.header)?;
        for row in &self.rows {
            writer.write_record(row)?;
        }
        let bytes = writer.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

struct Outcome {
    results: Value,
    residuals: Value,
    warnings: Vec<String>,
    table: Table,
    exit_code: i32,
}

impl Outcome {
    fn ok(results: Value, table: Table) -> Self {
        Outcome { results, residuals: Value::Null, warnings: vec![], table, exit_code: EXIT_OK }
    }
}

/// Maps a library error to its process exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Infeasible | Error::MarketInfeasible => EXIT_INFEASIBLE,
        _ => EXIT_USAGE,
    }
}

fn load(path: &Path) -> Result<(Scenario, String)> {
    let bytes = fs::read(path)?;
    let digest = hex::encode(Sha256::digest(&bytes));
    let text = String::from_utf8(bytes).map_err(|e| Error::InvalidScenario(format!("not UTF-8: {e}")))?;
    Ok((ScenarioFile::parse(&text)?.to_scenario()?, digest))
}

fn scenario_path(command: &Command) -> Option<&Path> {
    match command {
        Command::Validate { scenario }
        | Command::Clear { scenario, .. }
        | Command::Gne { scenario }
        | Command::Ve { scenario }
        | Command::Social { scenario }
        | Command::Selfsuff { scenario }
        | Command::Poa { scenario } => Some(scenario),
        Command::Bid(args) => Some(&args.scenario),
        Command::Brlab(args) => Some(&args.scenario),
        Command::Gen(_) | Command::Batch { .. } => None,
    }
}

fn command_name(command: &Command) -> &'static str {
    match command {
        Command::Validate { .. } => "validate",
        Command::Clear { .. } => "clear",
        Command::Gne { .. } => "gne",
        Command::Ve { .. } => "ve",
        Command::Social { .. } => "social",
        Command::Selfsuff { .. } => "selfsuff",
        Command::Poa { .. } => "poa",
        Command::Bid(_) => "bid",
        Command::Brlab(_) => "brlab",
        Command::Gen(_) => "gen",
        Command::Batch { .. } => "batch",
    }
}

/// Executes a parsed command.
pub fn run_command(cli: &Cli) -> Result<RunReport> {
    let start = Instant::now();
    let loaded = scenario_path(&cli.command).map(load).transpose()?;
    let outcome = match (&cli.command, &loaded) {
        (Command::Validate { .. }, Some((s, _))) => validate(s),
        (Command::Clear { bids, .. }, Some((s, _))) => clear(s, bids)?,
        (Command::Gne { .. }, Some((s, _))) => gne(s)?,
        (Command::Ve { .. }, Some((s, _))) => ve(s)?,
        (Command::Social { .. }, Some((s, _))) => social(s)?,
        (Command::Selfsuff { .. }, Some((s, _))) => selfsuff(s),
        (Command::Poa { .. }, Some((s, _))) => poa(s)?,
        (Command::Bid(args), Some((s, _))) => bid(s, args)?,
        (Command::Brlab(args), Some((s, _))) => brlab(s, args)?,
        (Command::Gen(args), _) => gen(args)?,
        (Command::Batch { dir, out_dir }, _) => batch(dir, out_dir.as_deref())?,
        _ => unreachable!("scenario commands always load a scenario"),
    };
    Ok(RunReport {
        command: command_name(&cli.command).to_string(),
        scenario_digest: loaded.map(|(_, d)| d),
        results: outcome.results,
        residuals: outcome.residuals,
        warnings: outcome.warnings,
        elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
        table: outcome.table,
        exit_code: outcome.exit_code,
    })
}

fn validate(s: &Scenario) -> Outcome {
    let net = s.network();
    let results = json!({
        "valid": true,
        "buses": net.bus_count(),
        "lines": net.line_count(),
        "limited_lines": net.limited_lines().count(),
        "slack": net.slack() + 1,
        "radial": net.is_radial(),
        "a": s.a(),
        "a_min": bidding::a_min(s),
    });
    let mut table = Table::new(&["key", "value"]);
    if let Value::Object(map) = &results {
        for (k, v) in map {
            table.push(vec![k.clone(), v.to_string()]);
        }
    }
    Outcome::ok(results, table)
}

fn clear(s: &Scenario, bids: &[f64]) -> Result<Outcome> {
    let out = market::clear_market(s, bids)?;
    let kkt = market::clearing_kkt_residual(s, bids, &out)?;
    let table = Table::per_prosumer(&["i", "lambda", "q"], &[&out.lambda, &out.q]);
    let mut o = Outcome::ok(
        json!({
            "lambda": out.lambda, "q": out.q, "eta": out.eta,
            "alpha_lower": out.alpha_lower, "alpha_upper": out.alpha_upper, "flows": out.flows,
        }),
        table,
    );
    o.residuals = json!({ "kkt": kkt });
    Ok(o)
}

fn gne(s: &Scenario) -> Result<Outcome> {
    let e = equilibrium::improved_gne(s)?;
    let pareto = equilibrium::pareto_check(s, &e);
    let table = Table::per_prosumer(
        &["i", "p", "b", "lambda_r", "q", "cost"],
        &[&e.p_bar, &e.b_bar, &e.lambda_r, &e.q_bar, &e.costs],
    );
    let mut o = Outcome::ok(
        json!({
            "p": e.p_bar, "b": e.b_bar, "lambda_r": e.lambda_r, "q": e.q_bar,
            "kappa": e.kappa, "tau_lower": e.tau_lower, "tau_upper": e.tau_upper,
            "costs": e.costs, "total_disutility": e.total_disutility,
            "net_payment": e.net_payment, "pareto": pareto,
        }),
        table,
    );
    let r = e.residuals;
    o.residuals = json!({
        "central_kkt": r.central_kkt, "reclear_price": r.reclear_price,
        "reclear_quantity": r.reclear_quantity, "price_structure": r.price_structure,
        "net_payment_identity": r.net_payment_identity,
    });
    Ok(o)
}

fn ve(s: &Scenario) -> Result<Outcome> {
    let v = equilibrium::variational_equilibrium(s)?;
    let table = Table::per_prosumer(&["i", "p", "b", "lambda"], &[&v.p_bar, &v.b_bar, &v.lambda]);
    let mut o = Outcome::ok(json!({ "p": v.p_bar, "b": v.b_bar, "lambda": v.lambda }), table);
    o.warnings = v.warnings.iter().map(|w| w.to_string()).collect();
    Ok(o)
}

fn social(s: &Scenario) -> Result<Outcome> {
    let so = equilibrium::social_optimum(s)?;
    let pt = equilibrium::price_taking_equilibrium(s)?;
    let table = Table::per_prosumer(&["i", "p", "cost", "lambda", "b"], &[so.p_tilde(), &so.costs, &pt.lambda_tilde, &pt.b_tilde]);
    let mut o = Outcome::ok(
        json!({
            "p": so.p_tilde(), "costs": so.costs, "total_cost": so.total_cost,
            "kappa": so.dispatch.kappa, "tau_lower": so.dispatch.tau_lower, "tau_upper": so.dispatch.tau_upper,
            "price_taking": { "lambda": pt.lambda_tilde, "b": pt.b_tilde },
        }),
        table,
    );
    o.residuals = json!({ "kkt": so.dispatch.kkt_residual });
    Ok(o)
}

fn selfsuff(s: &Scenario) -> Outcome {
    let ss = equilibrium::self_sufficiency(s);
    let table = Table::per_prosumer(&["i", "cost"], &[&ss.costs]);
    Outcome::ok(json!({ "costs": ss.costs, "total": ss.total }), table)
}

fn poa(s: &Scenario) -> Result<Outcome> {
    let r = equilibrium::poa(s)?;
    let mut table = Table::new(&["poa", "upper_bound", "c1", "c2", "equilibrium_cost", "social_cost"]);
    let bound = r.upper_bound.map_or(String::new(), |v| v.to_string());
    table.push(vec![
        r.poa.to_string(),
        bound,
        r.c1.to_string(),
        r.c2.to_string(),
        r.equilibrium_cost.to_string(),
        r.social_cost.to_string(),
    ]);
    let mut o = Outcome::ok(
        json!({
            "poa": r.poa, "upper_bound": r.upper_bound, "c1": r.c1, "c2": r.c2,
            "equilibrium_cost": r.equilibrium_cost, "social_cost": r.social_cost,
        }),
        table,
    );
    if r.upper_bound.is_none() {
        o.warnings.push("smallest social-optimum cost is not positive; bound undefined".into());
    }
    Ok(o)
}

fn bid(s: &Scenario, args: &BidArgs) -> Result<Outcome> {
    let config = BiddingConfig { epsilon: args.eps, max_iter: args.max_iter, record_trace: true, init: None };
    let run = bidding::run_bidding(s, &config)?;
    let eqm = equilibrium::improved_gne(s).ok();
    let fejer = eqm.as_ref().map(|e| bidding::fejer_check(&run.trace, e));
    if let Some(path) = &args.trace {
        let mut buf = Vec::new();
        bidding::write_trace_csv(&run.trace, eqm.as_ref(), &mut buf)?;
        write_atomic(path, &buf)?;
    }
    let distance = eqm.as_ref().and_then(|e| run.trace.last().map(|it| bidding::distance_to(it, e)));
    let table = Table::per_prosumer(&["i", "lambda", "b", "p"], &[&run.lambda, &run.b, &run.p]);
    let mut o = Outcome::ok(
        json!({
            "termination": run.termination, "iterations": run.iterations, "epsilon": run.epsilon,
            "lambda": run.lambda, "b": run.b, "p": run.p,
        }),
        table,
    );
    o.residuals = json!({
        "last_delta_b": run.last_delta,
        "distance_to_equilibrium": distance,
        "fejer_monotone": fejer.map(|f| f.monotone),
    });
    o.warnings = run.warnings.iter().map(|w| w.to_string()).collect();
    if !run.converged() {
        o.exit_code = EXIT_NO_CONVERGENCE;
    }
    Ok(o)
}

fn one_based(index: usize, size: usize) -> Result<usize> {
    if index == 0 || index > size {
        return Err(Error::InvalidScenario(format!("prosumer {index} outside 1..={size}")));
    }
    Ok(index - 1)
}

fn brlab(s: &Scenario, args: &BrlabArgs) -> Result<Outcome> {
    let mut config = ScanConfig { regulated: args.regulated, ..ScanConfig::default() };
    if let Some(iv) = &args.interval {
        config.interval = Some((iv[0], iv[1]));
    }
    if let Some(index) = args.prosumer {
        let i = one_based(index, s.size())?;
        let bids = args.fix_bids.as_deref().unwrap_or_default();
        let scan = brlab::best_response(s, i, bids, &config)?;
        let mut table = Table::new(&["prosumer", "b", "gamma"]);
        for p in &scan.samples {
            table.push(vec![index.to_string(), p.b.to_string(), p.gamma.to_string()]);
        }
        return Ok(Outcome::ok(
            json!({
                "prosumer": index, "interval": [scan.interval.0, scan.interval.1],
                "current": scan.current(), "best": scan.best, "local_minima": scan.local_minima,
                "samples": scan.samples.len(),
            }),
            table,
        ));
    }
    if args.classify_2bus {
        let (c, limit) = two_bus_parameters(s)?;
        let k = brlab::classify_gne_2bus(c, s.prosumer(0).demand, s.prosumer(1).demand, limit);
        let mut table = Table::new(&["regime", "b1", "b2", "lambda1", "lambda2", "p1", "p2", "segment_lo", "segment_hi"]);
        let seg = |f: fn(&brlab::BidSegment) -> f64| k.segment.as_ref().map_or(String::new(), |s| f(s).to_string());
        table.push(vec![
            serde_json::to_value(k.regime)?.as_str().unwrap_or_default().to_string(),
            k.b[0].to_string(),
            k.b[1].to_string(),
            k.lambda[0].to_string(),
            k.lambda[1].to_string(),
            k.p[0].to_string(),
            k.p[1].to_string(),
            seg(|s| s.lo),
            seg(|s| s.hi),
        ]);
        return Ok(Outcome::ok(serde_json::to_value(&k)?, table));
    }
    let bids = args.bids.as_deref().unwrap_or_default();
    let check = brlab::verify_gne(s, bids, args.tol, &config)?;
    let best_b: Vec<f64> = check.best_responses.iter().map(|p| p.b).collect();
    let best_gamma: Vec<f64> = check.best_responses.iter().map(|p| p.gamma).collect();
    let table = Table::per_prosumer(&["i", "gap", "best_b", "best_gamma"], &[&check.gaps, &best_b, &best_gamma]);
    Ok(Outcome::ok(
        json!({
            "is_gne": check.is_gne, "regulated": args.regulated, "tol": args.tol,
            "gaps": check.gaps, "best_responses": check.best_responses,
        }),
        table,
    ))
}

fn two_bus_parameters(s: &Scenario) -> Result<(f64, f64)> {
    let wrong = |why: &str| Err(Error::WrongTopology(why.to_string()));
    if s.size() != 2 || s.network().line_count() != 1 {
        return wrong("two-bus classification needs 2 buses and 1 line");
    }
    let (p1, p2) = (s.prosumer(0), s.prosumer(1));
    if s.a() != 1.0 || p1.d != 0.0 || p2.d != 0.0 || p1.c != p2.c {
        return wrong("two-bus classification needs a = 1, d = 0 and equal c");
    }
    Ok((p1.c, s.network().limit(0)))
}

fn gen(args: &GenArgs) -> Result<Outcome> {
    let style = GenStyle { demand: (args.demand_min, args.demand_max), a: args.a, ..GenStyle::default() };
    let file = gen_scenario(args.seed, args.size, &style)?;
    Ok(Outcome::ok(serde_json::to_value(&file)?, Table::default()))
}

/// Writes via a temporary sibling file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path.file_name().ok_or_else(|| Error::InvalidScenario(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn batch(dir: &Path, out_dir: Option<&Path>) -> Result<Outcome> {
    let out_dir = match out_dir {
        Some(d) => d.to_path_buf(),
        None => std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| dir.join("reports")),
    };
    fs::create_dir_all(&out_dir)?;
    let mut inputs: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    inputs.sort();
    let rows: Vec<(String, i32, String)> = inputs
        .par_iter()
        .map(|path| {
            let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let cli = Cli { format: Format::Json, out: None, command: Command::Gne { scenario: path.clone() } };
            match run_command(&cli) {
                Ok(report) => {
                    let target = out_dir.join(format!("{stem}.gne.json"));
                    let text = serde_json::to_string_pretty(&report).expect("reports serialize") + "\n";
                    match write_atomic(&target, text.as_bytes()) {
                        Ok(()) => (stem, report.exit_code, target.display().to_string()),
                        Err(e) => (stem, exit_code(&e), e.to_string()),
                    }
                }
                Err(e) => (stem, exit_code(&e), e.to_string()),
            }
        })
        .collect();
    let mut table = Table::new(&["scenario", "exit_code", "detail"]);
    for (name, code, detail) in &rows {
        table.push(vec![name.clone(), code.to_string(), detail.clone()]);
    }
    let failures = rows.iter().filter(|r| r.1 != EXIT_OK).count();
    let mut o = Outcome::ok(
        json!({
            "out_dir": out_dir.display().to_string(),
            "scenarios": rows.iter().map(|(n, c, d)| json!({ "scenario": n, "exit_code": c, "detail": d })).collect::<Vec<_>>(),
            "failures": failures,
        }),
        table,
    );
    if failures > 0 {
        o.exit_code = EXIT_USAGE;
    }
    Ok(o)
}

fn render(cli: &Cli, report: &RunReport) -> Result<String> {
    if matches!(cli.command, Command::Gen(_)) {
        return Ok(serde_json::to_string_pretty(&report.results)? + "\n");
    }
    match cli.format {
        Format::Json => Ok(serde_json::to_string_pretty(report)? + "\n"),
        Format::Csv => report.table.to_csv(),
    }
}

/// Parses `argv`, runs the command and writes its output; returns the exit code.
pub fn main_with_args<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let sink: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = write!(sink, "{}", e.render());
            return code;
        }
    };
    let report = match run_command(&cli) {
        Ok(report) => report,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return exit_code(&e);
        }
    };
    for w in &report.warnings {
        let _ = writeln!(stderr, "warning: {w}");
    }
    let text = match render(&cli, &report) {
        Ok(text) => text,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return EXIT_USAGE;
        }
    };
    let written = match &cli.out {
        Some(path) => write_atomic(path, text.as_bytes()),
        None => stdout.write_all(text.as_bytes()).map_err(Error::from),
    };
    if let Err(e) = written {
        let _ = writeln!(stderr, "error: {e}");
        return EXIT_USAGE;
    }
    report.exit_code
}
