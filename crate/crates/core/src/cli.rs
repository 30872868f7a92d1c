//! Command-line front end: `fit`, `project`, `simulate`, `backtest` and
//! `cost-report`.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::finance::{parse_salary_scale, SalaryScale};
use crate::ingestion::{build_counts_with, build_reserve, parse_records, parse_reserve};
use crate::model::{fit, FittedModel};
use crate::montecarlo::{
    attach, integer_population, plan, simulate_projection, write_simulation_csv, SimulationConfig,
};
use crate::projection::{distributions_through, expected_populations, group_probabilities, write_projection_csv};
use crate::report::{backtest, cost_report, write_backtest_csv, write_cost_csv, BacktestInput};

#[derive(Debug, Parser)]
#[command(
    name = "popchain",
    version,
    about = "Workforce population projection with category x age x seniority Markov chains"
)]
pub struct Cli {
    /// Worker threads for simulation (default: all cores). Output does not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate a model from a monthly panel and a reserve file.
    Fit(FitArgs),
    /// Exact expected populations for years 0..=N.
    Project(ProjectArgs),
    /// Monte Carlo summaries for years 1..=N.
    Simulate(SimulateArgs),
    /// Fit on the years before a split, compare the later years with the projection.
    Backtest(BacktestArgs),
    /// Expected and simulated salary cost per cell for years 1..=N.
    CostReport(CostReportArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub records: PathBuf,
    #[arg(long)]
    pub reserve: PathBuf,
    /// Model file (JSON).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub years: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10_000)]
    pub iterations: u32,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub years: usize,
    #[command(flatten)]
    pub sim: SimArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write every draw to this binary file.
    #[arg(long)]
    pub raw_draws: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BacktestArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub records: PathBuf,
    #[arg(long)]
    pub reserve: PathBuf,
    /// First held-out calendar year.
    #[arg(long)]
    pub split_year: i32,
    #[arg(long)]
    pub salary_scale: PathBuf,
    #[command(flatten)]
    pub sim: SimArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CostReportArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub salary_scale: PathBuf,
    #[arg(long)]
    pub years: usize,
    #[command(flatten)]
    pub sim: SimArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
pub struct InputFile {
    pub flag: String,
    pub path: String,
    pub sha256: String,
}

/// Provenance of a report. The timestamp comes from `SOURCE_DATE_EPOCH`
/// so that identical runs produce identical bytes.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: Option<String>,
    pub inputs: Vec<InputFile>,
    pub seed: Option<u64>,
    pub iterations: Option<u32>,
    pub years: Option<usize>,
    pub split_year: Option<i32>,
    pub timestamp: Option<String>,
}

impl RunManifest {
    fn new(command: &str) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config: None,
            inputs: Vec::new(),
            seed: None,
            iterations: None,
            years: None,
            split_year: None,
            timestamp: std::env::var("SOURCE_DATE_EPOCH").ok(),
        }
    }

    fn input(&mut self, flag: &str, path: &Path, bytes: &[u8]) {
        if flag == "--config" {
            self.config = Some(path.display().to_string());
        }
        self.inputs.push(InputFile {
            flag: flag.into(),
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(bytes)),
        });
    }

    fn sim(&mut self, s: &SimArgs) {
        self.seed = Some(s.seed);
        self.iterations = Some(s.iterations);
    }

    /// `key: value` lines for CSV comment headers.
    pub fn comment_lines(&self) -> Vec<String> {
        let mut out = vec![format!("tool: {} {}", self.tool, self.version), format!("command: {}", self.command)];
        if let Some(c) = &self.config {
            out.push(format!("config: {c}"));
        }
        for i in &self.inputs {
            out.push(format!("input {}: {} sha256={}", i.flag, i.path, i.sha256));
        }
        if let Some(y) = self.years {
            out.push(format!("years: {y}"));
        }
        if let Some(y) = self.split_year {
            out.push(format!("split_year: {y}"));
        }
        if let Some(s) = self.seed {
            out.push(format!("seed: {s}"));
        }
        if let Some(i) = self.iterations {
            out.push(format!("iterations: {i}"));
        }
        if let Some(t) = &self.timestamp {
            out.push(format!("timestamp: {t}"));
        }
        out
    }
}

fn read_input(flag: &str, path: &Path, manifest: &mut RunManifest) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(format!("{flag} {}", path.display()), e))?;
    manifest.input(flag, path, &bytes);
    Ok(bytes)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(format!("creating {}", path.display()), e))
}

fn load_config(path: &Path, m: &mut RunManifest) -> Result<RunConfig> {
    let bytes = read_input("--config", path, m)?;
    let text = String::from_utf8(bytes).map_err(|_| Error::ConfigParse(format!("{} is not UTF-8", path.display())))?;
    RunConfig::parse(&text)
}

fn load_model(path: &Path, m: &mut RunManifest) -> Result<FittedModel> {
    let bytes = read_input("--model", path, m)?;
    let text = String::from_utf8(bytes).map_err(|_| Error::Model(format!("{} is not UTF-8", path.display())))?;
    FittedModel::from_json(&text)
}

fn load_scale(path: &Path, run: &RunConfig, m: &mut RunManifest) -> Result<SalaryScale> {
    let bytes = read_input("--salary-scale", path, m)?;
    parse_salary_scale(bytes.as_slice(), &run.state_space)
}

fn sim_config(s: &SimArgs) -> SimulationConfig {
    SimulationConfig { iterations: s.iterations, seed: s.seed }
}

pub fn cmd_fit(a: &FitArgs) -> Result<()> {
    let mut m = RunManifest::new("fit");
    let run = load_config(&a.config, &mut m)?;
    let records = parse_records(read_input("--records", &a.records, &mut m)?.as_slice(), &run.state_space)?;
    let reserve = parse_reserve(read_input("--reserve", &a.reserve, &mut m)?.as_slice(), &run.state_space)?;
    let cube = build_reserve(build_counts_with(&records, &run.state_space, run.weighting), &reserve, &run.state_space)?;
    let mut model = fit(&cube, &run.state_space, run.stopping_time.clone())?;
    model.manifest = Some(serde_json::to_value(&m).map_err(|e| Error::Model(e.to_string()))?);
    model.save(&a.out)?;
    log::info!(
        "fitted {} months, population {}, base year {}; {} warnings",
        model.diagnostics.months,
        model.total_population,
        model.base_year,
        model.diagnostics.warnings()
    );
    Ok(())
}

pub fn cmd_project(a: &ProjectArgs) -> Result<()> {
    let mut m = RunManifest::new("project");
    m.years = Some(a.years);
    let model = load_model(&a.model, &mut m)?;
    let mut rows = Vec::new();
    for d in distributions_through(&model, a.years)? {
        let (r, unsplit) = expected_populations(&group_probabilities(&d, &model.config), &model);
        if unsplit > 0 {
            log::warn!("year {}: {unsplit} cells have no characteristic distribution", d.year);
        }
        rows.extend(r);
    }
    let mut lines = m.comment_lines();
    lines.push(format!("base_year: {}", model.base_year));
    lines.push(format!("total_population: {}", model.total_population));
    write_projection_csv(create(&a.out)?, &rows, &model.config, &lines)
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let mut m = RunManifest::new("simulate");
    m.years = Some(a.years);
    m.sim(&a.sim);
    let model = load_model(&a.model, &mut m)?;
    let p = plan(&model, a.years)?;
    let trials = integer_population(model.total_population)?;
    let sim = sim_config(&a.sim);
    let outputs = match &a.raw_draws {
        Some(path) => {
            let mut w = create(path)?;
            let o = simulate_projection(&p.inputs, trials, &sim, Some(&mut w))?;
            w.flush().map_err(|e| Error::io("writing raw draws", e))?;
            o
        }
        None => simulate_projection(&p.inputs, trials, &sim, None)?,
    };
    let mut lines = m.comment_lines();
    lines.push(format!("base_year: {}", model.base_year));
    lines.push(format!("total_population: {trials}"));
    write_simulation_csv(create(&a.out)?, &attach(&p, &outputs), &model.config, &lines)
}

pub fn cmd_backtest(a: &BacktestArgs) -> Result<()> {
    let mut m = RunManifest::new("backtest");
    m.split_year = Some(a.split_year);
    m.sim(&a.sim);
    let run = load_config(&a.config, &mut m)?;
    let records = parse_records(read_input("--records", &a.records, &mut m)?.as_slice(), &run.state_space)?;
    let reserve = parse_reserve(read_input("--reserve", &a.reserve, &mut m)?.as_slice(), &run.state_space)?;
    let scale = load_scale(&a.salary_scale, &run, &mut m)?;
    let input = BacktestInput {
        records: &records,
        reserve: &reserve,
        config: &run.state_space,
        weighting: run.weighting,
        stopping_time: &run.stopping_time,
        finance: &run.finance,
        scale: &scale,
        split_year: a.split_year,
    };
    let sim = sim_config(&a.sim);
    let report = backtest(&input, (a.sim.iterations > 0).then_some(&sim))?;
    for t in report.totals() {
        log::info!(
            "{}: population {:.1} vs {:.1}, cost {:.0} vs {:.0}",
            t.calendar_year,
            t.observed_population,
            t.expected_population,
            t.observed_cost,
            t.expected_cost
        );
    }
    write_backtest_csv(create(&a.out)?, &report.rows, &run.state_space, &m.comment_lines())
}

pub fn cmd_cost_report(a: &CostReportArgs) -> Result<()> {
    let mut m = RunManifest::new("cost-report");
    m.years = Some(a.years);
    m.sim(&a.sim);
    let model = load_model(&a.model, &mut m)?;
    let run = load_config(&a.config, &mut m)?;
    if run.state_space != model.config {
        return Err(Error::Config(vec!["the config's state space differs from the model's".into()]));
    }
    let scale = load_scale(&a.salary_scale, &run, &mut m)?;
    let sim = sim_config(&a.sim);
    let rows = cost_report(&model, &run.finance, &scale, a.years, (a.sim.iterations > 0).then_some(&sim))?;
    let mut lines = m.comment_lines();
    lines.push(format!("base_year: {}", model.base_year));
    write_cost_csv(create(&a.out)?, &rows, &model.config, &lines)
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Project(a) => cmd_project(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Backtest(a) => cmd_backtest(a),
        Command::CostReport(a) => cmd_cost_report(a),
    }
}

/// Parse arguments, run, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().format_timestamp(None).try_init();
    #[cfg(feature = "parallel")]
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not configure {n} threads: {e}");
        }
    }
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
