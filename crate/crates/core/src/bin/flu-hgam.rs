use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

use flu_hgam::data::{validate_panel, Geography, PanelPolicy};
use flu_hgam::forecast::{Level, QUANTILES};
use flu_hgam::harness::eval::{forecast_origin, score_records, write_sweep, DataBundle, Truth};
use flu_hgam::harness::{
    generate_synthetic, ingest, run_rolling_evaluation, run_tuning_sweep, weekly_dates, HarnessError, RunConfig,
    SyntheticSpec,
};
use flu_hgam::io;

#[derive(Parser)]
#[command(name = "flu-hgam", version, about = "Hierarchical negative-binomial GAM forecasts of daily admissions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic panel, geography and adjacency list.
    Generate(GenerateArgs),
    /// Forecast from the window ending on one date.
    Forecast(ForecastArgs),
    /// Weekly rolling evaluation of the GAM against the ARIMA baseline.
    Evaluate(EvaluateArgs),
    /// Rolling GAM evaluation over a grid of national and group t_d values.
    Sweep(SweepArgs),
    /// Score a forecast CSV against observed counts.
    Score(ScoreArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 42)]
    n_units: usize,
    #[arg(long, default_value_t = 7)]
    n_regions: usize,
    #[arg(long, default_value_t = 119)]
    n_days: usize,
    #[arg(long, default_value_t = 10.0)]
    theta: f64,
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    panel: PathBuf,
    #[arg(long)]
    geo: PathBuf,
    #[arg(long)]
    adj: PathBuf,
    /// Reject panels with missing days instead of zero-filling them.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 63)]
    t_length: usize,
    #[arg(long, default_value_t = 14)]
    horizon: usize,
    #[arg(long, default_value_t = 5.0)]
    td_nat: f64,
    #[arg(long, default_value_t = 5.0)]
    td_grp: f64,
    #[arg(long, default_value_t = 2000)]
    n_samples: usize,
}

impl ModelArgs {
    fn config(&self, forecast_dates: Vec<NaiveDate>, arima_levels: Vec<Level>) -> RunConfig {
        RunConfig {
            t_length: self.t_length,
            horizon: self.horizon,
            t_d_national: self.td_nat,
            t_d_group: self.td_grp,
            forecast_dates,
            taus: QUANTILES.to_vec(),
            seed: self.seed,
            n_samples: self.n_samples,
            arima_levels,
            out_dir: Some(self.out.clone()),
        }
    }
}

#[derive(Args)]
struct ForecastArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Forecast origin (last observed day used); defaults to the panel's last day.
    #[arg(long)]
    date: Option<NaiveDate>,
    /// Levels for the ARIMA baseline; pass an empty string to skip it.
    #[arg(long, value_delimiter = ',', default_value = "unit,region,nation")]
    arima_levels: Vec<String>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Forecast origins; defaults to every feasible weekly origin.
    #[arg(long, value_delimiter = ',')]
    dates: Vec<NaiveDate>,
    #[arg(long, value_delimiter = ',', default_value = "unit,region,nation")]
    arima_levels: Vec<String>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_delimiter = ',')]
    dates: Vec<NaiveDate>,
    #[arg(long, value_delimiter = ',', default_value = "3,5,7")]
    td_nat_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "3,5,7")]
    td_grp_grid: Vec<f64>,
}

#[derive(Args)]
struct ScoreArgs {
    /// Forecast CSV (level,series_id,date,q05,q25,q50,q75,q95).
    #[arg(long)]
    forecasts: PathBuf,
    /// Observed counts in panel layout.
    #[arg(long)]
    panel: PathBuf,
    #[arg(long)]
    geo: PathBuf,
    #[arg(long, default_value = "model")]
    model: String,
    /// Output score CSV.
    #[arg(long)]
    out: PathBuf,
}

fn levels(names: &[String]) -> Result<Vec<Level>, HarnessError> {
    names
        .iter()
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse().map_err(|e: String| HarnessError::InvalidConfig(e)))
        .collect()
}

fn load(args: &DataArgs) -> Result<DataBundle, HarnessError> {
    let policy = PanelPolicy { strict: args.strict, ..Default::default() };
    let bundle = ingest(&args.panel, &args.geo, &args.adj, policy)?;
    for w in &bundle.warnings {
        log::warn!("{w}");
    }
    Ok(bundle)
}

fn origins(bundle: &DataBundle, model: &ModelArgs, dates: &[NaiveDate]) -> Vec<NaiveDate> {
    if dates.is_empty() {
        weekly_dates(&bundle.panel, model.t_length, model.horizon)
    } else {
        dates.to_vec()
    }
}

fn generate(args: &GenerateArgs) -> Result<(), HarnessError> {
    let spec = SyntheticSpec {
        n_units: args.n_units,
        n_regions: args.n_regions,
        n_days: args.n_days,
        theta: args.theta,
        seed: args.seed,
        ..Default::default()
    };
    if spec.n_units == 0 || spec.n_regions == 0 || spec.n_regions > spec.n_units || !(spec.theta > 0.0) {
        return Err(HarnessError::InvalidConfig("need 1 <= n_regions <= n_units and theta > 0".into()));
    }
    let data = generate_synthetic(&spec);
    io::write_panel(&args.out.join("panel.csv"), &data.panel)?;
    io::write_geography(&args.out.join("geo.csv"), data.geo.units())?;
    io::write_adjacency(&args.out.join("adj.csv"), &data.graph.pairs())?;
    Ok(())
}

fn forecast(args: &ForecastArgs) -> Result<(), HarnessError> {
    let bundle = load(&args.data)?;
    let origin = args.date.unwrap_or_else(|| bundle.panel.end());
    let cfg = args.model.config(vec![origin], levels(&args.arima_levels)?);
    let result = forecast_origin(&bundle, &cfg, origin)?;
    let dir = args.model.out.join("forecasts");
    io::write_forecasts(&dir.join(format!("gam_{origin}.csv")), &result.gam)?;
    if !result.arima.is_empty() {
        io::write_forecasts(&dir.join(format!("arima_{origin}.csv")), &result.arima)?;
    }
    Ok(())
}

fn evaluate(args: &EvaluateArgs) -> Result<(), HarnessError> {
    let bundle = load(&args.data)?;
    let dates = origins(&bundle, &args.model, &args.dates);
    run_rolling_evaluation(&bundle, &args.model.config(dates, levels(&args.arima_levels)?))?;
    Ok(())
}

fn sweep(args: &SweepArgs) -> Result<(), HarnessError> {
    let bundle = load(&args.data)?;
    let dates = origins(&bundle, &args.model, &args.dates);
    let cfg = RunConfig { out_dir: None, ..args.model.config(dates, Vec::new()) };
    let rows = run_tuning_sweep(&bundle, &cfg, &args.td_nat_grid, &args.td_grp_grid)?;
    write_sweep(&args.model.out.join("sweep.csv"), &rows)
}

fn score(args: &ScoreArgs) -> Result<(), HarnessError> {
    let records = io::read_forecasts(&args.forecasts)?;
    let rows = io::read_panel(&args.panel)?;
    let panel = validate_panel(&rows, PanelPolicy::default())?.panel;
    let geo = Geography::new(io::read_geography(&args.geo)?)?;
    let orphans: Vec<String> = panel.units().iter().filter(|u| geo.unit_index(u).is_none()).cloned().collect();
    if !orphans.is_empty() {
        return Err(HarnessError::Referential(orphans));
    }
    let reports = score_records(&args.model, &records, &Truth::new(&panel, &geo))?;
    io::write_scores(&args.out, &reports)?;
    Ok(())
}

fn run(cli: &Cli) -> Result<(), HarnessError> {
    match &cli.command {
        Command::Generate(a) => generate(a),
        Command::Forecast(a) => forecast(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Sweep(a) => sweep(a),
        Command::Score(a) => score(a),
    }
}

fn exit(code: i32) -> ExitCode {
    ExitCode::from(code as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return exit(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            exit(e.exit_code())
        }
    }
}
