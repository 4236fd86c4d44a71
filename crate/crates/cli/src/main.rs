use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use log::info;

use semibvm::harness::{
    emit_report, render_report, reproduce_table, run_experiment, ExperimentConfig, Model, PriorSetup,
    ReportFormat, TableConfig,
};
use semibvm::summaries::summarize;
use semibvm::{fit_gplm_logistic, fit_plm, Dataset, McmcConfig, PriorConfig};

#[derive(Parser)]
#[command(name = "semibvm", version, about = "Semiparametric Bayesian partially linear models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a replicate study for one model, prior setup and sample size.
    Simulate(SimulateArgs),
    /// Fit one dataset and write the posterior draws.
    Fit(FitArgs),
    /// Regenerate a reference table (1: M1/M2, 2: M3/M4).
    ReproduceTable(TableArgs),
}

#[derive(clap::Args)]
struct SimulateArgs {
    /// TOML file with experiment settings; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<Model>,
    #[arg(long)]
    prior: Option<PriorSetup>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
    /// Directory for report.csv and report.md.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct FitArgs {
    /// CSV with header y,u1..up,v1..vd.
    #[arg(long)]
    data: PathBuf,
    /// JSON prior configuration.
    #[arg(long)]
    prior_config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    iterations: usize,
    #[arg(long, default_value_t = 5_000)]
    burn_in: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Treat y as binary and use the logistic sampler.
    #[arg(long)]
    logistic: bool,
}

#[derive(clap::Args)]
struct TableArgs {
    #[arg(long)]
    table: u8,
    /// 100 replicates of 10000 iterations instead of 50 of 4000.
    #[arg(long)]
    paper_scale: bool,
    /// TOML file with table settings; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
    /// Directory for table<N>.csv and table<N>.md.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => read_toml::<ExperimentConfig>(path)?,
        None => {
            let (Some(model), Some(prior), Some(n)) = (args.model, args.prior, args.n) else {
                bail!("--model, --prior and --n are required without --config");
            };
            ExperimentConfig::new(model, prior, n, 50, McmcConfig::default())
        }
    };
    if let Some(m) = args.model {
        cfg.model = m;
    }
    if let Some(p) = args.prior {
        cfg.prior_setup = p;
    }
    if let Some(n) = args.n {
        cfg.n = n;
    }
    if let Some(r) = args.replicates {
        cfg.replicates = r;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(i) = args.iterations {
        cfg.mcmc.iterations = i;
    }
    if let Some(b) = args.burn_in {
        cfg.mcmc.burn_in = b;
    }
    if args.threads.is_some() {
        cfg.threads = args.threads;
    }
    if args.out.is_some() {
        cfg.output_dir = args.out;
    }
    info!("running {} {} n={} x{}", cfg.model, cfg.prior_setup, cfg.n, cfg.replicates);
    let report = run_experiment(&cfg)?;
    print!("{}", render_report(&[report], ReportFormat::Markdown)?);
    Ok(())
}

fn fit(args: FitArgs) -> Result<()> {
    let data = Dataset::from_csv_path(&args.data)?;
    let text = std::fs::read_to_string(&args.prior_config)
        .with_context(|| format!("reading {}", args.prior_config.display()))?;
    let prior_cfg: PriorConfig = serde_json::from_str(&text).context("parsing prior configuration")?;
    let prior = prior_cfg.build(&data)?;
    let mcmc = McmcConfig {
        iterations: args.iterations,
        burn_in: args.burn_in,
        seed: args.seed,
        ..McmcConfig::default()
    };
    let trace = if args.logistic {
        fit_gplm_logistic(&data, &prior, &mcmc)?
    } else {
        fit_plm(&data, &prior, &mcmc)?
    };
    let file = File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    trace.write_csv(BufWriter::new(file))?;
    let summary = summarize(&trace, &[])?;
    for s in 0..trace.p() {
        let (lo, hi) = summary.ci95[s];
        println!(
            "theta{}: median {:.4}  95% [{:.4}, {:.4}]  se {:.4}",
            s + 1,
            summary.median[s],
            lo,
            hi,
            summary.se[s]
        );
    }
    println!("inverse bandwidth acceptance {:.3}", trace.accept_rate_a);
    Ok(())
}

fn table(args: TableArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => read_toml::<TableConfig>(path)?,
        None => TableConfig::new(args.table, args.paper_scale, 0),
    };
    cfg.table = args.table;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(r) = args.replicates {
        cfg.replicates = r;
    }
    if args.threads.is_some() {
        cfg.threads = args.threads;
    }
    let reports = reproduce_table(&cfg)?;
    std::fs::create_dir_all(&args.out)?;
    emit_report(&reports, ReportFormat::Csv, &args.out.join(format!("table{}.csv", cfg.table)))?;
    emit_report(&reports, ReportFormat::Markdown, &args.out.join(format!("table{}.md", cfg.table)))?;
    print!("{}", render_report(&reports, ReportFormat::Markdown)?);
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::ReproduceTable(a) => table(a),
    }
}
