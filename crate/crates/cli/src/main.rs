use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use cfemf::harness::{self, CampaignSpec, GroupKey, Metric, ResultTable};

#[derive(Parser, Debug)]
#[command(name = "cfemf", version, about = "Max-min power control for cell-free massive MIMO under EMF exposure caps")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a campaign at the base point and write results.csv.
    Run(CampaignArgs),
    /// Run the user-count / SAR-cap grid and write results.csv and summary.csv.
    Sweep(CampaignArgs),
    /// Write per-group empirical CDFs of a results table.
    Cdf {
        table: PathBuf,
        #[arg(long, default_value = "rate")]
        metric: String,
        #[arg(long, default_value = "scheme,deployment")]
        group_by: String,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
}

#[derive(Args, Debug)]
struct CampaignArgs {
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    drops: Option<usize>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Record wall-clock solve times (makes the CSV non-reproducible).
    #[arg(long)]
    timing: bool,
}

fn load(args: &CampaignArgs) -> Result<CampaignSpec> {
    let mut spec =
        harness::load_config(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    if let Some(seed) = args.seed {
        spec.master_seed = seed;
    }
    if let Some(drops) = args.drops {
        spec.num_drops = drops;
    }
    spec.record_solve_time |= args.timing;
    spec.validate()?;
    Ok(spec)
}

fn write(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn run(args: &CampaignArgs, sweep: bool) -> Result<()> {
    let mut spec = load(args)?;
    if sweep {
        if spec.sweep_num_users.is_empty() && spec.sweep_sar_cap.is_empty() {
            bail!("sweep needs sweep_num_users or sweep_sar_cap_w_kg in the config");
        }
    } else if !spec.sweep_num_users.is_empty() || !spec.sweep_sar_cap.is_empty() {
        log::warn!("sweep keys ignored by 'run'; use 'sweep'");
        spec.sweep_num_users.clear();
        spec.sweep_sar_cap.clear();
    }
    let out = harness::run_campaign(&spec)?;
    let failures = out.table.rows.iter().filter(|r| r.failed()).count();
    if failures > 0 {
        log::warn!("{failures} rows come from failed solves");
    }
    let path = write(&args.out_dir, "results.csv", &out.table.to_csv())?;
    println!("{} rows -> {}", out.table.len(), path.display());
    if sweep {
        let path = write(&args.out_dir, "summary.csv", &harness::summary_csv(&out.reports))?;
        println!("summary -> {}", path.display());
    }
    Ok(())
}

fn cdf(table: &Path, metric: &str, group_by: &str, out_dir: &Path) -> Result<()> {
    let metric: Metric = metric.parse()?;
    let keys = GroupKey::parse_list(group_by)?;
    let table = ResultTable::read_csv(table).with_context(|| format!("reading {}", table.display()))?;
    if table.is_empty() {
        bail!("results table is empty");
    }
    let paths = harness::emit_cdf(&table, metric, &keys, out_dir)?;
    for p in &paths {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("building thread pool")?;
    }
    match &cli.command {
        Command::Run(args) => run(args, false),
        Command::Sweep(args) => run(args, true),
        Command::Cdf { table, metric, group_by, out_dir } => cdf(table, metric, group_by, out_dir),
    }
}
