use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use coordex::harness::config::{grids, Preset, RunConfig};
use coordex::harness::report::{self, Series, Window};
use coordex::harness::{plot, run, sweep, Axis};
use coordex::oracle::{self, Instance, Rule};
use coordex::{Error, Rng};

/// Coordinated exploration experiments on the multiplexer task.
#[derive(Parser)]
#[command(name = "coordex", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration for one seed.
    Run(ConfigArgs),
    /// Train every (value, seed) cell along one axis.
    Sweep(SweepArgs),
    /// Compare each learning rule's expected update with the exact gradient.
    Oracle(OracleArgs),
    /// Render learning curves from metrics or aggregated sweep CSVs.
    Plot(PlotArgs),
    /// Average reward per window, per seed and across seeds.
    Report(ReportArgs),
}

/// Config flags. Precedence: defaults < preset < file < COORDEX_* env < flags.
#[derive(Args, Clone)]
struct ConfigArgs {
    /// `desk` or `paper`.
    #[arg(long, env = "COORDEX_PRESET")]
    preset: Option<String>,
    /// `key = value` file starting with `# coordex-config v1`.
    #[arg(long, env = "COORDEX_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, env = "COORDEX_ALGORITHM")]
    algorithm: Option<String>,
    #[arg(long, env = "COORDEX_CENTERING")]
    centering: Option<String>,
    #[arg(long, env = "COORDEX_K")]
    k: Option<String>,
    #[arg(long, env = "COORDEX_N_HIDDEN")]
    n_hidden: Option<String>,
    #[arg(long, env = "COORDEX_GIBBS_STEPS")]
    gibbs_steps: Option<String>,
    #[arg(long, env = "COORDEX_C")]
    c: Option<String>,
    #[arg(long, env = "COORDEX_LAMBDA")]
    lambda: Option<String>,
    #[arg(long, env = "COORDEX_ALPHA")]
    alpha: Option<String>,
    #[arg(long, env = "COORDEX_BATCH")]
    batch: Option<String>,
    #[arg(long, env = "COORDEX_EPISODES")]
    episodes: Option<String>,
    #[arg(long, env = "COORDEX_SEED")]
    seed: Option<String>,
    #[arg(long, env = "COORDEX_SEEDS")]
    seeds: Option<String>,
    #[arg(long, env = "COORDEX_CRITIC_HIDDEN")]
    critic_hidden: Option<String>,
    #[arg(long, env = "COORDEX_CRITIC_ALPHA")]
    critic_alpha: Option<String>,
    #[arg(long, env = "COORDEX_UPDATE_RECURRENT_DIAGONAL")]
    update_recurrent_diagonal: Option<String>,
    #[arg(long, env = "COORDEX_SCORE_INITIAL")]
    score_initial: Option<String>,
    #[arg(long, env = "COORDEX_STE_BACKWARD")]
    ste_backward: Option<String>,
    #[arg(long, env = "COORDEX_MA_WINDOW")]
    ma_window: Option<String>,
    #[arg(long, env = "COORDEX_LOG_EVERY")]
    log_every: Option<String>,
    #[arg(long, env = "COORDEX_TIMING")]
    timing: Option<String>,
    #[arg(long, env = "COORDEX_OUT")]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn resolve(&self) -> coordex::Result<RunConfig> {
        let mut cfg = match &self.preset {
            Some(p) => RunConfig::preset(p.parse::<Preset>()?),
            None => RunConfig::default(),
        };
        if let Some(path) = &self.config {
            cfg.apply_file(path).map_err(|e| match e {
                Error::Io(io) => Error::Config(format!("cannot read {}: {io}", path.display())),
                other => other,
            })?;
        }
        let flags = [
            ("algorithm", &self.algorithm),
            ("centering", &self.centering),
            ("k", &self.k),
            ("n_hidden", &self.n_hidden),
            ("gibbs_steps", &self.gibbs_steps),
            ("c", &self.c),
            ("lambda", &self.lambda),
            ("alpha", &self.alpha),
            ("batch", &self.batch),
            ("episodes", &self.episodes),
            ("seed", &self.seed),
            ("seeds", &self.seeds),
            ("critic_hidden", &self.critic_hidden),
            ("critic_alpha", &self.critic_alpha),
            ("update_recurrent_diagonal", &self.update_recurrent_diagonal),
            ("score_initial", &self.score_initial),
            ("ste_backward", &self.ste_backward),
            ("ma_window", &self.ma_window),
            ("log_every", &self.log_every),
            ("timing", &self.timing),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// `c`, `t`, `lambda` or `n`.
    #[arg(long)]
    axis: String,
    /// Comma-separated values; defaults to the published grid of the axis.
    #[arg(long)]
    values: Option<String>,
    /// Windows for the summary CSV.
    #[arg(long, default_value = "first-quarter,last-quarter,all")]
    windows: String,
}

#[derive(Args)]
struct OracleArgs {
    /// Comma-separated rule ids; defaults to every unbiased rule.
    #[arg(long)]
    rules: Option<String>,
    #[arg(long, default_value_t = 10)]
    instances: usize,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 3.0)]
    z_limit: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// Metrics or aggregated sweep CSVs.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Metrics CSVs written with `log_every = 1`.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, default_value = "first-quarter,last-quarter,all")]
    windows: String,
    /// CSV destination; stdout when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn parse_values(spec: &str) -> coordex::Result<Vec<f64>> {
    spec.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| Error::Config(format!("bad sweep value `{v}`"))))
        .collect()
}

fn default_grid(axis: Axis) -> Vec<f64> {
    match axis {
        Axis::C => grids::C.to_vec(),
        Axis::Lambda => grids::LAMBDA.to_vec(),
        Axis::N => grids::N.iter().map(|&n| n as f64).collect(),
        Axis::T => vec![1.0, 2.0, 5.0, 10.0, 25.0],
    }
}

fn sink(path: &Option<PathBuf>) -> coordex::Result<Box<dyn std::io::Write>> {
    Ok(match path {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn cmd_run(args: &ConfigArgs) -> coordex::Result<()> {
    let cfg = args.resolve()?;
    let out = run(&cfg)?;
    let (metrics, params) = out.save(&cfg.out)?;
    let summary = report::report_windows(
        &[Series { config_id: &cfg.config_id(), seed: cfg.seed, rewards: &out.rewards }],
        &report::default_windows(),
    )?;
    for s in &summary {
        println!("{} {}: {:.4}", s.config_id, s.label, s.mean);
    }
    println!("wrote {} and {}", metrics.display(), params.display());
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> coordex::Result<()> {
    let cfg = args.config.resolve()?;
    let axis: Axis = args.axis.parse()?;
    let values = match &args.values {
        Some(v) => parse_values(v)?,
        None => default_grid(axis),
    };
    let windows = Window::parse_list(&args.windows)?;
    let sw = sweep(&cfg, axis, &values)?;
    std::fs::create_dir_all(&cfg.out)?;
    let stem = format!("sweep_{axis}_{}", cfg.config_id());
    let agg = cfg.out.join(format!("{stem}.csv"));
    sw.write_aggregate(std::io::BufWriter::new(std::fs::File::create(&agg)?))?;
    let ids: Vec<String> = sw.cells.iter().map(|c| c.output.config.config_id()).collect();
    let series: Vec<Series> = sw
        .cells
        .iter()
        .zip(&ids)
        .map(|(c, id)| Series { config_id: id, seed: c.output.config.seed, rewards: &c.output.rewards })
        .collect();
    let summary = report::report_windows(&series, &windows)?;
    let sum_path = cfg.out.join(format!("{stem}_windows.csv"));
    report::write_summary(&summary, std::io::BufWriter::new(std::fs::File::create(&sum_path)?))?;
    for s in &summary {
        println!("{} {}: {:.4} ± {:.4}", s.config_id, s.label, s.mean, s.std);
    }
    println!("wrote {} and {}", agg.display(), sum_path.display());
    Ok(())
}

fn cmd_oracle(args: &OracleArgs) -> coordex::Result<()> {
    let rules: Vec<Rule> = match &args.rules {
        Some(list) => list.split(',').map(|r| Rule::parse(r.trim())).collect::<coordex::Result<_>>()?,
        None => vec![
            Rule::Reinforce,
            Rule::ReinforceBaseline,
            Rule::ReinforceRewardCentered,
            Rule::BoltzmannNegStats,
            Rule::Boltzmann,
            Rule::parse("recurrent")?,
        ],
    };
    let mut w = csv::Writer::from_writer(sink(&args.out)?);
    w.write_record(["rule", "instance", "n_hidden", "max_z", "worst_entry", "entries", "failures"])?;
    let mut rng = Rng::new(args.seed);
    for rule in &rules {
        for inst_id in 0..args.instances {
            let n = 1 + inst_id % 3;
            let symmetric = !matches!(rule, Rule::Recurrent { .. });
            let inst = Instance::random(n, symmetric, &mut rng);
            let chk = oracle::check_rule(*rule, &inst, args.samples, args.z_limit, &mut rng)?;
            w.write_record([
                rule.name(),
                inst_id.to_string(),
                n.to_string(),
                format!("{:.4}", chk.max_z),
                chk.worst_entry.clone(),
                chk.entries_checked.to_string(),
                chk.failures.len().to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn cmd_report(args: &ReportArgs) -> coordex::Result<()> {
    let windows = Window::parse_list(&args.windows)?;
    let loaded = args.inputs.iter().map(|p| report::read_metrics(p)).collect::<coordex::Result<Vec<_>>>()?;
    let series: Vec<Series> = loaded.iter().map(|(id, seed, r)| Series { config_id: id, seed: *seed, rewards: r }).collect();
    let summary = report::report_windows(&series, &windows)?;
    report::write_summary(&summary, sink(&args.output)?)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Plot(a) => plot::plot(&a.inputs, &a.output),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(3),
            }
        }
    }
}
