use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand as ClapSubcommand};
use delayembed_cli::acceptance::acceptance_suite;
use delayembed_cli::output::{output_root, persist, Check, ExperimentRecord, Timing};
use delayembed_cli::{run, ExperimentConfig, HarnessError, Subcommand};

#[derive(Parser)]
#[command(name = "delayembed", version, about = "Delay-embedding experiments and acceptance checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Keys of the `[experiment]` section.
#[derive(Args, Clone, Default)]
struct Common {
    /// TOML config file; flags override its keys
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output root (default: $DELAYEMBED_OUT or ./out)
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    system: Option<String>,
    #[arg(long)]
    manifold: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    base: Option<String>,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    measure: Option<String>,
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    map: Option<String>,
}

#[derive(ClapSubcommand)]
enum Command {
    /// Embed sampled points and write their delay coordinates
    Embed(Common),
    /// Pointwise bi-Lipschitz constants
    Bilip {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        probes: Option<usize>,
        #[arg(long)]
        exclusion_radius: Option<f64>,
    },
    /// Self-intersection rates
    Intersect {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        eps_sep: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        deltas: Option<Vec<f64>>,
        #[arg(long)]
        pairs: Option<usize>,
    },
    /// Immersion prevalence, pair-matrix ranks and surjectivity
    Immersion {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        draws: Option<usize>,
        #[arg(long)]
        base_points: Option<usize>,
        #[arg(long)]
        rank_pairs: Option<usize>,
        #[arg(long)]
        targets: Option<usize>,
    },
    /// Singular-value measure bound
    Svbound {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        instances: Option<usize>,
        #[arg(long)]
        draws: Option<usize>,
        #[arg(long)]
        strip_draws: Option<usize>,
        #[arg(long)]
        strip_eps: Option<f64>,
    },
    /// Prediction-error decay
    PredictError {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        probes: Option<usize>,
        #[arg(long)]
        eps_min: Option<f64>,
        #[arg(long)]
        eps_max: Option<f64>,
        #[arg(long)]
        cells: Option<usize>,
    },
    /// Direct and observed Lyapunov exponents
    Lyapunov {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        eps: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        m_grid: Option<Vec<f64>>,
        #[arg(long)]
        orbit: Option<usize>,
    },
    /// Random orthogonal projections of the ambient embedding
    Project {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        base_points: Option<usize>,
        #[arg(long)]
        haar_samples: Option<usize>,
    },
    /// Run the acceptance battery
    Accept {
        #[command(flatten)]
        common: Common,
        /// quick or full
        #[arg(long, default_value = "quick")]
        profile: String,
    },
}

macro_rules! set {
    ($target:expr, $value:expr) => {
        if let Some(v) = $value {
            $target = v;
        }
    };
}

fn base_config(c: &Common) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let e = &mut cfg.experiment;
    set!(e.system, c.system.clone());
    if c.manifold.is_some() {
        e.manifold = c.manifold.clone();
    }
    set!(e.k, c.k);
    set!(e.base, c.base.clone());
    set!(e.radius, c.radius);
    set!(e.seed, c.seed);
    set!(e.measure, c.measure.clone());
    set!(e.points, c.points);
    set!(e.map, c.map.clone());
    Ok(cfg)
}

fn resolve(cmd: Command) -> Result<(Option<Subcommand>, ExperimentConfig, Common, Option<String>), HarnessError> {
    Ok(match cmd {
        Command::Embed(c) => (Some(Subcommand::Embed), base_config(&c)?, c, None),
        Command::Bilip { common, probes, exclusion_radius } => {
            let mut cfg = base_config(&common)?;
            set!(cfg.bilip.probes, probes);
            set!(cfg.bilip.exclusion_radius, exclusion_radius);
            (Some(Subcommand::Bilip), cfg, common, None)
        }
        Command::Intersect { common, eps_sep, deltas, pairs } => {
            let mut cfg = base_config(&common)?;
            set!(cfg.intersect.eps_sep, eps_sep);
            set!(cfg.intersect.deltas, deltas);
            set!(cfg.intersect.pairs, pairs);
            (Some(Subcommand::Intersect), cfg, common, None)
        }
        Command::Immersion { common, draws, base_points, rank_pairs, targets } => {
            let mut cfg = base_config(&common)?;
            set!(cfg.immersion.draws, draws);
            set!(cfg.immersion.base_points, base_points);
            set!(cfg.immersion.rank_pairs, rank_pairs);
            set!(cfg.immersion.targets, targets);
            (Some(Subcommand::Immersion), cfg, common, None)
        }
        Command::Svbound { common, m, instances, draws, strip_draws, strip_eps } => {
            let mut cfg = base_config(&common)?;
            set!(cfg.svbound.m, m);
            set!(cfg.svbound.instances, instances);
            set!(cfg.svbound.draws, draws);
            set!(cfg.svbound.strip_draws, strip_draws);
            set!(cfg.svbound.strip_eps, strip_eps);
            (Some(Subcommand::Svbound), cfg, common, None)
        }
        Command::PredictError { common, n, probes, eps_min, eps_max, cells } => {
            let mut cfg = base_config(&common)?;
            set!(cfg.predict.n, n);
            set!(cfg.predict.probes, probes);
            set!(cfg.predict.eps_min, eps_min);
            set!(cfg.predict.eps_max, eps_max);
            set!(cfg.predict.cells, cells);
            (Some(Subcommand::PredictError), cfg, common, None)
        }
        Command::Lyapunov { common, n, eps, m_grid, orbit } => {
            let mut cfg = base_config(&common)?;
            set!(cfg.lyapunov.n, n);
            set!(cfg.lyapunov.eps, eps);
            set!(cfg.lyapunov.m_grid, m_grid);
            set!(cfg.lyapunov.orbit, orbit);
            (Some(Subcommand::Lyapunov), cfg, common, None)
        }
        Command::Project { common, samples, base_points, haar_samples } => {
            let mut cfg = base_config(&common)?;
            set!(cfg.project.samples, samples);
            set!(cfg.project.base_points, base_points);
            set!(cfg.project.haar_samples, haar_samples);
            (Some(Subcommand::Project), cfg, common, None)
        }
        Command::Accept { common, profile } => (None, base_config(&common)?, common, Some(profile)),
    })
}

fn execute(cmd: Command) -> Result<bool, HarnessError> {
    let (sub, cfg, common, profile) = resolve(cmd)?;
    let root = common.out.clone().unwrap_or_else(output_root);
    let started = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
    let clock = Instant::now();
    let (mut record, tables) = match sub {
        Some(sub) => {
            let out = run(sub, &cfg)?;
            (out.record, out.tables)
        }
        None => {
            let summary = acceptance_suite(profile.as_deref().unwrap_or("quick"));
            for line in summary.lines() {
                println!("{line}");
            }
            let checks = summary.criteria.iter().map(|c| Check::new(&format!("{}. {}", c.id, c.name), c.passed, c.detail.clone())).collect();
            (ExperimentRecord::new("accept", &cfg, serde_json::to_value(&summary)?, checks), vec![])
        }
    };
    record.timing = Some(Timing { started, elapsed_seconds: clock.elapsed().as_secs_f64() });
    let dir = persist(&root, &record, &tables)?;
    for c in &record.checks {
        log::info!("{} {}: {}", if c.passed { "pass" } else { "FAIL" }, c.name, c.detail);
    }
    println!("{}", dir.display());
    Ok(record.passed)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse().command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
