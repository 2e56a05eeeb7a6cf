use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{error, info};

use fspde::harness::{self, ExperimentConfig, ExperimentResult};
use fspde::{Error, Result};

#[derive(Parser)]
#[command(name = "fspde", version, about = "Functional SPDE simulation, regularization and Harnack experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the configured Monte Carlo path count.
    #[arg(long, global = true)]
    samples: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Function-class examples and the trace/maximal-inequality check.
    Classcheck,
    /// One path of the configured system.
    Simulate,
    /// Resolvent solver sweep over λ; saves the certified field.
    SolveU,
    Uniqueness,
    Galerkin,
    Nonexplosion,
    /// Conjugation identity and the log/power Harnack campaign.
    Harnack,
}

fn load(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli.config.as_ref().ok_or_else(|| Error::Config { field: "--config".into(), reason: "a configuration file is required".into() })?;
    let mut cfg: ExperimentConfig = toml::from_str(&std::fs::read_to_string(path)?)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if let Some(n) = cli.samples {
        cfg.samples = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cmd: Command, cfg: &ExperimentConfig) -> Result<Vec<ExperimentResult>> {
    Ok(match cmd {
        Command::Classcheck => vec![harness::run_classcheck(cfg)?, harness::run_trace(cfg)?],
        Command::Simulate => vec![harness::run_simulate(cfg)?],
        Command::SolveU => {
            let (res, fields) = harness::run_solver(cfg)?;
            if let Ok((i, lambda)) = fspde::zvonkin::lambda_threshold(&fields) {
                std::fs::create_dir_all(&cfg.out)?;
                let stem = cfg.out.join(format!("field_lambda{lambda}"));
                fields[i].save(&stem)?;
                info!("event=field_saved path={}", stem.display());
            }
            vec![res]
        }
        Command::Uniqueness => vec![harness::run_uniqueness(cfg)?],
        Command::Galerkin => vec![harness::run_galerkin(cfg)?],
        Command::Nonexplosion => vec![harness::run_nonexplosion(cfg)?],
        Command::Harnack => {
            let mut out = Vec::new();
            if cfg.conjugation.is_some() {
                out.push(harness::run_conjugation(cfg)?);
            }
            if cfg.harnack.is_some() {
                out.push(harness::run_harnack_campaign(cfg)?);
            }
            out
        }
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format(|buf, rec| {
            use std::io::Write;
            writeln!(buf, "level={} target={} {}", rec.level(), rec.target(), rec.args())
        })
        .init();
    let cli = Cli::parse();
    let cfg = match load(&cli) {
        Ok(c) => c,
        Err(e) => {
            error!("event=config_error error=\"{e}\"");
            return ExitCode::from(2);
        }
    };
    info!("event=start config_hash={} seed={} samples={}", cfg.hash(), cfg.seed, cfg.samples);
    let results = match run(cli.command, &cfg) {
        Ok(r) => r,
        Err(e @ Error::Config { .. }) => {
            error!("event=config_error error=\"{e}\"");
            return ExitCode::from(2);
        }
        Err(e) => {
            error!("event=failure error=\"{e}\"");
            return ExitCode::from(1);
        }
    };
    let mut ok = true;
    for r in &results {
        if let Err(e) = r.write(&cfg.out) {
            error!("event=write_error error=\"{e}\"");
            return ExitCode::from(1);
        }
        for v in &r.verdicts {
            info!("experiment={} criterion={} passed={} detail=\"{}\"", r.experiment, v.criterion, v.passed, v.detail);
        }
        ok &= r.passed();
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
