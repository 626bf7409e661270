use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use jobmarket_core::analysis::SeKind;
use jobmarket_core::model::JobId;
use jobmarket_core::session::replay;
use jobmarket_lab::config::{RunConfig, DATA_DIR_ENV};
use jobmarket_lab::formats;
use jobmarket_lab::service::{setups_from_config, Hub, Server};
use jobmarket_lab::study;
use jobmarket_lab::validation::validation_suite;

#[derive(Parser)]
#[command(name = "jobmarket", version, about = "Simulate, serve and analyze worker-valuation sessions")]
struct Cli {
    /// Default directory for inputs and outputs.
    #[arg(long, global = true, env = DATA_DIR_ENV, default_value = ".")]
    data_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SeArg {
    Classical,
    Cluster,
}

#[derive(Clone, Copy, ValueEnum)]
enum JobArg {
    C,
    Nc,
    Both,
}

impl JobArg {
    fn jobs(self) -> Vec<JobId> {
        match self {
            JobArg::C => vec![JobId::C],
            JobArg::Nc => vec![JobId::NC],
            JobArg::Both => JobId::ALL.to_vec(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a worker session and manager sessions with agents; write the
    /// report panel, payoffs and event logs.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        managers: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Managers who report one value for every worker.
        #[arg(long)]
        constant_reporters: Option<usize>,
        #[arg(long)]
        session_size: Option<usize>,
        /// Output directory; defaults to the config's, then the data dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Apply exclusions, fit specs 1-4 for each job and run the tests.
    Analyze {
        /// Report panel CSV; defaults to reports.csv in the data dir.
        #[arg(long)]
        reports: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "classical")]
        se: SeArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the ordered kernel regression and write grids and difference maps.
    Grid {
        #[arg(long)]
        reports: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "both")]
        job: JobArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rebuild sessions from event logs and print their terminal state.
    Replay {
        #[arg(required = true)]
        logs: Vec<PathBuf>,
        /// Write the replayed payoffs to this CSV.
        #[arg(long)]
        payoffs: Option<PathBuf>,
    },
    /// Check payment rules and configured constants.
    Validate {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Serve the sessions listed in the config over TCP.
    Serve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        addr: Option<String>,
        /// Where session logs are kept; defaults to live/ in the data dir.
        #[arg(long)]
        log_dir: Option<PathBuf>,
    },
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    path.map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
}

fn run(cli: Cli) -> Result<ExitCode> {
    let data = cli.data_dir;
    match cli.command {
        Command::Simulate {
            config,
            managers,
            seed,
            constant_reporters,
            session_size,
            out,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(n) = managers {
                cfg.study.managers = n;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(k) = constant_reporters {
                cfg.agents.constant_reporters = k;
            }
            if let Some(n) = session_size {
                cfg.study.session_size = n;
            }
            let dir = out.or(cfg.output_dir.clone()).unwrap_or(data);
            let sim = study::simulate(&cfg)?;
            study::write_simulation(&sim, &dir)?;
            println!(
                "{} reports from {} managers in {} sessions written to {}",
                sim.panel.len(),
                sim.study.managers.len(),
                sim.study.logs.len(),
                dir.display()
            );
        }
        Command::Analyze { reports, se, out } => {
            let path = reports.unwrap_or_else(|| data.join("reports.csv"));
            let panel = formats::load_panel(&path)?;
            let se = match se {
                SeArg::Classical => SeKind::Classical,
                SeArg::Cluster => SeKind::ClusterManager,
            };
            let a = study::analyze(&panel, se)?;
            let dir = out.unwrap_or_else(|| data.join("analysis"));
            study::write_analysis(&a, &dir)?;
            println!(
                "managers kept {}, excluded {}",
                a.exclusions.kept_managers(),
                a.exclusions.excluded_managers()
            );
            for f in a.fits.iter().filter(|f| f.spec == Some(1)) {
                let job = f.job.map_or("pooled", JobId::as_str);
                for e in &f.estimates {
                    println!(
                        "{job} spec 1 {:<14} {:>9.3} ({:.3}){}",
                        e.term.name(),
                        e.estimate,
                        e.se,
                        formats::stars(e.p)
                    );
                }
            }
            for (job, spec, err) in &a.failures {
                println!("{job} spec {spec} not fitted: {err}");
            }
            println!("analysis written to {}", dir.display());
        }
        Command::Grid { reports, job, out } => {
            let path = reports.unwrap_or_else(|| data.join("reports.csv"));
            let panel = formats::load_panel(&path)?;
            let fits = study::grid(&panel, &job.jobs())?;
            let dir = out.unwrap_or_else(|| data.join("grid"));
            study::write_grid(&fits, &dir)?;
            for (job, f) in &fits {
                let dd = f.diffs.double_diff.iter().flatten().flatten();
                let positive = dd.clone().filter(|v| **v > 0.0).count();
                println!(
                    "{job}: lambda_sent {:.2}, lambda_score {:.2}, double difference positive at {positive} of {} points",
                    f.model.lambda_sent,
                    f.model.lambda_score,
                    dd.count()
                );
            }
            println!("grids written to {}", dir.display());
        }
        Command::Replay { logs, payoffs } => {
            let mut loaded = Vec::new();
            for p in &logs {
                loaded.push(formats::load_events(p)?);
            }
            for (p, events) in logs.iter().zip(&loaded) {
                let session = replay(events).with_context(|| format!("replaying {}", p.display()))?;
                println!(
                    "{}: {} events, {}",
                    session.session_id(),
                    events.len(),
                    if session.is_finished() { "finished" } else { "in progress" }
                );
                for s in session.roster() {
                    let phase = session.phase(s).map(|p| p.to_string()).unwrap_or_default();
                    let view = session.view(s);
                    match view.and_then(|v| v.payoff) {
                        Some(p) => println!("  {s} {phase} total {} points, {}", p.total, p.cents),
                        None => println!("  {s} {phase}"),
                    }
                }
            }
            if let Some(out) = payoffs {
                let refs: Vec<&[_]> = loaded.iter().map(Vec::as_slice).collect();
                formats::save_csv(&out, &study::payoff_rows(&refs)?)?;
            }
        }
        Command::Validate { config } => {
            let cfg = load_config(config.as_deref())?;
            let mut failed = 0;
            for c in validation_suite(&cfg) {
                println!(
                    "{} {} ({} cases, {} failures)",
                    if c.passed() { "PASS" } else { "FAIL" },
                    c.name,
                    c.cases,
                    c.failures.len()
                );
                for f in &c.failures {
                    println!("  {f}");
                }
                failed += c.failures.len();
            }
            if failed > 0 {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Serve { config, addr, log_dir } => {
            let cfg = RunConfig::load(&config)?;
            if cfg.serve.sessions.is_empty() {
                bail!("no sessions configured under [serve]");
            }
            let mut hub = Hub::new(Some(log_dir.unwrap_or_else(|| data.join("live"))));
            for setup in setups_from_config(&cfg)? {
                hub.open(setup, 0)?;
            }
            let addr = addr.unwrap_or(cfg.serve.addr.clone());
            let server = Server::start(hub, &addr, cfg.serve.tick_ms)?;
            println!("serving on {}", server.addr);
            loop {
                std::thread::park();
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
