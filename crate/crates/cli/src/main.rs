use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use chrono::NaiveDate;
use clap::{Parser, Subcommand};
use log::{error, info, warn};
use wpca_core::config::RunConfig;
use wpca_core::synth::{generate_synthetic, truth_path, write_synthetic, SynthConfig, Trend};
use wpca_core::{pipeline, plot, Error, FailureKind};

#[derive(Parser)]
#[command(name = "wpca", version, about = "Temporally weighted PCA for surveillance time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every analysis in a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Also write per-stream fitted values and residuals (smooth.csv).
        #[arg(long)]
        dump_smooth: bool,
    },
    /// Write a seeded synthetic data set plus its ground-truth sidecar.
    Synth {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 6)]
        p: usize,
        /// Latent trend: sine:<period>, cosine:<period>, linear, bump:<center>:<width>. Repeatable.
        #[arg(long = "trend", required = true)]
        trends: Vec<Trend>,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        rho: f64,
        #[arg(long, default_value_t = 0.1)]
        noise_sd: f64,
        /// Mixing weights, one stream per `;`, trends separated by `,`.
        #[arg(long, allow_hyphen_values = true)]
        mixing: Option<String>,
        #[arg(long, default_value = "2020-01-01")]
        start: NaiveDate,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render SVG plots from an output directory.
    Plot {
        #[arg(long)]
        from: PathBuf,
    },
}

fn parse_mixing(s: &str) -> anyhow::Result<Vec<Vec<f64>>> {
    s.split(';')
        .map(|row| {
            row.split(',')
                .map(|v| v.trim().parse::<f64>().with_context(|| format!("bad mixing weight `{v}`")))
                .collect()
        })
        .collect()
}

fn code(kind: FailureKind) -> ExitCode {
    ExitCode::from(kind.exit_code() as u8)
}

fn fail(e: &Error) -> ExitCode {
    error!("{e}");
    code(e.kind())
}

fn run(config: PathBuf, dump_smooth: bool) -> ExitCode {
    let mut cfg = match RunConfig::load(&config) {
        Ok(c) => c,
        Err(e) => return fail(&Error::from(e)),
    };
    cfg.dump_smooth |= dump_smooth;
    info!("config {} ({} analyses)", config.display(), cfg.analyses.len());
    match pipeline::run(&cfg) {
        Ok(outcome) => {
            for (name, kind) in &outcome.failures {
                warn!("analysis `{name}` failed ({kind:?})");
            }
            info!("wrote {}", cfg.output_dir.join("report.json").display());
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => fail(&e),
    }
}

fn synth(mut cfg: SynthConfig, mixing: Option<String>, out: PathBuf) -> ExitCode {
    if let Some(m) = mixing {
        match parse_mixing(&m) {
            Ok(m) => cfg.mixing = Some(m),
            Err(e) => {
                error!("{e:#}");
                return code(FailureKind::Config);
            }
        }
    }
    let result = generate_synthetic(&cfg).and_then(|data| write_synthetic(&data, &out));
    match result {
        Ok(()) => {
            info!("wrote {} and {}", out.display(), truth_path(&out).display());
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { code(FailureKind::Config) } else { ExitCode::SUCCESS };
        }
    };
    match cli.command {
        Command::Run { config, dump_smooth } => run(config, dump_smooth),
        Command::Synth {
            seed,
            n,
            p,
            trends,
            rho,
            noise_sd,
            mixing,
            start,
            out,
        } => {
            let mut cfg = SynthConfig::new(seed, n, p, trends);
            cfg.rho = rho;
            cfg.noise_sd = noise_sd;
            cfg.start = start;
            synth(cfg, mixing, out)
        }
        Command::Plot { from } => match plot::emit_plots(&from) {
            Ok(paths) => {
                for p in paths {
                    info!("wrote {}", p.display());
                }
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        },
    }
}
