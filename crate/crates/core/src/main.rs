use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use kpzlab::enhancement::DEFAULT_BURN_IN;
use kpzlab::experiment::{
    self, ConstChoice, ConstantsConfig, ConvergeConfig, EnhanceConfig, InitialValue, RunConfig,
    SolveConfig, SolveScheme,
};
use kpzlab::renorm::Scheme;
use kpzlab::selftest::{run_selftest, SelftestOptions};

#[derive(Parser)]
#[command(name = "kpzlab", version, about = "Renormalized KPZ experiments on the torus")]
struct Cli {
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory; `constants` prints to stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Mollifier profile: `bump2` or `flat:R`.
    #[arg(long, global = true, default_value = "bump2")]
    profile: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum EnhanceScheme {
    Plain,
    Fq,
}

#[derive(Subcommand)]
enum Command {
    /// Table of renormalization constants with identity checks.
    Constants {
        #[arg(long, value_delimiter = ',', required = true)]
        eps: Vec<f64>,
    },
    /// Build and store the driving terms for one noise path.
    Enhance {
        #[arg(long, value_enum, default_value = "plain")]
        scheme: EnhanceScheme,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 128)]
        modes: usize,
        #[arg(long)]
        dt: f64,
        #[arg(long)]
        t_final: f64,
        #[arg(long, default_value_t = DEFAULT_BURN_IN)]
        burn_in: f64,
    },
    /// Solve one equation on one noise path.
    Solve {
        /// plain, fq, cole-hopf or paracontrolled.
        #[arg(long)]
        scheme: SolveScheme,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 128)]
        modes: usize,
        #[arg(long)]
        dt: f64,
        #[arg(long)]
        t_final: f64,
        /// `zero` or `file:PATH`.
        #[arg(long, default_value = "zero")]
        h0: InitialValue,
        /// `paper`, `ito` or `custom:VALUE`.
        #[arg(long = "const", default_value = "paper")]
        constant: ConstChoice,
        #[arg(long, default_value_t = DEFAULT_BURN_IN)]
        burn_in: f64,
    },
    /// Ensemble drift and gap statistics against the Cole–Hopf oracle.
    Converge {
        #[arg(long, value_delimiter = ',', default_value = "0.2,0.1,0.05")]
        eps: Vec<f64>,
        #[arg(long, default_value_t = 10)]
        ensemble: usize,
        #[arg(long, default_value_t = 256)]
        modes: usize,
        #[arg(long, default_value_t = 2e-4)]
        dt: f64,
        #[arg(long, default_value_t = 0.5)]
        t_final: f64,
    },
    /// Run the built-in invariant checks.
    Selftest {
        #[arg(long, hide = true)]
        corrupt_partition: bool,
    },
}

fn config(cli: &Cli) -> Option<RunConfig> {
    let profile = cli.profile.clone();
    let seed = cli.seed;
    Some(match &cli.command {
        Command::Constants { eps } => RunConfig::Constants(ConstantsConfig { eps: eps.clone(), profile }),
        &Command::Enhance { scheme, eps, modes, dt, t_final, burn_in } => {
            let scheme = match scheme {
                EnhanceScheme::Plain => Scheme::Plain,
                EnhanceScheme::Fq => Scheme::Fq,
            };
            RunConfig::Enhance(EnhanceConfig { scheme, eps, modes, dt, t_final, seed, profile, burn_in })
        }
        Command::Solve { scheme, eps, modes, dt, t_final, h0, constant, burn_in } => {
            RunConfig::Solve(SolveConfig {
                scheme: *scheme,
                eps: *eps,
                modes: *modes,
                dt: *dt,
                t_final: *t_final,
                seed,
                profile,
                h0: h0.clone(),
                constant: *constant,
                burn_in: *burn_in,
            })
        }
        Command::Converge { eps, ensemble, modes, dt, t_final } => RunConfig::Converge(ConvergeConfig {
            eps: eps.clone(),
            ensemble: *ensemble,
            modes: *modes,
            dt: *dt,
            t_final: *t_final,
            seed,
            profile,
        }),
        Command::Selftest { .. } => return None,
    })
}

fn selftest(corrupt_partition: bool, out: Option<&PathBuf>) -> kpzlab::Result<ExitCode> {
    let results = run_selftest(&SelftestOptions { corrupt_partition });
    experiment::write_csv(io::stdout().lock(), &results)?;
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("selftest.json"), serde_json::to_string_pretty(&results)?)?;
    }
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.id.as_str()).collect();
    eprintln!("{} of {} checks passed", results.len() - failed.len(), results.len());
    if failed.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("failed: {}", failed.join(" "));
        Ok(ExitCode::FAILURE)
    }
}

fn main_inner(cli: Cli) -> kpzlab::Result<ExitCode> {
    kpzlab::par::init_threads(cli.threads);
    if let Command::Selftest { corrupt_partition } = cli.command {
        return selftest(corrupt_partition, cli.out.as_ref());
    }
    let cfg = config(&cli).expect("run command");
    let Some(out) = &cli.out else {
        if let RunConfig::Constants(c) = &cfg {
            let s = experiment::cmd_constants(c)?;
            experiment::write_csv(io::stdout().lock(), &experiment::constants_rows(&s))?;
            return Ok(ExitCode::SUCCESS);
        }
        return Err(kpzlab::Error::Config("--out DIR is required for this command".into()));
    };
    let manifest = experiment::run(&cfg, out, std::env::args().collect())?;
    for f in &manifest.files {
        println!("{}  {}", f.sha256, out.join(&f.name).display());
    }
    if let RunConfig::Converge(_) = cfg {
        print!("{}", std::fs::read_to_string(out.join("summary.csv"))?);
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
