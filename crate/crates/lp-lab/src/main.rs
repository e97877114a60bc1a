use clap::{Args, Parser, Subcommand, ValueEnum};
use landau_pekar::config::{parse_config, ExperimentConfig, ExperimentKind};
use landau_pekar::experiment::run;
use landau_pekar::Error;
use std::path::PathBuf;
use std::process::ExitCode;

/// Radial Landau-Pekar experiments.
///
/// Settings are layered: built-in defaults, then `--config`, then flags.
#[derive(Parser, Debug)]
#[command(name = "lp-lab", version)]
struct Cli {
    /// Root directory for relative output directories.
    #[arg(long, env = "LP_LAB_OUT", global = true)]
    out_root: Option<PathBuf>,

    /// Print the effective config in canonical form and exit.
    #[arg(long, global = true)]
    print_config: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve for the Pekar minimizer and its spectral gap.
    Pekar(Overrides),
    /// Evolve perturbed initial data and record the trajectory.
    Evolve(Overrides),
    /// Evolve and check the gap along the trajectory.
    GapTrack(Overrides),
    /// Adiabatic deviation across a geometric list of couplings.
    AdiabaticSweep(Overrides),
    /// Random-perturbation audit of the quadratic lower bounds.
    CoercivityAudit(Overrides),
    /// Run the experiment named by KIND.
    Run {
        kind: KindArg,
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum KindArg {
    Pekar,
    Evolve,
    GapTrack,
    AdiabaticSweep,
    CoercivityAudit,
}

impl From<KindArg> for ExperimentKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Pekar => ExperimentKind::Pekar,
            KindArg::Evolve => ExperimentKind::Evolve,
            KindArg::GapTrack => ExperimentKind::GapTrack,
            KindArg::AdiabaticSweep => ExperimentKind::AdiabaticSweep,
            KindArg::CoercivityAudit => ExperimentKind::CoercivityAudit,
        }
    }
}

#[derive(Args, Debug, Default)]
struct Overrides {
    /// Key-value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Grid points N.
    #[arg(long)]
    n: Option<usize>,
    /// Box radius R.
    #[arg(long = "R", allow_negative_numbers = true)]
    box_radius: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    /// ε as a fraction of |e_P|.
    #[arg(long, allow_negative_numbers = true)]
    eps: Option<f64>,
    /// Horizon in units of α².
    #[arg(long, allow_negative_numbers = true)]
    horizon_mult: Option<f64>,
    /// Comma-separated couplings for the sweep.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    alphas: Option<Vec<f64>>,
    #[arg(long, allow_negative_numbers = true)]
    dt: Option<f64>,
    /// Steps between samples.
    #[arg(long)]
    sample_every: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Audit sample count.
    #[arg(long)]
    samples: Option<usize>,
    /// Output directory (relative paths go under the output root).
    #[arg(long)]
    out: Option<String>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
}

impl Overrides {
    fn resolve(self, kind: ExperimentKind) -> Result<ExperimentConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::validation("config", format!("cannot read {}: {e}", path.display())))?;
                parse_config(&text)?
            }
            None => ExperimentConfig::default(),
        };
        cfg.kind = kind;
        if let Some(v) = self.n {
            cfg.n_points = v;
        }
        if let Some(v) = self.box_radius {
            cfg.box_radius = v;
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = self.eps {
            cfg.eps_over_ep = v;
        }
        if let Some(v) = self.horizon_mult {
            cfg.horizon_mult = v;
        }
        if let Some(v) = self.alphas {
            cfg.alphas = v;
        }
        if let Some(v) = self.dt {
            cfg.dt = v;
        }
        if self.sample_every.is_some() {
            cfg.sample_every = self.sample_every;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.samples {
            cfg.audit_samples = v;
        }
        if let Some(v) = self.out {
            cfg.out_dir = v;
        }
        if self.workers.is_some() {
            cfg.workers = self.workers;
        }
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, overrides) = match cli.command {
        Command::Pekar(o) => (ExperimentKind::Pekar, o),
        Command::Evolve(o) => (ExperimentKind::Evolve, o),
        Command::GapTrack(o) => (ExperimentKind::GapTrack, o),
        Command::AdiabaticSweep(o) => (ExperimentKind::AdiabaticSweep, o),
        Command::CoercivityAudit(o) => (ExperimentKind::CoercivityAudit, o),
        Command::Run { kind, overrides } => (kind.into(), overrides),
    };
    let cfg = match overrides.resolve(kind) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    if cli.print_config {
        print!("{}", cfg.to_text());
        return match cfg.validate() {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => fail(&e),
        };
    }
    match run(&cfg, cli.out_root.as_deref()) {
        Ok(outcome) => {
            let m = &outcome.manifest;
            println!("{} status={} dir={} hash={} wall={:.2}s", m.kind, m.status, outcome.dir.display(), &m.manifest_hash[..12], m.wall_time_s);
            for c in &m.failed_checks {
                eprintln!("failed check: {c}");
            }
            if let Some(e) = &m.error {
                eprintln!("error: {e}");
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => fail(&e),
    }
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}
