//! `sfl`: configuration-driven front end for scalar-field-lab.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{Failure, Outcome};
use output::{Manifest, Sink, Versions};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_CLAIMS: u8 = 4;

#[derive(Parser)]
#[command(name = "sfl", version, about = "Radial normalized solutions of nonlinear scalar field equations")]
#[command(after_help = "Exit codes: 0 success, 2 config error, 3 numerical failure, 4 claim-verification failure.\n\
Every run writes manifest.json with the config hash, versions and per-claim outcomes.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out` in the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Random seed (overrides `seed` in the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (overrides `threads` in the config).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Check the hypotheses on g and compute lambda0. Writes classify.json.
    Classify,
    /// Bound state with `k` nodes at `lambda.value`.
    #[command(after_help = "ground_state.json: lambda, k, u0, Ihat, mass, residuals.\nprofile.csv columns: r,u")]
    GroundState,
    /// Branch of `k`-node states over `lambda.values` or the window lattice.
    #[command(after_help = "branch.csv columns: lambda,k,u0,Ihat,mass,pohozaev_residual")]
    Branch,
    /// Mountain-pass level at `lambda.value` by path relaxation and by least energy.
    #[command(after_help = "path_history.csv columns: sweep,level,max_index,residual")]
    MpLevel,
    /// Mass threshold curves for node counts 0..=thresholds.k_max.
    #[command(after_help = "threshold_k<k>.csv columns: lambda,level,ratio (ratio = level/e^lambda)")]
    Thresholds,
    /// Normalized solutions at `mass.m` or each of `mass.grid`.
    #[command(after_help = "solve.json: one report per mass.\nsolve_profile_<i>.csv columns: r,u")]
    Solve,
    /// Minimize F on the mass sphere at `mass.m` or each of `mass.grid`.
    #[command(after_help = "minimize.json: one report per mass.\nminimize_profile_<i>.csv columns: r,u")]
    Minimize,
    /// Check the identities and write claims.json. Exit 4 if a claim fails.
    Verify,
    /// Deformation flow from `flow.starts` seeded random starts near the critical point.
    #[command(after_help = "flow_<i>.csv columns: step,theta,lambda,J,P,grad_norm,psi,phi")]
    Flow,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Classify => "classify",
            Command::GroundState => "ground-state",
            Command::Branch => "branch",
            Command::MpLevel => "mp-level",
            Command::Thresholds => "thresholds",
            Command::Solve => "solve",
            Command::Minimize => "minimize",
            Command::Verify => "verify",
            Command::Flow => "flow",
        }
    }
}

fn run_command(cmd: Command, cfg: &config::RunConfig, out: &mut Sink) -> Result<Outcome, Failure> {
    match cmd {
        Command::Classify => commands::classify(cfg, out),
        Command::GroundState => commands::ground_state(cfg, out),
        Command::Branch => commands::branch(cfg, out),
        Command::MpLevel => commands::mp_level(cfg, out),
        Command::Thresholds => commands::thresholds(cfg, out),
        Command::Solve => commands::solve(cfg, out),
        Command::Minimize => commands::minimize(cfg, out),
        Command::Verify => commands::verify(cfg, out),
        Command::Flow => commands::flow(cfg, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn })
        .format_timestamp(None)
        .init();

    let Some(path) = cli.config.as_ref() else {
        eprintln!("error: --config <path> is required");
        return ExitCode::from(EXIT_CONFIG);
    };
    let (mut cfg, canonical) = match config::load(path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("config error: field `threads`: must be at least 1");
            return ExitCode::from(EXIT_CONFIG);
        }
        cfg.threads = Some(t);
    }
    if let Some(t) = cfg.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            log::warn!("thread pool: {e}");
        }
    }
    let dir = cli.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("sfl-out"));
    let mut sink = match Sink::new(&dir) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("cannot create {}: {e}", dir.display());
            return ExitCode::from(EXIT_NUMERICAL);
        }
    };

    let cmd = cli.command;
    log::info!("{} with {}", cmd.name(), path.display());
    let result = run_command(cmd, &cfg, &mut sink);
    let (status, code, claims) = match result {
        Ok(o) if o.claims_pass() => ("ok", 0, o.claims),
        Ok(o) => {
            for c in o.claims.iter().filter(|c| c.status == "fail") {
                eprintln!("claim failed: {}", c.paper_ref);
            }
            ("claims_failed", EXIT_CLAIMS, o.claims)
        }
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e}");
            ("config_error", EXIT_CONFIG, vec![])
        }
        Err(Failure::Numerical(e)) => {
            eprintln!("numerical failure: {e}");
            let report = serde_json::json!({ "error": e.to_string(), "detail": format!("{e:?}") });
            if let Err(w) = sink.json("error.json", &report) {
                eprintln!("cannot write error report: {w}");
            }
            ("numerical_failure", EXIT_NUMERICAL, vec![])
        }
        Err(Failure::Io(e)) => {
            eprintln!("io error: {e}");
            ("io_error", EXIT_NUMERICAL, vec![])
        }
    };
    let manifest = Manifest {
        command: cmd.name(),
        config_sha256: output::sha256_hex(canonical.as_bytes()),
        seed: cfg.seed,
        versions: Versions {
            cli: env!("CARGO_PKG_VERSION"),
            core: scalar_field_lab::VERSION,
        },
        status,
        artifacts: sink.artifacts().to_vec(),
        claims,
    };
    if let Err(e) = sink.json("manifest.json", &manifest) {
        eprintln!("cannot write manifest: {e}");
        return ExitCode::from(EXIT_NUMERICAL);
    }
    ExitCode::from(code)
}
