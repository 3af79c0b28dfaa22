mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use opcomp_core::baselines::BaselineConfig;
use opcomp_core::cache::occupancy_bits;
use opcomp_core::cache_opt::{subgradient_step, windowed_u, OptimizerState};
use opcomp_core::oracles::{
    mc_effective_gain_check, service_rate_identity_check, surrogate_error_scan,
    tiny_mdp_average_cost, MdpDisc,
};
use opcomp_core::queue::validate_assumptions;
use opcomp_core::sim::{run_episode, sample_urp, sweep};
use opcomp_core::{CacheVector, Error, Policy, Urp};

use config::{build, policy_id, ConfigError, FullConfig, RawConfig};

#[derive(Parser)]
#[command(name = "opcomp", about = "Cache-and-power control simulator")]
struct Cli {
    /// Configuration file path.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: $OPCOMP_OUT_DIR or the working directory).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// key=value or section.key=value overrides.
    #[arg(long = "set", global = true)]
    overrides: Vec<String>,
    /// Proceed despite assumption violations.
    #[arg(long, global = true)]
    allow_invalid: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the price and slot-size assumptions; report violations.
    Validate,
    /// Run one episode and write metrics (optionally a per-slot trace).
    Simulate {
        #[arg(long)]
        trace: bool,
    },
    /// Run the tradeoff-curve grid and write one CSV row per (point, seed).
    Sweep,
    /// Run the stochastic cache optimizer and write its trajectory.
    CacheOpt,
    /// Run the verification oracles and write a key=value report.
    Oracle {
        /// Comma-separated subset of gains,surrogate,service,mdp (or all).
        #[arg(long, default_value = "gains,surrogate,service")]
        which: String,
    },
}

enum CliError {
    Config(String),
    Assumption(String),
    Numeric(String),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.0)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => CliError::Config(e.to_string()),
            Error::Assumption(_) => CliError::Assumption(e.to_string()),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(format!("io: {e}"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(m)) => {
            eprintln!("error: code=2 kind=config msg={}", m.replace('\n', " | "));
            ExitCode::from(2)
        }
        Err(CliError::Assumption(m)) => {
            eprintln!("error: code=3 kind=assumption msg={}", m.replace('\n', " | "));
            ExitCode::from(3)
        }
        Err(CliError::Numeric(m)) => {
            eprintln!("error: code=4 kind=numeric msg={}", m.replace('\n', " | "));
            ExitCode::from(4)
        }
    }
}

fn load_config(cli: &Cli) -> Result<FullConfig, CliError> {
    let path = cli
        .config
        .clone()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut raw = RawConfig::parse(&text)?;
    raw.apply_overrides(&cli.overrides)?;
    Ok(build(&raw)?)
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| std::env::var_os("OPCOMP_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn check_assumptions(cli: &Cli, cfg: &FullConfig) -> Result<(), CliError> {
    let violations = validate_assumptions(&cfg.system);
    if violations.is_empty() || cli.allow_invalid {
        Ok(())
    } else {
        Err(CliError::Assumption(violations.join("; ")))
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    let dir = out_dir(cli);
    std::fs::create_dir_all(&dir)?;
    match &cli.command {
        Command::Validate => {
            let violations = validate_assumptions(&cfg.system);
            if violations.is_empty() {
                println!("ok: all assumptions satisfied");
                Ok(())
            } else {
                for v in &violations {
                    println!("violation: {v}");
                }
                Err(CliError::Assumption(violations.join("; ")))
            }
        }
        Command::Simulate { trace } => {
            check_assumptions(cli, &cfg)?;
            let q = CacheVector::new(cfg.cache.q_init.clone())?;
            let policy = make_policy(&cfg.sim.policy, cfg.sim.kappa)?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.sim.seed);
            let (metrics, rows) =
                run_episode(&cfg.system, policy, &q, cfg.sim.n_slots, *trace, &mut rng)?;
            output::write_metrics(&dir.join("metrics.csv"), &cfg, &metrics)?;
            if let Some(rows) = rows {
                output::write_trace(&dir.join("trace.csv"), &rows)?;
            }
            println!("wrote {}", dir.join("metrics.csv").display());
            Ok(())
        }
        Command::Sweep => {
            check_assumptions(cli, &cfg)?;
            cfg.sweep.validate()?;
            let q = CacheVector::new(cfg.cache.q_init.clone())?;
            let (rows, failures) =
                sweep(&cfg.sweep, &cfg.system, &q, ChaCha8Rng::seed_from_u64);
            output::write_sweep(&dir.join("sweep.csv"), &rows)?;
            for (point, seed, msg) in &failures {
                eprintln!("point {point} seed {seed} failed: {msg}");
            }
            println!("wrote {}", dir.join("sweep.csv").display());
            if failures.is_empty() {
                Ok(())
            } else {
                Err(CliError::Numeric(format!("{} sweep points failed", failures.len())))
            }
        }
        Command::CacheOpt => {
            check_assumptions(cli, &cfg)?;
            let q0 = CacheVector::new(cfg.cache.q_init.clone())?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.sim.seed);
            // Step manually so each iterate's cache vector lands in the CSV.
            let mut state = OptimizerState::new(q0, cfg.cache.sigma0);
            let mut q_rows = Vec::with_capacity(cfg.cache.n_urp);
            for _ in 0..cfg.cache.n_urp {
                let pi = sample_urp(&mut rng, &cfg.system.rho, cfg.system.n_users())?;
                subgradient_step(&mut state, &pi, &cfg.system)?;
                q_rows.push(state.q.0.clone());
            }
            let u_avg = windowed_u(&state.trace, cfg.cache.u_window);
            output::write_cache_opt(&dir.join("cache_opt.csv"), &cfg, &state, &u_avg, &q_rows)?;
            println!("wrote {}", dir.join("cache_opt.csv").display());
            Ok(())
        }
        Command::Oracle { which } => {
            check_assumptions(cli, &cfg)?;
            let mut report = Vec::new();
            let all = which == "all";
            let wants = |name: &str| all || which.split(',').any(|w| w.trim() == name);
            if wants("gains") {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.sim.seed);
                let rep = mc_effective_gain_check(0.5, 50_000, cfg.system.m, &mut rng)?;
                report.push(("gains.zero_mass".to_string(), rep.zero_mass));
                report.push(("gains.tail_mean".to_string(), rep.tail_mean));
                report.push(("gains.ks_stat".to_string(), rep.ks_stat));
            }
            if wants("surrogate") {
                let gaps = surrogate_error_scan(&[1.0, 2.0, 4.0, 8.0], 0.5, &cfg.system)?;
                for (r, g) in [1, 2, 4, 8].iter().zip(&gaps) {
                    report.push((format!("surrogate.gap_ratio_{r}"), *g));
                }
            }
            if wants("service") {
                let q = CacheVector::new(cfg.cache.q_init.clone())?;
                let pi = Urp(vec![0; cfg.system.n_users()]);
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.sim.seed);
                let rep = service_rate_identity_check(&cfg.system, &q, &pi, 200_000, &mut rng)?;
                report.push(("service.r_bar_a".to_string(), rep.r_bar_a));
                report.push(("service.r_bar_b".to_string(), rep.r_bar_b));
                report.push(("service.target".to_string(), rep.target));
                report.push(("service.gap".to_string(), rep.gap));
            }
            if wants("mdp") {
                let disc = MdpDisc {
                    q_points: 120,
                    g_points: 24,
                    p_points: 24,
                    q_max: 4.0 * cfg.system.w_high,
                    p_max: None,
                };
                let theta = tiny_mdp_average_cost(&disc, 0.5, &cfg.system, 0)?;
                report.push(("mdp.theta_vi".to_string(), theta));
            }
            report.push((
                "config.occupancy_bits".to_string(),
                occupancy_bits(
                    &CacheVector::new(cfg.cache.q_init.clone())?,
                    &cfg.system.file_sizes,
                ),
            ));
            output::write_report(&dir.join("oracle_report.txt"), &report)?;
            for (k, v) in &report {
                println!("{k} = {}", output::fmt_num(*v));
            }
            Ok(())
        }
    }
}

fn make_policy(name: &str, kappa: f64) -> Result<Policy, CliError> {
    Ok(match policy_id(name)? {
        0 => Policy::Proposed,
        1 => Policy::Baseline1(BaselineConfig::new(kappa, 1)?),
        2 => Policy::Baseline2(BaselineConfig::new(kappa, 2)?),
        _ => Policy::Baseline3(BaselineConfig::new(kappa, 3)?),
    })
}
