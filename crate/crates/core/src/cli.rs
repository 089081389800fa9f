//! Command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde_json::json;

use crate::auction::{run_auction, ValuationParams};
use crate::config::load_config;
use crate::engine::{run_scenario, ControllerMode};
use crate::error::{Error, Result};
use crate::output::{round12, write_run};
use crate::verify::{run_suite, Suite};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;
pub const EXIT_VERIFY: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "avoidance-credit", version, about = "Auction-based collision avoidance for unicycle teams")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a scenario and write trajectory, events, summary and manifest.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the controller named in the config (auction|qp).
        #[arg(long)]
        controller: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one standalone auction and print the outcome as JSON.
    Auction {
        /// Comma-separated bidders, each `n` or `alpha:n`.
        #[arg(long)]
        agents: String,
        #[arg(long, default_value_t = 1e-6)]
        eps: f64,
        #[arg(long, default_value_t = 1e-4)]
        grid: f64,
        #[arg(long, default_value_t = 8.0)]
        gamma: f64,
        #[arg(long, default_value_t = 5.0)]
        k: f64,
        #[arg(long, default_value_t = 200)]
        max_rounds: usize,
    },
    /// Check the implementation against randomised oracles.
    Verify {
        /// lie | lse | auction | qp | mapping
        suite: String,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn exit_code(e: &Error) -> i32 {
    if e.is_config() {
        EXIT_CONFIG
    } else {
        EXIT_RUNTIME
    }
}

fn report(err: &mut dyn Write, e: &Error) -> i32 {
    let _ = writeln!(err, "error: {e}");
    exit_code(e)
}

pub fn cmd_run(
    config: &Path,
    controller: Option<ControllerMode>,
    out_dir: &Path,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let mut cfg = match load_config(config) {
        Ok(c) => c,
        Err(e) => return report(err, &e),
    };
    if let Some(mode) = controller {
        cfg.controller = mode;
    }
    let start = Instant::now();
    let (log, events) = match run_scenario(&cfg) {
        Ok(r) => r,
        Err(e) => return report(err, &e),
    };
    let wall = start.elapsed().as_secs_f64();
    for w in &log.warnings {
        let _ = writeln!(err, "warning: {w}");
    }
    match write_run(out_dir, &cfg, &log, &events, wall) {
        Ok(_) => {
            let _ = writeln!(
                out,
                "{} run: {} steps, {} events, min distance {:.4} m, total effort {:.4} rad -> {}",
                cfg.controller.as_str(),
                log.rows.len(),
                events.len(),
                log.min_distance,
                log.effort.iter().sum::<f64>(),
                out_dir.display()
            );
            EXIT_OK
        }
        Err(e) => {
            let _ = writeln!(err, "error: writing outputs: {e}");
            EXIT_RUNTIME
        }
    }
}

/// Parse `n` or `alpha:n` entries separated by commas.
pub fn parse_agents(spec: &str, gamma: f64, k: f64) -> Result<Vec<ValuationParams>> {
    spec.split(',')
        .map(|item| {
            let item = item.trim();
            let (alpha, n) = match item.split_once(':') {
                Some((a, n)) => (a.trim().parse::<f64>().ok(), n.trim()),
                None => (Some(1.0), item),
            };
            let n = n.parse::<u32>().ok();
            match (alpha, n) {
                (Some(alpha), Some(n)) => ValuationParams::new(alpha, gamma, k, n),
                _ => Err(Error::Config(format!("bad agent entry `{item}` (expected n or alpha:n)"))),
            }
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_auction(
    agents: &str,
    eps: f64,
    grid: f64,
    gamma: f64,
    k: f64,
    max_rounds: usize,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let vals = match parse_agents(agents, gamma, k) {
        Ok(v) => v,
        Err(e) => return report(err, &e),
    };
    if vals.len() < 2 {
        return report(err, &Error::Config(format!("need at least two agents, got {}", vals.len())));
    }
    let outcome = match run_auction(&vals, eps, grid, max_rounds) {
        Ok(o) => o,
        Err(e) => return report(err, &e),
    };
    let r = |xs: &[f64]| xs.iter().map(|&x| round12(x)).collect::<Vec<_>>();
    let doc = json!({
        "credits": r(&outcome.credits),
        "payments": r(&outcome.payments),
        "bids": outcome.bids.iter().map(|b| json!({"beta": round12(b.beta), "d": round12(b.demand)})).collect::<Vec<_>>(),
        "iterations": outcome.iterations,
        "converged": outcome.converged,
    });
    let _ = writeln!(out, "{}", serde_json::to_string_pretty(&doc).expect("json"));
    EXIT_OK
}

pub fn cmd_verify(suite: &str, samples: usize, seed: u64, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let suite: Suite = match suite.parse() {
        Ok(s) => s,
        Err(e) => return report(err, &e),
    };
    match run_suite(suite, samples, seed) {
        Ok(rep) => {
            let _ = writeln!(
                out,
                "{}: samples={} seed={} worst={:.3e} tol={:.0e} {}",
                suite.as_str(),
                rep.samples,
                rep.seed,
                rep.worst_error,
                rep.tolerance,
                if rep.passed { "PASS" } else { "FAIL" }
            );
            for note in &rep.notes {
                let _ = writeln!(out, "  {note}");
            }
            if rep.passed {
                EXIT_OK
            } else {
                EXIT_VERIFY
            }
        }
        Err(e) => report(err, &e),
    }
}

/// Parse `args` (including the program name) and dispatch.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(err, "{text}")
            } else {
                write!(out, "{text}")
            };
            return code;
        }
    };
    match cli.command {
        Command::Run { config, controller, out: dir } => {
            let mode = match controller.as_deref().map(str::parse::<ControllerMode>).transpose() {
                Ok(m) => m,
                Err(e) => return report(err, &e),
            };
            cmd_run(&config, mode, &dir, out, err)
        }
        Command::Auction {
            agents,
            eps,
            grid,
            gamma,
            k,
            max_rounds,
        } => cmd_auction(&agents, eps, grid, gamma, k, max_rounds, out, err),
        Command::Verify { suite, samples, seed } => cmd_verify(&suite, samples, seed, out, err),
    }
}
