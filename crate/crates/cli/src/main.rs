use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use cosim_cli::{execute, write_atomic, Command, Origin, RunConfig};

#[derive(Parser)]
#[command(name = "cosim", version, about = "Co-simulation experiments with CSV output")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// Configuration file of `key = value` lines
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// linear-uni, linear-mutual, spring-mass or gradient-flow
    #[arg(long, global = true)]
    model: Option<String>,
    /// plain, balance_corrected or power_negotiated
    #[arg(long, global = true)]
    scheme: Option<String>,
    /// Extrapolation degree (0 or 1)
    #[arg(long, global = true)]
    extrap: Option<String>,
    /// Extrapolate with exchanged derivatives
    #[arg(long, global = true)]
    hermite: bool,
    /// Exchange step
    #[arg(long = "H", global = true, allow_hyphen_values = true)]
    h: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    t_end: Option<String>,
    /// Output file (default: standard output)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Any other configuration key, e.g. `--set param.m=2`
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Simulate once and write the sampled trace
    Run,
    /// Fit the convergence order over `H_list`
    Converge,
    /// Energy report with per-interval production
    Stability,
}

fn load(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            RunConfig::parse(&text).with_context(|| format!("in {}", path.display()))?
        }
        None => RunConfig::default(),
    };
    let mut flags: Vec<(String, String)> = Vec::new();
    let mut push = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            flags.push((k.into(), v));
        }
    };
    push("model", cli.model.clone());
    push("scheme", cli.scheme.clone());
    push("extrap", cli.extrap.clone());
    push("hermite", cli.hermite.then(|| "true".into()));
    push("H", cli.h.clone());
    push("t_end", cli.t_end.clone());
    push("out", cli.out.as_ref().map(|p| p.display().to_string()));
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .with_context(|| format!("--set expects KEY=VALUE, got `{kv}`"))?;
        flags.push((k.trim().into(), v.trim().into()));
    }
    for (k, v) in flags {
        cfg.set(&k, &v, Origin::Flag)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn real_main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let cfg = load(&cli)?;
    let cmd = match cli.command {
        Cmd::Run => Command::Run,
        Cmd::Converge => Command::Converge,
        Cmd::Stability => Command::Stability,
    };
    let table = execute(cmd, &cfg)?;
    let csv = table.to_csv();
    match &cfg.out {
        Some(path) => write_atomic(path, &csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // most layers already print their source; keep each message once
            let mut msg = String::new();
            for cause in e.chain() {
                let s = cause.to_string();
                if !msg.contains(&s) {
                    if !msg.is_empty() {
                        msg.push_str(": ");
                    }
                    msg.push_str(&s);
                }
            }
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
