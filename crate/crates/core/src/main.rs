use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use serde_json::{json, Value};

use ek_core::io::{self, CommandName};
use ek_core::{Error, Result};

/// Traveling waves of the Euler-Korteweg system.
///
/// Every run is described by a JSON config ({"command", "model", "params",
/// "output_dir", "rng_seed"}); flags override individual entries. The
/// resolved config is written to <output_dir>/manifest.json.
#[derive(Parser, Debug)]
#[command(name = "ek", version)]
struct Cli {
    /// wave1d | curve1d | spectrum1d | evolve1d | minimize2d | sweep2d | kp-lump
    command: String,
    /// Run config (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model as a JSON file or an inline JSON object.
    #[arg(long)]
    model: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Wave speed.
    #[arg(long)]
    c: Option<f64>,
    /// Perturbation size.
    #[arg(long)]
    delta: Option<f64>,
    /// Time horizon.
    #[arg(long = "T")]
    t: Option<f64>,
    /// Grid size (n_half for wave1d/spectrum1d, n for evolve1d, both 2D axes).
    #[arg(long = "N")]
    n_nodes: Option<usize>,
    #[arg(long = "N1")]
    n1: Option<usize>,
    #[arg(long = "N2")]
    n2: Option<usize>,
    /// Momentum.
    #[arg(long)]
    p: Option<f64>,
    /// Torus half-width in KP variables.
    #[arg(long)]
    n: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    /// Comma-separated regularization schedule, e.g. 1e-2,1e-3,0.
    #[arg(long = "eps-schedule", value_delimiter = ',')]
    eps_schedule: Option<Vec<f64>>,
    /// EKF1 torus field to start the minimization from.
    #[arg(long = "warm-start")]
    warm_start: Option<PathBuf>,
    /// EKF1 profile to evolve.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Generic override of a params entry: key=JSON.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn load_model(spec: &str) -> Result<Value> {
    let text = if spec.trim_start().starts_with('{') { spec.to_string() } else { std::fs::read_to_string(spec)? };
    io::parse_json(&text)
}

fn build_config(cli: &Cli) -> Result<io::RunConfig> {
    let command: CommandName = cli.command.parse()?;
    let mut v = match &cli.config {
        Some(p) => io::parse_json(&std::fs::read_to_string(p)?)?,
        None => json!({ "command": command.as_str() }),
    };
    let Value::Object(obj) = &mut v else {
        return Err(Error::Validation { field: "config".into(), msg: "must be a JSON object".into() });
    };
    match obj.get("command") {
        Some(Value::String(s)) if s == command.as_str() => {}
        Some(other) => {
            return Err(Error::Validation {
                field: "command".into(),
                msg: format!("config is for {other}, command line asks for {}", command.as_str()),
            })
        }
        None => {
            obj.insert("command".into(), json!(command.as_str()));
        }
    }
    if let Some(m) = &cli.model {
        obj.insert("model".into(), load_model(m)?);
    }
    if let Some(o) = &cli.out {
        obj.insert("output_dir".into(), json!(o));
    }
    if let Some(s) = cli.seed {
        obj.insert("rng_seed".into(), json!(s));
    }
    let two_d = matches!(command, CommandName::Minimize2d | CommandName::Sweep2d | CommandName::KpLump);
    let mut set: Vec<(String, Value)> = vec![];
    if let Some(c) = cli.c {
        set.push(("c".into(), json!(c)));
    }
    if let Some(d) = cli.delta {
        set.push(("delta".into(), json!(d)));
    }
    if let Some(t) = cli.t {
        set.push(("horizon".into(), json!(t)));
    }
    if let Some(n) = cli.n_nodes {
        if two_d {
            set.push(("n1".into(), json!(n)));
            set.push(("n2".into(), json!(n)));
        } else if matches!(command, CommandName::Wave1d | CommandName::Spectrum1d) {
            set.push(("n_half".into(), json!(n)));
        } else {
            set.push(("n".into(), json!(n)));
        }
    }
    if let Some(n) = cli.n1 {
        set.push(("n1".into(), json!(n)));
    }
    if let Some(n) = cli.n2 {
        set.push(("n2".into(), json!(n)));
    }
    if let Some(p) = cli.p {
        set.push(("p".into(), json!(p)));
    }
    if let Some(r) = cli.n {
        set.push(("rz".into(), json!(r)));
    }
    if let Some(t) = cli.tol {
        set.push(("tol".into(), json!(t)));
    }
    if let Some(s) = &cli.eps_schedule {
        set.push(("eps_schedule".into(), json!(s)));
    }
    if let Some(w) = &cli.warm_start {
        set.push(("warm_start".into(), json!(w)));
    }
    if let Some(i) = &cli.input {
        set.push(("input".into(), json!(i)));
    }
    for kv in &cli.set {
        let (k, val) = kv
            .split_once('=')
            .ok_or_else(|| Error::Validation { field: "--set".into(), msg: format!("expected KEY=VALUE, got `{kv}`") })?;
        let parsed = serde_json::from_str(val).unwrap_or_else(|_| json!(val));
        set.push((k.to_string(), parsed));
    }
    if !set.is_empty() {
        let params = obj.entry("params").or_insert_with(|| json!({}));
        let Value::Object(pm) = params else {
            return Err(Error::Validation { field: "params".into(), msg: "must be a JSON object".into() });
        };
        for (k, val) in set {
            pm.insert(k, val);
        }
    }
    io::config_from_value(v)
}

fn init_threads() -> Result<()> {
    if let Ok(s) = std::env::var("EK_THREADS") {
        let n: usize = s
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| Error::Validation { field: "EK_THREADS".into(), msg: format!("expected a positive integer, got `{s}`") })?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Validation { field: "EK_THREADS".into(), msg: e.to_string() })?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads().and_then(|_| build_config(&cli)).and_then(|cfg| io::run(&cfg));
    match result {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            let code = e.exit_code();
            if code == 3 {
                println!("{}", io::error_report(&e));
            }
            eprintln!("error: {e}");
            ExitCode::from(code as u8)
        }
    }
}
