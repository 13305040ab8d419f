use apce_core::data::kv::KeyValues;
use apce_core::runner::{run, Command, RunConfig};
use apce_core::Error;
use clap::builder::PossibleValuesParser;
use clap::Parser;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

const EXIT_VALIDATION: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

/// Principal-stratum analyses of randomized experiments on algorithm-assisted
/// decisions. Every command writes CSV/JSON artifacts and a manifest.json
/// into --out.
#[derive(Debug, Parser)]
#[command(name = "apce", version)]
struct Cli {
    #[arg(value_parser = PossibleValuesParser::new(Command::ALL.iter().map(|c| c.name())))]
    command: String,

    /// Flat `key = value` configuration file; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: Option<String>,
    #[arg(long)]
    schema: Option<String>,
    #[arg(long)]
    recipe: Option<String>,
    /// Existing draw archive (a `draws_<outcome>` directory).
    #[arg(long)]
    draws: Option<String>,
    /// Sensitivity table file with rows `xi.z<z>.r<r> = …`.
    #[arg(long)]
    xi: Option<String>,
    /// Comma-separated outcome names.
    #[arg(long)]
    outcome: Option<String>,
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Latent correlation; a comma-separated list for `sensitivity`.
    #[arg(long)]
    rho: Option<String>,
    #[arg(long)]
    chains: Option<String>,
    #[arg(long)]
    iters: Option<String>,
    #[arg(long)]
    burn: Option<String>,
    #[arg(long)]
    bootstrap: Option<String>,
    #[arg(long = "c0-grid")]
    c0_grid: Option<String>,
    #[arg(long = "c1-grid")]
    c1_grid: Option<String>,
    /// Case filter `field=value[|value]`.
    #[arg(long)]
    subset: Option<String>,
    #[arg(long)]
    out: Option<String>,
    /// Worker threads (results do not depend on it).
    #[arg(long)]
    threads: Option<usize>,
    /// Any other configuration key, as `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Cli {
    fn config(&self) -> Result<KeyValues, Error> {
        let mut kv = match &self.config {
            Some(p) => KeyValues::read(p)?,
            None => KeyValues::default(),
        };
        for s in &self.set {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set `{s}` must be key=value")))?;
            kv.insert(k.trim(), v.trim());
        }
        let flags = [
            ("input", &self.input),
            ("schema", &self.schema),
            ("recipe", &self.recipe),
            ("draws", &self.draws),
            ("xi", &self.xi),
            ("outcome", &self.outcome),
            ("k", &self.k),
            ("seed", &self.seed),
            ("rho", &self.rho),
            ("chains", &self.chains),
            ("iters", &self.iters),
            ("burn", &self.burn),
            ("bootstrap", &self.bootstrap),
            ("c0-grid", &self.c0_grid),
            ("c1-grid", &self.c1_grid),
            ("subset", &self.subset),
            ("out", &self.out),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                kv.insert(key, v.clone());
            }
        }
        Ok(kv)
    }
}

fn fail(e: &Error) -> ExitCode {
    let code = if e.is_numerical() { EXIT_NUMERICAL } else { EXIT_VALIDATION };
    let body = serde_json::json!({ "error": e.kind(), "message": e.to_string(), "exit_code": code });
    eprintln!("{body}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = Command::from_str(&cli.command).expect("clap restricts command names");
    let kv = match cli.config() {
        Ok(kv) => kv,
        Err(e) => return fail(&e),
    };
    let threads = cli.threads.or_else(|| kv.get("threads").and_then(|t| t.parse().ok()));
    if let Some(n) = threads {
        // Only fails if a global pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let result = RunConfig::from_kv(command, kv).and_then(|cfg| run(&cfg).map(|m| (cfg, m)));
    match result {
        Ok((cfg, manifest)) => {
            let body = serde_json::json!({
                "status": "ok",
                "command": manifest.command,
                "out": cfg.out,
                "artifacts": manifest.artifacts.len(),
                "warnings": manifest.warnings,
            });
            println!("{body}");
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}
