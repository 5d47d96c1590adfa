use std::process::ExitCode;

use beliefsim::config::{ExperimentConfig, ExperimentKind};
use beliefsim::experiments;

const USAGE: &str = "\
beliefsim: belief-dispersion exchange economy simulator

USAGE:
  beliefsim [FLAGS]

FLAGS:
  --experiment KIND    paths | welfare-sweep | double-loss | strategist |
                       survival | two-state | critical-zeta
  --config PATH        config file (key = value lines, # comments); a
                       run_manifest.txt from a previous run also works
  --out DIR            output directory (default: out)
  --seed U64           master seed
  --paths N            Monte Carlo paths for the main grid
  --threads N          worker threads (affects speed only, never results)
  --set KEY=VALUE      override any config key (repeatable)
  --svg                also write SVG line charts
  --help               show this help

Defaults reproduce the baseline parameter set (mu_bar 0.04, kappa 0.2,
sigma_mu 0.01, sigma_D 0.2, sigma_e 0.05, rho 0.02). An empty config file
is a valid all-defaults run.

OUTPUT:
  <out>/*.csv            one table per result
  <out>/run_manifest.txt full effective config + checksums; rerunning with
                         --config <out>/run_manifest.txt reproduces every
                         CSV byte for byte at any --threads value
";

struct Cli {
    config: ExperimentConfig,
    threads: Option<usize>,
}

fn parse_args() -> Result<Cli, String> {
    let mut config_path: Option<String> = None;
    let mut sets: Vec<(String, String)> = Vec::new();
    let mut experiment: Option<String> = None;
    let mut out: Option<String> = None;
    let mut seed: Option<String> = None;
    let mut paths: Option<String> = None;
    let mut threads: Option<usize> = None;
    let mut svg = false;

    let mut it = std::env::args().skip(1);
    while let Some(arg) = it.next() {
        let mut need = |name: &str| {
            it.next()
                .ok_or_else(|| format!("missing value for {name}"))
        };
        match arg.as_str() {
            "--help" | "-h" => {
                println!("{USAGE}");
                std::process::exit(0);
            }
            "--experiment" => experiment = Some(need("--experiment")?),
            "--config" => config_path = Some(need("--config")?),
            "--out" => out = Some(need("--out")?),
            "--seed" => seed = Some(need("--seed")?),
            "--paths" => paths = Some(need("--paths")?),
            "--threads" => {
                threads = Some(
                    need("--threads")?
                        .parse()
                        .map_err(|_| "--threads expects a positive integer".to_string())?,
                )
            }
            "--svg" => svg = true,
            "--set" => {
                let kv = need("--set")?;
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| format!("--set expects KEY=VALUE, got '{kv}'"))?;
                sets.push((k.trim().to_string(), v.trim().to_string()));
            }
            other => return Err(format!("unknown flag '{other}' (see --help)")),
        }
    }

    let mut config = match config_path {
        Some(path) => {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| format!("cannot read config '{path}': {e}"))?;
            ExperimentConfig::parse_str(&text).map_err(|e| e.to_string())?
        }
        None => ExperimentConfig::default(),
    };
    for (k, v) in &sets {
        config.set(k, v).map_err(|e| e.to_string())?;
    }
    if let Some(e) = experiment {
        config.experiment = ExperimentKind::parse(&e).map_err(|e| e.to_string())?;
    }
    if let Some(o) = out {
        config.out_dir = o;
    }
    if let Some(s) = seed {
        config.set("grid.seed", &s).map_err(|e| e.to_string())?;
    }
    if let Some(p) = paths {
        config.set("grid.paths", &p).map_err(|e| e.to_string())?;
    }
    if svg {
        config.svg = true;
    }
    Ok(Cli { config, threads })
}

fn main() -> ExitCode {
    let cli = match parse_args() {
        Ok(cli) => cli,
        Err(msg) => {
            eprintln!("error: cli: {msg}");
            return ExitCode::from(2);
        }
    };
    if let Err(e) = experiments::validate(&cli.config) {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let run = || experiments::run(&cli.config);
    let outcome = match cli.threads {
        Some(n) => {
            let pool = match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
                Ok(p) => p,
                Err(e) => {
                    eprintln!("error: threads: {e}");
                    return ExitCode::from(2);
                }
            };
            pool.install(run)
        }
        None => run(),
    };
    match outcome {
        Ok(outcome) => {
            for line in &outcome.summary {
                println!("{line}");
            }
            println!(
                "wrote {} outputs to {} in {:.1}s (manifest: run_manifest.txt)",
                outcome.outputs.len(),
                outcome.out_dir.display(),
                outcome.runtime_secs
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
