use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use emt_lab::harness::{
    bundled, bundled_names, load_config, run_scenario, run_twice, schema, ConfigIssue, ModuleKind, RunError, RunReport,
    ScenarioConfig,
};
use rayon::prelude::*;

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "emt-lab", version, about = "Run emt-lab scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one or more scenario configs; prints one JSON report per line.
    Run {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        /// Directory that output paths are resolved against.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Override the seed of every config.
        #[arg(long)]
        seed: Option<u64>,
        /// Scenarios to run in parallel.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Run every bundled scenario twice and check results and reproducibility.
    Verify {
        /// Keep artifacts here instead of a scratch directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the parameter table for a module as JSON.
    Schema { module: String },
}

fn print_issues(source: &str, issues: &[ConfigIssue]) {
    for issue in issues {
        eprintln!("{source}: {issue}");
    }
}

fn load_all(paths: &[PathBuf], seed: Option<u64>) -> Result<Vec<ScenarioConfig>, ()> {
    let mut configs = Vec::new();
    let mut ok = true;
    for path in paths {
        match load_config(path) {
            Ok(mut cfg) => {
                if let Some(seed) = seed {
                    cfg.seed = seed;
                }
                configs.push(cfg);
            }
            Err(issues) => {
                print_issues(&path.display().to_string(), &issues);
                ok = false;
            }
        }
    }
    let mut owners: BTreeMap<&str, &str> = BTreeMap::new();
    for cfg in &configs {
        if let Some(other) = owners.insert(&cfg.output.path, &cfg.name) {
            eprintln!("scenarios `{other}` and `{}` both write {}", cfg.name, cfg.output.path);
            ok = false;
        }
    }
    if ok {
        Ok(configs)
    } else {
        Err(())
    }
}

fn run_all(configs: &[ScenarioConfig], out: &Path, jobs: usize) -> Result<Vec<Result<RunReport, RunError>>, String> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| e.to_string())?;
    Ok(pool.install(|| configs.par_iter().map(|cfg| run_scenario(cfg, out)).collect()))
}

fn cmd_run(configs: &[PathBuf], out: &Path, seed: Option<u64>, jobs: usize) -> ExitCode {
    let Ok(configs) = load_all(configs, seed) else {
        return ExitCode::from(EXIT_CONFIG);
    };
    let results = match run_all(&configs, out, jobs) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    };
    let mut runtime_error = false;
    let mut check_failed = false;
    for result in results {
        match result {
            Ok(report) => {
                check_failed |= !report.passed;
                println!("{}", serde_json::to_string(&report).expect("report serializes"));
            }
            Err(e) => {
                eprintln!("{e}");
                runtime_error = true;
            }
        }
    }
    if runtime_error {
        ExitCode::from(EXIT_RUNTIME)
    } else if check_failed {
        ExitCode::from(EXIT_CHECK_FAILED)
    } else {
        ExitCode::SUCCESS
    }
}

fn cmd_verify(out: Option<PathBuf>) -> ExitCode {
    let scratch;
    let root = match out {
        Some(dir) => dir,
        None => match tempfile::tempdir() {
            Ok(d) => {
                scratch = d;
                scratch.path().to_path_buf()
            }
            Err(e) => {
                eprintln!("cannot create scratch directory: {e}");
                return ExitCode::from(EXIT_RUNTIME);
            }
        },
    };
    let mut code = ExitCode::SUCCESS;
    let mut failed = false;
    for name in bundled_names() {
        let cfg = match bundled(name).expect("name comes from the bundled list") {
            Ok(c) => c,
            Err(issues) => {
                print_issues(name, &issues);
                return ExitCode::from(EXIT_CONFIG);
            }
        };
        match run_twice(&cfg, &root.join(name)) {
            Ok(rep) => {
                for c in &rep.report.checks {
                    println!(
                        "[{}] {name}/{}: {}",
                        if c.passed { "PASS" } else { "FAIL" },
                        c.name,
                        c.detail
                    );
                }
                let same = rep.identical_bytes && rep.identical_digest;
                println!(
                    "[{}] {name}/reproducible: digest {}",
                    if same { "PASS" } else { "FAIL" },
                    &rep.report.config_digest[..16]
                );
                failed |= !rep.report.passed || !same;
            }
            Err(e) => {
                eprintln!("{e}");
                code = ExitCode::from(EXIT_RUNTIME);
            }
        }
    }
    if code == ExitCode::SUCCESS && failed {
        code = ExitCode::from(EXIT_CHECK_FAILED);
    }
    code
}

fn cmd_schema(module: &str) -> ExitCode {
    match ModuleKind::parse(module) {
        Some(kind) => {
            println!(
                "{}",
                serde_json::to_string_pretty(&schema(kind)).expect("schema serializes")
            );
            ExitCode::SUCCESS
        }
        None => {
            let names: Vec<&str> = ModuleKind::ALL.iter().map(|m| m.name()).collect();
            eprintln!("unknown module `{module}`; expected one of: {}", names.join(", "));
            ExitCode::from(EXIT_CONFIG)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            configs,
            out,
            seed,
            jobs,
        } => cmd_run(&configs, &out, seed, jobs),
        Command::Verify { out } => cmd_verify(out),
        Command::Schema { module } => cmd_schema(&module),
    }
}
