use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::check::Check;
use crate::error::ModelError;
use crate::{dynprog, epistemic, feedback, gravity, growth, recombinant};

use super::config::{canonical_json, ModuleParams, OutputFormat, ScenarioConfig};

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("scenario `{scenario}`: {source}")]
    Model {
        scenario: String,
        #[source]
        source: ModelError,
    },
    #[error("scenario `{scenario}`: cannot write {path}: {message}")]
    Io {
        scenario: String,
        path: PathBuf,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub module: String,
    pub toolkit_version: String,
    pub config_digest: String,
    pub seed: u64,
    pub wall_time_ms: f64,
    pub artifacts: Vec<PathBuf>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

struct Writer<'a> {
    scenario: &'a str,
    artifacts: Vec<PathBuf>,
}

impl Writer<'_> {
    fn io_err(&self, path: &Path, e: impl std::fmt::Display) -> RunError {
        RunError::Io {
            scenario: self.scenario.to_string(),
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }

    fn bytes(&mut self, path: PathBuf, data: &[u8]) -> Result<(), RunError> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| self.io_err(parent, e))?;
        }
        fs::write(&path, data).map_err(|e| self.io_err(&path, e))?;
        self.artifacts.push(path);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, path: PathBuf, value: &T) -> Result<(), RunError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| self.io_err(&path, e))?;
        text.push('\n');
        self.bytes(path, text.as_bytes())
    }

    fn csv<T: Serialize>(&mut self, path: PathBuf, rows: &[T]) -> Result<(), RunError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::CRLF)
            .from_writer(Vec::new());
        for row in rows {
            w.serialize(row).map_err(|e| self.io_err(&path, e))?;
        }
        let data = w.into_inner().map_err(|e| self.io_err(&path, e))?;
        self.bytes(path, &data)
    }

    fn rows<T: Serialize>(&mut self, format: OutputFormat, path: PathBuf, rows: &[T]) -> Result<(), RunError> {
        match format {
            OutputFormat::Csv => self.csv(path, rows),
            OutputFormat::Json => self.json(path, &rows),
        }
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

#[derive(Serialize)]
struct ReplicateRow {
    replicate: usize,
    m: f64,
}

#[derive(Serialize)]
struct StateRow {
    state: usize,
    value: f64,
    policy: usize,
    realtime_surplus: Option<f64>,
    sensitivity: Option<f64>,
}

#[derive(Serialize)]
struct EvtOutput<'a> {
    report: &'a recombinant::EvtReport,
    samples: &'a [f64],
}

/// Runs one scenario, writing artifacts under `out_dir`.
///
/// Artifacts are the primary output at `output.path` and the resolved config
/// at `<stem>.config.json`, plus `<stem>.flows.json` for gravity runs with
/// `dump_flows`. Identical configs produce identical bytes.
pub fn run_scenario(cfg: &ScenarioConfig, out_dir: &Path) -> Result<RunReport, RunError> {
    let started = Instant::now();
    let model = |source: ModelError| RunError::Model {
        scenario: cfg.name.clone(),
        source,
    };
    let mut w = Writer {
        scenario: &cfg.name,
        artifacts: Vec::new(),
    };
    let main = out_dir.join(&cfg.output.path);
    let format = cfg.output.format;

    let checks: Vec<Check> = match &cfg.params {
        ModuleParams::Epistemic(p) => {
            let rows = epistemic::simulate(p, cfg.seed).map_err(model)?;
            w.rows(format, main.clone(), &rows)?;
            epistemic::trajectory_checks(&rows, &p.params())
        }
        ModuleParams::Growth(p) => {
            let rows = growth::simulate(p).map_err(model)?;
            w.rows(format, main.clone(), &rows)?;
            growth::trajectory_checks(&rows, p)
        }
        ModuleParams::Evt(p) => {
            let (report, samples) = recombinant::run(p, cfg.seed).map_err(model)?;
            match format {
                OutputFormat::Json => w.json(
                    main.clone(),
                    &EvtOutput {
                        report: &report,
                        samples: &samples,
                    },
                )?,
                OutputFormat::Csv => {
                    let rows: Vec<ReplicateRow> = samples
                        .iter()
                        .enumerate()
                        .map(|(replicate, &m)| ReplicateRow { replicate, m })
                        .collect();
                    w.csv(main.clone(), &rows)?;
                }
            }
            vec![
                Check::new(
                    "ks_within_threshold",
                    report.pass,
                    format!("KS {} vs {}", report.ks, p.ks_threshold),
                ),
                Check::new(
                    "mean_within_3sigma",
                    report.mean_within_3sigma,
                    format!(
                        "mean {} vs K/(K+1) = {} +/- {}",
                        report.mean, report.exact_mean, report.mean_tolerance
                    ),
                ),
            ]
        }
        ModuleParams::Gravity(p) => {
            let res = p.run().map_err(model)?;
            w.rows(format, main.clone(), &res.rows)?;
            if p.dump_flows {
                let dump = gravity::flow_dump(&p.state()).map_err(model)?;
                w.json(sibling(&main, "flows.json"), &dump)?;
            }
            gravity::flywheel_checks(&res)
        }
        ModuleParams::Mdp(p) => {
            let report = p.run().map_err(model)?;
            match format {
                OutputFormat::Json => w.json(main.clone(), &report)?,
                OutputFormat::Csv => {
                    let sol = &report.solution;
                    let rows: Vec<StateRow> = (0..sol.values.len())
                        .map(|s| StateRow {
                            state: s,
                            value: sol.values[s],
                            policy: sol.policy[s],
                            realtime_surplus: report.realtime_surplus.as_ref().map(|v| v[s]),
                            sensitivity: report.sensitivity.as_ref().map(|v| v[s]),
                        })
                        .collect();
                    w.csv(main.clone(), &rows)?;
                }
            }
            dynprog::solution_checks(&p.mdp, &report, p.tol)
        }
        ModuleParams::Feedback(p) => {
            let traj = feedback::simulate_loop(p, cfg.seed).map_err(model)?;
            w.rows(format, main.clone(), &traj)?;
            feedback::trajectory_checks(p, &traj)
        }
        ModuleParams::Game(p) => {
            let report = p.run().map_err(model)?;
            w.json(main.clone(), &report)?;
            p.checks(&report)
        }
        ModuleParams::Policy(p) => {
            let report = p.run().map_err(model)?;
            match format {
                OutputFormat::Json => w.json(main.clone(), &report)?,
                OutputFormat::Csv => w.csv(main.clone(), &report.sweep)?,
            }
            p.checks(&report)
        }
    };

    let mut resolved = serde_json::to_string_pretty(&cfg.to_value()).expect("config serializes");
    resolved.push('\n');
    w.bytes(sibling(&main, "config.json"), resolved.as_bytes())?;

    let passed = checks.iter().all(|c| c.passed);
    Ok(RunReport {
        scenario: cfg.name.clone(),
        module: cfg.module().name().to_string(),
        toolkit_version: TOOLKIT_VERSION.to_string(),
        config_digest: cfg.digest(),
        seed: cfg.seed,
        wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
        artifacts: w.artifacts,
        checks,
        passed,
    })
}

/// Outcome of running a scenario twice into separate directories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reproducibility {
    pub report: RunReport,
    pub identical_digest: bool,
    pub identical_bytes: bool,
}

/// Runs `cfg` under `root/a` and `root/b` and compares every artifact byte.
pub fn run_twice(cfg: &ScenarioConfig, root: &Path) -> Result<Reproducibility, RunError> {
    let first = run_scenario(cfg, &root.join("a"))?;
    let second = run_scenario(cfg, &root.join("b"))?;
    let relative = |r: &RunReport, base: &Path| -> Vec<PathBuf> {
        r.artifacts
            .iter()
            .map(|p| p.strip_prefix(base).unwrap_or(p).to_path_buf())
            .collect()
    };
    let (ra, rb) = (relative(&first, &root.join("a")), relative(&second, &root.join("b")));
    let identical_bytes = ra == rb
        && first
            .artifacts
            .iter()
            .zip(&second.artifacts)
            .all(|(a, b)| match (fs::read(a), fs::read(b)) {
                (Ok(x), Ok(y)) => x == y,
                _ => false,
            });
    Ok(Reproducibility {
        identical_digest: first.config_digest == second.config_digest,
        identical_bytes,
        report: first,
    })
}

/// Canonical form of the resolved config, the input to the digest.
pub fn canonical_config(cfg: &ScenarioConfig) -> String {
    canonical_json(&cfg.to_value())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::parse_config;

    #[test]
    fn csv_uses_crlf_and_a_header() {
        let cfg = parse_config(r#"{"name": "p", "module": "policy", "output": {"format": "csv"}}"#).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let report = run_scenario(&cfg, dir.path()).unwrap();
        let text = fs::read_to_string(&report.artifacts[0]).unwrap();
        assert!(text.starts_with("B,objective,spend\r\n"), "{text}");
        assert!(report.passed, "{:?}", report.checks);
    }

    #[test]
    fn resolved_config_reloads_to_the_same_digest() {
        let cfg = parse_config(r#"{"name": "m", "module": "mdp", "seed": 9}"#).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let report = run_scenario(&cfg, dir.path()).unwrap();
        let resolved = report
            .artifacts
            .iter()
            .find(|p| p.to_string_lossy().ends_with("m.config.json"))
            .unwrap();
        let again = crate::harness::config::load_config(resolved).unwrap();
        assert_eq!(again.digest(), report.config_digest);
    }

    #[test]
    fn json_output_parses() {
        let cfg = parse_config(r#"{"name": "g", "module": "game"}"#).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let report = run_scenario(&cfg, dir.path()).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&fs::read(&report.artifacts[0]).unwrap()).unwrap();
        assert!(v.get("all_c_is_spne").is_some());
    }

    #[test]
    fn model_errors_carry_the_scenario_name() {
        let mut cfg = parse_config(r#"{"name": "tight", "module": "mdp"}"#).unwrap();
        if let ModuleParams::Mdp(p) = &mut cfg.params {
            p.max_iter = 2;
        }
        let dir = tempfile::tempdir().unwrap();
        let err = run_scenario(&cfg, dir.path()).unwrap_err();
        assert!(err.to_string().starts_with("scenario `tight`"), "{err}");
    }

    #[test]
    fn flows_dump_is_written_on_request() {
        let cfg = parse_config(r#"{"name": "f", "module": "gravity", "params": {"dump_flows": true}}"#).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let report = run_scenario(&cfg, dir.path()).unwrap();
        assert!(dir.path().join("f.flows.json").exists());
        assert_eq!(report.artifacts.len(), 3);
    }
}
