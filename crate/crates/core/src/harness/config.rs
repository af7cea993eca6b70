use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::dynprog::MdpScenario;
use crate::epistemic::EpistemicScenario;
use crate::error::FieldError;
use crate::feedback::FeedbackParams;
use crate::game::GameScenario;
use crate::gravity::GravityScenario;
use crate::growth::GrowthScenario;
use crate::policy::PolicyScenario;
use crate::recombinant::EvtScenario;

/// One problem found while loading a config.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigIssue {
    pub field: String,
    pub message: String,
}

impl ConfigIssue {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.field.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.field, self.message)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModuleKind {
    Epistemic,
    Growth,
    Evt,
    Gravity,
    Mdp,
    Feedback,
    Game,
    Policy,
}

impl ModuleKind {
    pub const ALL: [ModuleKind; 8] = [
        ModuleKind::Epistemic,
        ModuleKind::Growth,
        ModuleKind::Evt,
        ModuleKind::Gravity,
        ModuleKind::Mdp,
        ModuleKind::Feedback,
        ModuleKind::Game,
        ModuleKind::Policy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModuleKind::Epistemic => "epistemic",
            ModuleKind::Growth => "growth",
            ModuleKind::Evt => "evt",
            ModuleKind::Gravity => "gravity",
            ModuleKind::Mdp => "mdp",
            ModuleKind::Feedback => "feedback",
            ModuleKind::Game => "game",
            ModuleKind::Policy => "policy",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == name)
    }

    pub fn fields(self) -> &'static [(&'static str, &'static str)] {
        match self {
            ModuleKind::Epistemic => EpistemicScenario::FIELDS,
            ModuleKind::Growth => GrowthScenario::FIELDS,
            ModuleKind::Evt => EvtScenario::FIELDS,
            ModuleKind::Gravity => GravityScenario::FIELDS,
            ModuleKind::Mdp => MdpScenario::FIELDS,
            ModuleKind::Feedback => FeedbackParams::FIELDS,
            ModuleKind::Game => GameScenario::FIELDS,
            ModuleKind::Policy => PolicyScenario::FIELDS,
        }
    }

    pub fn default_format(self) -> OutputFormat {
        match self {
            ModuleKind::Epistemic | ModuleKind::Growth | ModuleKind::Gravity | ModuleKind::Feedback => {
                OutputFormat::Csv
            }
            _ => OutputFormat::Json,
        }
    }

    pub fn formats(self) -> &'static [OutputFormat] {
        match self {
            ModuleKind::Game => &[OutputFormat::Json],
            _ => &[OutputFormat::Csv, OutputFormat::Json],
        }
    }

    pub fn default_params(self) -> ModuleParams {
        match self {
            ModuleKind::Epistemic => ModuleParams::Epistemic(Default::default()),
            ModuleKind::Growth => ModuleParams::Growth(Default::default()),
            ModuleKind::Evt => ModuleParams::Evt(Default::default()),
            ModuleKind::Gravity => ModuleParams::Gravity(Default::default()),
            ModuleKind::Mdp => ModuleParams::Mdp(Default::default()),
            ModuleKind::Feedback => ModuleParams::Feedback(Default::default()),
            ModuleKind::Game => ModuleParams::Game(Default::default()),
            ModuleKind::Policy => ModuleParams::Policy(Default::default()),
        }
    }
}

impl fmt::Display for ModuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModuleParams {
    Epistemic(EpistemicScenario),
    Growth(GrowthScenario),
    Evt(EvtScenario),
    Gravity(GravityScenario),
    Mdp(MdpScenario),
    Feedback(FeedbackParams),
    Game(GameScenario),
    Policy(PolicyScenario),
}

impl ModuleParams {
    pub fn kind(&self) -> ModuleKind {
        match self {
            ModuleParams::Epistemic(_) => ModuleKind::Epistemic,
            ModuleParams::Growth(_) => ModuleKind::Growth,
            ModuleParams::Evt(_) => ModuleKind::Evt,
            ModuleParams::Gravity(_) => ModuleKind::Gravity,
            ModuleParams::Mdp(_) => ModuleKind::Mdp,
            ModuleParams::Feedback(_) => ModuleKind::Feedback,
            ModuleParams::Game(_) => ModuleKind::Game,
            ModuleParams::Policy(_) => ModuleKind::Policy,
        }
    }

    pub fn validate(&self) -> Vec<FieldError> {
        match self {
            ModuleParams::Epistemic(p) => p.validate(),
            ModuleParams::Growth(p) => p.validate(),
            ModuleParams::Evt(p) => p.validate(),
            ModuleParams::Gravity(p) => p.validate(),
            ModuleParams::Mdp(p) => p.validate(),
            ModuleParams::Feedback(p) => p.validate(),
            ModuleParams::Game(p) => p.validate(),
            ModuleParams::Policy(p) => p.validate(),
        }
    }

    pub fn to_value(&self) -> Value {
        let v = match self {
            ModuleParams::Epistemic(p) => serde_json::to_value(p),
            ModuleParams::Growth(p) => serde_json::to_value(p),
            ModuleParams::Evt(p) => serde_json::to_value(p),
            ModuleParams::Gravity(p) => serde_json::to_value(p),
            ModuleParams::Mdp(p) => serde_json::to_value(p),
            ModuleParams::Feedback(p) => serde_json::to_value(p),
            ModuleParams::Game(p) => serde_json::to_value(p),
            ModuleParams::Policy(p) => serde_json::to_value(p),
        };
        v.expect("parameter blocks serialize to JSON")
    }

    fn from_value(kind: ModuleKind, value: Value) -> std::result::Result<Self, ConfigIssue> {
        fn typed<T: DeserializeOwned>(value: Value) -> std::result::Result<T, ConfigIssue> {
            serde_path_to_error::deserialize(value).map_err(|e| {
                let path = e.path().to_string();
                let field = if path == "." {
                    "params".to_string()
                } else {
                    format!("params.{path}")
                };
                ConfigIssue::new(field, e.into_inner().to_string())
            })
        }
        Ok(match kind {
            ModuleKind::Epistemic => ModuleParams::Epistemic(typed(value)?),
            ModuleKind::Growth => ModuleParams::Growth(typed(value)?),
            ModuleKind::Evt => ModuleParams::Evt(typed(value)?),
            ModuleKind::Gravity => ModuleParams::Gravity(typed(value)?),
            ModuleKind::Mdp => ModuleParams::Mdp(typed(value)?),
            ModuleKind::Feedback => ModuleParams::Feedback(typed(value)?),
            ModuleKind::Game => ModuleParams::Game(typed(value)?),
            ModuleKind::Policy => ModuleParams::Policy(typed(value)?),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputSpec {
    pub format: OutputFormat,
    pub path: String,
}

/// A fully resolved, validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    pub params: ModuleParams,
    pub output: OutputSpec,
}

const TOP_LEVEL: &[&str] = &["name", "module", "seed", "params", "output"];
const OUTPUT_KEYS: &[&str] = &["format", "path"];

fn suggestion(key: &str, candidates: &[&str]) -> String {
    let best = candidates.iter().map(|c| (strsim::levenshtein(key, c), *c)).min();
    match best {
        Some((d, c)) if d <= 2.max(key.len() / 3) => format!("unknown key `{key}`; did you mean `{c}`?"),
        _ => format!("unknown key `{key}`; expected one of: {}", candidates.join(", ")),
    }
}

fn unknown_keys(obj: &Map<String, Value>, known: &[&str], prefix: &str, issues: &mut Vec<ConfigIssue>) {
    for key in obj.keys().filter(|k| !known.contains(&k.as_str())) {
        issues.push(ConfigIssue::new(format!("{prefix}{key}"), suggestion(key, known)));
    }
}

/// Keys in `given` that the typed re-serialization does not produce.
fn nested_unknown_keys(given: &Value, typed: &Value, path: &str, issues: &mut Vec<ConfigIssue>) {
    match (given, typed) {
        (Value::Object(g), Value::Object(t)) => {
            let known: Vec<&str> = t.keys().map(String::as_str).collect();
            for (key, value) in g {
                let child = format!("{path}.{key}");
                match t.get(key) {
                    Some(tv) => nested_unknown_keys(value, tv, &child, issues),
                    None if value.is_null() => {}
                    None => issues.push(ConfigIssue::new(child, suggestion(key, &known))),
                }
            }
        }
        (Value::Array(g), Value::Array(t)) => {
            for (i, (gv, tv)) in g.iter().zip(t).enumerate() {
                nested_unknown_keys(gv, tv, &format!("{path}[{i}]"), issues);
            }
        }
        _ => {}
    }
}

fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.')
}

/// Parses and validates a config, reporting every problem found.
pub fn parse_config(text: &str) -> std::result::Result<ScenarioConfig, Vec<ConfigIssue>> {
    let root: Value = serde_json::from_str(text).map_err(|e| {
        vec![ConfigIssue::new(
            "",
            format!("parse error at line {} column {}: {e}", e.line(), e.column()),
        )]
    })?;
    let Value::Object(obj) = root else {
        return Err(vec![ConfigIssue::new("", "config must be a JSON object")]);
    };
    let mut issues = Vec::new();
    unknown_keys(&obj, TOP_LEVEL, "", &mut issues);

    let name = match obj.get("name") {
        Some(Value::String(s)) if valid_name(s) => Some(s.clone()),
        Some(Value::String(_)) => {
            issues.push(ConfigIssue::new(
                "name",
                "must be non-empty and use only letters, digits, '_', '-' or '.'",
            ));
            None
        }
        Some(_) => {
            issues.push(ConfigIssue::new("name", "must be a string"));
            None
        }
        None => {
            issues.push(ConfigIssue::new("name", "is required"));
            None
        }
    };

    let module_names: Vec<&str> = ModuleKind::ALL.iter().map(|m| m.name()).collect();
    let module = match obj.get("module") {
        Some(Value::String(s)) => match ModuleKind::parse(s) {
            Some(m) => Some(m),
            None => {
                issues.push(ConfigIssue::new(
                    "module",
                    suggestion(s, &module_names).replace("key", "module"),
                ));
                None
            }
        },
        Some(_) => {
            issues.push(ConfigIssue::new("module", "must be a string"));
            None
        }
        None => {
            issues.push(ConfigIssue::new("module", "is required"));
            None
        }
    };

    let seed = match obj.get("seed") {
        None => 0,
        Some(v) => v.as_u64().unwrap_or_else(|| {
            issues.push(ConfigIssue::new("seed", "must be an unsigned 64-bit integer"));
            0
        }),
    };

    let params = module.and_then(|kind| {
        let given = obj.get("params").cloned().unwrap_or_else(|| Value::Object(Map::new()));
        let Value::Object(map) = &given else {
            issues.push(ConfigIssue::new("params", "must be an object"));
            return None;
        };
        let known: Vec<&str> = kind.fields().iter().map(|(k, _)| *k).collect();
        unknown_keys(map, &known, "params.", &mut issues);
        match ModuleParams::from_value(kind, given.clone()) {
            Ok(p) => {
                let typed = p.to_value();
                if let (Value::Object(g), Value::Object(t)) = (&given, &typed) {
                    for (key, value) in g {
                        if let Some(tv) = t.get(key) {
                            nested_unknown_keys(value, tv, &format!("params.{key}"), &mut issues);
                        }
                    }
                }
                issues.extend(
                    p.validate()
                        .into_iter()
                        .map(|e| ConfigIssue::new(format!("params.{}", e.field), e.message)),
                );
                Some(p)
            }
            Err(issue) => {
                issues.push(issue);
                None
            }
        }
    });

    let output = module.and_then(|kind| {
        let given = obj.get("output").cloned().unwrap_or_else(|| Value::Object(Map::new()));
        let Value::Object(map) = given else {
            issues.push(ConfigIssue::new("output", "must be an object"));
            return None;
        };
        unknown_keys(&map, OUTPUT_KEYS, "output.", &mut issues);
        let format = match map.get("format") {
            None => kind.default_format(),
            Some(v) => match serde_json::from_value::<OutputFormat>(v.clone()) {
                Ok(f) if kind.formats().contains(&f) => f,
                Ok(f) => {
                    issues.push(ConfigIssue::new(
                        "output.format",
                        format!("module `{kind}` does not write {}", f.extension()),
                    ));
                    return None;
                }
                Err(_) => {
                    issues.push(ConfigIssue::new("output.format", "must be \"csv\" or \"json\""));
                    return None;
                }
            },
        };
        let path = match map.get("path") {
            None => format!("{}.{}", name.as_deref().unwrap_or("output"), format.extension()),
            Some(Value::String(p)) if !p.is_empty() => p.clone(),
            Some(_) => {
                issues.push(ConfigIssue::new("output.path", "must be a non-empty string"));
                return None;
            }
        };
        Some(OutputSpec { format, path })
    });

    match (name, params, output) {
        (Some(name), Some(params), Some(output)) if issues.is_empty() => Ok(ScenarioConfig {
            name,
            seed,
            params,
            output,
        }),
        _ => Err(issues),
    }
}

/// Reads and validates a config file.
pub fn load_config(path: &Path) -> std::result::Result<ScenarioConfig, Vec<ConfigIssue>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| vec![ConfigIssue::new("", format!("cannot read {}: {e}", path.display()))])?;
    parse_config(&text)
}

/// Serializes `value` with object keys sorted at every level.
pub fn canonical_json(value: &Value) -> String {
    fn sorted(value: &Value) -> Value {
        match value {
            Value::Object(map) => {
                let ordered: BTreeMap<&String, Value> = map.iter().map(|(k, v)| (k, sorted(v))).collect();
                let mut out = Map::new();
                for (k, v) in ordered {
                    out.insert(k.clone(), v);
                }
                Value::Object(out)
            }
            Value::Array(items) => Value::Array(items.iter().map(sorted).collect()),
            other => other.clone(),
        }
    }
    fn write(value: &Value, out: &mut String) {
        match value {
            Value::Object(map) => {
                let mut keys: Vec<&String> = map.keys().collect();
                keys.sort();
                out.push('{');
                for (i, k) in keys.into_iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    out.push_str(&Value::String(k.clone()).to_string());
                    out.push(':');
                    write(&map[k], out);
                }
                out.push('}');
            }
            Value::Array(items) => {
                out.push('[');
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    write(v, out);
                }
                out.push(']');
            }
            other => out.push_str(&other.to_string()),
        }
    }
    let mut out = String::new();
    write(&sorted(value), &mut out);
    out
}

impl ScenarioConfig {
    pub fn module(&self) -> ModuleKind {
        self.params.kind()
    }

    /// Resolved config with every default filled in.
    pub fn to_value(&self) -> Value {
        serde_json::json!({
            "name": self.name,
            "module": self.module().name(),
            "seed": self.seed,
            "params": self.params.to_value(),
            "output": self.output,
        })
    }

    /// SHA-256 of the canonical resolved config, hex encoded.
    pub fn digest(&self) -> String {
        let hash = Sha256::digest(canonical_json(&self.to_value()).as_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Parameter table for one module: name, description and default value.
pub fn schema(kind: ModuleKind) -> Value {
    let defaults = kind.default_params().to_value();
    let fields: Vec<Value> = kind
        .fields()
        .iter()
        .map(|(name, description)| {
            serde_json::json!({
                "name": name,
                "description": description,
                "default": defaults.get(*name).cloned().unwrap_or(Value::Null),
            })
        })
        .collect();
    serde_json::json!({
        "module": kind.name(),
        "output_formats": kind.formats().iter().map(|f| f.extension()).collect::<Vec<_>>(),
        "default_format": kind.default_format().extension(),
        "fields": fields,
    })
}
