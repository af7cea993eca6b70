use thiserror::Error;

/// Errors raised by the model engines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("domain error: `{field}` = {value} ({reason})")]
    Domain {
        field: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("numeric overflow: `{field}` became non-finite")]
    NonFinite { field: &'static str },
    #[error("singularity: {0}")]
    Singular(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("no equilibrium: {0}")]
    NoEquilibrium(String),
    #[error("did not converge after {iterations} iterations (last residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("unbounded surplus: ideation cost {cost:e} is at or below guard {guard:e}")]
    UnboundedSurplus { cost: f64, guard: f64 },
    #[error("empty selection: no feasible candidates")]
    EmptySelection,
    #[error("search space too large: {cardinality} profiles exceeds limit {limit}")]
    SearchSpace { cardinality: u128, limit: u128 },
    #[error("divergence at step {step}: `{field}` became non-finite")]
    Divergence { step: usize, field: &'static str },
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

pub(crate) fn domain(field: &'static str, value: f64, reason: &'static str) -> ModelError {
    ModelError::Domain { field, value, reason }
}

pub(crate) fn finite(field: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(ModelError::NonFinite { field })
    }
}

/// One schema violation found while validating a parameter block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl std::fmt::Display for FieldError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "`{}`: {}", self.field, self.message)
    }
}

/// Collects field errors for a parameter block.
#[derive(Debug, Default)]
pub(crate) struct Checker {
    pub errors: Vec<FieldError>,
}

impl Checker {
    pub fn require(&mut self, ok: bool, field: &str, message: impl Into<String>) {
        if !ok {
            self.errors.push(FieldError::new(field, message));
        }
    }

    pub fn positive(&mut self, field: &str, v: f64) {
        self.require(
            v.is_finite() && v > 0.0,
            field,
            format!("must be finite and > 0, got {v}"),
        );
    }

    pub fn non_negative(&mut self, field: &str, v: f64) {
        self.require(
            v.is_finite() && v >= 0.0,
            field,
            format!("must be finite and >= 0, got {v}"),
        );
    }

    pub fn finite(&mut self, field: &str, v: f64) {
        self.require(v.is_finite(), field, format!("must be finite, got {v}"));
    }

    pub fn unit_interval(&mut self, field: &str, v: f64) {
        self.require((0.0..=1.0).contains(&v), field, format!("must lie in [0, 1], got {v}"));
    }

    pub fn open_unit_interval(&mut self, field: &str, v: f64) {
        self.require(v > 0.0 && v < 1.0, field, format!("must lie in (0, 1), got {v}"));
    }

    pub fn nested(&mut self, prefix: &str, errors: Vec<FieldError>) {
        self.errors.extend(
            errors
                .into_iter()
                .map(|e| FieldError::new(format!("{prefix}.{}", e.field), e.message)),
        );
    }

    pub fn finish(self) -> Vec<FieldError> {
        self.errors
    }
}
