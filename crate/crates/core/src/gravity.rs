//! Need gravity, need-to-sector flows and the flywheel comparison.
//!
//! A need pulls on the innovation system with force `N^alpha / D^beta`,
//! sector flows follow an inverse-square law `G N_i P_j / D_ij^2`, and the
//! social potential energy `U = sum N_i^2` measures unmet pressure. The
//! flywheel comparison runs the same Cobb-Douglas output through a
//! needs-blind allocation and a flow-aligned allocation.

use serde::{Deserialize, Serialize};

use crate::check::Check;
use crate::error::{domain, Checker, FieldError, ModelError, Result};
use crate::growth::cobb_douglas;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeedsState {
    /// Need intensities, length n.
    pub n_vec: Vec<f64>,
    /// Need-to-sector distances, n rows of m entries.
    pub d_mat: Vec<Vec<f64>>,
    /// Sector potentials, length m.
    pub p_vec: Vec<f64>,
    /// Responsiveness coefficient G.
    pub g_resp: f64,
    pub alpha_g: f64,
    pub beta_g: f64,
}

impl NeedsState {
    pub fn validate(&self) -> Result<()> {
        let m = self.p_vec.len();
        if self.d_mat.len() != self.n_vec.len() {
            return Err(ModelError::Input(format!(
                "distance matrix has {} rows for {} needs",
                self.d_mat.len(),
                self.n_vec.len()
            )));
        }
        if let Some((i, row)) = self.d_mat.iter().enumerate().find(|(_, r)| r.len() != m) {
            return Err(ModelError::Input(format!(
                "distance row {i} has {} entries for {m} sectors",
                row.len()
            )));
        }
        if let Some(&d) = self.d_mat.iter().flatten().find(|d| !(**d > 0.0)) {
            return Err(ModelError::Singular(format!("distance {d} is not positive")));
        }
        if let Some(&n) = self.n_vec.iter().find(|n| !(**n >= 0.0)) {
            return Err(domain("n_vec", n, "need intensities must be >= 0"));
        }
        if let Some(&p) = self.p_vec.iter().find(|p| !(**p >= 0.0)) {
            return Err(domain("p_vec", p, "sector potentials must be >= 0"));
        }
        if !(self.g_resp >= 0.0) {
            return Err(domain("g_resp", self.g_resp, "must be >= 0"));
        }
        if !(self.alpha_g >= 0.0) {
            return Err(domain("alpha_g", self.alpha_g, "must be >= 0"));
        }
        if !(self.beta_g >= 0.0) {
            return Err(domain("beta_g", self.beta_g, "must be >= 0"));
        }
        Ok(())
    }

    /// Per-need distance: the nearest sector.
    pub fn need_distance(&self, i: usize) -> f64 {
        self.d_mat[i].iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// `N^alpha / D^beta`.
pub fn need_gravity(n_i: f64, d_i: f64, alpha_g: f64, beta_g: f64) -> Result<f64> {
    if !(d_i > 0.0) {
        return Err(ModelError::Singular(format!("need distance {d_i} is not positive")));
    }
    Ok(n_i.powf(alpha_g) / d_i.powf(beta_g))
}

/// Total field `sum_i N_i^alpha / D_i^beta` with `D_i = min_j D_ij`.
pub fn gravity_field(state: &NeedsState) -> Result<f64> {
    state.validate()?;
    (0..state.n_vec.len())
        .map(|i| need_gravity(state.n_vec[i], state.need_distance(i), state.alpha_g, state.beta_g))
        .sum()
}

/// `F_ij = G N_i P_j / D_ij^2`.
pub fn need_sector_flow(state: &NeedsState) -> Result<Vec<Vec<f64>>> {
    state.validate()?;
    Ok(state
        .n_vec
        .iter()
        .zip(&state.d_mat)
        .map(|(&n, row)| {
            row.iter()
                .zip(&state.p_vec)
                .map(|(&d, &p)| state.g_resp * n * p / (d * d))
                .collect()
        })
        .collect())
}

/// `U = sum N_i^2`.
pub fn potential_energy(n_vec: &[f64]) -> f64 {
    n_vec.iter().map(|n| n * n).sum()
}

/// Weighted share of satisfied needs.
pub fn coverage_operator(satisfied: &[bool], weights: &[f64]) -> Result<f64> {
    if satisfied.len() != weights.len() {
        return Err(ModelError::Input(format!(
            "mask has {} entries for {} weights",
            satisfied.len(),
            weights.len()
        )));
    }
    if let Some(&w) = weights.iter().find(|w| !(**w >= 0.0)) {
        return Err(domain("weights", w, "must be >= 0"));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(domain("weights", total, "must not all be zero"));
    }
    let hit: f64 = satisfied.iter().zip(weights).filter(|(s, _)| **s).map(|(_, w)| w).sum();
    Ok(hit / total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllocationMode {
    Blind,
    Aligned,
}

impl AllocationMode {
    pub fn as_str(self) -> &'static str {
        match self {
            AllocationMode::Blind => "blind",
            AllocationMode::Aligned => "aligned",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationPlan {
    pub shares: Vec<f64>,
    pub mode: AllocationMode,
}

impl AllocationPlan {
    /// Normalizes non-negative weights; falls back to equal shares when they sum to zero.
    pub fn from_weights(weights: &[f64], mode: AllocationMode) -> Result<Self> {
        if weights.is_empty() {
            return Err(ModelError::Input("allocation over zero needs".into()));
        }
        if let Some(&w) = weights.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
            return Err(domain("weights", w, "must be finite and >= 0"));
        }
        let total: f64 = weights.iter().sum();
        let shares = if total > 0.0 {
            weights.iter().map(|w| w / total).collect()
        } else {
            vec![1.0 / weights.len() as f64; weights.len()]
        };
        Ok(Self { shares, mode })
    }

    pub fn is_normalized(&self) -> bool {
        (self.shares.iter().sum::<f64>() - 1.0).abs() <= 1e-9 && self.shares.iter().all(|s| *s >= 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Production {
    pub a: f64,
    pub k: f64,
    pub l: f64,
    pub alpha: f64,
    /// Per-step TFP growth; output keeps rising whatever the needs do.
    #[serde(default)]
    pub tfp_growth: f64,
}

impl Default for Production {
    fn default() -> Self {
        Self {
            a: 1.0,
            k: 4.0,
            l: 1.0,
            alpha: 0.5,
            tfp_growth: 0.02,
        }
    }
}

impl Production {
    pub fn output(&self, step: usize) -> Result<f64> {
        cobb_douglas(
            self.a * (1.0 + self.tfp_growth).powi(step as i32),
            self.k,
            self.l,
            self.alpha,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlywheelRow {
    pub t: usize,
    pub mode: AllocationMode,
    #[serde(rename = "U")]
    pub u: f64,
    pub coverage: f64,
    #[serde(rename = "Y")]
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlywheelResult {
    pub u_series_blind: Vec<f64>,
    pub u_series_aligned: Vec<f64>,
    pub rows: Vec<FlywheelRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlywheelOptions<'a> {
    /// Blind allocation shares; equal shares when absent.
    pub blind_shares: Option<&'a [f64]>,
    /// Importance weights for coverage; initial intensities when absent.
    pub importance: Option<&'a [f64]>,
    /// A need counts as satisfied once its intensity is at or below this level.
    pub satisfied_below: f64,
}

impl Default for FlywheelOptions<'_> {
    fn default() -> Self {
        Self {
            blind_shares: None,
            importance: None,
            satisfied_below: 0.0,
        }
    }
}

/// Runs needs-blind and flow-aligned allocation side by side.
///
/// Each step produces `Y_t`, splits it across needs, and satisfies need `i`
/// by `N_i <- max(0, N_i - kappa * share_i * Y_t)`. Blind shares stay fixed;
/// aligned shares are recomputed from the row sums of the current flow matrix.
pub fn flywheel_compare(
    state0: &NeedsState,
    production: &Production,
    horizon: usize,
    kappa: f64,
    opts: &FlywheelOptions<'_>,
) -> Result<FlywheelResult> {
    state0.validate()?;
    if horizon == 0 {
        return Err(ModelError::Input("horizon must be >= 1".into()));
    }
    if !(kappa >= 0.0) {
        return Err(domain("kappa", kappa, "must be >= 0"));
    }
    let n = state0.n_vec.len();
    let blind = match opts.blind_shares {
        Some(s) if s.len() != n => return Err(ModelError::Input(format!("{} blind shares for {n} needs", s.len()))),
        Some(s) => AllocationPlan::from_weights(s, AllocationMode::Blind)?,
        None => AllocationPlan::from_weights(&vec![1.0; n], AllocationMode::Blind)?,
    };
    let weights: Vec<f64> = match opts.importance {
        Some(w) => w.to_vec(),
        None if state0.n_vec.iter().any(|v| *v > 0.0) => state0.n_vec.clone(),
        None => vec![1.0; n],
    };
    let coverage = |needs: &[f64]| -> Result<f64> {
        let mask: Vec<bool> = needs.iter().map(|v| *v <= opts.satisfied_below).collect();
        coverage_operator(&mask, &weights)
    };

    let mut blind_state = state0.clone();
    let mut aligned_state = state0.clone();
    let mut rows = Vec::with_capacity(2 * (horizon + 1));
    let mut u_blind = Vec::with_capacity(horizon + 1);
    let mut u_aligned = Vec::with_capacity(horizon + 1);
    for t in 0..=horizon {
        let y = production.output(t)?;
        for (mode, st, series) in [
            (AllocationMode::Blind, &blind_state, &mut u_blind),
            (AllocationMode::Aligned, &aligned_state, &mut u_aligned),
        ] {
            let u = potential_energy(&st.n_vec);
            series.push(u);
            rows.push(FlywheelRow {
                t,
                mode,
                u,
                coverage: coverage(&st.n_vec)?,
                y,
            });
        }
        if t == horizon {
            break;
        }
        let flows = need_sector_flow(&aligned_state)?;
        let pull: Vec<f64> = flows.iter().map(|row| row.iter().sum()).collect();
        let aligned = AllocationPlan::from_weights(&pull, AllocationMode::Aligned)?;
        for (st, plan) in [(&mut blind_state, &blind), (&mut aligned_state, &aligned)] {
            for (need, share) in st.n_vec.iter_mut().zip(&plan.shares) {
                *need = (*need - kappa * share * y).max(0.0);
            }
        }
    }
    Ok(FlywheelResult {
        u_series_blind: u_blind,
        u_series_aligned: u_aligned,
        rows,
    })
}

/// Parameter block for a gravity / flywheel scenario run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GravityScenario {
    pub needs: Vec<f64>,
    pub distances: Vec<Vec<f64>>,
    pub potentials: Vec<f64>,
    pub responsiveness: f64,
    pub alpha_g: f64,
    pub beta_g: f64,
    pub production: Production,
    pub horizon: usize,
    pub kappa: f64,
    pub blind_shares: Option<Vec<f64>>,
    pub importance: Option<Vec<f64>>,
    pub satisfied_below: f64,
    pub dump_flows: bool,
}

impl Default for GravityScenario {
    fn default() -> Self {
        Self {
            needs: vec![9.0, 6.0, 4.0, 2.0, 1.0],
            distances: vec![
                vec![1.0, 2.0, 3.0],
                vec![2.0, 1.0, 2.0],
                vec![1.5, 1.5, 1.5],
                vec![3.0, 1.0, 2.0],
                vec![2.0, 3.0, 1.0],
            ],
            potentials: vec![1.0, 0.8, 0.6],
            responsiveness: 1.0,
            alpha_g: 1.0,
            beta_g: 2.0,
            production: Production::default(),
            horizon: 30,
            kappa: 0.1,
            blind_shares: None,
            importance: None,
            satisfied_below: 1.0,
            dump_flows: false,
        }
    }
}

impl GravityScenario {
    pub const FIELDS: &'static [(&'static str, &'static str)] = &[
        ("needs", "initial need intensities N_i (>= 0), length n"),
        ("distances", "need-to-sector distances D_ij (> 0), n x m"),
        ("potentials", "sector potentials P_j (>= 0), length m"),
        ("responsiveness", "responsiveness coefficient G (>= 0)"),
        ("alpha_g", "need-intensity elasticity (>= 0)"),
        ("beta_g", "distance elasticity (>= 0)"),
        (
            "production",
            "Cobb-Douglas output {a, k, l, alpha in (0,1), tfp_growth}",
        ),
        ("horizon", "number of allocation steps (>= 1)"),
        ("kappa", "satisfaction efficiency per unit of output (>= 0)"),
        (
            "blind_shares",
            "fixed needs-blind shares (optional; equal shares when absent)",
        ),
        (
            "importance",
            "coverage weights (optional; initial intensities when absent)",
        ),
        (
            "satisfied_below",
            "intensity at or below which a need counts as satisfied (>= 0)",
        ),
        ("dump_flows", "also write the initial flow matrix as JSON"),
    ];

    pub fn state(&self) -> NeedsState {
        NeedsState {
            n_vec: self.needs.clone(),
            d_mat: self.distances.clone(),
            p_vec: self.potentials.clone(),
            g_resp: self.responsiveness,
            alpha_g: self.alpha_g,
            beta_g: self.beta_g,
        }
    }

    pub fn validate(&self) -> Vec<FieldError> {
        let mut c = Checker::default();
        let n = self.needs.len();
        let m = self.potentials.len();
        c.require(n >= 1, "needs", "must list at least one need");
        c.require(m >= 1, "potentials", "must list at least one sector");
        for v in &self.needs {
            c.non_negative("needs", *v);
        }
        for v in &self.potentials {
            c.non_negative("potentials", *v);
        }
        c.require(
            self.distances.len() == n && self.distances.iter().all(|r| r.len() == m),
            "distances",
            format!("must be a {n} x {m} matrix"),
        );
        c.require(
            self.distances.iter().flatten().all(|d| *d > 0.0 && d.is_finite()),
            "distances",
            "every entry must be finite and > 0",
        );
        c.non_negative("responsiveness", self.responsiveness);
        c.non_negative("alpha_g", self.alpha_g);
        c.non_negative("beta_g", self.beta_g);
        c.non_negative("production.a", self.production.a);
        c.non_negative("production.k", self.production.k);
        c.non_negative("production.l", self.production.l);
        c.open_unit_interval("production.alpha", self.production.alpha);
        c.require(
            self.production.tfp_growth > -1.0 && self.production.tfp_growth.is_finite(),
            "production.tfp_growth",
            "must be finite and > -1",
        );
        c.require(self.horizon >= 1, "horizon", "must be >= 1");
        c.non_negative("kappa", self.kappa);
        if let Some(s) = &self.blind_shares {
            c.require(s.len() == n, "blind_shares", format!("must have {n} entries"));
            c.require(s.iter().all(|v| *v >= 0.0), "blind_shares", "entries must be >= 0");
        }
        if let Some(w) = &self.importance {
            c.require(w.len() == n, "importance", format!("must have {n} entries"));
            c.require(w.iter().all(|v| *v >= 0.0), "importance", "entries must be >= 0");
            c.require(w.iter().sum::<f64>() > 0.0, "importance", "must not all be zero");
        }
        c.non_negative("satisfied_below", self.satisfied_below);
        c.finish()
    }

    pub fn run(&self) -> Result<FlywheelResult> {
        let opts = FlywheelOptions {
            blind_shares: self.blind_shares.as_deref(),
            importance: self.importance.as_deref(),
            satisfied_below: self.satisfied_below,
        };
        flywheel_compare(&self.state(), &self.production, self.horizon, self.kappa, &opts)
    }
}

/// Flow matrix and field total at the initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowDump {
    pub field_total: f64,
    pub flows: Vec<Vec<f64>>,
}

pub fn flow_dump(state: &NeedsState) -> Result<FlowDump> {
    Ok(FlowDump {
        field_total: gravity_field(state)?,
        flows: need_sector_flow(state)?,
    })
}

pub fn flywheel_checks(res: &FlywheelResult) -> Vec<Check> {
    let dominated = res
        .u_series_aligned
        .iter()
        .zip(&res.u_series_blind)
        .all(|(a, b)| a <= b);
    let (last_a, last_b) = (
        *res.u_series_aligned.last().unwrap_or(&f64::NAN),
        *res.u_series_blind.last().unwrap_or(&f64::NAN),
    );
    let non_increasing = [&res.u_series_aligned, &res.u_series_blind]
        .iter()
        .all(|s| s.windows(2).all(|w| w[1] <= w[0]));
    vec![
        Check::new(
            "aligned_dominance",
            dominated,
            "U_aligned(t) <= U_blind(t) at every step",
        ),
        Check::new(
            "aligned_strict_at_horizon",
            last_a < last_b,
            format!("U_aligned(T) = {last_a}, U_blind(T) = {last_b}"),
        ),
        Check::new("energy_non_increasing", non_increasing, "both modes"),
    ]
}
