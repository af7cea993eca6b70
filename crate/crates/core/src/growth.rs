//! Growth engines: variety expansion, quality ladders with creative
//! destruction, the dual-input science sector, and the unified
//! process/product innovation system driven by ideation cost.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::check::Check;
use crate::epistemic::marginal_ideation_cost;
use crate::error::{domain, finite, Checker, FieldError, ModelError, Result};
use crate::series::{CapabilityPath, Series};

fn check_share(field: &'static str, alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(domain(field, alpha, "must lie in (0, 1)"))
    }
}

/// `Y = A K^alpha L^(1-alpha)`.
pub fn cobb_douglas(a: f64, k: f64, l: f64, alpha: f64) -> Result<f64> {
    check_share("alpha", alpha)?;
    for (field, v) in [("a", a), ("k", k), ("l", l)] {
        if !(v >= 0.0) {
            return Err(domain(field, v, "must be >= 0"));
        }
    }
    Ok(a * k.powf(alpha) * l.powf(1.0 - alpha))
}

/// Variety-expansion output `L^(1-alpha) * integral_0^mass x_i^alpha di`.
///
/// The continuum of intermediates is discretized into `intermediates.len()`
/// equal cells spanning `mass`.
pub fn romer_variety_output(l_final: f64, intermediates: &[f64], mass: f64, alpha: f64) -> Result<f64> {
    check_share("alpha", alpha)?;
    if intermediates.is_empty() {
        return Err(ModelError::Input("no intermediate goods".into()));
    }
    if !(mass > 0.0) {
        return Err(domain("mass", mass, "must be > 0"));
    }
    if !(l_final >= 0.0) {
        return Err(domain("l_final", l_final, "must be >= 0"));
    }
    if let Some(&x) = intermediates.iter().find(|x| !(**x >= 0.0)) {
        return Err(domain("intermediates", x, "must be >= 0"));
    }
    let cell = mass / intermediates.len() as f64;
    let integral: f64 = intermediates.iter().map(|x| x.powf(alpha) * cell).sum();
    Ok(l_final.powf(1.0 - alpha) * integral)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RomerParams {
    pub alpha: f64,
    pub delta_r: f64,
    pub phi_r: f64,
    pub l_a: f64,
}

/// Euler step of `dA/dt = delta * A^phi * L_A`.
pub fn romer_ideas_step(a: f64, params: &RomerParams, dt: f64) -> Result<f64> {
    if !(a >= 0.0) {
        return Err(domain("a", a, "must be >= 0"));
    }
    if !(dt > 0.0) {
        return Err(domain("dt", dt, "must be > 0"));
    }
    finite("a", a + params.delta_r * a.powf(params.phi_r) * params.l_a * dt)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityLadderState {
    pub qualities: Vec<f64>,
    pub quantities: Vec<f64>,
}

impl QualityLadderState {
    /// `n` lines all at the bottom rung.
    pub fn uniform(n: usize) -> Self {
        Self {
            qualities: vec![1.0; n],
            quantities: vec![1.0; n],
        }
    }
}

/// Aggregate quality `integral_0^1 q_i di`, i.e. the mean over lines.
pub fn quality_index(state: &QualityLadderState) -> Result<f64> {
    if state.qualities.is_empty() {
        return Err(ModelError::Input("quality ladder has no lines".into()));
    }
    Ok(state.qualities.iter().sum::<f64>() / state.qualities.len() as f64)
}

/// Each line independently climbs one rung (`q <- lambda * q`) with
/// probability `min(1, mu * dt)`.
pub fn ladder_step<R: Rng + ?Sized>(
    state: &QualityLadderState,
    mu: f64,
    lambda_step: f64,
    dt: f64,
    rng: &mut R,
) -> Result<QualityLadderState> {
    if !(lambda_step > 1.0) {
        return Err(domain("lambda_step", lambda_step, "must be > 1"));
    }
    if !(mu >= 0.0) {
        return Err(domain("mu", mu, "must be >= 0"));
    }
    if !(dt > 0.0) {
        return Err(domain("dt", dt, "must be > 0"));
    }
    let p = (mu * dt).min(1.0);
    let qualities = state
        .qualities
        .iter()
        .map(|&q| {
            let up = if p >= 1.0 {
                true
            } else if p <= 0.0 {
                false
            } else {
                rng.random::<f64>() < p
            };
            if up {
                q * lambda_step
            } else {
                q
            }
        })
        .collect();
    Ok(QualityLadderState {
        qualities,
        quantities: state.quantities.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchumpeterParams {
    pub lambda_step: f64,
    pub psi: f64,
    pub r_rate: f64,
    pub pi_flow: f64,
    /// Arrival intensity; when absent it is solved from free entry.
    #[serde(default)]
    pub mu: Option<f64>,
}

impl Default for SchumpeterParams {
    fn default() -> Self {
        Self {
            lambda_step: 1.2,
            psi: 0.5,
            r_rate: 0.05,
            pi_flow: 1.0,
            mu: None,
        }
    }
}

impl SchumpeterParams {
    pub fn validate(&self) -> Vec<FieldError> {
        let mut c = Checker::default();
        c.require(
            self.lambda_step > 1.0,
            "lambda_step",
            format!("must be > 1, got {}", self.lambda_step),
        );
        c.positive("psi", self.psi);
        c.positive("r_rate", self.r_rate);
        c.positive("pi_flow", self.pi_flow);
        match self.mu {
            Some(mu) => c.non_negative("mu", mu),
            None => c.require(
                self.psi < self.pi_flow,
                "psi",
                format!("free entry needs psi < pi_flow ({}), got {}", self.pi_flow, self.psi),
            ),
        }
        c.finish()
    }

    /// Configured intensity, or the free-entry solution.
    pub fn intensity(&self) -> Result<f64> {
        match self.mu {
            Some(mu) => Ok(mu),
            None => free_entry_mu(self.pi_flow, self.psi, self.r_rate),
        }
    }
}

/// Steady-state incumbent value `pi / (r + mu)`.
pub fn incumbent_value(pi_flow: f64, r_rate: f64, mu: f64) -> Result<f64> {
    let denom = r_rate + mu;
    if !(denom > 0.0) {
        return Err(domain("r_rate + mu", denom, "must be > 0"));
    }
    Ok(pi_flow / denom)
}

/// Arrival intensity satisfying free entry `mu * V(mu) = psi`.
pub fn free_entry_mu(pi_flow: f64, psi: f64, r_rate: f64) -> Result<f64> {
    if !(r_rate > 0.0) {
        return Err(domain("r_rate", r_rate, "must be > 0"));
    }
    if !(psi >= 0.0) {
        return Err(domain("psi", psi, "must be >= 0"));
    }
    if !(psi < pi_flow) {
        return Err(ModelError::NoEquilibrium(format!(
            "entry cost {psi} is not below the flow profit {pi_flow}"
        )));
    }
    Ok(psi * r_rate / (pi_flow - psi))
}

/// `ln(lambda) * mu - delta_obs`.
pub fn schumpeter_growth(lambda_step: f64, mu: f64, delta_obs: f64) -> Result<f64> {
    if !(lambda_step > 1.0) {
        return Err(domain("lambda_step", lambda_step, "must be > 1"));
    }
    if !(mu >= 0.0) {
        return Err(domain("mu", mu, "must be >= 0"));
    }
    if !(delta_obs >= 0.0) {
        return Err(domain("delta_obs", delta_obs, "must be >= 0"));
    }
    Ok(lambda_step.ln() * mu - delta_obs)
}

/// Dual-input science output `beta1 * L_s^theta + beta2 * A^(1-theta)`.
pub fn science_production(l_s: f64, a_cap: f64, beta1: f64, beta2: f64, theta_sub: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&theta_sub) {
        return Err(domain("theta_sub", theta_sub, "must lie in [0, 1]"));
    }
    for (field, v) in [("l_s", l_s), ("a_cap", a_cap), ("beta1", beta1), ("beta2", beta2)] {
        if !(v >= 0.0) {
            return Err(domain(field, v, "must be >= 0"));
        }
    }
    Ok(beta1 * l_s.powf(theta_sub) + beta2 * a_cap.powf(1.0 - theta_sub))
}

/// `lambda1 * dA/dt + lambda2 * dQ/dt`.
pub fn composite_innovation(lambda1: f64, lambda2: f64, da_dt: f64, dq_dt: f64) -> Result<f64> {
    if !(lambda1 >= 0.0) {
        return Err(domain("lambda1", lambda1, "must be >= 0"));
    }
    if !(lambda2 >= 0.0) {
        return Err(domain("lambda2", lambda2, "must be >= 0"));
    }
    Ok(lambda1 * da_dt + lambda2 * dq_dt)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnifiedParams {
    pub phi_y: f64,
    pub gamma_y: f64,
    pub beta_y: f64,
    pub delta_a: f64,
    pub delta_q: f64,
    pub alpha_a: f64,
    pub alpha_q: f64,
    pub l_a: f64,
    pub l_q: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Default for UnifiedParams {
    fn default() -> Self {
        Self {
            phi_y: 0.3,
            gamma_y: 0.3,
            beta_y: 0.35,
            delta_a: 0.02,
            delta_q: 0.01,
            alpha_a: 0.1,
            alpha_q: 0.05,
            l_a: 1.0,
            l_q: 1.0,
            lambda1: 1.0,
            lambda2: 1.0,
        }
    }
}

impl UnifiedParams {
    pub fn validate(&self) -> Vec<FieldError> {
        let mut c = Checker::default();
        c.positive("phi_y", self.phi_y);
        c.positive("gamma_y", self.gamma_y);
        c.open_unit_interval("beta_y", self.beta_y);
        c.positive("delta_a", self.delta_a);
        c.positive("delta_q", self.delta_q);
        c.non_negative("alpha_a", self.alpha_a);
        c.non_negative("alpha_q", self.alpha_q);
        c.non_negative("l_a", self.l_a);
        c.non_negative("l_q", self.l_q);
        c.non_negative("lambda1", self.lambda1);
        c.non_negative("lambda2", self.lambda2);
        c.finish()
    }

    /// `Y = A^phi Q^gamma K^beta L^(1-beta)`.
    pub fn output(&self, s: &UnifiedState) -> f64 {
        s.a.powf(self.phi_y) * s.q.powf(self.gamma_y) * s.k.powf(self.beta_y) * s.l.powf(1.0 - self.beta_y)
    }

    /// Innovation rates `(dA/dt, dQ/dt)` at a state under ideation cost `c`.
    pub fn rates(&self, s: &UnifiedState, c: f64) -> (f64, f64) {
        (
            self.delta_a * self.l_a * (1.0 + self.alpha_a * s.a) / c,
            self.delta_q * self.l_q * (1.0 + self.alpha_q * s.q) / c,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnifiedState {
    pub a: f64,
    pub q: f64,
    pub k: f64,
    pub l: f64,
}

/// Euler step of the cost-driven process/product innovation system.
/// Returns the next state and the output it produces.
pub fn unified_step(state: &UnifiedState, params: &UnifiedParams, c_now: f64, dt: f64) -> Result<(UnifiedState, f64)> {
    if !(c_now > 0.0) {
        return Err(ModelError::Singular(format!(
            "ideation cost {c_now} is not positive; innovation rates diverge"
        )));
    }
    if !(dt > 0.0) {
        return Err(domain("dt", dt, "must be > 0"));
    }
    let (da, dq) = params.rates(state, c_now);
    let next = UnifiedState {
        a: finite("a", state.a + da * dt)?,
        q: finite("q", state.q + dq * dt)?,
        k: state.k,
        l: state.l,
    };
    let y = finite("y", params.output(&next))?;
    Ok((next, y))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostDriver {
    pub c0: f64,
    pub alpha_cost: f64,
    pub capability: CapabilityPath,
}

impl Default for CostDriver {
    fn default() -> Self {
        Self {
            c0: 1.0,
            alpha_cost: 0.5,
            capability: CapabilityPath::Linear {
                initial: 0.0,
                slope: 0.2,
            },
        }
    }
}

/// Parameter block for a growth scenario run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrowthScenario {
    pub unified: UnifiedParams,
    pub schumpeter: SchumpeterParams,
    pub cost: CostDriver,
    /// Obsolescence burden per step (constant or tabulated).
    pub delta_obs: Series,
    pub a0: f64,
    pub q0: f64,
    pub k: f64,
    pub l: f64,
    pub dt: f64,
    pub horizon: usize,
}

impl Default for GrowthScenario {
    fn default() -> Self {
        Self {
            unified: UnifiedParams::default(),
            schumpeter: SchumpeterParams::default(),
            cost: CostDriver::default(),
            delta_obs: Series::Constant(0.0),
            a0: 1.0,
            q0: 1.0,
            k: 1.0,
            l: 1.0,
            dt: 0.1,
            horizon: 500,
        }
    }
}

impl GrowthScenario {
    pub const FIELDS: &'static [(&'static str, &'static str)] = &[
        ("unified", "unified innovation system {phi_y, gamma_y, beta_y, delta_a, delta_q, alpha_a, alpha_q, l_a, l_q, lambda1, lambda2}"),
        ("schumpeter", "creative destruction {lambda_step > 1, psi, r_rate, pi_flow, mu (optional; free entry when absent)}"),
        ("cost", "ideation cost driver {c0, alpha_cost, capability}"),
        ("delta_obs", "obsolescence burden per step, number or array (>= 0)"),
        ("a0", "initial process-innovation stock A (> 0)"),
        ("q0", "initial product-quality stock Q (> 0)"),
        ("k", "capital (>= 0)"),
        ("l", "labour (>= 0)"),
        ("dt", "Euler step (> 0)"),
        ("horizon", "number of steps (>= 1)"),
    ];

    pub fn validate(&self) -> Vec<FieldError> {
        let mut c = Checker::default();
        c.nested("unified", self.unified.validate());
        c.nested("schumpeter", self.schumpeter.validate());
        c.positive("cost.c0", self.cost.c0);
        c.non_negative("cost.alpha_cost", self.cost.alpha_cost);
        for p in self.cost.capability.problems() {
            c.require(false, "cost.capability", p);
        }
        c.require(!self.delta_obs.is_empty_table(), "delta_obs", "table must not be empty");
        for v in self.delta_obs.values() {
            c.non_negative("delta_obs", v);
        }
        c.positive("a0", self.a0);
        c.positive("q0", self.q0);
        c.non_negative("k", self.k);
        c.non_negative("l", self.l);
        c.positive("dt", self.dt);
        c.require(self.horizon >= 1, "horizon", "must be >= 1");
        c.finish()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthRow {
    pub t: f64,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "Q")]
    pub q: f64,
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "Y")]
    pub y: f64,
    pub g: f64,
    pub mu: f64,
    #[serde(rename = "V")]
    pub v: f64,
}

pub fn simulate(scn: &GrowthScenario) -> Result<Vec<GrowthRow>> {
    let p = &scn.unified;
    let sch = &scn.schumpeter;
    let mu = sch.intensity()?;
    let v = incumbent_value(sch.pi_flow, sch.r_rate, mu)?;
    let mut state = UnifiedState {
        a: scn.a0,
        q: scn.q0,
        k: scn.k,
        l: scn.l,
    };
    let row = |step: usize, s: &UnifiedState, y: f64| -> Result<GrowthRow> {
        Ok(GrowthRow {
            t: step as f64 * scn.dt,
            a: s.a,
            q: s.q,
            k: s.k,
            l: s.l,
            y,
            g: schumpeter_growth(sch.lambda_step, mu, scn.delta_obs.at(step))?,
            mu,
            v,
        })
    };
    let mut rows = Vec::with_capacity(scn.horizon + 1);
    rows.push(row(0, &state, p.output(&state))?);
    for step in 0..scn.horizon {
        let t = step as f64 * scn.dt;
        let c = marginal_ideation_cost(scn.cost.c0, scn.cost.alpha_cost, scn.cost.capability.at(t))?;
        let (next, y) = unified_step(&state, p, c, scn.dt)?;
        state = next;
        rows.push(row(step + 1, &state, y)?);
    }
    Ok(rows)
}

pub fn trajectory_checks(rows: &[GrowthRow], scn: &GrowthScenario) -> Vec<Check> {
    let monotone = rows.windows(2).all(|w| w[1].a >= w[0].a && w[1].q >= w[0].q);
    let sch = &scn.schumpeter;
    let residual = rows.first().map(|r| (r.mu * r.v - sch.psi).abs()).unwrap_or(f64::NAN);
    let mut checks = vec![Check::new(
        "innovation_stocks_non_decreasing",
        monotone,
        format!("{} samples", rows.len()),
    )];
    if sch.mu.is_none() {
        checks.push(Check::new(
            "free_entry_residual",
            residual < 1e-10,
            format!("|mu V - psi| = {residual:e}"),
        ));
    }
    checks
}
