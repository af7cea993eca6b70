//! Knowledge accumulation, uncertainty collapse and ideation-cost dynamics.
//!
//! Knowledge grows as `dP/dt = alpha * A^phi * L_P`, integrated with explicit
//! Euler. Uncertainty follows `theta0 / (1 + P)` below the threshold `p_bar`
//! and drops to the residual level at or above it. Discovery probability is
//! `1 / (1 + theta)`, and the marginal cost of ideation is `C0 / (1 + alpha_c * A)`.

use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson};
use serde::{Deserialize, Serialize};

use crate::check::Check;
use crate::error::{domain, finite, Checker, FieldError, ModelError, Result};
use crate::rng::stream_rng;
use crate::series::CapabilityPath;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpistemicParams {
    pub theta0: f64,
    pub p_bar: f64,
    pub eps_resid: f64,
    pub alpha_prod: f64,
    pub phi_elast: f64,
    pub c0: f64,
    pub alpha_cost: f64,
    pub theta_star: f64,
    pub lp: f64,
    pub capability: CapabilityPath,
}

impl Default for EpistemicParams {
    fn default() -> Self {
        Self {
            theta0: 5.0,
            p_bar: 100.0,
            eps_resid: 0.01,
            alpha_prod: 1.0,
            phi_elast: 1.0,
            c0: 1.0,
            alpha_cost: 1.0,
            theta_star: 0.1,
            lp: 1.0,
            capability: CapabilityPath::default(),
        }
    }
}

impl EpistemicParams {
    pub fn validate(&self) -> Vec<FieldError> {
        let mut c = Checker::default();
        c.positive("theta0", self.theta0);
        c.positive("p_bar", self.p_bar);
        c.non_negative("eps_resid", self.eps_resid);
        c.require(
            self.eps_resid < self.theta0,
            "eps_resid",
            format!("must be < theta0 ({}), got {}", self.theta0, self.eps_resid),
        );
        // Without this the collapse at p_bar would raise theta and break the
        // monotonicity of pi along growing knowledge.
        let pre_jump = self.theta0 / (1.0 + self.p_bar);
        c.require(
            self.eps_resid <= pre_jump,
            "eps_resid",
            format!("must be <= theta0 / (1 + p_bar) = {pre_jump}, got {}", self.eps_resid),
        );
        c.non_negative("alpha_prod", self.alpha_prod);
        c.non_negative("phi_elast", self.phi_elast);
        c.positive("c0", self.c0);
        c.non_negative("alpha_cost", self.alpha_cost);
        c.positive("theta_star", self.theta_star);
        c.non_negative("lp", self.lp);
        for p in self.capability.problems() {
            c.require(false, "capability", p);
        }
        c.finish()
    }

    /// Uncertainty implied by a knowledge stock; the threshold is inclusive.
    pub fn uncertainty(&self, p: f64) -> f64 {
        if p >= self.p_bar {
            self.eps_resid
        } else {
            self.theta0 / (1.0 + p)
        }
    }

    /// Full state at time `t` with knowledge stock `p`.
    pub fn state_at(&self, t: f64, p: f64) -> Result<EpistemicState> {
        let a_cap = finite("a_cap", self.capability.at(t))?;
        let c = marginal_ideation_cost(self.c0, self.alpha_cost, a_cap)?;
        let theta = finite("theta", self.uncertainty(p))?;
        let pi = discovery_probability(theta)?;
        Ok(EpistemicState {
            t,
            p,
            theta,
            c,
            a_cap,
            pi,
            inverted: c < self.theta_star,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpistemicState {
    pub t: f64,
    pub p: f64,
    pub theta: f64,
    pub c: f64,
    pub a_cap: f64,
    pub pi: f64,
    pub inverted: bool,
}

/// One explicit Euler step of the knowledge ODE.
pub fn step_knowledge(state: &EpistemicState, params: &EpistemicParams, dt: f64) -> Result<EpistemicState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(domain("dt", dt, "must be finite and > 0"));
    }
    for (field, v) in [("t", state.t), ("p", state.p), ("a_cap", state.a_cap)] {
        finite(field, v)?;
    }
    let rate = finite(
        "dP/dt",
        params.alpha_prod * state.a_cap.powf(params.phi_elast) * params.lp,
    )?;
    let p = finite("p", state.p + rate * dt)?;
    params.state_at(state.t + dt, p)
}

/// `C0 / (1 + alpha * A)`.
pub fn marginal_ideation_cost(c0: f64, alpha_cost: f64, a_cap: f64) -> Result<f64> {
    if !(c0 > 0.0) {
        return Err(domain("c0", c0, "must be > 0"));
    }
    if !(alpha_cost >= 0.0) {
        return Err(domain("alpha_cost", alpha_cost, "must be >= 0"));
    }
    if !(a_cap >= 0.0) {
        return Err(domain("a_cap", a_cap, "must be >= 0"));
    }
    Ok(c0 / (1.0 + alpha_cost * a_cap))
}

/// `1 / (1 + theta)`.
pub fn discovery_probability(theta: f64) -> Result<f64> {
    if !(theta >= 0.0) {
        return Err(domain("theta", theta, "uncertainty must be >= 0"));
    }
    Ok(1.0 / (1.0 + theta))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub id: u64,
    pub complexity: f64,
    pub open: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemPool {
    pub problems: Vec<Problem>,
    /// Problem emergence rate eta.
    pub eta_rate: f64,
    pub lambda_align: f64,
    /// Irreducible-uncertainty floor added to every complexity.
    pub eps_floor: f64,
    /// Mean complexity of newly arriving problems (exponentially distributed).
    pub arrival_complexity_mean: f64,
    pub next_id: u64,
}

impl ProblemPool {
    pub fn new(complexities: &[f64], eta_rate: f64, lambda_align: f64, eps_floor: f64) -> Self {
        let problems = complexities
            .iter()
            .enumerate()
            .map(|(i, &complexity)| Problem {
                id: i as u64,
                complexity,
                open: true,
            })
            .collect();
        Self {
            problems,
            eta_rate,
            lambda_align,
            eps_floor,
            arrival_complexity_mean: 1.0,
            next_id: complexities.len() as u64,
        }
    }

    pub fn open_count(&self) -> usize {
        self.problems.iter().filter(|p| p.open).count()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps_floor > 0.0) {
            return Err(domain("eps_floor", self.eps_floor, "must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.lambda_align) {
            return Err(domain("lambda_align", self.lambda_align, "must lie in [0, 1]"));
        }
        if !(self.eta_rate >= 0.0) {
            return Err(domain("eta_rate", self.eta_rate, "must be >= 0"));
        }
        if let Some(p) = self.problems.iter().find(|p| !(p.complexity >= 0.0)) {
            return Err(domain("complexity", p.complexity, "must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResearchOutput {
    /// Expected output rate R.
    pub r: f64,
    /// Per-problem solve probability, aligned with `pool.problems`; closed problems get 0.
    pub solve_probs: Vec<f64>,
    /// Number of open problems whose raw ratio exceeded 1 and was clamped.
    pub clamped: usize,
}

/// `R = lambda * sum(min(1, A / (Theta_i + eps)))` over open problems.
pub fn research_output(pool: &ProblemPool, a_cap: f64) -> Result<ResearchOutput> {
    pool.validate()?;
    if !(a_cap >= 0.0) {
        return Err(domain("a_cap", a_cap, "must be >= 0"));
    }
    let mut clamped = 0;
    let solve_probs: Vec<f64> = pool
        .problems
        .iter()
        .map(|p| {
            if !p.open {
                return 0.0;
            }
            let raw = a_cap / (p.complexity + pool.eps_floor);
            if raw > 1.0 {
                clamped += 1;
                1.0
            } else {
                raw
            }
        })
        .collect();
    let r = pool.lambda_align * solve_probs.iter().sum::<f64>();
    Ok(ResearchOutput {
        r,
        solve_probs,
        clamped,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolStep {
    pub pool: ProblemPool,
    pub surplus: bool,
    pub arrivals: u64,
    pub resolved: usize,
}

/// Stochastic pool update: each open problem resolves with probability
/// `min(1, lambda * pi_i * dt)`, then `Poisson(eta * dt)` new problems arrive.
/// Resolved problems are dropped from the pool.
pub fn step_problem_pool<R: Rng + ?Sized>(
    pool: &ProblemPool,
    output: &ResearchOutput,
    dt: f64,
    rng: &mut R,
) -> Result<PoolStep> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(domain("dt", dt, "must be finite and > 0"));
    }
    if output.solve_probs.len() != pool.problems.len() {
        return Err(ModelError::Input(format!(
            "research output has {} probabilities for {} problems",
            output.solve_probs.len(),
            pool.problems.len()
        )));
    }
    let mut next = pool.clone();
    let mut resolved = 0;
    for (problem, &pi) in next.problems.iter_mut().zip(&output.solve_probs) {
        if !problem.open {
            continue;
        }
        let p = (pool.lambda_align * pi * dt).min(1.0);
        if p > 0.0 && rng.random::<f64>() < p {
            problem.open = false;
            resolved += 1;
        }
    }
    next.problems.retain(|p| p.open);

    let mean = pool.eta_rate * dt;
    let arrivals = if mean > 0.0 {
        let poisson = Poisson::new(mean).map_err(|_| domain("eta_rate", pool.eta_rate, "invalid arrival mean"))?;
        poisson.sample(rng) as u64
    } else {
        0
    };
    let exp = if pool.arrival_complexity_mean > 0.0 {
        Some(
            Exp::new(1.0 / pool.arrival_complexity_mean)
                .map_err(|_| domain("arrival_complexity_mean", pool.arrival_complexity_mean, "must be > 0"))?,
        )
    } else {
        None
    };
    for _ in 0..arrivals {
        let complexity = exp.map_or(0.0, |e| e.sample(rng));
        next.problems.push(Problem {
            id: next.next_id,
            complexity,
            open: true,
        });
        next.next_id += 1;
    }
    Ok(PoolStep {
        pool: next,
        surplus: output.r > pool.eta_rate,
        arrivals,
        resolved,
    })
}

/// `H = u + lam1 * (Phi - delta * K) + lam2 * Gamma`.
pub fn hamiltonian_value(u: f64, lam1: f64, lam2: f64, phi_val: f64, delta: f64, k: f64, gamma_val: f64) -> f64 {
    u + lam1 * (phi_val - delta * k) + lam2 * gamma_val
}

/// First sampled time at which the cost falls strictly below `theta_star`.
pub fn inversion_crossing(cost_series: &[(f64, f64)], theta_star: f64) -> Result<Option<f64>> {
    if cost_series.is_empty() {
        return Err(ModelError::Input("cost series is empty".into()));
    }
    if let Some(w) = cost_series.windows(2).find(|w| !(w[1].0 > w[0].0)) {
        return Err(ModelError::Input(format!(
            "times must be strictly increasing (found {} then {})",
            w[0].0, w[1].0
        )));
    }
    Ok(cost_series.iter().find(|(_, c)| *c < theta_star).map(|(t, _)| *t))
}

/// Parameter block for an epistemic scenario run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpistemicScenario {
    pub theta0: f64,
    pub p_bar: f64,
    pub eps_resid: f64,
    pub alpha_prod: f64,
    pub phi_elast: f64,
    pub c0: f64,
    pub alpha_cost: f64,
    pub theta_star: f64,
    pub lp: f64,
    pub capability: CapabilityPath,
    pub p0: f64,
    pub dt: f64,
    pub horizon: usize,
    pub initial_problems: usize,
    pub complexity_mean: f64,
    pub eta_rate: f64,
    pub lambda_align: f64,
    pub eps_floor: f64,
}

impl Default for EpistemicScenario {
    fn default() -> Self {
        let p = EpistemicParams::default();
        Self {
            theta0: p.theta0,
            p_bar: p.p_bar,
            eps_resid: p.eps_resid,
            alpha_prod: p.alpha_prod,
            phi_elast: p.phi_elast,
            c0: p.c0,
            alpha_cost: p.alpha_cost,
            theta_star: p.theta_star,
            lp: p.lp,
            capability: CapabilityPath::Linear {
                initial: 1.0,
                slope: 0.5,
            },
            p0: 0.0,
            dt: 0.1,
            horizon: 200,
            initial_problems: 20,
            complexity_mean: 5.0,
            eta_rate: 2.0,
            lambda_align: 0.8,
            eps_floor: 1e-6,
        }
    }
}

impl EpistemicScenario {
    pub const FIELDS: &'static [(&'static str, &'static str)] = &[
        ("theta0", "baseline uncertainty (> 0)"),
        ("p_bar", "knowledge threshold for the mode transition (> 0)"),
        (
            "eps_resid",
            "residual uncertainty at or above p_bar (>= 0, <= theta0/(1+p_bar))",
        ),
        ("alpha_prod", "ideation productivity in dP/dt (>= 0)"),
        ("phi_elast", "AI elasticity in dP/dt (>= 0)"),
        ("c0", "baseline ideation cost (> 0)"),
        ("alpha_cost", "cost sensitivity to AI capability (>= 0)"),
        ("theta_star", "inversion threshold on ideation cost (> 0)"),
        ("lp", "research labour (>= 0)"),
        (
            "capability",
            "AI capability path {kind: constant|linear|exponential, ...}",
        ),
        ("p0", "initial knowledge stock (>= 0)"),
        ("dt", "Euler step (> 0)"),
        ("horizon", "number of steps (>= 1)"),
        ("initial_problems", "open problems at t = 0"),
        ("complexity_mean", "mean complexity of problems, exponential (>= 0)"),
        ("eta_rate", "problem emergence rate (>= 0)"),
        ("lambda_align", "alignment coefficient in [0, 1]"),
        (
            "eps_floor",
            "irreducible-uncertainty floor in solve probabilities (> 0)",
        ),
    ];

    pub fn params(&self) -> EpistemicParams {
        EpistemicParams {
            theta0: self.theta0,
            p_bar: self.p_bar,
            eps_resid: self.eps_resid,
            alpha_prod: self.alpha_prod,
            phi_elast: self.phi_elast,
            c0: self.c0,
            alpha_cost: self.alpha_cost,
            theta_star: self.theta_star,
            lp: self.lp,
            capability: self.capability.clone(),
        }
    }

    pub fn validate(&self) -> Vec<FieldError> {
        let mut c = Checker {
            errors: self.params().validate(),
        };
        c.non_negative("p0", self.p0);
        c.positive("dt", self.dt);
        c.require(self.horizon >= 1, "horizon", "must be >= 1");
        c.non_negative("complexity_mean", self.complexity_mean);
        c.non_negative("eta_rate", self.eta_rate);
        c.unit_interval("lambda_align", self.lambda_align);
        c.positive("eps_floor", self.eps_floor);
        c.finish()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpistemicRow {
    pub t: f64,
    #[serde(rename = "P")]
    pub p: f64,
    pub theta: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub pi: f64,
    pub inverted: bool,
    #[serde(rename = "R")]
    pub r: f64,
    pub pool_size: usize,
    pub surplus: bool,
}

/// Runs the coupled knowledge / problem-pool simulation.
///
/// Stream 0 draws the initial problem complexities, stream 1 drives the pool.
pub fn simulate(scn: &EpistemicScenario, seed: u64) -> Result<Vec<EpistemicRow>> {
    let params = scn.params();
    let mut init_rng = stream_rng(seed, 0);
    let complexities: Vec<f64> = if scn.complexity_mean > 0.0 {
        let exp = Exp::new(1.0 / scn.complexity_mean)
            .map_err(|_| domain("complexity_mean", scn.complexity_mean, "must be > 0"))?;
        (0..scn.initial_problems).map(|_| exp.sample(&mut init_rng)).collect()
    } else {
        vec![0.0; scn.initial_problems]
    };
    let mut pool = ProblemPool::new(&complexities, scn.eta_rate, scn.lambda_align, scn.eps_floor);
    pool.arrival_complexity_mean = scn.complexity_mean;
    let mut rng = stream_rng(seed, 1);

    let mut state = params.state_at(0.0, scn.p0)?;
    let mut output = research_output(&pool, state.a_cap)?;
    let mut rows = Vec::with_capacity(scn.horizon + 1);
    let row = |s: &EpistemicState, o: &ResearchOutput, pool: &ProblemPool| EpistemicRow {
        t: s.t,
        p: s.p,
        theta: s.theta,
        c: s.c,
        pi: s.pi,
        inverted: s.inverted,
        r: o.r,
        pool_size: pool.open_count(),
        surplus: o.r > pool.eta_rate,
    };
    rows.push(row(&state, &output, &pool));
    for _ in 0..scn.horizon {
        let step = step_problem_pool(&pool, &output, scn.dt, &mut rng)?;
        pool = step.pool;
        state = step_knowledge(&state, &params, scn.dt)?;
        output = research_output(&pool, state.a_cap)?;
        rows.push(row(&state, &output, &pool));
    }
    Ok(rows)
}

/// Mode-transition semantics and discovery-probability monotonicity along a trajectory.
pub fn trajectory_checks(rows: &[EpistemicRow], params: &EpistemicParams) -> Vec<Check> {
    let threshold_ok = rows
        .iter()
        .all(|r| (r.theta == params.eps_resid) == (r.p >= params.p_bar));
    let first_cross = rows.iter().find(|r| r.p >= params.p_bar).map(|r| r.t);
    let pi_ok = rows.windows(2).all(|w| w[1].pi >= w[0].pi) && rows.iter().all(|r| r.pi <= 1.0);
    vec![
        Check::new(
            "threshold_semantics",
            threshold_ok,
            match first_cross {
                Some(t) => format!("theta = eps_resid exactly from t = {t}"),
                None => "knowledge stayed below p_bar".to_string(),
            },
        ),
        Check::new("pi_non_decreasing", pi_ok, format!("{} samples", rows.len())),
    ]
}
